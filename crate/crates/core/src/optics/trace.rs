use std::collections::BTreeMap;

use ndarray::Array2;

use super::CameraConfig;
use crate::error::{ensure, Error, Result};

/// Sensor image stored as sorted `(row, col, value)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseImage {
    pub height: usize,
    pub width: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseImage {
    pub fn empty(height: usize, width: usize) -> Self {
        SparseImage { height, width, entries: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.height, self.width));
        for &(r, c, v) in &self.entries {
            out[[r, c]] += v;
        }
        out
    }
}

/// Ray counts of one point's footprint, indexed relative to the top-left
/// sensor pixel of the unit cell holding the point.
#[derive(Debug, Clone)]
pub(crate) struct LocalFootprint {
    pub counts: BTreeMap<(i64, i64), u32>,
    pub rays: u32,
}

/// Traces the stratified aperture grid for a point at `phase` (texture pixels,
/// measured from the corner of its unit cell) and bins rays on the sensor.
///
/// All positions are expressed relative to the point's own cell. The lattice
/// magnification makes this exact: moving the point by one cell moves every
/// ray's microlens by one lattice step and its sensor hit by one unit cell.
pub(crate) fn trace_local(cfg: &CameraConfig, phase: (f64, f64), depth: f64) -> LocalFootprint {
    let (pm_r, pm_c) = cfg.mla_cell_pitch();
    let (per_r, per_c) = cfg.texture_phase_period();
    let z = cfg.mla_distance;
    let b = cfg.sensor_distance;
    let f_mu = cfg.microlens_focal_length;
    let v = cfg.image_distance(depth);
    let pp = cfg.pixel_pitch;
    let radius = cfg.aperture_diameter / 2.0;
    let n = cfg.aperture_samples;
    let step = cfg.aperture_diameter / n as f64;
    let centers = cfg.microlens_centers();

    // chief-ray intersection with the MLA plane, local to the cell
    let proj_r = phase.0 * pm_r / per_r as f64;
    let proj_c = phase.1 * pm_c / per_c as f64;
    let spread = 1.0 - z / v;

    let mut counts = BTreeMap::new();
    let mut rays = 0u32;
    for i in 0..n {
        let a_r = -radius + (i as f64 + 0.5) * step;
        for j in 0..n {
            let a_c = -radius + (j as f64 + 0.5) * step;
            if a_r * a_r + a_c * a_c > radius * radius {
                continue;
            }
            rays += 1;
            let m_r = a_r * spread + proj_r;
            let m_c = a_c * spread + proj_c;
            let (c_r, c_c) = nearest_microlens(m_r, m_c, pm_r, pm_c, centers);
            let h_r = m_r - c_r;
            let h_c = m_c - c_c;
            let s_r = m_r + b * proj_r / z - b * a_r / v - b * h_r / f_mu;
            let s_c = m_c + b * proj_c / z - b * a_c / v - b * h_c / f_mu;
            let px = ((s_r / pp).floor() as i64, (s_c / pp).floor() as i64);
            *counts.entry(px).or_insert(0u32) += 1;
        }
    }
    LocalFootprint { counts, rays }
}

fn nearest_microlens(m_r: f64, m_c: f64, pm_r: f64, pm_c: f64, centers: &[(f64, f64)]) -> (f64, f64) {
    let i0 = (m_r / pm_r).floor();
    let j0 = (m_c / pm_c).floor();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for di in -1..=1 {
        for dj in -1..=1 {
            for &(fr, fc) in centers {
                let cr = (i0 + di as f64 + fr) * pm_r;
                let cc = (j0 + dj as f64 + fc) * pm_c;
                let d2 = (m_r - cr).powi(2) + (m_c - cc).powi(2);
                if d2 < best.0 {
                    best = (d2, cr, cc);
                }
            }
        }
    }
    (best.1, best.2)
}

pub(crate) fn check_depth(cfg: &CameraConfig, depth: f64) -> Result<()> {
    ensure(depth.is_finite() && depth > cfg.main_focal_length, || {
        format!("depth {depth} m must exceed the main focal length {} m", cfg.main_focal_length)
    })
}

/// Sensor footprint of a point light source of the given radiance at texture
/// coordinates `(row, col)` on a fronto-parallel plane at `depth`.
///
/// Texture pixel `q` has its center at `(q.0 + 0.5, q.1 + 0.5)`. Rays that
/// miss the sensor are dropped and the remaining footprint is normalized to
/// sum to `radiance`.
pub fn trace_point_psf(cfg: &CameraConfig, point: (f64, f64), depth: f64, radiance: f64) -> Result<SparseImage> {
    cfg.validate()?;
    check_depth(cfg, depth)?;
    let (th, tw) = cfg.texture_size();
    ensure(point.0 >= 0.0 && point.1 >= 0.0 && point.0 < th as f64 && point.1 < tw as f64, || {
        format!("point {point:?} outside the {th}x{tw} texture field of view")
    })?;
    let (sh, sw) = cfg.sensor_size;
    if radiance == 0.0 {
        return Ok(SparseImage::empty(sh, sw));
    }
    let (per_r, per_c) = cfg.texture_phase_period();
    let k_r = (point.0 / per_r as f64).floor();
    let k_c = (point.1 / per_c as f64).floor();
    let phase = (point.0 - k_r * per_r as f64, point.1 - k_c * per_c as f64);
    let local = trace_local(cfg, phase, depth);

    let origin_r = k_r as i64 * cfg.unit_cell.0 as i64;
    let origin_c = k_c as i64 * cfg.unit_cell.1 as i64;
    let mut landed = 0u64;
    let mut kept = Vec::new();
    for (&(dr, dc), &count) in &local.counts {
        let r = origin_r + dr;
        let c = origin_c + dc;
        if r >= 0 && c >= 0 && (r as usize) < sh && (c as usize) < sw {
            landed += count as u64;
            kept.push((r as usize, c as usize, count));
        }
    }
    if landed == 0 {
        return Err(Error::EmptyFootprint { row: point.0, col: point.1, depth });
    }
    let entries = kept.into_iter().map(|(r, c, count)| (r, c, radiance * count as f64 / landed as f64)).collect();
    Ok(SparseImage { height: sh, width: sw, entries })
}

/// Number of distinct microlenses receiving light from the point.
pub fn footprint_microlens_count(cfg: &CameraConfig, point: (f64, f64), depth: f64) -> Result<usize> {
    let fp = trace_point_psf(cfg, point, depth, 1.0)?;
    let mut seen = std::collections::BTreeSet::new();
    let (uh, uw) = cfg.unit_cell;
    if cfg.microlenses_per_cell == 1 {
        for &(r, c, _) in &fp.entries {
            seen.insert((r / uh, c / uw, 0));
        }
    } else {
        // nearest microlens-image center on the sensor
        let centers = cfg.microlens_centers();
        for &(r, c, _) in &fp.entries {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let (i0, j0) = ((y / uh as f64).floor() as i64, (x / uw as f64).floor() as i64);
            let mut best = (f64::INFINITY, (0i64, 0i64, 0usize));
            for di in -1..=1 {
                for dj in -1..=1 {
                    for (k, &(fr, fc)) in centers.iter().enumerate() {
                        let cy = (i0 + di) as f64 * uh as f64 + fr * uh as f64;
                        let cx = (j0 + dj) as f64 * uw as f64 + fc * uw as f64;
                        let d2 = (y - cy).powi(2) + (x - cx).powi(2);
                        if d2 < best.0 {
                            best = (d2, (i0 + di, j0 + dj, k));
                        }
                    }
                }
            }
            seen.insert((best.1 .0 as usize, best.1 .1 as usize, best.1 .2));
        }
    }
    Ok(seen.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> CameraConfig {
        CameraConfig::desk().with_sensor_units(14, 14)
    }

    #[test]
    fn footprint_sums_to_radiance() {
        let fp = trace_point_psf(&cfg(), (20.5, 21.5), 1.1, 2.5).unwrap();
        assert!((fp.total() - 2.5).abs() < 1e-12);
        assert!(fp.entries.iter().all(|e| e.2 > 0.0));
    }

    #[test]
    fn zero_radiance_is_empty() {
        let fp = trace_point_psf(&cfg(), (20.5, 21.5), 1.1, 0.0).unwrap();
        assert!(fp.is_empty());
    }

    #[test]
    fn rejects_depth_inside_focal_length() {
        assert!(trace_point_psf(&cfg(), (2.0, 2.0), 0.01, 1.0).is_err());
        assert!(trace_point_psf(&cfg(), (100.0, 2.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn in_focus_point_stays_in_one_microlens() {
        let c = cfg();
        let n = footprint_microlens_count(&c, (19.5, 19.5), c.focal_conjugate_depth()).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn deterministic() {
        let a = trace_point_psf(&cfg(), (10.2, 11.7), 0.8, 1.0).unwrap();
        let b = trace_point_psf(&cfg(), (10.2, 11.7), 0.8, 1.0).unwrap();
        assert_eq!(a, b);
    }
}
