//! Raw plenoptic mosaics and their rearrangement into view tensors.
//!
//! A view is the image formed by one intra-cell pixel offset taken across all
//! unit cells. Offsets near the edge of a microlens image carry little light
//! and are dropped by the border mask.

use ndarray::{s, Array2, Array3};

use crate::error::{ensure, invalid, Result};
use crate::optics::CameraConfig;

/// Offsets whose distance from the nearest microlens center is at most
/// `BORDER_RHO * min(cell_h, cell_w) / 2` are kept. On the 28x16 hexagonal
/// super-cell this keeps 296 of 448 positions.
pub const BORDER_RHO: f64 = 0.85;

/// Raw sensor mosaic, one array per color channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LightFieldImage {
    channels: Vec<Array2<f64>>,
    cfg: CameraConfig,
}

impl LightFieldImage {
    pub fn new(channels: Vec<Array2<f64>>, cfg: &CameraConfig) -> Result<Self> {
        let first = channels.first().ok_or_else(|| invalid("light field needs at least one channel"))?;
        let (h, w) = first.dim();
        ensure(channels.iter().all(|c| c.dim() == (h, w)), || "channel shapes differ".into())?;
        let (uh, uw) = cfg.unit_cell;
        ensure(h > 0 && w > 0 && h % uh == 0 && w % uw == 0, || {
            format!("mosaic {h}x{w} is not a whole number of {uh}x{uw} unit cells")
        })?;
        ensure(channels.iter().all(|c| c.iter().all(|v| *v >= 0.0)), || {
            "light field pixel values must be non-negative".into()
        })?;
        Ok(LightFieldImage { channels, cfg: cfg.clone() })
    }

    pub fn gray(pixels: Array2<f64>, cfg: &CameraConfig) -> Result<Self> {
        Self::new(vec![pixels], cfg)
    }

    pub fn config(&self) -> &CameraConfig {
        &self.cfg
    }

    pub fn channels(&self) -> &[Array2<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &Array2<f64> {
        &self.channels[i]
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.channels[0].dim()
    }

    pub fn units(&self) -> (usize, usize) {
        let (h, w) = self.dim();
        (h / self.cfg.unit_cell.0, w / self.cfg.unit_cell.1)
    }

    pub fn mean(&self) -> f64 {
        let n: usize = self.channels.iter().map(|c| c.len()).sum();
        self.channels.iter().map(|c| c.sum()).sum::<f64>() / n as f64
    }

    /// Sub-mosaic of `size` units starting at unit `top_left`.
    pub fn crop_units(&self, top_left: (usize, usize), size: (usize, usize)) -> Result<Self> {
        let (nh, nw) = self.units();
        ensure(top_left.0 + size.0 <= nh && top_left.1 + size.1 <= nw && size.0 > 0 && size.1 > 0, || {
            format!("crop {size:?} at {top_left:?} exceeds {nh}x{nw} units")
        })?;
        let (uh, uw) = self.cfg.unit_cell;
        let r0 = top_left.0 * uh;
        let c0 = top_left.1 * uw;
        let channels =
            self.channels.iter().map(|c| c.slice(s![r0..r0 + size.0 * uh, c0..c0 + size.1 * uw]).to_owned()).collect();
        Ok(LightFieldImage { channels, cfg: self.cfg.clone() })
    }
}

/// Intra-cell offsets that survive the border mask, in row-major order.
pub fn kept_positions(cfg: &CameraConfig) -> Vec<(usize, usize)> {
    let (uh, uw) = cfg.unit_cell;
    let limit = BORDER_RHO * uh.min(uw) as f64 / 2.0;
    let centers = cfg.microlens_centers();
    let mut kept = Vec::new();
    for r in 0..uh {
        for c in 0..uw {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let mut best = f64::INFINITY;
            for di in -1..=1 {
                for dj in -1..=1 {
                    for &(fr, fc) in centers {
                        let cy = (di as f64 + fr) * uh as f64;
                        let cx = (dj as f64 + fc) * uw as f64;
                        best = best.min(((y - cy).powi(2) + (x - cx).powi(2)).sqrt());
                    }
                }
            }
            if best <= limit {
                kept.push((r, c));
            }
        }
    }
    kept
}

/// Mosaic rearranged into per-unit view stacks: `data[[i, j, color * V + v]]`
/// is the pixel at offset `kept_positions[v]` of unit `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTensor {
    pub data: Array3<f64>,
    pub kept_positions: Vec<(usize, usize)>,
    pub n_colors: usize,
    pub unit_cell: (usize, usize),
}

impl ViewTensor {
    pub fn n_views(&self) -> usize {
        self.kept_positions.len()
    }

    pub fn units(&self) -> (usize, usize) {
        let (h, w, _) = self.data.dim();
        (h, w)
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    /// Inverse of [`rearrange_views`]: writes every tensor entry back to its
    /// sensor pixel; masked-out border pixels are zero.
    pub fn scatter(&self) -> Vec<Array2<f64>> {
        let (nh, nw, _) = self.data.dim();
        let (uh, uw) = self.unit_cell;
        let v = self.n_views();
        let mut out = vec![Array2::zeros((nh * uh, nw * uw)); self.n_colors];
        for i in 0..nh {
            for j in 0..nw {
                for (color, img) in out.iter_mut().enumerate() {
                    for (k, &(r, c)) in self.kept_positions.iter().enumerate() {
                        img[[i * uh + r, j * uw + c]] = self.data[[i, j, color * v + k]];
                    }
                }
            }
        }
        out
    }
}

pub fn rearrange_views(lf: &LightFieldImage) -> Result<ViewTensor> {
    let cfg = lf.config();
    let (uh, uw) = cfg.unit_cell;
    let (h, w) = lf.dim();
    ensure(h % uh == 0 && w % uw == 0, || format!("mosaic {h}x{w} not a multiple of the unit cell"))?;
    let kept = kept_positions(cfg);
    let v = kept.len();
    let (nh, nw) = (h / uh, w / uw);
    let nc = lf.n_channels();
    let mut data = Array3::zeros((nh, nw, v * nc));
    for (color, img) in lf.channels().iter().enumerate() {
        for i in 0..nh {
            for j in 0..nw {
                for (k, &(r, c)) in kept.iter().enumerate() {
                    data[[i, j, color * v + k]] = img[[i * uh + r, j * uw + c]];
                }
            }
        }
    }
    Ok(ViewTensor { data, kept_positions: kept, n_colors: nc, unit_cell: (uh, uw) })
}

/// `p x p` unit window of a view tensor.
pub fn extract_patch(vt: &ViewTensor, top_left: (usize, usize), p: usize) -> Result<ViewTensor> {
    let (nh, nw) = vt.units();
    if p == 0 || top_left.0 + p > nh || top_left.1 + p > nw {
        return Err(invalid(format!("{p}x{p} patch at {top_left:?} exceeds {nh}x{nw} units")));
    }
    let (i, j) = top_left;
    Ok(ViewTensor {
        data: vt.data.slice(s![i..i + p, j..j + p, ..]).to_owned(),
        kept_positions: vt.kept_positions.clone(),
        n_colors: vt.n_colors,
        unit_cell: vt.unit_cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lf(cfg: &CameraConfig, units: (usize, usize), colors: usize, seed: u64) -> LightFieldImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (uh, uw) = cfg.unit_cell;
        let chans =
            (0..colors).map(|_| Array2::from_shape_fn((units.0 * uh, units.1 * uw), |_| rng.random::<f64>())).collect();
        LightFieldImage::new(chans, cfg).unwrap()
    }

    #[test]
    fn reference_cell_keeps_296_views() {
        let cfg = CameraConfig::reference();
        let kept = kept_positions(&cfg);
        assert_eq!(kept.len(), 296);
        let lf = random_lf(&cfg, (10, 10), 3, 1);
        let vt = rearrange_views(&lf).unwrap();
        assert_eq!(vt.data.dim(), (10, 10, 888));
    }

    #[test]
    fn desk_cell_view_count() {
        assert_eq!(kept_positions(&CameraConfig::desk()).len(), 80);
    }

    #[test]
    fn constant_mosaic_gives_constant_tensor() {
        let cfg = CameraConfig::desk();
        let lf = LightFieldImage::gray(Array2::from_elem((36, 48), 0.25), &cfg).unwrap();
        let vt = rearrange_views(&lf).unwrap();
        assert!(vt.data.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn scatter_restores_unmasked_pixels() {
        let cfg = CameraConfig::desk();
        let lf = random_lf(&cfg, (3, 4), 2, 7);
        let vt = rearrange_views(&lf).unwrap();
        let back = vt.scatter();
        let kept = kept_positions(&cfg);
        let mut mask = Array2::from_elem((12, 12), false);
        for &(r, c) in &kept {
            mask[[r, c]] = true;
        }
        let mut restored = 0;
        for (orig, rec) in lf.channels().iter().zip(&back) {
            for ((r, c), &v) in orig.indexed_iter() {
                if mask[[r % 12, c % 12]] {
                    assert_eq!(rec[[r, c]], v);
                    restored += 1;
                } else {
                    assert_eq!(rec[[r, c]], 0.0);
                }
            }
        }
        assert_eq!(restored, vt.data.len());
    }

    #[test]
    fn full_patch_is_identity() {
        let cfg = CameraConfig::desk();
        let lf = random_lf(&cfg, (5, 5), 1, 3);
        let vt = rearrange_views(&lf).unwrap();
        assert_eq!(extract_patch(&vt, (0, 0), 5).unwrap(), vt);
        assert!(extract_patch(&vt, (1, 0), 5).is_err());
    }

    #[test]
    fn crop_commutes_with_rearrangement() {
        let cfg = CameraConfig::desk();
        let lf = random_lf(&cfg, (14, 13), 1, 11);
        let vt = rearrange_views(&lf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = rng.random_range(1..=10);
            let i = rng.random_range(0..=14 - p);
            let j = rng.random_range(0..=13 - p);
            let a = extract_patch(&vt, (i, j), p).unwrap();
            let b = rearrange_views(&lf.crop_units((i, j), (p, p)).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_partial_units() {
        let cfg = CameraConfig::desk();
        assert!(LightFieldImage::gray(Array2::zeros((13, 12)), &cfg).is_err());
        assert!(LightFieldImage::gray(Array2::from_elem((12, 12), -1.0), &cfg).is_err());
    }
}
