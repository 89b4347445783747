use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::trace::{check_depth, trace_local};
use super::CameraConfig;
use crate::error::{ensure, invalid, Error, Result};
use crate::io::pnm;

/// Footprint kernel of one texture-pixel phase.
///
/// `anchor` is the sensor position of `kernel[[0, 0]]` relative to the
/// top-left pixel of the unit cell containing the texture pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseKernel {
    pub phase: (usize, usize),
    pub kernel: Array2<f64>,
    pub anchor: (i64, i64),
}

/// Non-zero kernel entry, offsets relative to the cell's top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tap {
    pub dr: i64,
    pub dc: i64,
    pub w: f64,
}

/// The imaging matrix of a fronto-parallel plane at one depth, stored as one
/// small kernel per texture-pixel phase within the unit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfKernelBank {
    depth: f64,
    period: (usize, usize),
    unit_cell: (usize, usize),
    sensor_size: (usize, usize),
    kernels: Vec<PhaseKernel>,
    taps: Vec<Vec<Tap>>,
}

/// Traces one representative point per phase (the pixel center) and stores
/// its footprint, normalized by the number of aperture rays.
pub fn build_psf_bank(cfg: &CameraConfig, depth: f64) -> Result<PsfKernelBank> {
    cfg.validate()?;
    check_depth(cfg, depth)?;
    let (per_r, per_c) = cfg.texture_phase_period();
    let mut kernels = Vec::with_capacity(per_r * per_c);
    for pr in 0..per_r {
        for pc in 0..per_c {
            let local = trace_local(cfg, (pr as f64 + 0.5, pc as f64 + 0.5), depth);
            if local.rays == 0 || local.counts.is_empty() {
                return Err(Error::EmptyFootprint { row: pr as f64 + 0.5, col: pc as f64 + 0.5, depth });
            }
            let r0 = local.counts.keys().map(|k| k.0).min().unwrap();
            let r1 = local.counts.keys().map(|k| k.0).max().unwrap();
            let c0 = local.counts.keys().map(|k| k.1).min().unwrap();
            let c1 = local.counts.keys().map(|k| k.1).max().unwrap();
            let mut kernel = Array2::zeros(((r1 - r0 + 1) as usize, (c1 - c0 + 1) as usize));
            for (&(r, c), &n) in &local.counts {
                kernel[[(r - r0) as usize, (c - c0) as usize]] = n as f64 / local.rays as f64;
            }
            kernels.push(PhaseKernel { phase: (pr, pc), kernel, anchor: (r0, c0) });
        }
    }
    PsfKernelBank::from_parts(depth, (per_r, per_c), cfg.unit_cell, cfg.sensor_size, kernels)
}

impl PsfKernelBank {
    pub fn from_parts(
        depth: f64,
        period: (usize, usize),
        unit_cell: (usize, usize),
        sensor_size: (usize, usize),
        kernels: Vec<PhaseKernel>,
    ) -> Result<Self> {
        ensure(kernels.len() == period.0 * period.1, || {
            format!("expected {} phase kernels, got {}", period.0 * period.1, kernels.len())
        })?;
        ensure(unit_cell.0.is_multiple_of(period.0) && unit_cell.1.is_multiple_of(period.1), || {
            "unit cell is not a multiple of the phase period".into()
        })?;
        let mut taps = Vec::with_capacity(kernels.len());
        for (i, k) in kernels.iter().enumerate() {
            ensure(k.phase == (i / period.1, i % period.1), || format!("phase kernels out of order at index {i}"))?;
            ensure(k.kernel.iter().all(|&w| w >= 0.0 && w.is_finite()), || {
                format!("kernel for phase {:?} has negative or non-finite entries", k.phase)
            })?;
            let t = k
                .kernel
                .indexed_iter()
                .filter(|(_, &w)| w != 0.0)
                .map(|((r, c), &w)| Tap { dr: k.anchor.0 + r as i64, dc: k.anchor.1 + c as i64, w })
                .collect();
            taps.push(t);
        }
        Ok(PsfKernelBank { depth, period, unit_cell, sensor_size, kernels, taps })
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    /// Texture pixels per unit cell, (rows, cols).
    pub fn period(&self) -> (usize, usize) {
        self.period
    }

    pub fn unit_cell(&self) -> (usize, usize) {
        self.unit_cell
    }

    pub fn sensor_size(&self) -> (usize, usize) {
        self.sensor_size
    }

    pub fn texture_size(&self) -> (usize, usize) {
        let (uh, uw) = self.unit_cell;
        (self.sensor_size.0 / uh * self.period.0, self.sensor_size.1 / uw * self.period.1)
    }

    pub fn units(&self) -> (usize, usize) {
        (self.sensor_size.0 / self.unit_cell.0, self.sensor_size.1 / self.unit_cell.1)
    }

    pub fn kernels(&self) -> &[PhaseKernel] {
        &self.kernels
    }

    pub fn kernel(&self, phase: (usize, usize)) -> &PhaseKernel {
        &self.kernels[phase.0 * self.period.1 + phase.1]
    }

    pub(crate) fn taps(&self) -> &[Vec<Tap>] {
        &self.taps
    }

    /// Largest distance (in whole unit cells) a kernel reaches beyond its own cell.
    pub fn reach_in_cells(&self) -> usize {
        let (uh, uw) = (self.unit_cell.0 as i64, self.unit_cell.1 as i64);
        let mut reach = 0i64;
        for k in &self.kernels {
            let (h, w) = k.kernel.dim();
            let over_r = (-k.anchor.0).max(k.anchor.0 + h as i64 - uh).max(0);
            let over_c = (-k.anchor.1).max(k.anchor.1 + w as i64 - uw).max(0);
            reach = reach.max((over_r + uh - 1) / uh).max((over_c + uw - 1) / uw);
        }
        reach as usize
    }

    /// Sensor image of a unit point source at the center of texture pixel `q`.
    pub fn dense_column(&self, q: (usize, usize)) -> Result<Array2<f64>> {
        let (th, tw) = self.texture_size();
        if q.0 >= th || q.1 >= tw {
            return Err(invalid(format!("texture pixel {q:?} outside {th}x{tw}")));
        }
        let (sh, sw) = self.sensor_size;
        let mut out = Array2::zeros((sh, sw));
        let phase = (q.0 % self.period.0, q.1 % self.period.1);
        let origin = ((q.0 / self.period.0 * self.unit_cell.0) as i64, (q.1 / self.period.1 * self.unit_cell.1) as i64);
        for t in &self.taps[phase.0 * self.period.1 + phase.1] {
            let r = origin.0 + t.dr;
            let c = origin.1 + t.dc;
            if r >= 0 && c >= 0 && (r as usize) < sh && (c as usize) < sw {
                out[[r as usize, c as usize]] = t.w;
            }
        }
        Ok(out)
    }

    /// Writes one PFM per phase plus a `bank.toml` index.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = BankManifest {
            version: 1,
            depth: self.depth,
            period: [self.period.0, self.period.1],
            unit_cell: [self.unit_cell.0, self.unit_cell.1],
            sensor_size: [self.sensor_size.0, self.sensor_size.1],
            phases: Vec::new(),
        };
        for k in &self.kernels {
            let file = format!("phase_{}_{}.pfm", k.phase.0, k.phase.1);
            pnm::write_pfm(&dir.join(&file), std::slice::from_ref(&k.kernel))?;
            manifest.phases.push(PhaseEntry { phase: [k.phase.0, k.phase.1], anchor: [k.anchor.0, k.anchor.1], file });
        }
        let text =
            toml::to_string(&manifest).map_err(|e| Error::Format { what: "bank manifest", detail: e.to_string() })?;
        std::fs::write(dir.join("bank.toml"), text)?;
        Ok(())
    }

    /// Loads a bank written by [`PsfKernelBank::save`]. Kernel values come back at f32 precision.
    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("bank.toml"))?;
        let m: BankManifest =
            toml::from_str(&text).map_err(|e| Error::Format { what: "bank manifest", detail: e.to_string() })?;
        if m.version != 1 {
            return Err(Error::Format { what: "bank manifest", detail: format!("unsupported version {}", m.version) });
        }
        let mut kernels = Vec::with_capacity(m.phases.len());
        for p in &m.phases {
            kernels.push(PhaseKernel {
                phase: (p.phase[0], p.phase[1]),
                kernel: pnm::read_pfm_gray(&dir.join(&p.file))?,
                anchor: (p.anchor[0], p.anchor[1]),
            });
        }
        Self::from_parts(
            m.depth,
            (m.period[0], m.period[1]),
            (m.unit_cell[0], m.unit_cell[1]),
            (m.sensor_size[0], m.sensor_size[1]),
            kernels,
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BankManifest {
    version: u32,
    /// meters
    depth: f64,
    period: [usize; 2],
    unit_cell: [usize; 2],
    sensor_size: [usize; 2],
    phases: Vec<PhaseEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PhaseEntry {
    phase: [usize; 2],
    anchor: [i64; 2],
    file: String,
}
