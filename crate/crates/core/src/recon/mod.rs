//! TV-regularized two-layer reconstruction, blind deblurring by projected
//! alternating minimization, and the NCC quality metric.

mod deblur;
mod descent;
mod layers;
mod simplex;
mod simplex_qp;
mod tv;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::lightfield::LightFieldImage;

pub use deblur::{deblur_and_separate, deblur_and_separate_with, DeblurConfig, DeblurState, KernelInit};
pub use layers::{
    layered_objective, reconstruct_layers, reconstruct_layers_logged, solve_blurs_given_textures, solve_blurs_logged,
    solve_textures_given_blurs, solve_textures_logged,
};
pub use simplex::project_simplex;
pub use tv::tv_value_grad;

/// Texture solver settings. `nu` is absolute; [`ReconConfig::for_observation`]
/// scales it to the observation's mean intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub nu: f64,
    pub tv_epsilon: f64,
    /// Trial step of the first iteration; later trial steps are Barzilai-Borwein.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once the relative objective decrease stays below this for 3 iterations.
    pub rel_tol: f64,
}

pub const DEFAULT_NU_SCALE: f64 = 1e-3;

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig { nu: DEFAULT_NU_SCALE, tv_epsilon: 1e-3, step_size: 1.0, max_iters: 400, rel_tol: 1e-7 }
    }
}

impl ReconConfig {
    pub fn for_observation(l: &LightFieldImage) -> Self {
        ReconConfig { nu: DEFAULT_NU_SCALE * l.mean(), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.nu >= 0.0 && self.nu.is_finite(), || format!("nu must be >= 0, got {}", self.nu))?;
        ensure(self.tv_epsilon > 0.0, || format!("tv_epsilon must be > 0, got {}", self.tv_epsilon))?;
        ensure(self.step_size > 0.0, || format!("step_size must be > 0, got {}", self.step_size))?;
        ensure(self.max_iters >= 1, || "max_iters must be >= 1".into())?;
        ensure(self.rel_tol >= 0.0, || format!("rel_tol must be >= 0, got {}", self.rel_tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
}

/// Accepted iterations of a solver run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationLog {
    pub records: Vec<IterRecord>,
}

impl IterationLog {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// One `iteration objective step` line per record.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# iteration objective step\n");
        for r in &self.records {
            writeln!(s, "{} {:.17e} {:.6e}", r.iteration, r.objective, r.step).unwrap();
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Zero-mean, unit-norm correlation of `estimate` against `truth`.
///
/// A constant estimate scores 0; a constant truth has no defined score.
pub fn ncc(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    ensure(estimate.dim() == truth.dim(), || format!("shape mismatch: {:?} vs {:?}", estimate.dim(), truth.dim()))?;
    let constant = |a: &Array2<f64>| a.iter().all(|&v| v == a[[0, 0]]);
    if truth.is_empty() || constant(truth) {
        return Err(Error::UndefinedMetric("ground truth is constant".into()));
    }
    if constant(estimate) {
        return Ok(0.0);
    }
    let n = truth.len() as f64;
    let mt = truth.sum() / n;
    let me = estimate.sum() / n;
    let (mut num, mut vt, mut ve) = (0.0, 0.0, 0.0);
    for (&e, &t) in estimate.iter().zip(truth.iter()) {
        let (de, dt) = (e - me, t - mt);
        num += de * dt;
        vt += dt * dt;
        ve += de * de;
    }
    Ok((num / (vt.sqrt() * ve.sqrt())).clamp(-1.0, 1.0))
}
