use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::layers::{layered_objective, solve_blurs_logged, solve_textures_logged, DEFAULT_KERNEL_ITERS};
use super::{reconstruct_layers, IterationLog, ReconConfig};
use crate::error::{ensure, Error, Result};
use crate::lightfield::LightFieldImage;
use crate::operators::BlurKernel;
use crate::optics::PsfKernelBank;

/// Starting point of the kernel estimates.
///
/// A delta is a stationary point of the kernel subproblem whenever the true
/// blur is centrally symmetric, so from `Delta` the alternation leaves such
/// blurs in the textures. `Box` starts inside the simplex and can recover
/// them, at the price of not returning exactly to a delta on sharp input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelInit {
    #[default]
    Delta,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeblurConfig {
    pub kernel_size: usize,
    pub outer_iters: usize,
    /// Descent iterations of each kernel subproblem; texture subproblems use `ReconConfig::max_iters`.
    pub kernel_iters: usize,
    /// The first alternation uses `nu * nu_boost`; the weight then falls
    /// geometrically to `nu` at the last one.
    pub nu_boost: f64,
    pub kernel_init: KernelInit,
}

impl DeblurConfig {
    pub fn new(kernel_size: usize, outer_iters: usize) -> Self {
        DeblurConfig {
            kernel_size,
            outer_iters,
            kernel_iters: DEFAULT_KERNEL_ITERS,
            nu_boost: 10.0,
            kernel_init: KernelInit::Delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeblurState {
    pub u_t: Array2<f64>,
    pub u_r: Array2<f64>,
    pub m_t: BlurKernel,
    pub m_r: BlurKernel,
    /// Joint objective after initialization and after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Set when a subproblem diverged; the state is the last good one.
    pub diverged: bool,
}

/// Joint texture and blur estimation with `outer_iters` alternations.
pub fn deblur_and_separate(
    l: &LightFieldImage,
    bank_t: &PsfKernelBank,
    bank_r: &PsfKernelBank,
    rc: &ReconConfig,
    k: usize,
    outer_iters: usize,
) -> Result<DeblurState> {
    deblur_and_separate_with(l, bank_t, bank_r, rc, &DeblurConfig::new(k, outer_iters))
}

pub fn deblur_and_separate_with(
    l: &LightFieldImage,
    bank_t: &PsfKernelBank,
    bank_r: &PsfKernelBank,
    rc: &ReconConfig,
    dc: &DeblurConfig,
) -> Result<DeblurState> {
    rc.validate()?;
    let k = dc.kernel_size;
    ensure(k % 2 == 1, || format!("kernel size must be odd, got {k}"))?;
    ensure(dc.kernel_iters >= 1, || "kernel iterations must be >= 1".into())?;
    ensure(dc.nu_boost >= 1.0, || format!("nu_boost must be >= 1, got {}", dc.nu_boost))?;
    let (th, tw) = bank_t.texture_size();
    ensure(k <= th && k <= tw, || format!("{k}x{k} kernel larger than the {th}x{tw} texture"))?;

    let nu_at = |outer: usize| {
        if dc.outer_iters <= 1 {
            rc.nu
        } else {
            rc.nu * dc.nu_boost.powf(1.0 - outer as f64 / (dc.outer_iters - 1) as f64)
        }
    };
    let init = reconstruct_layers(l, bank_t, bank_r, &ReconConfig { nu: nu_at(0), ..*rc })?;
    let start = match dc.kernel_init {
        KernelInit::Delta => BlurKernel::delta(k),
        KernelInit::Box => BlurKernel::boxcar(k),
    };
    let objective = |s: &DeblurState, nu: f64| -> Result<f64> {
        let obs = l.channel(0);
        let blurs = (Some(&s.m_t), Some(&s.m_r));
        Ok(layered_objective(obs, bank_t, bank_r, &s.u_t, &s.u_r, blurs, nu, rc.tv_epsilon)?.0)
    };
    let mut state = DeblurState {
        u_t: init.layer_t,
        u_r: init.layer_r,
        m_t: start.clone(),
        m_r: start,
        objective_trace: Vec::new(),
        diverged: false,
    };
    state.objective_trace.push(objective(&state, nu_at(0))?);

    for outer in 0..dc.outer_iters {
        let nu = nu_at(outer);
        let sub = ReconConfig { nu, ..*rc };
        let mut log = IterationLog::default();
        let step = solve_textures_logged(
            l,
            bank_t,
            bank_r,
            (Some(&state.m_t), Some(&state.m_r)),
            (state.u_t.clone(), state.u_r.clone()),
            &sub,
            &mut log,
        )
        .and_then(|(u_t, u_r)| {
            let kernels =
                solve_blurs_logged(l, bank_t, bank_r, &u_t, &u_r, (&state.m_t, &state.m_r), dc.kernel_iters, &mut log)?;
            Ok((u_t, u_r, kernels))
        });
        match step {
            Ok((u_t, u_r, (m_t, m_r))) => {
                state.u_t = u_t;
                state.u_r = u_r;
                state.m_t = m_t;
                state.m_r = m_r;
                let f = objective(&state, nu)?;
                log::debug!("deblur outer {}: objective {f:.6e}", outer + 1);
                state.objective_trace.push(f);
            }
            Err(Error::Diverged(msg)) => {
                log::warn!("deblurring stopped at outer iteration {}: {msg}", outer + 1);
                state.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(state)
}
