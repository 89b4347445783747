use ndarray::Array2;

use super::{IterRecord, IterationLog};
use crate::error::{Error, Result};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn dot(a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| p * q).sum::<f64>()).sum()
}

/// Projected gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking. Every accepted step strictly lowers the objective.
///
/// `eval` returns the objective and its gradient; `project` maps a point
/// back onto the feasible set in place. Returns the final objective.
pub(crate) fn projected_descent<F, P>(
    x: &mut Vec<Array2<f64>>,
    mut eval: F,
    project: P,
    first_step: f64,
    max_iters: usize,
    rel_tol: f64,
    log: &mut IterationLog,
) -> Result<f64>
where
    F: FnMut(&[Array2<f64>]) -> Result<(f64, Vec<Array2<f64>>)>,
    P: Fn(&mut [Array2<f64>]),
{
    let (mut f, mut g) = eval(x)?;
    if !f.is_finite() {
        return Err(Error::Diverged(format!("objective is {f} at the starting point")));
    }
    let mut alpha = first_step;
    let mut slow = 0;
    for it in 1..=max_iters {
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<Array2<f64>> = x.iter().zip(&g).map(|(xi, gi)| xi - &(gi * alpha)).collect();
            project(&mut trial);
            let d: Vec<Array2<f64>> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
            let gd = dot(&g, &d);
            if gd >= 0.0 {
                break;
            }
            let (ft, gt) = eval(&trial)?;
            if ft.is_finite() && ft < f && ft <= f + ARMIJO * gd {
                accepted = Some((trial, ft, gt, d));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gnew, s)) = accepted else { break };
        let y: Vec<Array2<f64>> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let ss = dot(&s, &s);
        log.records.push(IterRecord { iteration: it, objective: fnew, step: alpha });
        let rel = (f - fnew) / f.abs().max(f64::MIN_POSITIVE);
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-20, 1e20) } else { alpha * 2.0 };
        *x = xn;
        f = fnew;
        g = gnew;
        if rel < rel_tol {
            slow += 1;
            if slow >= 3 {
                break;
            }
        } else {
            slow = 0;
        }
    }
    Ok(f)
}
