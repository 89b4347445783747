//! Primal active-set solver for `min x^T G x - 2 b^T x` with `x` split into
//! consecutive blocks, each constrained to the probability simplex.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

/// Refines a feasible `x` to the exact minimizer on its optimal face.
///
/// Zero entries of `x` start in the working set. Each iteration either moves
/// to the minimizer of the current face, stopping at the first blocking
/// bound, or releases the bound with the most negative multiplier. Returns
/// `x` unchanged if a face system is singular.
pub(crate) fn refine(
    gram: &Array2<f64>,
    b: &Array1<f64>,
    blocks: &[usize],
    mut x: Vec<f64>,
    max_iters: usize,
) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(blocks.iter().sum::<usize>(), n);
    let block_of: Vec<usize> = blocks.iter().enumerate().flat_map(|(k, &len)| std::iter::repeat_n(k, len)).collect();
    let tol = 1e-12 * b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let grad = |x: &[f64]| -> Vec<f64> {
        (0..n).map(|i| 2.0 * ((0..n).map(|j| gram[[i, j]] * x[j]).sum::<f64>() - b[i])).collect()
    };
    let mut fixed: Vec<bool> = x.iter().map(|&v| v == 0.0).collect();
    let mut at_face_minimum = false;
    for _ in 0..max_iters {
        let g = grad(&x);
        if at_face_minimum {
            // per-block multiplier from the free coordinates
            let mut nu = vec![0.0; blocks.len()];
            let mut count = vec![0usize; blocks.len()];
            for i in (0..n).filter(|&i| !fixed[i]) {
                nu[block_of[i]] += g[i];
                count[block_of[i]] += 1;
            }
            let release = (0..n)
                .filter(|&i| fixed[i] && count[block_of[i]] > 0)
                .map(|i| (i, g[i] - nu[block_of[i]] / count[block_of[i]] as f64))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match release {
                Some((i, lambda)) if lambda < -tol => {
                    fixed[i] = false;
                    at_face_minimum = false;
                }
                _ => return x,
            }
            continue;
        }

        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let (nf, nb) = (free.len(), blocks.len());
        let mut kkt = DMatrix::zeros(nf + nb, nf + nb);
        let mut rhs = DVector::zeros(nf + nb);
        for (a, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                kkt[(a, c)] = 2.0 * gram[[i, j]];
            }
            kkt[(a, nf + block_of[i])] = 1.0;
            kkt[(nf + block_of[i], a)] = 1.0;
            rhs[a] = -g[i];
        }
        // a block with no free coordinate keeps a trivial multiplier row
        for k in 0..nb {
            if !free.iter().any(|&i| block_of[i] == k) {
                kkt[(nf + k, nf + k)] = 1.0;
            }
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { return x };
        let mut alpha = 1.0;
        let mut blocking = None;
        for (a, &i) in free.iter().enumerate() {
            if sol[a] < 0.0 && -x[i] / sol[a] < alpha {
                alpha = -x[i] / sol[a];
                blocking = Some(i);
            }
        }
        for (a, &i) in free.iter().enumerate() {
            x[i] = (x[i] + alpha * sol[a]).max(0.0);
        }
        match blocking {
            Some(i) => {
                x[i] = 0.0;
                fixed[i] = true;
            }
            None => at_face_minimum = true,
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::project_simplex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(g: &Array2<f64>, b: &Array1<f64>, x: &[f64]) -> f64 {
        let x = Array1::from_vec(x.to_vec());
        x.dot(&g.dot(&x)) - 2.0 * b.dot(&x)
    }

    #[test]
    fn matches_dense_grid_search_in_two_dimensions() {
        // one block of size 2: x = (t, 1 - t)
        let g = Array2::from_shape_vec((2, 2), vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let b = Array1::from_vec(vec![0.3, 1.2]);
        let x = refine(&g, &b, &[2], vec![0.5, 0.5], 20);
        let best = (0..=100_000)
            .map(|k| k as f64 / 100_000.0)
            .min_by(|&s, &t| objective(&g, &b, &[s, 1.0 - s]).total_cmp(&objective(&g, &b, &[t, 1.0 - t])))
            .unwrap();
        assert!((x[0] - best).abs() < 1e-4, "{x:?} vs {best}");
    }

    #[test]
    fn recovers_planted_interior_and_boundary_solutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, n) = (60, 12);
        let a = Array2::from_shape_fn((m, n), |_| rng.random::<f64>());
        let mut truth: Vec<f64> = (0..n).map(|i| if i % 4 == 1 { 0.0 } else { rng.random::<f64>() }).collect();
        for block in truth.chunks_mut(6) {
            let s: f64 = block.iter().sum();
            block.iter_mut().for_each(|v| *v /= s);
        }
        let l = a.dot(&Array1::from_vec(truth.clone()));
        let gram = a.t().dot(&a);
        let b = a.t().dot(&l);
        let mut start = project_simplex(&[1.0; 6]);
        start.extend(project_simplex(&[5.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let x = refine(&gram, &b, &[6, 6], start, 200);
        for (u, v) in x.iter().zip(&truth) {
            assert!((u - v).abs() < 1e-9, "{x:?}\n{truth:?}");
        }
    }

    #[test]
    fn optimum_on_a_vertex_is_kept() {
        let g = Array2::from_diag(&Array1::from_vec(vec![1.0, 1.0, 1.0]));
        let b = Array1::from_vec(vec![5.0, 0.0, 0.0]);
        assert_eq!(refine(&g, &b, &[3], vec![1.0, 0.0, 0.0], 10), vec![1.0, 0.0, 0.0]);
    }
}
