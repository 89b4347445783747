//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use plenosep::operators::BlurKernel;
use plenosep::optics::PsfKernelBank;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random::<f64>())
}

pub fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Columns of H assembled one texture pixel at a time.
pub fn dense_matrix(bank: &PsfKernelBank) -> Vec<Array2<f64>> {
    let (th, tw) = bank.texture_size();
    let mut cols = Vec::new();
    for r in 0..th {
        for c in 0..tw {
            cols.push(bank.dense_column((r, c)).unwrap());
        }
    }
    cols
}

/// Circulant matrix of the blur, one row per output pixel.
pub fn blur_matrix(m: &BlurKernel, h: usize, w: usize) -> Array2<f64> {
    let k = m.size();
    let c = (k / 2) as i64;
    let mut mat = Array2::zeros((h * w, h * w));
    for i in 0..h {
        for j in 0..w {
            for a in 0..k {
                for b in 0..k {
                    let p = (i as i64 - a as i64 + c).rem_euclid(h as i64) as usize;
                    let q = (j as i64 - b as i64 + c).rem_euclid(w as i64) as usize;
                    mat[[i * w + j, p * w + q]] += m.weights()[[a, b]];
                }
            }
        }
    }
    mat
}

/// Projection by enumerating every support set: on a support S the
/// equality-constrained minimizer is `v_S - (sum v_S - 1)/|S|`; the projection
/// is the closest feasible candidate.
pub fn brute_force_projection(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let shift = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut x = vec![0.0; n];
        let mut feasible = true;
        for &i in &support {
            x[i] = v[i] - shift;
            feasible &= x[i] >= 0.0;
        }
        if !feasible {
            continue;
        }
        let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.unwrap().1
}
