use ndarray::Array2;

/// Smoothed isotropic total variation `sum sqrt(dx^2 + dy^2 + eps^2)` with
/// forward differences and replicated borders (the last row/column has zero
/// outward difference), and its gradient.
pub fn tv_value_grad(u: &Array2<f64>, epsilon: f64) -> (f64, Array2<f64>) {
    let (h, w) = u.dim();
    let eps2 = epsilon * epsilon;
    let mut value = 0.0;
    let mut grad = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let x = u[[i, j]];
            let dx = if j + 1 < w { u[[i, j + 1]] - x } else { 0.0 };
            let dy = if i + 1 < h { u[[i + 1, j]] - x } else { 0.0 };
            let t = (dx * dx + dy * dy + eps2).sqrt();
            value += t;
            grad[[i, j]] -= (dx + dy) / t;
            if j + 1 < w {
                grad[[i, j + 1]] += dx / t;
            }
            if i + 1 < h {
                grad[[i + 1, j]] += dy / t;
            }
        }
    }
    (value, grad)
}
