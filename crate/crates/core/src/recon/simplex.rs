/// Euclidean projection onto the probability simplex `{x >= 0, sum x = 1}`.
///
/// Points already on the simplex (to rounding) are returned unchanged, so the
/// projection is exactly idempotent.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    assert!(v.iter().all(|x| x.is_finite()), "simplex projection needs finite entries");
    let tol = (4.0 * v.len() as f64 * f64::EPSILON).max(1e-13);
    let mut x = v.to_vec();
    for _ in 0..8 {
        if on_simplex(&x, tol) {
            return x;
        }
        x = sort_threshold(&x);
    }
    x
}

fn on_simplex(x: &[f64], tol: f64) -> bool {
    x.iter().all(|&v| v >= 0.0) && (x.iter().sum::<f64>() - 1.0).abs() <= tol
}

fn sort_threshold(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex() {
        assert_eq!(project_simplex(&[2.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn symmetric_pair() {
        assert_eq!(project_simplex(&[0.6, 0.6]), vec![0.5, 0.5]);
    }

    #[test]
    fn negative_inputs() {
        let x = project_simplex(&[-1.0, -2.0, -3.0]);
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
        let y = project_simplex(&[-5.0, -5.0]);
        assert_eq!(y, vec![0.5, 0.5]);
    }
}
