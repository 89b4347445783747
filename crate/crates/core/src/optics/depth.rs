use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Result};

/// Quantized scene depths `d_1 < ... < d_N` (meters), uniform in inverse depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthLevelSet {
    depths: Vec<f64>,
}

impl DepthLevelSet {
    /// Builds a level set from explicit depths; they must be positive and strictly increasing.
    pub fn from_depths(depths: Vec<f64>) -> Result<Self> {
        ensure(!depths.is_empty(), || "depth level set is empty".into())?;
        ensure(depths.iter().all(|d| d.is_finite() && *d > 0.0), || "depth levels must be positive".into())?;
        ensure(depths.windows(2).all(|w| w[0] < w[1]), || "depth levels must be strictly increasing".into())?;
        Ok(DepthLevelSet { depths })
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.depths[i]
    }

    /// Index of the level closest in inverse depth.
    pub fn nearest(&self, depth: f64) -> usize {
        let inv = 1.0 / depth;
        let mut best = 0;
        for (i, d) in self.depths.iter().enumerate() {
            if (1.0 / d - inv).abs() < (1.0 / self.depths[best] - inv).abs() {
                best = i;
            }
        }
        best
    }
}

/// `n` depths between `d_min` and `d_max` whose reciprocals are evenly spaced,
/// so the quantization is finer close to the camera.
pub fn make_depth_levels(d_min: f64, d_max: f64, n: usize) -> Result<DepthLevelSet> {
    if !(d_min.is_finite() && d_max.is_finite() && d_min > 0.0 && d_min < d_max) {
        return Err(invalid(format!("depth range must satisfy 0 < d_min < d_max, got [{d_min}, {d_max}]")));
    }
    if n < 2 {
        return Err(invalid(format!("need at least two depth levels, got {n}")));
    }
    let (near, far) = (1.0 / d_min, 1.0 / d_max);
    let step = (near - far) / (n - 1) as f64;
    let depths = (0..n)
        .map(|i| match i {
            0 => d_min,
            i if i == n - 1 => d_max,
            i => 1.0 / (near - step * i as f64),
        })
        .collect();
    DepthLevelSet::from_depths(depths)
}

/// Depths of the synthetic layer-separation sweep: 0.35 m to 2.3 m in 0.15 m steps.
pub fn sweep_depth_grid() -> Vec<f64> {
    (0..14).map(|i| ((35 + 15 * i) as f64) / 100.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_levels() {
        let lv = make_depth_levels(0.20, 2.50, 15).unwrap();
        assert_eq!(lv.len(), 15);
        assert_eq!(lv.get(0), 0.20);
        assert_eq!(lv.get(14), 2.50);
        // 1 / (5.0 - 4.6 / 14), worked by hand
        assert!((lv.get(1) - 0.214_067_278_287_461_77).abs() < 1e-12);
        let gaps: Vec<f64> = lv.depths().windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.windows(2).all(|g| g[1] >= g[0]));
    }

    #[test]
    fn endpoints_only() {
        let lv = make_depth_levels(0.20, 2.50, 2).unwrap();
        assert_eq!(lv.depths(), &[0.20, 2.50]);
    }

    #[test]
    fn inverse_depth_is_affine() {
        let lv = make_depth_levels(0.20, 2.50, 15).unwrap();
        let step = (5.0 - 0.4) / 14.0;
        for (i, d) in lv.depths().iter().enumerate() {
            assert!((1.0 / d - (5.0 - step * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(make_depth_levels(0.0, 2.5, 15).is_err());
        assert!(make_depth_levels(2.5, 0.2, 15).is_err());
        assert!(make_depth_levels(0.2, 2.5, 1).is_err());
        assert!(make_depth_levels(-1.0, 2.5, 4).is_err());
    }

    #[test]
    fn sweep_grid_matches_experiment() {
        let g = sweep_depth_grid();
        assert_eq!(g.len(), 14);
        assert_eq!(g[0], 0.35);
        assert_eq!(g[13], 2.3);
        assert!(g.contains(&0.8) && g.contains(&1.7) && g.contains(&0.5));
    }
}
