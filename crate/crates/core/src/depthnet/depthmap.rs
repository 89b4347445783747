use ndarray::Array2;

use super::{LabelMap, LabelSet};
use crate::error::{ensure, Result};

/// Marks `depth_far` where a unit shows a single layer.
pub const NO_REFLECTION: f64 = f64::INFINITY;

/// Per-unit near/far depth maps with the reflection mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMapPair {
    pub depth_near: Array2<f64>,
    pub depth_far: Array2<f64>,
    pub reflection_mask: Array2<bool>,
}

pub fn labels_to_depth_maps(map: &LabelMap, set: &LabelSet) -> Result<DepthMapPair> {
    ensure(map.labels.iter().all(|&k| k < set.len()), || "label map holds indices outside the label set".into())?;
    let dim = map.labels.dim();
    let mut near = Array2::zeros(dim);
    let mut far = Array2::from_elem(dim, NO_REFLECTION);
    let mut mask = Array2::from_elem(dim, false);
    for ((ij, &k), n) in map.labels.indexed_iter().zip(near.iter_mut()) {
        let d = set.depths(k);
        *n = d[0];
        if d.len() == 2 {
            far[ij] = d[1];
            mask[ij] = true;
        }
    }
    Ok(DepthMapPair { depth_near: near, depth_far: far, reflection_mask: mask })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median near depth over all units and median far depth over reflective
/// units; the far depth is `None` when no unit is reflective.
pub fn median_depths(maps: &DepthMapPair) -> Result<(f64, Option<f64>)> {
    ensure(!maps.depth_near.is_empty(), || "depth map is empty".into())?;
    let d_t = median(maps.depth_near.iter().copied().collect());
    let far: Vec<f64> =
        maps.depth_far.iter().zip(maps.reflection_mask.iter()).filter(|(_, &m)| m).map(|(&d, _)| d).collect();
    let d_r = if far.is_empty() { None } else { Some(median(far)) };
    Ok((d_t, d_r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depthnet::Label;

    fn map(labels: Array2<usize>) -> LabelMap {
        let confidence = labels.mapv(|_| 1.0);
        LabelMap { labels, confidence }
    }

    #[test]
    fn singles_have_no_mask() {
        let set = LabelSet::desk();
        let m = labels_to_depth_maps(&map(Array2::from_shape_fn((3, 4), |(i, j)| (i + j) % 8)), &set).unwrap();
        assert!(m.reflection_mask.iter().all(|&b| !b));
        assert!(m.depth_far.iter().all(|&d| d == NO_REFLECTION));
        assert_eq!(median_depths(&m).unwrap().1, None);
    }

    #[test]
    fn pair_splits_into_near_and_far() {
        let set = LabelSet::reference();
        let k = set.index_of(Label::Pair(3, 12)).unwrap();
        let m = labels_to_depth_maps(&map(Array2::from_elem((1, 1), k)), &set).unwrap();
        assert_eq!(m.depth_near[[0, 0]], set.levels().get(3));
        assert_eq!(m.depth_far[[0, 0]], set.levels().get(12));
        assert!(m.reflection_mask[[0, 0]]);
    }

    #[test]
    fn majority_median() {
        let mut near = Array2::from_elem((10, 10), 0.35);
        near.iter_mut().skip(60).for_each(|d| *d = 0.5);
        let maps = DepthMapPair {
            depth_near: near,
            depth_far: Array2::from_elem((10, 10), NO_REFLECTION),
            reflection_mask: Array2::from_elem((10, 10), false),
        };
        assert_eq!(median_depths(&maps).unwrap(), (0.35, None));
    }

    #[test]
    fn sentinels_excluded_from_far_median() {
        // five units: far depths 1.0, 2.0, 3.0 on reflective units, two single units
        let maps = DepthMapPair {
            depth_near: Array2::from_shape_vec((1, 5), vec![0.3, 0.4, 0.3, 0.5, 0.3]).unwrap(),
            depth_far: Array2::from_shape_vec((1, 5), vec![1.0, NO_REFLECTION, 3.0, NO_REFLECTION, 2.0]).unwrap(),
            reflection_mask: Array2::from_shape_vec((1, 5), vec![true, false, true, false, true]).unwrap(),
        };
        assert_eq!(median_depths(&maps).unwrap(), (0.3, Some(2.0)));
    }
}
