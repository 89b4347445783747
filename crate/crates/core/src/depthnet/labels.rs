use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Result};
use crate::optics::DepthLevelSet;

/// Classifier target: one depth level, or an unordered pair of levels `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Single(usize),
    Pair(usize, usize),
}

impl Label {
    pub fn levels(&self) -> Vec<usize> {
        match *self {
            Label::Single(i) => vec![i],
            Label::Pair(i, j) => vec![i, j],
        }
    }

    /// Same kind, and every depth index within one level of its counterpart.
    pub fn is_adjacent(&self, other: &Label) -> bool {
        match (*self, *other) {
            (Label::Single(a), Label::Single(b)) => a.abs_diff(b) <= 1,
            (Label::Pair(a, b), Label::Pair(c, d)) => a.abs_diff(c) <= 1 && b.abs_diff(d) <= 1,
            _ => false,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Single(i) => write!(f, "single({i})"),
            Label::Pair(i, j) => write!(f, "pair({i},{j})"),
        }
    }
}

/// Ordered classifier label set over a depth quantization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    levels: DepthLevelSet,
    /// Smallest admissible inverse-depth gap of a pair, diopters.
    min_gap: f64,
    labels: Vec<Label>,
}

fn gap(levels: &DepthLevelSet, i: usize, j: usize) -> f64 {
    (1.0 / levels.get(i) - 1.0 / levels.get(j)).abs()
}

/// All singles followed by the `pair_count` admissible pairs with the widest
/// inverse-depth gaps; equal gaps are ordered by `(i, j)`.
pub fn build_label_set(levels: &DepthLevelSet, pair_count: usize, min_gap: f64) -> Result<LabelSet> {
    ensure(min_gap.is_finite() && min_gap >= 0.0, || format!("min_gap must be >= 0, got {min_gap}"))?;
    let n = levels.len();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let g = gap(levels, i, j);
            if g >= min_gap {
                pairs.push((i, j, g));
            }
        }
    }
    if pair_count > pairs.len() {
        return Err(invalid(format!(
            "asked for {pair_count} pairs but only {} have an inverse-depth gap >= {min_gap}",
            pairs.len()
        )));
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut labels: Vec<Label> = (0..n).map(Label::Single).collect();
    labels.extend(pairs[..pair_count].iter().map(|&(i, j, _)| Label::Pair(i, j)));
    Ok(LabelSet { levels: levels.clone(), min_gap, labels })
}

impl LabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, k: usize) -> Label {
        self.labels[k]
    }

    pub fn levels(&self) -> &DepthLevelSet {
        &self.levels
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Depths of a label in meters, nearest first.
    pub fn depths(&self, k: usize) -> Vec<f64> {
        self.labels[k].levels().iter().map(|&i| self.levels.get(i)).collect()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.labels[a].is_adjacent(&self.labels[b])
    }

    /// Checks uniqueness, index ranges and the pair gap rule.
    pub fn validate(&self) -> Result<()> {
        let n = self.levels.len();
        for (k, l) in self.labels.iter().enumerate() {
            ensure(!self.labels[..k].contains(l), || format!("duplicate label {l}"))?;
            match *l {
                Label::Single(i) => ensure(i < n, || format!("{l} outside {n} levels"))?,
                Label::Pair(i, j) => {
                    ensure(i < j && j < n, || format!("{l} is not an ordered pair of the {n} levels"))?;
                    ensure(gap(&self.levels, i, j) >= self.min_gap, || format!("{l} is closer than min_gap"))?;
                }
            }
        }
        Ok(())
    }

    /// The 15-level, 45-label set of the reference camera.
    pub fn reference() -> Self {
        let levels = crate::optics::make_depth_levels(0.2, 2.5, 15).unwrap();
        build_label_set(&levels, 30, REFERENCE_MIN_GAP).unwrap()
    }

    /// The 15-level, 45-label set used at desk scale.
    pub fn desk() -> Self {
        let levels = crate::optics::make_depth_levels(0.3, 2.3, 15).unwrap();
        build_label_set(&levels, 30, DESK_MIN_GAP).unwrap()
    }
}

pub const REFERENCE_MIN_GAP: f64 = 2.0;
pub const DESK_MIN_GAP: f64 = 1.4;
