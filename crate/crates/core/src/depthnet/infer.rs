use ndarray::{Array2, Array4};

use super::dataset::network_input;
use super::net::{conv_features, head_forward, net_forward, softmax, Mode, NetParams, Real};
use crate::error::{ensure, Result};
use crate::lightfield::{extract_patch, LightFieldImage, ViewTensor};

/// Per-unit labels and softmax confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub labels: Array2<usize>,
    pub confidence: Array2<f64>,
}

fn check_size<F: Real>(params: &NetParams<F>, vt: &ViewTensor) -> Result<(usize, usize)> {
    let (h, w) = vt.units();
    let p = params.arch.patch;
    ensure(h >= p && w >= p, || format!("{h}x{w} units is smaller than one {p}x{p} patch"))?;
    ensure(vt.channels() == params.arch.in_channels, || {
        format!("view tensor has {} channels, network expects {}", vt.channels(), params.arch.in_channels)
    })?;
    Ok((h + 1 - p, w + 1 - p))
}

/// Logits of every `p x p` window (row-major over window positions) from one
/// shared conv pass over the whole tensor.
pub fn shared_window_logits<F: Real>(params: &NetParams<F>, vt: &ViewTensor) -> Result<Array2<F>> {
    let (nh, nw) = check_size(params, vt)?;
    let (h, w) = vt.units();
    let c = vt.channels();
    let x = vt.data.view().into_shape_with_order((h * w, c)).unwrap().mapv(|v| F::from_f64(v).unwrap());
    let feat = conv_features(params, x.view(), h, w)?;
    let (fh, fw) = (h - 6, w - 6);
    debug_assert_eq!(feat.nrows(), fh * fw);
    let q = params.arch.feature_side();
    let c3 = params.arch.widths[2];
    let mut flat = Array2::zeros((nh * nw, q * q * c3));
    for i in 0..nh {
        for j in 0..nw {
            let mut row = flat.row_mut(i * nw + j);
            let dst = row.as_slice_mut().unwrap();
            for y in 0..q {
                for x in 0..q {
                    let src = feat.row((i + y) * fw + j + x);
                    let o = (y * q + x) * c3;
                    dst[o..o + c3].iter_mut().zip(src.iter()).for_each(|(d, s)| *d = *s);
                }
            }
        }
    }
    Ok(head_forward(params, &flat))
}

/// Logits of every window computed patch by patch.
pub fn sliding_window_logits<F: Real>(params: &NetParams<F>, vt: &ViewTensor) -> Result<Array2<F>> {
    let (nh, nw) = check_size(params, vt)?;
    let p = params.arch.patch;
    let c = vt.channels();
    let positions: Vec<(usize, usize)> = (0..nh).flat_map(|i| (0..nw).map(move |j| (i, j))).collect();
    let mut out = Array2::zeros((positions.len(), params.arch.n_labels));
    for (chunk_idx, chunk) in positions.chunks(64).enumerate() {
        let mut batch = Array4::zeros((chunk.len(), p, p, c));
        for (b, &pos) in chunk.iter().enumerate() {
            let patch = extract_patch(vt, pos, p)?;
            batch.index_axis_mut(ndarray::Axis(0), b).assign(&patch.data.mapv(|v| F::from_f64(v).unwrap()));
        }
        let (logits, _) = net_forward(params, &batch, Mode::Eval)?;
        out.slice_mut(ndarray::s![chunk_idx * 64..chunk_idx * 64 + chunk.len(), ..]).assign(&logits);
    }
    Ok(out)
}

/// Each window's label goes to the unit at its center; units closer to the
/// border than half a patch take the nearest window's label.
fn to_label_map<F: Real>(logits: &Array2<F>, windows: (usize, usize), units: (usize, usize), p: usize) -> LabelMap {
    let probs = softmax(logits);
    let (nh, nw) = windows;
    let half = p / 2;
    let mut labels = Array2::zeros(units);
    let mut confidence = Array2::zeros(units);
    for ((u, v), l) in labels.indexed_iter_mut() {
        let i = u.saturating_sub(half).min(nh - 1);
        let j = v.saturating_sub(half).min(nw - 1);
        let row = probs.row(i * nw + j);
        let best = row.iter().enumerate().fold(0, |b, (k, &x)| if x > row[b] { k } else { b });
        *l = best;
        confidence[[u, v]] = row[best].to_f64().unwrap();
    }
    LabelMap { labels, confidence }
}

/// Label map of a whole observation, sharing the conv computation between windows.
pub fn classify_full_image<F: Real>(params: &NetParams<F>, lf: &LightFieldImage) -> Result<LabelMap> {
    let vt = network_input(lf)?;
    let windows = check_size(params, &vt)?;
    let logits = shared_window_logits(params, &vt)?;
    Ok(to_label_map(&logits, windows, vt.units(), params.arch.patch))
}

/// Label map by evaluating every window independently.
pub fn classify_sliding_window<F: Real>(params: &NetParams<F>, lf: &LightFieldImage) -> Result<LabelMap> {
    let vt = network_input(lf)?;
    let windows = check_size(params, &vt)?;
    let logits = sliding_window_logits(params, &vt)?;
    Ok(to_label_map(&logits, windows, vt.units(), params.arch.patch))
}
