//! Three-layer valid-convolution classifier with batch normalization.
//!
//! Activations are channels-last matrices: row `(b * h + y) * w + x` holds
//! the channel vector of sample `b` at position `(y, x)`. Convolutions are
//! im2col followed by a matrix product; conv weights are `[c_out, 3*3*c_in]`
//! with the column index `(ky * 3 + kx) * c_in + c`.

use ndarray::{Array1, Array2, Array4, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Error, Result};
use crate::io::tensorfile::NamedTensor;

pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + std::fmt::Debug
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

fn real<F: Real>(v: f64) -> F {
    F::from_f64(v).unwrap()
}

const BN_EPS: f64 = 1e-5;
/// Weight of the old value in the running batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetArch {
    /// Patch side in units.
    pub patch: usize,
    pub in_channels: usize,
    /// Output channels of the three conv layers.
    pub widths: [usize; 3],
    pub hidden: usize,
    pub n_labels: usize,
}

impl NetArch {
    /// 10x10 patches of 888 channels, conv widths 128/256/384, 512 hidden units.
    pub fn reference(n_labels: usize) -> Self {
        NetArch { patch: 10, in_channels: 888, widths: [128, 256, 384], hidden: 512, n_labels }
    }

    /// 8x8 patches with narrow layers, trainable on one CPU core.
    pub fn desk(in_channels: usize, n_labels: usize) -> Self {
        NetArch { patch: 8, in_channels, widths: [32, 48, 64], hidden: 128, n_labels }
    }

    /// Side of the conv-stack output for one patch.
    pub fn feature_side(&self) -> usize {
        self.patch - 6
    }

    pub fn fc_inputs(&self) -> usize {
        self.feature_side().pow(2) * self.widths[2]
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.patch >= 7, || format!("patch size must be >= 7, got {}", self.patch))?;
        ensure(self.in_channels > 0 && self.hidden > 0 && self.widths.iter().all(|&w| w > 0), || {
            "layer sizes must be positive".into()
        })?;
        ensure(self.n_labels >= 2, || format!("need at least two labels, got {}", self.n_labels))
    }

    fn layer_channels(&self) -> [(usize, usize); 3] {
        let [c1, c2, c3] = self.widths;
        [(self.in_channels, c1), (c1, c2), (c2, c3)]
    }

    /// Conv multiply-accumulates for one `h x w` input.
    pub fn conv_macs(&self, h: usize, w: usize) -> u64 {
        self.layer_channels()
            .iter()
            .enumerate()
            .map(|(l, &(ci, co))| {
                let (oh, ow) = (h.saturating_sub(2 * l + 2), w.saturating_sub(2 * l + 2));
                (oh * ow * 9 * ci * co) as u64
            })
            .sum()
    }

    /// Conv multiply-accumulates of evaluating every `patch x patch` window separately.
    pub fn sliding_conv_macs(&self, h: usize, w: usize) -> u64 {
        let windows = (h + 1).saturating_sub(self.patch) * (w + 1).saturating_sub(self.patch);
        windows as u64 * self.conv_macs(self.patch, self.patch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn<F> {
    /// `[c_out, 9 * c_in]`
    pub weight: Array2<F>,
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    /// `[out, in]`
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<F> {
    pub arch: NetArch,
    pub convs: Vec<ConvBn<F>>,
    pub fc1: Dense<F>,
    pub fc2: Dense<F>,
}

/// Gradients of the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub conv_weight: Vec<Array2<F>>,
    pub gamma: Vec<Array1<F>>,
    pub beta: Vec<Array1<F>>,
    pub fc1: Dense<F>,
    pub fc2: Dense<F>,
}

impl<F: Real> NetParams<F> {
    /// All weights zero, batch norm at identity.
    pub fn zeros(arch: NetArch) -> Result<Self> {
        arch.validate()?;
        let convs = arch
            .layer_channels()
            .iter()
            .map(|&(ci, co)| ConvBn {
                weight: Array2::zeros((co, 9 * ci)),
                gamma: Array1::ones(co),
                beta: Array1::zeros(co),
                running_mean: Array1::zeros(co),
                running_var: Array1::ones(co),
            })
            .collect();
        Ok(NetParams {
            arch,
            convs,
            fc1: Dense { weight: Array2::zeros((arch.hidden, arch.fc_inputs())), bias: Array1::zeros(arch.hidden) },
            fc2: Dense { weight: Array2::zeros((arch.n_labels, arch.hidden)), bias: Array1::zeros(arch.n_labels) },
        })
    }

    /// He-normal weights drawn from a seeded generator; zero biases.
    pub fn init(arch: NetArch, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |w: &mut Array2<F>| {
            let fan_in = w.ncols() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
            w.iter_mut().for_each(|v| *v = real(normal.sample(&mut rng)));
        };
        for c in &mut p.convs {
            fill(&mut c.weight);
        }
        fill(&mut p.fc1.weight);
        fill(&mut p.fc2.weight);
        Ok(p)
    }

    pub fn cast<G: Real>(&self) -> NetParams<G> {
        let a1 = |a: &Array1<F>| a.mapv(|v| G::from_f64(v.to_f64().unwrap()).unwrap());
        let a2 = |a: &Array2<F>| a.mapv(|v| G::from_f64(v.to_f64().unwrap()).unwrap());
        NetParams {
            arch: self.arch,
            convs: self
                .convs
                .iter()
                .map(|c| ConvBn {
                    weight: a2(&c.weight),
                    gamma: a1(&c.gamma),
                    beta: a1(&c.beta),
                    running_mean: a1(&c.running_mean),
                    running_var: a1(&c.running_var),
                })
                .collect(),
            fc1: Dense { weight: a2(&self.fc1.weight), bias: a1(&self.fc1.bias) },
            fc2: Dense { weight: a2(&self.fc2.weight), bias: a1(&self.fc2.bias) },
        }
    }

    pub fn is_finite(&self) -> bool {
        let conv = self.convs.iter().all(|c| {
            [&c.gamma, &c.beta, &c.running_mean, &c.running_var].iter().all(|a| a.iter().all(|v| v.is_finite()))
                && c.weight.iter().all(|v| v.is_finite())
        });
        conv && [&self.fc1, &self.fc2].iter().all(|d| d.weight.iter().chain(d.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        let conv: usize = self.convs.iter().map(|c| c.weight.len() + 2 * c.gamma.len()).sum();
        conv + self.fc1.weight.len() + self.fc1.bias.len() + self.fc2.weight.len() + self.fc2.bias.len()
    }
}

impl NetParams<f32> {
    /// Named tensors in a fixed order; conv weights are shaped `[c_out, 3, 3, c_in]`.
    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        let v1 = |a: &Array1<f32>| a.to_vec();
        for (l, (c, &(ci, co))) in self.convs.iter().zip(self.arch.layer_channels().iter()).enumerate() {
            let i = l + 1;
            out.push(NamedTensor::new(
                format!("conv{i}.weight"),
                vec![co, 3, 3, ci],
                c.weight.iter().copied().collect(),
            ));
            out.push(NamedTensor::new(format!("bn{i}.gamma"), vec![co], v1(&c.gamma)));
            out.push(NamedTensor::new(format!("bn{i}.beta"), vec![co], v1(&c.beta)));
            out.push(NamedTensor::new(format!("bn{i}.running_mean"), vec![co], v1(&c.running_mean)));
            out.push(NamedTensor::new(format!("bn{i}.running_var"), vec![co], v1(&c.running_var)));
        }
        for (name, d) in [("fc1", &self.fc1), ("fc2", &self.fc2)] {
            let (o, i) = d.weight.dim();
            out.push(NamedTensor::new(format!("{name}.weight"), vec![o, i], d.weight.iter().copied().collect()));
            out.push(NamedTensor::new(format!("{name}.bias"), vec![o], v1(&d.bias)));
        }
        out
    }

    pub fn from_tensors(arch: NetArch, tensors: &[NamedTensor]) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let find = |name: &str, shape: &[usize]| -> Result<&[f32]> {
            let t = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Format { what: "model parameters", detail: format!("missing tensor {name}") })?;
            if t.shape != shape {
                return Err(Error::Format {
                    what: "model parameters",
                    detail: format!("{name} has shape {:?}, architecture needs {shape:?}", t.shape),
                });
            }
            Ok(&t.data)
        };
        let copy1 = |dst: &mut Array1<f32>, src: &[f32]| dst.iter_mut().zip(src).for_each(|(d, s)| *d = *s);
        let copy2 = |dst: &mut Array2<f32>, src: &[f32]| dst.iter_mut().zip(src).for_each(|(d, s)| *d = *s);
        for (l, &(ci, co)) in arch.layer_channels().iter().enumerate() {
            let i = l + 1;
            let c = &mut p.convs[l];
            copy2(&mut c.weight, find(&format!("conv{i}.weight"), &[co, 3, 3, ci])?);
            copy1(&mut c.gamma, find(&format!("bn{i}.gamma"), &[co])?);
            copy1(&mut c.beta, find(&format!("bn{i}.beta"), &[co])?);
            copy1(&mut c.running_mean, find(&format!("bn{i}.running_mean"), &[co])?);
            copy1(&mut c.running_var, find(&format!("bn{i}.running_var"), &[co])?);
        }
        for (name, d) in [("fc1", &mut p.fc1), ("fc2", &mut p.fc2)] {
            let (o, i) = d.weight.dim();
            copy2(&mut d.weight, find(&format!("{name}.weight"), &[o, i])?);
            copy1(&mut d.bias, find(&format!("{name}.bias"), &[o])?);
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; activations are cached for backprop.
    Train,
    /// Running statistics; nothing is cached.
    Eval,
}

/// Batch mean and biased variance of one conv layer.
pub type BatchStats<F> = (Array1<F>, Array1<F>);

type LayerTrace<F> = (ConvCache<F>, BatchStats<F>);

#[derive(Debug, Clone)]
struct ConvCache<F> {
    dims: (usize, usize, usize),
    cols: Array2<F>,
    xhat: Array2<F>,
    inv_std: Array1<F>,
    out: Array2<F>,
}

/// Activations and batch statistics of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    convs: Vec<ConvCache<F>>,
    pub batch_stats: Vec<BatchStats<F>>,
    flat: Array2<F>,
    hidden: Array2<F>,
}

/// `[n*h*w, c]` -> `[n*(h-2)*(w-2), 9c]`
fn im2col<F: Real>(x: &ArrayView2<F>, n: usize, h: usize, w: usize) -> Array2<F> {
    let c = x.ncols();
    let (oh, ow) = (h - 2, w - 2);
    let mut cols = Array2::zeros((n * oh * ow, 9 * c));
    for b in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                let mut row = cols.row_mut((b * oh + y) * ow + xx);
                let dst = row.as_slice_mut().unwrap();
                for ky in 0..3 {
                    for kx in 0..3 {
                        let src = x.row((b * h + y + ky) * w + xx + kx);
                        let o = (ky * 3 + kx) * c;
                        for (d, s) in dst[o..o + c].iter_mut().zip(src.iter()) {
                            *d = *s;
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<F: Real>(dcols: &Array2<F>, n: usize, h: usize, w: usize, c: usize) -> Array2<F> {
    let (oh, ow) = (h - 2, w - 2);
    let mut dx = Array2::zeros((n * h * w, c));
    for b in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                let src = dcols.row((b * oh + y) * ow + xx);
                for ky in 0..3 {
                    for kx in 0..3 {
                        let mut dst = dx.row_mut((b * h + y + ky) * w + xx + kx);
                        let o = (ky * 3 + kx) * c;
                        for (d, s) in dst.iter_mut().zip(src.iter().skip(o).take(c)) {
                            *d += *s;
                        }
                    }
                }
            }
        }
    }
    dx
}

fn conv_bn_relu<F: Real>(
    layer: &ConvBn<F>,
    x: &ArrayView2<F>,
    dims: (usize, usize, usize),
    mode: Mode,
) -> (Array2<F>, Option<LayerTrace<F>>) {
    let (n, h, w) = dims;
    let cols = im2col(x, n, h, w);
    let z = cols.dot(&layer.weight.t());
    let eps = real::<F>(BN_EPS);
    match mode {
        Mode::Eval => {
            let scale = &layer.gamma / &(&layer.running_var + eps).mapv(F::sqrt);
            let shift = &layer.beta - &(&layer.running_mean * &scale);
            let mut out = z;
            for mut row in out.rows_mut() {
                for ((v, s), t) in row.iter_mut().zip(scale.iter()).zip(shift.iter()) {
                    *v = (*v * *s + *t).max(F::zero());
                }
            }
            (out, None)
        }
        Mode::Train => {
            let m = real::<F>(z.nrows() as f64);
            let mean = z.sum_axis(Axis(0)) / m;
            let mut xhat = z;
            xhat -= &mean;
            let var = xhat.mapv(|v| v * v).sum_axis(Axis(0)) / m;
            let inv_std = (&var + eps).mapv(|v| F::one() / v.sqrt());
            xhat *= &inv_std;
            let mut out = &xhat * &layer.gamma;
            out += &layer.beta;
            out.mapv_inplace(|v| v.max(F::zero()));
            let cache = ConvCache { dims, cols, xhat, inv_std, out: out.clone() };
            (out, Some((cache, (mean, var))))
        }
    }
}

/// Runs the conv stack on `n` inputs of `h x w` positions; returns
/// `[n*(h-6)*(w-6), c3]` features.
fn conv_stack<F: Real>(
    params: &NetParams<F>,
    x: ArrayView2<F>,
    dims: (usize, usize, usize),
    mode: Mode,
) -> (Array2<F>, Vec<ConvCache<F>>, Vec<BatchStats<F>>) {
    let (n, mut h, mut w) = dims;
    let mut caches = Vec::new();
    let mut stats = Vec::new();
    let mut cur: Option<Array2<F>> = None;
    for layer in &params.convs {
        let input = match &cur {
            Some(a) => a.view(),
            None => x.view(),
        };
        let (out, cache) = conv_bn_relu(layer, &input, (n, h, w), mode);
        if let Some((c, s)) = cache {
            caches.push(c);
            stats.push(s);
        }
        cur = Some(out);
        h -= 2;
        w -= 2;
    }
    (cur.unwrap(), caches, stats)
}

/// Conv features of a whole `h x w` view tensor (evaluation mode).
pub fn conv_features<F: Real>(params: &NetParams<F>, x: ArrayView2<F>, h: usize, w: usize) -> Result<Array2<F>> {
    let a = &params.arch;
    ensure(h >= a.patch && w >= a.patch, || format!("{h}x{w} input is smaller than a {0}x{0} patch", a.patch))?;
    ensure(x.dim() == (h * w, a.in_channels), || {
        format!("input has shape {:?}, expected ({}, {})", x.dim(), h * w, a.in_channels)
    })?;
    Ok(conv_stack(params, x, (1, h, w), Mode::Eval).0)
}

fn dense_forward<F: Real>(d: &Dense<F>, x: &Array2<F>) -> Array2<F> {
    let mut y = x.dot(&d.weight.t());
    y += &d.bias;
    y
}

/// Fully connected head on flattened `[n, (p-6)^2 * c3]` features.
pub fn head_forward<F: Real>(params: &NetParams<F>, flat: &Array2<F>) -> Array2<F> {
    let mut hidden = dense_forward(&params.fc1, flat);
    hidden.mapv_inplace(|v| v.max(F::zero()));
    dense_forward(&params.fc2, &hidden)
}

/// Logits `[n, L]` of a batch `[n, p, p, C]`; in training mode also the cache for backprop.
pub fn net_forward<F: Real>(
    params: &NetParams<F>,
    batch: &Array4<F>,
    mode: Mode,
) -> Result<(Array2<F>, Option<ForwardCache<F>>)> {
    let a = &params.arch;
    let (n, h, w, c) = batch.dim();
    if h != a.patch || w != a.patch || c != a.in_channels || n == 0 {
        return Err(invalid(format!(
            "batch shape {:?} does not match [n, {}, {}, {}]",
            batch.dim(),
            a.patch,
            a.patch,
            a.in_channels
        )));
    }
    let std_batch = batch.as_standard_layout();
    let x = std_batch.view().into_shape_with_order((n * h * w, c)).unwrap();
    let (features, convs, batch_stats) = conv_stack(params, x, (n, h, w), mode);
    let flat = features.into_shape_with_order((n, a.fc_inputs())).unwrap();
    match mode {
        Mode::Eval => Ok((head_forward(params, &flat), None)),
        Mode::Train => {
            let mut hidden = dense_forward(&params.fc1, &flat);
            hidden.mapv_inplace(|v| v.max(F::zero()));
            let logits = dense_forward(&params.fc2, &hidden);
            Ok((logits, Some(ForwardCache { convs, batch_stats, flat, hidden })))
        }
    }
}

/// Backpropagates `dlogits` through a training-mode forward pass.
pub fn net_backward<F: Real>(params: &NetParams<F>, cache: &ForwardCache<F>, dlogits: &Array2<F>) -> Grads<F> {
    let fc2 = Dense { weight: dlogits.t().dot(&cache.hidden), bias: dlogits.sum_axis(Axis(0)) };
    let mut dhidden = dlogits.dot(&params.fc2.weight);
    dhidden.zip_mut_with(&cache.hidden, |d, &hv| {
        if hv <= F::zero() {
            *d = F::zero();
        }
    });
    let fc1 = Dense { weight: dhidden.t().dot(&cache.flat), bias: dhidden.sum_axis(Axis(0)) };
    let dflat = dhidden.dot(&params.fc1.weight);
    let c3 = params.arch.widths[2];
    let mut dout = dflat.into_shape_with_order((dhidden.nrows() * params.arch.feature_side().pow(2), c3)).unwrap();

    let nl = params.convs.len();
    let mut conv_weight = vec![Array2::zeros((0, 0)); nl];
    let mut gamma = vec![Array1::zeros(0); nl];
    let mut beta = vec![Array1::zeros(0); nl];
    for l in (0..nl).rev() {
        let layer = &params.convs[l];
        let cc = &cache.convs[l];
        let mut dy = dout;
        dy.zip_mut_with(&cc.out, |d, &o| {
            if o <= F::zero() {
                *d = F::zero();
            }
        });
        gamma[l] = (&dy * &cc.xhat).sum_axis(Axis(0));
        beta[l] = dy.sum_axis(Axis(0));
        let m = real::<F>(dy.nrows() as f64);
        // dz = inv_std / m * (m * dxhat - sum dxhat - xhat * sum(dxhat * xhat))
        let dxhat = &dy * &layer.gamma;
        let s1 = &beta[l] * &layer.gamma;
        let s2 = &gamma[l] * &layer.gamma;
        let mut dz = dxhat * m;
        dz -= &s1;
        dz -= &(&cc.xhat * &s2);
        dz *= &(&cc.inv_std / m);
        conv_weight[l] = dz.t().dot(&cc.cols);
        if l > 0 {
            let dcols = dz.dot(&layer.weight);
            let (n, h, w) = cc.dims;
            dout = col2im(&dcols, n, h, w, layer.weight.ncols() / 9);
        } else {
            dout = Array2::zeros((0, 0));
        }
    }
    Grads { conv_weight, gamma, beta, fc1, fc2 }
}

/// Row-wise softmax.
pub fn softmax<F: Real>(logits: &Array2<F>) -> Array2<F> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let mx = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Mean cross-entropy of `labels` under `softmax(logits)` and its gradient in the logits.
pub fn softmax_cross_entropy<F: Real>(logits: &Array2<F>, labels: &[usize]) -> (F, Array2<F>) {
    let n = real::<F>(labels.len() as f64);
    let mut p = softmax(logits);
    let mut loss = F::zero();
    for (mut row, &y) in p.rows_mut().into_iter().zip(labels) {
        // `max` would swallow a NaN probability
        let py = row[y];
        loss -= if py.is_nan() { py } else { py.max(F::min_positive_value()).ln() };
        row[y] -= F::one();
        row.mapv_inplace(|v| v / n);
    }
    (loss / n, p)
}

/// Folds batch statistics into the running averages.
pub fn update_running_stats<F: Real>(params: &mut NetParams<F>, stats: &[BatchStats<F>]) {
    let mo = real::<F>(BN_MOMENTUM);
    let one = F::one() - mo;
    for (layer, (mean, var)) in params.convs.iter_mut().zip(stats) {
        layer.running_mean.zip_mut_with(mean, |r, &b| *r = mo * *r + one * b);
        layer.running_var.zip_mut_with(var, |r, &b| *r = mo * *r + one * b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_arch() -> NetArch {
        NetArch { patch: 7, in_channels: 3, widths: [4, 5, 6], hidden: 7, n_labels: 4 }
    }

    fn random_batch(n: usize, arch: &NetArch, seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn((n, arch.patch, arch.patch, arch.in_channels), |_| rng.random::<f64>())
    }

    #[test]
    fn reference_shapes() {
        let arch = NetArch::reference(45);
        assert_eq!(arch.feature_side(), 4);
        assert_eq!(arch.fc_inputs(), 4 * 4 * 384);
        let mut small = arch;
        small.in_channels = 5;
        small.widths = [3, 3, 384];
        small.hidden = 4;
        let p = NetParams::<f64>::init(small, 0).unwrap();
        let x = Array4::from_elem((1, 10, 10, 5), 0.5);
        let xs = x.view().into_shape_with_order((100, 5)).unwrap();
        let f = conv_features(&p, xs, 10, 10).unwrap();
        assert_eq!(f.dim(), (16, 384));
    }

    #[test]
    fn shape_algebra() {
        for p in 7..12 {
            let arch = NetArch { patch: p, ..tiny_arch() };
            let params = NetParams::<f64>::init(arch, 1).unwrap();
            let x = Array2::from_elem((p * p, 3), 1.0);
            assert_eq!(conv_features(&params, x.view(), p, p).unwrap().nrows(), (p - 6) * (p - 6));
        }
        assert!(NetArch { patch: 6, ..tiny_arch() }.validate().is_err());
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let params = NetParams::<f64>::zeros(tiny_arch()).unwrap();
        for seed in 0..3 {
            let (logits, _) = net_forward(&params, &random_batch(2, &tiny_arch(), seed), Mode::Eval).unwrap();
            assert!(logits.iter().all(|&v| v == 0.0));
            let p = softmax(&logits);
            assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = Array2::from_shape_fn((6, 9), |_| rng.random_range(-30.0..30.0));
        for row in softmax(&l).rows() {
            assert!((row.sum() - 1.0f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_shapes() {
        let params = NetParams::<f64>::zeros(tiny_arch()).unwrap();
        let x = Array4::zeros((1, 8, 7, 3));
        assert!(net_forward(&params, &x, Mode::Eval).is_err());
    }

    fn loss_of(params: &NetParams<f64>, x: &Array4<f64>, y: &[usize]) -> f64 {
        let (logits, _) = net_forward(params, x, Mode::Train).unwrap();
        softmax_cross_entropy(&logits, y).0
    }

    #[test]
    fn gradients_match_finite_differences() {
        let arch = tiny_arch();
        let params = NetParams::<f64>::init(arch, 3).unwrap();
        let x = random_batch(2, &arch, 5);
        let y = [1usize, 3];
        let (logits, cache) = net_forward(&params, &x, Mode::Train).unwrap();
        let (_, dl) = softmax_cross_entropy(&logits, &y);
        let g = net_backward(&params, &cache.unwrap(), &dl);
        let h = 1e-6;
        let check = |analytic: f64, perturb: &dyn Fn(&mut NetParams<f64>, f64)| {
            let mut p = params.clone();
            perturb(&mut p, h);
            let up = loss_of(&p, &x, &y);
            let mut p = params.clone();
            perturb(&mut p, -h);
            let dn = loss_of(&p, &x, &y);
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - analytic).abs() <= 1e-6 * fd.abs().max(1e-2), "fd {fd} vs {analytic}");
        };
        for l in 0..3 {
            for idx in [0usize, 7, 13] {
                let (r, c) = (idx % g.conv_weight[l].nrows(), (idx * 5) % g.conv_weight[l].ncols());
                check(g.conv_weight[l][[r, c]], &|p, d| p.convs[l].weight[[r, c]] += d);
            }
            check(g.gamma[l][1], &|p, d| p.convs[l].gamma[1] += d);
            check(g.beta[l][2], &|p, d| p.convs[l].beta[2] += d);
        }
        for (r, c) in [(0, 0), (3, 5), (6, 2)] {
            check(g.fc1.weight[[r, c]], &|p, d| p.fc1.weight[[r, c]] += d);
        }
        check(g.fc1.bias[2], &|p, d| p.fc1.bias[2] += d);
        check(g.fc2.weight[[1, 4]], &|p, d| p.fc2.weight[[1, 4]] += d);
        check(g.fc2.bias[3], &|p, d| p.fc2.bias[3] += d);
    }

    #[test]
    fn tensor_round_trip() {
        let p = NetParams::<f32>::init(tiny_arch(), 9).unwrap();
        let back = NetParams::<f32>::from_tensors(tiny_arch(), &p.to_tensors()).unwrap();
        assert_eq!(back, p);
        let other = NetArch { hidden: 8, ..tiny_arch() };
        assert!(NetParams::<f32>::from_tensors(other, &p.to_tensors()).is_err());
    }

    #[test]
    fn mac_counts() {
        let arch = NetArch::reference(45);
        let ratio = arch.sliding_conv_macs(400, 400) as f64 / arch.conv_macs(400, 400) as f64;
        assert!(ratio >= 25.0, "{ratio}");
    }
}
