//! Linear operators of the two-layer imaging model.

use std::ops::Range;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure, invalid, Result};
use crate::lightfield::LightFieldImage;
use crate::optics::{build_psf_bank, CameraConfig, PsfKernelBank};

/// Transmitted and reflected layer radiances at texture resolution, with their depths (m).
#[derive(Debug, Clone, PartialEq)]
pub struct TextureVolume {
    pub layer_t: Array2<f64>,
    pub layer_r: Array2<f64>,
    pub depth_t: f64,
    pub depth_r: f64,
}

impl TextureVolume {
    pub fn new(layer_t: Array2<f64>, layer_r: Array2<f64>, depth_t: f64, depth_r: f64) -> Result<Self> {
        ensure(layer_t.dim() == layer_r.dim(), || {
            format!("layer shapes differ: {:?} vs {:?}", layer_t.dim(), layer_r.dim())
        })?;
        ensure(layer_t.iter().chain(layer_r.iter()).all(|v| v.is_finite() && *v >= 0.0), || {
            "layer radiances must be finite and non-negative".into()
        })?;
        let active = |l: &Array2<f64>| l.iter().any(|&v| v != 0.0);
        ensure(!(active(&layer_t) && active(&layer_r)) || depth_t != depth_r, || {
            format!("both layers are active at the same depth {depth_t} m")
        })?;
        Ok(TextureVolume { layer_t, layer_r, depth_t, depth_r })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.layer_t.dim()
    }
}

/// Uniform blur kernel: odd square, non-negative, unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    weights: Array2<f64>,
}

impl BlurKernel {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let (h, w) = weights.dim();
        ensure(h == w && h % 2 == 1, || format!("blur kernel must be odd and square, got {h}x{w}"))?;
        ensure(weights.iter().all(|v| v.is_finite() && *v >= 0.0), || "blur weights must be non-negative".into())?;
        let sum = weights.sum();
        ensure((sum - 1.0).abs() < 1e-9, || format!("blur weights sum to {sum}, expected 1"))?;
        Ok(BlurKernel { weights })
    }

    pub fn delta(k: usize) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        let mut w = Array2::zeros((k, k));
        w[[k / 2, k / 2]] = 1.0;
        BlurKernel { weights: w }
    }

    pub fn boxcar(k: usize) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        BlurKernel { weights: Array2::from_elem((k, k), 1.0 / (k * k) as f64) }
    }

    /// Straight-line motion of length `k` pixels through the center at `angle_deg`.
    pub fn linear_motion(k: usize, angle_deg: f64) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        let half = (k / 2) as f64;
        let mut w = Array2::<f64>::zeros((k, k));
        let n = 8 * k;
        for i in 0..=n {
            let t = -half + 2.0 * half * i as f64 / n as f64;
            let r = (half - t * sin).round() as usize;
            let c = (half + t * cos).round() as usize;
            w[[r.min(k - 1), c.min(k - 1)]] += 1.0;
        }
        let s = w.sum();
        w.mapv_inplace(|v| v / s);
        BlurKernel { weights: w }
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// L1 distance between two kernels of the same size.
    pub fn l1_distance(&self, other: &BlurKernel) -> f64 {
        self.weights.iter().zip(other.weights.iter()).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Output cell indices `k` with `k * cell + d` inside `0..size`, capped at `n`.
fn valid_cells(d: i64, cell: usize, n: usize, size: usize) -> Range<usize> {
    let cell = cell as i64;
    let lo = if d >= 0 { 0 } else { (-d + cell - 1) / cell };
    let hi = (size as i64 - 1 - d).div_euclid(cell) + 1;
    let hi = hi.clamp(0, n as i64) as usize;
    (lo.max(0) as usize).min(hi)..hi
}

fn check_texture(bank: &PsfKernelBank, texture: &Array2<f64>) -> Result<()> {
    let expected = bank.texture_size();
    if texture.dim() != expected {
        return Err(invalid(format!("texture is {:?}, bank expects {:?}", texture.dim(), expected)));
    }
    Ok(())
}

/// Sensor image `H_d f` of a texture on the plane at the bank's depth.
///
/// Each phase sub-lattice of the texture is spread by its own kernel with a
/// stride of one unit cell.
pub fn apply_psf(bank: &PsfKernelBank, texture: &Array2<f64>) -> Result<Array2<f64>> {
    check_texture(bank, texture)?;
    let (sh, sw) = bank.sensor_size();
    let (uh, uw) = bank.unit_cell();
    let (per_r, per_c) = bank.period();
    let (nh, nw) = bank.units();
    let tex = texture.as_standard_layout();
    let tex = tex.as_slice().unwrap();
    let tw = nw * per_c;
    let mut out = vec![0.0; sh * sw];
    for (idx, taps) in bank.taps().iter().enumerate() {
        let (pr, pc) = (idx / per_c, idx % per_c);
        for t in taps {
            let rows = valid_cells(t.dr, uh, nh, sh);
            let cols = valid_cells(t.dc, uw, nw, sw);
            for kr in rows {
                let out_row = ((kr * uh) as i64 + t.dr) as usize * sw;
                let in_row = (kr * per_r + pr) * tw;
                for kc in cols.clone() {
                    let oc = ((kc * uw) as i64 + t.dc) as usize;
                    out[out_row + oc] += t.w * tex[in_row + kc * per_c + pc];
                }
            }
        }
    }
    Ok(Array2::from_shape_vec((sh, sw), out).unwrap())
}

/// `H_d^T l`: exact adjoint of [`apply_psf`].
pub fn apply_psf_adjoint(bank: &PsfKernelBank, image: &Array2<f64>) -> Result<Array2<f64>> {
    let (sh, sw) = bank.sensor_size();
    if image.dim() != (sh, sw) {
        return Err(invalid(format!("image is {:?}, bank expects {:?}", image.dim(), (sh, sw))));
    }
    let (uh, uw) = bank.unit_cell();
    let (per_r, per_c) = bank.period();
    let (nh, nw) = bank.units();
    let (th, tw) = bank.texture_size();
    let img = image.as_standard_layout();
    let img = img.as_slice().unwrap();
    let mut out = vec![0.0; th * tw];
    for (idx, taps) in bank.taps().iter().enumerate() {
        let (pr, pc) = (idx / per_c, idx % per_c);
        for t in taps {
            let rows = valid_cells(t.dr, uh, nh, sh);
            let cols = valid_cells(t.dc, uw, nw, sw);
            for kr in rows {
                let img_row = ((kr * uh) as i64 + t.dr) as usize * sw;
                let out_row = (kr * per_r + pr) * tw;
                for kc in cols.clone() {
                    let ic = ((kc * uw) as i64 + t.dc) as usize;
                    out[out_row + kc * per_c + pc] += t.w * img[img_row + ic];
                }
            }
        }
    }
    Ok(Array2::from_shape_vec((th, tw), out).unwrap())
}

fn check_bank_depth(bank: &PsfKernelBank, depth: f64, which: &str) -> Result<()> {
    ensure((bank.depth() - depth).abs() <= 1e-12 * depth.abs().max(1.0), || {
        format!("{which} bank is for depth {} m but the layer sits at {depth} m", bank.depth())
    })
}

/// `l = H_{d_t} f_t + H_{d_r} f_r`.
pub fn forward_model(vol: &TextureVolume, bank_t: &PsfKernelBank, bank_r: &PsfKernelBank) -> Result<Array2<f64>> {
    check_bank_depth(bank_t, vol.depth_t, "transmitted")?;
    check_bank_depth(bank_r, vol.depth_r, "reflected")?;
    let mut l = apply_psf(bank_t, &vol.layer_t)?;
    l += &apply_psf(bank_r, &vol.layer_r)?;
    Ok(l)
}

fn check_blur(texture: &Array2<f64>, k: usize) -> Result<()> {
    let (h, w) = texture.dim();
    ensure(k <= h && k <= w, || format!("{k}x{k} kernel larger than {h}x{w} texture"))
}

/// Circular convolution, kernel centered: `out[i,j] = sum m[a,b] u[i-a+c, j-b+c]`, `c = k/2`.
pub fn blur_texture(texture: &Array2<f64>, m: &BlurKernel) -> Result<Array2<f64>> {
    let k = m.size();
    check_blur(texture, k)?;
    let (h, w) = texture.dim();
    let c = (k / 2) as isize;
    let mut out = Array2::zeros((h, w));
    for ((a, b), &wgt) in m.weights().indexed_iter() {
        if wgt == 0.0 {
            continue;
        }
        let dr = (c - a as isize).rem_euclid(h as isize) as usize;
        let dc = (c - b as isize).rem_euclid(w as isize) as usize;
        for i in 0..h {
            let si = (i + dr) % h;
            for j in 0..w {
                out[[i, j]] += wgt * texture[[si, (j + dc) % w]];
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`blur_texture`] in its texture argument (circular correlation).
pub fn blur_texture_adjoint(image: &Array2<f64>, m: &BlurKernel) -> Result<Array2<f64>> {
    let k = m.size();
    check_blur(image, k)?;
    let (h, w) = image.dim();
    let c = (k / 2) as isize;
    let mut out = Array2::zeros((h, w));
    for ((a, b), &wgt) in m.weights().indexed_iter() {
        if wgt == 0.0 {
            continue;
        }
        let dr = (a as isize - c).rem_euclid(h as isize) as usize;
        let dc = (b as isize - c).rem_euclid(w as isize) as usize;
        for i in 0..h {
            let si = (i + dr) % h;
            for j in 0..w {
                out[[i, j]] += wgt * image[[si, (j + dc) % w]];
            }
        }
    }
    Ok(out)
}

/// Gradient of `<weights, blur_texture(texture, m)>` with respect to the `k x k` entries of `m`.
pub fn blur_kernel_gradient(weights: &Array2<f64>, texture: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
    check_blur(texture, k)?;
    ensure(weights.dim() == texture.dim(), || "weights and texture shapes differ".into())?;
    let (h, w) = texture.dim();
    let c = (k / 2) as isize;
    let mut g = Array2::zeros((k, k));
    for a in 0..k {
        let dr = (c - a as isize).rem_euclid(h as isize) as usize;
        for b in 0..k {
            let dc = (c - b as isize).rem_euclid(w as isize) as usize;
            let mut acc = 0.0;
            for i in 0..h {
                let si = (i + dr) % h;
                for j in 0..w {
                    acc += weights[[i, j]] * texture[[si, (j + dc) % w]];
                }
            }
            g[[a, b]] = acc;
        }
    }
    Ok(g)
}

/// Renders a (optionally motion-blurred) two-layer scene through the camera
/// and adds seeded i.i.d. Gaussian noise, clamping at zero.
pub fn simulate_observation(
    vol: &TextureVolume,
    cfg: &CameraConfig,
    blur_t: Option<&BlurKernel>,
    blur_r: Option<&BlurKernel>,
    noise_sigma: f64,
    seed: u64,
) -> Result<LightFieldImage> {
    let bank_t = build_psf_bank(cfg, vol.depth_t)?;
    let bank_r = build_psf_bank(cfg, vol.depth_r)?;
    simulate_with_banks(vol, cfg, &bank_t, &bank_r, blur_t, blur_r, noise_sigma, seed)
}

/// [`simulate_observation`] with precomputed banks.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with_banks(
    vol: &TextureVolume,
    cfg: &CameraConfig,
    bank_t: &PsfKernelBank,
    bank_r: &PsfKernelBank,
    blur_t: Option<&BlurKernel>,
    blur_r: Option<&BlurKernel>,
    noise_sigma: f64,
    seed: u64,
) -> Result<LightFieldImage> {
    ensure(noise_sigma >= 0.0 && noise_sigma.is_finite(), || format!("noise sigma must be >= 0, got {noise_sigma}"))?;
    ensure(vol.dim() == cfg.texture_size(), || {
        format!("texture {:?} does not match camera texture size {:?}", vol.dim(), cfg.texture_size())
    })?;
    let layer_t = match blur_t {
        Some(m) => blur_texture(&vol.layer_t, m)?,
        None => vol.layer_t.clone(),
    };
    let layer_r = match blur_r {
        Some(m) => blur_texture(&vol.layer_r, m)?,
        None => vol.layer_r.clone(),
    };
    let blurred = TextureVolume { layer_t, layer_r, depth_t: vol.depth_t, depth_r: vol.depth_r };
    let mut l = forward_model(&blurred, bank_t, bank_r)?;
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).unwrap();
        l.mapv_inplace(|v| (v + normal.sample(&mut rng)).max(0.0));
    }
    LightFieldImage::gray(l, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_cells_bounds() {
        // cell 12, 3 cells, 36 px: offset -5 excludes cell 0
        assert_eq!(valid_cells(-5, 12, 3, 36), 1..3);
        assert_eq!(valid_cells(0, 12, 3, 36), 0..3);
        assert_eq!(valid_cells(13, 12, 3, 36), 0..2);
        assert_eq!(valid_cells(40, 12, 3, 36), 0..0);
        assert_eq!(valid_cells(-40, 12, 3, 36), 3..3);
    }

    #[test]
    fn zero_texture_zero_image() {
        let cfg = CameraConfig::desk();
        let bank = build_psf_bank(&cfg, 0.65).unwrap();
        let img = apply_psf(&bank, &Array2::zeros(cfg.texture_size())).unwrap();
        assert!(img.iter().all(|&v| v == 0.0));
        let back = apply_psf_adjoint(&bank, &Array2::zeros(cfg.sensor_size)).unwrap();
        assert!(back.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cfg = CameraConfig::desk();
        let bank = build_psf_bank(&cfg, 0.65).unwrap();
        assert!(apply_psf(&bank, &Array2::zeros((10, 10))).is_err());
        assert!(apply_psf_adjoint(&bank, &Array2::zeros((10, 10))).is_err());
    }

    #[test]
    fn delta_texture_gives_column() {
        let cfg = CameraConfig::desk();
        let bank = build_psf_bank(&cfg, 1.4).unwrap();
        let mut f = Array2::zeros(cfg.texture_size());
        f[[13, 22]] = 1.0;
        assert_eq!(apply_psf(&bank, &f).unwrap(), bank.dense_column((13, 22)).unwrap());
    }

    #[test]
    fn blur_identity_and_constant() {
        let u = Array2::from_shape_fn((9, 11), |(i, j)| (i * 11 + j) as f64);
        assert_eq!(blur_texture(&u, &BlurKernel::delta(5)).unwrap(), u);
        let c = Array2::from_elem((9, 11), 0.7);
        let out = blur_texture(&c, &BlurKernel::boxcar(5)).unwrap();
        assert!(out.iter().all(|v| (v - 0.7).abs() < 1e-15));
        assert!(blur_texture(&Array2::zeros((3, 3)), &BlurKernel::boxcar(5)).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(BlurKernel::new(Array2::from_elem((2, 2), 0.25)).is_err());
        assert!(BlurKernel::new(Array2::from_elem((3, 3), 0.2)).is_err());
        let m = BlurKernel::linear_motion(5, 30.0);
        assert!((m.weights().sum() - 1.0).abs() < 1e-12);
        assert!(BlurKernel::new(m.weights().clone()).is_ok());
    }

    #[test]
    fn volume_rejects_same_depth_layers() {
        let a = Array2::from_elem((6, 6), 1.0);
        assert!(TextureVolume::new(a.clone(), a.clone(), 0.8, 0.8).is_err());
        assert!(TextureVolume::new(a.clone(), Array2::zeros((6, 6)), 0.8, 0.8).is_ok());
        assert!(TextureVolume::new(a, Array2::zeros((5, 6)), 0.8, 1.0).is_err());
    }

    #[test]
    fn forward_checks_bank_depths() {
        let cfg = CameraConfig::desk();
        let bt = build_psf_bank(&cfg, 0.35).unwrap();
        let br = build_psf_bank(&cfg, 1.7).unwrap();
        let t = Array2::from_elem(cfg.texture_size(), 0.5);
        let vol = TextureVolume::new(t.clone(), t, 0.35, 1.7).unwrap();
        assert!(forward_model(&vol, &bt, &br).is_ok());
        assert!(forward_model(&vol, &br, &bt).is_err());
    }
}
