use std::path::Path;

use ndarray::{Array2, Array4, ArrayView4};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, LabelSet};
use crate::error::{ensure, Error, Result};
use crate::io::tensorfile::{read_tensors, write_tensors, NamedTensor};
use crate::lightfield::{extract_patch, rearrange_views, LightFieldImage, ViewTensor};
use crate::operators::apply_psf;
use crate::optics::{build_psf_bank, CameraConfig, PsfKernelBank};

/// View tensor of an observation scaled to unit mean, as fed to the network.
pub fn network_input(lf: &LightFieldImage) -> Result<ViewTensor> {
    let mut vt = rearrange_views(lf)?;
    let mean = vt.data.mean().unwrap_or(0.0);
    if mean > 0.0 {
        vt.data.mapv_inplace(|v| v / mean);
    }
    Ok(vt)
}

/// Noiseless mosaic of one label: `textures.0` at the first (nearer) depth,
/// `textures.1` at the second for pairs, each scaled by its gain.
pub fn render_label(
    cfg: &CameraConfig,
    banks: &[PsfKernelBank],
    label: Label,
    textures: (&Array2<f64>, &Array2<f64>),
    gains: (f64, f64),
) -> Result<LightFieldImage> {
    let mut l = match label {
        Label::Single(i) | Label::Pair(i, _) => apply_psf(&banks[i], textures.0)?,
    };
    if gains.0 != 1.0 {
        l.mapv_inplace(|v| v * gains.0);
    }
    if let Label::Pair(_, j) = label {
        l.scaled_add(gains.1, &apply_psf(&banks[j], textures.1)?);
    }
    LightFieldImage::gray(l, cfg)
}

/// Labeled `[n, p, p, C]` patch tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub patch: usize,
    pub channels: usize,
    /// Row-major `[n, p, p, C]`.
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
    pub n_labels: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn patch_len(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    pub fn patches(&self) -> ArrayView4<'_, f32> {
        ArrayView4::from_shape((self.len(), self.patch, self.patch, self.channels), &self.data).unwrap()
    }

    /// Gathers the given samples into a batch.
    pub fn batch(&self, indices: &[usize]) -> (Array4<f32>, Vec<usize>) {
        let pl = self.patch_len();
        let mut data = Vec::with_capacity(indices.len() * pl);
        for &i in indices {
            data.extend_from_slice(&self.data[i * pl..(i + 1) * pl]);
        }
        let x = Array4::from_shape_vec((indices.len(), self.patch, self.patch, self.channels), data).unwrap();
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let (x, labels) = self.batch(indices);
        Dataset {
            patch: self.patch,
            channels: self.channels,
            data: x.into_raw_vec_and_offset().0,
            labels,
            n_labels: self.n_labels,
        }
    }

    pub fn count_per_label(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_labels];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// One `label_XXX.plnt` shard per label plus a `labels.toml` index.
    pub fn save(&self, dir: &Path, label_set: &LabelSet) -> Result<()> {
        ensure(label_set.len() == self.n_labels, || "label set does not match the dataset".into())?;
        std::fs::create_dir_all(dir)?;
        let pl = self.patch_len();
        let mut shards = Vec::new();
        for k in 0..self.n_labels {
            let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == k).collect();
            let mut data = Vec::with_capacity(idx.len() * pl);
            for &i in &idx {
                data.extend_from_slice(&self.data[i * pl..(i + 1) * pl]);
            }
            let file = format!("label_{k:03}.plnt");
            let t = NamedTensor::new("patches", vec![idx.len(), self.patch, self.patch, self.channels], data);
            write_tensors(&dir.join(&file), &[t])?;
            shards.push(Shard { label: k, name: label_set.get(k).to_string(), count: idx.len(), file });
        }
        let m = DatasetManifest {
            schema_version: DATASET_SCHEMA,
            patch: self.patch,
            channels: self.channels,
            label_set: label_set.clone(),
            shards,
        };
        let text = toml::to_string(&m).map_err(|e| Error::Format { what: "dataset index", detail: e.to_string() })?;
        std::fs::write(dir.join("labels.toml"), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Dataset, LabelSet)> {
        let text = std::fs::read_to_string(dir.join("labels.toml"))?;
        let m: DatasetManifest =
            toml::from_str(&text).map_err(|e| Error::Format { what: "dataset index", detail: e.to_string() })?;
        if m.schema_version != DATASET_SCHEMA {
            return Err(Error::Format {
                what: "dataset index",
                detail: format!("unsupported schema {}", m.schema_version),
            });
        }
        m.label_set.validate()?;
        let mut ds = Dataset {
            patch: m.patch,
            channels: m.channels,
            data: Vec::new(),
            labels: Vec::new(),
            n_labels: m.label_set.len(),
        };
        for s in &m.shards {
            let ts = read_tensors(&dir.join(&s.file))?;
            let t = ts.into_iter().find(|t| t.name == "patches").ok_or_else(|| Error::Format {
                what: "dataset shard",
                detail: format!("{} has no patches tensor", s.file),
            })?;
            if t.shape != [s.count, m.patch, m.patch, m.channels] || s.label >= ds.n_labels {
                return Err(Error::Format {
                    what: "dataset shard",
                    detail: format!("{} does not match the index", s.file),
                });
            }
            ds.data.extend_from_slice(&t.data);
            ds.labels.extend(std::iter::repeat_n(s.label, s.count));
        }
        Ok((ds, m.label_set))
    }
}

const DATASET_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub patch: usize,
    pub channels: usize,
    pub label_set: LabelSet,
    pub shards: Vec<Shard>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Shard {
    pub label: usize,
    pub name: String,
    pub count: usize,
    pub file: String,
}

/// Patches cropped from one rendered image before a new one is rendered.
const PATCHES_PER_IMAGE: usize = 4;

fn random_crop(t: &Array2<f64>, shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (h, w) = t.dim();
    let r = rng.random_range(0..=h - shape.0);
    let c = rng.random_range(0..=w - shape.1);
    let mut out = t.slice(ndarray::s![r..r + shape.0, c..c + shape.1]).to_owned();
    if rng.random_bool(0.5) {
        out.invert_axis(ndarray::Axis(1));
    }
    out
}

/// Balanced synthetic patches: `patches_per_label` for every label, each
/// cropped from a rendered image of random corpus crops. For pairs one of
/// the two layers, chosen by a coin flip, is scaled by a gain drawn from
/// `[0.3, 1]`.
pub fn generate_training_set(
    textures: &[Array2<f64>],
    cfg: &CameraConfig,
    label_set: &LabelSet,
    patch: usize,
    patches_per_label: usize,
    seed: u64,
) -> Result<Dataset> {
    ensure(!textures.is_empty(), || "texture corpus is empty".into())?;
    let shape = cfg.texture_size();
    ensure(textures.iter().all(|t| t.dim().0 >= shape.0 && t.dim().1 >= shape.1), || {
        format!("corpus textures must be at least {shape:?}")
    })?;
    let units = cfg.units();
    ensure(patch >= 1 && patch <= units.0 && patch <= units.1, || {
        format!("{patch}x{patch} patches do not fit {units:?} units")
    })?;
    let banks = label_set.levels().depths().iter().map(|&d| build_psf_bank(cfg, d)).collect::<Result<Vec<_>>>()?;
    let channels = crate::lightfield::kept_positions(cfg).len();
    let pl = patch * patch * channels;
    let mut data = Vec::with_capacity(label_set.len() * patches_per_label * pl);
    let mut labels = Vec::with_capacity(label_set.len() * patches_per_label);
    let positions: Vec<(usize, usize)> =
        (0..=units.0 - patch).flat_map(|i| (0..=units.1 - patch).map(move |j| (i, j))).collect();

    for (k, &label) in label_set.labels().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut made = 0;
        while made < patches_per_label {
            let a = random_crop(&textures[rng.random_range(0..textures.len())], shape, &mut rng);
            let b = random_crop(&textures[rng.random_range(0..textures.len())], shape, &mut rng);
            let gain = rng.random_range(0.3..=1.0);
            let gains = if rng.random_bool(0.5) { (gain, 1.0) } else { (1.0, gain) };
            let lf = render_label(cfg, &banks, label, (&a, &b), gains)?;
            let vt = network_input(&lf)?;
            let picks: Vec<_> = positions.choose_multiple(&mut rng, PATCHES_PER_IMAGE).copied().collect();
            for pos in picks {
                if made == patches_per_label {
                    break;
                }
                let p = extract_patch(&vt, pos, patch)?;
                data.extend(p.data.iter().map(|&v| v as f32));
                labels.push(k);
                made += 1;
            }
        }
    }
    Ok(Dataset { patch, channels, data, labels, n_labels: label_set.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textures::texture_corpus;

    fn small_cfg() -> CameraConfig {
        CameraConfig::desk().with_sensor_units(9, 9)
    }

    #[test]
    fn balanced_and_deterministic() {
        let cfg = small_cfg();
        let set = LabelSet::desk();
        let corpus = texture_corpus(3, (40, 40), 1);
        let ds = generate_training_set(&corpus, &cfg, &set, 7, 5, 3).unwrap();
        assert_eq!(ds.count_per_label(), vec![5; set.len()]);
        assert_eq!(ds.data.len(), ds.len() * 7 * 7 * 80);
        assert_eq!(ds, generate_training_set(&corpus, &cfg, &set, 7, 5, 3).unwrap());
    }

    #[test]
    fn rejects_small_corpus() {
        let cfg = small_cfg();
        let corpus = texture_corpus(1, (10, 10), 1);
        assert!(generate_training_set(&corpus, &cfg, &LabelSet::desk(), 7, 1, 0).is_err());
        assert!(generate_training_set(&[], &cfg, &LabelSet::desk(), 7, 1, 0).is_err());
    }

    #[test]
    fn pair_patch_is_sum_of_singles() {
        let cfg = small_cfg();
        let set = LabelSet::desk();
        let banks: Vec<_> = set.levels().depths().iter().map(|&d| build_psf_bank(&cfg, d).unwrap()).collect();
        let corpus = texture_corpus(2, cfg.texture_size(), 8);
        let (a, b) = (&corpus[0], &corpus[1]);
        let (i, j) = (1, 6);
        let pair =
            rearrange_views(&render_label(&cfg, &banks, Label::Pair(i, j), (a, b), (1.0, 1.0)).unwrap()).unwrap();
        let si = rearrange_views(&render_label(&cfg, &banks, Label::Single(i), (a, b), (1.0, 1.0)).unwrap()).unwrap();
        let sj = rearrange_views(&render_label(&cfg, &banks, Label::Single(j), (b, a), (1.0, 1.0)).unwrap()).unwrap();
        let p = extract_patch(&pair, (1, 2), 7).unwrap().data;
        let s = extract_patch(&si, (1, 2), 7).unwrap().data + extract_patch(&sj, (1, 2), 7).unwrap().data;
        assert!((&p - &s).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn save_load_round_trip() {
        let cfg = small_cfg();
        let set = LabelSet::desk();
        let ds = generate_training_set(&texture_corpus(2, (36, 36), 4), &cfg, &set, 7, 2, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path(), &set).unwrap();
        let (back, back_set) = Dataset::load(dir.path()).unwrap();
        assert_eq!(back_set, set);
        assert_eq!(back, ds);
    }
}
