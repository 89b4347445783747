//! Reproducible experiment descriptions and the layer-separation sweep.
//!
//! A manifest is a TOML file with a `schema_version`; every section is
//! optional and falls back to the desk-scale defaults below. Two runs from
//! the same manifest produce identical numbers: all randomness is seeded
//! from the manifest and the sweep runs in a fixed order.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::depthnet::{
    classify_full_image, labels_to_depth_maps, median_depths, DepthMapPair, LabelMap, LabelSet, TrainConfig,
    TrainedModel,
};
use crate::error::{ensure, invalid, Error, Result};
use crate::io::plot::{render_line_plot, Series};
use crate::io::pnm;
use crate::lightfield::LightFieldImage;
use crate::operators::{simulate_with_banks, BlurKernel, TextureVolume};
use crate::optics::{build_psf_bank, sweep_depth_grid, CameraConfig, CameraPreset, PsfKernelBank};
use crate::recon::{ncc, reconstruct_layers, DeblurConfig, KernelInit, ReconConfig, DEFAULT_NU_SCALE};
use crate::textures::{procedural_texture, texture_corpus};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub schema_version: u32,
    /// Preset name, `desk` or `reference`.
    #[serde(default = "default_camera")]
    pub camera: String,
    /// Overrides the preset's sensor size, in unit cells `[rows, cols]`.
    #[serde(default)]
    pub sensor_units: Option<[usize; 2]>,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the additive sensor noise, absolute.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub deblur: DeblurSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory relative texture paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_camera() -> String {
    "desk".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TextureSource {
    Procedural {
        seed: u64,
    },
    /// Grayscale PFM at the camera's texture size.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Delta { size: usize },
    Box { size: usize },
    LinearMotion { size: usize, angle_deg: f64 },
}

impl KernelSpec {
    pub fn size(&self) -> usize {
        match *self {
            KernelSpec::Delta { size } | KernelSpec::Box { size } | KernelSpec::LinearMotion { size, .. } => size,
        }
    }

    pub fn build(&self) -> Result<BlurKernel> {
        let k = self.size();
        ensure(k % 2 == 1, || format!("blur kernel size must be odd, got {k}"))?;
        Ok(match *self {
            KernelSpec::Delta { size } => BlurKernel::delta(size),
            KernelSpec::Box { size } => BlurKernel::boxcar(size),
            KernelSpec::LinearMotion { size, angle_deg } => BlurKernel::linear_motion(size, angle_deg),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// meters
    pub depth_t: f64,
    /// meters
    pub depth_r: f64,
    pub texture_t: TextureSource,
    pub texture_r: TextureSource,
    pub blur_t: Option<KernelSpec>,
    pub blur_r: Option<KernelSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            depth_t: 0.35,
            depth_r: 1.7,
            texture_t: TextureSource::Procedural { seed: 1 },
            texture_r: TextureSource::Procedural { seed: 2 },
            blur_t: None,
            blur_r: None,
        }
    }
}

/// Texture solver settings; the TV weight is `nu_scale` times the mean observed intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub nu_scale: f64,
    pub tv_epsilon: f64,
    pub step_size: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let rc = ReconConfig::default();
        SolverSpec {
            nu_scale: DEFAULT_NU_SCALE,
            tv_epsilon: rc.tv_epsilon,
            step_size: rc.step_size,
            max_iters: rc.max_iters,
            rel_tol: rc.rel_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeblurSpec {
    pub kernel_size: usize,
    pub outer_iters: usize,
    pub kernel_iters: usize,
    pub nu_boost: f64,
    pub kernel_init: KernelInit,
}

impl Default for DeblurSpec {
    fn default() -> Self {
        let dc = DeblurConfig::new(5, 10);
        DeblurSpec {
            kernel_size: dc.kernel_size,
            outer_iters: dc.outer_iters,
            kernel_iters: dc.kernel_iters,
            nu_boost: dc.nu_boost,
            kernel_init: dc.kernel_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// meters; one curve each
    pub fixed_depths: Vec<f64>,
    /// meters; depths the other layer visits
    pub depths: Vec<f64>,
    pub texture_pairs: usize,
    /// Pair `k` uses procedural textures `texture_seed + 2k` and `texture_seed + 2k + 1`.
    pub texture_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            fixed_depths: vec![0.35, 0.8, 1.7],
            depths: sweep_depth_grid(),
            texture_pairs: 4,
            texture_seed: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// `desk` or `reference`
    pub label_set: String,
    pub patch: usize,
    pub corpus_size: usize,
    pub corpus_side: usize,
    pub corpus_seed: u64,
    pub patches_per_label: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            label_set: "desk".into(),
            patch: 8,
            corpus_size: 64,
            corpus_side: 48,
            corpus_seed: 1000,
            patches_per_label: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: PathBuf::from("out") }
    }
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        ExperimentManifest {
            schema_version: MANIFEST_SCHEMA,
            camera: default_camera(),
            sensor_units: None,
            seed: 0,
            noise_sigma: 0.0,
            scene: SceneSpec::default(),
            solver: SolverSpec::default(),
            deblur: DeblurSpec::default(),
            sweep: SweepSpec::default(),
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
            output: OutputSpec::default(),
            base_dir: PathBuf::new(),
        }
    }
}

fn manifest_error(e: impl ToString) -> Error {
    Error::Format { what: "experiment manifest", detail: e.to_string() }
}

impl ExperimentManifest {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let m: ExperimentManifest = toml::from_str(text).map_err(manifest_error)?;
        m.validate()?;
        Ok(m)
    }

    /// Parses and validates a manifest; relative texture paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(manifest_error)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Cheap consistency checks, run before any expensive work.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA {
            return Err(manifest_error(format!(
                "unsupported schema_version {} (expected {MANIFEST_SCHEMA})",
                self.schema_version
            )));
        }
        let cfg = self.camera()?;
        let f = cfg.main_focal_length;
        let depth_ok = |d: f64| d.is_finite() && d > f;
        ensure(depth_ok(self.scene.depth_t) && depth_ok(self.scene.depth_r), || {
            format!("scene depths must be finite and beyond the focal length {f} m")
        })?;
        ensure(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0, || "noise_sigma must be >= 0".into())?;
        for k in [self.scene.blur_t, self.scene.blur_r].iter().flatten() {
            k.build()?;
        }
        self.recon_config(1.0).validate()?;
        ensure(self.solver.nu_scale >= 0.0, || "nu_scale must be >= 0".into())?;
        ensure(self.deblur.kernel_size % 2 == 1 && self.deblur.outer_iters >= 1, || {
            "deblur needs an odd kernel size and at least one outer iteration".into()
        })?;
        let s = &self.sweep;
        ensure(!s.fixed_depths.is_empty() && !s.depths.is_empty() && s.texture_pairs >= 1, || {
            "sweep needs fixed depths, sweep depths and at least one texture pair".into()
        })?;
        ensure(s.fixed_depths.iter().chain(&s.depths).all(|&d| depth_ok(d)), || {
            format!("sweep depths must be finite and beyond the focal length {f} m")
        })?;
        self.label_set()?;
        ensure(
            self.dataset.patch >= 7 && self.dataset.corpus_size >= 1 && self.dataset.patches_per_label >= 1,
            || "dataset needs patch >= 7, a non-empty corpus and patches_per_label >= 1".into(),
        )?;
        self.train.validate()
    }

    pub fn camera(&self) -> Result<CameraConfig> {
        let mut cfg = CameraPreset::parse(&self.camera)?.config();
        if let Some([h, w]) = self.sensor_units {
            cfg = cfg.with_sensor_units(h, w);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label_set(&self) -> Result<LabelSet> {
        match self.dataset.label_set.as_str() {
            "desk" => Ok(LabelSet::desk()),
            "reference" => Ok(LabelSet::reference()),
            other => Err(invalid(format!("unknown label set {other:?} (expected \"desk\" or \"reference\")"))),
        }
    }

    /// Solver settings for an observation of the given mean intensity.
    pub fn recon_config(&self, mean_intensity: f64) -> ReconConfig {
        let s = &self.solver;
        ReconConfig {
            nu: s.nu_scale * mean_intensity,
            tv_epsilon: s.tv_epsilon,
            step_size: s.step_size,
            max_iters: s.max_iters,
            rel_tol: s.rel_tol,
        }
    }

    pub fn deblur_config(&self) -> DeblurConfig {
        let d = &self.deblur;
        DeblurConfig {
            kernel_size: d.kernel_size,
            outer_iters: d.outer_iters,
            kernel_iters: d.kernel_iters,
            nu_boost: d.nu_boost,
            kernel_init: d.kernel_init,
        }
    }

    fn texture(&self, src: &TextureSource, shape: (usize, usize)) -> Result<Array2<f64>> {
        let t = match src {
            TextureSource::Procedural { seed } => procedural_texture(shape, *seed),
            TextureSource::File { path } => pnm::read_pfm_gray(&self.base_dir.join(path))?,
        };
        ensure(t.dim() == shape, || format!("texture is {:?}, the camera needs {shape:?}", t.dim()))?;
        Ok(t)
    }

    pub fn scene_volume(&self) -> Result<TextureVolume> {
        let shape = self.camera()?.texture_size();
        TextureVolume::new(
            self.texture(&self.scene.texture_t, shape)?,
            self.texture(&self.scene.texture_r, shape)?,
            self.scene.depth_t,
            self.scene.depth_r,
        )
    }

    pub fn blur_kernels(&self) -> Result<(Option<BlurKernel>, Option<BlurKernel>)> {
        Ok((self.scene.blur_t.map(|k| k.build()).transpose()?, self.scene.blur_r.map(|k| k.build()).transpose()?))
    }

    /// Scene banks, texture volume and the simulated observation.
    pub fn simulate(&self) -> Result<Simulation> {
        let cfg = self.camera()?;
        let volume = self.scene_volume()?;
        let bank_t = build_psf_bank(&cfg, volume.depth_t)?;
        let bank_r = build_psf_bank(&cfg, volume.depth_r)?;
        let (m_t, m_r) = self.blur_kernels()?;
        let observation = simulate_with_banks(
            &volume,
            &cfg,
            &bank_t,
            &bank_r,
            m_t.as_ref(),
            m_r.as_ref(),
            self.noise_sigma,
            self.seed,
        )?;
        Ok(Simulation { cfg, volume, bank_t, bank_r, observation })
    }

    pub fn texture_corpus(&self) -> Vec<Array2<f64>> {
        let d = &self.dataset;
        texture_corpus(d.corpus_size, (d.corpus_side, d.corpus_side), d.corpus_seed)
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub cfg: CameraConfig,
    pub volume: TextureVolume,
    pub bank_t: PsfKernelBank,
    pub bank_r: PsfKernelBank,
    pub observation: LightFieldImage,
}

/// Output of classifier-driven separation.
#[derive(Debug, Clone)]
pub struct TwoStageResult {
    pub label_map: LabelMap,
    pub depth_maps: DepthMapPair,
    /// Median near and far depths, meters.
    pub depths: (f64, f64),
    /// `layer_t` is the near layer, `layer_r` the far one.
    pub estimate: TextureVolume,
}

/// Classifies every unit, takes the median near and far depths and
/// separates the observation at those depths.
pub fn two_stage_separation(
    model: &TrainedModel,
    cfg: &CameraConfig,
    l: &LightFieldImage,
    rc: &ReconConfig,
) -> Result<TwoStageResult> {
    let label_map = classify_full_image(&model.params, l)?;
    let depth_maps = labels_to_depth_maps(&label_map, &model.label_set)?;
    let (near, far) = median_depths(&depth_maps)?;
    let far = far.ok_or_else(|| invalid("the classifier found no second layer anywhere in the image"))?;
    let bank_t = build_psf_bank(cfg, near)?;
    let bank_r = build_psf_bank(cfg, far)?;
    let estimate = reconstruct_layers(l, &bank_t, &bank_r, rc)?;
    Ok(TwoStageResult { label_map, depth_maps, depths: (near, far), estimate })
}

/// Mean NCC over the texture pairs with the transmitted layer at `fixed_depth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub fixed_depth: f64,
    pub other_depth: f64,
    pub ncc_t: f64,
    pub ncc_r: f64,
}

impl SweepPoint {
    pub fn mean_ncc(&self) -> f64 {
        0.5 * (self.ncc_t + self.ncc_r)
    }
}

/// Reconstruction of one sweep scene, kept for inspection.
#[derive(Debug, Clone)]
pub struct SweepSample {
    pub pair: usize,
    pub truth: TextureVolume,
    pub estimate: TextureVolume,
}

fn same_depth(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Separates one scene per texture pair with the fixed layer as the
/// transmitted one, at the known depths.
pub fn sweep_point(
    m: &ExperimentManifest,
    cfg: &CameraConfig,
    banks: (&PsfKernelBank, &PsfKernelBank),
) -> Result<(SweepPoint, Vec<SweepSample>)> {
    let (bank_t, bank_r) = banks;
    let shape = cfg.texture_size();
    let s = &m.sweep;
    let mut samples = Vec::with_capacity(s.texture_pairs);
    let (mut sum_t, mut sum_r) = (0.0, 0.0);
    for pair in 0..s.texture_pairs {
        let seed = s.texture_seed + 2 * pair as u64;
        let truth = TextureVolume::new(
            procedural_texture(shape, seed),
            procedural_texture(shape, seed + 1),
            bank_t.depth(),
            bank_r.depth(),
        )?;
        let noise_seed = m.seed.wrapping_add(pair as u64);
        let l = simulate_with_banks(&truth, cfg, bank_t, bank_r, None, None, m.noise_sigma, noise_seed)?;
        let estimate = reconstruct_layers(&l, bank_t, bank_r, &m.recon_config(l.mean()))?;
        sum_t += ncc(&estimate.layer_t, &truth.layer_t)?;
        sum_r += ncc(&estimate.layer_r, &truth.layer_r)?;
        samples.push(SweepSample { pair, truth, estimate });
    }
    let n = s.texture_pairs as f64;
    let point =
        SweepPoint { fixed_depth: bank_t.depth(), other_depth: bank_r.depth(), ncc_t: sum_t / n, ncc_r: sum_r / n };
    Ok((point, samples))
}

/// Every `(fixed, other)` combination of the manifest's sweep, skipping
/// equal depths, in manifest order.
pub fn run_sweep(m: &ExperimentManifest) -> Result<Vec<SweepPoint>> {
    m.validate()?;
    let cfg = m.camera()?;
    let mut banks: HashMap<u64, PsfKernelBank> = HashMap::new();
    let mut bank = |d: f64| -> Result<PsfKernelBank> {
        if let Some(b) = banks.get(&d.to_bits()) {
            return Ok(b.clone());
        }
        let b = build_psf_bank(&cfg, d)?;
        banks.insert(d.to_bits(), b.clone());
        Ok(b)
    };
    let mut points = Vec::new();
    for &fixed in &m.sweep.fixed_depths {
        let bank_t = bank(fixed)?;
        for &other in m.sweep.depths.iter().filter(|&&d| !same_depth(d, fixed)) {
            let bank_r = bank(other)?;
            let (p, _) = sweep_point(m, &cfg, (&bank_t, &bank_r))?;
            log::info!("fixed {fixed} m, other {other} m: NCC {:.4} / {:.4}", p.ncc_t, p.ncc_r);
            points.push(p);
        }
    }
    Ok(points)
}

pub const SWEEP_CSV_HEADER: &str = "fixed_layer_depth,other_layer_depth,mean_ncc_t,mean_ncc_r";

/// Header plus one row per point; values use the shortest round-trip decimal form.
pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    ensure(!points.is_empty(), || "no sweep results".into())?;
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.fixed_depth, p.other_depth, p.ncc_t, p.ncc_r));
    }
    Ok(out)
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepPoint>> {
    let mut lines = text.lines();
    ensure(lines.next() == Some(SWEEP_CSV_HEADER), || "missing sweep CSV header".into())?;
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format { what: "sweep CSV", detail: format!("{l:?}: {e}") })?;
            if v.len() != 4 {
                return Err(Error::Format { what: "sweep CSV", detail: format!("{l:?} does not have 4 columns") });
            }
            Ok(SweepPoint { fixed_depth: v[0], other_depth: v[1], ncc_t: v[2], ncc_r: v[3] })
        })
        .collect()
}

/// One series per fixed depth, in order of first appearance; y is the mean of both layers' NCC.
pub fn ncc_curves(points: &[SweepPoint]) -> Vec<Series> {
    let mut series: Vec<(f64, Series)> = Vec::new();
    for p in points {
        let idx = match series.iter().position(|(d, _)| same_depth(*d, p.fixed_depth)) {
            Some(i) => i,
            None => {
                series.push((p.fixed_depth, Series { label: format!("{}", p.fixed_depth), points: Vec::new() }));
                series.len() - 1
            }
        };
        series[idx].1.points.push((p.other_depth, p.mean_ncc()));
    }
    series.into_iter().map(|(_, s)| s).collect()
}

/// Writes the sweep CSV and a PNG with one NCC-versus-depth curve per fixed depth.
pub fn emit_ncc_curve(points: &[SweepPoint], csv_path: &Path, png_path: &Path) -> Result<()> {
    let csv = sweep_csv(points)?;
    std::fs::write(csv_path, csv)?;
    render_line_plot(&ncc_curves(points), 720, 420)?.save_png(png_path)
}
