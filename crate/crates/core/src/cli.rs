//! Command-line front end. Every subcommand reads an experiment manifest,
//! validates it before doing any work, and writes its outputs together with
//! a copy of the resolved manifest into the output directory.
//!
//! Exit status: 0 on success, 1 on a failed run, 2 on a usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::depthnet::{
    classify_full_image, evaluate, generate_training_set, labels_to_depth_maps, median_depths, net_train, Dataset,
    NetArch, TrainedModel,
};
use crate::error::{ensure, invalid, Result};
use crate::experiment::{emit_ncc_curve, run_sweep, two_stage_separation, ExperimentManifest};
use crate::io::pnm;
use crate::lightfield::LightFieldImage;
use crate::operators::{forward_model, TextureVolume};
use crate::optics::build_psf_bank;
use crate::recon::{deblur_and_separate_with, ncc, reconstruct_layers_logged};

#[derive(Debug, Parser)]
#[command(
    name = "plenosep",
    version,
    about = "Two-layer plenoptic imaging: simulation, depth classification and layer separation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment manifest (TOML)
    #[arg(long, short)]
    pub manifest: PathBuf,
    /// Output directory; overrides `output.dir` of the manifest
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the manifest scene: observation.pfm plus the true textures
    Simulate(Common),
    /// Generate a labeled patch dataset from the manifest's texture corpus
    GenDataset(Common),
    /// Train the depth classifier on a dataset directory
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset written by gen-dataset
        #[arg(long)]
        dataset: PathBuf,
        /// Held-out dataset to report accuracy on
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Label every unit of an observation and derive near/far depth maps
    Classify {
        #[command(flatten)]
        common: Common,
        /// Model directory written by train
        #[arg(long)]
        model: PathBuf,
        /// Observation PFM; the manifest scene is simulated when omitted
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Separate the two layers, at the manifest depths or at classified ones
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Classify first and separate at the median depths
        #[arg(long)]
        model: Option<PathBuf>,
        /// Observation PFM; the manifest scene is simulated when omitted
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Joint blind deblurring and separation at the manifest depths
    Deblur {
        #[command(flatten)]
        common: Common,
        /// Observation PFM; the manifest scene is simulated when omitted
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Separation quality over the manifest's depth sweep: CSV and plot
    EvaluateSweep(Common),
    /// Check that an image equals the noiseless forward model of the manifest scene
    Verify {
        #[command(flatten)]
        common: Common,
        /// Image to check
        #[arg(long)]
        image: PathBuf,
        /// Largest admitted absolute difference
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Simulate(c) | Command::GenDataset(c) | Command::EvaluateSweep(c) => c,
        Command::Train { common, .. }
        | Command::Classify { common, .. }
        | Command::Reconstruct { common, .. }
        | Command::Deblur { common, .. }
        | Command::Verify { common, .. } => common,
    }
}

/// Loads the manifest, resolves the output directory and writes the manifest copy.
fn prepare(c: &Common) -> Result<(ExperimentManifest, PathBuf)> {
    let mut m = ExperimentManifest::load(&c.manifest)?;
    if let Some(out) = &c.out {
        m.output.dir = out.clone();
    }
    let out = m.output.dir.clone();
    std::fs::create_dir_all(&out)?;
    m.save(&out.join("manifest.toml"))?;
    Ok((m, out))
}

pub fn execute(cmd: &Command) -> Result<()> {
    let (m, out) = prepare(common(cmd))?;
    log::info!("writing to {}", out.display());
    match cmd {
        Command::Simulate(_) => simulate(&m, &out),
        Command::GenDataset(_) => gen_dataset(&m, &out),
        Command::Train { dataset, validation, .. } => train(&m, &out, dataset, validation.as_deref()),
        Command::Classify { model, input, .. } => classify(&m, &out, model, input.as_deref()),
        Command::Reconstruct { model, input, .. } => reconstruct(&m, &out, model.as_deref(), input.as_deref()),
        Command::Deblur { input, .. } => deblur(&m, &out, input.as_deref()),
        Command::EvaluateSweep(_) => {
            let points = run_sweep(&m)?;
            emit_ncc_curve(&points, &out.join("ncc_sweep.csv"), &out.join("ncc_sweep.png"))
        }
        Command::Verify { image, tolerance, .. } => verify(&m, image, *tolerance),
    }
}

fn simulate(m: &ExperimentManifest, out: &Path) -> Result<()> {
    let sim = m.simulate()?;
    pnm::write_pfm(&out.join("observation.pfm"), sim.observation.channels())?;
    pnm::write_pfm(&out.join("texture_t.pfm"), std::slice::from_ref(&sim.volume.layer_t))?;
    pnm::write_pfm(&out.join("texture_r.pfm"), std::slice::from_ref(&sim.volume.layer_r))?;
    Ok(())
}

fn gen_dataset(m: &ExperimentManifest, out: &Path) -> Result<()> {
    let cfg = m.camera()?;
    let set = m.label_set()?;
    let d = &m.dataset;
    let ds = generate_training_set(&m.texture_corpus(), &cfg, &set, d.patch, d.patches_per_label, m.seed)?;
    log::info!("{} patches over {} labels", ds.len(), set.len());
    ds.save(out, &set)
}

fn train(m: &ExperimentManifest, out: &Path, dataset: &Path, validation: Option<&Path>) -> Result<()> {
    let (ds, set) = Dataset::load(dataset)?;
    let base = match m.camera.as_str() {
        "reference" => NetArch::reference(set.len()),
        _ => NetArch::desk(ds.channels, set.len()),
    };
    let arch = NetArch { patch: ds.patch, in_channels: ds.channels, ..base };
    let outcome = net_train(&ds, arch, &m.train)?;
    let mut loss = String::from("# iteration loss\n");
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        writeln!(loss, "{} {l}", i + 1).unwrap();
    }
    std::fs::write(out.join("loss.txt"), loss)?;
    let mut report = format!("training_accuracy = {}\n", evaluate(&outcome.params, &ds)?.accuracy);
    if let Some(v) = validation {
        let (vs, vset) = Dataset::load(v)?;
        ensure(vset == set, || "validation set uses a different label set".into())?;
        let e = evaluate(&outcome.params, &vs)?;
        writeln!(report, "validation_accuracy = {}", e.accuracy).unwrap();
        writeln!(report, "adjacent_error_fraction = {}", e.adjacent_error_fraction(&set)).unwrap();
    }
    std::fs::write(out.join("report.toml"), &report)?;
    print!("{report}");
    TrainedModel::new(outcome.params, set)?.save(&out.join("model"))
}

fn observation(m: &ExperimentManifest, input: Option<&Path>) -> Result<(LightFieldImage, Option<TextureVolume>)> {
    match input {
        Some(path) => Ok((LightFieldImage::new(pnm::read_pfm(path)?, &m.camera()?)?, None)),
        None => {
            let sim = m.simulate()?;
            Ok((sim.observation, Some(sim.volume)))
        }
    }
}

fn write_rows(path: &Path, a: &Array2<usize>) -> Result<()> {
    let mut s = String::new();
    for row in a.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn classify(m: &ExperimentManifest, out: &Path, model: &Path, input: Option<&Path>) -> Result<()> {
    let model = TrainedModel::load(model)?;
    let (l, _) = observation(m, input)?;
    let map = classify_full_image(&model.params, &l)?;
    let maps = labels_to_depth_maps(&map, &model.label_set)?;
    write_rows(&out.join("labels.txt"), &map.labels)?;
    pnm::write_pfm(&out.join("depth_near.pfm"), std::slice::from_ref(&maps.depth_near))?;
    pnm::write_pfm(&out.join("depth_far.pfm"), std::slice::from_ref(&maps.depth_far))?;
    let (near, far) = median_depths(&maps)?;
    let mut report = format!("median_depth_near = {near}\n");
    match far {
        Some(f) => writeln!(report, "median_depth_far = {f}").unwrap(),
        None => report.push_str("# no second layer found\n"),
    }
    std::fs::write(out.join("report.toml"), &report)?;
    print!("{report}");
    Ok(())
}

fn write_layers(out: &Path, est: &TextureVolume) -> Result<()> {
    pnm::write_pfm(&out.join("layer_t.pfm"), std::slice::from_ref(&est.layer_t))?;
    pnm::write_pfm(&out.join("layer_r.pfm"), std::slice::from_ref(&est.layer_r))
}

fn reconstruct(m: &ExperimentManifest, out: &Path, model: Option<&Path>, input: Option<&Path>) -> Result<()> {
    let cfg = m.camera()?;
    let (l, truth) = observation(m, input)?;
    let rc = m.recon_config(l.mean());
    let mut est = match model {
        Some(dir) => two_stage_separation(&TrainedModel::load(dir)?, &cfg, &l, &rc)?.estimate,
        None => {
            let bank_t = build_psf_bank(&cfg, m.scene.depth_t)?;
            let bank_r = build_psf_bank(&cfg, m.scene.depth_r)?;
            let (est, log) = reconstruct_layers_logged(&l, &bank_t, &bank_r, &rc)?;
            log.save(&out.join("iterations.txt"))?;
            est
        }
    };
    // the classifier cannot tell which layer is transmitted; follow the
    // manifest's depth order
    if (est.depth_t > est.depth_r) != (m.scene.depth_t > m.scene.depth_r) {
        est = TextureVolume { layer_t: est.layer_r, layer_r: est.layer_t, depth_t: est.depth_r, depth_r: est.depth_t };
    }
    let mut report = format!("depth_t = {}\ndepth_r = {}\n", est.depth_t, est.depth_r);
    if let Some(t) = &truth {
        writeln!(report, "ncc_t = {}\nncc_r = {}", ncc(&est.layer_t, &t.layer_t)?, ncc(&est.layer_r, &t.layer_r)?)
            .unwrap();
    }
    write_layers(out, &est)?;
    std::fs::write(out.join("report.toml"), &report)?;
    print!("{report}");
    Ok(())
}

fn deblur(m: &ExperimentManifest, out: &Path, input: Option<&Path>) -> Result<()> {
    let cfg = m.camera()?;
    let (l, truth) = observation(m, input)?;
    let rc = m.recon_config(l.mean());
    let bank_t = build_psf_bank(&cfg, m.scene.depth_t)?;
    let bank_r = build_psf_bank(&cfg, m.scene.depth_r)?;
    let state = deblur_and_separate_with(&l, &bank_t, &bank_r, &rc, &m.deblur_config())?;
    let est = TextureVolume {
        layer_t: state.u_t.clone(),
        layer_r: state.u_r.clone(),
        depth_t: bank_t.depth(),
        depth_r: bank_r.depth(),
    };
    write_layers(out, &est)?;
    pnm::write_pfm(&out.join("kernel_t.pfm"), std::slice::from_ref(state.m_t.weights()))?;
    pnm::write_pfm(&out.join("kernel_r.pfm"), std::slice::from_ref(state.m_r.weights()))?;
    let mut trace = String::from("# outer objective\n");
    for (i, v) in state.objective_trace.iter().enumerate() {
        writeln!(trace, "{i} {v:.17e}").unwrap();
    }
    std::fs::write(out.join("objective.txt"), trace)?;
    let mut report = format!("diverged = {}\n", state.diverged);
    if let Some(t) = &truth {
        writeln!(report, "ncc_t = {}\nncc_r = {}", ncc(&state.u_t, &t.layer_t)?, ncc(&state.u_r, &t.layer_r)?).unwrap();
        if let (Some(kt), Some(kr)) = m.blur_kernels()? {
            if kt.size() == state.m_t.size() && kr.size() == state.m_r.size() {
                let (e_t, e_r) = (state.m_t.l1_distance(&kt), state.m_r.l1_distance(&kr));
                writeln!(report, "kernel_l1_t = {e_t}\nkernel_l1_r = {e_r}").unwrap();
            }
        }
    }
    std::fs::write(out.join("report.toml"), &report)?;
    print!("{report}");
    Ok(())
}

fn verify(m: &ExperimentManifest, image: &Path, tolerance: f64) -> Result<()> {
    let sim = m.simulate()?;
    let expected = forward_model(&sim.volume, &sim.bank_t, &sim.bank_r)?;
    let got = pnm::read_pfm(image)?;
    ensure(got.len() == 1 && got[0].dim() == expected.dim(), || {
        format!("image is {} channel(s) of {:?}, expected one of {:?}", got.len(), got[0].dim(), expected.dim())
    })?;
    let diff = got[0].iter().zip(expected.iter()).fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
    if diff <= tolerance {
        println!("ok: max abs difference {diff:e}");
        Ok(())
    } else {
        Err(invalid(format!("image differs from the forward model by {diff:e} (tolerance {tolerance:e})")))
    }
}
