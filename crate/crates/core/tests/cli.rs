//! End-to-end runs of the `plenosep` binary on small manifests.

use std::path::Path;
use std::process::Command;

use plenosep::depthnet::{Label, LabelSet, NetArch, NetParams, TrainedModel};
use plenosep::experiment::{parse_sweep_csv, sweep_point, two_stage_separation, ExperimentManifest};
use plenosep::io::pnm;
use plenosep::optics::build_psf_bank;
use plenosep::recon::ncc;

fn plenosep(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_plenosep")).args(args).env("RUST_LOG", "warn").output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write_manifest(dir: &Path, body: &str) -> String {
    let path = dir.join("m.toml");
    std::fs::write(&path, format!("schema_version = 1\nsensor_units = [8, 8]\n{body}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn report_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing from {text:?}"))
        .parse()
        .unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(plenosep(&["frobnicate"]).0, 2);
    assert_eq!(plenosep(&["simulate", "--manifest", "m.toml", "--bogus"]).0, 2);
    assert_eq!(plenosep(&["simulate"]).0, 2);
    assert_eq!(plenosep(&["--help"]).0, 0);
}

#[test]
fn failures_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(plenosep(&["simulate", "--manifest", missing.to_str().unwrap()]).0, 1);
    let bad = write_manifest(dir.path(), "noise_sigma = -1.0");
    assert_eq!(plenosep(&["simulate", "--manifest", &bad]).0, 1);
}

#[test]
fn simulated_image_verifies_against_the_forward_model() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), "");
    let out = dir.path().join("sim");
    assert_eq!(plenosep(&["simulate", "--manifest", &m, "--out", out.to_str().unwrap()]).0, 0);
    let copy = ExperimentManifest::load(&out.join("manifest.toml")).unwrap();
    assert_eq!(copy.output.dir, out);
    let image = out.join("observation.pfm");
    assert_eq!(
        plenosep(&["verify", "--manifest", &m, "--out", out.to_str().unwrap(), "--image", image.to_str().unwrap()]).0,
        0
    );

    let mut pixels = pnm::read_pfm_gray(&image).unwrap();
    pixels[[40, 41]] += 0.01;
    let tampered = dir.path().join("tampered.pfm");
    pnm::write_pfm(&tampered, &[pixels]).unwrap();
    assert_eq!(
        plenosep(&["verify", "--manifest", &m, "--image", tampered.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .0,
        1
    );
}

#[test]
fn sweep_is_reproducible_and_matches_recomputed_ncc() {
    let dir = tempfile::tempdir().unwrap();
    let m =
        write_manifest(dir.path(), "[sweep]\nfixed_depths = [0.35]\ndepths = [0.35, 1.1, 1.7]\ntexture_pairs = 2\n");
    let run = |name: &str| {
        let out = dir.path().join(name);
        assert_eq!(plenosep(&["evaluate-sweep", "--manifest", &m, "--out", out.to_str().unwrap()]).0, 0);
        assert!(out.join("ncc_sweep.png").exists());
        std::fs::read(out.join("ncc_sweep.csv")).unwrap()
    };
    let first = run("a");
    assert_eq!(first, run("b"));

    let points = parse_sweep_csv(std::str::from_utf8(&first).unwrap()).unwrap();
    assert_eq!(points.len(), 2);
    let manifest = ExperimentManifest::load(Path::new(&m)).unwrap();
    let cfg = manifest.camera().unwrap();
    for p in &points {
        let banks = (build_psf_bank(&cfg, p.fixed_depth).unwrap(), build_psf_bank(&cfg, p.other_depth).unwrap());
        let (_, samples) = sweep_point(&manifest, &cfg, (&banks.0, &banks.1)).unwrap();
        let mean = |f: &dyn Fn(&plenosep::experiment::SweepSample) -> f64| {
            samples.iter().map(f).sum::<f64>() / samples.len() as f64
        };
        assert_eq!(p.ncc_t, mean(&|s| ncc(&s.estimate.layer_t, &s.truth.layer_t).unwrap()));
        assert_eq!(p.ncc_r, mean(&|s| ncc(&s.estimate.layer_r, &s.truth.layer_r).unwrap()));
    }
}

/// Zero weights and a one-hot output bias: every unit gets `label`.
fn constant_model(label: Label) -> TrainedModel {
    let set = LabelSet::desk();
    let mut params = NetParams::<f32>::zeros(NetArch::desk(80, set.len())).unwrap();
    params.fc2.bias[set.index_of(label).unwrap()] = 1.0;
    TrainedModel::new(params, set).unwrap()
}

#[test]
fn classify_then_reconstruct_matches_the_library_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), "[scene]\ndepth_t = 1.7\ndepth_r = 0.35\n");
    let set = LabelSet::desk();
    let (near, far) = (set.levels().nearest(0.35), set.levels().nearest(1.7));
    let model = constant_model(Label::Pair(near, far));
    let model_dir = dir.path().join("model");
    model.save(&model_dir).unwrap();

    let out = dir.path().join("classified");
    let args = ["--manifest", &m, "--out", out.to_str().unwrap(), "--model", model_dir.to_str().unwrap()];
    let (code, report) = plenosep(&[&["classify"][..], &args].concat());
    assert_eq!(code, 0);
    assert_eq!(report_value(&report, "median_depth_near"), set.levels().get(near));
    assert_eq!(report_value(&report, "median_depth_far"), set.levels().get(far));

    let (code, report) = plenosep(&[&["reconstruct"][..], &args].concat());
    assert_eq!(code, 0);
    let manifest = ExperimentManifest::load(Path::new(&m)).unwrap();
    let sim = manifest.simulate().unwrap();
    let direct =
        two_stage_separation(&model, &sim.cfg, &sim.observation, &manifest.recon_config(sim.observation.mean()))
            .unwrap();
    // the manifest puts the transmitted layer behind, so the near estimate is the reflected one
    assert_eq!(report_value(&report, "depth_r"), direct.depths.0);
    assert_eq!(report_value(&report, "ncc_r"), ncc(&direct.estimate.layer_t, &sim.volume.layer_r).unwrap());
    assert_eq!(report_value(&report, "ncc_t"), ncc(&direct.estimate.layer_r, &sim.volume.layer_t).unwrap());
    assert!(report_value(&report, "ncc_t") > 0.8);
}

#[test]
fn reconstruct_at_known_depths_reports_ncc() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), "");
    let out = dir.path().join("rec");
    let (code, report) = plenosep(&["reconstruct", "--manifest", &m, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(report_value(&report, "ncc_t") > 0.9 && report_value(&report, "ncc_r") > 0.9);
    assert!(out.join("iterations.txt").exists() && out.join("layer_t.pfm").exists());
}

#[test]
fn dataset_and_training_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(
        dir.path(),
        "[dataset]\ncorpus_size = 3\npatches_per_label = 2\n[train]\nbatch = 8\nmax_iters = 3\n",
    );
    let data = dir.path().join("data");
    assert_eq!(plenosep(&["gen-dataset", "--manifest", &m, "--out", data.to_str().unwrap()]).0, 0);
    let trained = dir.path().join("trained");
    let (code, report) = plenosep(&[
        "train",
        "--manifest",
        &m,
        "--out",
        trained.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--validation",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(report.contains("validation_accuracy"));
    let model = TrainedModel::load(&trained.join("model")).unwrap();
    assert_eq!(model.label_set, LabelSet::desk());
    let losses = std::fs::read_to_string(trained.join("loss.txt")).unwrap();
    assert_eq!(losses.lines().count(), 4);
}
