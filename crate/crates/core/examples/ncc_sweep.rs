//! Layer-separation quality across depth pairs: one curve per fixed layer
//! depth, written as CSV and PNG.
//!
//! `cargo run --release --example ncc_sweep -- [out_dir] [texture_pairs] [noise_sigma] [nu_scale]`

use std::path::PathBuf;
use std::time::Instant;

use plenosep::experiment::{emit_ncc_curve, run_sweep, ExperimentManifest};

fn main() -> plenosep::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "sweep_out".into()));
    let mut m = ExperimentManifest::default();
    if let Some(n) = args.next().and_then(|a| a.parse().ok()) {
        m.sweep.texture_pairs = n;
    }
    if let Some(sigma) = args.next().and_then(|a| a.parse().ok()) {
        m.noise_sigma = sigma;
    }
    if let Some(nu) = args.next().and_then(|a| a.parse().ok()) {
        m.solver.nu_scale = nu;
    }
    std::fs::create_dir_all(&out)?;
    let start = Instant::now();
    let points = run_sweep(&m)?;
    println!("{} depth pairs in {:.1?}", points.len(), start.elapsed());
    println!("fixed  other   ncc_t   ncc_r");
    for p in &points {
        println!("{:5.2} {:6.2}  {:.4}  {:.4}", p.fixed_depth, p.other_depth, p.ncc_t, p.ncc_r);
    }
    emit_ncc_curve(&points, &out.join("ncc_sweep.csv"), &out.join("ncc_sweep.png"))?;
    println!("wrote {}", out.join("ncc_sweep.{csv,png}").display());
    Ok(())
}
