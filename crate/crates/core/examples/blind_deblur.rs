//! Jointly estimates motion-blur kernels and sharp layer textures from one
//! blurred two-layer observation, from both kernel starting points.
//!
//! `cargo run --release --example blind_deblur -- [outer_iters]`

use std::time::Instant;

use plenosep::operators::{simulate_with_banks, BlurKernel, TextureVolume};
use plenosep::optics::{build_psf_bank, CameraConfig};
use plenosep::recon::{
    deblur_and_separate_with, ncc, reconstruct_layers, solve_blurs_given_textures, DeblurConfig, KernelInit,
    ReconConfig,
};
use plenosep::textures::procedural_texture;

fn main() -> plenosep::Result<()> {
    let outer: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(15);
    let cfg = CameraConfig::desk();
    let shape = cfg.texture_size();
    let (depth_t, depth_r) = (0.35, 1.7);
    let vol = TextureVolume::new(procedural_texture(shape, 11), procedural_texture(shape, 12), depth_t, depth_r)?;
    let m_t = BlurKernel::linear_motion(5, 30.0);
    let m_r = BlurKernel::linear_motion(5, 120.0);
    let bank_t = build_psf_bank(&cfg, depth_t)?;
    let bank_r = build_psf_bank(&cfg, depth_r)?;
    let l = simulate_with_banks(&vol, &cfg, &bank_t, &bank_r, Some(&m_t), Some(&m_r), 0.0, 0)?;
    let rc = ReconConfig::for_observation(&l);

    let plain = reconstruct_layers(&l, &bank_t, &bank_r, &rc)?;
    println!(
        "no deblurring:       NCC t {:.4}  r {:.4}",
        ncc(&plain.layer_t, &vol.layer_t)?,
        ncc(&plain.layer_r, &vol.layer_r)?
    );

    let (kt, kr) = solve_blurs_given_textures(&l, &bank_t, &bank_r, &vol.layer_t, &vol.layer_r, 5)?;
    println!("kernels from true textures: L1 error t {:.4}  r {:.4}", kt.l1_distance(&m_t), kr.l1_distance(&m_r));

    for init in [KernelInit::Delta, KernelInit::Box] {
        let dc = DeblurConfig { kernel_init: init, ..DeblurConfig::new(5, outer) };
        let start = Instant::now();
        let state = deblur_and_separate_with(&l, &bank_t, &bank_r, &rc, &dc)?;
        println!(
            "{init:?} start, {outer} rounds ({:.1?}): NCC t {:.4}  r {:.4}, kernel L1 error t {:.4}  r {:.4}",
            start.elapsed(),
            ncc(&state.u_t, &vol.layer_t)?,
            ncc(&state.u_r, &vol.layer_r)?,
            state.m_t.l1_distance(&m_t),
            state.m_r.l1_distance(&m_r)
        );
    }
    Ok(())
}
