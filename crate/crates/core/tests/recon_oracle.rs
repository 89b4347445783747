//! Reconstruction, simplex projection and blind-deblurring checks against
//! brute-force and synthetic-scene oracles.

use ndarray::Array2;
use plenosep::lightfield::LightFieldImage;
use plenosep::operators::{simulate_with_banks, BlurKernel, TextureVolume};
use plenosep::optics::{build_psf_bank, CameraConfig, PsfKernelBank};
use plenosep::recon::{
    deblur_and_separate, layered_objective, ncc, project_simplex, reconstruct_layers, reconstruct_layers_logged,
    solve_blurs_given_textures, solve_textures_given_blurs, solve_textures_logged, IterationLog, ReconConfig,
};
use plenosep::textures::procedural_texture;
use plenosep::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::brute_force_projection;

#[test]
fn simplex_matches_qp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let v: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.5)).collect();
        let x = project_simplex(&v);
        let y = brute_force_projection(&v);
        let diff = x.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-10, "{v:?}");
        assert_eq!(project_simplex(&x), x);
    }
}

proptest! {
    #[test]
    fn simplex_projection_is_idempotent(v in prop::collection::vec(-100.0f64..100.0, 1..40)) {
        let x = project_simplex(&v);
        prop_assert!(x.iter().all(|&w| w >= 0.0));
        prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(project_simplex(&x), x);
    }
}

struct Scene {
    cfg: CameraConfig,
    vol: TextureVolume,
    bank_t: PsfKernelBank,
    bank_r: PsfKernelBank,
}

fn scene(depth_t: f64, depth_r: f64, seeds: (u64, u64)) -> Scene {
    let cfg = CameraConfig::desk();
    let shape = cfg.texture_size();
    let vol =
        TextureVolume::new(procedural_texture(shape, seeds.0), procedural_texture(shape, seeds.1), depth_t, depth_r)
            .unwrap();
    let bank_t = build_psf_bank(&cfg, depth_t).unwrap();
    let bank_r = build_psf_bank(&cfg, depth_r).unwrap();
    Scene { cfg, vol, bank_t, bank_r }
}

impl Scene {
    fn observe(&self, blurs: (Option<&BlurKernel>, Option<&BlurKernel>)) -> LightFieldImage {
        simulate_with_banks(&self.vol, &self.cfg, &self.bank_t, &self.bank_r, blurs.0, blurs.1, 0.0, 0).unwrap()
    }
}

#[test]
fn layered_gradient_matches_finite_differences() {
    let s = scene(0.35, 1.7, (1, 2));
    let l = s.observe((None, None));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = s.cfg.texture_size();
    let u_t = Array2::from_shape_fn(shape, |_| rng.random::<f64>());
    let u_r = Array2::from_shape_fn(shape, |_| rng.random::<f64>());
    let m = BlurKernel::linear_motion(5, 40.0);
    for (nu, blurs) in [(0.0, (None, None)), (1e-3, (None, None)), (1e-3, (Some(&m), None))] {
        let (_, g_t, g_r) = layered_objective(l.channel(0), &s.bank_t, &s.bank_r, &u_t, &u_r, blurs, nu, 1e-2).unwrap();
        let f = |a: &Array2<f64>, b: &Array2<f64>| {
            layered_objective(l.channel(0), &s.bank_t, &s.bank_r, a, b, blurs, nu, 1e-2).unwrap().0
        };
        let h = 1e-5;
        for _ in 0..15 {
            let q = (rng.random_range(0..shape.0), rng.random_range(0..shape.1));
            for layer in 0..2 {
                let (mut ap, mut bp, mut am, mut bm) = (u_t.clone(), u_r.clone(), u_t.clone(), u_r.clone());
                if layer == 0 {
                    ap[q] += h;
                    am[q] -= h;
                } else {
                    bp[q] += h;
                    bm[q] -= h;
                }
                let fd = (f(&ap, &bp) - f(&am, &bm)) / (2.0 * h);
                let g = if layer == 0 { g_t[q] } else { g_r[q] };
                assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3), "nu {nu} q {q:?}: fd {fd} vs {g}");
            }
        }
    }
}

#[test]
fn zero_observation_gives_zero_layers() {
    let s = scene(0.35, 1.7, (1, 2));
    let l = LightFieldImage::gray(Array2::zeros(s.cfg.sensor_size), &s.cfg).unwrap();
    let rc = ReconConfig { nu: 1e-4, ..Default::default() };
    let est = reconstruct_layers(&l, &s.bank_t, &s.bank_r, &rc).unwrap();
    assert!(est.layer_t.iter().chain(est.layer_r.iter()).all(|&v| v == 0.0));
}

#[test]
fn infinite_observation_diverges() {
    let s = scene(0.35, 1.7, (1, 2));
    let mut px = Array2::zeros(s.cfg.sensor_size);
    px[[40, 40]] = f64::INFINITY;
    let l = LightFieldImage::gray(px, &s.cfg).unwrap();
    let r = reconstruct_layers(&l, &s.bank_t, &s.bank_r, &ReconConfig::default());
    assert!(matches!(r, Err(Error::Diverged(_))));
}

#[test]
fn separated_layers_and_focal_dip() {
    let far = scene(0.35, 1.7, (1, 2));
    let l = far.observe((None, None));
    let rc = ReconConfig::for_observation(&l);
    let (est, log) = reconstruct_layers_logged(&l, &far.bank_t, &far.bank_r, &rc).unwrap();
    let objs = log.objectives();
    assert!(objs.windows(2).all(|w| w[1] < w[0]));
    let far_t = ncc(&est.layer_t, &far.vol.layer_t).unwrap();
    let far_r = ncc(&est.layer_r, &far.vol.layer_r).unwrap();
    assert!(far_t >= 0.90 && far_r >= 0.90, "{far_t} {far_r}");
    assert!(est.layer_t.iter().chain(est.layer_r.iter()).all(|&v| v >= 0.0));

    let focal = scene(0.5, 1.7, (1, 2));
    let l = focal.observe((None, None));
    let est = reconstruct_layers(&l, &focal.bank_t, &focal.bank_r, &ReconConfig::for_observation(&l)).unwrap();
    let focal_t = ncc(&est.layer_t, &focal.vol.layer_t).unwrap();
    assert!(focal_t < far_t, "{focal_t} vs {far_t}");
}

#[test]
fn swapping_banks_swaps_layers() {
    let s = scene(0.35, 1.1, (3, 4));
    let l = s.observe((None, None));
    let rc = ReconConfig { max_iters: 60, ..ReconConfig::for_observation(&l) };
    let a = reconstruct_layers(&l, &s.bank_t, &s.bank_r, &rc).unwrap();
    let b = reconstruct_layers(&l, &s.bank_r, &s.bank_t, &rc).unwrap();
    let scale = a.layer_t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, y) in a.layer_t.iter().zip(b.layer_r.iter()).chain(a.layer_r.iter().zip(b.layer_t.iter())) {
        assert!((x - y).abs() <= 1e-9 * scale);
    }
}

#[test]
fn delta_blurs_reproduce_plain_reconstruction() {
    let s = scene(0.35, 1.7, (5, 6));
    let l = s.observe((None, None));
    let rc = ReconConfig { max_iters: 80, ..ReconConfig::for_observation(&l) };
    let plain = reconstruct_layers(&l, &s.bank_t, &s.bank_r, &rc).unwrap();
    let d = BlurKernel::delta(5);
    let (u_t, u_r) = solve_textures_given_blurs(&l, &s.bank_t, &s.bank_r, &d, &d, &rc).unwrap();
    assert_eq!(u_t, plain.layer_t);
    assert_eq!(u_r, plain.layer_r);
}

#[test]
fn known_box_blurs_are_removed() {
    let s = scene(0.35, 1.7, (7, 8));
    let m = BlurKernel::boxcar(5);
    let l = s.observe((Some(&m), Some(&m)));
    let rc = ReconConfig::for_observation(&l);
    let shape = s.cfg.texture_size();
    let mut log = IterationLog::default();
    let (u_t, u_r) = solve_textures_logged(
        &l,
        &s.bank_t,
        &s.bank_r,
        (Some(&m), Some(&m)),
        (Array2::zeros(shape), Array2::zeros(shape)),
        &rc,
        &mut log,
    )
    .unwrap();
    assert!(log.objectives().windows(2).all(|w| w[1] < w[0]));
    let (nt, nr) = (ncc(&u_t, &s.vol.layer_t).unwrap(), ncc(&u_r, &s.vol.layer_r).unwrap());
    assert!(nt >= 0.85 && nr >= 0.85, "{nt} {nr}");
}

#[test]
fn kernels_from_true_textures() {
    let s = scene(0.35, 1.7, (9, 10));
    let sharp = s.observe((None, None));
    let (kt, kr) = solve_blurs_given_textures(&sharp, &s.bank_t, &s.bank_r, &s.vol.layer_t, &s.vol.layer_r, 5).unwrap();
    let d = BlurKernel::delta(5);
    assert!(kt.l1_distance(&d) < 0.05 && kr.l1_distance(&d) < 0.05);

    let m_t = BlurKernel::linear_motion(5, 30.0);
    let m_r = BlurKernel::linear_motion(5, 100.0);
    let l = s.observe((Some(&m_t), Some(&m_r)));
    let (kt, kr) = solve_blurs_given_textures(&l, &s.bank_t, &s.bank_r, &s.vol.layer_t, &s.vol.layer_r, 5).unwrap();
    assert!(kt.l1_distance(&m_t) < 0.05, "{}", kt.l1_distance(&m_t));
    assert!(kr.l1_distance(&m_r) < 0.05, "{}", kr.l1_distance(&m_r));
    for k in [&kt, &kr] {
        assert!(k.weights().iter().all(|&w| w >= 0.0));
        assert!((k.weights().sum() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn unblurred_input_is_a_fixed_point_of_deblurring() {
    let s = scene(0.35, 1.7, (11, 12));
    let l = s.observe((None, None));
    let rc = ReconConfig::for_observation(&l);
    let state = deblur_and_separate(&l, &s.bank_t, &s.bank_r, &rc, 5, 3).unwrap();
    let d = BlurKernel::delta(5);
    assert!(state.m_t.l1_distance(&d) < 0.05 && state.m_r.l1_distance(&d) < 0.05);
    let plain = reconstruct_layers(&l, &s.bank_t, &s.bank_r, &rc).unwrap();
    assert!(ncc(&state.u_t, &plain.layer_t).unwrap() >= 0.98);
    assert!(ncc(&state.u_r, &plain.layer_r).unwrap() >= 0.98);
    assert!(state.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    assert!(!state.diverged);
}
