//! Prints the geometry of both camera presets, then renders a two-layer desk
//! scene and writes the raw mosaic and two sub-aperture views as 16-bit PGMs.
//!
//! `cargo run --release --example simulate_camera -- [out_dir] [depth_t] [depth_r]`

use std::path::PathBuf;

use ndarray::{s, Array2};
use plenosep::io::pnm::write_pnm16;
use plenosep::lightfield::rearrange_views;
use plenosep::operators::{simulate_observation, TextureVolume};
use plenosep::optics::{footprint_microlens_count, CameraConfig};
use plenosep::textures::procedural_texture;

fn main() -> plenosep::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map(String::as_str).unwrap_or("out/simulate_camera"));
    let depth_t: f64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0.35);
    let depth_r: f64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(1.7);
    std::fs::create_dir_all(&out)?;

    for (name, cfg) in [("desk", CameraConfig::desk()), ("reference", CameraConfig::reference())] {
        println!(
            "{}: unit cell {:?}, sensor {:?}, texture {:?}, in focus at {:.3} m",
            name,
            cfg.unit_cell,
            cfg.sensor_size,
            cfg.texture_size(),
            cfg.focal_conjugate_depth()
        );
        // a point in the middle of the sensor, in texture pixels
        let (th, tw) = cfg.texture_size();
        let centre = (th as f64 / 2.0, tw as f64 / 2.0);
        for depth in [0.35, 0.5, 0.8, 1.7, 2.3] {
            let n = footprint_microlens_count(&cfg, centre, depth)?;
            println!(
                "  {depth:.2} m: blur {:.3} mm on the MLA, {n} microlenses",
                1e3 * cfg.blur_diameter_on_mla(depth)
            );
        }
    }

    let cfg = CameraConfig::desk();
    let shape = cfg.texture_size();
    let vol = TextureVolume::new(procedural_texture(shape, 1), procedural_texture(shape, 2), depth_t, depth_r)?;
    let lf = simulate_observation(&vol, &cfg, None, None, 0.0, 0)?;
    let peak = lf.channel(0).iter().fold(0.0f64, |m, &v| m.max(v));
    let scale = 65535.0 / peak.max(f64::MIN_POSITIVE);
    write_pnm16(&out.join("mosaic.pgm"), lf.channels(), scale)?;
    write_pnm16(&out.join("layer_t.pgm"), std::slice::from_ref(&vol.layer_t), 65535.0)?;
    write_pnm16(&out.join("layer_r.pgm"), std::slice::from_ref(&vol.layer_r), 65535.0)?;

    // views at opposite ends of the kept offsets show the parallax between layers
    let vt = rearrange_views(&lf)?;
    let last = vt.n_views() - 1;
    for (name, k) in [("view_first.pgm", 0), ("view_last.pgm", last)] {
        let view: Array2<f64> = vt.data.slice(s![.., .., k]).to_owned();
        write_pnm16(&out.join(name), &[view], scale)?;
    }
    println!(
        "desk scene at {depth_t} / {depth_r} m: {} views of {:?} units written to {}",
        vt.n_views(),
        vt.units(),
        out.display()
    );
    Ok(())
}
