use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Geometry of a microlens-array plenoptic camera.
///
/// All lengths are in meters. The main lens sits at the origin, the
/// microlens array (MLA) `mla_distance` behind it and the sensor a further
/// `sensor_distance` behind the MLA. `unit_cell` is the period of the
/// microlens pattern as seen on the sensor; the MLA pitch is derived from it
/// (microlens images are magnified by `(mla_distance + sensor_distance) / mla_distance`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub main_focal_length: f64,
    pub aperture_diameter: f64,
    pub mla_distance: f64,
    pub microlens_focal_length: f64,
    pub sensor_distance: f64,
    pub pixel_pitch: f64,
    /// Sensor pixels per repeating cell, (height, width).
    pub unit_cell: (usize, usize),
    /// 1 = rectangular lattice, 2 = hexagonal lattice folded into a rectangular super-cell.
    pub microlenses_per_cell: usize,
    pub texture_downsample: usize,
    /// Sensor size in pixels, (height, width).
    pub sensor_size: (usize, usize),
    /// Stratified aperture grid is `aperture_samples x aperture_samples`.
    pub aperture_samples: usize,
}

/// Named presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraPreset {
    /// Small rectangular-lattice camera sized for CPU experiments.
    Desk,
    /// 28x16 hexagonal super-cell camera at full sensor size.
    Reference,
}

impl CameraPreset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(CameraPreset::Desk),
            "reference" => Ok(CameraPreset::Reference),
            other => Err(Error::InvalidArgument(format!(
                "unknown camera preset {other:?} (expected \"desk\" or \"reference\")"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CameraPreset::Desk => "desk",
            CameraPreset::Reference => "reference",
        }
    }

    pub fn config(self) -> CameraConfig {
        match self {
            CameraPreset::Desk => CameraConfig::desk(),
            CameraPreset::Reference => CameraConfig::reference(),
        }
    }
}

impl CameraConfig {
    /// Desk-scale camera: 50 mm f/10 main lens focused at 0.5 m, 12x12 pixel
    /// cells of 10 um pixels, texture at a quarter of sensor resolution.
    ///
    /// The microlens focal length equals the MLA-to-sensor distance and the
    /// main-lens aperture image spans about 10.2 of the 12 cell pixels.
    pub fn desk() -> Self {
        let f = 0.050;
        let focus = 0.5;
        let z = 1.0 / (1.0 / f - 1.0 / focus);
        let d = 0.005;
        let b = 10.2e-5 * z / d;
        CameraConfig {
            main_focal_length: f,
            aperture_diameter: d,
            mla_distance: z,
            microlens_focal_length: b,
            sensor_distance: b,
            pixel_pitch: 10e-6,
            unit_cell: (12, 12),
            microlenses_per_cell: 1,
            texture_downsample: 4,
            sensor_size: (144, 144),
            aperture_samples: 64,
        }
    }

    /// Full-size hexagonal-lattice camera with a 28x16 repeating cell.
    ///
    /// Same main lens as [`CameraConfig::desk`]; this preset is not
    /// calibrated against any commercial camera.
    pub fn reference() -> Self {
        let f = 0.050;
        let focus = 0.5;
        let z = 1.0 / (1.0 / f - 1.0 / focus);
        let d = 0.005;
        let b = 13.6 * 1.4e-6 * z / d;
        CameraConfig {
            main_focal_length: f,
            aperture_diameter: d,
            mla_distance: z,
            microlens_focal_length: b,
            sensor_distance: b,
            pixel_pitch: 1.4e-6,
            unit_cell: (28, 16),
            microlenses_per_cell: 2,
            texture_downsample: 4,
            sensor_size: (6048, 8640),
            aperture_samples: 64,
        }
    }

    /// Same camera with a different sensor size (pixels).
    pub fn with_sensor_units(mut self, units_h: usize, units_w: usize) -> Self {
        self.sensor_size = (units_h * self.unit_cell.0, units_w * self.unit_cell.1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("main_focal_length", self.main_focal_length),
            ("aperture_diameter", self.aperture_diameter),
            ("mla_distance", self.mla_distance),
            ("microlens_focal_length", self.microlens_focal_length),
            ("sensor_distance", self.sensor_distance),
            ("pixel_pitch", self.pixel_pitch),
        ];
        for (name, v) in lengths {
            ensure(v.is_finite() && v > 0.0, || format!("{name} must be positive, got {v}"))?;
        }
        ensure(self.mla_distance > self.main_focal_length, || {
            format!("mla_distance ({}) must exceed main_focal_length ({})", self.mla_distance, self.main_focal_length)
        })?;
        let (uh, uw) = self.unit_cell;
        ensure(uh > 0 && uw > 0, || "unit_cell must be non-empty".into())?;
        ensure(self.texture_downsample >= 1, || "texture_downsample must be >= 1".into())?;
        ensure(uh % self.texture_downsample == 0 && uw % self.texture_downsample == 0, || {
            format!("unit_cell {:?} not divisible by texture_downsample {}", self.unit_cell, self.texture_downsample)
        })?;
        let (sh, sw) = self.sensor_size;
        ensure(sh > 0 && sw > 0 && sh % uh == 0 && sw % uw == 0, || {
            format!("sensor_size {:?} is not a whole number of unit cells {:?}", self.sensor_size, self.unit_cell)
        })?;
        ensure(matches!(self.microlenses_per_cell, 1 | 2), || {
            format!("microlenses_per_cell must be 1 or 2, got {}", self.microlenses_per_cell)
        })?;
        ensure(self.aperture_samples >= 1, || "aperture_samples must be >= 1".into())?;
        Ok(())
    }

    /// Texture pixels per unit cell, (rows, cols).
    pub fn texture_phase_period(&self) -> (usize, usize) {
        (self.unit_cell.0 / self.texture_downsample, self.unit_cell.1 / self.texture_downsample)
    }

    /// Number of unit cells on the sensor, (rows, cols).
    pub fn units(&self) -> (usize, usize) {
        (self.sensor_size.0 / self.unit_cell.0, self.sensor_size.1 / self.unit_cell.1)
    }

    pub fn texture_size(&self) -> (usize, usize) {
        (self.sensor_size.0 / self.texture_downsample, self.sensor_size.1 / self.texture_downsample)
    }

    /// Microlens images are the MLA lattice magnified by this factor on the sensor.
    pub fn lattice_magnification(&self) -> f64 {
        (self.mla_distance + self.sensor_distance) / self.mla_distance
    }

    /// Size of one repeating cell on the MLA plane (m), (rows, cols).
    pub fn mla_cell_pitch(&self) -> (f64, f64) {
        let m = self.lattice_magnification();
        (self.unit_cell.0 as f64 * self.pixel_pitch / m, self.unit_cell.1 as f64 * self.pixel_pitch / m)
    }

    /// Microlens centers inside one cell as fractions of the cell size.
    /// Centers on the cell edge are listed once; lattice neighbours supply the rest.
    pub fn microlens_centers(&self) -> &'static [(f64, f64)] {
        match self.microlenses_per_cell {
            2 => &[(0.25, 0.5), (0.75, 0.0)],
            _ => &[(0.5, 0.5)],
        }
    }

    /// Distance behind the main lens at which a point at `depth` comes to focus.
    pub fn image_distance(&self, depth: f64) -> f64 {
        1.0 / (1.0 / self.main_focal_length - 1.0 / depth)
    }

    /// Scene depth imaged exactly onto the microlens array.
    pub fn focal_conjugate_depth(&self) -> f64 {
        1.0 / (1.0 / self.main_focal_length - 1.0 / self.mla_distance)
    }

    /// Diameter of the main-lens blur circle on the MLA plane (m).
    pub fn blur_diameter_on_mla(&self, depth: f64) -> f64 {
        let v = self.image_distance(depth);
        self.aperture_diameter * (1.0 - self.mla_distance / v).abs()
    }

    /// Human-readable TOML with units in comments.
    pub fn to_toml_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Plenoptic camera geometry. Lengths in meters, sizes in sensor pixels.");
        let _ = writeln!(s, "main_focal_length = {:e}  # m", self.main_focal_length);
        let _ = writeln!(s, "aperture_diameter = {:e}  # m", self.aperture_diameter);
        let _ = writeln!(s, "mla_distance = {:e}  # m, main lens to microlens array", self.mla_distance);
        let _ = writeln!(s, "microlens_focal_length = {:e}  # m", self.microlens_focal_length);
        let _ = writeln!(s, "sensor_distance = {:e}  # m, microlens array to sensor", self.sensor_distance);
        let _ = writeln!(s, "pixel_pitch = {:e}  # m", self.pixel_pitch);
        let _ = writeln!(
            s,
            "unit_cell = [{}, {}]  # px (height, width) of the repeating microlens pattern",
            self.unit_cell.0, self.unit_cell.1
        );
        let _ = writeln!(
            s,
            "microlenses_per_cell = {}  # 1 rectangular, 2 hexagonal super-cell",
            self.microlenses_per_cell
        );
        let _ =
            writeln!(s, "texture_downsample = {}  # sensor px per texture px along each axis", self.texture_downsample);
        let _ = writeln!(s, "sensor_size = [{}, {}]  # px (height, width)", self.sensor_size.0, self.sensor_size.1);
        let _ = writeln!(
            s,
            "aperture_samples = {}  # rays per aperture side (A x A stratified grid)",
            self.aperture_samples
        );
        s
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: CameraConfig =
            toml::from_str(text).map_err(|e| Error::Format { what: "camera config", detail: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        CameraConfig::desk().validate().unwrap();
        CameraConfig::reference().validate().unwrap();
    }

    #[test]
    fn desk_focuses_at_half_meter() {
        let cfg = CameraConfig::desk();
        assert!((cfg.focal_conjugate_depth() - 0.5).abs() < 1e-12);
        assert!(cfg.blur_diameter_on_mla(0.5) < 1e-15);
    }

    #[test]
    fn reference_phase_period() {
        let cfg = CameraConfig::reference();
        assert_eq!(cfg.texture_phase_period(), (7, 4));
        assert_eq!(cfg.units(), (216, 540));
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut cfg = CameraConfig::desk();
        cfg.mla_distance = cfg.main_focal_length * 0.5;
        assert!(cfg.validate().is_err());

        let mut cfg = CameraConfig::desk();
        cfg.texture_downsample = 5;
        assert!(cfg.validate().is_err());

        let mut cfg = CameraConfig::desk();
        cfg.sensor_size = (100, 144);
        assert!(cfg.validate().is_err());

        let mut cfg = CameraConfig::desk();
        cfg.pixel_pitch = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = CameraConfig::reference();
        let text = cfg.to_toml_string();
        assert!(text.contains("# m"));
        let back = CameraConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
