//! Camera geometry, depth quantization and depth-dependent PSF kernel banks.

mod bank;
mod config;
mod depth;
mod trace;

pub use bank::{build_psf_bank, PhaseKernel, PsfKernelBank};
pub use config::{CameraConfig, CameraPreset};
pub use depth::{make_depth_levels, sweep_depth_grid, DepthLevelSet};
pub use trace::{footprint_microlens_count, trace_point_psf, SparseImage};
