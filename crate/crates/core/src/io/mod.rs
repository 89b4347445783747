//! File formats: portable float/16-bit images, tensor containers, PNG plots.

pub mod plot;
pub mod pnm;
pub mod tensorfile;
