//! File formats, rendering, trace auditing and benchmarking.

pub mod bench;
pub mod render;
pub mod shapefile;
pub mod trace;
pub mod validate;
