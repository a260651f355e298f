//! Dense temporal correspondence and compression for 4D human-body mesh
//! sequences.
//!
//! Meshes are rendered into panoramic depth maps (PDMs) by an inward-looking
//! concentric-mosaic camera, a per-pixel descriptor network labels body
//! parts, cross-view feature votes yield vertex correspondences, outliers are
//! repaired with temporal and geodesic energies, and the resulting
//! consistent-topology animation is compressed with a parallel autoencoder.

pub mod mesh;
pub mod metrics;
pub mod compress;
pub mod correspond;
pub mod descriptor;
pub mod refine;
pub mod render;
pub mod synth;
