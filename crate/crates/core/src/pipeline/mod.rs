//! Dataset generation, transforms and the resistance application.

mod dataset;
mod generate;
mod resistance;
mod transform;

pub use dataset::{fingerprint, read_f64, write_f64, Dataset, Manifest, DDAT_VERSION};
pub use generate::{
    face_trace, gen_dataset_gp, gen_dataset_interpolation, grid_trunk, merge_datasets,
    transform_targets, GpDataSpec, GpFace, SubdomainCut, TraceKind,
};
pub use resistance::{
    conductor_solvers, extract_resistance, resistance_experiment, sample_shapes,
    stretched_encoding, trapezoid, unstretch, ResistanceBinding, ResistanceReport, ResistanceSetup,
    ShapeKind,
};
pub use transform::{Transform, TransformKind};

pub use crate::metrics::mre_re;

/// Independent stream seed derived from `seed` (splitmix64 finalizer).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
