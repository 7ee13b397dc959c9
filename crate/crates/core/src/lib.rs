//! Orientation-aware shape correspondence with functional maps.
//!
//! The pipeline assembles cotangent and connection Laplacians on triangle
//! meshes, computes truncated generalized eigenbases, estimates a real
//! functional map `C` from descriptor coefficients and a complex functional
//! map `Q` from descriptor gradients, and extracts point-to-point maps from
//! either. The complex map can only represent orientation-preserving maps,
//! which is what lets the orthogonality energy on `Q` separate a shape's
//! direct correspondence from its mirror image.
//!
//! Module layout follows the pipeline order:
//!
//! - [`mesh`]: triangle meshes, OFF/OBJ/PLY I/O, synthetic generators
//! - [`operators`]: cotan Laplacian, tangent frames, gradient, divergence,
//!   connection Laplacian
//! - [`spectral`]: shift-invert Lanczos eigensolver, projections, binary cache
//! - [`descriptors`]: wave kernel signature and linear probes
//! - [`fmap`] / [`qmap`]: map estimation blocks and their energies
//! - [`refine`]: unsupervised descriptor refinement with ADAM
//! - [`convert`]: point-map extraction, orientation, geodesic evaluation
//! - [`pipeline`]: descriptors to maps in one call
//! - [`cli`]: the `duo` command line

pub mod cli;
pub mod convert;
pub mod dense;
pub mod descriptors;
mod error;
pub mod fmap;
pub mod mesh;
pub mod operators;
pub mod pipeline;
pub mod qmap;
pub mod refine;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use convert::{EvalReport, MapMethod, PointMap};
pub use descriptors::{DescriptorKind, DescriptorSet, WksParams};
pub use fmap::{FmapOptions, FunctionalMap};
pub use mesh::{SelfSymmetry, TriangleMesh};
pub use operators::{GradientOperator, TangentFrameField};
pub use qmap::ComplexFunctionalMap;
pub use refine::{LinearProbe, PairState, TrainConfig};
pub use spectral::{ComplexSpectralBasis, RealSpectralBasis};
