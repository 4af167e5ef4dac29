//! Function-space tools: Sobolev norms on the periodic boundary, extension
//! operators into the domain, and the mollified half-space extension.

pub mod extension;
pub mod halfspace;
pub mod norms;

pub use extension::{extend_boundary_to_domain, extend_f_eta, BoundaryExtension, EtaExtension};
pub use halfspace::{build_half_space_extension, HalfSpaceExtension, SampledGraph};
pub use norms::{fractional_norm, multiplier_matrix, multiplier_norm_estimate, sobolev_weight};
