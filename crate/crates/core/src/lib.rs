//! Locally supported symplectic and volume-preserving perturbations of
//! diffeomorphisms, with machine-checkable certificates.
//!
//! The crate builds, in local charts:
//!
//! * generating functions and the symplectomorphisms they generate, in both
//!   directions ([`genfn`]);
//! * C^2 correction fields obtained by convolving a disk diffeomorphism's
//!   derivative data against a certified bell kernel ([`interpolation`]);
//! * end-to-end symplectic and volume-preserving extension pipelines with
//!   support, closeness and conservativity certificates ([`extension`]);
//! * contractions of the unit ball, the log-Jacobian distortion functional,
//!   and orbit-grafted perturbations that make the distortion grow linearly
//!   ([`distortion`]);
//! * centralizer diagnostics: commutation residuals, power matching along
//!   orbit meshes, and the eigenvalue obstruction to orbit permutation
//!   ([`centralizer`]).
//!
//! Everything is generic over the working scalar through [`real::Real`]
//! (`f32` or `f64`); the type aliases at the crate root pin `f64`, which is
//! what the shipped tolerances are calibrated for.

pub mod bump;
pub mod centralizer;
pub mod distortion;
pub mod extension;
pub mod genfn;
pub mod interpolation;
pub mod error;
pub mod map;
pub mod probe;
pub mod quadrature;
pub mod real;
pub mod samples;

pub use bump::{make_bell, Bell, RadialCutoff};
pub use error::{Error, Result};
pub use centralizer::{check_commutation, eigenvalue_obstruction, match_power, CommutingPair, PairingReport, PowerMatchReport, ProbeMesh};
pub use distortion::{distortion, linearize_near_zero, perturb_orbit, stable_chart_projection, Contraction, DistortionRecord, GraftedContraction, StableChart};
pub use extension::{build_isotopy, extend_symplectic, extend_volume, lagrangian_certificate, ExtensionOptions, ExtensionResult, IsotopyFamily, LagrangianCertificate};
pub use genfn::{certify_symplectic, generate_map, genfn_from_map, identity_genfn, GeneratingFunction, SymplecticMapLocal};
pub use interpolation::{build_correction, build_interpolating_genfn, convolve_form, Ball, CorrectionField, DiskDiffeo};
pub use map::{newton_invert, newton_root, DomainBox, SampledMap};
pub use quadrature::{path_integral_1form, QuadratureRule};
pub use real::Real;

/// `f64` aliases: the concrete instantiations used by the CLI and the
/// acceptance suite.
pub type SampledMap64 = SampledMap<f64>;
pub type DomainBox64 = DomainBox<f64>;
pub type Bell64 = Bell<f64>;
pub type QuadratureRule64 = QuadratureRule<f64>;
