//! Tube boundaries, admissibility checks and ray-boundary intersection.

mod chord;
mod fourier;
mod intersect;
mod profile;
mod validate;
mod vec2;

pub use chord::{annulus_chord, annulus_chord_scaled, critical_cot_squared, ChordSolution};
pub use fourier::{FourierSeries, Jet, MAX_HARMONICS};
pub(crate) use intersect::trace;
pub use intersect::{
    ray_intersect, RayHit, BISECTION_WIDTH, DELTA_MIN_FRACTION, MARCH_FRACTION, T_MAX,
};
pub use profile::{
    annulus_half_support, annulus_jump_sup, wrap_angle, BoundaryPoint, ProfileMode, ProfileSpec,
    Side, TubeProfile, ANNULUS_EPSILON_MAX, PERTURBED_EPSILON_MAX,
};
pub use validate::{validate_profile, ProfileCheck, ValidationReport, VALIDATION_GRID};
pub use vec2::Vec2;
