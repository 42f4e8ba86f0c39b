//! L-functional evaluation, minimal L-geodesic solving, space-time parallel
//! transport, and numeric verification of the variation formulas.
//!
//! Everything here works in the substituted parameter s = √τ with
//! X(s) := γ(s²). The L-functional becomes
//! ∫ (½|X′|²_{g(s²)} + 2s²R) ds and the L-geodesic equation becomes
//! ∇_{X′}X′ = 2s²∇R − 4s Ric♯(X′): the singular γ̇/(2τ) term of the τ-form
//! cancels exactly, so τ₁ → 0 needs no special handling.

mod curve;
mod shoot;
mod solve;
mod transport;
mod variation;

pub use curve::{l_action, LCurve};
pub use shoot::shoot;
pub use solve::{
    l_distance, solve_min_lgeodesic, solve_with_options, theta, LGeodesicResult, SolveOptions,
    BOUND_VIOLATIONS, SOLVE_COUNT,
};
pub use transport::{space_time_transport, transport_frame, TransportMap};
pub use variation::{
    dl_boundary, dlambda_dt, first_variation_check, hessian_bound_check, DLambdaDt,
    FirstVariationCheck, HessianBoundReport,
};
