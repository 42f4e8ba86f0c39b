//! A-priori bounds driven by the curvature bound C₀: the two-time metric
//! comparison, the L sandwich bound, and the velocity bound along minimal
//! L-geodesics.

use super::flow::FlowManifold;
use super::point::TangentVec;
use crate::error::Result;

/// Bracket for |v|²_{g(τ₁)} in terms of |v|²_{g(τ₂)}, from
/// e^{−2C₀(τ₂−τ₁)} g(τ₂) ≤ g(τ₁) ≤ e^{2C₀(τ₂−τ₁)} g(τ₂). Property-test
/// helper; returns (lower, upper).
pub fn metric_comparison_bound(
    flow: &FlowManifold,
    tau1: f64,
    tau2: f64,
    v: &TangentVec,
) -> Result<(f64, f64)> {
    flow.check_tau(tau1)?;
    flow.check_tau(tau2)?;
    let n2 = super::metric_inner(flow, tau2, v, v)?;
    let c0 = flow.curvature_bound();
    let f = (2.0 * c0 * (tau2 - tau1)).exp();
    Ok((n2 / f, n2 * f))
}

/// Lower and upper sandwich bounds for L(x, τ₁; y, τ₂) in terms of the
/// g(tau_max)-distance ρ between the endpoints:
///
///   e^{−2C₀(T−τ₁)} ρ² / (2(√τ₂ − √τ₁)) − (2/3) d C₀ (τ₂^{3/2} − τ₁^{3/2})
///     ≤ L ≤
///   e^{+2C₀(T−τ₁)} ρ² / (2(√τ₂ − √τ₁)) + (2/3) d C₀ (τ₂^{3/2} − τ₁^{3/2}).
///
/// The kinetic term compares g(τ) for τ ∈ [τ₁, τ₂] against g(T), which costs
/// the exponent 2C₀(T − τ₁); the scalar-curvature term uses |R| ≤ d C₀. The
/// flat torus collapses both sides to ρ²/(2(√τ₂ − √τ₁)) exactly.
pub fn sandwich_bounds(
    flow: &FlowManifold,
    tau1: f64,
    tau2: f64,
    rho_g_t: f64,
) -> Result<(f64, f64)> {
    flow.check_tau(tau1)?;
    flow.check_tau(tau2)?;
    let d = flow.dim() as f64;
    let c0 = flow.curvature_bound();
    let t_end = flow.tau_max();
    let kinetic = rho_g_t * rho_g_t / (2.0 * (tau2.sqrt() - tau1.sqrt()));
    let expf = (2.0 * c0 * (t_end - tau1)).exp();
    let potential = (2.0 / 3.0) * d * c0 * (tau2.powf(1.5) - tau1.powf(1.5));
    Ok((kinetic / expf - potential, kinetic * expf + potential))
}

/// Constants (c₂, C₂) such that τ|γ̇(τ)|²_{g(τ)} ≤ c₂ ρ_{g(T)}(x, y)² + C₂
/// along every minimal L-geodesic from (x, τ₁) to (y, τ₂).
///
/// Route: a mean-value time τ* has
/// τ*|γ̇(τ*)|² ≤ (L + (2/3)dC₀(τ₂^{3/2}−τ₁^{3/2})) / (2(√τ₂−√τ₁)); the
/// quantity u(τ) = τ|γ̇|² obeys |u′| ≤ 2C₀u on the models (∇Rm ≡ 0, so the
/// ∇R forcing is absent and c₁ = e^{2C₀(τ₂−τ₁)}, C₁ = 0); then L is replaced
/// by its sandwich upper bound.
pub fn velocity_bound_constants(flow: &FlowManifold, tau1: f64, tau2: f64) -> Result<(f64, f64)> {
    let d = flow.dim() as f64;
    let c0 = flow.curvature_bound();
    let (_, upper_at_unit_rho) = sandwich_bounds(flow, tau1, tau2, 1.0)?;
    // upper bound decomposes as a·ρ² + b
    let potential = (2.0 / 3.0) * d * c0 * (tau2.powf(1.5) - tau1.powf(1.5));
    let a = upper_at_unit_rho - potential;
    let c1 = (2.0 * c0 * (tau2 - tau1)).exp();
    let denom = 2.0 * (tau2.sqrt() - tau1.sqrt());
    let c2 = c1 * a / denom;
    let cc2 = c1 * 2.0 * potential / denom;
    Ok((c2, cc2))
}

/// Two-sided propagation bracket for u(τ) = τ|γ̇(τ)|² along any L-geodesic:
/// u(τ₀) e^{−2C₀|τ−τ₀|} ≤ u(τ) ≤ u(τ₀) e^{2C₀|τ−τ₀|}.
pub fn velocity_propagation_factor(flow: &FlowManifold, tau_a: f64, tau_b: f64) -> f64 {
    (2.0 * flow.curvature_bound() * (tau_b - tau_a).abs()).exp()
}
