//! Numeric verification layer for the first/second variation of Λ(t, x, y)
//! = L(x, τ̄₁t; y, τ̄₂t): boundary derivatives of L, ∂Λ/∂t in both its
//! boundary and integral forms, the directional first variation, and the
//! traced Hessian upper bound with its combined inequality.

use crate::error::{Error, Result};
use crate::geometry::{
    frozen_exp, section_frame, ChartPoint, FlowManifold, Frame, MetricEval, SpaceTimePoint,
    TangentVec,
};
use crate::MAX_DIM;

use super::curve::LCurve;
use super::solve::{solve_min_lgeodesic, solve_with_options, LGeodesicResult, SolveOptions};
use super::transport::transport_components;

/// (∂L/∂τ₁, ∂L/∂τ₂) at a converged minimizer:
/// ∂L/∂τ₁ = −√τ₁ (R(x) − |γ̇(τ₁)|²), ∂L/∂τ₂ = √τ₂ (R(y) − |γ̇(τ₂)|²).
pub fn dl_boundary(flow: &FlowManifold, result: &LGeodesicResult) -> Result<(f64, f64)> {
    if !result.converged {
        return Err(Error::SolverFailed("dl_boundary needs a converged geodesic".into()));
    }
    let (tau1, tau2) = (result.curve.tau1, result.curve.tau2);
    if tau1 <= 0.0 {
        return Err(Error::InvalidConfig("dl_boundary undefined at tau1 = 0".into()));
    }
    let g1 = speed_sq_at(flow, &result.curve, false)?;
    let g2 = speed_sq_at(flow, &result.curve, true)?;
    let r1 = flow.scalar_curvature(tau1);
    let r2 = flow.scalar_curvature(tau2);
    Ok((-tau1.sqrt() * (r1 - g1), tau2.sqrt() * (r2 - g2)))
}

/// |γ̇(τ)|²_{g(τ)} at a curve endpoint, γ̇ = X′/(2s).
fn speed_sq_at(flow: &FlowManifold, curve: &LCurve, end: bool) -> Result<f64> {
    let n = curve.n_segments();
    let k = if end { n } else { 0 };
    let d = curve.dim();
    let s = curve.s_grid[k];
    let vel = match curve.velocity(k) {
        Some(v) => v.to_vec(),
        None => curve.fd_velocities()[k * d..(k + 1) * d].to_vec(),
    };
    let mut ev = MetricEval::zero();
    flow.eval_metric(curve.point(k), s * s, &mut ev);
    Ok(ev.norm_sq(&vel) / (4.0 * s * s))
}

/// Both forms of ∂Λ/∂t at a converged minimizer.
#[derive(Debug, Clone)]
pub struct DLambdaDt {
    /// (1/t) [τ₂^{3/2}(R − |γ̇|²) − τ₁^{3/2}(R − |γ̇|²)].
    pub boundary_form: f64,
    /// (1/t) ∫ τ^{3/2} ( (3/2τ)R − ΔR − 2|Ric|² − |γ̇|²/(2τ) + 2Ric(γ̇,γ̇) ) dτ.
    pub integral_form: f64,
}

/// Computes both forms and returns them; callers that need one number take
/// the integral form.
pub fn dlambda_dt(flow: &FlowManifold, t: f64, result: &LGeodesicResult) -> Result<DLambdaDt> {
    if !result.converged {
        return Err(Error::SolverFailed("dlambda_dt needs a converged geodesic".into()));
    }
    let curve = &result.curve;
    let (tau1, tau2) = (curve.tau1, curve.tau2);
    let g1 = speed_sq_at(flow, curve, false)?;
    let g2 = speed_sq_at(flow, curve, true)?;
    let boundary = (tau2.powf(1.5) * (flow.scalar_curvature(tau2) - g2)
        - tau1.powf(1.5) * (flow.scalar_curvature(tau1) - g1))
        / t;

    // integral form: trapezoid over the s grid, dτ = 2s ds
    let d = curve.dim();
    let n = curve.n_segments();
    let vel_store;
    let vel: &[f64] = match &curve.velocities {
        Some(v) => v,
        None => {
            vel_store = curve.fd_velocities();
            &vel_store
        }
    };
    let mut ev = MetricEval::zero();
    let h = (curve.s_grid[n] - curve.s_grid[0]) / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let s = curve.s_grid[k];
        let tau = s * s;
        flow.eval_metric(curve.point(k), tau, &mut ev);
        let xp = &vel[k * d..(k + 1) * d];
        let speed_sq = ev.norm_sq(xp) / (4.0 * tau);
        let ric_gg = ev.ricci(xp, xp) / (4.0 * tau);
        let r = flow.scalar_curvature(tau);
        let ric2 = flow.ricci_norm_sq(tau);
        let integrand = tau.powf(1.5)
            * (1.5 * r / tau - 2.0 * ric2 - 0.5 * speed_sq / tau + 2.0 * ric_gg);
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * integrand * 2.0 * s;
    }
    Ok(DLambdaDt { boundary_form: boundary, integral_form: acc * h / t })
}

/// First-variation check data for one frame direction.
#[derive(Debug, Clone)]
pub struct FirstVariationCheck {
    pub formula: Vec<f64>,
    pub finite_difference: Vec<f64>,
}

/// Directional derivative of Λ in the coupled directions
/// (√(2τ̄₁) uᵢ, √(2τ̄₂) uᵢ*) against the closed form
/// √(2t) τ̄₂ ⟨uᵢ*, γ̇(τ̄₂t)⟩ − √(2t) τ̄₁ ⟨uᵢ, γ̇(τ̄₁t)⟩,
/// where uᵢ* is the space-time parallel transport of uᵢ.
pub fn first_variation_check(
    flow: &FlowManifold,
    tau_bar1: f64,
    tau_bar2: f64,
    t: f64,
    x: &ChartPoint,
    y: &ChartPoint,
    fd_step: f64,
) -> Result<FirstVariationCheck> {
    let (tau1, tau2) = (tau_bar1 * t, tau_bar2 * t);
    let xs = SpaceTimePoint::new(flow, x.chart, x.coords.clone(), tau1)?;
    let ys = SpaceTimePoint::new(flow, y.chart, y.coords.clone(), tau2)?;
    let base = solve_min_lgeodesic(flow, &xs, &ys)?;
    if !base.converged {
        return Err(Error::SolverFailed("first variation needs a converged geodesic".into()));
    }
    let frame = section_frame(flow, tau1, &xs.pos)?;
    let moved = transport_frame_components(flow, &base.curve, &frame)?;

    let gdot1 = base.gamma_dot(false);
    let gdot2 = base.gamma_dot(true);
    let end = base.curve.endpoint(true);
    let mut ev1 = MetricEval::zero();
    flow.eval_metric(xs.coords(), tau1, &mut ev1);
    let mut ev2 = MetricEval::zero();
    flow.eval_metric(end.coords(), tau2, &mut ev2);

    let d = flow.dim();
    let mut formula = Vec::with_capacity(d);
    let mut fd = Vec::with_capacity(d);
    let st = (2.0 * t).sqrt();
    for i in 0..d {
        let ui = &frame.vectors[i];
        let vi = &moved[i];
        formula.push(
            st * tau_bar2 * ev2.inner(vi, &gdot2) - st * tau_bar1 * ev1.inner(ui, &gdot1),
        );

        // symmetric difference of Λ along coupled frozen-exp rays
        let mut lam = [0.0; 2];
        for (slot, sign) in [(0usize, 1.0f64), (1usize, -1.0f64)] {
            let hx = sign * fd_step * (2.0 * tau_bar1).sqrt();
            let hy = sign * fd_step * (2.0 * tau_bar2).sqrt();
            let vx = TangentVec::new(xs.clone(), ui.iter().map(|c| c * hx).collect())?;
            let vy = TangentVec::new(end.clone(), vi.iter().map(|c| c * hy).collect())?;
            let xh = frozen_exp(flow, tau1, &xs.pos, &vx)?;
            let yh = frozen_exp(flow, tau2, &end.pos, &vy)?;
            let xsp = SpaceTimePoint { pos: xh, tau: tau1 };
            let ysp = SpaceTimePoint { pos: yh, tau: tau2 };
            let warm = SolveOptions {
                warm_start: Some((base.initial_z.base.chart(), base.initial_z.components.clone())),
                ..SolveOptions::default()
            };
            lam[slot] = solve_with_options(flow, &xsp, &ysp, &warm)?.action;
        }
        fd.push((lam[0] - lam[1]) / (2.0 * fd_step));
    }
    Ok(FirstVariationCheck { formula, finite_difference: fd })
}

/// Transport every frame vector along the curve; plain components, no
/// re-orthonormalization (the isometry keeps them orthonormal to RK4 error).
fn transport_frame_components(
    flow: &FlowManifold,
    curve: &LCurve,
    frame: &Frame,
) -> Result<Vec<Vec<f64>>> {
    let d = flow.dim();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut z = [0.0; MAX_DIM];
        let mut comps = frame.vectors[i].clone();
        if frame.base.chart() != curve.chart {
            let mut coords = frame.base.coords().to_vec();
            flow.chart_transition(frame.base.chart(), &mut coords, Some(&mut comps[..]));
        }
        z[..d].copy_from_slice(&comps);
        transport_components(flow, curve, &mut z)?;
        // express at the canonical endpoint chart
        let end = curve.endpoint(true);
        let mut zv = z[..d].to_vec();
        if end.chart() != curve.chart {
            let mut coords = curve.point(curve.n_segments()).to_vec();
            flow.chart_transition(curve.chart, &mut coords, Some(&mut zv[..]));
        }
        out.push(zv);
    }
    Ok(out)
}

/// Report of the traced Hessian upper bound and the combined inequality.
#[derive(Debug, Clone)]
pub struct HessianBoundReport {
    /// Σᵢ Hess Λ(ξᵢ, ξᵢ) by Richardson-extrapolated second differences.
    pub hessian_sum: f64,
    /// d√τ/t |₁² + (1/t)∫τ^{3/2}(2|Ric|² + ΔR − 2R/τ − 2Ric(γ̇,γ̇))dτ.
    pub rhs_direct: f64,
    /// Same bound assembled per-direction through the H-form route.
    pub rhs_via_h: f64,
    pub dlambda: DLambdaDt,
    pub lambda: f64,
    /// d(√τ̄₂ − √τ̄₁)/√t − Λ/(2t).
    pub combined_rhs: f64,
    pub multiplicity_hint: usize,
    /// hessian_sum ≤ rhs_direct + tol with tol = 1e-3 (1 + |rhs|).
    pub hessian_ok: bool,
    /// hessian_sum + ∂Λ/∂t ≤ combined_rhs + tol.
    pub combined_ok: bool,
}

/// Verifies the Hessian upper bound and the combined inequality at one
/// configuration. The variation directions are ξᵢ = Zᵢ(τ₁) ⊕ Zᵢ(τ₂) with
/// Zᵢ(τ) = √(τ/t) Zᵢ*(τ) and Zᵢ* the space-time parallel frame.
pub fn hessian_bound_check(
    flow: &FlowManifold,
    tau_bar1: f64,
    tau_bar2: f64,
    t: f64,
    x: &ChartPoint,
    y: &ChartPoint,
) -> Result<HessianBoundReport> {
    let (tau1, tau2) = (tau_bar1 * t, tau_bar2 * t);
    let xs = SpaceTimePoint::new(flow, x.chart, x.coords.clone(), tau1)?;
    let ys = SpaceTimePoint::new(flow, y.chart, y.coords.clone(), tau2)?;
    let base = solve_min_lgeodesic(flow, &xs, &ys)?;
    if !base.converged {
        return Err(Error::SolverFailed("hessian check needs a converged geodesic".into()));
    }
    let d = flow.dim();
    let curve = &base.curve;
    let n = curve.n_segments();

    // space-time parallel frame along the curve, sampled at every node
    let frame = section_frame(flow, tau1, &xs.pos)?;
    let frame_samples = transport_frame_samples(flow, curve, &frame)?;

    // (ii) second differences of Λ along coupled frozen-exp variations
    let end = curve.endpoint(true);
    let lam0 = base.action;
    let mut hessian_sum = 0.0;
    for i in 0..d {
        let zi1: Vec<f64> = frame.vectors[i].iter().map(|c| c * (tau1 / t).sqrt()).collect();
        let zi2: Vec<f64> =
            frame_samples[i][n * d..(n + 1) * d].iter().map(|c| c * (tau2 / t).sqrt()).collect();
        // zi2 is in the working chart; express at the canonical endpoint
        let mut zi2 = zi2;
        if end.chart() != curve.chart {
            let mut coords = curve.point(n).to_vec();
            flow.chart_transition(curve.chart, &mut coords, Some(&mut zi2[..]));
        }
        let lam_at = |h: f64| -> Result<f64> {
            let vx = TangentVec::new(xs.clone(), zi1.iter().map(|c| c * h).collect())?;
            let vy = TangentVec::new(end.clone(), zi2.iter().map(|c| c * h).collect())?;
            let xh = frozen_exp(flow, tau1, &xs.pos, &vx)?;
            let yh = frozen_exp(flow, tau2, &end.pos, &vy)?;
            let warm = SolveOptions {
                warm_start: Some((base.initial_z.base.chart(), base.initial_z.components.clone())),
                ..SolveOptions::default()
            };
            let xsp = SpaceTimePoint { pos: xh, tau: tau1 };
            let ysp = SpaceTimePoint { pos: yh, tau: tau2 };
            Ok(solve_with_options(flow, &xsp, &ysp, &warm)?.action)
        };
        let second_diff = |h: f64| -> Result<f64> {
            Ok((lam_at(h)? - 2.0 * lam0 + lam_at(-h)?) / (h * h))
        };
        let d1 = second_diff(1e-2)?;
        let d2 = second_diff(5e-3)?;
        hessian_sum += (4.0 * d2 - d1) / 3.0; // Richardson: kills the O(h²) term
    }

    // (iii) the right-hand side, directly and through the H-form
    let h_grid = (curve.s_grid[n] - curve.s_grid[0]) / n as f64;
    let vel = curve.velocities.as_ref().expect("shot curve carries velocities");
    let mut ev = MetricEval::zero();
    let mut rhs_int = 0.0;
    let mut h_int = vec![0.0; d]; // ∫ √τ H(γ̇, Zᵢ) dτ per direction
    for k in 0..=n {
        let s = curve.s_grid[k];
        let tau = s * s;
        flow.eval_metric(curve.point(k), tau, &mut ev);
        let xp = &vel[k * d..(k + 1) * d];
        let mut gdot = [0.0; MAX_DIM];
        for i in 0..d {
            gdot[i] = xp[i] / (2.0 * s);
        }
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        let ric_gg = ev.ricci(&gdot[..d], &gdot[..d]);
        let r = flow.scalar_curvature(tau);
        let ric2 = flow.ricci_norm_sq(tau);
        rhs_int += w
            * tau.powf(1.5)
            * (2.0 * ric2 - 2.0 * r / tau - 2.0 * ric_gg)
            * 2.0
            * s;
        for i in 0..d {
            let zi: Vec<f64> = frame_samples[i][k * d..(k + 1) * d]
                .iter()
                .map(|c| c * (tau / t).sqrt())
                .collect();
            let h_val = crate::geometry::h_form_eval(&ev, tau, &gdot[..d], &zi);
            h_int[i] += w * s.sqrt() * h_val * 2.0 * s;
        }
    }
    rhs_int *= h_grid / t;
    let boundary = d as f64 * (tau2.sqrt() - tau1.sqrt()) / t;
    let rhs_direct = boundary + rhs_int;

    // H-form route: Σᵢ [ −∫√τ H dτ + (√τ/t − 2√τ Ric(Zᵢ,Zᵢ))|₁² ]
    let mut rhs_via_h = 0.0;
    {
        let mut ev1 = MetricEval::zero();
        flow.eval_metric(curve.point(0), tau1, &mut ev1);
        let mut ev2 = MetricEval::zero();
        flow.eval_metric(curve.point(n), tau2, &mut ev2);
        for i in 0..d {
            let z1: Vec<f64> =
                frame_samples[i][..d].iter().map(|c| c * (tau1 / t).sqrt()).collect();
            let z2: Vec<f64> =
                frame_samples[i][n * d..(n + 1) * d].iter().map(|c| c * (tau2 / t).sqrt()).collect();
            let b2 = tau2.sqrt() / t - 2.0 * tau2.sqrt() * ev2.ricci(&z2, &z2);
            let b1 = tau1.sqrt() / t - 2.0 * tau1.sqrt() * ev1.ricci(&z1, &z1);
            rhs_via_h += -h_int[i] * h_grid + (b2 - b1);
        }
    }

    let dlambda = dlambda_dt(flow, t, &base)?;
    let lambda = base.action;
    let combined_rhs = d as f64 * (tau_bar2.sqrt() - tau_bar1.sqrt()) / t.sqrt() - lambda / (2.0 * t);
    let tol = 1e-3 * (1.0 + rhs_direct.abs());
    let hessian_ok = hessian_sum <= rhs_direct + tol;
    let combined_tol = 1e-3 * (1.0 + combined_rhs.abs());
    let combined_ok = hessian_sum + dlambda.integral_form <= combined_rhs + combined_tol;

    Ok(HessianBoundReport {
        hessian_sum,
        rhs_direct,
        rhs_via_h,
        dlambda,
        lambda,
        combined_rhs,
        multiplicity_hint: base.multiplicity_hint,
        hessian_ok,
        combined_ok,
    })
}

/// Transport each frame vector along the curve, recording components at
/// every node: result[i] is (n+1) × d in the curve's working chart.
pub(crate) fn transport_frame_samples(
    flow: &FlowManifold,
    curve: &LCurve,
    frame: &Frame,
) -> Result<Vec<Vec<f64>>> {
    let d = flow.dim();
    let mut out = Vec::with_capacity(frame.vectors.len());
    for i in 0..frame.vectors.len() {
        let mut comps = frame.vectors[i].clone();
        if frame.base.chart() != curve.chart {
            let mut coords = frame.base.coords().to_vec();
            flow.chart_transition(frame.base.chart(), &mut coords, Some(&mut comps[..]));
        }
        out.push(super::transport::transport_with_samples(flow, curve, &comps)?);
    }
    Ok(out)
}

