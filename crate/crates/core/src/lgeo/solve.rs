//! Minimal L-geodesic boundary-value solver.
//!
//! Two phases: (a) direct minimization of the discretized action over the
//! interior points of a polyline, started from the frozen-g(τ₂) geodesic
//! interpolant; (b) damped-Newton refinement of the L-exponential shooting
//! residual, seeded with the initial datum Z = lim √τ γ̇ read off the
//! polyline. Phase (a) takes preconditioned descent steps (the flat spring
//! Hessian is inverted by a Thomas sweep) with Armijo line search; plain
//! gradient steps cannot reach the required accuracy on fine grids within
//! the iteration cap.
//!
//! Multistart covers the distinct ways a minimizer can wrap: lattice-shift
//! homotopy classes on torus blocks (ranked by lift distance, pruned by the
//! per-class action lower bound) and both great-circle arcs on sphere
//! blocks. The least action wins; ties break to the lexicographically
//! smallest initial Z, a deterministic stand-in for a measurable selection.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{
    rho, sandwich_bounds, velocity_bound_constants, ChartPoint, FlowManifold, MetricEval,
    SpaceTimePoint, TangentVec,
};
use crate::MAX_DIM;

use super::curve::{l_action, LCurve};
use super::shoot::{integrate, shoot_with_grid, RayState};

pub(crate) const DEFAULT_GRID_N: usize = 256;

/// Geodesics solved process-wide; read by the verification suite.
pub static SOLVE_COUNT: AtomicU64 = AtomicU64::new(0);
/// Converged geodesics violating the sandwich or velocity bound. The
/// acceptance suite requires this to stay at zero.
pub static BOUND_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub grid_n: usize,
    pub max_descent_iters: usize,
    pub newton_iters: usize,
    /// Skip phase (b); the returned curve is the descended polyline.
    pub polyline_only: bool,
    /// Initial datum (chart id, components) from a previous nearby solve.
    /// When Newton from this seed converges and no cheaper wrap class
    /// exists, the multistart is skipped entirely.
    pub warm_start: Option<(usize, Vec<f64>)>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grid_n: DEFAULT_GRID_N,
            max_descent_iters: 500,
            newton_iters: 30,
            polyline_only: false,
            warm_start: None,
        }
    }
}

/// Outcome of a minimal L-geodesic solve.
#[derive(Debug, Clone)]
pub struct LGeodesicResult {
    pub curve: LCurve,
    /// L value; accumulated inside the RK4 shoot when phase (b) converged,
    /// trapezoid quadrature of the polyline otherwise.
    pub action: f64,
    /// Z = lim_{τ↓τ₁} √τ γ̇(τ), based at the start point.
    pub initial_z: TangentVec,
    pub converged: bool,
    /// Distinct near-minimal local minimizers seen across starts; > 1 flags
    /// L-cut-locus suspicion.
    pub multiplicity_hint: usize,
    /// ρ_{g(T)} between the curve endpoint and the target.
    pub boundary_residual: f64,
}

impl LGeodesicResult {
    /// γ̇(τ) = X′(s)/(2s) at the start (`end = false`) or end of the curve.
    pub fn gamma_dot(&self, end: bool) -> Vec<f64> {
        let n = self.curve.n_segments();
        let k = if end { n } else { 0 };
        let s = self.curve.s_grid[k];
        let d = self.curve.dim();
        let vel = match self.curve.velocity(k) {
            Some(v) => v.to_vec(),
            None => self.curve.fd_velocities()[k * d..(k + 1) * d].to_vec(),
        };
        vel.iter().map(|v| v / (2.0 * s)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "curve": self.curve.to_json(),
            "action": self.action,
            "initial_z": self.initial_z.components,
            "converged": self.converged,
            "multiplicity_hint": self.multiplicity_hint,
            "boundary_residual": self.boundary_residual,
        })
    }
}

pub fn solve_min_lgeodesic(
    flow: &FlowManifold,
    x: &SpaceTimePoint,
    y: &SpaceTimePoint,
) -> Result<LGeodesicResult> {
    solve_with_options(flow, x, y, &SolveOptions::default())
}

/// The infimum L(x, τ₁; y, τ₂) of the L-functional over connecting curves.
pub fn l_distance(flow: &FlowManifold, x: &SpaceTimePoint, y: &SpaceTimePoint) -> Result<f64> {
    solve_min_lgeodesic(flow, x, y).map(|r| r.action)
}

/// Θ(t,x,y) = 2(√(τ̄₂t) − √(τ̄₁t)) L(x, τ̄₁t; y, τ̄₂t) − 2d(√(τ̄₂t) − √(τ̄₁t))².
pub fn theta(
    flow: &FlowManifold,
    tau_bar1: f64,
    tau_bar2: f64,
    t: f64,
    x: &ChartPoint,
    y: &ChartPoint,
) -> Result<f64> {
    if !(tau_bar1 < tau_bar2) {
        return Err(Error::InvalidConfig("need tau_bar1 < tau_bar2".into()));
    }
    let (tau1, tau2) = (tau_bar1 * t, tau_bar2 * t);
    let xs = SpaceTimePoint::new(flow, x.chart, x.coords.clone(), tau1)?;
    let ys = SpaceTimePoint::new(flow, y.chart, y.coords.clone(), tau2)?;
    let l = l_distance(flow, &xs, &ys)?;
    Ok(theta_from_action(flow.dim(), tau_bar1, tau_bar2, t, l))
}

/// Θ given an already-computed L value.
pub fn theta_from_action(dim: usize, tau_bar1: f64, tau_bar2: f64, t: f64, action: f64) -> f64 {
    let gap = (tau_bar2 * t).sqrt() - (tau_bar1 * t).sqrt();
    2.0 * gap * action - 2.0 * dim as f64 * gap * gap
}

/// Endpoint data lifted into one working chart. Torus coordinates of `y`
/// stay un-lifted here; lifts are per-candidate.
struct WorkBoundary {
    chart: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

/// One multistart candidate.
struct Candidate {
    y_lift: Vec<f64>,
    sphere_long: bool,
    /// Action lower bound valid for every curve in this wrap class.
    class_lb: f64,
}

struct SolveAttempt {
    curve: LCurve,
    action: f64,
    z: Vec<f64>,
    converged: bool,
    multiplicity: usize,
}

pub fn solve_with_options(
    flow: &FlowManifold,
    x: &SpaceTimePoint,
    y: &SpaceTimePoint,
    opts: &SolveOptions,
) -> Result<LGeodesicResult> {
    let (tau1, tau2) = (x.tau, y.tau);
    flow.check_tau(tau1)?;
    flow.check_tau(tau2)?;
    if !(tau1 < tau2) {
        return Err(Error::InvalidConfig(format!("need tau1 < tau2, got {tau1} >= {tau2}")));
    }
    let wb = working_boundary(flow, x, y)?;

    // Warm fast path, guarded against wrap-class changes and near-cut pairs.
    if let Some((zc, z0)) = &opts.warm_start {
        if !near_cut_heuristic(flow, &wb) {
            if let Some(attempt) = warm_solve(flow, &wb, *zc, z0, tau1, tau2, opts)? {
                return finish(flow, attempt, x, y);
            }
        }
    }

    let candidates = build_candidates(flow, &wb, tau1, tau2);
    let mut best: Option<SolveAttempt> = None;
    let mut near_minimal: Vec<(f64, Vec<f64>)> = Vec::new();

    for cand in &candidates {
        if let Some(b) = &best {
            if b.converged && cand.class_lb > b.action + 1e-9 * (1.0 + b.action.abs()) {
                continue;
            }
        }
        let Ok(attempt) = run_candidate(flow, &wb, cand, tau1, tau2, opts) else { continue };
        if attempt.converged {
            near_minimal.push((attempt.action, attempt.z.clone()));
        }
        let better = match &best {
            None => true,
            Some(b) => {
                let tol = 1e-9 * (1.0 + b.action.abs());
                if attempt.converged != b.converged {
                    attempt.converged
                } else if (attempt.action - b.action).abs() <= tol {
                    lex_less(&attempt.z, &b.z)
                } else {
                    attempt.action < b.action
                }
            }
        };
        if better {
            best = Some(attempt);
        }
    }

    let mut best = best.ok_or_else(|| {
        Error::SolverFailed(format!(
            "no start converged for ({:?}, {tau1}) -> ({:?}, {tau2})",
            x.coords(),
            y.coords()
        ))
    })?;

    // Count distinct near-minimal minimizers across starts.
    let tol_near = 1e-3 * (1.0 + best.action.abs());
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for (a, z) in &near_minimal {
        if *a <= best.action + tol_near {
            let scale = 1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let fresh = clusters
                .iter()
                .all(|c| z.iter().zip(c).any(|(za, zb)| (za - zb).abs() > 1e-4 * scale));
            if fresh {
                clusters.push(z.clone());
            }
        }
    }
    best.multiplicity = clusters.len().max(1);

    finish(flow, best, x, y)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (ai, bi) in a.iter().zip(b) {
        if ai < bi {
            return true;
        }
        if ai > bi {
            return false;
        }
    }
    false
}

/// Express a point's coordinates in the requested sphere chart. Fails only
/// when the point sits exactly at the chart center (the other chart's pole).
fn express_in_chart(flow: &FlowManifold, p: &SpaceTimePoint, chart: usize) -> Option<Vec<f64>> {
    if p.chart() == chart || !flow_has_sphere(flow) {
        return Some(p.coords().to_vec());
    }
    let norm = sphere_block_norm(flow, p.coords());
    if norm < 1e-12 {
        return None;
    }
    let mut coords = p.coords().to_vec();
    flow.chart_transition(p.chart(), &mut coords, None);
    Some(coords)
}

fn flow_has_sphere(flow: &FlowManifold) -> bool {
    flow.blocks().iter().any(|b| b.geom == crate::geometry::BlockGeom::Sphere)
}

fn sphere_block_norm(flow: &FlowManifold, coords: &[f64]) -> f64 {
    for b in flow.blocks() {
        if b.geom == crate::geometry::BlockGeom::Sphere {
            return coords[b.start..b.start + b.dim].iter().map(|v| v * v).sum::<f64>().sqrt();
        }
    }
    0.0
}

fn working_boundary(flow: &FlowManifold, x: &SpaceTimePoint, y: &SpaceTimePoint) -> Result<WorkBoundary> {
    if !flow_has_sphere(flow) {
        return Ok(WorkBoundary { chart: 0, x: x.coords().to_vec(), y: y.coords().to_vec() });
    }
    let mut best: Option<(f64, WorkBoundary)> = None;
    for chart in [0usize, 1] {
        let (Some(xc), Some(yc)) = (express_in_chart(flow, x, chart), express_in_chart(flow, y, chart))
        else {
            continue;
        };
        let cost = sphere_block_norm(flow, &xc).max(sphere_block_norm(flow, &yc));
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, WorkBoundary { chart, x: xc, y: yc }));
        }
    }
    best.map(|(_, wb)| wb)
        .ok_or_else(|| Error::SolverFailed("no usable working chart".into()))
}

/// Sphere-block endpoint angle; the warm path refuses pairs near the cut.
fn near_cut_heuristic(flow: &FlowManifold, wb: &WorkBoundary) -> bool {
    for b in flow.blocks() {
        if b.geom != crate::geometry::BlockGeom::Sphere {
            continue;
        }
        let mut p = [0.0; MAX_DIM + 1];
        let mut q = [0.0; MAX_DIM + 1];
        flow.sphere_embed(b, wb.chart, &wb.x, &mut p[..b.dim + 1]);
        flow.sphere_embed(b, wb.chart, &wb.y, &mut q[..b.dim + 1]);
        let dot: f64 = p[..b.dim + 1].iter().zip(&q[..b.dim + 1]).map(|(a, c)| a * c).sum();
        if dot.clamp(-1.0, 1.0).acos() > 0.75 * std::f64::consts::PI {
            return true;
        }
    }
    false
}

/// Per-axis torus lift of `y` toward the class whose lift is nearest to `e`.
fn nearest_lift(flow: &FlowManifold, y: &[f64], e: &[f64], out: &mut [f64]) {
    out.copy_from_slice(y);
    for b in flow.blocks() {
        if b.geom != crate::geometry::BlockGeom::Flat {
            continue;
        }
        let periods = flow.torus_periods();
        for i in 0..b.dim {
            let p = periods[i];
            let k = ((e[b.start + i] - y[b.start + i]) / p).round();
            out[b.start + i] = y[b.start + i] + k * p;
        }
    }
}

/// Squared lift distance restricted to torus blocks.
fn torus_lift_dist_sq(flow: &FlowManifold, x: &[f64], y_lift: &[f64]) -> f64 {
    let mut acc = 0.0;
    for b in flow.blocks() {
        if b.geom == crate::geometry::BlockGeom::Flat {
            for i in b.start..b.start + b.dim {
                let d = y_lift[i] - x[i];
                acc += d * d;
            }
        }
    }
    acc
}

/// Is the torus class of `y_lift` chord-minimal among all lattice shifts?
fn lift_is_chord_minimal(flow: &FlowManifold, x: &[f64], y_lift: &[f64]) -> bool {
    for b in flow.blocks() {
        if b.geom != crate::geometry::BlockGeom::Flat {
            continue;
        }
        let periods = flow.torus_periods();
        for i in 0..b.dim {
            let p = periods[i];
            let d = (y_lift[b.start + i] - x[b.start + i]).abs();
            if d > 0.5 * p + 1e-12 {
                return false;
            }
        }
    }
    true
}

fn warm_solve(
    flow: &FlowManifold,
    wb: &WorkBoundary,
    z_chart: usize,
    z0: &[f64],
    tau1: f64,
    tau2: f64,
    opts: &SolveOptions,
) -> Result<Option<SolveAttempt>> {
    let d = flow.dim();
    let mut z = z0.to_vec();
    if z_chart != wb.chart && flow_has_sphere(flow) {
        // the seed was expressed at x in the other chart
        if sphere_block_norm(flow, &wb.x) < 1e-12 {
            return Ok(None);
        }
        let mut coords = wb.x.clone();
        flow.chart_transition(wb.chart, &mut coords, None);
        // coords is x in z_chart; push the vector back into wb.chart
        let mut back = coords;
        flow.chart_transition(z_chart, &mut back, Some(&mut z[..]));
    }

    // Probe shot to locate the target lift, then Newton.
    let v0: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
    let (s1, s2) = (tau1.sqrt(), tau2.sqrt());
    let Ok(end) = integrate(flow, &wb.x, &v0, s1, s2, opts.grid_n, None) else {
        return Ok(None);
    };
    let mut y_lift = vec![0.0; d];
    nearest_lift(flow, &wb.y, &end.x[..d], &mut y_lift);
    if !lift_is_chord_minimal(flow, &wb.x, &y_lift) {
        return Ok(None);
    }
    match newton_shoot(flow, wb, &y_lift, &z, tau1, tau2, opts) {
        Ok(Some((z_ref, _))) => {
            let (curve, action) =
                shoot_with_grid(flow, wb.chart, &wb.x, &z_ref, tau1, tau2, opts.grid_n)?;
            Ok(Some(SolveAttempt { curve, action, z: z_ref, converged: true, multiplicity: 1 }))
        }
        _ => Ok(None),
    }
}

/// Candidate starts: lattice-shift classes of torus blocks crossed with the
/// two great-circle arcs of sphere blocks, ranked by class chord length and
/// capped at 1 + 2d.
fn build_candidates(flow: &FlowManifold, wb: &WorkBoundary, tau1: f64, tau2: f64) -> Vec<Candidate> {
    let d = flow.dim();
    let budget = 1 + 2 * d;
    let c0 = flow.curvature_bound();
    let t_end = flow.tau_max();
    let denom = 2.0 * (tau2.sqrt() - tau1.sqrt());
    let potential = (2.0 / 3.0) * d as f64 * c0 * (tau2.powf(1.5) - tau1.powf(1.5));
    let kinetic_factor = (-2.0 * c0 * (t_end - tau1)).exp() / denom;

    // Torus lifts ranked by lift distance.
    let mut lifts: Vec<Vec<f64>> = vec![wb.y.clone()];
    for b in flow.blocks() {
        if b.geom != crate::geometry::BlockGeom::Flat {
            continue;
        }
        let periods = flow.torus_periods();
        let mut expanded = Vec::new();
        for lift in &lifts {
            for i in 0..b.dim {
                for k in [-1.0f64, 1.0] {
                    let mut l = lift.clone();
                    l[b.start + i] += k * periods[i];
                    expanded.push(l);
                }
            }
        }
        lifts.extend(expanded);
    }
    lifts.sort_by(|a, b| {
        torus_lift_dist_sq(flow, &wb.x, a)
            .partial_cmp(&torus_lift_dist_sq(flow, &wb.x, b))
            .unwrap()
            .then_with(|| a.partial_cmp(b).unwrap())
    });
    lifts.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (*x - *y).abs() < 1e-12));

    let arcs: &[bool] = if flow_has_sphere(flow) { &[false, true] } else { &[false] };
    let mut out = Vec::new();
    'outer: for lift in &lifts {
        for &long in arcs {
            if out.len() >= budget {
                break 'outer;
            }
            let lb = kinetic_factor * torus_lift_dist_sq(flow, &wb.x, lift) - potential;
            out.push(Candidate { y_lift: lift.clone(), sphere_long: long, class_lb: lb });
        }
    }
    out
}

/// Frozen-metric geodesic interpolant toward the candidate's lift, sampled
/// uniformly in s (the underlying paths are scale-invariant, so the frozen
/// time does not enter). Returns row-major (n+1) × d points, or None when
/// the candidate's arc is degenerate.
fn init_polyline(
    flow: &FlowManifold,
    wb: &WorkBoundary,
    cand: &Candidate,
    n: usize,
) -> Option<Vec<f64>> {
    let d = flow.dim();
    let mut pts = vec![0.0; (n + 1) * d];
    for b in flow.blocks() {
        let xb = &wb.x[b.start..b.start + b.dim];
        let yb = &cand.y_lift[b.start..b.start + b.dim];
        match b.geom {
            crate::geometry::BlockGeom::Flat => {
                for k in 0..=n {
                    let t = k as f64 / n as f64;
                    for i in 0..b.dim {
                        pts[k * d + b.start + i] = xb[i] + t * (yb[i] - xb[i]);
                    }
                }
            }
            crate::geometry::BlockGeom::Hyperbolic => {
                // geodesic interpolation via the ball log/exp pair
                let v = crate::geometry::hyperbolic_log_block(xb, yb);
                for k in 0..=n {
                    let t = k as f64 / n as f64;
                    let vt: Vec<f64> = v.iter().map(|vi| t * vi).collect();
                    let p = crate::geometry::hyperbolic_exp_block(xb, &vt);
                    pts[k * d + b.start..k * d + b.start + b.dim].copy_from_slice(&p);
                }
            }
            crate::geometry::BlockGeom::Sphere => {
                let m = b.dim + 1;
                let mut p = [0.0; MAX_DIM + 1];
                let mut q = [0.0; MAX_DIM + 1];
                flow.sphere_embed(b, wb.chart, &wb.x, &mut p[..m]);
                flow.sphere_embed(b, wb.chart, &cand.y_lift, &mut q[..m]);
                let cos_t: f64 =
                    p[..m].iter().zip(&q[..m]).map(|(a, c)| a * c).sum::<f64>().clamp(-1.0, 1.0);
                let theta = cos_t.acos();
                // tangential direction at p toward q
                let mut tdir = [0.0; MAX_DIM + 1];
                for i in 0..m {
                    tdir[i] = q[i] - cos_t * p[i];
                }
                let tn = tdir[..m].iter().map(|v| v * v).sum::<f64>().sqrt();
                if tn < 1e-13 {
                    if theta < 1.0 {
                        // coincident endpoints: constant block
                        for k in 0..=n {
                            for i in 0..b.dim {
                                pts[k * d + b.start + i] = xb[i];
                            }
                        }
                        if cand.sphere_long {
                            return None;
                        }
                        continue;
                    }
                    // antipodal: pick a deterministic perpendicular direction
                    let mut idx = 0;
                    for i in 1..m {
                        if p[i].abs() < p[idx].abs() {
                            idx = i;
                        }
                    }
                    for i in 0..m {
                        tdir[i] = -p[idx] * p[i];
                    }
                    tdir[idx] += 1.0;
                }
                let tn = tdir[..m].iter().map(|v| v * v).sum::<f64>().sqrt();
                for ti in tdir[..m].iter_mut() {
                    *ti /= tn;
                }
                let arc = if cand.sphere_long { theta - 2.0 * std::f64::consts::PI } else { theta };
                for k in 0..=n {
                    let alpha = arc * k as f64 / n as f64;
                    let (sin_a, cos_a) = alpha.sin_cos();
                    let mut w = [0.0; MAX_DIM + 1];
                    for i in 0..m {
                        w[i] = cos_a * p[i] + sin_a * tdir[i];
                    }
                    // fixed-chart unembedding; reject arcs running into the pole
                    let denom = if wb.chart == 0 { 1.0 - w[b.dim] } else { 1.0 + w[b.dim] };
                    if denom.abs() < 2e-6 {
                        return None;
                    }
                    for i in 0..b.dim {
                        pts[k * d + b.start + i] = 2.0 * w[i] / denom;
                    }
                }
                
            }
        }
    }
    Some(pts)
}

fn run_candidate(
    flow: &FlowManifold,
    wb: &WorkBoundary,
    cand: &Candidate,
    tau1: f64,
    tau2: f64,
    opts: &SolveOptions,
) -> Result<SolveAttempt> {
    let n = opts.grid_n;
    let d = flow.dim();
    let mut pts = init_polyline(flow, wb, cand, n)
        .ok_or_else(|| Error::SolverFailed("degenerate start".into()))?;

    let descent_converged =
        descend_polyline(flow, &mut pts, tau1, tau2, n, opts.max_descent_iters)?;

    // Z from a second-order one-sided difference of the polyline.
    let h = (tau2.sqrt() - tau1.sqrt()) / n as f64;
    let mut z = vec![0.0; d];
    for i in 0..d {
        let xp = (-3.0 * pts[i] + 4.0 * pts[d + i] - pts[2 * d + i]) / (2.0 * h);
        z[i] = 0.5 * xp;
    }

    if opts.polyline_only {
        let mut curve = LCurve::new(
            flow.clone(),
            wb.chart,
            LCurve::uniform_grid(tau1, tau2, n),
            pts,
            tau1,
            tau2,
        )?;
        curve.velocities = None;
        let action = l_action(&curve);
        return Ok(SolveAttempt { curve, action, z, converged: descent_converged, multiplicity: 1 });
    }

    match newton_shoot(flow, wb, &cand.y_lift, &z, tau1, tau2, opts)? {
        Some((z_ref, _res)) => {
            let (curve, action) =
                shoot_with_grid(flow, wb.chart, &wb.x, &z_ref, tau1, tau2, n)?;
            Ok(SolveAttempt { curve, action, z: z_ref, converged: true, multiplicity: 1 })
        }
        None => {
            // keep the polyline as a non-converged fallback
            let mut curve = LCurve::new(
                flow.clone(),
                wb.chart,
                LCurve::uniform_grid(tau1, tau2, n),
                pts,
                tau1,
                tau2,
            )?;
            curve.velocities = None;
            let action = l_action(&curve);
            Ok(SolveAttempt { curve, action, z, converged: false, multiplicity: 1 })
        }
    }
}

/// Phase (b): damped Newton on the shooting residual E(Z) − y_lift.
/// Returns (Z, chart residual) on convergence.
fn newton_shoot(
    flow: &FlowManifold,
    wb: &WorkBoundary,
    y_lift: &[f64],
    z0: &[f64],
    tau1: f64,
    tau2: f64,
    opts: &SolveOptions,
) -> Result<Option<(Vec<f64>, f64)>> {
    let d = flow.dim();
    let n = opts.grid_n;
    let (s1, s2) = (tau1.sqrt(), tau2.sqrt());
    let scale = 1.0 + y_lift.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;

    let shoot_end = |z: &[f64]| -> Result<RayState> {
        let v0: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        integrate(flow, &wb.x, &v0, s1, s2, n, None)
    };

    let residual = |end: &RayState| -> DVector<f64> {
        DVector::from_iterator(d, (0..d).map(|i| end.x[i] - y_lift[i]))
    };

    let mut z = z0.to_vec();
    let mut end = match shoot_end(&z) {
        Ok(e) => e,
        Err(_) => return Ok(None),
    };
    let mut r = residual(&end);
    for _ in 0..opts.newton_iters {
        let rn = r.amax();
        if rn <= tol {
            return Ok(Some((z, rn)));
        }
        // forward-difference Jacobian
        let mut jac = DMatrix::zeros(d, d);
        let dz = 1e-7 * (1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for j in 0..d {
            let mut zp = z.clone();
            zp[j] += dz;
            let Ok(ep) = shoot_end(&zp) else { return Ok(None) };
            for i in 0..d {
                jac[(i, j)] = (ep.x[i] - end.x[i]) / dz;
            }
        }
        let Some(step) = jac.lu().solve(&r) else { return Ok(None) };
        // backtracking on the residual norm
        let mut lambda = 1.0f64;
        let mut accepted = false;
        for _ in 0..8 {
            let zt: Vec<f64> = (0..d).map(|i| z[i] - lambda * step[i]).collect();
            if let Ok(et) = shoot_end(&zt) {
                let rt = residual(&et);
                if rt.norm() <= (1.0 - 1e-4 * lambda) * r.norm() {
                    z = zt;
                    end = et;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Ok(None);
        }
    }
    let rn = r.amax();
    if rn <= tol {
        return Ok(Some((z, rn)));
    }
    Ok(None)
}

/// Phase (a): preconditioned descent with Armijo line search on the spring
/// discretization of the action (forward differences, midpoint metric).
/// Returns whether the gradient criterion was met within the cap.
fn descend_polyline(
    flow: &FlowManifold,
    pts: &mut [f64],
    tau1: f64,
    tau2: f64,
    n: usize,
    max_iters: usize,
) -> Result<bool> {
    let d = flow.dim();
    let (s1, s2) = (tau1.sqrt(), tau2.sqrt());
    let h = (s2 - s1) / n as f64;

    let mut ev = MetricEval::zero();
    let mut scratch_mid = vec![0.0; d];

    // potential term: spatially constant on the model flows
    let potential: f64 = (0..=n)
        .map(|k| {
            let s = s1 + h * k as f64;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            w * 2.0 * s * s * flow.scalar_curvature(s * s)
        })
        .sum::<f64>()
        * h;

    let spring_action = |pts: &[f64], ev: &mut MetricEval, mid: &mut [f64]| -> f64 {
        if !coords_in_domain(flow, pts, n, d) {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for k in 0..n {
            let sm = s1 + h * (k as f64 + 0.5);
            for i in 0..d {
                mid[i] = 0.5 * (pts[k * d + i] + pts[(k + 1) * d + i]);
            }
            flow.eval_metric(mid, sm * sm, ev);
            let mut seg = 0.0;
            for bi in 0..ev.n_blocks {
                let (st, bd) = ev.spans[bi];
                let l2 = ev.lambda[bi] * ev.lambda[bi];
                let mut dn = 0.0;
                for i in st..st + bd {
                    let di = pts[(k + 1) * d + i] - pts[k * d + i];
                    dn += di * di;
                }
                seg += l2 * dn;
            }
            acc += seg / (2.0 * h);
        }
        acc + potential
    };

    // gradient w.r.t. interior nodes
    let gradient = |pts: &[f64], grad: &mut [f64], ev: &mut MetricEval, mid: &mut [f64]| {
        grad.fill(0.0);
        for k in 0..n {
            let sm = s1 + h * (k as f64 + 0.5);
            for i in 0..d {
                mid[i] = 0.5 * (pts[k * d + i] + pts[(k + 1) * d + i]);
            }
            flow.eval_metric(mid, sm * sm, ev);
            for bi in 0..ev.n_blocks {
                let (st, bd) = ev.spans[bi];
                let l2 = ev.lambda[bi] * ev.lambda[bi];
                let mut dn = 0.0;
                for i in st..st + bd {
                    let di = pts[(k + 1) * d + i] - pts[k * d + i];
                    dn += di * di;
                }
                for i in st..st + bd {
                    let di = pts[(k + 1) * d + i] - pts[k * d + i];
                    let dl = l2 * ev.dphi[i]; // λ² ∂_i φ at the midpoint
                    // endpoint terms of the segment energy
                    if k + 1 <= n - 1 {
                        grad[(k + 1) * d + i] += l2 * di / h + 0.5 * dn * dl / h;
                    }
                    if k >= 1 {
                        grad[k * d + i] += -l2 * di / h + 0.5 * dn * dl / h;
                    }
                }
            }
        }
    };

    // Thomas factorization of (λ̄²/h) tridiag(−1, 2, −1) per block scale
    let mut mean_l2 = vec![0.0; flow.blocks().len()];
    {
        for k in 0..n {
            let sm = s1 + h * (k as f64 + 0.5);
            for i in 0..d {
                scratch_mid[i] = 0.5 * (pts[k * d + i] + pts[(k + 1) * d + i]);
            }
            flow.eval_metric(&scratch_mid, sm * sm, &mut ev);
            for bi in 0..ev.n_blocks {
                mean_l2[bi] += ev.lambda[bi] * ev.lambda[bi] / n as f64;
            }
        }
    }

    let m = n - 1; // interior nodes
    let mut grad = vec![0.0; (n + 1) * d];
    let mut dir = vec![0.0; (n + 1) * d];
    let mut trial = vec![0.0; (n + 1) * d];
    // Thomas sweep scratch
    let mut cp = vec![0.0; m];

    let mut action = spring_action(pts, &mut ev, &mut scratch_mid);
    if !action.is_finite() {
        return Err(Error::SolverFailed("initial polyline outside chart domain".into()));
    }
    let mut converged = false;
    for _ in 0..max_iters {
        gradient(pts, &mut grad, &mut ev, &mut scratch_mid);
        // dir = M⁻¹ grad on interior nodes, per coordinate
        for (bi, b) in flow.blocks().iter().enumerate() {
            let scale = mean_l2[bi] / h;
            for i in b.start..b.start + b.dim {
                // tridiagonal solve: diag 2·scale, off −scale
                let (dm, off) = (2.0 * scale, -scale);
                cp[0] = off / dm;
                dir[d + i] = grad[d + i] / dm;
                for row in 1..m {
                    let denom = dm - off * cp[row - 1];
                    cp[row] = off / denom;
                    dir[(row + 1) * d + i] =
                        (grad[(row + 1) * d + i] - off * dir[row * d + i]) / denom;
                }
                for row in (0..m - 1).rev() {
                    let v = dir[(row + 1) * d + i] - cp[row] * dir[(row + 2) * d + i];
                    dir[(row + 1) * d + i] = v;
                }
            }
        }
        let gp: f64 = grad.iter().zip(&dir).map(|(g, p)| g * p).sum();
        if gp <= 1e-13 * (1.0 + action.abs()) {
            converged = true;
            break;
        }
        // Armijo backtracking
        let mut t = 1.0f64;
        let mut accepted = false;
        for _ in 0..25 {
            trial.copy_from_slice(pts);
            for k in 1..n {
                for i in 0..d {
                    trial[k * d + i] -= t * dir[k * d + i];
                }
            }
            let a_new = spring_action(&trial, &mut ev, &mut scratch_mid);
            if a_new <= action - 1e-4 * t * gp {
                pts.copy_from_slice(&trial);
                action = a_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(converged)
}

fn coords_in_domain(flow: &FlowManifold, pts: &[f64], n: usize, d: usize) -> bool {
    for b in flow.blocks() {
        match b.geom {
            crate::geometry::BlockGeom::Sphere => {
                for k in 0..=n {
                    let nn: f64 = pts[k * d + b.start..k * d + b.start + b.dim]
                        .iter()
                        .map(|v| v * v)
                        .sum();
                    if nn > 1e6 {
                        return false;
                    }
                }
            }
            crate::geometry::BlockGeom::Hyperbolic => {
                for k in 0..=n {
                    let nn: f64 = pts[k * d + b.start..k * d + b.start + b.dim]
                        .iter()
                        .map(|v| v * v)
                        .sum();
                    if nn >= 0.998 {
                        return false;
                    }
                }
            }
            crate::geometry::BlockGeom::Flat => {}
        }
    }
    true
}

/// Canonicalize the attempt into the public result and account the a-priori
/// bound checks.
fn finish(
    flow: &FlowManifold,
    attempt: SolveAttempt,
    x: &SpaceTimePoint,
    y: &SpaceTimePoint,
) -> Result<LGeodesicResult> {
    let t_end = flow.tau_max();
    let endpoint = attempt.curve.endpoint(true);
    let residual = rho(flow, t_end, &endpoint.pos, &y.pos)?;
    let converged = attempt.converged && residual <= 1e-7;

    // express Z at x in x's canonical chart
    let mut z = attempt.z.clone();
    if attempt.curve.chart != x.chart() && flow_has_sphere(flow) {
        let mut coords = attempt.curve.point(0).to_vec();
        flow.chart_transition(attempt.curve.chart, &mut coords, Some(&mut z[..]));
    }
    let initial_z = TangentVec::new(x.clone(), z)?;

    SOLVE_COUNT.fetch_add(1, Ordering::Relaxed);
    if converged {
        let rho_t = rho(flow, t_end, &x.pos, &y.pos)?;
        let (lo, hi) = sandwich_bounds(flow, x.tau, y.tau, rho_t)?;
        let tol = 1e-8 * (1.0 + attempt.action.abs().max(hi.abs()));
        let mut ok = attempt.action >= lo - tol && attempt.action <= hi + tol;

        // velocity bound: max over nodes of τ|γ̇|² = |X′|²_g / 4
        let (c2, cc2) = velocity_bound_constants(flow, x.tau, y.tau)?;
        let cap = c2 * rho_t * rho_t + cc2;
        let mut ev = MetricEval::zero();
        if let Some(vel) = &attempt.curve.velocities {
            let d = flow.dim();
            for k in 0..=attempt.curve.n_segments() {
                let s = attempt.curve.s_grid[k];
                flow.eval_metric(attempt.curve.point(k), s * s, &mut ev);
                let u = 0.25 * ev.norm_sq(&vel[k * d..(k + 1) * d]);
                if u > cap + 1e-8 * (1.0 + cap) {
                    ok = false;
                }
            }
        }
        if !ok {
            BOUND_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
        }
    }

    Ok(LGeodesicResult {
        curve: attempt.curve,
        action: attempt.action,
        initial_z,
        converged,
        multiplicity_hint: attempt.multiplicity,
        boundary_residual: residual,
    })
}
