//! Frozen-metric operations: inner products, orthonormalization, the
//! exponential map of a fixed g(τ), and geodesic distance.

use super::curvature::MetricEval;
use super::flow::{dot, sqnorm, Block, BlockGeom, ChartPoint, FlowManifold};
use super::point::{Frame, SpaceTimePoint, TangentVec};
use crate::error::{Error, Result};
use crate::MAX_DIM;

/// ⟨v, w⟩_{g(τ)} at the common base point of `v` and `w`.
pub fn metric_inner(flow: &FlowManifold, tau: f64, v: &TangentVec, w: &TangentVec) -> Result<f64> {
    if v.base.pos != w.base.pos {
        return Err(Error::BaseMismatch);
    }
    flow.check_tau(tau)?;
    let mut ev = MetricEval::zero();
    flow.eval_metric(v.base.coords(), tau, &mut ev);
    Ok(ev.inner(&v.components, &w.components))
}

/// Norm |v|_{g(τ)}.
pub fn metric_norm(flow: &FlowManifold, tau: f64, v: &TangentVec) -> Result<f64> {
    metric_inner(flow, tau, v, v).map(f64::sqrt)
}

/// Modified Gram–Schmidt in the g(τ) inner product, processing vectors in
/// index order so the result is deterministic. Rejects inputs whose
/// effective condition exceeds 1e12.
pub fn gram_schmidt(flow: &FlowManifold, tau: f64, vectors: &[TangentVec]) -> Result<Frame> {
    let d = flow.dim();
    if vectors.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: vectors.len() });
    }
    let base = vectors[0].base.clone();
    for v in vectors {
        if v.base.pos != base.pos {
            return Err(Error::BaseMismatch);
        }
    }
    flow.check_tau(tau)?;
    let mut ev = MetricEval::zero();
    flow.eval_metric(base.coords(), tau, &mut ev);

    let mut out: Vec<Vec<f64>> = Vec::with_capacity(d);
    for v in vectors {
        let mut w = v.components.clone();
        for u in &out {
            let c = ev.inner(&w, u);
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= c * ui;
            }
        }
        let norm = ev.norm_sq(&w).sqrt();
        let input_norm = ev.norm_sq(&v.components).sqrt().max(f64::MIN_POSITIVE);
        if !(norm > 1e-12 * input_norm) {
            return Err(Error::RankDeficient { cond: input_norm / norm.max(f64::MIN_POSITIVE) });
        }
        for wi in w.iter_mut() {
            *wi /= norm;
        }
        out.push(w);
    }
    let base = SpaceTimePoint { pos: base.pos, tau };
    Ok(Frame { base, vectors: out })
}

/// The measurable orthonormal section Φ^{(τ)}(x): Gram–Schmidt of the chart
/// coordinate basis at x w.r.t. g(τ). For the block-conformal models this is
/// the coordinate basis scaled by 1/λ_b.
pub fn section_frame(flow: &FlowManifold, tau: f64, pos: &ChartPoint) -> Result<Frame> {
    flow.check_tau(tau)?;
    let d = flow.dim();
    let mut ev = MetricEval::zero();
    flow.eval_metric(&pos.coords, tau, &mut ev);
    let mut vectors = Vec::with_capacity(d);
    for (bi, b) in flow.blocks().iter().enumerate() {
        for i in 0..b.dim {
            let mut v = vec![0.0; d];
            v[b.start + i] = 1.0 / ev.lambda[bi];
            vectors.push(v);
        }
    }
    let base = SpaceTimePoint { pos: pos.clone(), tau };
    Ok(Frame { base, vectors })
}

/// Scratch-level exponential map of the frozen metric g(τ): closed forms per
/// model. Writes the endpoint (canonical chart) and returns its chart id.
pub(crate) fn exp_chart(
    flow: &FlowManifold,
    tau: f64,
    chart: usize,
    x: &[f64],
    v: &[f64],
) -> Result<ChartPoint> {
    let d = flow.dim();
    let mut out = vec![0.0; d];
    let mut out_chart = chart;
    for b in flow.blocks() {
        let xb = &x[b.start..b.start + b.dim];
        let vb = &v[b.start..b.start + b.dim];
        match b.geom {
            BlockGeom::Flat => {
                for i in 0..b.dim {
                    out[b.start + i] = xb[i] + vb[i];
                }
            }
            BlockGeom::Sphere => {
                let r = self_scale_sqrt(flow, b, tau);
                // embed on the unit sphere, rotate by the metric angle
                let mut p = [0.0; MAX_DIM + 1];
                let mut vv = [0.0; MAX_DIM + 1];
                flow.sphere_embed(b, chart, x, &mut p[..b.dim + 1]);
                flow.sphere_embed_tangent(b, chart, x, v, &mut vv[..b.dim + 1]);
                let speed = sqnorm(&vv[..b.dim + 1]).sqrt(); // = |v|_{g(τ)} / r
                let theta = speed;
                let guard = std::f64::consts::PI;
                if theta >= guard {
                    return Err(Error::StepTooLarge { norm: theta * r, guard: guard * r });
                }
                if theta > 0.0 {
                    let (sin_t, cos_t) = theta.sin_cos();
                    for i in 0..=b.dim {
                        p[i] = cos_t * p[i] + sin_t * vv[i] / speed;
                    }
                }
                let (c, u) = flow.sphere_unembed(b, &p[..b.dim + 1]);
                // sphere block dictates the chart id of the whole point
                out_chart = c;
                out[b.start..b.start + b.dim].copy_from_slice(&u);
            }
            BlockGeom::Hyperbolic => {
                // Poincaré-ball geodesics are invariant under constant metric
                // scaling, so the curvature −1 gyro formula applies directly:
                // exp_x(v) = x ⊕ tanh(λ_x |v|_e / 2) v̂.
                let ve = sqnorm(vb).sqrt();
                if ve == 0.0 {
                    out[b.start..b.start + b.dim].copy_from_slice(xb);
                    continue;
                }
                let lam_x = 2.0 / (1.0 - sqnorm(xb));
                let t = (lam_x * ve / 2.0).tanh();
                let mut w = [0.0; MAX_DIM];
                for i in 0..b.dim {
                    w[i] = t * vb[i] / ve;
                }
                mobius_add(xb, &w[..b.dim], &mut out[b.start..b.start + b.dim]);
            }
        }
    }
    let c = flow.canonicalize(out_chart, &mut out);
    Ok(ChartPoint { chart: c, coords: out })
}

fn self_scale_sqrt(flow: &FlowManifold, b: &Block, tau: f64) -> f64 {
    flow.block_scale(b, tau).sqrt()
}

/// Poincaré-ball exponential map on one hyperbolic block, in ball
/// coordinates (valid for any constant rescaling of the metric).
pub(crate) fn hyperbolic_exp_block(x: &[f64], v: &[f64]) -> Vec<f64> {
    let ve = sqnorm(v).sqrt();
    if ve == 0.0 {
        return x.to_vec();
    }
    let lam_x = 2.0 / (1.0 - sqnorm(x));
    let t = (lam_x * ve / 2.0).tanh();
    let w: Vec<f64> = v.iter().map(|vi| t * vi / ve).collect();
    let mut out = vec![0.0; x.len()];
    mobius_add(x, &w, &mut out);
    out
}

/// Inverse of `hyperbolic_exp_block`.
pub(crate) fn hyperbolic_log_block(x: &[f64], y: &[f64]) -> Vec<f64> {
    let negx: Vec<f64> = x.iter().map(|v| -v).collect();
    let mut w = vec![0.0; x.len()];
    mobius_add(&negx, y, &mut w);
    let wn = sqnorm(&w).sqrt();
    if wn == 0.0 {
        return vec![0.0; x.len()];
    }
    let lam_x = 2.0 / (1.0 - sqnorm(x));
    let f = 2.0 * wn.atanh() / (lam_x * wn);
    w.iter().map(|wi| f * wi).collect()
}

/// Möbius addition on the unit ball (curvature −1 model).
fn mobius_add(a: &[f64], bv: &[f64], out: &mut [f64]) {
    let ab = dot(a, bv);
    let a2 = sqnorm(a);
    let b2 = sqnorm(bv);
    let denom = 1.0 + 2.0 * ab + a2 * b2;
    let ca = (1.0 + 2.0 * ab + b2) / denom;
    let cb = (1.0 - a2) / denom;
    for i in 0..a.len() {
        out[i] = ca * a[i] + cb * bv[i];
    }
}

/// Geodesic endpoint of the frozen metric g(τ) at unit parameter.
pub fn frozen_exp(flow: &FlowManifold, tau: f64, x: &ChartPoint, v: &TangentVec) -> Result<ChartPoint> {
    flow.check_tau(tau)?;
    if v.base.pos != *x {
        return Err(Error::BaseMismatch);
    }
    exp_chart(flow, tau, x.chart, &x.coords, &v.components)
}

/// Reference route for `frozen_exp`: RK4 on the frozen geodesic equation
/// z″ = −Γ(z)(z′, z′) with `n_steps` steps. Used by the verification suite;
/// the closed forms are the production path.
pub fn frozen_exp_rk4(
    flow: &FlowManifold,
    tau: f64,
    x: &ChartPoint,
    v: &TangentVec,
    n_steps: usize,
) -> Result<ChartPoint> {
    flow.check_tau(tau)?;
    if v.base.pos != *x {
        return Err(Error::BaseMismatch);
    }
    let d = flow.dim();
    let mut state = [0.0; 2 * MAX_DIM];
    state[..d].copy_from_slice(&x.coords);
    state[MAX_DIM..MAX_DIM + d].copy_from_slice(&v.components);

    let h = 1.0 / n_steps as f64;
    let mut ev = MetricEval::zero();
    let deriv = |st: &[f64; 2 * MAX_DIM], out: &mut [f64; 2 * MAX_DIM], ev: &mut MetricEval| {
        flow.eval_metric(&st[..d], tau, ev);
        let vel = &st[MAX_DIM..MAX_DIM + d];
        let mut gam = [0.0; MAX_DIM];
        ev.gamma_bilinear(vel, vel, &mut gam[..d]);
        for i in 0..d {
            out[i] = vel[i];
            out[MAX_DIM + i] = -gam[i];
        }
    };

    let mut k1 = [0.0; 2 * MAX_DIM];
    let mut k2 = [0.0; 2 * MAX_DIM];
    let mut k3 = [0.0; 2 * MAX_DIM];
    let mut k4 = [0.0; 2 * MAX_DIM];
    let mut tmp = [0.0; 2 * MAX_DIM];
    for _ in 0..n_steps {
        deriv(&state, &mut k1, &mut ev);
        for i in 0..2 * MAX_DIM {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        deriv(&tmp, &mut k2, &mut ev);
        for i in 0..2 * MAX_DIM {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        deriv(&tmp, &mut k3, &mut ev);
        for i in 0..2 * MAX_DIM {
            tmp[i] = state[i] + h * k3[i];
        }
        deriv(&tmp, &mut k4, &mut ev);
        for i in 0..2 * MAX_DIM {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let mut coords = state[..d].to_vec();
    let chart = flow.canonicalize(x.chart, &mut coords);
    Ok(ChartPoint { chart, coords })
}

/// Inverse of `frozen_exp` for nearby points: the tangent vector v at x with
/// frozen_exp(τ, x, v) = y, choosing the minimal geodesic. For the sphere an
/// optional `long_way` flag selects the complementary great-circle arc.
pub fn frozen_log(
    flow: &FlowManifold,
    tau: f64,
    x: &ChartPoint,
    y: &ChartPoint,
    long_way: bool,
) -> Result<TangentVec> {
    flow.check_tau(tau)?;
    let d = flow.dim();
    let mut v = vec![0.0; d];
    for b in flow.blocks() {
        let xb = &x.coords[b.start..b.start + b.dim];
        match b.geom {
            BlockGeom::Flat => {
                let periods = flow.torus_periods();
                let yb = &y.coords[b.start..b.start + b.dim];
                for i in 0..b.dim {
                    let p = periods[i];
                    let mut delta = (yb[i] - xb[i]).rem_euclid(p);
                    if delta > p / 2.0 {
                        delta -= p;
                    }
                    v[b.start + i] = delta;
                }
            }
            BlockGeom::Sphere => {
                let mut p = [0.0; MAX_DIM + 1];
                let mut q = [0.0; MAX_DIM + 1];
                flow.sphere_embed(b, x.chart, &x.coords, &mut p[..b.dim + 1]);
                flow.sphere_embed(b, y.chart, &y.coords, &mut q[..b.dim + 1]);
                let m = b.dim + 1;
                let cos_t = dot(&p[..m], &q[..m]).clamp(-1.0, 1.0);
                let chord: f64 = p[..m].iter().zip(&q[..m]).map(|(a, c)| (a - c) * (a - c)).sum();
                let mut theta = 2.0 * (0.5 * chord.sqrt()).asin();
                // tangential part of q at p
                let mut t = [0.0; MAX_DIM + 1];
                for i in 0..m {
                    t[i] = q[i] - cos_t * p[i];
                }
                let tn = sqnorm(&t[..m]).sqrt();
                if tn < 1e-14 {
                    if theta > 1.0 {
                        return Err(Error::SolverFailed(
                            "log map at antipodal sphere points is not unique".into(),
                        ));
                    }
                    // y == x: zero block
                    continue;
                }
                let mut sign = 1.0;
                if long_way {
                    theta = 2.0 * std::f64::consts::PI - theta;
                    sign = -1.0;
                }
                // unit-embedding tangent of length theta (metric length r·theta)
                for ti in t.iter_mut().take(m) {
                    *ti *= sign * theta / tn;
                }
                // pull back to chart components: differentiate u(p) along t
                let vb = pull_sphere_tangent(b, x.chart, &p[..m], &t[..m]);
                v[b.start..b.start + b.dim].copy_from_slice(&vb);
            }
            BlockGeom::Hyperbolic => {
                let yb = &y.coords[b.start..b.start + b.dim];
                // log_x(y) = (2/λ_x) artanh(|w|) ŵ with w = (−x) ⊕ y
                let mut negx = [0.0; MAX_DIM];
                for i in 0..b.dim {
                    negx[i] = -xb[i];
                }
                let mut w = [0.0; MAX_DIM];
                mobius_add(&negx[..b.dim], yb, &mut w[..b.dim]);
                let wn = sqnorm(&w[..b.dim]).sqrt();
                if wn > 0.0 {
                    let lam_x = 2.0 / (1.0 - sqnorm(xb));
                    let f = 2.0 * wn.atanh() / (lam_x * wn);
                    for i in 0..b.dim {
                        v[b.start + i] = f * w[i];
                    }
                }
            }
        }
    }
    let base = SpaceTimePoint { pos: x.clone(), tau };
    TangentVec::new(base, v)
}

/// Chart components at `chart` of an embedded unit-sphere tangent `t` at `p`.
fn pull_sphere_tangent(b: &Block, chart: usize, p: &[f64], t: &[f64]) -> Vec<f64> {
    let m = b.dim;
    let last = p[m];
    let (denom, sgn) = if chart == 0 { (1.0 - last, 1.0) } else { (1.0 + last, -1.0) };
    let mut v = vec![0.0; m];
    for i in 0..m {
        v[i] = 2.0 * t[i] / denom + sgn * 2.0 * p[i] * t[m] / (denom * denom);
    }
    v
}

/// g(τ)-geodesic distance between two chart points (closed form per model).
pub fn rho(flow: &FlowManifold, tau: f64, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
    flow.check_tau(tau)?;
    let mut acc = 0.0;
    for b in flow.blocks() {
        let xb = &x.coords[b.start..b.start + b.dim];
        let yb = &y.coords[b.start..b.start + b.dim];
        match b.geom {
            BlockGeom::Flat => {
                let periods = flow.torus_periods();
                for i in 0..b.dim {
                    let p = periods[i];
                    let raw = (xb[i] - yb[i]).rem_euclid(p);
                    let delta = raw.min(p - raw);
                    acc += delta * delta;
                }
            }
            BlockGeom::Sphere => {
                let mut p = [0.0; MAX_DIM + 1];
                let mut q = [0.0; MAX_DIM + 1];
                flow.sphere_embed(b, x.chart, &x.coords, &mut p[..b.dim + 1]);
                flow.sphere_embed(b, y.chart, &y.coords, &mut q[..b.dim + 1]);
                let m = b.dim + 1;
                let chord: f64 = p[..m].iter().zip(&q[..m]).map(|(a, c)| (a - c) * (a - c)).sum();
                let theta = 2.0 * ((0.5 * chord.sqrt()).clamp(-1.0, 1.0)).asin();
                let dist = self_scale_sqrt(flow, b, tau) * theta;
                acc += dist * dist;
            }
            BlockGeom::Hyperbolic => {
                let dx2: f64 = xb.iter().zip(yb).map(|(a, c)| (a - c) * (a - c)).sum();
                let arg = 1.0 + 2.0 * dx2 / ((1.0 - sqnorm(xb)) * (1.0 - sqnorm(yb)));
                let dist = self_scale_sqrt(flow, b, tau) * arg.acosh();
                acc += dist * dist;
            }
        }
    }
    Ok(acc.sqrt())
}
