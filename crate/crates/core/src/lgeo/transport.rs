//! Space-time parallel transport: ∇_{γ̇(τ)} Z(τ) = −Ric♯(Z(τ)) along a
//! curve, solved in s = √τ as dZᵏ/ds = −Γᵏ_ij X′ⁱZʲ − 2s (Ric♯Z)ᵏ.
//!
//! Along any curve this transport is an isometry between (T_x M, g(τ₁)) and
//! (T_y M, g(τ₂)): the g(τ)-inner product of two transported fields is
//! constant in τ. That constancy is the module's main correctness oracle.

use crate::error::{Error, Result};
use crate::geometry::{
    gram_schmidt, Frame, FlowManifold, MetricEval, SpaceTimePoint, TangentVec,
};
use crate::MAX_DIM;

use super::curve::LCurve;
use super::solve::{solve_with_options, SolveOptions};

/// Result of transporting a frame between two space-time points.
#[derive(Debug, Clone)]
pub struct TransportMap {
    pub source: Frame,
    pub target: Frame,
    pub along: LCurve,
    /// Max |Gram(target) − Gram(source)| entry before re-orthonormalization.
    pub gram_drift: f64,
}

/// Curve samples with velocities, prepared for transport integration.
struct CurveSamples<'a> {
    curve: &'a LCurve,
    vel: Vec<f64>,
}

impl<'a> CurveSamples<'a> {
    fn new(curve: &'a LCurve) -> Self {
        let vel = match &curve.velocities {
            Some(v) => v.clone(),
            None => curve.fd_velocities(),
        };
        CurveSamples { curve, vel }
    }

    /// Position and velocity at mid-segment k+1/2 (cubic Hermite for the
    /// position, its derivative for the velocity).
    fn midpoint(&self, k: usize, x: &mut [f64], v: &mut [f64]) {
        let d = self.curve.dim();
        let h = self.curve.s_grid[k + 1] - self.curve.s_grid[k];
        let x0 = self.curve.point(k);
        let x1 = self.curve.point(k + 1);
        let v0 = &self.vel[k * d..(k + 1) * d];
        let v1 = &self.vel[(k + 1) * d..(k + 2) * d];
        // Hermite basis at t = 1/2: h00 = 1/2, h10 = h/8, h01 = 1/2, h11 = −h/8
        for i in 0..d {
            x[i] = 0.5 * (x0[i] + x1[i]) + 0.125 * h * (v0[i] - v1[i]);
            v[i] = 1.5 * (x1[i] - x0[i]) / h - 0.25 * (v0[i] + v1[i]);
        }
    }
}

/// Transport the vector ξ (based at the curve start, time τ₁) along the
/// curve; returns the transported vector at (curve end, τ₂).
pub fn space_time_transport(
    flow: &FlowManifold,
    curve: &LCurve,
    xi: &TangentVec,
) -> Result<TangentVec> {
    let start = curve.endpoint(false);
    if xi.base.pos != start.pos {
        return Err(Error::BaseMismatch);
    }
    let mut z = [0.0; MAX_DIM];
    let d = flow.dim();
    // ξ components are given at the canonical chart of the start point; the
    // curve may use the other sphere chart as its working chart.
    let mut comps = xi.components.clone();
    if xi.base.chart() != curve.chart {
        let mut coords = xi.base.coords().to_vec();
        flow.chart_transition(xi.base.chart(), &mut coords, Some(&mut comps[..]));
    }
    z[..d].copy_from_slice(&comps);
    transport_components(flow, curve, &mut z)?;
    let mut end_coords = curve.point(curve.n_segments()).to_vec();
    let mut zv = z[..d].to_vec();
    // canonicalize the endpoint, carrying the vector through a chart flip
    let mut probe = end_coords.clone();
    let canonical = flow.canonicalize(curve.chart, &mut probe);
    let chart = if canonical != curve.chart {
        flow.chart_transition(curve.chart, &mut end_coords, Some(&mut zv[..]))
    } else {
        curve.chart
    };
    let chart = flow.canonicalize(chart, &mut end_coords);
    let base = SpaceTimePoint {
        pos: crate::geometry::ChartPoint { chart, coords: end_coords },
        tau: curve.tau2,
    };
    TangentVec::new(base, zv)
}

/// In-place transport of chart components along the whole curve.
pub(crate) fn transport_components(
    flow: &FlowManifold,
    curve: &LCurve,
    z: &mut [f64; MAX_DIM],
) -> Result<()> {
    transport_core(flow, curve, z, None)
}

/// Transport recording the components at every grid node; returns
/// (n+1) × d values in the curve's working chart.
pub(crate) fn transport_with_samples(
    flow: &FlowManifold,
    curve: &LCurve,
    z0: &[f64],
) -> Result<Vec<f64>> {
    let d = flow.dim();
    let mut z = [0.0; MAX_DIM];
    z[..d].copy_from_slice(z0);
    let mut rec = Vec::with_capacity((curve.n_segments() + 1) * d);
    transport_core(flow, curve, &mut z, Some(&mut rec))?;
    Ok(rec)
}

fn transport_core(
    flow: &FlowManifold,
    curve: &LCurve,
    z: &mut [f64; MAX_DIM],
    mut record: Option<&mut Vec<f64>>,
) -> Result<()> {
    let d = flow.dim();
    let samples = CurveSamples::new(curve);
    let n = curve.n_segments();
    if let Some(rec) = record.as_mut() {
        rec.extend_from_slice(&z[..d]);
    }
    let mut ev = MetricEval::zero();
    let mut xm = [0.0; MAX_DIM];
    let mut vm = [0.0; MAX_DIM];

    let deriv = |s: f64,
                 x: &[f64],
                 xp: &[f64],
                 zin: &[f64; MAX_DIM],
                 out: &mut [f64; MAX_DIM],
                 ev: &mut MetricEval| {
        flow.eval_metric(x, s * s, ev);
        let mut gam = [0.0; MAX_DIM];
        ev.gamma_bilinear(xp, &zin[..d], &mut gam[..d]);
        let mut ric = [0.0; MAX_DIM];
        ev.ricci_sharp(&zin[..d], &mut ric[..d]);
        for i in 0..d {
            out[i] = -gam[i] - 2.0 * s * ric[i];
        }
    };

    let (mut k1, mut k2, mut k3, mut k4) = ([0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM]);
    let mut tmp = [0.0; MAX_DIM];
    for k in 0..n {
        let s0 = curve.s_grid[k];
        let s1 = curve.s_grid[k + 1];
        let h = s1 - s0;
        let sm = 0.5 * (s0 + s1);
        samples.midpoint(k, &mut xm[..d], &mut vm[..d]);
        let x0 = curve.point(k);
        let x1 = curve.point(k + 1);
        let v0 = &samples.vel[k * d..(k + 1) * d];
        let v1 = &samples.vel[(k + 1) * d..(k + 2) * d];

        deriv(s0, x0, v0, z, &mut k1, &mut ev);
        for i in 0..d {
            tmp[i] = z[i] + 0.5 * h * k1[i];
        }
        deriv(sm, &xm[..d], &vm[..d], &tmp, &mut k2, &mut ev);
        for i in 0..d {
            tmp[i] = z[i] + 0.5 * h * k2[i];
        }
        deriv(sm, &xm[..d], &vm[..d], &tmp, &mut k3, &mut ev);
        for i in 0..d {
            tmp[i] = z[i] + h * k3[i];
        }
        deriv(s1, x1, v1, &tmp, &mut k4, &mut ev);
        for i in 0..d {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(rec) = record.as_mut() {
            rec.extend_from_slice(&z[..d]);
        }
    }
    Ok(())
}

/// The space-time parallel transport m_{xy}^{τ₁τ₂}: transports an
/// orthonormal frame at (x, τ₁) along the minimal L-geodesic to (y, τ₂),
/// re-orthonormalized at g(τ₂). The pre-normalization Gram drift is recorded
/// and the solve is retried on a doubled grid if it exceeds 1e-7.
pub fn transport_frame(
    flow: &FlowManifold,
    x: &SpaceTimePoint,
    y: &SpaceTimePoint,
    frame: &Frame,
) -> Result<TransportMap> {
    if frame.base.pos != x.pos {
        return Err(Error::BaseMismatch);
    }
    let mut opts = SolveOptions::default();
    for _ in 0..3 {
        let result = solve_with_options(flow, x, y, &opts)?;
        let map = transport_frame_along(flow, &result.curve, frame)?;
        if map.gram_drift <= 1e-7 {
            return Ok(map);
        }
        opts.grid_n *= 2;
    }
    let result = solve_with_options(flow, x, y, &opts)?;
    transport_frame_along(flow, &result.curve, frame)
}

/// Frame transport along a given curve (no re-solving).
pub fn transport_frame_along(
    flow: &FlowManifold,
    curve: &LCurve,
    frame: &Frame,
) -> Result<TransportMap> {
    let d = flow.dim();
    let mut moved: Vec<TangentVec> = Vec::with_capacity(d);
    for i in 0..d {
        moved.push(space_time_transport(flow, curve, &frame.vector(i))?);
    }
    let end = curve.endpoint(true);
    let mut ev = MetricEval::zero();
    flow.eval_metric(end.coords(), end.tau, &mut ev);
    // Gram drift against the source Gram matrix (identity for orthonormal input)
    let mut ev0 = MetricEval::zero();
    flow.eval_metric(frame.base.coords(), frame.base.tau, &mut ev0);
    let mut drift = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let g0 = ev0.inner(&frame.vectors[i], &frame.vectors[j]);
            let g1 = ev.inner(&moved[i].components, &moved[j].components);
            drift = drift.max((g1 - g0).abs());
        }
    }
    let target = gram_schmidt(flow, end.tau, &moved)?;
    Ok(TransportMap { source: frame.clone(), target, along: curve.clone(), gram_drift: drift })
}
