//! Discretized space-time curves and the L-functional quadrature.

use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, FlowManifold, MetricEval, SpaceTimePoint};

/// A space-time curve sampled uniformly in s = √τ.
///
/// All samples live in one working chart; torus coordinates are stored
/// unwrapped (continuous lifts), so consecutive differences are meaningful.
/// `velocities` holds X′(s_k) when the curve came out of an ODE integration.
#[derive(Debug, Clone)]
pub struct LCurve {
    pub flow: FlowManifold,
    /// Working chart shared by every sample.
    pub chart: usize,
    /// N+1 strictly increasing values spanning [√τ₁, √τ₂].
    pub s_grid: Vec<f64>,
    /// Row-major (N+1) × d chart coordinates.
    pub points: Vec<f64>,
    /// Row-major (N+1) × d values of X′(s_k), when available.
    pub velocities: Option<Vec<f64>>,
    pub tau1: f64,
    pub tau2: f64,
}

impl LCurve {
    pub fn new(
        flow: FlowManifold,
        chart: usize,
        s_grid: Vec<f64>,
        points: Vec<f64>,
        tau1: f64,
        tau2: f64,
    ) -> Result<Self> {
        let d = flow.dim();
        let n = s_grid.len();
        if n < 17 {
            return Err(Error::InvalidConfig(format!("curve needs N >= 16 segments, got {}", n.saturating_sub(1))));
        }
        if points.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: points.len() });
        }
        if !s_grid.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig("s grid must be strictly increasing".into()));
        }
        if tau1 >= tau2 {
            return Err(Error::InvalidConfig("need tau1 < tau2".into()));
        }
        flow.check_tau(tau1)?;
        flow.check_tau(tau2)?;
        let (s1, s2) = (tau1.sqrt(), tau2.sqrt());
        let eps = 1e-9 * (1.0 + s2);
        if (s_grid[0] - s1).abs() > eps || (s_grid[n - 1] - s2).abs() > eps {
            return Err(Error::InvalidConfig("s grid must span [sqrt(tau1), sqrt(tau2)]".into()));
        }
        Ok(LCurve { flow, chart, s_grid, points, velocities: None, tau1, tau2 })
    }

    /// Uniform grid with `n` segments from √τ₁ to √τ₂.
    pub(crate) fn uniform_grid(tau1: f64, tau2: f64, n: usize) -> Vec<f64> {
        let (s1, s2) = (tau1.sqrt(), tau2.sqrt());
        (0..=n).map(|k| s1 + (s2 - s1) * k as f64 / n as f64).collect()
    }

    pub fn n_segments(&self) -> usize {
        self.s_grid.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.flow.dim()
    }

    /// Chart coordinates of sample k.
    pub fn point(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.points[k * d..(k + 1) * d]
    }

    pub fn velocity(&self, k: usize) -> Option<&[f64]> {
        let d = self.dim();
        self.velocities.as_ref().map(|v| &v[k * d..(k + 1) * d])
    }

    /// Canonicalized space-time endpoint at the start (k = 0) or end.
    pub fn endpoint(&self, end: bool) -> SpaceTimePoint {
        let k = if end { self.s_grid.len() - 1 } else { 0 };
        let mut coords = self.point(k).to_vec();
        let chart = self.flow.canonicalize(self.chart, &mut coords);
        let tau = if end { self.tau2 } else { self.tau1 };
        SpaceTimePoint { pos: ChartPoint { chart, coords }, tau }
    }

    /// dX/ds at the grid nodes by finite differences: central in the
    /// interior, second-order one-sided at the ends.
    pub fn fd_velocities(&self) -> Vec<f64> {
        let d = self.dim();
        let n = self.s_grid.len();
        let h = (self.s_grid[n - 1] - self.s_grid[0]) / (n as f64 - 1.0);
        let mut out = vec![0.0; n * d];
        for i in 0..d {
            out[i] = (-3.0 * self.points[i] + 4.0 * self.points[d + i] - self.points[2 * d + i])
                / (2.0 * h);
            let last = (n - 1) * d;
            out[last + i] = (3.0 * self.points[last + i] - 4.0 * self.points[last - d + i]
                + self.points[last - 2 * d + i])
                / (2.0 * h);
        }
        for k in 1..n - 1 {
            for i in 0..d {
                out[k * d + i] =
                    (self.points[(k + 1) * d + i] - self.points[(k - 1) * d + i]) / (2.0 * h);
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "flow": self.flow.to_json(),
            "chart": self.chart,
            "tau1": self.tau1,
            "tau2": self.tau2,
            "s_grid": self.s_grid,
            "points": self.points,
            "velocities": self.velocities,
        })
    }
}

/// L(γ) by trapezoid quadrature in s of ½|dX/ds|²_{g(s²)} + 2s²R, with
/// finite-difference velocities on the grid.
pub fn l_action(curve: &LCurve) -> f64 {
    let d = curve.dim();
    let n = curve.s_grid.len();
    let vel = curve.fd_velocities();
    let mut ev = MetricEval::zero();
    let mut acc = 0.0;
    let h = (curve.s_grid[n - 1] - curve.s_grid[0]) / (n as f64 - 1.0);
    for k in 0..n {
        let s = curve.s_grid[k];
        let tau = s * s;
        curve.flow.eval_metric(curve.point(k), tau, &mut ev);
        let kinetic = 0.5 * ev.norm_sq(&vel[k * d..(k + 1) * d]);
        let potential = 2.0 * tau * curve.flow.scalar_curvature(tau);
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += w * (kinetic + potential);
    }
    acc * h
}
