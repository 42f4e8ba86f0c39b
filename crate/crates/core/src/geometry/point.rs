//! Space-time points, tangent vectors and orthonormal frames.

use serde::{Deserialize, Serialize};

use super::flow::{ChartPoint, FlowManifold};
use crate::error::{Error, Result};

/// The basic argument of the L-distance: a chart point together with its
/// flow time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub pos: ChartPoint,
    pub tau: f64,
}

impl SpaceTimePoint {
    /// Builds a point, wrapping torus coordinates and applying the sphere
    /// chart handoff, and checks tau against the flow window.
    pub fn new(flow: &FlowManifold, chart: usize, coords: Vec<f64>, tau: f64) -> Result<Self> {
        if coords.len() != flow.dim() {
            return Err(Error::DimensionMismatch { expected: flow.dim(), got: coords.len() });
        }
        flow.check_tau(tau)?;
        let mut coords = coords;
        let chart = flow.canonicalize(chart, &mut coords);
        Ok(SpaceTimePoint { pos: ChartPoint { chart, coords }, tau })
    }

    pub fn chart(&self) -> usize {
        self.pos.chart
    }

    pub fn coords(&self) -> &[f64] {
        &self.pos.coords
    }

    /// Same spatial position at a different flow time.
    pub fn at_time(&self, tau: f64) -> SpaceTimePoint {
        SpaceTimePoint { pos: self.pos.clone(), tau }
    }
}

/// Tangent vector in chart components at a space-time point. Norms are
/// always taken with respect to an explicitly stated g(τ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVec {
    pub base: SpaceTimePoint,
    pub components: Vec<f64>,
}

impl TangentVec {
    pub fn new(base: SpaceTimePoint, components: Vec<f64>) -> Result<Self> {
        if components.len() != base.pos.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: base.pos.coords.len(),
                got: components.len(),
            });
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("non-finite tangent components".into()));
        }
        Ok(TangentVec { base, components })
    }

    pub fn zero(base: SpaceTimePoint) -> Self {
        let d = base.pos.coords.len();
        TangentVec { base, components: vec![0.0; d] }
    }
}

/// d tangent vectors at one space-time point, orthonormal w.r.t. g(τ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub base: SpaceTimePoint,
    /// Row i holds the chart components of the i-th frame vector.
    pub vectors: Vec<Vec<f64>>,
}

impl Frame {
    pub fn vector(&self, i: usize) -> TangentVec {
        TangentVec { base: self.base.clone(), components: self.vectors[i].clone() }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Linear combination Σ aᵢ eᵢ of the frame vectors.
    pub fn combine(&self, a: &[f64]) -> Vec<f64> {
        let d = self.base.pos.coords.len();
        let mut out = vec![0.0; d];
        for (ai, v) in a.iter().zip(&self.vectors) {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += ai * vi;
            }
        }
        out
    }
}
