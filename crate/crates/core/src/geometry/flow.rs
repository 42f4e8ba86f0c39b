//! The four model backwards Ricci flows and their chart atlases.
//!
//! Flow time τ runs over [tau_min, tau_max]; the flow equation
//! ∂g/∂τ = 2 Ric_{g(τ)} holds exactly:
//!
//! * `FlatTorus` — g ≡ δ on ℝ^d / (periods · ℤ^d); Ric = 0.
//! * `RoundSphere` — g(τ) = r(τ)² g_std with r(τ)² = r₀² + 2(d−1)(τ − tau_min).
//! * `HyperbolicSpace` — g(τ) = c(τ) g_hyp with c(τ) = c₀ − 2(d−1)(τ − tau_min);
//!   the constructor rejects parameters with c(tau_max) ≤ 0.
//! * `ProductSphereTorus` — product of the first two; the sphere factor grows
//!   with its own dimension d₁.
//!
//! Charts: the torus uses global periodic coordinates. The sphere uses two
//! stereographic charts scaled so the conformal factor is r(τ)/(1 + |u|²/4);
//! chart 0 is centered at the south pole (projection from the north pole),
//! chart 1 at the north pole, with handoff once |u| > 2 (the equator).
//! Hyperbolic space uses the Poincaré ball, g_hyp = 4 δ / (1 − |u|²)².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::MAX_DIM;

/// Spatial location: chart id plus chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: usize,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: usize, coords: Vec<f64>) -> Self {
        ChartPoint { chart, coords }
    }
}

/// Which model flow, with its shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum FlowKind {
    FlatTorus { periods: Vec<f64> },
    RoundSphere { r0: f64 },
    HyperbolicSpace { c0: f64 },
    ProductSphereTorus { d1: usize, d2: usize, r0: f64, periods: Vec<f64> },
}

/// Geometry of one conformal block of the chart metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum BlockGeom {
    Flat,
    Sphere,
    Hyperbolic,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub start: usize,
    pub dim: usize,
    pub geom: BlockGeom,
}

/// A model backwards Ricci flow on a fixed time window.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowManifold {
    kind: FlowKind,
    dim: usize,
    tau_min: f64,
    tau_max: f64,
    /// Analytic bound C₀ ≥ sup |Rm| ∨ |Ric| over M × [tau_min, tau_max].
    c0_bound: f64,
    blocks: Vec<Block>,
}

impl FlowManifold {
    pub fn new(kind: FlowKind, dim: usize, tau_min: f64, tau_max: f64) -> Result<Self> {
        if !(tau_min.is_finite() && tau_max.is_finite()) || tau_min < 0.0 || tau_min >= tau_max {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= tau_min < tau_max, got [{tau_min}, {tau_max}]"
            )));
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "dimension {dim} outside supported range 1..={MAX_DIM}"
            )));
        }
        let blocks = match &kind {
            FlowKind::FlatTorus { periods } => {
                if periods.len() != dim || periods.iter().any(|p| !(*p > 0.0)) {
                    return Err(Error::InvalidConfig(
                        "torus periods must be positive, one per axis".into(),
                    ));
                }
                vec![Block { start: 0, dim, geom: BlockGeom::Flat }]
            }
            FlowKind::RoundSphere { r0 } => {
                if dim < 2 {
                    return Err(Error::InvalidConfig("sphere needs dim >= 2".into()));
                }
                if !(*r0 > 0.0) {
                    return Err(Error::InvalidConfig("sphere radius must be positive".into()));
                }
                vec![Block { start: 0, dim, geom: BlockGeom::Sphere }]
            }
            FlowKind::HyperbolicSpace { c0 } => {
                if dim < 2 {
                    return Err(Error::InvalidConfig("hyperbolic space needs dim >= 2".into()));
                }
                let c_end = c0 - 2.0 * (dim as f64 - 1.0) * (tau_max - tau_min);
                if !(c_end > 0.0) {
                    return Err(Error::DegenerateMetric {
                        tau: tau_max,
                        detail: format!("conformal factor c(tau_max) = {c_end} <= 0"),
                    });
                }
                vec![Block { start: 0, dim, geom: BlockGeom::Hyperbolic }]
            }
            FlowKind::ProductSphereTorus { d1, d2, r0, periods } => {
                if *d1 < 2 {
                    return Err(Error::InvalidConfig("sphere factor needs d1 >= 2".into()));
                }
                if *d1 + *d2 != dim {
                    return Err(Error::InvalidConfig("d1 + d2 != dim".into()));
                }
                if periods.len() != *d2 || *d2 == 0 || periods.iter().any(|p| !(*p > 0.0)) {
                    return Err(Error::InvalidConfig("torus factor periods invalid".into()));
                }
                if !(*r0 > 0.0) {
                    return Err(Error::InvalidConfig("sphere radius must be positive".into()));
                }
                vec![
                    Block { start: 0, dim: *d1, geom: BlockGeom::Sphere },
                    Block { start: *d1, dim: *d2, geom: BlockGeom::Flat },
                ]
            }
        };
        let mut flow = FlowManifold { kind, dim, tau_min, tau_max, c0_bound: 0.0, blocks };
        flow.c0_bound = flow.compute_c0();
        Ok(flow)
    }

    pub fn flat_torus(periods: Vec<f64>, tau_min: f64, tau_max: f64) -> Result<Self> {
        let dim = periods.len();
        Self::new(FlowKind::FlatTorus { periods }, dim, tau_min, tau_max)
    }

    pub fn round_sphere(dim: usize, r0: f64, tau_min: f64, tau_max: f64) -> Result<Self> {
        Self::new(FlowKind::RoundSphere { r0 }, dim, tau_min, tau_max)
    }

    pub fn hyperbolic(dim: usize, c0: f64, tau_min: f64, tau_max: f64) -> Result<Self> {
        Self::new(FlowKind::HyperbolicSpace { c0 }, dim, tau_min, tau_max)
    }

    pub fn product_sphere_torus(
        d1: usize,
        d2: usize,
        r0: f64,
        periods: Vec<f64>,
        tau_min: f64,
        tau_max: f64,
    ) -> Result<Self> {
        Self::new(FlowKind::ProductSphereTorus { d1, d2, r0, periods }, d1 + d2, tau_min, tau_max)
    }

    /// C₀: the largest of |Rm|_{g(τ)} and |Ric|_{g(τ)} over the window,
    /// evaluated where curvature is largest. For constant curvature K on a
    /// d-dimensional factor, |Rm| = |K| √(2d(d−1)) and |Ric| = |K| (d−1) √d.
    fn compute_c0(&self) -> f64 {
        let mut c0: f64 = 0.0;
        for b in &self.blocks {
            let db = b.dim as f64;
            let kmax = match b.geom {
                BlockGeom::Flat => 0.0,
                // r(τ) grows with τ: curvature 1/r² is largest at tau_min.
                BlockGeom::Sphere => self.block_curvature(b, self.tau_min).abs(),
                // c(τ) shrinks with τ: |−1/c| is largest at tau_max.
                BlockGeom::Hyperbolic => self.block_curvature(b, self.tau_max).abs(),
            };
            let rm = kmax * (2.0 * db * (db - 1.0)).sqrt();
            let ric = kmax * (db - 1.0) * db.sqrt();
            c0 = c0.max(rm).max(ric);
        }
        c0
    }

    pub fn kind(&self) -> &FlowKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    /// Analytic curvature bound C₀ (0 for the flat torus).
    pub fn curvature_bound(&self) -> f64 {
        self.c0_bound
    }

    /// Bound on |∇Rm|; identically 0 for the model flows, which are locally
    /// symmetric at every time.
    pub fn gradient_curvature_bound(&self) -> f64 {
        0.0
    }

    pub fn check_tau(&self, tau: f64) -> Result<()> {
        // Tiny slack absorbs roundoff from grid arithmetic like s².
        let eps = 1e-12 * (1.0 + self.tau_max.abs());
        if !tau.is_finite() || tau < self.tau_min - eps || tau > self.tau_max + eps {
            return Err(Error::TimeOutOfRange { tau, lo: self.tau_min, hi: self.tau_max });
        }
        Ok(())
    }

    pub(crate) fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Scale function of a block: r(τ)² for spheres, c(τ) for hyperbolic, 1 flat.
    pub(crate) fn block_scale(&self, b: &Block, tau: f64) -> f64 {
        let db = b.dim as f64;
        match b.geom {
            BlockGeom::Flat => 1.0,
            BlockGeom::Sphere => {
                let r0 = self.sphere_r0();
                r0 * r0 + 2.0 * (db - 1.0) * (tau - self.tau_min)
            }
            BlockGeom::Hyperbolic => {
                let FlowKind::HyperbolicSpace { c0 } = self.kind else { unreachable!() };
                c0 - 2.0 * (db - 1.0) * (tau - self.tau_min)
            }
        }
    }

    /// Sectional curvature of a block: 1/r², −1/c, or 0.
    pub(crate) fn block_curvature(&self, b: &Block, tau: f64) -> f64 {
        match b.geom {
            BlockGeom::Flat => 0.0,
            BlockGeom::Sphere => 1.0 / self.block_scale(b, tau),
            BlockGeom::Hyperbolic => -1.0 / self.block_scale(b, tau),
        }
    }

    fn sphere_r0(&self) -> f64 {
        match self.kind {
            FlowKind::RoundSphere { r0 } | FlowKind::ProductSphereTorus { r0, .. } => r0,
            _ => unreachable!("no sphere block"),
        }
    }

    pub(crate) fn torus_periods(&self) -> &[f64] {
        match &self.kind {
            FlowKind::FlatTorus { periods } | FlowKind::ProductSphereTorus { periods, .. } => {
                periods
            }
            _ => &[],
        }
    }

    /// Conformal factor λ_b(x, τ) of a block, so that g = λ² δ on the block.
    pub(crate) fn block_lambda(&self, b: &Block, coords: &[f64], tau: f64) -> f64 {
        let x = &coords[b.start..b.start + b.dim];
        match b.geom {
            BlockGeom::Flat => 1.0,
            BlockGeom::Sphere => {
                let q = 0.25 * sqnorm(x);
                self.block_scale(b, tau).sqrt() / (1.0 + q)
            }
            BlockGeom::Hyperbolic => {
                let n2 = sqnorm(x);
                2.0 * self.block_scale(b, tau).sqrt() / (1.0 - n2)
            }
        }
    }

    /// ∂_i ln λ_b written into `out[b.start .. b.start+b.dim]`.
    pub(crate) fn block_dphi(&self, b: &Block, coords: &[f64], out: &mut [f64]) {
        let x = &coords[b.start..b.start + b.dim];
        let o = &mut out[b.start..b.start + b.dim];
        match b.geom {
            BlockGeom::Flat => o.fill(0.0),
            BlockGeom::Sphere => {
                let q = 0.25 * sqnorm(x);
                let f = -0.5 / (1.0 + q);
                for (oi, xi) in o.iter_mut().zip(x) {
                    *oi = f * xi;
                }
            }
            BlockGeom::Hyperbolic => {
                let n2 = sqnorm(x);
                let f = 2.0 / (1.0 - n2);
                for (oi, xi) in o.iter_mut().zip(x) {
                    *oi = f * xi;
                }
            }
        }
    }

    /// Canonical representative of chart coordinates: torus blocks wrap into
    /// [0, period), sphere blocks hand off to the antipodal chart when
    /// |u| > 2. Returns the canonical chart id.
    pub fn canonicalize(&self, chart: usize, coords: &mut [f64]) -> usize {
        let mut out_chart = chart;
        for b in &self.blocks {
            let x = &mut coords[b.start..b.start + b.dim];
            match b.geom {
                BlockGeom::Flat => {
                    for (xi, p) in x.iter_mut().zip(self.torus_periods()) {
                        *xi = xi.rem_euclid(*p);
                    }
                }
                BlockGeom::Sphere => {
                    let n2 = sqnorm(x);
                    if n2 > 4.0 {
                        let f = 4.0 / n2;
                        for xi in x.iter_mut() {
                            *xi *= f;
                        }
                        out_chart = 1 - out_chart;
                    }
                }
                BlockGeom::Hyperbolic => {}
            }
        }
        out_chart
    }

    /// Re-express sphere-block coordinates (and optionally tangent
    /// components) in the antipodal chart: u ↦ 4u/|u|².
    pub fn chart_transition(&self, chart: usize, coords: &mut [f64], vec: Option<&mut [f64]>) -> usize {
        let mut vec = vec;
        for b in &self.blocks {
            if b.geom != BlockGeom::Sphere {
                continue;
            }
            let x = &mut coords[b.start..b.start + b.dim];
            let n2 = sqnorm(x);
            assert!(n2 > 0.0, "chart transition undefined at the chart center");
            if let Some(v) = vec.as_deref_mut() {
                let v = &mut v[b.start..b.start + b.dim];
                // d(4u/|u|²) v = 4v/|u|² − 8(u·v)u/|u|⁴
                let uv = dot(x, v);
                for i in 0..b.dim {
                    v[i] = 4.0 * v[i] / n2 - 8.0 * uv * x[i] / (n2 * n2);
                }
            }
            let f = 4.0 / n2;
            for xi in x.iter_mut() {
                *xi *= f;
            }
        }
        1 - chart
    }

    /// Embed sphere-block coordinates on the unit sphere S^{d₁} ⊂ ℝ^{d₁+1}.
    /// Chart 0 projects from the north pole (u = 0 ↦ south pole).
    pub(crate) fn sphere_embed(&self, b: &Block, chart: usize, coords: &[f64], out: &mut [f64]) {
        let x = &coords[b.start..b.start + b.dim];
        let q = 0.25 * sqnorm(x);
        let w = 1.0 + q;
        for i in 0..b.dim {
            out[i] = x[i] / w;
        }
        out[b.dim] = if chart == 0 { (q - 1.0) / w } else { (1.0 - q) / w };
    }

    /// Push a tangent vector along `sphere_embed`.
    pub(crate) fn sphere_embed_tangent(
        &self,
        b: &Block,
        chart: usize,
        coords: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) {
        let x = &coords[b.start..b.start + b.dim];
        let vb = &v[b.start..b.start + b.dim];
        let q = 0.25 * sqnorm(x);
        let w = 1.0 + q;
        let uv = dot(x, vb);
        for i in 0..b.dim {
            out[i] = vb[i] / w - 0.5 * uv * x[i] / (w * w);
        }
        out[b.dim] = if chart == 0 { uv / (w * w) } else { -uv / (w * w) };
    }

    /// Inverse of `sphere_embed`: chart coordinates of an embedded point,
    /// in the chart where the representation is best conditioned.
    pub(crate) fn sphere_unembed(&self, b: &Block, p: &[f64]) -> (usize, Vec<f64>) {
        let last = p[b.dim];
        // chart 0 breaks down near the north pole (last → 1)
        let chart = if last <= 0.0 { 0 } else { 1 };
        let denom = if chart == 0 { 1.0 - last } else { 1.0 + last };
        let u: Vec<f64> = p[..b.dim].iter().map(|pi| 2.0 * pi / denom).collect();
        (chart, u)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": kind_name(&self.kind),
            "dim": self.dim,
            "params": kind_params(&self.kind),
            "tau_min": self.tau_min,
            "tau_max": self.tau_max,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let bad = |m: &str| Error::InvalidConfig(format!("flow json: {m}"));
        let obj = v.as_object().ok_or_else(|| bad("expected object"))?;
        for key in obj.keys() {
            if !matches!(key.as_str(), "kind" | "dim" | "params" | "tau_min" | "tau_max") {
                return Err(bad(&format!("unknown key `{key}`")));
            }
        }
        let kind = obj.get("kind").and_then(|k| k.as_str()).ok_or_else(|| bad("missing kind"))?;
        let dim = obj.get("dim").and_then(|d| d.as_u64()).ok_or_else(|| bad("missing dim"))?
            as usize;
        let tau_min =
            obj.get("tau_min").and_then(|t| t.as_f64()).ok_or_else(|| bad("missing tau_min"))?;
        let tau_max =
            obj.get("tau_max").and_then(|t| t.as_f64()).ok_or_else(|| bad("missing tau_max"))?;
        let params = obj.get("params").cloned().unwrap_or(serde_json::json!({}));
        let getf = |key: &str| -> Result<f64> {
            params.get(key).and_then(|x| x.as_f64()).ok_or_else(|| bad(&format!("missing params.{key}")))
        };
        let getv = |key: &str| -> Result<Vec<f64>> {
            params
                .get(key)
                .and_then(|x| x.as_array())
                .map(|a| a.iter().filter_map(|e| e.as_f64()).collect::<Vec<f64>>())
                .ok_or_else(|| bad(&format!("missing params.{key}")))
        };
        let flow = match kind {
            "flat_torus" => {
                let periods = getv("periods")?;
                if periods.len() != dim {
                    return Err(bad("periods length != dim"));
                }
                Self::flat_torus(periods, tau_min, tau_max)?
            }
            "round_sphere" => Self::round_sphere(dim, getf("r0")?, tau_min, tau_max)?,
            "hyperbolic_space" => Self::hyperbolic(dim, getf("c0")?, tau_min, tau_max)?,
            "product_sphere_torus" => {
                let d1 = params.get("d1").and_then(|x| x.as_u64()).ok_or_else(|| bad("missing params.d1"))? as usize;
                let d2 = params.get("d2").and_then(|x| x.as_u64()).ok_or_else(|| bad("missing params.d2"))? as usize;
                if d1 + d2 != dim {
                    return Err(bad("d1 + d2 != dim"));
                }
                Self::product_sphere_torus(d1, d2, getf("r0")?, getv("periods")?, tau_min, tau_max)?
            }
            other => return Err(bad(&format!("unknown kind `{other}`"))),
        };
        Ok(flow)
    }
}

fn kind_name(k: &FlowKind) -> &'static str {
    match k {
        FlowKind::FlatTorus { .. } => "flat_torus",
        FlowKind::RoundSphere { .. } => "round_sphere",
        FlowKind::HyperbolicSpace { .. } => "hyperbolic_space",
        FlowKind::ProductSphereTorus { .. } => "product_sphere_torus",
    }
}

fn kind_params(k: &FlowKind) -> serde_json::Value {
    match k {
        FlowKind::FlatTorus { periods } => serde_json::json!({ "periods": periods }),
        FlowKind::RoundSphere { r0 } => serde_json::json!({ "r0": r0 }),
        FlowKind::HyperbolicSpace { c0 } => serde_json::json!({ "c0": c0 }),
        FlowKind::ProductSphereTorus { d1, d2, r0, periods } => {
            serde_json::json!({ "d1": d1, "d2": d2, "r0": r0, "periods": periods })
        }
    }
}

#[inline]
pub(crate) fn sqnorm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
