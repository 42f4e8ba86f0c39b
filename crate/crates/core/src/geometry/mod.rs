//! Model backwards Ricci flows with exact metric families and every
//! curvature quantity the variation formulas consume.
//!
//! All four model flows are block-conformal in their charts: within each
//! block the chart metric is g_ij(x, τ) = λ(x, τ)² δ_ij with a closed-form
//! factor λ, so Christoffel symbols, curvature tensors and distances are
//! available analytically — no finite differencing anywhere in this module.

mod bounds;
mod curvature;
mod flow;
mod ops;
mod point;

pub use bounds::{
    metric_comparison_bound, sandwich_bounds, velocity_bound_constants,
    velocity_propagation_factor,
};
pub use curvature::{curvature_pack, h_form, CurvaturePack};
pub use flow::{ChartPoint, FlowKind, FlowManifold};
pub use ops::{
    frozen_exp, frozen_exp_rk4, frozen_log, gram_schmidt, metric_inner, metric_norm, rho,
    section_frame,
};
pub use point::{Frame, SpaceTimePoint, TangentVec};

pub(crate) use curvature::{h_form_eval, MetricEval};
pub(crate) use flow::{Block, BlockGeom};
pub(crate) use ops::{exp_chart, hyperbolic_exp_block, hyperbolic_log_block};
