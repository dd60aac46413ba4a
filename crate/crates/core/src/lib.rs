//! Matching of model predictions to ground-truth objects through a single
//! parameterized family: entropic-regularized unbalanced optimal transport.
//!
//! The limit cases of the family reproduce the classical strategies exactly:
//!
//! - both marginal constraints hard and no regularization: the Hungarian
//!   assignment ([`exact::hungarian`]);
//! - hard row constraint, no column constraint: each prediction matched to
//!   its closest ground truth, with the constant background cost acting as a
//!   threshold ([`exact::closest_per_prediction`]);
//! - the converse: each ground truth matched to its closest prediction
//!   ([`exact::closest_per_groundtruth`]);
//! - at `eps = 1`, one-sided constraints give row- or column-wise softmax
//!   matches in closed form ([`scaling::softmax_limit`]).
//!
//! In between, [`scaling::sinkhorn`] and [`scaling::unbalanced_scaling`]
//! solve the regularized problems with simple data-parallel iterations.
//!
//! Costs are assembled from box geometry and classification scores by
//! [`cost::build_cost`]; [`analysis`] holds the objective evaluator and the
//! supporting entropy, projector, and common-measure machinery; [`mining`]
//! implements hard-negative bookkeeping over fractional plans.

pub mod analysis;
pub mod cost;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod mining;
mod numeric;
pub mod plan;
pub mod scaling;

pub use analysis::{
    common_measure, entropy, epsilon_rule, kl, project_uniform, unbalanced_objective,
    EpsilonConvention, ObjectiveBreakdown, ObjectiveOptions, Rational,
};
pub use cost::{
    build_cost, prop1_marginals, CostMatrix, CostWeights, GroundTruth, MarginalPair, Prediction,
};
pub use error::{MatchError, Result};
pub use exact::{
    assignment_to_plan, brute_force_bm, closest_per_groundtruth, closest_per_prediction,
    hungarian, Assignment,
};
pub use geometry::{giou, iou, l1_box, BBox};
pub use mining::{count_positives_negatives, select_hard_negatives, MiningResult};
pub use plan::TransportPlan;
pub use scaling::{
    dual_softmax, sinkhorn, sinkhorn_one_iteration, sinkhorn_with_init, softmax_limit, solve,
    solve_batch, unbalanced_scaling, ScalingState, SoftmaxAxis, SolverConfig, Tau,
};
