//! Conditioned variational inference: the constraint-conditioned E-step, the
//! threshold-conditioned M-step and the ELBO.

mod dual;
mod elbo;
mod em;
mod estep;
mod policy;

pub use dual::{
    closed_form_q, closed_form_q_into, slater_margin, solve_dual, DualProblem, DualSolution,
    DualVars, TiltMoments, DUAL_MAX_ITER, DUAL_TOL, ETA_FLOOR, LAMBDA_MAX,
};
pub use elbo::{elbo_exact, elbo_monte_carlo};
pub use em::{
    elbo_monotonicity, exact_em, EmRecord, ExactEmConfig, MonotonicityAudit, TrustRegionConfig,
};
pub use estep::{
    dual_problem, estep, primal_terms, EStepOutput, EStepReport, ExactQ, QSource,
    VariationalPolicy, ESTEP_TOL,
};
pub use policy::{mstep, MStepConfig, MStepReport, MStepTarget, ParametricPolicy};
