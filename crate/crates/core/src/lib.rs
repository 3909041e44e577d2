//! Cohort-based trust-region Bayesian optimization with primal-dual
//! constraint handling, plus a synthetic ad-load simulation harness for
//! benchmarking it.
//!
//! The crate is generic over the scalar type through [`real::Real`]; the
//! aliases at the crate root pin everything to `f64`, which is what the CLI
//! and the benchmark suite use.

pub mod acceptance;
pub mod acquisition;
pub mod config;
pub mod dual;
pub mod gp;
pub(crate) mod linalg;
pub mod optimizer;
pub mod real;
pub mod rng;
pub mod sim;
pub mod trust_region;

/// Double-precision kernel configuration.
pub type Kernel = gp::KernelSpec<f64>;
/// Double-precision GP surrogate.
pub type Gp = gp::GpModel<f64>;
/// Double-precision objective pair.
pub type Objectives = acquisition::pareto::ObjectivePair<f64>;
/// Double-precision Pareto front.
pub type Front = acquisition::pareto::ParetoFront<f64>;
/// Double-precision dual state.
pub type Duals = dual::DualState<f64>;
/// Double-precision policy vector.
pub type Policy = sim::PolicyVector<f64>;
/// Double-precision context vector.
pub type Context = sim::ContextVector<f64>;
/// Double-precision trust region.
pub type Region = trust_region::TrustRegion<f64>;
/// Double-precision experiment configuration.
pub type Config = config::ExperimentConfig<f64>;
/// Double-precision live optimizer state.
pub type Optimizer = optimizer::OptimizerState<f64>;
/// Double-precision run outcome.
pub type Run = optimizer::RunResult<f64>;
