//! Couplings of two solutions: synchronous (shared noise) and by change of
//! measure for the degenerate system, plus the Harnack estimator built on
//! the latter.

pub mod harnack;
pub mod plan;
pub mod sync;

pub use harnack::{default_bank, estimate_harnack, estimate_harnack_with_plan, FunctionalRow, HarnackReport, TestFunctional};
pub use plan::{build_plan, qtilde_matrix, run_plan, run_plan_path, GirsanovRecord, HarnackPlan, PlanOutcome};
pub use sync::{synchronous_couple, synchronous_couple_degenerate, CouplingRecord};
