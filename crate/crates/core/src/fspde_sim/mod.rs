//! Spectral Galerkin simulation of the delay systems.

pub mod drift;
pub mod integrator;
pub mod record;
pub mod segment;

pub use drift::{eval_drift, BoundDrift, BoundDrift2, Drift2Form, DriftSpec, DriftSpec2};
pub use integrator::{
    simulate_degenerate, simulate_degenerate_with, simulate_nondegenerate,
    simulate_nondegenerate_with, step_nondegenerate, stoch_conv_path, DegStepper, ModeCoeffs,
    NondegStepper, SimOptions,
};
pub use record::PathRecord;
pub use segment::{segment_sup_norm, Segment, SegmentGrid, WindowMax};
