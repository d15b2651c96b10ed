//! Headless experiments on top of the kernel: force-curve sweeps, snap
//! detection, hysteresis and the static equilibrium oracle.

pub mod curve;
pub mod detect;
pub mod oracle;
pub mod sweep;
pub mod validate;

pub use curve::{
    hysteresis_energy, Branch, CurveError, CurveSample, ForceCurve, SnapEvent, SnapKind, CSV_HEADER,
};
pub use detect::{detect_jumps, JumpDetector, JumpSpan};
pub use oracle::{balance_scan, equilibrium_oracle, fold_points, Equilibrium, EquilibriumSet, FoldKind, FoldPoint};
pub use sweep::{quasi_static_sweep, quasi_static_sweep_with, SweepError, SweepOptions};
pub use validate::{validate_against_oracle, EventComparison, OracleReport};
