//! Virtual AFM nanomanipulator: tip-surface force laws, the elastic-stick
//! kernel and force-curve experiments.
//!
//! ```
//! use nanotouch_core::{quasi_static_sweep, KernelConfig};
//!
//! let mut cfg = KernelConfig::default();
//! cfg.stick.stiffness = 10.0;
//! let curve = quasi_static_sweep(&cfg, 3e-9, 1e-9, 2e-9).unwrap();
//! assert!(curve.events.is_empty());
//! ```

pub mod experiments;
pub mod force;
pub mod kernel;

pub use experiments::{
    equilibrium_oracle, hysteresis_energy, quasi_static_sweep, validate_against_oracle, ForceCurve,
    OracleReport, SnapEvent, SnapKind,
};
pub use force::{
    macro_force, nano_force, nano_force_gradient, scene_force, MacroContactParams, NanoForceParams,
    SceneConfig,
};
pub use kernel::{handle_force, Kernel, KernelConfig, StickParams, StickState};
