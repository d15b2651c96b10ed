//! Python bindings. All quantities are SI.
//!
//! ```python
//! import nanotouch
//! cfg = nanotouch.KernelConfig(stiffness=0.1)
//! curve = nanotouch.quasi_static_sweep(cfg, 45e-9, 1e-9, 6.6e-12)
//! [e.kind for e in curve.events]        # ['snap_in', 'snap_off']
//! curve.hysteresis_energy()             # J
//! ```

use nanotouch_core::experiments::{self, Branch, CurveSample, SnapEvent as CoreEvent};
use nanotouch_core::force::{self as core_force, NanoForceParams};
use nanotouch_core::kernel::{self as core_kernel, KernelConfig as CoreConfig, StickState as CoreState};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn nano(hamaker: f64, tip_radius: f64, repulsion_length: f64) -> PyResult<NanoForceParams> {
    NanoForceParams::new(hamaker, tip_radius, repulsion_length).map_err(value_err)
}

/// Sphere-plane Lennard-Jones force on the tip (N); negative is attractive.
#[pyfunction]
#[pyo3(signature = (gap, hamaker=1e-19, tip_radius=20e-9, repulsion_length=0.34e-9))]
fn nano_force(gap: f64, hamaker: f64, tip_radius: f64, repulsion_length: f64) -> PyResult<f64> {
    core_force::nano_force(gap, &nano(hamaker, tip_radius, repulsion_length)?).map_err(value_err)
}

/// dF/dgap (N/m).
#[pyfunction]
#[pyo3(signature = (gap, hamaker=1e-19, tip_radius=20e-9, repulsion_length=0.34e-9))]
fn nano_force_gradient(
    gap: f64,
    hamaker: f64,
    tip_radius: f64,
    repulsion_length: f64,
) -> PyResult<f64> {
    core_force::nano_force_gradient(gap, &nano(hamaker, tip_radius, repulsion_length)?)
        .map_err(value_err)
}

/// Gap where the force vanishes, σ/30^(1/6).
#[pyfunction]
#[pyo3(signature = (hamaker=1e-19, tip_radius=20e-9, repulsion_length=0.34e-9))]
fn equilibrium_gap(hamaker: f64, tip_radius: f64, repulsion_length: f64) -> PyResult<f64> {
    Ok(nano(hamaker, tip_radius, repulsion_length)?.equilibrium_gap())
}

/// Snap-in gap of the attractive branch for a spring of `stiffness` (N/m).
#[pyfunction]
#[pyo3(signature = (stiffness, hamaker=1e-19, tip_radius=20e-9, repulsion_length=0.34e-9))]
fn attractive_instability_gap(
    stiffness: f64,
    hamaker: f64,
    tip_radius: f64,
    repulsion_length: f64,
) -> PyResult<f64> {
    if !(stiffness.is_finite() && stiffness > 0.0) {
        return Err(value_err(format!("stiffness must be positive, got {stiffness}")));
    }
    Ok(nano(hamaker, tip_radius, repulsion_length)?.attractive_instability_gap(stiffness))
}

/// Kernel configuration. Keyword arguments override the defaults.
#[pyclass(name = "KernelConfig", module = "nanotouch", skip_from_py_object)]
#[derive(Clone, Copy)]
struct KernelConfig {
    inner: CoreConfig,
}

macro_rules! config_fields {
    ($($get:ident, $set:ident => $($path:ident).+;)* @methods { $($extra:tt)* }) => {
        fn field_mut<'a>(c: &'a mut CoreConfig, name: &str) -> Option<&'a mut f64> {
            match name {
                $(stringify!($get) => Some(&mut c.$($path).+),)*
                _ => None,
            }
        }

        #[pymethods]
        impl KernelConfig {
            $(
                #[getter]
                fn $get(&self) -> f64 {
                    self.inner.$($path).+
                }
                #[setter]
                fn $set(&mut self, v: f64) -> PyResult<()> {
                    let mut next = self.inner;
                    next.$($path).+ = v;
                    next.validate().map_err(value_err)?;
                    self.inner = next;
                    Ok(())
                }
            )*
            $($extra)*
        }
    };
}

config_fields! {
    dt, set_dt => dt;
    mass, set_mass => stick.mass;
    stiffness, set_stiffness => stick.stiffness;
    damping, set_damping => stick.damping;
    hamaker, set_hamaker => scene.nano.hamaker;
    tip_radius, set_tip_radius => scene.nano.tip_radius;
    repulsion_length, set_repulsion_length => scene.nano.repulsion_length;
    blend, set_blend => scene.blend;
    wall_stiffness, set_wall_stiffness => scene.macro_contact.wall_stiffness;
    wall_damping, set_wall_damping => scene.macro_contact.wall_damping;
    gap_floor_fraction, set_gap_floor_fraction => gap_floor_fraction;
    @methods {
        #[new]
        #[pyo3(signature = (**kwargs))]
        fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
            let mut inner = CoreConfig::default();
            if let Some(kw) = kwargs {
                for (k, v) in kw.iter() {
                    let name: String = k.extract()?;
                    let slot = field_mut(&mut inner, &name)
                        .ok_or_else(|| value_err(format!("unknown KernelConfig field {name:?}")))?;
                    *slot = v.extract()?;
                }
            }
            inner.validate().map_err(value_err)?;
            Ok(Self { inner })
        }

        /// Full configuration as JSON, including units and macro-scene fields.
        fn to_json(&self) -> String {
            serde_json::to_string(&self.inner).expect("plain data")
        }

        #[staticmethod]
        fn from_json(text: &str) -> PyResult<Self> {
            let inner: CoreConfig = serde_json::from_str(text).map_err(value_err)?;
            inner.validate().map_err(value_err)?;
            Ok(Self { inner })
        }

        /// Lowest reachable tip gap (m).
        fn gap_floor(&self) -> f64 {
            self.inner.gap_floor() * self.inner.scene.length_unit
        }

        fn __repr__(&self) -> String {
            format!("KernelConfig({})", self.to_json())
        }
    }
}

/// Stick state after some number of steps.
#[pyclass(name = "StickState", module = "nanotouch", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct StickState {
    inner: CoreState,
}

#[pymethods]
impl StickState {
    #[getter]
    fn handle_pos(&self) -> f64 {
        self.inner.handle_pos
    }
    #[getter]
    fn tip_pos(&self) -> f64 {
        self.inner.tip_pos
    }
    #[getter]
    fn tip_vel(&self) -> f64 {
        self.inner.tip_vel
    }
    #[getter]
    fn tick(&self) -> u64 {
        self.inner.tick
    }
    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }
    #[getter]
    fn handle_force(&self) -> f64 {
        core_kernel::handle_force(&self.inner)
    }
    #[getter]
    fn surface_force(&self) -> f64 {
        self.inner.last_surface_force
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "StickState(tick={}, handle_pos={:e}, tip_pos={:e}, tip_vel={:e})",
            s.tick, s.handle_pos, s.tip_pos, s.tip_vel
        )
    }
}

/// Fixed-step integrator. Positions are in the configuration's simulation
/// units, which are metres unless `length_unit` was changed.
#[pyclass(name = "Kernel", module = "nanotouch", frozen)]
struct Kernel {
    inner: core_kernel::Kernel,
}

#[pymethods]
impl Kernel {
    #[new]
    fn new(config: PyRef<'_, KernelConfig>) -> PyResult<Self> {
        Ok(Self {
            inner: core_kernel::Kernel::new(config.inner).map_err(value_err)?,
        })
    }

    fn rest_state(&self, handle_pos: f64) -> StickState {
        StickState {
            inner: self.inner.rest_state(handle_pos),
        }
    }

    fn step(&self, state: PyRef<'_, StickState>, handle_target: f64) -> PyResult<StickState> {
        self.inner
            .step(&state.inner, handle_target)
            .map(|inner| StickState { inner })
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// One step per trajectory entry; returns the final state only, use
    /// `run_states` for the full history.
    fn run(&self, py: Python<'_>, state: PyRef<'_, StickState>, trajectory: Vec<f64>) -> PyResult<StickState> {
        let start = state.inner;
        py.detach(|| {
            let mut s = start;
            for (i, &z) in trajectory.iter().enumerate() {
                self.inner
                    .step_in_place(&mut s, z)
                    .map_err(|e| PyRuntimeError::new_err(format!("step {i}: {e}")))?;
            }
            Ok(StickState { inner: s })
        })
    }

    fn run_states(
        &self,
        py: Python<'_>,
        state: PyRef<'_, StickState>,
        trajectory: Vec<f64>,
    ) -> PyResult<Vec<StickState>> {
        let start = state.inner;
        py.detach(|| self.inner.run(&start, &trajectory))
            .map(|v| v.into_iter().map(|inner| StickState { inner }).collect())
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

#[pyclass(name = "SnapEvent", module = "nanotouch", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct SnapEvent {
    inner: CoreEvent,
    lu: f64,
}

#[pymethods]
impl SnapEvent {
    /// `"snap_in"` or `"snap_off"`.
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.as_str()
    }
    #[getter]
    fn handle_pos(&self) -> f64 {
        self.inner.handle_pos * self.lu
    }
    #[getter]
    fn tip_gap_before(&self) -> f64 {
        self.inner.tip_gap_before * self.lu
    }
    #[getter]
    fn tip_gap_after(&self) -> f64 {
        self.inner.tip_gap_after * self.lu
    }

    fn __repr__(&self) -> String {
        format!(
            "SnapEvent({}, handle_pos={:e}, tip_gap_before={:e}, tip_gap_after={:e})",
            self.kind(),
            self.handle_pos(),
            self.tip_gap_before(),
            self.tip_gap_after()
        )
    }
}

/// Approach and retract branches of a sweep.
#[pyclass(name = "ForceCurve", module = "nanotouch", frozen)]
struct ForceCurve {
    inner: experiments::ForceCurve,
}

impl ForceCurve {
    /// Rows of `(handle_pos_m, handle_force_N, tip_gap_m, time_s)`.
    fn rows(&self, b: Branch) -> Vec<(f64, f64, f64, f64)> {
        let lu = self.inner.params_snapshot.scene.length_unit;
        let fu = self.inner.params_snapshot.scene.force_unit;
        self.inner
            .branch(b)
            .iter()
            .map(|s: &CurveSample| (s.handle_pos * lu, s.handle_force * fu, s.tip_gap * lu, s.time))
            .collect()
    }
}

#[pymethods]
impl ForceCurve {
    /// `(handle_pos_m, handle_force_N, tip_gap_m, time_s)` rows, descending handle.
    #[getter]
    fn approach(&self) -> Vec<(f64, f64, f64, f64)> {
        self.rows(Branch::Approach)
    }

    /// Same columns, ascending handle.
    #[getter]
    fn retract(&self) -> Vec<(f64, f64, f64, f64)> {
        self.rows(Branch::Retract)
    }

    #[getter]
    fn events(&self) -> Vec<SnapEvent> {
        let lu = self.inner.params_snapshot.scene.length_unit;
        self.inner
            .events
            .iter()
            .map(|&inner| SnapEvent { inner, lu })
            .collect()
    }

    #[getter]
    fn config(&self) -> KernelConfig {
        KernelConfig {
            inner: self.inner.params_snapshot,
        }
    }

    /// Area between the branches (J); positive when retract is pulled harder.
    fn hysteresis_energy(&self) -> PyResult<f64> {
        experiments::hysteresis_energy(&self.inner).map_err(value_err)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    #[staticmethod]
    fn from_csv(text: &str, config: PyRef<'_, KernelConfig>) -> PyResult<Self> {
        experiments::ForceCurve::from_csv(text, config.inner)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// Oracle cross-check; returns the report as a dict.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let json = py.detach(|| experiments::validate_against_oracle(&self.inner).to_json());
        py.import("json")?.call_method1("loads", (json,))
    }

    fn __len__(&self) -> usize {
        self.inner.approach.len() + self.inner.retract.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ForceCurve({} + {} samples, {} events)",
            self.inner.approach.len(),
            self.inner.retract.len(),
            self.inner.events.len()
        )
    }
}

/// Approach from `z_start` down to `z_end` and back at `speed` (m, m/s).
#[pyfunction]
#[pyo3(signature = (config, z_start, z_end, speed, samples_per_branch=2000, dwell=None))]
fn quasi_static_sweep(
    py: Python<'_>,
    config: PyRef<'_, KernelConfig>,
    z_start: f64,
    z_end: f64,
    speed: f64,
    samples_per_branch: usize,
    dwell: Option<f64>,
) -> PyResult<ForceCurve> {
    let cfg = config.inner;
    let lu = cfg.scene.length_unit;
    let opts = experiments::SweepOptions {
        samples_per_branch,
        dwell,
    };
    py.detach(|| {
        experiments::quasi_static_sweep_with(&cfg, z_start / lu, z_end / lu, speed / lu, &opts)
    })
    .map(|inner| ForceCurve { inner })
    .map_err(|e| match e {
        experiments::SweepError::Step { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => value_err(e),
    })
}

/// Static equilibria at one handle height as `(tip_gap_m, stable)` pairs.
#[pyfunction]
fn equilibrium_oracle(config: PyRef<'_, KernelConfig>, handle_pos: f64) -> PyResult<Vec<(f64, bool)>> {
    let cfg = config.inner;
    let lu = cfg.scene.length_unit;
    if !(handle_pos.is_finite() && handle_pos / lu > cfg.gap_floor()) {
        return Err(value_err(format!(
            "handle_pos must lie above the gap floor ({:e} m)",
            cfg.gap_floor() * lu
        )));
    }
    Ok(experiments::equilibrium_oracle(&cfg, handle_pos / lu)
        .equilibria
        .iter()
        .map(|e| (e.tip_gap * lu, e.stable))
        .collect())
}

/// Handle heights where the equilibrium count changes, as
/// `(kind, handle_pos_m, merge_gap_m)` with kind `"lower"` or `"upper"`.
#[pyfunction]
fn fold_points(
    py: Python<'_>,
    config: PyRef<'_, KernelConfig>,
    z_lo: f64,
    z_hi: f64,
    handle_step: f64,
) -> PyResult<Vec<(&'static str, f64, f64)>> {
    let cfg = config.inner;
    let lu = cfg.scene.length_unit;
    if !(z_lo / lu > cfg.gap_floor() && z_hi > z_lo && handle_step > 0.0) {
        return Err(value_err("need gap floor < z_lo < z_hi and handle_step > 0"));
    }
    let folds = py.detach(|| experiments::fold_points(&cfg, z_lo / lu, z_hi / lu, handle_step / lu));
    Ok(folds
        .iter()
        .map(|f| {
            let kind = match f.kind {
                experiments::FoldKind::Lower => "lower",
                experiments::FoldKind::Upper => "upper",
            };
            (kind, f.handle_pos * lu, f.merge_gap * lu)
        })
        .collect())
}

#[pymodule]
pub fn nanotouch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(nano_force, m)?)?;
    m.add_function(wrap_pyfunction!(nano_force_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium_gap, m)?)?;
    m.add_function(wrap_pyfunction!(attractive_instability_gap, m)?)?;
    m.add_function(wrap_pyfunction!(quasi_static_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(fold_points, m)?)?;
    m.add_class::<KernelConfig>()?;
    m.add_class::<StickState>()?;
    m.add_class::<Kernel>()?;
    m.add_class::<SnapEvent>()?;
    m.add_class::<ForceCurve>()?;
    Ok(())
}
