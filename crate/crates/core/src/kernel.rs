//! Fixed-timestep dynamics of the elastic stick.
//!
//! The stick is a handle (kinematic, position-driven by the operator), a
//! linear spring, and a tip mass that feels the scene force. The operator is
//! rendered the spring reaction, so the coupling is impedance-style: position
//! in, force out.
//!
//! Integration is semi-implicit Euler. Velocity is updated first, then the
//! position is advanced with the new velocity. When any nano contribution is
//! active, the tip gap is clamped to a floor `gap_floor_fraction·σ` and the
//! velocity is zeroed on clamp. This keeps the Lennard-Jones singularity out
//! of reach.
//!
//! Nothing here classifies snap events. The instability emerges from the
//! dynamics, and the `experiments` module detects it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::force::{lj_force, lj_gradient, macro_force, require_positive, ParamError, SceneConfig};

/// Upper bound on `ω·dt` accepted at construction.
pub const STABILITY_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StickParams {
    /// Tip mass (kg).
    pub mass: f64,
    /// Spring between handle and tip (N/m).
    pub stiffness: f64,
    /// Viscous damping on the tip velocity (N·s/m).
    pub damping: f64,
}

impl Default for StickParams {
    fn default() -> Self {
        Self {
            mass: 5e-4,
            stiffness: 0.1,
            damping: 1.5e-3,
        }
    }
}

impl StickParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        require_positive("mass", self.mass)?;
        require_positive("stiffness", self.stiffness)?;
        require_positive("damping", self.damping)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Time step (s).
    pub dt: f64,
    pub scene: SceneConfig,
    pub stick: StickParams,
    /// Tip gap floor as a fraction of the repulsion length.
    pub gap_floor_fraction: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            scene: SceneConfig::default(),
            stick: StickParams::default(),
            gap_floor_fraction: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("dt must be strictly positive and finite, got {0}")]
    TimeStep(f64),
    #[error("gap_floor_fraction must lie in (0, 0.5), got {0}")]
    GapFloorFraction(f64),
    #[error(
        "unstable configuration: omega*dt = {omega_dt:.4} exceeds {STABILITY_LIMIT} \
         (effective stiffness {effective_stiffness:.4e} N/m, mass {mass:.4e} kg)"
    )]
    Unstable {
        omega_dt: f64,
        effective_stiffness: f64,
        mass: f64,
    },
    #[error("damping too strong for explicit integration: (c_total*dt/m) = {0:.4} >= 1")]
    Overdamped(f64),
}

impl KernelConfig {
    /// Gap floor in simulation length units.
    pub fn gap_floor(&self) -> f64 {
        self.gap_floor_fraction * self.scene.repulsion_length_sim()
    }

    /// Spring stiffness plus the stiffest surface response reachable by the
    /// tip, in simulation units.
    ///
    /// Blend can change at run time, so both scene endpoints are covered:
    /// the wall penalty and the nano repulsion gradient at the gap floor.
    pub fn effective_stiffness(&self) -> f64 {
        let s = &self.scene;
        let floor_m = self.gap_floor() * s.length_unit;
        let nano = lj_gradient(floor_m, &s.nano).abs() * s.length_unit / s.force_unit;
        self.stick.stiffness + nano.max(s.macro_contact.wall_stiffness)
    }

    /// `ω·dt` with `ω = sqrt(effective_stiffness / mass)`.
    pub fn stability_number(&self) -> f64 {
        (self.effective_stiffness() / self.stick.mass).sqrt() * self.dt
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ConfigError::TimeStep(self.dt));
        }
        if !(self.gap_floor_fraction > 0.0 && self.gap_floor_fraction < 0.5) {
            return Err(ConfigError::GapFloorFraction(self.gap_floor_fraction));
        }
        self.scene.validate()?;
        self.stick.validate()?;
        let omega_dt = self.stability_number();
        if !(omega_dt < STABILITY_LIMIT) {
            return Err(ConfigError::Unstable {
                omega_dt,
                effective_stiffness: self.effective_stiffness(),
                mass: self.stick.mass,
            });
        }
        let damping = (self.stick.damping + self.scene.macro_contact.wall_damping) * self.dt
            / self.stick.mass;
        if damping >= 1.0 {
            return Err(ConfigError::Overdamped(damping));
        }
        Ok(())
    }
}

/// Snapshot of the stick. Heights are measured from the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StickState {
    pub handle_pos: f64,
    pub tip_pos: f64,
    pub tip_vel: f64,
    /// Number of steps taken; `time == tick as f64 * dt`.
    pub tick: u64,
    pub time: f64,
    /// Spring reaction felt by the operator, `k·(tip − handle)`.
    pub last_force_on_handle: f64,
    /// Scene force that acted on the tip during the last step.
    pub last_surface_force: f64,
}

impl StickState {
    /// Tip resting on an unstretched spring under the handle.
    pub fn at_rest(handle_pos: f64) -> Self {
        Self {
            handle_pos,
            tip_pos: handle_pos,
            tip_vel: 0.0,
            tick: 0,
            time: 0.0,
            last_force_on_handle: 0.0,
            last_surface_force: 0.0,
        }
    }

    /// Tip gap above the surface.
    pub fn tip_gap(&self) -> f64 {
        self.tip_pos
    }
}

/// Force rendered to the operator.
pub fn handle_force(state: &StickState) -> f64 {
    state.last_force_on_handle
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum StepError {
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("step {index} failed: {source}")]
pub struct RunError {
    pub index: usize,
    #[source]
    pub source: StepError,
}

fn finite(what: &'static str, value: f64) -> Result<(), StepError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(StepError::NonFinite { what, value })
    }
}

/// A validated configuration ready to step.
///
/// Construction is the only place a configuration can be rejected; stepping
/// never allocates and only fails on non-finite inputs.
#[derive(Debug, Clone)]
pub struct Kernel {
    cfg: KernelConfig,
    floor: f64,
    inv_mass: f64,
}

impl Kernel {
    pub fn new(cfg: KernelConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            floor: cfg.gap_floor(),
            inv_mass: 1.0 / cfg.stick.mass,
            cfg,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    /// Gap floor in simulation units; enforced only while `blend > 0`.
    pub fn gap_floor(&self) -> f64 {
        self.floor
    }

    fn clamps(&self) -> bool {
        self.cfg.scene.blend > 0.0
    }

    /// Scene force at `gap`, with the gap floor applied to the nano term.
    #[inline(always)]
    pub fn surface_force(&self, gap: f64, tip_vel: f64) -> f64 {
        let s = &self.cfg.scene;
        let b = s.blend;
        let macro_part = if b < 1.0 {
            macro_force(gap, tip_vel, &s.macro_contact)
        } else {
            0.0
        };
        if b <= 0.0 {
            return macro_part;
        }
        let nano_gap = gap.max(self.floor) * s.length_unit;
        let nano_part = lj_force(nano_gap, &s.nano) / s.force_unit;
        if b >= 1.0 {
            nano_part
        } else {
            (1.0 - b) * macro_part + b * nano_part
        }
    }

    /// Tip at rest under `handle_pos`, with the reported forces filled in.
    pub fn rest_state(&self, handle_pos: f64) -> StickState {
        let mut s = StickState::at_rest(handle_pos);
        if self.clamps() && s.tip_pos < self.floor {
            s.tip_pos = self.floor;
        }
        s.last_force_on_handle = self.cfg.stick.stiffness * (s.tip_pos - s.handle_pos);
        s.last_surface_force = self.surface_force(s.tip_pos, 0.0);
        s
    }

    pub fn step(&self, state: &StickState, handle_target: f64) -> Result<StickState, StepError> {
        let mut next = *state;
        self.step_in_place(&mut next, handle_target)?;
        Ok(next)
    }

    #[inline]
    pub fn step_in_place(&self, s: &mut StickState, handle_target: f64) -> Result<(), StepError> {
        finite("handle target", handle_target)?;
        finite("tip position", s.tip_pos)?;
        finite("tip velocity", s.tip_vel)?;
        let StickParams {
            stiffness, damping, ..
        } = self.cfg.stick;
        let dt = self.cfg.dt;

        let surface = self.surface_force(s.tip_pos, s.tip_vel);
        let accel =
            (stiffness * (handle_target - s.tip_pos) - damping * s.tip_vel + surface) * self.inv_mass;
        let mut vel = s.tip_vel + accel * dt;
        let mut pos = s.tip_pos + vel * dt;
        if self.clamps() && pos < self.floor {
            pos = self.floor;
            vel = 0.0;
        }
        finite("tip position", pos)?;

        s.tip_pos = pos;
        s.tip_vel = vel;
        s.handle_pos = handle_target;
        s.tick += 1;
        s.time = s.tick as f64 * dt;
        s.last_surface_force = surface;
        s.last_force_on_handle = stiffness * (pos - handle_target);
        Ok(())
    }

    /// Applies [`Kernel::step`] once per trajectory entry; element `i` is the
    /// state after `i + 1` steps.
    pub fn run(&self, initial: &StickState, trajectory: &[f64]) -> Result<Vec<StickState>, RunError> {
        let mut out = Vec::with_capacity(trajectory.len());
        let mut s = *initial;
        for (index, &target) in trajectory.iter().enumerate() {
            self.step_in_place(&mut s, target)
                .map_err(|source| RunError { index, source })?;
            out.push(s);
        }
        Ok(out)
    }
}

/// Mechanical energy bookkeeping for passivity checks.
///
/// `E = ½·m·v² + ½·k·(handle − tip)² + U(tip)`, where `U` is the potential of
/// the conservative scene force. There is no closed form for `U` over the
/// clamped, blended scene, so it is accumulated by trapezoid quadrature of
/// `−F` with sub-intervals no longer than `σ/100`.
#[derive(Debug, Clone)]
pub struct EnergyAudit {
    kernel: Kernel,
    max_step: f64,
    gap: f64,
    potential: f64,
}

impl EnergyAudit {
    /// Potential referenced to zero at `reference_gap`.
    pub fn new(kernel: &Kernel, reference_gap: f64) -> Self {
        Self {
            kernel: kernel.clone(),
            max_step: kernel.cfg.scene.repulsion_length_sim() / 100.0,
            gap: reference_gap,
            potential: 0.0,
        }
    }

    fn conservative_force(&self, gap: f64) -> f64 {
        self.kernel.surface_force(gap, 0.0)
    }

    /// Surface potential at `gap`, advancing the running integral.
    pub fn potential_at(&mut self, gap: f64) -> f64 {
        let span = gap - self.gap;
        if span != 0.0 {
            let pieces = (span.abs() / self.max_step).ceil().max(1.0) as usize;
            let h = span / pieces as f64;
            let mut work = 0.0;
            let mut a = self.gap;
            let mut fa = self.conservative_force(a);
            for i in 1..=pieces {
                let b = if i == pieces { gap } else { self.gap + h * i as f64 };
                let fb = self.conservative_force(b);
                work += 0.5 * (fa + fb) * (b - a);
                a = b;
                fa = fb;
            }
            self.potential -= work;
            self.gap = gap;
        }
        self.potential
    }

    pub fn total(&mut self, s: &StickState) -> f64 {
        let StickParams {
            mass, stiffness, ..
        } = self.kernel.cfg.stick;
        let stretch = s.handle_pos - s.tip_pos;
        0.5 * mass * s.tip_vel * s.tip_vel + 0.5 * stiffness * stretch * stretch + self.potential_at(s.tip_pos)
    }
}
