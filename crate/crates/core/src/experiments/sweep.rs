//! Quasi-static approach-retract sweeps driven through the dynamic kernel.

use thiserror::Error;

use super::curve::{CurveSample, ForceCurve, SnapEvent, SnapKind};
use super::detect::{JumpDetector, JUMP_FACTOR};
use crate::kernel::{handle_force, ConfigError, Kernel, KernelConfig, StepError, StickState};

/// Largest handle motion per step, as a fraction of σ.
pub const MAX_STEP_FRACTION: f64 = 0.01;
/// Smallest per-step tip motion that can count as a jump, as a fraction of σ.
pub const STEP_JUMP_FLOOR: f64 = 1e-9;
/// Automatic dwell, in units of the slowest relaxation time.
pub const DWELL_RELAXATION_TIMES: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Recorded samples per branch, including both ends.
    pub samples_per_branch: usize,
    /// Hold time (s) before the approach and at the turnaround. `None` picks
    /// `20·max(2m/c, c/k)`.
    pub dwell: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            samples_per_branch: 2000,
            dwell: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("need z_start > z_end >= 0, got z_start = {z_start}, z_end = {z_end}")]
    Range { z_start: f64, z_end: f64 },
    #[error("speed must be positive and finite, got {0}")]
    Speed(f64),
    #[error("sweep too fast: {per_step} per step, must stay below 0.01·σ = {bound}")]
    TooFast { per_step: f64, bound: f64 },
    #[error("need at least 2 samples per branch, got {0}")]
    Samples(usize),
    #[error("dwell must be non-negative and finite, got {0}")]
    Dwell(f64),
    #[error("kernel diverged at t = {time}: {source}")]
    Step {
        time: f64,
        #[source]
        source: StepError,
    },
}

/// Relaxation dwell used when none is given.
pub fn auto_dwell(cfg: &KernelConfig) -> f64 {
    let p = cfg.stick;
    DWELL_RELAXATION_TIMES * (2.0 * p.mass / p.damping).max(p.damping / p.stiffness)
}

struct Plan {
    z_end: f64,
    dz: f64,
    steps_per_sample: u64,
    dwell_steps: u64,
}

impl Plan {
    fn handle(&self, sample: usize, step: u64) -> f64 {
        self.z_end + self.dz * (sample as f64 + step as f64 / self.steps_per_sample as f64)
    }
}

/// Online form of the jump rule at step resolution: every step's tip motion
/// is compared with the median per-step motion seen at the preceding
/// recorded samples. It must also outrun the handle by `JUMP_FACTOR`; a tip
/// on a stable branch only does that close to a fold, while the median alone
/// also fires where the tip leaves the stiff repulsive wall.
///
/// The onset state is the step before the first flagged step; the tip gap
/// after the jump is read at the next recorded sample.
struct EventTracker {
    history: JumpDetector,
    handle_gate: f64,
    threshold: f64,
    onset: Option<StickState>,
}

impl EventTracker {
    fn new(floor: f64, handle_step: f64) -> Self {
        Self {
            history: JumpDetector::new(floor),
            handle_gate: JUMP_FACTOR * handle_step,
            threshold: f64::INFINITY,
            onset: None,
        }
    }

    fn reset(&mut self) {
        self.history.reset();
        self.threshold = f64::INFINITY;
        self.onset = None;
    }

    #[inline(always)]
    fn observe(&mut self, prev: &StickState, motion: f64) {
        if motion > self.threshold && self.onset.is_none() {
            self.onset = Some(*prev);
        }
    }

    /// Called at each recorded sample with the motion of its last step.
    fn sample(&mut self, state: &StickState, motion: f64) -> Option<SnapEvent> {
        if let Some(before) = self.onset.take() {
            let after = state.tip_gap();
            let kind = if after < before.tip_gap() {
                SnapKind::SnapIn
            } else {
                SnapKind::SnapOff
            };
            // The tip now sits on another branch with its own typical motion.
            self.reset();
            return Some(SnapEvent {
                kind,
                handle_pos: before.handle_pos,
                tip_gap_before: before.tip_gap(),
                tip_gap_after: after,
            });
        }
        self.history.record(motion);
        self.threshold = self
            .history
            .threshold()
            .map_or(f64::INFINITY, |t| t.max(self.handle_gate));
        None
    }
}

struct Driver<'a> {
    kernel: &'a Kernel,
    state: StickState,
    events: EventTracker,
    found: Vec<SnapEvent>,
    last_motion: f64,
}

impl Driver<'_> {
    fn step(&mut self, target: f64) -> Result<(), SweepError> {
        let time = self.state.time;
        self.kernel
            .step_in_place(&mut self.state, target)
            .map_err(|source| SweepError::Step { time, source })
    }

    fn hold(&mut self, target: f64, steps: u64) -> Result<(), SweepError> {
        self.last_motion = 0.0;
        for _ in 0..steps {
            let prev = self.state.tip_gap();
            self.step(target)?;
            self.last_motion = (self.state.tip_gap() - prev).abs();
        }
        Ok(())
    }

    #[inline(always)]
    fn tracked_step(&mut self, target: f64) -> Result<(), SweepError> {
        let prev = self.state;
        self.step(target)?;
        let motion = (self.state.tip_gap() - prev.tip_gap()).abs();
        self.events.observe(&prev, motion);
        self.last_motion = motion;
        Ok(())
    }

    fn begin_branch(&mut self) {
        self.events.reset();
    }

    fn sample(&mut self) -> CurveSample {
        if let Some(e) = self.events.sample(&self.state, self.last_motion) {
            self.found.push(e);
        }
        CurveSample {
            handle_pos: self.state.handle_pos,
            handle_force: handle_force(&self.state),
            tip_gap: self.state.tip_gap(),
            time: self.state.time,
        }
    }
}

/// Sweeps the handle from `z_start` down to `z_end` and back at `speed`
/// with default options.
pub fn quasi_static_sweep(
    cfg: &KernelConfig,
    z_start: f64,
    z_end: f64,
    speed: f64,
) -> Result<ForceCurve, SweepError> {
    quasi_static_sweep_with(cfg, z_start, z_end, speed, &SweepOptions::default())
}

pub fn quasi_static_sweep_with(
    cfg: &KernelConfig,
    z_start: f64,
    z_end: f64,
    speed: f64,
    opts: &SweepOptions,
) -> Result<ForceCurve, SweepError> {
    let kernel = Kernel::new(*cfg)?;
    if !(z_start.is_finite() && z_end >= 0.0 && z_start > z_end) {
        return Err(SweepError::Range { z_start, z_end });
    }
    if !(speed.is_finite() && speed > 0.0) {
        return Err(SweepError::Speed(speed));
    }
    let sigma = cfg.scene.repulsion_length_sim();
    let bound = MAX_STEP_FRACTION * sigma;
    let per_step = speed * cfg.dt;
    if per_step >= bound {
        return Err(SweepError::TooFast { per_step, bound });
    }
    if opts.samples_per_branch < 2 {
        return Err(SweepError::Samples(opts.samples_per_branch));
    }
    let dwell = opts.dwell.unwrap_or_else(|| auto_dwell(cfg));
    if !(dwell.is_finite() && dwell >= 0.0) {
        return Err(SweepError::Dwell(dwell));
    }

    let samples = opts.samples_per_branch;
    let dz = (z_start - z_end) / (samples - 1) as f64;
    let plan = Plan {
        z_end,
        dz,
        steps_per_sample: (dz / per_step).ceil().max(1.0) as u64,
        dwell_steps: (dwell / cfg.dt).ceil() as u64,
    };

    let mut drv = Driver {
        kernel: &kernel,
        state: kernel.rest_state(plan.handle(samples - 1, 0)),
        events: EventTracker::new(STEP_JUMP_FLOOR * sigma, dz / plan.steps_per_sample as f64),
        found: Vec::new(),
        last_motion: 0.0,
    };
    let mut approach = Vec::with_capacity(samples);
    let mut retract = Vec::with_capacity(samples);

    drv.hold(plan.handle(samples - 1, 0), plan.dwell_steps)?;
    drv.begin_branch();
    approach.push(drv.sample());
    for m in (0..samples - 1).rev() {
        // Handle positions inside segment [m, m+1], walked downwards.
        for j in (0..plan.steps_per_sample).rev() {
            drv.tracked_step(plan.handle(m, j))?;
        }
        approach.push(drv.sample());
    }

    drv.hold(plan.handle(0, 0), plan.dwell_steps)?;
    drv.begin_branch();
    retract.push(drv.sample());
    for m in 0..samples - 1 {
        for j in 1..=plan.steps_per_sample {
            drv.tracked_step(plan.handle(m, j))?;
        }
        retract.push(drv.sample());
    }

    Ok(ForceCurve {
        approach,
        retract,
        events: drv.found,
        params_snapshot: *cfg,
    })
}
