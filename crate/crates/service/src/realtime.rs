//! The real-time stepping loop.
//!
//! One OS thread owns the kernel and steps it at `1/dt` on a monotonic
//! schedule. Commands arrive through a bounded [`Mailbox`] that the loop
//! only ever `try_lock`s. Snapshots leave through a [`SnapshotSink`] that
//! must not block; slow clients lose snapshots, the physics never waits.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering::Relaxed};
use std::sync::{Arc, Mutex, TryLockError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use nanotouch_core::experiments::{JumpDetector, SnapEvent, SnapKind};
use nanotouch_core::kernel::{handle_force, ConfigError, Kernel, KernelConfig, StickState};
use serde::Serialize;
use thiserror::Error;

use crate::protocol::{WireEvent, WireSnapshot};

pub const MAILBOX_CAPACITY: usize = 64;
/// The loop sleeps until this long before a release, then spins.
pub const SPIN_MARGIN: Duration = Duration::from_micros(40);
/// Falling further behind than this resynchronises the schedule.
pub const MAX_BACKLOG: Duration = Duration::from_secs(1);
/// Per-snapshot jump floor, as a fraction of σ.
pub const SNAPSHOT_JUMP_FLOOR: f64 = 0.01;
/// Initial handle height, in σ; far enough that the surface is felt as zero.
pub const INITIAL_HANDLE_SIGMAS: f64 = 1000.0;
const JUMP_FACTOR: f64 = nanotouch_core::experiments::detect::JUMP_FACTOR;

/// Commands in simulation units, as consumed by the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoopCommand {
    SetHandle(f64),
    Configure(KernelConfig),
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("command mailbox full")]
pub struct MailboxFull;

/// Bounded command queue between client I/O and the loop.
///
/// Handle updates are lossy: when the queue is full the oldest handle update
/// is dropped. Configuration commands are never dropped; posting one into a
/// queue full of configuration commands fails instead.
#[derive(Debug, Default)]
pub struct Mailbox {
    queue: Mutex<VecDeque<LoopCommand>>,
    dropped_handles: AtomicU64,
}

impl Mailbox {
    pub fn new() -> Self {
        Self {
            queue: Mutex::new(VecDeque::with_capacity(MAILBOX_CAPACITY)),
            dropped_handles: AtomicU64::new(0),
        }
    }

    fn evict_oldest_handle(&self, q: &mut VecDeque<LoopCommand>) -> bool {
        match q.iter().position(|c| matches!(c, LoopCommand::SetHandle(_))) {
            Some(i) => {
                q.remove(i);
                self.dropped_handles.fetch_add(1, Relaxed);
                true
            }
            None => false,
        }
    }

    pub fn post(&self, cmd: LoopCommand) -> Result<(), MailboxFull> {
        let mut q = self.queue.lock().unwrap_or_else(|e| e.into_inner());
        if q.len() >= MAILBOX_CAPACITY && !self.evict_oldest_handle(&mut q) {
            if matches!(cmd, LoopCommand::SetHandle(_)) {
                self.dropped_handles.fetch_add(1, Relaxed);
                return Ok(());
            }
            return Err(MailboxFull);
        }
        q.push_back(cmd);
        Ok(())
    }

    /// Moves everything queued into `out` without blocking. Returns false
    /// when the queue was busy; the commands are picked up next tick.
    pub fn try_drain(&self, out: &mut Vec<LoopCommand>) -> bool {
        let mut q = match self.queue.try_lock() {
            Ok(q) => q,
            Err(TryLockError::Poisoned(e)) => e.into_inner(),
            Err(TryLockError::WouldBlock) => return false,
        };
        out.extend(q.drain(..));
        true
    }

    pub fn len(&self) -> usize {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped_handle_updates(&self) -> u64 {
        self.dropped_handles.load(Relaxed)
    }
}

/// Counters exported on `/metrics`.
#[derive(Debug, Default)]
pub struct LoopMetrics {
    pub running: AtomicBool,
    pub realtime_priority: AtomicBool,
    pub ticks: AtomicU64,
    pub missed_deadlines: AtomicU64,
    pub max_lateness_ns: AtomicU64,
    pub resyncs: AtomicU64,
    pub snapshots_published: AtomicU64,
    pub snapshot_drops: AtomicU64,
    pub mailbox_busy: AtomicU64,
    pub commands_applied: AtomicU64,
    pub config_rejected: AtomicU64,
    pub step_faults: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSnapshot {
    pub running: bool,
    pub realtime_priority: bool,
    pub ticks: u64,
    pub missed_deadlines: u64,
    pub max_lateness_us: f64,
    pub resyncs: u64,
    pub snapshots_published: u64,
    pub snapshot_drops: u64,
    pub mailbox_busy: u64,
    pub commands_applied: u64,
    pub handle_updates_dropped: u64,
    pub config_rejected: u64,
    pub step_faults: u64,
}

impl LoopMetrics {
    pub fn snapshot(&self, mailbox: &Mailbox) -> MetricsSnapshot {
        MetricsSnapshot {
            running: self.running.load(Relaxed),
            realtime_priority: self.realtime_priority.load(Relaxed),
            ticks: self.ticks.load(Relaxed),
            missed_deadlines: self.missed_deadlines.load(Relaxed),
            max_lateness_us: self.max_lateness_ns.load(Relaxed) as f64 / 1e3,
            resyncs: self.resyncs.load(Relaxed),
            snapshots_published: self.snapshots_published.load(Relaxed),
            snapshot_drops: self.snapshot_drops.load(Relaxed),
            mailbox_busy: self.mailbox_busy.load(Relaxed),
            commands_applied: self.commands_applied.load(Relaxed),
            handle_updates_dropped: mailbox.dropped_handle_updates(),
            config_rejected: self.config_rejected.load(Relaxed),
            step_faults: self.step_faults.load(Relaxed),
        }
    }
}

/// The loop's state machine without any timing: apply commands, step, and
/// decide when a snapshot is due.
#[derive(Debug)]
pub struct LoopCore {
    kernel: Kernel,
    state: StickState,
    target: f64,
    snapshot_period: f64,
    since_snapshot: f64,
    detector: JumpDetector,
    last_snapshot: Option<(f64, f64)>,
    pending_events: Vec<SnapEvent>,
}

impl LoopCore {
    pub fn new(cfg: KernelConfig, snapshot_hz: f64) -> Result<Self, ConfigError> {
        let kernel = Kernel::new(cfg)?;
        let target = INITIAL_HANDLE_SIGMAS * cfg.scene.repulsion_length_sim();
        let state = kernel.rest_state(target);
        Ok(Self {
            detector: JumpDetector::new(SNAPSHOT_JUMP_FLOOR * cfg.scene.repulsion_length_sim()),
            kernel,
            state,
            target,
            snapshot_period: 1.0 / snapshot_hz,
            // First tick publishes.
            since_snapshot: f64::INFINITY,
            last_snapshot: None,
            pending_events: Vec::with_capacity(4),
        })
    }

    pub fn config(&self) -> &KernelConfig {
        self.kernel.config()
    }

    pub fn state(&self) -> &StickState {
        &self.state
    }

    pub fn apply(&mut self, cmd: LoopCommand) -> Result<(), ConfigError> {
        match cmd {
            LoopCommand::SetHandle(z) if z.is_finite() => self.target = z,
            LoopCommand::SetHandle(_) => {}
            LoopCommand::Configure(cfg) => {
                let mut cfg = cfg;
                // The schedule is fixed; the time step cannot change live.
                cfg.dt = self.kernel.config().dt;
                self.kernel = Kernel::new(cfg)?;
                self.detector =
                    JumpDetector::new(SNAPSHOT_JUMP_FLOOR * cfg.scene.repulsion_length_sim());
                self.last_snapshot = None;
            }
            LoopCommand::Reset => {
                let (tick, time) = (self.state.tick, self.state.time);
                self.state = StickState {
                    tick,
                    time,
                    ..self.kernel.rest_state(self.target)
                };
                self.detector.reset();
                self.last_snapshot = None;
            }
        }
        Ok(())
    }

    /// One kernel step. Returns a snapshot when one is due.
    pub fn tick(&mut self) -> Result<Option<WireSnapshot>, nanotouch_core::kernel::StepError> {
        let before = self.state;
        if let Err(e) = self.kernel.step_in_place(&mut self.state, self.target) {
            // Restart from rest rather than stopping the session.
            self.state = StickState {
                tick: before.tick + 1,
                time: before.time + self.kernel.config().dt,
                ..self.kernel.rest_state(self.target)
            };
            return Err(e);
        }
        self.since_snapshot += self.kernel.config().dt;
        if self.since_snapshot + 1e-9 * self.snapshot_period < self.snapshot_period {
            return Ok(None);
        }
        self.since_snapshot = if self.since_snapshot.is_finite() {
            self.since_snapshot - self.snapshot_period
        } else {
            0.0
        };
        self.detect();
        Ok(Some(self.snapshot()))
    }

    fn detect(&mut self) {
        let (handle, gap) = (self.state.handle_pos, self.state.tip_gap());
        if let Some((h0, g0)) = self.last_snapshot {
            let motion = (gap - g0).abs();
            let jump = self
                .detector
                .threshold()
                .is_some_and(|t| motion > t && motion > JUMP_FACTOR * (handle - h0).abs());
            if jump {
                self.pending_events.push(SnapEvent {
                    kind: if gap < g0 {
                        SnapKind::SnapIn
                    } else {
                        SnapKind::SnapOff
                    },
                    handle_pos: h0,
                    tip_gap_before: g0,
                    tip_gap_after: gap,
                });
                self.detector.reset();
            } else {
                self.detector.record(motion);
            }
        }
        self.last_snapshot = Some((handle, gap));
    }

    fn snapshot(&mut self) -> WireSnapshot {
        let s = &self.kernel.config().scene;
        let (lu, fu) = (s.length_unit, s.force_unit);
        WireSnapshot {
            time: self.state.time,
            handle_pos: self.state.handle_pos * lu,
            tip_pos: self.state.tip_pos * lu,
            handle_force: handle_force(&self.state) * fu,
            surface_force: self.state.last_surface_force * fu,
            blend: s.blend,
            events_since_last: self
                .pending_events
                .drain(..)
                .map(|e| WireEvent::from_sim(&e, lu))
                .collect(),
        }
    }
}

/// Receiver of snapshots. Must return quickly and never block.
pub trait SnapshotSink: Send + 'static {
    fn publish(&mut self, snapshot: WireSnapshot);
}

impl<F: FnMut(WireSnapshot) + Send + 'static> SnapshotSink for F {
    fn publish(&mut self, snapshot: WireSnapshot) {
        self(snapshot)
    }
}

pub struct LoopHandle {
    pub mailbox: Arc<Mailbox>,
    pub metrics: Arc<LoopMetrics>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<LoopCore>>,
}

impl LoopHandle {
    /// Stops the loop and returns its final state.
    pub fn shutdown(mut self) -> Option<LoopCore> {
        self.stop.store(true, Relaxed);
        self.thread.take().and_then(|t| t.join().ok())
    }
}

impl Drop for LoopHandle {
    fn drop(&mut self) {
        self.stop.store(true, Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn request_realtime_priority() -> bool {
    #[cfg(target_os = "linux")]
    unsafe {
        // Timer slack shortens the oversleep of the coarse wait.
        libc::prctl(libc::PR_SET_TIMERSLACK, 1 as libc::c_ulong);
        let param = libc::sched_param { sched_priority: 50 };
        libc::sched_setscheduler(0, libc::SCHED_FIFO, &param) == 0
    }
    #[cfg(not(target_os = "linux"))]
    {
        false
    }
}

fn wait_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now + SPIN_MARGIN {
        std::thread::sleep(deadline - now - SPIN_MARGIN);
    }
    while Instant::now() < deadline {
        std::hint::spin_loop();
    }
}

/// Starts the stepping thread. It runs until the handle is shut down or
/// dropped.
pub fn run_realtime_loop(
    cfg: KernelConfig,
    snapshot_hz: f64,
    mailbox: Arc<Mailbox>,
    mut sink: impl SnapshotSink,
) -> Result<LoopHandle, ConfigError> {
    let mut core = LoopCore::new(cfg, snapshot_hz)?;
    let metrics = Arc::new(LoopMetrics::default());
    let stop = Arc::new(AtomicBool::new(false));
    let (m, s, mb) = (metrics.clone(), stop.clone(), mailbox.clone());
    let period = Duration::from_secs_f64(cfg.dt);

    let thread = std::thread::Builder::new()
        .name("nanotouch-rt".into())
        .spawn(move || {
            m.realtime_priority.store(request_realtime_priority(), Relaxed);
            m.running.store(true, Relaxed);
            let mut inbox = Vec::with_capacity(MAILBOX_CAPACITY);
            let mut origin = Instant::now();
            let mut n: u32 = 0;
            while !s.load(Relaxed) {
                let release = origin + period * n;
                wait_until(release);

                if mb.try_drain(&mut inbox) {
                    for cmd in inbox.drain(..) {
                        match core.apply(cmd) {
                            Ok(()) => m.commands_applied.fetch_add(1, Relaxed),
                            Err(_) => m.config_rejected.fetch_add(1, Relaxed),
                        };
                    }
                } else {
                    m.mailbox_busy.fetch_add(1, Relaxed);
                }
                match core.tick() {
                    Ok(Some(snap)) => {
                        sink.publish(snap);
                        m.snapshots_published.fetch_add(1, Relaxed);
                    }
                    Ok(None) => {}
                    Err(_) => {
                        m.step_faults.fetch_add(1, Relaxed);
                    }
                }
                m.ticks.fetch_add(1, Relaxed);

                let done = Instant::now();
                let late = done.saturating_duration_since(release);
                if late > period {
                    m.missed_deadlines.fetch_add(1, Relaxed);
                    m.max_lateness_ns.fetch_max(late.as_nanos() as u64, Relaxed);
                }
                n += 1;
                if late > MAX_BACKLOG || n == u32::MAX {
                    m.resyncs.fetch_add(1, Relaxed);
                    origin = done;
                    n = 0;
                }
            }
            m.running.store(false, Relaxed);
            core
        })
        .expect("spawn stepping thread");

    Ok(LoopHandle {
        mailbox,
        metrics,
        stop,
        thread: Some(thread),
    })
}
