//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Exits non-zero on any FAIL only when `NANOTOUCH_ACCEPTANCE_STRICT=1`, so
//! host-dependent timing results are reported without breaking the build.

mod common;

use std::time::{Duration, Instant};

use nanotouch_core::experiments::{
    equilibrium_oracle, hysteresis_energy, quasi_static_sweep, validate_against_oracle, Branch,
    ForceCurve, OracleReport, SnapKind,
};
use nanotouch_core::kernel::{EnergyAudit, Kernel, KernelConfig};
use nanotouch_service::config::Config;
use nanotouch_service::protocol::{Command, CommandMessage, ParamsPatch, SweepArgs};
use nanotouch_service::telemetry::{TelemetryStore, ACTIVITY_WINDOW};
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use serde_json::json;

const Z_START: f64 = 45e-9;
const Z_END: f64 = 1e-9;
const SPEED: f64 = 6.6e-12;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { name, pass, detail }
}

fn stiffness(k: f64) -> KernelConfig {
    let mut cfg = KernelConfig::default();
    cfg.stick.stiffness = k;
    cfg
}

fn timed_sweep(cfg: &KernelConfig) -> (ForceCurve, f64) {
    let t = Instant::now();
    let c = quasi_static_sweep(cfg, Z_START, Z_END, SPEED).expect("sweep runs");
    (c, t.elapsed().as_secs_f64())
}

fn snap_in(soft: &ForceCurve, soft_s: f64, validation: &OracleReport) -> Outcome {
    let n_in = soft.events_of(SnapKind::SnapIn).count();
    let cmp = validation.events.iter().find(|e| e.kind == SnapKind::SnapIn);
    let Some(cmp) = cmp.filter(|_| n_in == 1) else {
        return report("snap-in emergence", false, format!("{n_in} snap_in events"));
    };
    let analytic = cmp.analytic_gap_m.unwrap();
    let rel = (cmp.tip_gap_before_m - analytic).abs() / analytic;
    let offset = cmp.fold_offset_samples.unwrap_or(f64::INFINITY);
    report(
        "snap-in emergence",
        rel < 0.05 && offset <= 2.0 && soft_s < 10.0,
        format!(
            "1 snap_in at gap {:.4e} m vs analytic {analytic:.4e} m ({:.2}% < 5%), \
             {offset:.2} samples from oracle fold (<= 2), sweep {soft_s:.2} s (< 10)",
            cmp.tip_gap_before_m,
            rel * 100.0
        ),
    )
}

fn no_snap(stiff: &ForceCurve, stiff_s: f64) -> Outcome {
    let a = stiff.branch(Branch::Approach);
    let r = stiff.branch(Branch::Retract);
    let same_grid = a.len() == r.len()
        && a.iter().zip(r.iter().rev()).all(|(x, y)| x.handle_pos == y.handle_pos);
    let fmax = a.iter().chain(r).map(|s| s.handle_force.abs()).fold(0.0, f64::max);
    let diff = a
        .iter()
        .zip(r.iter().rev())
        .map(|(x, y)| (x.handle_force - y.handle_force).abs())
        .fold(0.0, f64::max);
    let rel = diff / fmax;
    report(
        "no-snap condition",
        stiff.events.is_empty() && same_grid && rel < 1e-3 && stiff_s < 10.0,
        format!(
            "k = 10 N/m: {} events, branch difference {rel:.3e} of peak force (< 1e-3), \
             sweep {stiff_s:.2} s (< 10)",
            stiff.events.len()
        ),
    )
}

fn hysteresis(soft: &ForceCurve, stiff: &ForceCurve) -> Outcome {
    let z_in = soft.events_of(SnapKind::SnapIn).next().map(|e| e.handle_pos);
    let z_off = soft.events_of(SnapKind::SnapOff).next().map(|e| e.handle_pos);
    let e_soft = hysteresis_energy(soft).unwrap_or(f64::NAN);
    let e_stiff = hysteresis_energy(stiff).unwrap_or(f64::NAN);
    let ordered = matches!((z_in, z_off), (Some(i), Some(o)) if o > i);
    report(
        "hysteresis ordering and energy",
        ordered && e_soft > 0.0 && e_stiff.abs() < 1e-21,
        format!(
            "snap_off at {:.4e} m > snap_in at {:.4e} m, E = {e_soft:.4e} J (> 0), \
             stiff |E| = {:.3e} J (< 1e-21)",
            z_off.unwrap_or(f64::NAN),
            z_in.unwrap_or(f64::NAN),
            e_stiff.abs()
        ),
    )
}

fn oracle(validation: &OracleReport, secs: f64) -> Outcome {
    report(
        "oracle equivalence",
        validation.pass,
        format!(
            "worst stable-branch deviation {:.3e} m (< {:.3e} m = 1e-2 sigma) over {} samples, \
             {} flagged, {secs:.1} s",
            validation.worst_gap_deviation_m,
            validation.tolerance_m,
            validation.checked_samples,
            validation.flagged_count
        ),
    )
}

fn determinism(soft: &ForceCurve) -> Outcome {
    let again = quasi_static_sweep(&soft.params_snapshot, Z_START, Z_END, SPEED).unwrap();
    let (a, b) = (soft.to_csv(), again.to_csv());
    report(
        "determinism",
        a.as_bytes() == b.as_bytes(),
        format!("two sweeps, {} CSV bytes each, identical = {}", a.len(), a == b),
    )
}

fn passivity() -> Outcome {
    let mut cfg = KernelConfig::default();
    cfg.stick.damping = 1e-4;
    let k = Kernel::new(cfg).unwrap();
    let handle = 20e-9;
    let rest = equilibrium_oracle(&cfg, handle).stable().last().unwrap();
    let mut audit = EnergyAudit::new(&k, rest);
    let mut s = k.rest_state(handle);
    s.tip_pos = rest - 2e-9;
    let mut e = audit.total(&s);
    let e0 = e;
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0u64;
    for _ in 0..1_000_000 {
        k.step_in_place(&mut s, handle).unwrap();
        let e1 = audit.total(&s);
        let rise = (e1 - e) / e.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rise);
        if e1 > e + 1e-12 * e.abs() {
            violations += 1;
        }
        e = e1;
    }
    report(
        "passivity",
        violations == 0 && e < e0,
        format!(
            "1e6 steps, damping {:.1e} N s/m: {violations} steps above 1e-12 relative slack, \
             largest relative rise {worst:.2e}, E {e0:.3e} -> {e:.3e} J",
            cfg.stick.damping
        ),
    )
}

async fn realtime() -> Outcome {
    const RUN: Duration = Duration::from_secs(60);
    let srv = common::start(Config::default()).await;
    let mut ws = common::connect(srv.addr()).await;
    common::recv_type(&mut ws, "hello", Duration::from_secs(1)).await;
    let before = srv.metrics_snapshot();
    let t0 = Instant::now();
    let mut snapshots = 0u64;
    let mut last_time = f64::NEG_INFINITY;
    let mut monotone = true;
    let mut seq = 0u64;
    let mut next_input = t0;
    while t0.elapsed() < RUN {
        if Instant::now() >= next_input {
            // Slow scripted stroke between 20 and 40 nm, 30 inputs per second.
            let phase = t0.elapsed().as_secs_f64() * 0.5;
            let pos = 30e-9 + 10e-9 * phase.sin();
            seq += 1;
            common::send(&mut ws, json!({"v": 1, "seq": seq, "type": "set_handle", "pos": pos})).await;
            next_input += Duration::from_millis(33);
        }
        let left = next_input.saturating_duration_since(Instant::now());
        if let Some(m) = common::recv(&mut ws, left).await {
            if m["type"] == "snapshot" {
                snapshots += 1;
                let t = m["time"].as_f64().unwrap();
                monotone &= t > last_time;
                last_time = t;
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let after = srv.metrics_snapshot();
    srv.shutdown().await;

    let ticks = (after.ticks - before.ticks) as f64;
    let missed = after.missed_deadlines - before.missed_deadlines;
    let tick_hz = ticks / elapsed;
    let snap_hz = snapshots as f64 / elapsed;
    report(
        "real-time budget",
        missed == 0 && (tick_hz - 1e4).abs() < 10.0 && (snap_hz - 60.0).abs() <= 2.0 && monotone,
        format!(
            "{elapsed:.1} s with one scripted client: {tick_hz:.1} ticks/s, {missed} missed \
             deadlines (max lateness {:.0} us, realtime priority {}), client received \
             {snap_hz:.2} snapshots/s, monotone {monotone}",
            after.max_lateness_us, after.realtime_priority
        ),
    )
}

fn telemetry() -> Outcome {
    let mut st = TelemetryStore::new();
    for i in 0..3 {
        let id = format!("s{i}");
        let t0 = 1000.0 * i as f64;
        st.open(&id, t0, chrono::Utc::now());
        // Inputs every 0.5 s; the last one stays active for the window.
        let inputs = ((120.0 - ACTIVITY_WINDOW) / 0.5) as usize;
        for j in 0..=inputs {
            st.handle_input(&id, 20e-9 + j as f64 * 1e-11, t0 + j as f64 * 0.5);
        }
        st.close(&id, t0 + 240.0);
    }
    let r = st.report();
    report(
        "telemetry",
        r.session_count == 3
            && (r.mean_presence_s - 240.0).abs() <= 0.5
            && (r.mean_manipulation_s - 120.0).abs() <= 0.5,
        format!(
            "{} scripted sessions: mean presence {:.2} s (240 +- 0.5), mean manipulation \
             {:.2} s (120 +- 0.5)",
            r.session_count, r.mean_presence_s, r.mean_manipulation_s
        ),
    )
}

fn protocol() -> Outcome {
    const CASES: u32 = 10_000;
    let finite = || {
        use proptest::num::f64::*;
        NORMAL | SUBNORMAL | ZERO | POSITIVE | NEGATIVE
    };
    let opt = move || proptest::option::of(finite());
    let patch = (opt(), opt(), opt(), opt(), opt(), opt(), opt(), opt(), opt()).prop_map(
        |(a, b, c, d, e, f, g, h, i)| ParamsPatch {
            mass: a,
            stiffness: b,
            damping: c,
            hamaker: d,
            tip_radius: e,
            repulsion_length: f,
            wall_stiffness: g,
            wall_damping: h,
            gap_floor_fraction: i,
        },
    );
    let command = prop_oneof![
        finite().prop_map(|pos| Command::SetHandle { pos }),
        finite().prop_map(|value| Command::SetBlend { value }),
        patch.prop_map(Command::SetParams),
        Just(Command::Reset {}),
        (finite(), finite(), finite())
            .prop_map(|(z_start, z_end, speed)| Command::StartSweep(SweepArgs { z_start, z_end, speed })),
    ];
    let message = (any::<u32>(), any::<u64>(), command)
        .prop_map(|(v, seq, command)| CommandMessage { v, seq, command });
    let mut runner = TestRunner::new(RunnerConfig {
        cases: CASES,
        failure_persistence: None,
        ..RunnerConfig::default()
    });
    let result = runner.run(&message, |m| {
        let text = serde_json::to_string(&m).unwrap();
        let back: CommandMessage = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        Ok(())
    });
    report(
        "protocol round-trip",
        result.is_ok(),
        match result {
            Ok(()) => format!("{CASES} generated CommandMessages round-trip identically"),
            Err(e) => format!("counterexample: {e}"),
        },
    )
}

fn main() {
    let start = Instant::now();
    let (soft, soft_s) = timed_sweep(&stiffness(0.1));
    let (stiff, stiff_s) = timed_sweep(&stiffness(10.0));
    let t = Instant::now();
    let validation = validate_against_oracle(&soft);
    let validation_s = t.elapsed().as_secs_f64();

    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let outcomes = vec![
        snap_in(&soft, soft_s, &validation),
        no_snap(&stiff, stiff_s),
        hysteresis(&soft, &stiff),
        oracle(&validation, validation_s),
        determinism(&soft),
        passivity(),
        rt.block_on(realtime()),
        telemetry(),
        protocol(),
    ];

    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!(
        "acceptance: {}/{} passed in {:.0} s",
        outcomes.len() - failed.len(),
        outcomes.len(),
        start.elapsed().as_secs_f64()
    );
    for o in &failed {
        eprintln!("failed: {} ({})", o.name, o.detail);
    }
    let strict = std::env::var("NANOTOUCH_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
