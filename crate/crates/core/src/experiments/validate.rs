//! Cross-check of a dynamic force curve against the static oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curve::{Branch, ForceCurve, SnapEvent, SnapKind};
use super::detect::{JUMP_FACTOR, MEDIAN_WINDOW};
use super::oracle::{equilibrium_oracle, fold_points, FoldKind, FoldPoint};

/// Allowed distance to a stable equilibrium, as a fraction of σ.
pub const TOLERANCE_FRACTION: f64 = 1e-2;
/// Samples on either side of an event left out of the comparison.
pub const EVENT_EXCLUSION: usize = 3;
/// Event-to-fold agreement required, in sweep samples.
pub const FOLD_MATCH_SAMPLES: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDeviation {
    pub branch: Branch,
    pub index: usize,
    pub handle_pos_m: f64,
    pub tip_gap_m: f64,
    pub deviation_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventComparison {
    pub kind: SnapKind,
    pub handle_pos_m: f64,
    pub tip_gap_before_m: f64,
    pub tip_gap_after_m: f64,
    /// Matching oracle fold, if the sweep range contains one.
    pub fold_handle_pos_m: Option<f64>,
    pub fold_gap_m: Option<f64>,
    /// `|handle_pos − fold_handle_pos|` in sweep samples.
    pub fold_offset_samples: Option<f64>,
    pub fold_match: bool,
    /// `(H·R/(3k))^(1/3)` for snap-in events.
    pub analytic_gap_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSettings {
    pub jump_factor: f64,
    pub median_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub pass: bool,
    pub worst_gap_deviation_m: f64,
    pub tolerance_m: f64,
    pub worst_sample: Option<SampleDeviation>,
    pub checked_samples: usize,
    pub excluded_samples: usize,
    /// Samples beyond tolerance, worst first, at most 20.
    pub flagged: Vec<SampleDeviation>,
    pub flagged_count: usize,
    pub events: Vec<EventComparison>,
    pub folds: Vec<FoldPoint>,
    pub detector: DetectorSettings,
    /// Set when the curve cannot be checked (e.g. not a pure nano scene).
    pub note: Option<String>,
}

impl OracleReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

fn nearest_index(curve: &ForceCurve, b: Branch, handle: f64) -> Option<usize> {
    curve
        .branch(b)
        .iter()
        .enumerate()
        .min_by(|x, y| {
            (x.1.handle_pos - handle)
                .abs()
                .total_cmp(&(y.1.handle_pos - handle).abs())
        })
        .map(|(i, _)| i)
}

fn event_branch(e: &SnapEvent) -> Branch {
    match e.kind {
        SnapKind::SnapIn => Branch::Approach,
        SnapKind::SnapOff => Branch::Retract,
    }
}

fn compare_event(curve: &ForceCurve, e: &SnapEvent, folds: &[FoldPoint]) -> EventComparison {
    let cfg = &curve.params_snapshot;
    let lu = cfg.scene.length_unit;
    let want = match e.kind {
        SnapKind::SnapIn => FoldKind::Lower,
        SnapKind::SnapOff => FoldKind::Upper,
    };
    let fold = folds
        .iter()
        .filter(|f| f.kind == want)
        .min_by(|a, b| {
            (a.handle_pos - e.handle_pos)
                .abs()
                .total_cmp(&(b.handle_pos - e.handle_pos).abs())
        });
    let spacing = curve.sample_spacing();
    let offset = fold.map(|f| (e.handle_pos - f.handle_pos).abs() / spacing);
    let analytic = (e.kind == SnapKind::SnapIn).then(|| {
        cfg.scene
            .nano
            .attractive_instability_gap(cfg.stick.stiffness * cfg.scene.force_unit / lu)
    });
    EventComparison {
        kind: e.kind,
        handle_pos_m: e.handle_pos * lu,
        tip_gap_before_m: e.tip_gap_before * lu,
        tip_gap_after_m: e.tip_gap_after * lu,
        fold_handle_pos_m: fold.map(|f| f.handle_pos * lu),
        fold_gap_m: fold.map(|f| f.merge_gap * lu),
        fold_offset_samples: offset,
        fold_match: offset.is_some_and(|o| o <= FOLD_MATCH_SAMPLES),
        analytic_gap_m: analytic,
    }
}

/// Checks every sample away from events against the oracle's stable
/// equilibria at the same handle height.
pub fn validate_against_oracle(curve: &ForceCurve) -> OracleReport {
    let cfg = &curve.params_snapshot;
    let lu = cfg.scene.length_unit;
    let tolerance = TOLERANCE_FRACTION * cfg.scene.repulsion_length_sim();
    let mut report = OracleReport {
        pass: false,
        worst_gap_deviation_m: f64::INFINITY,
        tolerance_m: tolerance * lu,
        worst_sample: None,
        checked_samples: 0,
        excluded_samples: 0,
        flagged: Vec::new(),
        flagged_count: 0,
        events: Vec::new(),
        folds: Vec::new(),
        detector: DetectorSettings {
            jump_factor: JUMP_FACTOR,
            median_window: MEDIAN_WINDOW,
        },
        note: None,
    };
    if cfg.scene.blend != 1.0 {
        report.note = Some(format!(
            "oracle covers the pure nano scene only, curve has blend {}",
            cfg.scene.blend
        ));
        return report;
    }
    if curve.approach.is_empty() || curve.retract.is_empty() {
        report.note = Some("curve has an empty branch".into());
        return report;
    }

    let mut excluded = [
        vec![false; curve.approach.len()],
        vec![false; curve.retract.len()],
    ];
    for e in &curve.events {
        let b = event_branch(e);
        let slot = &mut excluded[(b == Branch::Retract) as usize];
        if let Some(i) = nearest_index(curve, b, e.handle_pos) {
            let lo = i.saturating_sub(EVENT_EXCLUSION);
            let hi = (i + EVENT_EXCLUSION).min(slot.len() - 1);
            slot[lo..=hi].iter_mut().for_each(|x| *x = true);
        }
    }

    let jobs: Vec<(Branch, usize)> = [Branch::Approach, Branch::Retract]
        .into_iter()
        .flat_map(|b| {
            let ex = &excluded[(b == Branch::Retract) as usize];
            (0..ex.len()).filter(move |&i| !ex[i]).map(move |i| (b, i))
        })
        .collect();
    report.excluded_samples = curve.approach.len() + curve.retract.len() - jobs.len();
    report.checked_samples = jobs.len();

    let mut deviations: Vec<SampleDeviation> = jobs
        .par_iter()
        .map(|&(b, i)| {
            let s = curve.branch(b)[i];
            let set = equilibrium_oracle(cfg, s.handle_pos);
            SampleDeviation {
                branch: b,
                index: i,
                handle_pos_m: s.handle_pos * lu,
                tip_gap_m: s.tip_gap * lu,
                deviation_m: set.distance_to_stable(s.tip_gap) * lu,
            }
        })
        .collect();
    deviations.sort_by(|a, b| b.deviation_m.total_cmp(&a.deviation_m));

    report.worst_sample = deviations.first().copied();
    report.worst_gap_deviation_m = report.worst_sample.map_or(0.0, |w| w.deviation_m);
    let tol_m = tolerance * lu;
    report.flagged_count = deviations.iter().take_while(|d| !(d.deviation_m <= tol_m)).count();
    report.flagged = deviations.iter().take(report.flagged_count.min(20)).copied().collect();

    let (z_lo, z_hi) = curve
        .approach
        .iter()
        .chain(&curve.retract)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.handle_pos), hi.max(s.handle_pos))
        });
    let step = (4.0 * curve.sample_spacing()).max(f64::MIN_POSITIVE);
    report.folds = fold_points(cfg, z_lo, z_hi, step);
    report.events = curve
        .events
        .iter()
        .map(|e| compare_event(curve, e, &report.folds))
        .collect();

    report.pass = report.flagged_count == 0 && report.worst_gap_deviation_m.is_finite();
    report
}
