//! Force-approach curves, their CSV interchange format and the hysteresis
//! energy between branches.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::KernelConfig;

pub const CSV_HEADER: &str = "branch,handle_pos_m,handle_force_N,tip_gap_m,time_s";
const EVENT_PREFIX: &str = "# event,";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapKind {
    SnapIn,
    SnapOff,
}

impl SnapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SnapKind::SnapIn => "snap_in",
            SnapKind::SnapOff => "snap_off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapEvent {
    pub kind: SnapKind,
    pub handle_pos: f64,
    pub tip_gap_before: f64,
    pub tip_gap_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub handle_pos: f64,
    pub handle_force: f64,
    pub tip_gap: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Approach,
    Retract,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Approach => "approach",
            Branch::Retract => "retract",
        }
    }
}

/// Approach and retract branches of a force-distance measurement, in
/// simulation units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceCurve {
    /// Handle positions strictly decreasing.
    pub approach: Vec<CurveSample>,
    /// Handle positions strictly increasing.
    pub retract: Vec<CurveSample>,
    pub events: Vec<SnapEvent>,
    pub params_snapshot: KernelConfig,
}

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("{0} branch needs at least two samples")]
    TooShort(&'static str),
    #[error("branches cover different handle ranges: approach [{a_lo}, {a_hi}], retract [{r_lo}, {r_hi}]")]
    MismatchedRanges { a_lo: f64, a_hi: f64, r_lo: f64, r_hi: f64 },
    #[error("{0} branch is not strictly monotone in handle position")]
    NotMonotone(&'static str),
    #[error("csv line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn fmt_f64(out: &mut String, v: f64) {
    let mut buf = ryu::Buffer::new();
    out.push_str(buf.format(v));
}

impl ForceCurve {
    pub fn branch(&self, b: Branch) -> &[CurveSample] {
        match b {
            Branch::Approach => &self.approach,
            Branch::Retract => &self.retract,
        }
    }

    /// Handle spacing between neighbouring samples.
    pub fn sample_spacing(&self) -> f64 {
        match self.approach.as_slice() {
            [a, b, ..] => (a.handle_pos - b.handle_pos).abs(),
            _ => 0.0,
        }
    }

    pub fn events_of(&self, kind: SnapKind) -> impl Iterator<Item = &SnapEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Serializes to the curve CSV. Values are converted to SI and printed
    /// as shortest round-trip decimals, so identical curves give identical
    /// bytes.
    pub fn to_csv(&self) -> String {
        let lu = self.params_snapshot.scene.length_unit;
        let fu = self.params_snapshot.scene.force_unit;
        let rows = self.approach.len() + self.retract.len();
        let mut out = String::with_capacity(64 * (rows + 2));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for b in [Branch::Approach, Branch::Retract] {
            for s in self.branch(b) {
                out.push_str(b.as_str());
                out.push(',');
                fmt_f64(&mut out, s.handle_pos * lu);
                out.push(',');
                fmt_f64(&mut out, s.handle_force * fu);
                out.push(',');
                fmt_f64(&mut out, s.tip_gap * lu);
                out.push(',');
                fmt_f64(&mut out, s.time);
                out.push('\n');
            }
        }
        for e in &self.events {
            let _ = write!(out, "{EVENT_PREFIX}{},", e.kind.as_str());
            fmt_f64(&mut out, e.handle_pos * lu);
            out.push(',');
            fmt_f64(&mut out, e.tip_gap_before * lu);
            out.push(',');
            fmt_f64(&mut out, e.tip_gap_after * lu);
            out.push('\n');
        }
        out
    }

    /// Parses the curve CSV. The CSV carries no parameters, so the caller
    /// supplies the configuration it was produced with.
    pub fn from_csv(text: &str, params: KernelConfig) -> Result<Self, CurveError> {
        let lu = params.scene.length_unit;
        let fu = params.scene.force_unit;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == CSV_HEADER => {}
            _ => {
                return Err(CurveError::Parse {
                    line: 1,
                    message: format!("expected header `{CSV_HEADER}`"),
                })
            }
        }
        let mut curve = ForceCurve {
            approach: Vec::new(),
            retract: Vec::new(),
            events: Vec::new(),
            params_snapshot: params,
        };
        for (i, line) in lines {
            let err = |message: String| CurveError::Parse {
                line: i + 1,
                message,
            };
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad number `{s}`: {e}")))
            };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix(EVENT_PREFIX) {
                let f: Vec<&str> = rest.split(',').collect();
                if f.len() != 4 {
                    return Err(err("event needs 4 fields".into()));
                }
                let kind = match f[0] {
                    "snap_in" => SnapKind::SnapIn,
                    "snap_off" => SnapKind::SnapOff,
                    other => return Err(err(format!("unknown event kind `{other}`"))),
                };
                curve.events.push(SnapEvent {
                    kind,
                    handle_pos: num(f[1])? / lu,
                    tip_gap_before: num(f[2])? / lu,
                    tip_gap_after: num(f[3])? / lu,
                });
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", f.len())));
            }
            let sample = CurveSample {
                handle_pos: num(f[1])? / lu,
                handle_force: num(f[2])? / fu,
                tip_gap: num(f[3])? / lu,
                time: num(f[4])?,
            };
            match f[0] {
                "approach" => curve.approach.push(sample),
                "retract" => curve.retract.push(sample),
                other => return Err(err(format!("unknown branch `{other}`"))),
            }
        }
        Ok(curve)
    }
}

/// Branch samples sorted by increasing handle position.
fn ascending(samples: &[CurveSample], name: &'static str) -> Result<Vec<(f64, f64)>, CurveError> {
    if samples.len() < 2 {
        return Err(CurveError::TooShort(name));
    }
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.handle_pos, s.handle_force)).collect();
    if pts[0].0 > pts[pts.len() - 1].0 {
        pts.reverse();
    }
    if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(CurveError::NotMonotone(name));
    }
    Ok(pts)
}

/// Linear interpolation on an ascending table; `x` must lie inside it.
fn interpolate(pts: &[(f64, f64)], cursor: &mut usize, x: f64) -> f64 {
    while *cursor + 2 < pts.len() && pts[*cursor + 1].0 < x {
        *cursor += 1;
    }
    let (x0, y0) = pts[*cursor];
    let (x1, y1) = pts[*cursor + 1];
    if x <= x0 {
        return y0;
    }
    if x >= x1 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Work done by the operator over one approach-retract cycle (J):
/// `∫ (F_approach − F_retract) dz`, by the trapezoid rule on the union of
/// both branches' handle positions.
pub fn hysteresis_energy(curve: &ForceCurve) -> Result<f64, CurveError> {
    let a = ascending(&curve.approach, "approach")?;
    let r = ascending(&curve.retract, "retract")?;
    let (a_lo, a_hi) = (a[0].0, a[a.len() - 1].0);
    let (r_lo, r_hi) = (r[0].0, r[r.len() - 1].0);
    let tol = 1e-9 * (a_hi - a_lo).abs().max((r_hi - r_lo).abs());
    if (a_lo - r_lo).abs() > tol || (a_hi - r_hi).abs() > tol {
        return Err(CurveError::MismatchedRanges { a_lo, a_hi, r_lo, r_hi });
    }
    let lo = a_lo.max(r_lo);
    let hi = a_hi.min(r_hi);

    let mut grid: Vec<f64> = a
        .iter()
        .chain(r.iter())
        .map(|p| p.0.clamp(lo, hi))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let (mut ca, mut cr) = (0, 0);
    let diff: Vec<f64> = grid
        .iter()
        .map(|&z| interpolate(&a, &mut ca, z) - interpolate(&r, &mut cr, z))
        .collect();
    let area: f64 = grid
        .windows(2)
        .zip(diff.windows(2))
        .map(|(z, d)| 0.5 * (d[0] + d[1]) * (z[1] - z[0]))
        .sum();
    let scene = &curve.params_snapshot.scene;
    Ok(area * scene.force_unit * scene.length_unit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn branch(zs: impl Iterator<Item = f64>, f: impl Fn(f64) -> f64) -> Vec<CurveSample> {
        zs.map(|z| CurveSample {
            handle_pos: z,
            handle_force: f(z),
            tip_gap: z,
            time: 0.0,
        })
        .collect()
    }

    fn curve(fa: impl Fn(f64) -> f64, fr: impl Fn(f64) -> f64) -> ForceCurve {
        ForceCurve {
            approach: branch((0..=100).rev().map(|i| i as f64 * 0.01), fa),
            retract: branch((0..=100).map(|i| i as f64 * 0.01), fr),
            events: vec![],
            params_snapshot: KernelConfig::default(),
        }
    }

    #[test]
    fn identical_branches_have_zero_area() {
        let c = curve(|z| z.sin(), |z| z.sin());
        assert_eq!(hysteresis_energy(&c).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_area() {
        let c = curve(|_| 1.0, |_| -1.0);
        assert!((hysteresis_energy(&c).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_ranges_error() {
        let mut c = curve(|_| 0.0, |_| 0.0);
        c.retract.pop();
        assert!(matches!(hysteresis_energy(&c), Err(CurveError::MismatchedRanges { .. })));
        c.retract.truncate(1);
        assert!(matches!(hysteresis_energy(&c), Err(CurveError::TooShort("retract"))));
    }

    #[test]
    fn csv_round_trip_and_header() {
        let mut c = curve(|z| -1e-10 * z, |z| 3.3e-12 / (z + 1.0));
        c.events.push(SnapEvent {
            kind: SnapKind::SnapIn,
            handle_pos: 2.823e-9,
            tip_gap_before: 1.88e-9,
            tip_gap_after: 1.9e-10,
        });
        let text = c.to_csv();
        assert!(text.starts_with("branch,handle_pos_m,handle_force_N,tip_gap_m,time_s\n"));
        assert!(text.contains("\n# event,snap_in,2.823e-9,1.88e-9,1.9e-10\n"));
        let back = ForceCurve::from_csv(&text, c.params_snapshot).unwrap();
        assert_eq!(back, c);
        assert!(ForceCurve::from_csv("nope\n", c.params_snapshot).is_err());
    }
}
