//! Brute-force quasi-static equilibria of the stick over the nano surface.
//!
//! This is deliberately independent of the dynamic kernel: no time stepping,
//! just a dense scan of the static balance `g(d) = k·(z − d) + F(d)` followed
//! by bisection on every sign change. It only looks at the pure nanoscale law
//! (the scene blend is ignored).

use serde::{Deserialize, Serialize};

use crate::kernel::KernelConfig;

/// Scan resolution as a fraction of σ.
pub const SCAN_RESOLUTION: f64 = 1e-3;
/// Scan extends this many σ above the handle.
pub const SCAN_HEADROOM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub tip_gap: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub handle_pos: f64,
    pub equilibria: Vec<Equilibrium>,
}

impl EquilibriumSet {
    pub fn stable(&self) -> impl Iterator<Item = f64> + '_ {
        self.equilibria.iter().filter(|e| e.stable).map(|e| e.tip_gap)
    }

    /// Distance from `gap` to the nearest stable equilibrium.
    pub fn distance_to_stable(&self, gap: f64) -> f64 {
        self.stable()
            .map(|g| (g - gap).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

struct Balance<'a> {
    cfg: &'a KernelConfig,
    handle: f64,
}

impl Balance<'_> {
    fn at(&self, d: f64) -> f64 {
        let f = self
            .cfg
            .scene
            .nano_force_sim(d)
            .expect("scan stays above the gap floor");
        self.cfg.stick.stiffness * (self.handle - d) + f
    }

    fn stable_at(&self, d: f64) -> bool {
        let grad = self
            .cfg
            .scene
            .nano_gradient_sim(d)
            .expect("scan stays above the gap floor");
        self.cfg.stick.stiffness - grad > 0.0
    }
}

fn scan_grid(cfg: &KernelConfig, handle_pos: f64) -> (f64, f64, usize) {
    let sigma = cfg.scene.repulsion_length_sim();
    let lo = cfg.gap_floor();
    let hi = (handle_pos + SCAN_HEADROOM * sigma).max(lo + sigma);
    let h = sigma * SCAN_RESOLUTION;
    let n = ((hi - lo) / h).ceil() as usize;
    (lo, h, n)
}

/// Bisects a bracketed sign change down to adjacent floats.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// All static equilibria of the tip for a handle held at `handle_pos`.
///
/// Scans `[gap_floor, handle_pos + 10σ]` at `σ/1000`, refines every sign
/// change of the balance by bisection (well below 1e-12 m) and classifies
/// stability by `k − dF/dd > 0`.
pub fn equilibrium_oracle(cfg: &KernelConfig, handle_pos: f64) -> EquilibriumSet {
    let bal = Balance {
        cfg,
        handle: handle_pos,
    };
    let (lo, h, n) = scan_grid(cfg, handle_pos);
    let mut equilibria = Vec::with_capacity(3);
    let mut a = lo;
    let mut ga = bal.at(a);
    for i in 1..=n {
        let b = lo + h * i as f64;
        let gb = bal.at(b);
        if ga == 0.0 {
            equilibria.push(a);
        } else if gb != 0.0 && (ga > 0.0) != (gb > 0.0) {
            equilibria.push(bisect(|d| bal.at(d), a, b, ga));
        }
        a = b;
        ga = gb;
    }
    EquilibriumSet {
        handle_pos,
        equilibria: equilibria
            .into_iter()
            .map(|d| Equilibrium {
                tip_gap: d,
                stable: bal.stable_at(d),
            })
            .collect(),
    }
}

/// The raw scan behind [`equilibrium_oracle`]: `(tip_gap, balance)` pairs.
pub fn balance_scan(cfg: &KernelConfig, handle_pos: f64) -> Vec<(f64, f64)> {
    let bal = Balance {
        cfg,
        handle: handle_pos,
    };
    let (lo, h, n) = scan_grid(cfg, handle_pos);
    (0..=n)
        .map(|i| {
            let d = lo + h * i as f64;
            (d, bal.at(d))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldKind {
    /// Bottom of the bistable window: the free branch ends here on approach.
    Lower,
    /// Top of the bistable window: the contact branch ends here on retract.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldPoint {
    pub kind: FoldKind,
    pub handle_pos: f64,
    /// Gap where the stable and unstable equilibria merge.
    pub merge_gap: f64,
}

fn merge_gap(set: &EquilibriumSet) -> f64 {
    let gaps: Vec<f64> = set.equilibria.iter().map(|e| e.tip_gap).collect();
    gaps.windows(2)
        .min_by(|x, y| (x[1] - x[0]).total_cmp(&(y[1] - y[0])))
        .map(|w| 0.5 * (w[0] + w[1]))
        .unwrap_or(f64::NAN)
}

/// Handle heights in `[z_lo, z_hi]` where the equilibrium count changes,
/// found by a coarse scan in steps of `handle_step` and bisection on the
/// count down to `1e-6·σ`.
pub fn fold_points(cfg: &KernelConfig, z_lo: f64, z_hi: f64, handle_step: f64) -> Vec<FoldPoint> {
    let count = |z: f64| equilibrium_oracle(cfg, z).equilibria.len();
    let tol = 1e-6 * cfg.scene.repulsion_length_sim();
    let n = ((z_hi - z_lo) / handle_step).ceil().max(1.0) as usize;
    let mut folds = Vec::new();
    let mut za = z_lo;
    let mut ca = count(za);
    for i in 1..=n {
        let zb = if i == n { z_hi } else { z_lo + handle_step * i as f64 };
        let cb = count(zb);
        if cb != ca {
            let (mut a, mut b) = (za, zb);
            while b - a > tol {
                let m = 0.5 * (a + b);
                if count(m) == ca {
                    a = m;
                } else {
                    b = m;
                }
            }
            // Evaluate the merge on the side that still has the pair.
            let (kind, many) = if cb > ca {
                (FoldKind::Lower, equilibrium_oracle(cfg, b))
            } else {
                (FoldKind::Upper, equilibrium_oracle(cfg, a))
            };
            folds.push(FoldPoint {
                kind,
                handle_pos: 0.5 * (a + b),
                merge_gap: merge_gap(&many),
            });
        }
        za = zb;
        ca = cb;
    }
    folds
}
