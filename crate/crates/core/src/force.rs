//! Tip-surface force laws.
//!
//! Two scenes share one vertical axis with the surface at height zero:
//!
//! * the macroscopic table, a penalty contact that only acts under
//!   penetration and never attracts;
//! * the nanoscale surface, a Lennard-Jones sphere-plane law
//!   `F(d) = (H·R/6)·(σ⁶/(30·d⁸) − 1/d²)` whose long-range attraction pulls
//!   the tip in and whose short-range repulsion makes the surface
//!   impenetrable.
//!
//! Positive forces push the tip away from the surface. Every function here is
//! pure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `30^(1/6)`, the ratio between the repulsion length and the zero-force gap.
const ZERO_FORCE_RATIO: f64 = 1.762_734_383_267_615;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ForceError {
    #[error("nano force is singular at non-positive gap {0}")]
    NonPositiveGap(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be strictly positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("blend must lie in [0, 1], got {0}")]
    BlendOutOfRange(f64),
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ParamError::NotPositive { name, value })
    }
}

fn require_non_negative(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ParamError::Negative { name, value })
    }
}

/// Constants of the tip-surface van der Waals interaction, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NanoForceParams {
    /// Hamaker constant (J).
    pub hamaker: f64,
    /// Tip radius (m).
    pub tip_radius: f64,
    /// Short-range repulsion length σ (m).
    pub repulsion_length: f64,
}

impl Default for NanoForceParams {
    fn default() -> Self {
        Self {
            hamaker: 1e-19,
            tip_radius: 20e-9,
            repulsion_length: 0.34e-9,
        }
    }
}

impl NanoForceParams {
    pub fn new(hamaker: f64, tip_radius: f64, repulsion_length: f64) -> Result<Self, ParamError> {
        let p = Self {
            hamaker,
            tip_radius,
            repulsion_length,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        require_positive("hamaker", self.hamaker)?;
        require_positive("tip_radius", self.tip_radius)?;
        require_positive("repulsion_length", self.repulsion_length)
    }

    /// Gap where attraction and repulsion cancel, `σ / 30^(1/6)`.
    pub fn equilibrium_gap(&self) -> f64 {
        self.repulsion_length / ZERO_FORCE_RATIO
    }

    /// Largest positive value of `dF/dd` over all gaps.
    ///
    /// A spring softer than this is unstable somewhere on the approach. The
    /// maximum sits at `d = 0.4^(1/6)·σ`.
    pub fn max_gradient(&self) -> f64 {
        let d = self.repulsion_length * 0.4_f64.powf(1.0 / 6.0);
        lj_gradient(d, self)
    }

    /// Gap below which the attractive-branch gradient `H·R/(3d³)` exceeds
    /// `stiffness`, i.e. the analytic snap-in gap `(H·R/(3k))^(1/3)`.
    pub fn attractive_instability_gap(&self, stiffness: f64) -> f64 {
        (self.hamaker * self.tip_radius / (3.0 * stiffness)).cbrt()
    }
}

/// Penalty contact of the macroscopic table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroContactParams {
    /// Penalty stiffness (N/m).
    pub wall_stiffness: f64,
    /// Contact damping (N·s/m).
    pub wall_damping: f64,
}

impl Default for MacroContactParams {
    fn default() -> Self {
        Self {
            wall_stiffness: 1e3,
            wall_damping: 0.05,
        }
    }
}

impl MacroContactParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        require_positive("wall_stiffness", self.wall_stiffness)?;
        require_non_negative("wall_damping", self.wall_damping)
    }
}

/// Which world the probe touches, and how simulation units map onto SI.
///
/// The macroscopic scene is evaluated directly in simulation units. The
/// nanoscale law is evaluated in SI: a simulation gap `g` is the physical gap
/// `g·length_unit`, and the SI force is divided by `force_unit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// 0 = macroscopic table, 1 = nanoscale surface.
    pub blend: f64,
    pub nano: NanoForceParams,
    #[serde(rename = "macro")]
    pub macro_contact: MacroContactParams,
    /// Metres per simulation length unit.
    pub length_unit: f64,
    /// Newtons per simulation force unit.
    pub force_unit: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            blend: 1.0,
            nano: NanoForceParams::default(),
            macro_contact: MacroContactParams::default(),
            length_unit: 1.0,
            force_unit: 1.0,
        }
    }
}

impl SceneConfig {
    pub fn nano(nano: NanoForceParams) -> Self {
        Self {
            blend: 1.0,
            nano,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(0.0..=1.0).contains(&self.blend) {
            return Err(ParamError::BlendOutOfRange(self.blend));
        }
        self.nano.validate()?;
        self.macro_contact.validate()?;
        require_positive("length_unit", self.length_unit)?;
        require_positive("force_unit", self.force_unit)
    }

    /// σ expressed in simulation length units.
    pub fn repulsion_length_sim(&self) -> f64 {
        self.nano.repulsion_length / self.length_unit
    }

    /// Nano force at a simulation-unit gap, in simulation force units.
    pub fn nano_force_sim(&self, gap: f64) -> Result<f64, ForceError> {
        Ok(nano_force(gap * self.length_unit, &self.nano)? / self.force_unit)
    }

    /// Nano force gradient at a simulation-unit gap, in simulation units.
    pub fn nano_gradient_sim(&self, gap: f64) -> Result<f64, ForceError> {
        Ok(nano_force_gradient(gap * self.length_unit, &self.nano)? * self.length_unit
            / self.force_unit)
    }
}

#[inline(always)]
pub(crate) fn lj_force(gap: f64, p: &NanoForceParams) -> f64 {
    let s2 = p.repulsion_length * p.repulsion_length;
    let s6 = s2 * s2 * s2;
    let inv2 = 1.0 / (gap * gap);
    let inv8 = inv2 * inv2 * inv2 * inv2;
    p.hamaker * p.tip_radius / 6.0 * (s6 / 30.0 * inv8 - inv2)
}

#[inline(always)]
pub(crate) fn lj_gradient(gap: f64, p: &NanoForceParams) -> f64 {
    let s2 = p.repulsion_length * p.repulsion_length;
    let s6 = s2 * s2 * s2;
    let inv = 1.0 / gap;
    let inv3 = inv * inv * inv;
    let inv9 = inv3 * inv3 * inv3;
    p.hamaker * p.tip_radius / 6.0 * (2.0 * inv3 - 8.0 * s6 / 30.0 * inv9)
}

/// Sphere-plane Lennard-Jones force at `gap` (m). Negative attracts.
pub fn nano_force(gap: f64, p: &NanoForceParams) -> Result<f64, ForceError> {
    if gap > 0.0 {
        Ok(lj_force(gap, p))
    } else {
        Err(ForceError::NonPositiveGap(gap))
    }
}

/// `dF/dd` of [`nano_force`] (N/m).
pub fn nano_force_gradient(gap: f64, p: &NanoForceParams) -> Result<f64, ForceError> {
    if gap > 0.0 {
        Ok(lj_gradient(gap, p))
    } else {
        Err(ForceError::NonPositiveGap(gap))
    }
}

/// Penalty contact force of the table: zero out of contact, otherwise a
/// Hooke push with a damping term clamped so the contact can only push.
pub fn macro_force(gap: f64, tip_velocity: f64, p: &MacroContactParams) -> f64 {
    if gap > 0.0 {
        return 0.0;
    }
    (-p.wall_stiffness * gap - p.wall_damping * tip_velocity).max(0.0)
}

/// Blended scene force in simulation units.
///
/// The blend endpoints reduce exactly to the pure scenes; the nano law is
/// only evaluated (and can only fail) when `blend > 0`.
pub fn scene_force(gap: f64, tip_velocity: f64, s: &SceneConfig) -> Result<f64, ForceError> {
    let b = s.blend;
    let macro_part = if b < 1.0 {
        macro_force(gap, tip_velocity, &s.macro_contact)
    } else {
        0.0
    };
    if b <= 0.0 {
        return Ok(macro_part);
    }
    let nano_part = s.nano_force_sim(gap)?;
    if b >= 1.0 {
        return Ok(nano_part);
    }
    Ok((1.0 - b) * macro_part + b * nano_part)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values below were evaluated at 50 significant digits with
    // mpmath from the force law, independently of this module.
    const F_AT_10NM: f64 = -3.333_333_333_161_688_4e-12;
    const GRAD_AT_1_88NM: f64 = 0.100_330_544_016_322_48;
    const D0: f64 = 1.928_821_512_914_131_7e-10;
    const GRAD_AT_D0: f64 = -278.710_847_499_066_82;
    const MAX_GRADIENT: f64 = 17.879_309_203_294_996;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn zero_force_at_equilibrium_gap() {
        let p = NanoForceParams::default();
        assert!(rel(p.equilibrium_gap(), D0) < 1e-15);
        let f = nano_force(p.equilibrium_gap(), &p).unwrap();
        // Cancellation of two ~1e-8 N terms.
        assert!(f.abs() < 1e-22, "{f}");
    }

    #[test]
    fn attractive_tail_at_ten_nanometres() {
        let p = NanoForceParams::default();
        let f = nano_force(1e-8, &p).unwrap();
        assert!(rel(f, F_AT_10NM) < 1e-14, "{f}");
    }

    #[test]
    fn far_field_decay() {
        let p = NanoForceParams::default();
        let f = nano_force(1e-3, &p).unwrap();
        assert!(rel(f, -3.333_333_333_333_333_3e-22) < 1e-14);
        assert!(nano_force(20.0, &p).unwrap().abs() < 1e-30);
    }

    #[test]
    fn gradient_values() {
        let p = NanoForceParams::default();
        assert!(rel(nano_force_gradient(1.88e-9, &p).unwrap(), GRAD_AT_1_88NM) < 1e-13);
        assert!(rel(nano_force_gradient(D0, &p).unwrap(), GRAD_AT_D0) < 1e-13);
        assert!(rel(p.max_gradient(), MAX_GRADIENT) < 1e-13);
        let g = nano_force_gradient(1.0, &p).unwrap();
        assert!(g > 0.0 && g < 1e-27);
    }

    #[test]
    fn gradient_sign_at_zero_force_gap_matches_finite_difference() {
        // d0 is a stable contact point: F decreases through zero there, so the
        // gradient is negative (restoring).
        let p = NanoForceParams::default();
        let d0 = p.equilibrium_gap();
        let h = d0 * 1e-5;
        let fd = (nano_force(d0 + h, &p).unwrap() - nano_force(d0 - h, &p).unwrap()) / (2.0 * h);
        let g = nano_force_gradient(d0, &p).unwrap();
        assert!(g < 0.0 && fd < 0.0);
        assert!(rel(g, fd) < 1e-6);
    }

    #[test]
    fn non_positive_gap_is_a_domain_error() {
        let p = NanoForceParams::default();
        assert_eq!(nano_force(0.0, &p), Err(ForceError::NonPositiveGap(0.0)));
        assert!(nano_force(-1e-9, &p).is_err());
        assert!(nano_force_gradient(0.0, &p).is_err());
    }

    #[test]
    fn macro_contact() {
        let p = MacroContactParams {
            wall_stiffness: 1e4,
            wall_damping: 2.0,
        };
        assert_eq!(macro_force(1e-3, -5.0, &p), 0.0);
        assert!(rel(macro_force(-1e-6, 0.0, &p), 1e-2) < 1e-15);
        // Tip leaving the wall quickly: the damping term would pull, clamp.
        assert_eq!(macro_force(-1e-6, 1.0, &p), 0.0);
    }

    #[test]
    fn blend_endpoints_and_midpoint() {
        let mut s = SceneConfig::default();
        s.macro_contact.wall_stiffness = 1e4;
        s.blend = 0.0;
        for gap in [-1e-6, 0.0, 1e-9, 1e-3] {
            assert_eq!(
                scene_force(gap, 0.3, &s).unwrap(),
                macro_force(gap, 0.3, &s.macro_contact)
            );
        }
        s.blend = 1.0;
        for gap in [1e-10, 1e-9, 1e-8] {
            assert_eq!(scene_force(gap, 0.3, &s).unwrap(), nano_force(gap, &s.nano).unwrap());
        }
        assert!(scene_force(-1e-9, 0.0, &s).is_err());
        s.blend = 0.5;
        let mean = scene_force(1e-8, 0.0, &s).unwrap();
        assert!(rel(mean, -1.666_666_666_580_844_2e-12) < 1e-14);
    }

    #[test]
    fn unit_conversion() {
        // One simulation length unit = 1 nm, one force unit = 1 nN.
        let s = SceneConfig {
            length_unit: 1e-9,
            force_unit: 1e-9,
            ..SceneConfig::default()
        };
        let f = scene_force(10.0, 0.0, &s).unwrap();
        assert!(rel(f, F_AT_10NM / 1e-9) < 1e-14);
        assert!(rel(s.repulsion_length_sim(), 0.34) < 1e-15);
    }

    #[test]
    fn param_validation() {
        assert!(NanoForceParams::new(0.0, 1e-8, 1e-10).is_err());
        assert!(NanoForceParams::new(1e-19, f64::NAN, 1e-10).is_err());
        let mut s = SceneConfig::default();
        s.blend = 1.5;
        assert_eq!(s.validate(), Err(ParamError::BlendOutOfRange(1.5)));
    }
}
