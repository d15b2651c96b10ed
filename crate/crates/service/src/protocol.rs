//! JSON wire protocol spoken over `/ws`.
//!
//! Client frames carry a schema version `v`, a per-client sequence number
//! `seq` and a `type` tag. Unknown fields are ignored. All quantities are SI.

use nanotouch_core::experiments::{SnapEvent, SnapKind};
use nanotouch_core::kernel::KernelConfig;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub v: u32,
    pub seq: u64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    SetHandle { pos: f64 },
    SetBlend { value: f64 },
    SetParams(ParamsPatch),
    Reset {},
    StartSweep(SweepArgs),
}

/// Subset of the kernel configuration a client may change live. The time
/// step is fixed for the lifetime of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamsPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamaker: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tip_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repulsion_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_stiffness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_floor_fraction: Option<f64>,
}

impl ParamsPatch {
    pub fn apply(&self, cfg: &KernelConfig) -> KernelConfig {
        let mut c = *cfg;
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.stick.mass, self.mass);
        set(&mut c.stick.stiffness, self.stiffness);
        set(&mut c.stick.damping, self.damping);
        set(&mut c.scene.nano.hamaker, self.hamaker);
        set(&mut c.scene.nano.tip_radius, self.tip_radius);
        set(&mut c.scene.nano.repulsion_length, self.repulsion_length);
        set(&mut c.scene.macro_contact.wall_stiffness, self.wall_stiffness);
        set(&mut c.scene.macro_contact.wall_damping, self.wall_damping);
        set(&mut c.gap_floor_fraction, self.gap_floor_fraction);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepArgs {
    pub z_start: f64,
    pub z_end: f64,
    pub speed: f64,
}

/// Snap event in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireEvent {
    pub kind: SnapKind,
    pub handle_pos: f64,
    pub tip_gap_before: f64,
    pub tip_gap_after: f64,
}

impl WireEvent {
    pub fn from_sim(e: &SnapEvent, length_unit: f64) -> Self {
        Self {
            kind: e.kind,
            handle_pos: e.handle_pos * length_unit,
            tip_gap_before: e.tip_gap_before * length_unit,
            tip_gap_after: e.tip_gap_after * length_unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSnapshot {
    pub time: f64,
    pub handle_pos: f64,
    pub tip_pos: f64,
    pub handle_force: f64,
    pub surface_force: f64,
    pub blend: f64,
    pub events_since_last: Vec<WireEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub hysteresis_energy_j: Option<f64>,
    pub events: Vec<WireEvent>,
    /// `[handle_pos_m, handle_force_N]` pairs.
    pub approach: Vec<[f64; 2]>,
    pub retract: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        v: u32,
        session_id: String,
        config: KernelConfig,
    },
    Snapshot {
        v: u32,
        #[serde(flatten)]
        snapshot: WireSnapshot,
    },
    Event {
        v: u32,
        event: WireEvent,
    },
    SweepResult {
        v: u32,
        seq: u64,
        #[serde(flatten)]
        result: SweepSummary,
    },
    Error {
        v: u32,
        seq: Option<u64>,
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages are plain data")
    }

    pub fn error(seq: Option<u64>, message: impl Into<String>) -> Self {
        Self::Error {
            v: PROTOCOL_VERSION,
            seq,
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shape() {
        let m = CommandMessage {
            v: 1,
            seq: 7,
            command: Command::SetHandle { pos: 2.5e-9 },
        };
        let j = serde_json::to_string(&m).unwrap();
        assert_eq!(j, r#"{"v":1,"seq":7,"type":"set_handle","pos":2.5e-9}"#);
        let r: CommandMessage = serde_json::from_str(r#"{"v":1,"seq":8,"type":"reset"}"#).unwrap();
        assert_eq!(r.command, Command::Reset {});
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let m: CommandMessage = serde_json::from_str(
            r#"{"v":1,"seq":1,"type":"set_blend","value":0.5,"future":{"x":1}}"#,
        )
        .unwrap();
        assert_eq!(m.command, Command::SetBlend { value: 0.5 });
    }

    #[test]
    fn patch_applies_only_given_fields() {
        let p: ParamsPatch = serde_json::from_str(r#"{"stiffness": 10.0}"#).unwrap();
        let c = p.apply(&KernelConfig::default());
        assert_eq!(c.stick.stiffness, 10.0);
        assert_eq!(c.stick.mass, KernelConfig::default().stick.mass);
    }
}
