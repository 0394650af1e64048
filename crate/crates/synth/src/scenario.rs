//! Scenario configuration: a JSON description of the trace to synthesize.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration_s: u64,
    pub trace_start_epoch: u64,
    pub seed: u64,
    pub users: UsersConfig,
    pub movement: MovementConfig,
    pub version_mix: VersionMix,
    pub background: BackgroundConfig,
    /// Per-class parameter overrides (optional).
    #[serde(default)]
    pub class_overrides: ClassOverrides,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersConfig {
    pub count: u32,
    /// Group size -> number of IPs with exactly that many users.
    pub group_size_histogram: BTreeMap<String, u32>,
    pub session_model: SessionModel,
    /// Users whose later sessions move to a shared IP (IP reallocation).
    #[serde(default)]
    pub reallocated_users: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionModel {
    pub sessions_per_user_mean: f64,
    /// Relative weight of each trace hour as a session start; cycled when
    /// the trace is longer than the list.
    pub start_weights_per_hour: Vec<f64>,
    pub duration_lognormal_mu: f64,
    pub duration_lognormal_sigma: f64,
    /// Draw per-user durations from a stratified quantile grid instead of
    /// independently, pinning empirical fractions at small user counts.
    #[serde(default)]
    pub stratified_durations: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementConfig {
    pub walk_speed_wm_s: f64,
    pub movement_hz: f64,
    /// Mean pause at a waypoint, seconds; zero walks without stopping.
    pub waypoint_pause_s: f64,
    /// Fraction of avatars that occasionally teleport.
    pub teleport_avatar_fraction: f64,
    /// Teleport jump length as a multiple of a normal step.
    pub teleport_speed_factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionMix {
    /// Fraction of users on protocol version A (the rest speak B).
    pub fraction_a: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    /// Total background flows, adversarial ones included.
    pub flow_count: u32,
    /// Flows matching the step-one signature but failing step two.
    pub adversarial_count: u32,
    /// Approximate total background payload bytes.
    pub byte_volume_target: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassOverrides {
    #[serde(default)]
    pub tiger: ClassOverride,
    #[serde(default)]
    pub lion: ClassOverride,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassOverride {
    /// Multiplier on drawn session durations.
    pub duration_scale: f64,
    /// Class-specific waypoint pause; `None` keeps the movement default.
    pub waypoint_pause_s: Option<f64>,
}

impl Default for ClassOverride {
    fn default() -> Self {
        ClassOverride { duration_scale: 1.0, waypoint_pause_s: None }
    }
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Parsed histogram entries as (size, n_ips), size ascending.
    pub fn histogram(&self) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = self
            .users
            .group_size_histogram
            .iter()
            .filter_map(|(k, &v)| k.parse::<u32>().ok().map(|s| (s, v)))
            .collect();
        out.sort_unstable();
        out
    }

    /// All constraint violations, one message per offending field.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.duration_s == 0 {
            issues.push("duration_s: must be positive".into());
        }
        if self.users.count > 0 && self.duration_s < 30 {
            issues.push(format!(
                "duration_s: {} too short to host sessions for {} users (minimum 30)",
                self.duration_s, self.users.count
            ));
        }
        let mut histogram_users = 0u64;
        for (key, &n_ips) in &self.users.group_size_histogram {
            match key.parse::<u32>() {
                Ok(size) if size >= 1 => histogram_users += size as u64 * n_ips as u64,
                _ => issues.push(format!(
                    "users.group_size_histogram: size '{key}' must be an integer >= 1"
                )),
            }
        }
        if histogram_users != self.users.count as u64 {
            issues.push(format!(
                "users.count: {} does not match histogram total {histogram_users}",
                self.users.count
            ));
        }
        let sm = &self.users.session_model;
        if sm.sessions_per_user_mean < 0.0 {
            issues.push("users.session_model.sessions_per_user_mean: must be >= 0".into());
        }
        if sm.start_weights_per_hour.is_empty()
            || sm.start_weights_per_hour.iter().any(|&w| w.is_nan() || w < 0.0)
            || sm.start_weights_per_hour.iter().sum::<f64>() <= 0.0
        {
            issues.push(
                "users.session_model.start_weights_per_hour: need non-negative weights with a positive sum"
                    .into(),
            );
        }
        if sm.duration_lognormal_sigma.is_nan() || sm.duration_lognormal_sigma < 0.0 {
            issues.push("users.session_model.duration_lognormal_sigma: must be >= 0".into());
        }
        let mv = &self.movement;
        if mv.movement_hz.is_nan() || !(0.0..=10.0).contains(&mv.movement_hz) {
            issues.push(format!("movement.movement_hz: {} outside [0, 10]", mv.movement_hz));
        }
        if mv.walk_speed_wm_s.is_nan() || mv.walk_speed_wm_s < 0.0 {
            issues.push("movement.walk_speed_wm_s: must be >= 0".into());
        }
        if mv.waypoint_pause_s.is_nan() || mv.waypoint_pause_s < 0.0 {
            issues.push("movement.waypoint_pause_s: must be >= 0".into());
        }
        for (name, value) in [
            ("movement.teleport_avatar_fraction", mv.teleport_avatar_fraction),
            ("version_mix.fraction_a", self.version_mix.fraction_a),
        ] {
            if !(0.0..=1.0).contains(&value) {
                issues.push(format!("{name}: {value} outside [0, 1]"));
            }
        }
        if mv.teleport_speed_factor < 1.0 {
            issues.push("movement.teleport_speed_factor: must be >= 1".into());
        }
        if self.background.adversarial_count > self.background.flow_count {
            issues.push(format!(
                "background.adversarial_count: {} exceeds flow_count {}",
                self.background.adversarial_count, self.background.flow_count
            ));
        }
        if self.users.reallocated_users > self.users.count {
            issues.push(format!(
                "users.reallocated_users: {} exceeds users.count {}",
                self.users.reallocated_users, self.users.count
            ));
        }
        for (name, o) in [("tiger", &self.class_overrides.tiger), ("lion", &self.class_overrides.lion)] {
            if o.duration_scale.is_nan() || o.duration_scale <= 0.0 {
                issues.push(format!("class_overrides.{name}.duration_scale: must be > 0"));
            }
            if let Some(p) = o.waypoint_pause_s {
                if p.is_nan() || p < 0.0 {
                    issues.push(format!("class_overrides.{name}.waypoint_pause_s: must be >= 0"));
                }
            }
        }
        issues
    }
}
