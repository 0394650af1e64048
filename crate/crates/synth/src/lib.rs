//! Synthetic trace generation: turn a scenario description into a pcap of
//! WoW-like traffic plus background and adversarial noise, together with an
//! exact ground-truth manifest for verifying the analyzer.

pub mod emit;
pub mod manifest;
pub mod mobility;
pub mod scenario;
pub mod shuffle;
pub mod simulate;
pub mod stats;

use std::path::Path;

use thiserror::Error;

pub use manifest::Manifest;
pub use scenario::Scenario;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario invalid:\n{}", .0.join("\n"))]
    InvalidScenario(Vec<String>),
    #[error("scenario unreadable: {0}")]
    ScenarioParse(#[from] serde_json::Error),
    #[error(transparent)]
    Capture(#[from] mmoscope_core::capture::CaptureError),
}

/// Generate the pcap and manifest for a scenario. `seed` overrides the
/// scenario's own seed when given.
pub fn generate(
    scenario: &Scenario,
    seed: Option<u64>,
    pcap_path: &Path,
    manifest_path: &Path,
) -> Result<Manifest, SynthError> {
    let issues = scenario.validate();
    if !issues.is_empty() {
        return Err(SynthError::InvalidScenario(issues));
    }
    let seed = seed.unwrap_or(scenario.seed);
    let plan = simulate::plan(scenario, seed);
    let manifest = emit::emit_pcap(scenario, seed, &plan, pcap_path)?;
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(manifest_path, json)?;
    Ok(manifest)
}
