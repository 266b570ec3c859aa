//! Scripted corruption of a single party and classification of what the
//! honest parties ended up with.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::{parse_bristol, parse_circuit, Circuit, GateId, Inputs};
use crate::party::{PartyId, COMPUTE_PARTIES, EVALUATORS};
use crate::runner::{run3, run4, seed_from, Homogenize, RunError, RunOptions, RunReport};
use crate::session::{Check, ProtocolError};
use crate::transport::tamper::TamperRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Proto {
    #[serde(rename = "3pc")]
    Three,
    #[default]
    #[serde(rename = "4pc")]
    Four,
}

/// A scenario as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub corrupt: PartyId,
    #[serde(default)]
    pub rules: Vec<TamperRule>,
    /// Relative paths are resolved against the scenario file.
    pub circuit: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub proto: Proto,
    #[serde(default)]
    pub inputs: Option<Inputs>,
    #[serde(default)]
    pub fair: bool,
    #[serde(default)]
    pub god: bool,
    #[serde(default)]
    pub checkpoint_interval: Option<usize>,
    /// Receive timeout; keeps scenarios that drop frames short.
    #[serde(default)]
    pub timeout_ms: Option<u64>,
}

/// What the honest parties got.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    /// All honest parties agree on this output.
    Output { values: BTreeMap<GateId, u64> },
    /// Every honest party aborted.
    Abort {
        /// Pairs whose transcripts disagreed, as seen by honest parties.
        pairs: Vec<(PartyId, PartyId)>,
        checks: Vec<Check>,
    },
    /// Output delivered after falling back.
    GodOutput { values: BTreeMap<GateId, u64>, resets: u32, excluded: Vec<PartyId> },
    /// Some honest parties output and some aborted, or outputs differ.
    Split { outputs: Vec<PartyId>, aborts: Vec<PartyId> },
}

impl Outcome {
    pub fn is_abort(&self) -> bool {
        matches!(self, Outcome::Abort { .. })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub outcome: Outcome,
    /// Frames the corrupted party actually changed or dropped.
    pub tampered: u64,
}

fn participants(proto: Proto) -> &'static [PartyId] {
    match proto {
        Proto::Three => &EVALUATORS,
        Proto::Four => &COMPUTE_PARTIES,
    }
}

/// Runs the circuit with `corrupt` applying `rules` to what it sends.
pub fn run_scenario(
    c: &Circuit,
    inputs: &Inputs,
    proto: Proto,
    corrupt: PartyId,
    rules: Vec<TamperRule>,
    opts: &RunOptions,
) -> Result<ScenarioReport, RunError> {
    if !participants(proto).contains(&corrupt) {
        return Err(RunError::Usage(format!("{corrupt} does not take part in this protocol")));
    }
    if rules.iter().any(|r| r.to == Some(corrupt)) {
        return Err(RunError::Usage("rules can only change messages the corrupted party sends to others".into()));
    }
    let opts = RunOptions { corrupt: Some((corrupt, rules)), ..opts.clone() };
    let report = match proto {
        Proto::Three => run3(c, inputs, &opts)?,
        Proto::Four => run4(c, inputs, &opts)?,
    };
    Ok(ScenarioReport { outcome: classify(&report, proto, corrupt, opts.god), tampered: report.tampered })
}

pub fn classify(report: &RunReport, proto: Proto, corrupt: PartyId, god: bool) -> Outcome {
    let honest: Vec<PartyId> = participants(proto).iter().copied().filter(|p| *p != corrupt).collect();
    let (mut outputs, mut aborts) = (Vec::new(), Vec::new());
    let mut pairs = Vec::new();
    let mut checks = Vec::new();
    for p in &honest {
        match report.outputs.get(p) {
            Some(Ok(_)) => outputs.push(*p),
            Some(Err(e)) => {
                aborts.push(*p);
                if let ProtocolError::CheckFailed { pairs: ps, checks: cs, .. } = e {
                    for x in ps {
                        if !pairs.contains(x) {
                            pairs.push(*x);
                        }
                    }
                    for x in cs {
                        if !checks.contains(x) {
                            checks.push(*x);
                        }
                    }
                }
            }
            None => aborts.push(*p),
        }
    }
    if aborts.is_empty() {
        if let Some(values) = report.honest_output(Some(corrupt)) {
            return if god && report.resets > 0 {
                Outcome::GodOutput { values, resets: report.resets, excluded: report.excluded.clone() }
            } else {
                Outcome::Output { values }
            };
        }
    }
    if outputs.is_empty() {
        pairs.sort();
        checks.sort();
        return Outcome::Abort { pairs, checks };
    }
    Outcome::Split { outputs, aborts }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}: {1}")]
    Json(PathBuf, serde_json::Error),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Circuit(#[from] crate::circuit::CircuitError),
}

/// Reads a circuit in the native format, or Bristol fashion for `.txt`.
pub fn load_circuit(path: &Path) -> Result<Circuit, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(path.to_owned(), e))?;
    Ok(if path.extension().is_some_and(|e| e == "txt" || e == "bristol") {
        parse_bristol(&text)?
    } else {
        parse_circuit(&text)?
    })
}

/// Loads and runs a scenario file. Missing inputs are drawn from the seed.
pub fn run_scenario_file(path: &Path, base: &RunOptions) -> Result<(Scenario, ScenarioReport), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(path.to_owned(), e))?;
    let sc: Scenario = serde_json::from_str(&text).map_err(|e| ScenarioError::Json(path.to_owned(), e))?;
    let circuit_path = path.parent().unwrap_or(Path::new(".")).join(&sc.circuit);
    let c = load_circuit(&circuit_path)?;
    let inputs = crate::circuit::random::seeded_inputs(&c, sc.inputs.as_ref().unwrap_or(&Inputs::new()), sc.seed);
    let opts = RunOptions {
        seed: seed_from(sc.seed),
        fair: sc.fair,
        god: sc.god,
        checkpoint_interval: sc.checkpoint_interval.unwrap_or(base.checkpoint_interval),
        homogenize: Homogenize::Off,
        timeout: sc.timeout_ms.map_or(base.timeout, std::time::Duration::from_millis),
        ..base.clone()
    };
    let report = run_scenario(&c, &inputs, sc.proto, sc.corrupt, sc.rules.clone(), &opts)?;
    Ok((sc, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::evaluate_cleartext;
    use crate::circuit::random::mul_chain;
    use crate::ring::Width;
    use crate::transport::tamper::Mutation;
    use crate::transport::MsgKind;
    use PartyId::*;

    fn chain() -> (Circuit, Inputs) {
        let c = mul_chain(Width::W32, 8, [P1, P4]);
        (c, Inputs::from([("a".to_string(), 7), ("b".to_string(), 9)]))
    }

    #[test]
    fn honest_scenario_outputs() {
        let (c, x) = chain();
        let r = run_scenario(&c, &x, Proto::Four, P3, vec![], &RunOptions::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Output { values: evaluate_cleartext(&c, &x).unwrap() });
        assert_eq!(r.tampered, 0);
    }

    #[test]
    fn tampered_m2_aborts() {
        let (c, x) = chain();
        let rule = TamperRule::new(MsgKind::M2, Some(5), Mutation::AddDelta(1));
        let r = run_scenario(&c, &x, Proto::Four, P2, vec![rule], &RunOptions::default()).unwrap();
        assert_eq!(r.tampered, 1);
        let Outcome::Abort { checks, .. } = r.outcome else { panic!("{:?}", r.outcome) };
        assert!(checks.contains(&Check::V23) || checks.contains(&Check::V1), "{checks:?}");
    }

    #[test]
    fn usage_errors() {
        let (c, x) = chain();
        let self_rule = TamperRule::new(MsgKind::M2, None, Mutation::Drop).to(P2);
        assert!(run_scenario(&c, &x, Proto::Four, P2, vec![self_rule], &RunOptions::default()).is_err());
        assert!(run_scenario(&c, &x, Proto::Three, P4, vec![], &RunOptions::default()).is_err());
    }

    #[test]
    fn scenario_json_roundtrip() {
        let text = r#"{"corrupt":"P2","circuit":"x.circ","rules":[{"kind":"m2","index":3,"mutation":{"op":"add_delta","value":1}}]}"#;
        let sc: Scenario = serde_json::from_str(text).unwrap();
        assert_eq!(sc.corrupt, P2);
        assert_eq!(sc.proto, Proto::Four);
        assert_eq!(sc.rules[0], TamperRule::new(MsgKind::M2, Some(3), Mutation::AddDelta(1)));
    }
}
