//! Scripted elections: who votes what, which messages the adversary holds
//! and when it lets them go. A script runs to a transcript, a board export
//! and the three property verdicts.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{ArchivePolicy, BoardError, BoardExport};
use crate::crypto::GroupParams;
use crate::netsim::{Matcher, NetError, TranscriptError};
use crate::properties::{Property, Trace, TraceError, Verdict, VerifyOutcome};

mod builtin;
mod world;

pub use builtin::{
    builtin, builtin_names, enumerate_token_delay_interleavings, fuzz, random_honest, Interleaving,
    BUILTIN_NAMES,
};
pub use world::Driver;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoterScript {
    pub id: String,
    /// Choices in cast order.
    pub choices: Vec<u64>,
}

/// A point in the run that adversary releases and the close can hang off.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventRef {
    /// The given cast has been sent and the network has gone quiet.
    Cast { voter: String, index: usize },
    /// Everything held by the given rule has been released and delivered.
    Released { rule: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedHold {
    pub hold: Matcher,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    pub release_after: EventRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoterAction {
    /// Compare the board's accepted entry with the last ballot cast while
    /// voting was open.
    Verify { voter: String },
    /// Cast another ballot.
    Recast { voter: String, choice: u64 },
}

impl VoterAction {
    fn voter(&self) -> &str {
        match self {
            VoterAction::Verify { voter } | VoterAction::Recast { voter, .. } => voter,
        }
    }
}

/// A supervisor casts the victim's first ballot and the victim re-votes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PollStation {
    pub victim: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub policy: ArchivePolicy,
    pub voters: Vec<VoterScript>,
    /// Unregistered principals that each try to cast one ballot with a
    /// fabricated token.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intruders: Vec<String>,
    #[serde(default)]
    pub adversary_script: Vec<ScriptedHold>,
    /// Close early; otherwise voting closes after the last cast.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub close_after: Option<EventRef>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub after_close: Vec<VoterAction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub after_tally: Vec<VoterAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poll_station: Option<PollStation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("scenario has no voters")]
    NoVoters,
    #[error("voter `{0}` appears more than once")]
    DuplicateVoter(String),
    #[error("voter `{0}` has no choices")]
    NoChoices(String),
    #[error("voter `{voter}` has choice {choice}; choices are 0 or 1")]
    ChoiceOutOfRange { voter: String, choice: u64 },
    #[error("intruder `{0}` collides with another principal")]
    IntruderCollision(String),
    #[error("voter id `{0}` is empty or contains ':' or '/'")]
    BadVoterId(String),
    #[error("{context} refers to an event the scenario cannot produce: {event:?}")]
    UnknownEvent { context: String, event: EventRef },
    #[error("action refers to unknown voter `{0}`")]
    UnknownVoter(String),
    #[error("poll-station scenario needs a victim with a supervised first ballot and a re-vote")]
    NotPollStation,
    #[error("unknown builtin scenario `{0}`")]
    UnknownScenario(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.contains([':', '/'])
}

impl ScenarioConfig {
    pub fn roll(&self) -> BTreeSet<String> {
        self.voters.iter().map(|v| v.id.clone()).collect()
    }

    pub fn with_policy(mut self, policy: ArchivePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn voter(&self, id: &str) -> Option<&VoterScript> {
        self.voters.iter().find(|v| v.id == id)
    }

    fn can_produce(&self, event: &EventRef, rules_before: usize) -> bool {
        match event {
            EventRef::Cast { voter, index } => {
                self.voter(voter).is_some_and(|v| *index < v.choices.len())
            }
            EventRef::Released { rule } => *rule < rules_before,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.voters.is_empty() {
            return Err(ConfigError::NoVoters);
        }
        let mut seen = BTreeSet::new();
        for voter in &self.voters {
            if !valid_id(&voter.id) {
                return Err(ConfigError::BadVoterId(voter.id.clone()));
            }
            if !seen.insert(voter.id.as_str()) {
                return Err(ConfigError::DuplicateVoter(voter.id.clone()));
            }
            if voter.choices.is_empty() {
                return Err(ConfigError::NoChoices(voter.id.clone()));
            }
            if let Some(&choice) = voter.choices.iter().find(|&&c| c > 1) {
                return Err(ConfigError::ChoiceOutOfRange {
                    voter: voter.id.clone(),
                    choice,
                });
            }
        }
        for intruder in &self.intruders {
            if !valid_id(intruder) {
                return Err(ConfigError::BadVoterId(intruder.clone()));
            }
            if !seen.insert(intruder.as_str()) {
                return Err(ConfigError::IntruderCollision(intruder.clone()));
            }
        }
        // A release may only wait on casts or on earlier rules, so the
        // dependency graph is acyclic and every hold is eventually released.
        for (ix, hold) in self.adversary_script.iter().enumerate() {
            if !self.can_produce(&hold.release_after, ix) {
                return Err(ConfigError::UnknownEvent {
                    context: format!("adversary rule {ix}"),
                    event: hold.release_after.clone(),
                });
            }
        }
        if let Some(close) = &self.close_after {
            if !self.can_produce(close, self.adversary_script.len()) {
                return Err(ConfigError::UnknownEvent {
                    context: "close_after".into(),
                    event: close.clone(),
                });
            }
        }
        for action in self.after_close.iter().chain(&self.after_tally) {
            if self.voter(action.voter()).is_none() {
                return Err(ConfigError::UnknownVoter(action.voter().to_owned()));
            }
            if let VoterAction::Recast { voter, choice } = action {
                if *choice > 1 {
                    return Err(ConfigError::ChoiceOutOfRange {
                        voter: voter.clone(),
                        choice: *choice,
                    });
                }
            }
        }
        if let Some(station) = &self.poll_station {
            if self
                .voter(&station.victim)
                .is_none_or(|v| v.choices.len() < 2)
            {
                return Err(ConfigError::NotPollStation);
            }
        }
        Ok(())
    }

    /// Cast order: round-robin by cast index, voters in config order.
    /// Intruders try their luck once everybody has cast a first ballot.
    pub fn schedule(&self) -> Vec<Cast> {
        let rounds = self
            .voters
            .iter()
            .map(|v| v.choices.len())
            .max()
            .unwrap_or(0);
        let mut out = Vec::new();
        for round in 0..rounds {
            for voter in &self.voters {
                if let Some(&choice) = voter.choices.get(round) {
                    out.push(Cast::Voter {
                        voter: voter.id.clone(),
                        index: round,
                        choice,
                    });
                }
            }
            if round == 0 {
                out.extend(
                    self.intruders
                        .iter()
                        .map(|id| Cast::Intruder { id: id.clone() }),
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cast {
    Voter {
        voter: String,
        index: usize,
        choice: u64,
    },
    Intruder {
        id: String,
    },
}

/// A voter-side verification, read back from the transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lookup {
    pub step: u64,
    pub voter: String,
    pub outcome: VerifyOutcome,
    pub after_close: bool,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub name: String,
    pub policy: ArchivePolicy,
    pub roll: BTreeSet<String>,
    pub trace: Trace,
    pub board: BoardExport,
    pub verdicts: Vec<Verdict>,
    pub tally: u64,
}

impl ScenarioRun {
    pub fn verdict(&self, property: Property) -> &Verdict {
        self.verdicts
            .iter()
            .find(|v| v.property == property)
            .expect("every property is evaluated")
    }

    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.holds)
    }

    pub fn transcript(&self) -> String {
        crate::netsim::to_jsonl(self.trace.events())
    }

    pub fn lookups(&self) -> Vec<Lookup> {
        let close = self
            .trace
            .events()
            .iter()
            .find(|e| e.kind == crate::netsim::EventKind::Close)
            .map(|e| e.step);
        self.trace
            .events()
            .iter()
            .filter(|e| e.kind == crate::netsim::EventKind::Lookup)
            .filter_map(|e| {
                let outcome = match e.detail.outcome.as_deref()? {
                    "verified" => VerifyOutcome::Verified,
                    "mismatch" => VerifyOutcome::Mismatch,
                    "absent" => VerifyOutcome::Absent,
                    _ => return None,
                };
                Some(Lookup {
                    step: e.step,
                    voter: e.detail.voter.clone()?,
                    outcome,
                    after_close: close.is_some_and(|c| e.step > c),
                })
            })
            .collect()
    }
}

/// Runs a script end to end: casts, adversary releases, close, post-close
/// actions, tally, post-tally actions, verdicts.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    params: &GroupParams,
) -> Result<ScenarioRun, ScenarioError> {
    cfg.validate()?;
    let mut driver = Driver::new(cfg, params);
    let rules: Vec<_> = cfg
        .adversary_script
        .iter()
        .map(|h| {
            let mut rule = crate::netsim::AdversaryRule::hold(h.hold.clone());
            rule.limit = h.limit;
            driver.add_rule(rule)
        })
        .collect();
    let mut released = vec![false; rules.len()];

    for cast in cfg.schedule() {
        let fired = match &cast {
            Cast::Voter {
                voter,
                index,
                choice,
            } => {
                driver.cast(voter, *choice)?;
                Some(EventRef::Cast {
                    voter: voter.clone(),
                    index: *index,
                })
            }
            Cast::Intruder { id } => {
                driver.intrude(id)?;
                None
            }
        };
        driver.run_until_quiescent()?;
        let mut pending: Vec<EventRef> = fired.into_iter().collect();
        while let Some(event) = pending.pop() {
            for (ix, hold) in cfg.adversary_script.iter().enumerate() {
                if !released[ix] && hold.release_after == event {
                    released[ix] = true;
                    driver.release_rule(rules[ix])?;
                    pending.push(EventRef::Released { rule: ix });
                }
            }
            if cfg.close_after.as_ref() == Some(&event) && !driver.is_closed() {
                driver.close()?;
            }
        }
    }
    if !driver.is_closed() {
        driver.close()?;
    }
    for action in &cfg.after_close {
        driver.act(action)?;
    }
    driver.tally()?;
    for action in &cfg.after_tally {
        driver.act(action)?;
    }
    driver.finish(cfg)
}

/// The poll-station variant: as [`run_scenario`], but the config must name a
/// victim whose first ballot was cast by a supervisor.
pub fn run_poll_station_scenario(
    cfg: &ScenarioConfig,
    params: &GroupParams,
) -> Result<ScenarioRun, ScenarioError> {
    if cfg.poll_station.is_none() {
        return Err(ConfigError::NotPollStation.into());
    }
    run_scenario(cfg, params)
}
