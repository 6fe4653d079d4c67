use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::board::ArchivePolicy;
use crate::crypto::{seeded_rng, GroupParams};
use crate::netsim::{AdversaryRule, Matcher, Payload, PayloadKind, Principal};
use crate::properties::{Property, Verdict};

use super::{
    ConfigError, Driver, EventRef, PollStation, ScenarioConfig, ScenarioError, ScriptedHold,
    VoterAction, VoterScript,
};

pub const BUILTIN_NAMES: [&str; 7] = [
    "honest-single",
    "honest-revote",
    "fig2-attack",
    "fig2-attack-token-timestamp",
    "fig2-attack-ballot-timestamp",
    "poll-station",
    "fuzz",
];

pub fn builtin_names() -> &'static [&'static str] {
    &BUILTIN_NAMES
}

fn voter(id: &str, choices: &[u64]) -> VoterScript {
    VoterScript {
        id: id.to_owned(),
        choices: choices.to_vec(),
    }
}

fn base(name: &str, policy: ArchivePolicy, seed: u64, voters: Vec<VoterScript>) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_owned(),
        policy,
        voters,
        intruders: Vec::new(),
        adversary_script: Vec::new(),
        close_after: None,
        seed,
        after_close: Vec::new(),
        after_tally: Vec::new(),
        poll_station: None,
    }
}

/// Hold the voter's first token on its way to the board and let it go once
/// the voter has re-voted.
fn delay_first_token(voter: &str) -> ScriptedHold {
    ScriptedHold {
        hold: Matcher::kind(PayloadKind::TokenForward)
            .from(Principal::voter(voter))
            .to(Principal::Board),
        limit: Some(1),
        release_after: EventRef::Cast {
            voter: voter.to_owned(),
            index: 1,
        },
    }
}

fn token_delay(name: &str, policy: ArchivePolicy, seed: u64) -> ScenarioConfig {
    let mut cfg = base(
        name,
        policy,
        seed,
        vec![voter("alice", &[1, 0]), voter("bob", &[1])],
    );
    cfg.adversary_script.push(delay_first_token("alice"));
    cfg
}

fn poll_station(seed: u64) -> ScenarioConfig {
    // carol's first ballot is the supervisor's demonstration vote.
    let mut cfg = base(
        "poll-station",
        ArchivePolicy::Vulnerable,
        seed,
        vec![voter("carol", &[1, 0])],
    );
    cfg.adversary_script.push(delay_first_token("carol"));
    cfg.close_after = Some(EventRef::Released { rule: 0 });
    let carol = || "carol".to_owned();
    cfg.after_close = vec![
        VoterAction::Verify { voter: carol() },
        VoterAction::Recast {
            voter: carol(),
            choice: 0,
        },
    ];
    cfg.after_tally = vec![VoterAction::Verify { voter: carol() }];
    cfg.poll_station = Some(PollStation { victim: carol() });
    cfg
}

pub fn builtin(name: &str, seed: u64) -> Result<ScenarioConfig, ConfigError> {
    Ok(match name {
        "honest-single" => base(
            name,
            ArchivePolicy::Vulnerable,
            seed,
            vec![voter("alice", &[1])],
        ),
        "honest-revote" => base(
            name,
            ArchivePolicy::Vulnerable,
            seed,
            vec![voter("alice", &[0, 1])],
        ),
        "fig2-attack" => token_delay(name, ArchivePolicy::Vulnerable, seed),
        "fig2-attack-token-timestamp" => token_delay(name, ArchivePolicy::TokenTimestamp, seed),
        "fig2-attack-ballot-timestamp" => token_delay(name, ArchivePolicy::BallotTimestamp, seed),
        "poll-station" => poll_station(seed),
        "fuzz" => fuzz(seed),
        _ => return Err(ConfigError::UnknownScenario(name.to_owned())),
    })
}

const FUZZ_KINDS: [PayloadKind; 6] = [
    PayloadKind::BallotSubmission,
    PayloadKind::AuthRequest,
    PayloadKind::TokenGrant,
    PayloadKind::TokenForward,
    PayloadKind::IntrospectRequest,
    PayloadKind::IntrospectResponse,
];

fn random_voters<R: Rng>(rng: &mut R, max_voters: usize, max_casts: usize) -> Vec<VoterScript> {
    (0..rng.gen_range(1..=max_voters))
        .map(|i| VoterScript {
            id: format!("v{i}"),
            choices: (0..rng.gen_range(1..=max_casts))
                .map(|_| rng.gen_range(0..=1))
                .collect(),
        })
        .collect()
}

/// Random casts, unregistered intruders and random hold rules, each released
/// after some cast. Nothing is held forever.
pub fn fuzz(seed: u64) -> ScenarioConfig {
    let mut rng = seeded_rng("fuzz", &seed.to_be_bytes());
    let policy = *ArchivePolicy::ALL.choose(&mut rng).expect("non-empty");
    let voters = random_voters(&mut rng, 5, 3);
    let mut cfg = base(&format!("fuzz-{seed}"), policy, seed, voters);
    cfg.intruders = (0..rng.gen_range(0..=2))
        .map(|i| format!("intruder{i}"))
        .collect();
    for _ in 0..rng.gen_range(0..=3) {
        let mut hold = Matcher::kind(*FUZZ_KINDS.choose(&mut rng).expect("non-empty"));
        if rng.gen_bool(0.5) {
            let target = cfg.voters.choose(&mut rng).expect("at least one voter");
            let who = Principal::voter(&target.id);
            hold = if rng.gen_bool(0.5) {
                hold.from(who)
            } else {
                hold.to(who)
            };
        }
        let anchor = cfg.voters.choose(&mut rng).expect("at least one voter");
        let release_after = EventRef::Cast {
            voter: anchor.id.clone(),
            index: rng.gen_range(0..anchor.choices.len()),
        };
        cfg.adversary_script.push(ScriptedHold {
            hold,
            limit: Some(rng.gen_range(1..=2)),
            release_after,
        });
    }
    cfg
}

/// An adversary-free election with up to 20 voters and up to three
/// re-votes each.
pub fn random_honest(seed: u64) -> ScenarioConfig {
    let mut rng = seeded_rng("honest", &seed.to_be_bytes());
    let policy = *ArchivePolicy::ALL.choose(&mut rng).expect("non-empty");
    let voters = random_voters(&mut rng, 20, 4);
    base(&format!("honest-{seed}"), policy, seed, voters)
}

/// One delivery order of the held messages and its outcome.
#[derive(Debug, Clone)]
pub struct Interleaving {
    /// Held messages in release order, e.g. `token_forward alice/0`.
    pub order: Vec<String>,
    pub verdict: Verdict,
    pub tally: u64,
}

fn interleaving_config(policy: ArchivePolicy, seed: u64) -> ScenarioConfig {
    base(
        "token-delay-interleavings",
        policy,
        seed,
        vec![voter("alice", &[1, 0])],
    )
}

/// Runs the two-ballot re-vote with every voter-to-board message held, then
/// releases the held messages in every possible order, letting the network
/// settle after each release.
pub fn enumerate_token_delay_interleavings(
    policy: ArchivePolicy,
    params: &GroupParams,
    seed: u64,
) -> Result<Vec<Interleaving>, ScenarioError> {
    let cfg = interleaving_config(policy, seed);
    let setup = |driver: &mut Driver| -> Result<Vec<u64>, ScenarioError> {
        driver.add_rule(AdversaryRule::hold(Matcher {
            from: Some(Principal::voter("alice")),
            to: Some(Principal::Board),
            ..Matcher::default()
        }));
        for choice in [1, 0] {
            driver.cast("alice", choice)?;
            driver.run_until_quiescent()?;
        }
        Ok(driver.held())
    };
    let held = setup(&mut Driver::new(&cfg, params))?;
    let mut out = Vec::new();
    for order in held.iter().copied().permutations(held.len()) {
        let mut driver = Driver::new(&cfg, params);
        setup(&mut driver)?;
        let labels = order
            .iter()
            .map(|&h| {
                let msg = driver
                    .network()
                    .held_message(h)
                    .expect("same run, same handles");
                let session = match &msg.payload {
                    Payload::BallotSubmission { session, .. }
                    | Payload::TokenForward { session, .. } => session.as_str(),
                    _ => "?",
                };
                format!("{} {session}", msg.payload.kind().as_str())
            })
            .collect();
        for handle in order {
            driver.release(handle)?;
            driver.run_until_quiescent()?;
        }
        driver.close()?;
        let tally = driver.tally()?;
        let run = driver.finish(&cfg)?;
        out.push(Interleaving {
            order: labels,
            verdict: run.verdict(Property::StrongNonReusability).clone(),
            tally,
        });
    }
    Ok(out)
}
