//! Trace predicates against independent recomputation from the board export
//! and the scenario script.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use helios_revote::board::{ArchivePolicy, EntryStatus};
use helios_revote::crypto::{generate_group, GroupParams};
use helios_revote::netsim::{parse_jsonl, to_jsonl, EventKind, Matcher, PayloadKind, Principal};
use helios_revote::properties::{check_all, Property, Trace};
use helios_revote::scenarios::{fuzz, run_scenario, EventRef, ScenarioConfig, ScriptedHold};
use proptest::prelude::*;

fn group() -> &'static GroupParams {
    static GROUP: OnceLock<GroupParams> = OnceLock::new();
    GROUP.get_or_init(|| generate_group(64, 11).expect("64-bit group"))
}

/// Verdicts computed from the final board and the script, without the
/// transcript.
fn export_oracle(cfg: &ScenarioConfig, run: &helios_revote::scenarios::ScenarioRun) -> [bool; 3] {
    let roll = cfg.roll();
    let mut accepted: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for entry in run
        .board
        .entries
        .iter()
        .filter(|e| e.status == EntryStatus::Accepted)
    {
        let voter = entry
            .voter_id
            .as_deref()
            .expect("accepted entries name a voter");
        accepted.entry(voter).or_default().push(&entry.session);
    }
    let eligible = accepted.keys().all(|v| roll.contains(*v));
    let single = accepted.values().all(|s| s.len() == 1);
    let last = accepted.iter().all(|(voter, sessions)| {
        let script = cfg.voters.iter().find(|v| v.id == *voter);
        let last_session = script.map(|v| format!("{voter}/{}", v.choices.len() - 1));
        sessions.len() == 1 && Some(sessions[0].to_owned()) == last_session
    });
    [eligible, single, last]
}

fn holds(run: &helios_revote::scenarios::ScenarioRun) -> [bool; 3] {
    Property::ALL.map(|p| run.verdict(p).holds)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predicates_agree_with_board_export(seed in any::<u64>()) {
        let cfg = fuzz(seed);
        let run = run_scenario(&cfg, group()).unwrap();
        prop_assert_eq!(holds(&run), export_oracle(&cfg, &run));
    }

    #[test]
    fn transcript_roundtrip_preserves_verdicts(seed in any::<u64>()) {
        let cfg = fuzz(seed);
        let run = run_scenario(&cfg, group()).unwrap();
        let events = parse_jsonl(&run.transcript()).unwrap();
        prop_assert_eq!(&events, &run.trace.events().to_vec());
        let reread = Trace::new(events).unwrap();
        prop_assert_eq!(check_all(&reread, &run.roll).unwrap(), run.verdicts.clone());
        prop_assert_eq!(to_jsonl(reread.events()), run.transcript());
    }

    #[test]
    fn ballot_timestamps_survive_any_release_schedule(seed in any::<u64>()) {
        let cfg = fuzz(seed).with_policy(ArchivePolicy::BallotTimestamp);
        let run = run_scenario(&cfg, group()).unwrap();
        prop_assert!(run.all_hold(), "{:?}", run.verdicts);
    }

    #[test]
    fn token_timestamps_survive_when_logins_are_not_delayed(seed in any::<u64>()) {
        let mut cfg = fuzz(seed).with_policy(ArchivePolicy::TokenTimestamp);
        cfg.adversary_script.retain(|h| h.hold.kind != Some(PayloadKind::AuthRequest));
        let run = run_scenario(&cfg, group()).unwrap();
        prop_assert!(run.all_hold(), "{:?}", run.verdicts);
    }

    #[test]
    fn every_fuzz_hold_is_released_before_close(seed in any::<u64>()) {
        let run = run_scenario(&fuzz(seed), group()).unwrap();
        let events = run.trace.events();
        let close = events.iter().find(|e| e.kind == EventKind::Close).unwrap().step;
        let holds = events.iter().filter(|e| e.kind == EventKind::Hold).count();
        let releases = events
            .iter()
            .filter(|e| e.kind == EventKind::Release && e.step < close)
            .count();
        prop_assert_eq!(holds, releases);
    }
}

/// Token issue times only order ballots if logins happen in cast order. An
/// adversary who delays the first login until after the re-vote gets the
/// first ballot a newer token, and the token-timestamp board keeps it. Proof-
/// bound ballot timestamps do not have this gap.
#[test]
fn delayed_login_defeats_token_timestamps_only() {
    let mut base = helios_revote::scenarios::builtin("fig2-attack", 0).unwrap();
    base.adversary_script = vec![ScriptedHold {
        hold: Matcher::kind(PayloadKind::AuthRequest).from(Principal::voter("alice")),
        limit: Some(1),
        release_after: EventRef::Cast {
            voter: "alice".into(),
            index: 1,
        },
    }];
    let verdict = |policy| {
        let run = run_scenario(&base.clone().with_policy(policy), group()).unwrap();
        run.verdict(Property::StrongNonReusability).holds
    };
    assert!(!verdict(ArchivePolicy::Vulnerable));
    assert!(!verdict(ArchivePolicy::TokenTimestamp));
    assert!(verdict(ArchivePolicy::BallotTimestamp));
}
