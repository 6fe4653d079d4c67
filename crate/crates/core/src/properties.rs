//! Trace predicates for eligibility, non-reusability and strong
//! non-reusability, plus the voter-side verification check.
//!
//! Predicates read only the transcript. Ground truth (who cast what, in
//! which order) comes from the harness annotations on `send` events of
//! ballot submissions; the board's decisions come from `board_accept` and
//! `board_archive` events replayed up to the `tally` event.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{BoardLookup, SubmissionId};
use crate::crypto::Digest;
use crate::netsim::{Event, EventKind, PayloadKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("malformed trace at step {step}: {reason}")]
    Malformed { step: u64, reason: String },
    #[error("incomplete trace: {0}")]
    Incomplete(&'static str),
}

fn malformed(event: &Event, reason: &str) -> TraceError {
    TraceError::Malformed {
        step: event.step,
        reason: reason.to_owned(),
    }
}

/// One ballot as the voter cast it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastRecord {
    pub voter: String,
    pub ballot: Digest,
    pub plaintext: u64,
    pub cast_index: u64,
    /// Step of the `send` event that carried the ballot.
    pub step: u64,
    pub session: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    events: Vec<Event>,
    ground_truth: BTreeMap<String, Vec<CastRecord>>,
}

impl Trace {
    pub fn new(events: Vec<Event>) -> Result<Self, TraceError> {
        for pair in events.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(malformed(&pair[1], "steps are not strictly increasing"));
            }
        }
        let mut ground_truth: BTreeMap<String, Vec<CastRecord>> = BTreeMap::new();
        for event in &events {
            if event.kind != EventKind::Send
                || event.detail.payload != Some(PayloadKind::BallotSubmission)
            {
                continue;
            }
            let Some(cast_index) = event.detail.cast_index else {
                continue;
            };
            let d = &event.detail;
            let (Some(voter), Some(ballot), Some(plaintext)) = (&d.voter, d.ballot, d.plaintext)
            else {
                return Err(malformed(
                    event,
                    "cast annotation lacks voter, ballot or plaintext",
                ));
            };
            ground_truth
                .entry(voter.clone())
                .or_default()
                .push(CastRecord {
                    voter: voter.clone(),
                    ballot,
                    plaintext,
                    cast_index,
                    step: event.step,
                    session: d.session.clone(),
                });
        }
        for casts in ground_truth.values_mut() {
            casts.sort_by_key(|c| c.cast_index);
        }
        Ok(Self {
            events,
            ground_truth,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn ground_truth(&self) -> &BTreeMap<String, Vec<CastRecord>> {
        &self.ground_truth
    }

    pub fn event(&self, step: u64) -> Option<&Event> {
        self.events
            .binary_search_by_key(&step, |e| e.step)
            .ok()
            .map(|ix| &self.events[ix])
    }

    /// The events at the given steps, as a trace of their own.
    pub fn subsequence(&self, steps: &[u64]) -> Result<Trace, TraceError> {
        let keep: BTreeSet<u64> = steps.iter().copied().collect();
        Trace::new(
            self.events
                .iter()
                .filter(|e| keep.contains(&e.step))
                .cloned()
                .collect(),
        )
    }

    fn first(&self, kind: EventKind) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == kind)
    }

    pub fn tally_result(&self) -> Option<u64> {
        self.first(EventKind::Tally).and_then(|e| e.detail.result)
    }

    /// Casts made before voting closed, in cast order.
    pub fn casts_in_period(&self, voter: &str) -> Vec<&CastRecord> {
        let close = self.first(EventKind::Close).map(|e| e.step);
        self.ground_truth
            .get(voter)
            .map(|casts| {
                casts
                    .iter()
                    .filter(|c| close.is_none_or(|close| c.step < close))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn last_cast(&self, voter: &str) -> Option<&CastRecord> {
        self.casts_in_period(voter).last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Replayed {
    voter: Option<String>,
    session: Option<String>,
    ballot: Option<Digest>,
    accepted: bool,
    accept_step: Option<u64>,
}

/// Board entries as of the tally, reconstructed from accept/archive events.
struct TallyView<'a> {
    tally: &'a Event,
    entries: BTreeMap<SubmissionId, Replayed>,
}

impl TallyView<'_> {
    fn accepted_by_voter(&self) -> BTreeMap<&str, Vec<(SubmissionId, &Replayed)>> {
        let mut out: BTreeMap<&str, Vec<_>> = BTreeMap::new();
        for (&sub, entry) in &self.entries {
            if let (true, Some(voter)) = (entry.accepted, entry.voter.as_deref()) {
                out.entry(voter).or_default().push((sub, entry));
            }
        }
        out
    }
}

fn replay_to_tally(trace: &Trace) -> Result<TallyView<'_>, TraceError> {
    let tally = trace
        .first(EventKind::Tally)
        .ok_or(TraceError::Incomplete("no tally event"))?;
    let mut entries: BTreeMap<SubmissionId, Replayed> = BTreeMap::new();
    for event in trace.events.iter().take_while(|e| e.step < tally.step) {
        let accepted = match event.kind {
            EventKind::BoardAccept => true,
            EventKind::BoardArchive => false,
            _ => continue,
        };
        let submission = event
            .detail
            .submission
            .ok_or_else(|| malformed(event, "board event without submission"))?;
        if accepted && event.detail.voter.is_none() {
            return Err(malformed(event, "accept event without voter"));
        }
        let entry = entries.entry(submission).or_insert(Replayed {
            voter: None,
            session: None,
            ballot: None,
            accepted,
            accept_step: None,
        });
        entry.accepted = accepted;
        entry.voter = event.detail.voter.clone().or(entry.voter.take());
        entry.session = event.detail.session.clone().or(entry.session.take());
        entry.ballot = event.detail.ballot.or(entry.ballot);
        if accepted {
            entry.accept_step = Some(event.step);
        }
    }
    Ok(TallyView { tally, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    Eligibility,
    NonReusability,
    StrongNonReusability,
}

impl Property {
    pub const ALL: [Property; 3] = [
        Property::Eligibility,
        Property::NonReusability,
        Property::StrongNonReusability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Property::Eligibility => "eligibility",
            Property::NonReusability => "non-reusability",
            Property::StrongNonReusability => "strong-non-reusability",
        }
    }
}

/// `witness_steps` is empty exactly when the property holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub property: Property,
    pub holds: bool,
    pub witness_steps: Vec<u64>,
}

impl Verdict {
    fn from_witness(property: Property, mut witness_steps: Vec<u64>) -> Self {
        witness_steps.sort_unstable();
        witness_steps.dedup();
        Self {
            property,
            holds: witness_steps.is_empty(),
            witness_steps,
        }
    }

    pub fn witness<'t>(&self, trace: &'t Trace) -> Vec<&'t Event> {
        self.witness_steps
            .iter()
            .filter_map(|&s| trace.event(s))
            .collect()
    }
}

/// Choices are only made by voters: every accepted ballot belongs to someone
/// on the roll.
pub fn check_eligibility(trace: &Trace, roll: &BTreeSet<String>) -> Result<Verdict, TraceError> {
    let mut witness = Vec::new();
    for event in trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::BoardAccept)
    {
        let voter = event
            .detail
            .voter
            .as_ref()
            .ok_or_else(|| malformed(event, "accept event without voter"))?;
        if !roll.contains(voter) {
            witness.push(event.step);
        }
    }
    Ok(Verdict::from_witness(Property::Eligibility, witness))
}

/// Only one choice of each voter has influence: at tally time no voter has
/// more than one accepted entry.
pub fn check_non_reusability(trace: &Trace) -> Result<Verdict, TraceError> {
    let view = replay_to_tally(trace)?;
    let mut witness = Vec::new();
    for accepted in view.accepted_by_voter().values() {
        if accepted.len() > 1 {
            witness.extend(accepted.iter().filter_map(|(_, e)| e.accept_step));
            witness.push(view.tally.step);
        }
    }
    Ok(Verdict::from_witness(Property::NonReusability, witness))
}

/// Only the last choice of each voter has influence: at tally time the
/// voter's accepted entry is the last ballot they cast while voting was
/// open. Voters with nothing accepted impose no constraint.
pub fn check_strong_non_reusability(trace: &Trace) -> Result<Verdict, TraceError> {
    let view = replay_to_tally(trace)?;
    let accepted_by_voter = view.accepted_by_voter();
    let close = trace.first(EventKind::Close).map(|e| e.step);
    let mut witness = Vec::new();
    for voter in trace.ground_truth.keys() {
        let Some(accepted) = accepted_by_voter.get(voter.as_str()) else {
            continue;
        };
        let Some(last) = trace.last_cast(voter) else {
            continue;
        };
        if accepted.len() == 1 && accepted[0].1.ballot == Some(last.ballot) {
            continue;
        }
        witness.push(last.step);
        witness.push(view.tally.step);
        witness.extend(close);
        for (submission, entry) in accepted {
            let Some(accept_step) = entry.accept_step else {
                continue;
            };
            witness.push(accept_step);
            witness.extend(causes_of_accept(trace, *submission, entry, accept_step));
        }
        witness.extend(
            trace
                .events
                .iter()
                .filter(|e| {
                    e.kind == EventKind::BoardArchive
                        && e.step < view.tally.step
                        && e.detail.ballot == Some(last.ballot)
                })
                .map(|e| e.step),
        );
    }
    Ok(Verdict::from_witness(
        Property::StrongNonReusability,
        witness,
    ))
}

/// The deliveries that led to an accept: the latest token forward for the
/// entry's session and the latest introspection response for the submission.
fn causes_of_accept(
    trace: &Trace,
    submission: SubmissionId,
    entry: &Replayed,
    accept_step: u64,
) -> Vec<u64> {
    let before = || {
        trace
            .events
            .iter()
            .rev()
            .skip_while(move |e| e.step >= accept_step)
            .filter(|e| e.kind == EventKind::Deliver)
    };
    let response = before().find(|e| {
        e.detail.payload == Some(PayloadKind::IntrospectResponse)
            && e.detail.submission == Some(submission)
    });
    let token = before().find(|e| {
        e.detail.payload == Some(PayloadKind::TokenForward)
            && entry.session.is_some()
            && e.detail.session == entry.session
    });
    response.into_iter().chain(token).map(|e| e.step).collect()
}

pub fn check_all(trace: &Trace, roll: &BTreeSet<String>) -> Result<Vec<Verdict>, TraceError> {
    Ok(vec![
        check_eligibility(trace, roll)?,
        check_non_reusability(trace)?,
        check_strong_non_reusability(trace)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyOutcome {
    Verified,
    Mismatch,
    Absent,
}

impl VerifyOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            VerifyOutcome::Verified => "verified",
            VerifyOutcome::Mismatch => "mismatch",
            VerifyOutcome::Absent => "absent",
        }
    }
}

/// The voter's individual-verifiability check against the board.
pub fn voter_verify<B: BoardLookup + ?Sized>(
    board: &B,
    voter_id: &str,
    expected: &Digest,
) -> VerifyOutcome {
    match board.lookup_voter_entry(voter_id) {
        None => VerifyOutcome::Absent,
        Some((digest, _)) if digest == *expected => VerifyOutcome::Verified,
        Some(_) => VerifyOutcome::Mismatch,
    }
}

/// Published tally against two recounts over the ground truth: the
/// plaintexts of the entries accepted at tally, and the plaintexts of each
/// counted voter's last cast ballot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyCheck {
    pub published: u64,
    pub accepted_recount: u64,
    pub last_cast_recount: u64,
}

impl TallyCheck {
    pub fn matches_intent(&self) -> bool {
        self.published == self.last_cast_recount
    }

    pub fn matches_board(&self) -> bool {
        self.published == self.accepted_recount
    }
}

pub fn tally_check(trace: &Trace) -> Result<TallyCheck, TraceError> {
    let view = replay_to_tally(trace)?;
    let published = view
        .tally
        .detail
        .result
        .ok_or_else(|| malformed(view.tally, "tally event without result"))?;
    let plaintexts: BTreeMap<Digest, u64> = trace
        .ground_truth
        .values()
        .flatten()
        .map(|c| (c.ballot, c.plaintext))
        .collect();
    let mut accepted_recount = 0;
    let mut last_cast_recount = 0;
    for (voter, accepted) in view.accepted_by_voter() {
        for (_, entry) in &accepted {
            let plaintext =
                entry
                    .ballot
                    .and_then(|d| plaintexts.get(&d))
                    .ok_or(TraceError::Incomplete(
                        "accepted ballot missing from ground truth",
                    ))?;
            accepted_recount += plaintext;
        }
        if let Some(last) = trace.last_cast(voter) {
            last_cast_recount += last.plaintext;
        }
    }
    Ok(TallyCheck {
        published,
        accepted_recount,
        last_cast_recount,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{Detail, Principal};

    /// Hand-built transcript: alice casts b0 then b1; b1 is accepted, then a
    /// late validation accepts b0 and archives b1.
    struct Builder {
        events: Vec<Event>,
    }

    fn digest(n: u8) -> Digest {
        Digest([n; 32])
    }

    impl Builder {
        fn new() -> Self {
            Self { events: Vec::new() }
        }

        fn push(&mut self, kind: EventKind, detail: Detail) -> u64 {
            let step = self.events.len() as u64;
            self.events.push(Event {
                step,
                clock: step,
                kind,
                from: None,
                to: None,
                payload_digest: None,
                detail,
            });
            step
        }

        fn cast(&mut self, voter: &str, index: u64, ballot: u8, plaintext: u64) -> u64 {
            self.push(
                EventKind::Send,
                Detail {
                    payload: Some(PayloadKind::BallotSubmission),
                    voter: Some(voter.into()),
                    session: Some(format!("{voter}/{index}")),
                    cast_index: Some(index),
                    plaintext: Some(plaintext),
                    ballot: Some(digest(ballot)),
                    ..Detail::default()
                },
            )
        }

        fn token(&mut self, voter: &str, index: u64) -> u64 {
            self.push(
                EventKind::Deliver,
                Detail {
                    payload: Some(PayloadKind::TokenForward),
                    session: Some(format!("{voter}/{index}")),
                    ..Detail::default()
                },
            )
        }

        fn board(&mut self, kind: EventKind, voter: &str, index: u64, sub: u64, ballot: u8) -> u64 {
            if kind == EventKind::BoardAccept {
                self.push(
                    EventKind::Deliver,
                    Detail {
                        payload: Some(PayloadKind::IntrospectResponse),
                        submission: Some(SubmissionId(sub)),
                        ..Detail::default()
                    },
                );
            }
            self.push(
                kind,
                Detail {
                    voter: Some(voter.into()),
                    session: Some(format!("{voter}/{index}")),
                    submission: Some(SubmissionId(sub)),
                    ballot: Some(digest(ballot)),
                    ..Detail::default()
                },
            )
        }

        fn close(&mut self) -> u64 {
            self.push(EventKind::Close, Detail::default())
        }

        fn tally(&mut self, result: u64) -> u64 {
            self.push(
                EventKind::Tally,
                Detail {
                    result: Some(result),
                    ..Detail::default()
                },
            )
        }

        fn trace(self) -> Trace {
            Trace::new(self.events).unwrap()
        }
    }

    fn roll() -> BTreeSet<String> {
        ["alice", "bob"].into_iter().map(String::from).collect()
    }

    fn honest_revote() -> Trace {
        let mut b = Builder::new();
        b.cast("alice", 0, 10, 0);
        b.token("alice", 0);
        b.board(EventKind::BoardAccept, "alice", 0, 0, 10);
        b.cast("alice", 1, 11, 1);
        b.token("alice", 1);
        b.board(EventKind::BoardAccept, "alice", 1, 1, 11);
        b.board(EventKind::BoardArchive, "alice", 0, 0, 10);
        b.close();
        b.tally(1);
        b.trace()
    }

    struct Attack {
        trace: Trace,
        late_token: u64,
        late_accept: u64,
    }

    fn attack() -> Attack {
        let mut b = Builder::new();
        b.cast("alice", 0, 10, 1);
        b.cast("alice", 1, 11, 0);
        b.token("alice", 1);
        b.board(EventKind::BoardAccept, "alice", 1, 1, 11);
        let late_token = b.token("alice", 0);
        let late_accept = b.board(EventKind::BoardAccept, "alice", 0, 0, 10);
        b.board(EventKind::BoardArchive, "alice", 1, 1, 11);
        b.close();
        b.tally(1);
        Attack {
            trace: b.trace(),
            late_token,
            late_accept,
        }
    }

    #[test]
    fn ground_truth_from_annotations() {
        let trace = honest_revote();
        let casts = &trace.ground_truth()["alice"];
        assert_eq!(casts.len(), 2);
        assert_eq!(trace.last_cast("alice").unwrap().ballot, digest(11));
        assert!(trace.last_cast("bob").is_none());
    }

    #[test]
    fn honest_revote_satisfies_everything() {
        let trace = honest_revote();
        for verdict in check_all(&trace, &roll()).unwrap() {
            assert!(verdict.holds, "{verdict:?}");
            assert!(verdict.witness_steps.is_empty());
        }
        assert_eq!(
            tally_check(&trace).unwrap(),
            TallyCheck {
                published: 1,
                accepted_recount: 1,
                last_cast_recount: 1
            }
        );
    }

    #[test]
    fn attack_separates_the_two_reusability_notions() {
        let Attack {
            trace,
            late_token,
            late_accept,
        } = attack();
        assert!(check_eligibility(&trace, &roll()).unwrap().holds);
        assert!(check_non_reusability(&trace).unwrap().holds);
        let strong = check_strong_non_reusability(&trace).unwrap();
        assert!(!strong.holds);
        assert!(strong.witness_steps.contains(&late_token));
        assert!(strong.witness_steps.contains(&late_accept));
        let check = tally_check(&trace).unwrap();
        assert!(check.matches_board());
        assert!(!check.matches_intent());
    }

    #[test]
    fn witnesses_replay_to_the_same_violation() {
        let Attack { trace, .. } = attack();
        let strong = check_strong_non_reusability(&trace).unwrap();
        let replay = trace.subsequence(&strong.witness_steps).unwrap();
        assert!(!check_strong_non_reusability(&replay).unwrap().holds);

        let mut b = Builder::new();
        b.cast("alice", 0, 10, 1);
        b.board(EventKind::BoardAccept, "alice", 0, 0, 10);
        b.cast("alice", 1, 11, 1);
        b.board(EventKind::BoardAccept, "alice", 1, 1, 11);
        b.board(EventKind::BoardAccept, "mallory", 0, 2, 12);
        b.tally(3);
        let trace = b.trace();
        for verdict in check_all(&trace, &roll()).unwrap() {
            assert!(!verdict.holds, "{verdict:?}");
            let replay = trace.subsequence(&verdict.witness_steps).unwrap();
            let again = match verdict.property {
                Property::Eligibility => check_eligibility(&replay, &roll()),
                Property::NonReusability => check_non_reusability(&replay),
                Property::StrongNonReusability => check_strong_non_reusability(&replay),
            }
            .unwrap();
            assert!(!again.holds, "{:?}", verdict.property);
        }
    }

    #[test]
    fn injected_unregistered_accept_is_flagged() {
        let mut b = Builder::new();
        b.cast("alice", 0, 10, 1);
        b.board(EventKind::BoardAccept, "alice", 0, 0, 10);
        let forged = b.board(EventKind::BoardAccept, "mallory", 0, 1, 12);
        b.tally(2);
        let verdict = check_eligibility(&b.trace(), &roll()).unwrap();
        assert!(!verdict.holds);
        assert_eq!(verdict.witness_steps, vec![forged]);
    }

    #[test]
    fn injected_double_accept_is_flagged() {
        let mut b = Builder::new();
        b.cast("alice", 0, 10, 1);
        let first = b.board(EventKind::BoardAccept, "alice", 0, 0, 10);
        b.cast("alice", 1, 11, 0);
        let second = b.board(EventKind::BoardAccept, "alice", 1, 1, 11);
        let tally = b.tally(1);
        let trace = b.trace();
        let verdict = check_non_reusability(&trace).unwrap();
        assert_eq!(verdict.witness_steps, vec![first, second, tally]);
        assert!(!check_strong_non_reusability(&trace).unwrap().holds);
    }

    #[test]
    fn incomplete_and_malformed_traces() {
        let mut b = Builder::new();
        b.cast("alice", 0, 10, 1);
        let trace = b.trace();
        assert_eq!(
            check_non_reusability(&trace),
            Err(TraceError::Incomplete("no tally event"))
        );
        assert!(check_strong_non_reusability(&trace).is_err());
        assert!(check_eligibility(&trace, &roll()).unwrap().holds);

        let mut b = Builder::new();
        b.push(EventKind::BoardAccept, Detail::default());
        assert!(matches!(
            check_eligibility(&b.trace(), &roll()),
            Err(TraceError::Malformed { step: 0, .. })
        ));

        let mut b = Builder::new();
        b.cast("alice", 0, 10, 1);
        b.cast("alice", 1, 11, 1);
        b.events.swap(0, 1);
        assert!(matches!(
            Trace::new(b.events),
            Err(TraceError::Malformed { .. })
        ));
    }

    #[test]
    fn casts_after_close_do_not_count_as_choices() {
        let mut b = Builder::new();
        b.cast("alice", 0, 10, 1);
        b.board(EventKind::BoardAccept, "alice", 0, 0, 10);
        b.close();
        b.cast("alice", 1, 11, 0);
        b.tally(1);
        let trace = b.trace();
        assert_eq!(trace.last_cast("alice").unwrap().ballot, digest(10));
        assert!(check_strong_non_reusability(&trace).unwrap().holds);
    }

    #[test]
    fn fully_rejected_voter_imposes_no_constraint() {
        let mut b = Builder::new();
        b.cast("alice", 0, 10, 1);
        b.cast("bob", 0, 20, 1);
        b.board(EventKind::BoardAccept, "bob", 0, 1, 20);
        b.tally(1);
        assert!(check_strong_non_reusability(&b.trace()).unwrap().holds);
    }

    #[test]
    fn predicates_are_pure() {
        let Attack { trace, .. } = attack();
        assert_eq!(check_all(&trace, &roll()), check_all(&trace, &roll()));
    }

    #[test]
    fn verdict_json_shape() {
        let Attack { trace, .. } = attack();
        let verdict = check_strong_non_reusability(&trace).unwrap();
        let json = serde_json::to_value(&verdict).unwrap();
        assert_eq!(json["property"], "strong-non-reusability");
        assert_eq!(json["holds"], false);
        assert!(json["witness_steps"].as_array().unwrap().len() >= 3);
    }

    struct FixedBoard(Option<Digest>);

    impl BoardLookup for FixedBoard {
        fn lookup_voter_entry(&self, _: &str) -> Option<(Digest, crate::board::EntryStatus)> {
            self.0.map(|d| (d, crate::board::EntryStatus::Accepted))
        }
    }

    #[test]
    fn voter_verify_outcomes() {
        assert_eq!(
            voter_verify(&FixedBoard(Some(digest(1))), "a", &digest(1)),
            VerifyOutcome::Verified
        );
        assert_eq!(
            voter_verify(&FixedBoard(Some(digest(2))), "a", &digest(1)),
            VerifyOutcome::Mismatch
        );
        assert_eq!(
            voter_verify(&FixedBoard(None), "a", &digest(1)),
            VerifyOutcome::Absent
        );
    }

    #[test]
    fn from_and_to_are_ignored_by_predicates() {
        let Attack { trace, .. } = attack();
        let mut events = trace.events().to_vec();
        for e in &mut events {
            e.from = Some(Principal::Board);
        }
        let rewritten = Trace::new(events).unwrap();
        assert_eq!(check_all(&trace, &roll()), check_all(&rewritten, &roll()));
    }
}
