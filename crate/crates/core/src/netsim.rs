//! Deterministic single-threaded network with a hold/release adversary.
//!
//! Messages are delivered in FIFO order and the logical clock ticks once per
//! delivery. Adversary rules are checked when a message is sent: a matching
//! `Hold` rule parks the message until it is explicitly released, at which
//! point it rejoins the tail of the queue. The adversary cannot forge, drop,
//! duplicate or modify messages.
//!
//! Every send, hold, release and delivery, plus whatever the recipients
//! report, is appended to a step-numbered event log that exports as JSON
//! lines.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authority::{AuthToken, Introspection, TokenValue};
use crate::board::SubmissionId;
use crate::crypto::{Ballot, Digest};

pub const DEFAULT_STEP_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("no deliverable messages")]
    Quiescent,
    #[error("held message {0} is unknown or already released")]
    UnknownHandle(u64),
    #[error("no quiescence after {0} deliveries")]
    Livelock(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Principal {
    Voter(String),
    Authority,
    Board,
}

impl Principal {
    pub fn voter(id: impl Into<String>) -> Self {
        Principal::Voter(id.into())
    }

    pub fn voter_id(&self) -> Option<&str> {
        match self {
            Principal::Voter(id) => Some(id),
            _ => None,
        }
    }
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Principal::Voter(id) => write!(f, "voter:{id}"),
            Principal::Authority => f.write_str("authority"),
            Principal::Board => f.write_str("board"),
        }
    }
}

impl FromStr for Principal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "authority" => Ok(Principal::Authority),
            "board" => Ok(Principal::Board),
            _ => match s.strip_prefix("voter:") {
                Some(id) if !id.is_empty() => Ok(Principal::Voter(id.to_owned())),
                _ => Err(format!("unknown principal `{s}`")),
            },
        }
    }
}

impl From<Principal> for String {
    fn from(p: Principal) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Principal {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    /// Voter to board: an encrypted choice, bound to the voter's session.
    BallotSubmission { session: String, ballot: Ballot },
    /// Voter to authority.
    AuthRequest {
        voter_id: String,
        #[serde(with = "hex::serde")]
        secret: Vec<u8>,
        session: String,
    },
    /// Authority to voter.
    TokenGrant { session: String, token: AuthToken },
    /// Voter to board.
    TokenForward { session: String, token: TokenValue },
    /// Board to authority.
    IntrospectRequest {
        submission: SubmissionId,
        token: TokenValue,
    },
    /// Authority to board.
    IntrospectResponse {
        submission: SubmissionId,
        introspection: Introspection,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    BallotSubmission,
    AuthRequest,
    TokenGrant,
    TokenForward,
    IntrospectRequest,
    IntrospectResponse,
}

impl PayloadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PayloadKind::BallotSubmission => "ballot_submission",
            PayloadKind::AuthRequest => "auth_request",
            PayloadKind::TokenGrant => "token_grant",
            PayloadKind::TokenForward => "token_forward",
            PayloadKind::IntrospectRequest => "introspect_request",
            PayloadKind::IntrospectResponse => "introspect_response",
        }
    }
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::BallotSubmission { .. } => PayloadKind::BallotSubmission,
            Payload::AuthRequest { .. } => PayloadKind::AuthRequest,
            Payload::TokenGrant { .. } => PayloadKind::TokenGrant,
            Payload::TokenForward { .. } => PayloadKind::TokenForward,
            Payload::IntrospectRequest { .. } => PayloadKind::IntrospectRequest,
            Payload::IntrospectResponse { .. } => PayloadKind::IntrospectResponse,
        }
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&serde_json::to_vec(self).expect("payload serialization is infallible"))
    }

    /// Transcript annotations that can be read off the payload itself.
    fn annotate(&self) -> Detail {
        let mut detail = Detail {
            payload: Some(self.kind()),
            ..Detail::default()
        };
        match self {
            Payload::BallotSubmission { session, ballot } => {
                detail.session = Some(session.clone());
                detail.ballot = Some(ballot.digest());
                detail.timestamp = ballot.timestamp;
            }
            Payload::AuthRequest { session, .. } | Payload::TokenForward { session, .. } => {
                detail.session = Some(session.clone());
            }
            Payload::TokenGrant { session, token } => {
                detail.session = Some(session.clone());
                detail.issued_at = Some(token.issued_at);
            }
            Payload::IntrospectRequest { submission, .. } => {
                detail.submission = Some(*submission);
            }
            Payload::IntrospectResponse {
                submission,
                introspection,
            } => {
                detail.submission = Some(*submission);
                detail.issued_at = introspection.issued_at;
            }
        }
        detail
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub seq: u64,
    pub from: Principal,
    pub to: Principal,
    pub payload: Payload,
    pub sent_at: u64,
}

/// Conjunction of optional constraints; an empty matcher matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PayloadKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<Principal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Principal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

impl Matcher {
    pub fn kind(kind: PayloadKind) -> Self {
        Self {
            kind: Some(kind),
            ..Self::default()
        }
    }

    pub fn from(mut self, principal: Principal) -> Self {
        self.from = Some(principal);
        self
    }

    pub fn to(mut self, principal: Principal) -> Self {
        self.to = Some(principal);
        self
    }

    pub fn matches(&self, msg: &Message) -> bool {
        self.kind.is_none_or(|k| k == msg.payload.kind())
            && self.from.as_ref().is_none_or(|p| *p == msg.from)
            && self.to.as_ref().is_none_or(|p| *p == msg.to)
            && self.seq.is_none_or(|s| s == msg.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleAction {
    Hold,
    Deliver,
}

/// Rules are consulted in insertion order and the first live match decides.
/// A rule stops matching once it has fired `limit` times or is retired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryRule {
    pub matcher: Matcher,
    pub action: RuleAction,
    pub limit: Option<usize>,
}

impl AdversaryRule {
    pub fn hold(matcher: Matcher) -> Self {
        Self {
            matcher,
            action: RuleAction::Hold,
            limit: None,
        }
    }

    pub fn deliver(matcher: Matcher) -> Self {
        Self {
            matcher,
            action: RuleAction::Deliver,
            limit: None,
        }
    }

    pub fn limit(mut self, limit: usize) -> Self {
        self.limit = Some(limit);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleId(pub usize);

#[derive(Debug)]
struct RuleState {
    rule: AdversaryRule,
    fired: usize,
    retired: bool,
}

impl RuleState {
    fn live(&self) -> bool {
        !self.retired && self.rule.limit.is_none_or(|limit| self.fired < limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Send,
    Hold,
    Release,
    Deliver,
    BoardAccept,
    BoardArchive,
    BoardReject,
    Close,
    Tally,
    Lookup,
}

/// Per-event annotations. Which fields are set depends on the event kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detail {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<PayloadKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submission: Option<SubmissionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cast_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plaintext: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ballot: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issued_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted: Option<u64>,
}

/// One line of a transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub step: u64,
    pub clock: u64,
    pub kind: EventKind,
    pub from: Option<Principal>,
    pub to: Option<Principal>,
    pub payload_digest: Option<Digest>,
    pub detail: Detail,
}

/// Something a principal reports about its own state change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub kind: EventKind,
    pub from: Option<Principal>,
    pub to: Option<Principal>,
    pub payload_digest: Option<Digest>,
    pub detail: Detail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub from: Principal,
    pub to: Principal,
    pub payload: Payload,
    /// Extra annotations for the send event, e.g. the harness's ground truth.
    pub note: Detail,
}

impl Outgoing {
    pub fn new(from: Principal, to: Principal, payload: Payload) -> Self {
        Self {
            from,
            to,
            payload,
            note: Detail::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reaction {
    pub observations: Vec<Observation>,
    pub sends: Vec<Outgoing>,
}

impl Reaction {
    pub fn send(&mut self, outgoing: Outgoing) {
        self.sends.push(outgoing);
    }

    pub fn observe(&mut self, observation: Observation) {
        self.observations.push(observation);
    }
}

/// The principals behind the network. Handlers run synchronously and may not
/// call back into the scheduler; they express follow-up traffic through the
/// returned [`Reaction`].
pub trait Handler {
    fn handle(&mut self, msg: &Message, now: u64) -> Reaction;
}

#[derive(Debug)]
struct Held {
    msg: Message,
    rule: RuleId,
}

pub struct Network<H> {
    handler: H,
    clock: u64,
    next_seq: u64,
    queue: VecDeque<Message>,
    held: BTreeMap<u64, Held>,
    rules: Vec<RuleState>,
    events: Vec<Event>,
    step_budget: usize,
}

impl<H: Handler> Network<H> {
    pub fn new(handler: H) -> Self {
        Self {
            handler,
            clock: 0,
            next_seq: 0,
            queue: VecDeque::new(),
            held: BTreeMap::new(),
            rules: Vec::new(),
            events: Vec::new(),
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    pub fn with_step_budget(mut self, budget: usize) -> Self {
        self.step_budget = budget;
        self
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn handler(&self) -> &H {
        &self.handler
    }

    pub fn handler_mut(&mut self) -> &mut H {
        &mut self.handler
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_parts(self) -> (H, Vec<Event>) {
        (self.handler, self.events)
    }

    pub fn queued(&self) -> impl Iterator<Item = &Message> {
        self.queue.iter()
    }

    /// Handles of held messages, in hold order.
    pub fn held(&self) -> Vec<u64> {
        self.held.keys().copied().collect()
    }

    pub fn held_message(&self, handle: u64) -> Option<&Message> {
        self.held.get(&handle).map(|h| &h.msg)
    }

    pub fn held_by(&self, rule: RuleId) -> Vec<u64> {
        self.held
            .iter()
            .filter(|(_, h)| h.rule == rule)
            .map(|(&handle, _)| handle)
            .collect()
    }

    pub fn add_rule(&mut self, rule: AdversaryRule) -> RuleId {
        self.rules.push(RuleState {
            rule,
            fired: 0,
            retired: false,
        });
        RuleId(self.rules.len() - 1)
    }

    /// Stops the rule from matching new traffic. Already held messages stay
    /// held until released.
    pub fn retire_rule(&mut self, rule: RuleId) {
        if let Some(state) = self.rules.get_mut(rule.0) {
            state.retired = true;
        }
    }

    fn record(
        &mut self,
        kind: EventKind,
        from: Option<Principal>,
        to: Option<Principal>,
        payload_digest: Option<Digest>,
        detail: Detail,
    ) -> &Event {
        let step = self.events.len() as u64;
        self.events.push(Event {
            step,
            clock: self.clock,
            kind,
            from,
            to,
            payload_digest,
            detail,
        });
        self.events.last().expect("just pushed")
    }

    fn record_message(&mut self, kind: EventKind, msg: &Message) -> Event {
        let detail = Detail {
            seq: Some(msg.seq),
            ..msg.payload.annotate()
        };
        self.record(
            kind,
            Some(msg.from.clone()),
            Some(msg.to.clone()),
            Some(msg.payload.digest()),
            detail,
        )
        .clone()
    }

    /// Enqueues a message, or diverts it to the held set when a live `Hold`
    /// rule matches. Returns the message's sequence number.
    pub fn send(&mut self, outgoing: Outgoing) -> u64 {
        let msg = Message {
            seq: self.next_seq,
            from: outgoing.from,
            to: outgoing.to,
            payload: outgoing.payload,
            sent_at: self.clock,
        };
        self.next_seq += 1;

        let annotations = msg.payload.annotate();
        let detail = Detail {
            seq: Some(msg.seq),
            payload: annotations.payload,
            session: annotations.session,
            submission: annotations.submission,
            ballot: annotations.ballot,
            timestamp: annotations.timestamp,
            issued_at: annotations.issued_at,
            ..outgoing.note
        };
        self.record(
            EventKind::Send,
            Some(msg.from.clone()),
            Some(msg.to.clone()),
            Some(msg.payload.digest()),
            detail,
        );

        let decision = self
            .rules
            .iter_mut()
            .enumerate()
            .find(|(_, state)| state.live() && state.rule.matcher.matches(&msg))
            .map(|(ix, state)| {
                state.fired += 1;
                (RuleId(ix), state.rule.action)
            });
        let seq = msg.seq;
        match decision {
            Some((rule, RuleAction::Hold)) => {
                self.record_message(EventKind::Hold, &msg);
                self.held.insert(seq, Held { msg, rule });
            }
            _ => self.queue.push_back(msg),
        }
        seq
    }

    /// Records principal-reported events, then sends the follow-up traffic.
    pub fn apply(&mut self, reaction: Reaction) {
        for obs in reaction.observations {
            self.observe(obs);
        }
        for outgoing in reaction.sends {
            self.send(outgoing);
        }
    }

    pub fn observe(&mut self, obs: Observation) -> &Event {
        self.record(obs.kind, obs.from, obs.to, obs.payload_digest, obs.detail)
    }

    /// Delivers the head of the queue, ticking the clock. Held messages are
    /// never chosen.
    pub fn deliver_next(&mut self) -> Result<Event, NetError> {
        let msg = self.queue.pop_front().ok_or(NetError::Quiescent)?;
        self.clock += 1;
        let event = self.record_message(EventKind::Deliver, &msg);
        let reaction = self.handler.handle(&msg, self.clock);
        self.apply(reaction);
        Ok(event)
    }

    /// Moves a held message to the tail of the queue.
    pub fn release(&mut self, handle: u64) -> Result<(), NetError> {
        let held = self
            .held
            .remove(&handle)
            .ok_or(NetError::UnknownHandle(handle))?;
        self.record_message(EventKind::Release, &held.msg);
        self.queue.push_back(held.msg);
        Ok(())
    }

    /// Delivers until the message with sequence number `seq` has been
    /// delivered.
    pub fn deliver_through(&mut self, seq: u64) -> Result<(), NetError> {
        for _ in 0..self.step_budget {
            let event = self.deliver_next()?;
            if event.detail.seq == Some(seq) {
                return Ok(());
            }
        }
        Err(NetError::Livelock(self.step_budget))
    }

    /// Delivers until the queue drains. Held messages do not block
    /// quiescence.
    pub fn run_until_quiescent(&mut self) -> Result<&[Event], NetError> {
        for _ in 0..self.step_budget {
            match self.deliver_next() {
                Ok(_) => {}
                Err(NetError::Quiescent) => return Ok(&self.events),
                Err(e) => return Err(e),
            }
        }
        if self.queue.is_empty() {
            Ok(&self.events)
        } else {
            Err(NetError::Livelock(self.step_budget))
        }
    }
}

// ---------------------------------------------------------------------------
// JSON-lines transcripts
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_jsonl<W: Write>(events: &[Event], mut out: W) -> io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(events: &[Event]) -> String {
    let mut out = Vec::new();
    write_jsonl(events, &mut out).expect("writing to a Vec cannot fail");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

/// Parses a transcript; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Event>, TranscriptError> {
    let mut events = Vec::new();
    for (ix, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|source| TranscriptError::Parse {
            line: ix + 1,
            source,
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn parse_jsonl(input: &str) -> Result<Vec<Event>, TranscriptError> {
    read_jsonl(input.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Records deliveries and never replies.
    #[derive(Default)]
    struct Sink {
        delivered: Vec<Message>,
    }

    impl Handler for Sink {
        fn handle(&mut self, msg: &Message, _now: u64) -> Reaction {
            self.delivered.push(msg.clone());
            Reaction::default()
        }
    }

    /// Bounces every message straight back: never quiesces.
    struct PingPong;

    impl Handler for PingPong {
        fn handle(&mut self, msg: &Message, _now: u64) -> Reaction {
            let mut reaction = Reaction::default();
            reaction.send(Outgoing::new(
                msg.to.clone(),
                msg.from.clone(),
                msg.payload.clone(),
            ));
            reaction
        }
    }

    fn forward(voter: &str, n: u8) -> Outgoing {
        Outgoing::new(
            Principal::voter(voter),
            Principal::Board,
            Payload::TokenForward {
                session: format!("{voter}/{n}"),
                token: TokenValue(vec![n; 16]),
            },
        )
    }

    fn auth(voter: &str) -> Outgoing {
        Outgoing::new(
            Principal::voter(voter),
            Principal::Authority,
            Payload::AuthRequest {
                voter_id: voter.into(),
                secret: b"s".to_vec(),
                session: format!("{voter}/0"),
            },
        )
    }

    fn kinds(net: &Network<Sink>) -> Vec<EventKind> {
        net.events().iter().map(|e| e.kind).collect()
    }

    #[test]
    fn principal_strings() {
        for p in [
            Principal::voter("alice"),
            Principal::Authority,
            Principal::Board,
        ] {
            assert_eq!(p.to_string().parse::<Principal>(), Ok(p));
        }
        assert!("voter:".parse::<Principal>().is_err());
        assert!("mallory".parse::<Principal>().is_err());
    }

    #[test]
    fn passthrough_without_rules() {
        let mut net = Network::new(Sink::default());
        net.send(forward("alice", 0));
        assert_eq!(net.queued().count(), 1);
        assert!(net.held().is_empty());
        assert_eq!(kinds(&net), [EventKind::Send]);
    }

    #[test]
    fn hold_rule_matches_by_kind_and_sender() {
        let mut net = Network::new(Sink::default());
        net.add_rule(AdversaryRule::hold(
            Matcher::kind(PayloadKind::TokenForward).from(Principal::voter("alice")),
        ));
        let held = net.send(forward("alice", 0));
        net.send(forward("bob", 0));
        net.send(auth("alice"));
        assert_eq!(net.held(), vec![held]);
        assert_eq!(net.queued().count(), 2);
        assert_eq!(
            kinds(&net),
            [
                EventKind::Send,
                EventKind::Hold,
                EventKind::Send,
                EventKind::Send
            ]
        );
    }

    #[test]
    fn first_live_rule_decides_and_limits_expire() {
        let mut net = Network::new(Sink::default());
        net.add_rule(AdversaryRule::deliver(
            Matcher::default().from(Principal::voter("bob")),
        ));
        net.add_rule(AdversaryRule::hold(Matcher::kind(PayloadKind::TokenForward)).limit(1));
        net.send(forward("bob", 0));
        let held = net.send(forward("alice", 0));
        net.send(forward("alice", 1));
        assert_eq!(net.held(), vec![held]);
    }

    #[test]
    fn deliver_ticks_clock_in_fifo_order() {
        let mut net = Network::new(Sink::default());
        let a = net.send(forward("alice", 0));
        let b = net.send(forward("bob", 0));
        let c = net.send(auth("carol"));
        assert_eq!(net.clock(), 0);
        net.deliver_next().unwrap();
        assert_eq!(net.clock(), 1);
        net.run_until_quiescent().unwrap();
        assert_eq!(net.clock(), 3);
        let order: Vec<_> = net.handler().delivered.iter().map(|m| m.seq).collect();
        assert_eq!(order, [a, b, c]);
        assert_eq!(net.deliver_next(), Err(NetError::Quiescent));
    }

    #[test]
    fn released_message_goes_to_the_tail() {
        let mut net = Network::new(Sink::default());
        net.add_rule(AdversaryRule::hold(Matcher::kind(PayloadKind::TokenForward)).limit(1));
        let token = net.send(forward("alice", 0));
        let before = net.held_message(token).unwrap().payload.digest();
        let other = net.send(auth("alice"));
        net.run_until_quiescent().unwrap();
        assert_eq!(
            net.handler().delivered.len(),
            1,
            "held messages never delivered"
        );
        let late = net.send(auth("bob"));
        net.release(token).unwrap();
        net.run_until_quiescent().unwrap();
        let delivered = &net.handler().delivered;
        let order: Vec<_> = delivered.iter().map(|m| m.seq).collect();
        assert_eq!(order, [other, late, token]);
        assert_eq!(delivered[2].payload.digest(), before);
        assert_eq!(net.release(token), Err(NetError::UnknownHandle(token)));
    }

    #[test]
    fn immediate_release_with_empty_queue() {
        let mut net = Network::new(Sink::default());
        net.add_rule(AdversaryRule::hold(Matcher::default()));
        let seq = net.send(forward("alice", 0));
        net.release(seq).unwrap();
        let event = net.deliver_next().unwrap();
        assert_eq!(event.detail.seq, Some(seq));
        assert_eq!(event.kind, EventKind::Deliver);
    }

    #[test]
    fn held_messages_do_not_block_quiescence() {
        let mut net = Network::new(Sink::default());
        net.add_rule(AdversaryRule::hold(Matcher::kind(
            PayloadKind::TokenForward,
        )));
        net.send(forward("alice", 0));
        net.send(auth("alice"));
        assert!(net.run_until_quiescent().is_ok());
        assert_eq!(net.held().len(), 1);
    }

    #[test]
    fn livelock_is_reported() {
        let mut net = Network::new(PingPong).with_step_budget(50);
        net.send(forward("alice", 0));
        assert_eq!(
            net.run_until_quiescent().unwrap_err(),
            NetError::Livelock(50)
        );
        assert_eq!(net.clock(), 50);
    }

    #[test]
    fn retired_rules_stop_matching() {
        let mut net = Network::new(Sink::default());
        let rule = net.add_rule(AdversaryRule::hold(Matcher::default()));
        let first = net.send(forward("alice", 0));
        net.retire_rule(rule);
        net.send(forward("alice", 1));
        assert_eq!(net.held_by(rule), vec![first]);
        assert_eq!(net.queued().count(), 1);
    }

    #[test]
    fn deliver_through_stops_after_target() {
        let mut net = Network::new(Sink::default());
        net.send(auth("a"));
        let target = net.send(auth("b"));
        net.send(auth("c"));
        net.deliver_through(target).unwrap();
        assert_eq!(net.queued().count(), 1);
        assert_eq!(net.deliver_through(99), Err(NetError::Quiescent));
    }

    #[test]
    fn transcript_roundtrip() {
        let mut net = Network::new(Sink::default());
        net.add_rule(AdversaryRule::hold(Matcher::kind(
            PayloadKind::TokenForward,
        )));
        let held = net.send(forward("alice", 0));
        net.send(auth("alice"));
        net.run_until_quiescent().unwrap();
        net.release(held).unwrap();
        net.run_until_quiescent().unwrap();
        let text = to_jsonl(net.events());
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(r#"{"step":0,"clock":0,"kind":"send","from":"voter:alice","to":"board","payload_digest":""#), "{first}");
        let parsed = parse_jsonl(&text).unwrap();
        assert_eq!(parsed, net.events());
        assert!(matches!(
            parse_jsonl("{\"step\":0}\n"),
            Err(TranscriptError::Parse { line: 1, .. })
        ));
    }
}
