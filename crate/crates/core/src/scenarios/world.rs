use std::collections::BTreeMap;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;

use crate::authority::{Authority, TokenValue, TOKEN_BYTES};
use crate::board::{AcceptDecision, ArchivePolicy, Board, BoardLookup, Phase, SubmissionId};
use crate::crypto::{encrypt_choice, keygen, seeded_rng, Digest, GroupParams, KeyPair};
use crate::netsim::{
    AdversaryRule, Detail, EventKind, Handler, Message, NetError, Network, Observation, Outgoing,
    Payload, Principal, Reaction, RuleId,
};
use crate::properties::{check_all, voter_verify, Trace, VerifyOutcome};

use super::{ConfigError, ScenarioConfig, ScenarioError, ScenarioRun, VoterAction};

/// The server side of the election: the authority and the bulletin board.
/// Voter devices are stateless here and simply forward granted tokens.
pub struct Election {
    authority: Authority,
    board: Board,
    /// Tokens that reached the board before their ballot did, by session.
    parked: BTreeMap<String, Vec<TokenValue>>,
}

fn board_event(kind: EventKind, detail: Detail) -> Observation {
    Observation {
        kind,
        from: Some(Principal::Board),
        to: None,
        payload_digest: None,
        detail,
    }
}

impl Election {
    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn authority(&self) -> &Authority {
        &self.authority
    }

    fn reject(
        out: &mut Reaction,
        reason: &str,
        session: Option<&str>,
        submission: Option<SubmissionId>,
    ) {
        out.observe(board_event(
            EventKind::BoardReject,
            Detail {
                reason: Some(reason.to_owned()),
                session: session.map(str::to_owned),
                submission,
                ..Detail::default()
            },
        ));
    }

    fn relay_token(&mut self, out: &mut Reaction, submission: SubmissionId, token: TokenValue) {
        match self.board.submit_token(submission, token) {
            Ok(req) => out.send(Outgoing::new(
                Principal::Board,
                Principal::Authority,
                Payload::IntrospectRequest {
                    submission: req.submission,
                    token: req.token,
                },
            )),
            Err(e) => Self::reject(out, e.tag(), None, Some(submission)),
        }
    }

    fn entry_detail(&self, submission: SubmissionId) -> Detail {
        let entry = self
            .board
            .entry(submission)
            .expect("decision names a known entry");
        Detail {
            voter: entry.voter_id.clone(),
            session: Some(entry.session.clone()),
            submission: Some(submission),
            ballot: Some(entry.ballot.digest()),
            timestamp: entry.ballot.timestamp,
            issued_at: entry.auth_issued_at,
            ..Detail::default()
        }
    }

    fn on_board(&mut self, payload: &Payload, now: u64, out: &mut Reaction) {
        match payload {
            Payload::BallotSubmission { session, ballot } => {
                match self.board.submit_ballot(session, ballot.clone()) {
                    Ok(submission) => {
                        for token in self.parked.remove(session).unwrap_or_default() {
                            self.relay_token(out, submission, token);
                        }
                    }
                    Err(e) => Self::reject(out, e.tag(), Some(session), None),
                }
            }
            Payload::TokenForward { session, token } => {
                match self.board.submission_for_session(session) {
                    Some(submission) => self.relay_token(out, submission, token.clone()),
                    None if self.board.phase() == Phase::Open => {
                        self.parked
                            .entry(session.clone())
                            .or_default()
                            .push(token.clone());
                    }
                    None => Self::reject(out, "closed", Some(session), None),
                }
            }
            Payload::IntrospectResponse {
                submission,
                introspection,
            } => match self
                .board
                .process_validation(*submission, introspection, now)
            {
                Ok(AcceptDecision::Accepted { archived, .. }) => {
                    out.observe(board_event(
                        EventKind::BoardAccept,
                        self.entry_detail(*submission),
                    ));
                    if let Some(old) = archived {
                        let detail = Detail {
                            reason: Some("superseded".into()),
                            ..self.entry_detail(old)
                        };
                        out.observe(board_event(EventKind::BoardArchive, detail));
                    }
                }
                Ok(AcceptDecision::Outdated { .. }) => {
                    let detail = Detail {
                        reason: Some("outdated".into()),
                        ..self.entry_detail(*submission)
                    };
                    out.observe(board_event(EventKind::BoardArchive, detail));
                }
                Ok(AcceptDecision::Deferred) => {}
                Ok(AcceptDecision::Rejected(reason)) => {
                    let session = self.board.entry(*submission).map(|e| e.session.clone());
                    Self::reject(out, reason.as_str(), session.as_deref(), Some(*submission));
                }
                Err(e) => Self::reject(out, e.tag(), None, Some(*submission)),
            },
            _ => {}
        }
    }

    fn on_authority(&mut self, msg: &Message, now: u64, out: &mut Reaction) {
        match &msg.payload {
            Payload::AuthRequest {
                voter_id,
                secret,
                session,
            } => {
                // Failed logins get no reply.
                if let Ok(token) = self.authority.authenticate(voter_id, secret, now) {
                    out.send(Outgoing::new(
                        Principal::Authority,
                        msg.from.clone(),
                        Payload::TokenGrant {
                            session: session.clone(),
                            token,
                        },
                    ));
                }
            }
            Payload::IntrospectRequest { submission, token } => out.send(Outgoing::new(
                Principal::Authority,
                Principal::Board,
                Payload::IntrospectResponse {
                    submission: *submission,
                    introspection: self.authority.introspect(token, now),
                },
            )),
            _ => {}
        }
    }
}

impl Handler for Election {
    fn handle(&mut self, msg: &Message, now: u64) -> Reaction {
        let mut out = Reaction::default();
        match &msg.to {
            Principal::Board => self.on_board(&msg.payload, now, &mut out),
            Principal::Authority => self.on_authority(msg, now, &mut out),
            Principal::Voter(_) => {
                if let Payload::TokenGrant { session, token } = &msg.payload {
                    out.send(Outgoing::new(
                        msg.to.clone(),
                        Principal::Board,
                        Payload::TokenForward {
                            session: session.clone(),
                            token: token.token_value.clone(),
                        },
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug)]
struct VoterState {
    secret: Vec<u8>,
    casts: u64,
    last_timestamp: Option<u64>,
    /// The last ballot cast while voting was open: what the voter expects
    /// to find on the board.
    expected: Option<Digest>,
}

fn voter_secret(seed: u64, voter: &str) -> Vec<u8> {
    let mut rng = seeded_rng(
        "voter-credential",
        &[&seed.to_be_bytes()[..], voter.as_bytes()].concat(),
    );
    let mut secret = vec![0u8; 16];
    rng.fill_bytes(&mut secret);
    secret
}

/// Step-by-step control over one election: the scenario runner and the
/// interleaving enumeration are both built on this.
pub struct Driver {
    net: Network<Election>,
    params: GroupParams,
    keys: KeyPair,
    policy: ArchivePolicy,
    voters: BTreeMap<String, VoterState>,
    rng: ChaCha20Rng,
}

impl Driver {
    /// Registers the config's voters; no casts are made yet.
    pub fn new(cfg: &ScenarioConfig, params: &GroupParams) -> Self {
        let seed = cfg.seed.to_be_bytes();
        let keys = keygen(params, &seed);
        let mut authority = Authority::new(cfg.seed);
        let mut voters = BTreeMap::new();
        for voter in &cfg.voters {
            let secret = voter_secret(cfg.seed, &voter.id);
            authority
                .register_voter(&voter.id, &secret)
                .expect("validated configs have unique voters");
            voters.insert(
                voter.id.clone(),
                VoterState {
                    secret,
                    casts: 0,
                    last_timestamp: None,
                    expected: None,
                },
            );
        }
        let board = Board::new(params.clone(), keys.pk().clone(), cfg.policy, cfg.roll());
        let election = Election {
            authority,
            board,
            parked: BTreeMap::new(),
        };
        Self {
            net: Network::new(election),
            params: params.clone(),
            keys,
            policy: cfg.policy,
            voters,
            rng: seeded_rng("ballot-randomness", &seed),
        }
    }

    pub fn network(&self) -> &Network<Election> {
        &self.net
    }

    pub fn board(&self) -> &Board {
        self.net.handler().board()
    }

    pub fn is_closed(&self) -> bool {
        self.board().phase() != Phase::Open
    }

    pub fn add_rule(&mut self, rule: AdversaryRule) -> RuleId {
        self.net.add_rule(rule)
    }

    /// Retires the rule and releases everything it held, in hold order.
    pub fn release_rule(&mut self, rule: RuleId) -> Result<(), NetError> {
        self.net.retire_rule(rule);
        for handle in self.net.held_by(rule) {
            self.net.release(handle)?;
        }
        self.run_until_quiescent()
    }

    pub fn release(&mut self, handle: u64) -> Result<(), NetError> {
        self.net.release(handle)
    }

    pub fn held(&self) -> Vec<u64> {
        self.net.held()
    }

    pub fn run_until_quiescent(&mut self) -> Result<(), NetError> {
        self.net.run_until_quiescent().map(|_| ())
    }

    /// Encrypts `choice`, sends it to the board and asks the authority for a
    /// token. Returns the ballot digest.
    pub fn cast(&mut self, voter: &str, choice: u64) -> Result<Digest, ScenarioError> {
        let now = self.net.clock();
        let open = !self.is_closed();
        let with_timestamp = self.policy == ArchivePolicy::BallotTimestamp;
        let state = self
            .voters
            .get_mut(voter)
            .ok_or_else(|| ConfigError::UnknownVoter(voter.to_owned()))?;
        // Strictly increasing per voter, so two ballots never tie.
        let timestamp =
            with_timestamp.then(|| state.last_timestamp.map_or(now, |t| now.max(t + 1)));
        let r = self.params.random_scalar(&mut self.rng);
        let ballot =
            encrypt_choice(&self.params, self.keys.pk(), choice, &r, timestamp).map_err(|_| {
                ConfigError::ChoiceOutOfRange {
                    voter: voter.to_owned(),
                    choice,
                }
            })?;
        let digest = ballot.digest();
        let index = state.casts;
        state.casts += 1;
        if timestamp.is_some() {
            state.last_timestamp = timestamp;
        }
        if open {
            state.expected = Some(digest);
        }
        let session = format!("{voter}/{index}");
        let me = Principal::voter(voter);
        let mut submission = Outgoing::new(
            me.clone(),
            Principal::Board,
            Payload::BallotSubmission {
                session: session.clone(),
                ballot,
            },
        );
        submission.note = Detail {
            voter: Some(voter.to_owned()),
            cast_index: Some(index),
            plaintext: Some(choice),
            ..Detail::default()
        };
        self.net.send(submission);
        self.net.send(Outgoing::new(
            me,
            Principal::Authority,
            Payload::AuthRequest {
                voter_id: voter.to_owned(),
                secret: state.secret.clone(),
                session,
            },
        ));
        Ok(digest)
    }

    /// An unregistered principal submits a ballot, fails to log in, and
    /// forwards a fabricated token anyway.
    pub fn intrude(&mut self, id: &str) -> Result<Digest, ScenarioError> {
        let r = self.params.random_scalar(&mut self.rng);
        let timestamp = (self.policy == ArchivePolicy::BallotTimestamp).then(|| self.net.clock());
        let ballot = encrypt_choice(&self.params, self.keys.pk(), 1, &r, timestamp)
            .expect("1 is a valid choice and r is a scalar");
        let digest = ballot.digest();
        let mut secret = vec![0u8; 16];
        self.rng.fill_bytes(&mut secret);
        let mut forged = vec![0u8; TOKEN_BYTES];
        self.rng.fill_bytes(&mut forged);
        let session = format!("{id}/0");
        let me = Principal::voter(id);
        let mut submission = Outgoing::new(
            me.clone(),
            Principal::Board,
            Payload::BallotSubmission {
                session: session.clone(),
                ballot,
            },
        );
        submission.note = Detail {
            voter: Some(id.to_owned()),
            cast_index: Some(0),
            plaintext: Some(1),
            ..Detail::default()
        };
        self.net.send(submission);
        self.net.send(Outgoing::new(
            me.clone(),
            Principal::Authority,
            Payload::AuthRequest {
                voter_id: id.to_owned(),
                secret,
                session: session.clone(),
            },
        ));
        self.net.send(Outgoing::new(
            me,
            Principal::Board,
            Payload::TokenForward {
                session,
                token: TokenValue(forged),
            },
        ));
        Ok(digest)
    }

    /// Closes voting, then lets in-flight traffic settle.
    pub fn close(&mut self) -> Result<(), ScenarioError> {
        let now = self.net.clock();
        self.net.handler_mut().board.close_voting(now)?;
        self.net
            .observe(board_event(EventKind::Close, Detail::default()));
        self.run_until_quiescent()?;
        Ok(())
    }

    pub fn tally(&mut self) -> Result<u64, ScenarioError> {
        let keys = self.keys.clone();
        let board = &mut self.net.handler_mut().board;
        let result = board.tally(&keys)?;
        let accepted = board
            .entries()
            .iter()
            .filter(|e| e.status == crate::board::EntryStatus::Accepted)
            .count() as u64;
        self.net.observe(board_event(
            EventKind::Tally,
            Detail {
                result: Some(result),
                accepted: Some(accepted),
                ..Detail::default()
            },
        ));
        Ok(result)
    }

    /// The voter looks up their accepted entry and compares it with the last
    /// ballot they cast while voting was open.
    pub fn verify(&mut self, voter: &str) -> Result<VerifyOutcome, ScenarioError> {
        let state = self
            .voters
            .get(voter)
            .ok_or_else(|| ConfigError::UnknownVoter(voter.to_owned()))?;
        let board = self.board();
        let found = board.lookup_voter_entry(voter).map(|(digest, _)| digest);
        let outcome = match (&state.expected, found) {
            (Some(expected), _) => voter_verify(board, voter, expected),
            (None, Some(_)) => VerifyOutcome::Mismatch,
            (None, None) => VerifyOutcome::Absent,
        };
        self.net.observe(Observation {
            kind: EventKind::Lookup,
            from: Some(Principal::voter(voter)),
            to: Some(Principal::Board),
            payload_digest: None,
            detail: Detail {
                voter: Some(voter.to_owned()),
                expected: state.expected,
                ballot: found,
                outcome: Some(outcome.as_str().to_owned()),
                ..Detail::default()
            },
        });
        Ok(outcome)
    }

    pub fn act(&mut self, action: &VoterAction) -> Result<(), ScenarioError> {
        match action {
            VoterAction::Verify { voter } => {
                self.verify(voter)?;
            }
            VoterAction::Recast { voter, choice } => {
                self.cast(voter, *choice)?;
                self.run_until_quiescent()?;
            }
        }
        Ok(())
    }

    pub fn finish(self, cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
        let (election, events) = self.net.into_parts();
        let trace = Trace::new(events)?;
        let roll = cfg.roll();
        let verdicts = check_all(&trace, &roll)?;
        let board = election.board.export();
        Ok(ScenarioRun {
            name: cfg.name.clone(),
            policy: cfg.policy,
            roll,
            tally: board.result.unwrap_or_default(),
            trace,
            board,
            verdicts,
        })
    }
}

impl BoardLookup for Driver {
    fn lookup_voter_entry(&self, voter_id: &str) -> Option<(Digest, crate::board::EntryStatus)> {
        self.board().lookup_voter_entry(voter_id)
    }
}
