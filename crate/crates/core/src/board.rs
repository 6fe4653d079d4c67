//! The bulletin board: pending submissions, token relay, the accept/archive
//! policy, closing, tallying, and voter lookups.
//!
//! Submissions are keyed by [`SubmissionId`] because the voter's identity is
//! only learned when the authority vouches for a token. The board is a
//! single-writer state machine; it never talks to the network itself and
//! instead returns the requests it wants relayed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authority::{Introspection, TokenValue};
use crate::crypto::{
    decrypt_tally, homomorphic_combine, verify_ballot, Ballot, CryptoError, Digest, GroupParams,
    KeyPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchivePolicy {
    /// Every newly validated submission replaces the voter's accepted one.
    Vulnerable,
    /// Keep whichever submission's token was issued last.
    TokenTimestamp,
    /// Keep whichever ballot carries the latest proof-bound timestamp.
    BallotTimestamp,
}

impl ArchivePolicy {
    pub const ALL: [ArchivePolicy; 3] = [
        ArchivePolicy::Vulnerable,
        ArchivePolicy::TokenTimestamp,
        ArchivePolicy::BallotTimestamp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchivePolicy::Vulnerable => "vulnerable",
            ArchivePolicy::TokenTimestamp => "token-timestamp",
            ArchivePolicy::BallotTimestamp => "ballot-timestamp",
        }
    }
}

impl fmt::Display for ArchivePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchivePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArchivePolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                format!("unknown policy `{s}` (expected vulnerable, token-timestamp or ballot-timestamp)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Open,
    Closed,
    Tallied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Pending,
    Accepted,
    Archived,
    /// Discarded after every relayed token came back inactive, or refused by
    /// the policy.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubmissionId(pub u64);

impl fmt::Display for SubmissionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoardEntry {
    pub submission: SubmissionId,
    pub session: String,
    /// Unknown until a token for this submission is validated.
    pub voter_id: Option<String>,
    pub ballot: Ballot,
    pub status: EntryStatus,
    pub auth_issued_at: Option<u64>,
    pub accepted_at: Option<u64>,
}

/// Request for the authority, to be carried over the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntrospectRequest {
    pub submission: SubmissionId,
    pub token: TokenValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    InactiveToken,
    MissingBallotTimestamp,
    MissingTokenTimestamp,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::InactiveToken => "inactive_token",
            RejectReason::MissingBallotTimestamp => "missing_ballot_timestamp",
            RejectReason::MissingTokenTimestamp => "missing_token_timestamp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AcceptDecision {
    /// The submission is now the voter's accepted entry; `archived` is the
    /// entry it displaced, if any.
    Accepted {
        voter_id: String,
        archived: Option<SubmissionId>,
    },
    /// The policy kept the incumbent and archived the newcomer.
    Outdated {
        voter_id: String,
        incumbent: SubmissionId,
    },
    /// Inactive token, but other relayed tokens are still outstanding.
    Deferred,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoardError {
    #[error("ballot proof does not verify")]
    InvalidProof,
    #[error("voting is closed")]
    Closed,
    #[error("session `{0}` already has a submission")]
    DuplicateSession(String),
    #[error("unknown submission {0}")]
    UnknownSubmission(SubmissionId),
    #[error("submission {0} is no longer pending")]
    NotPending(SubmissionId),
    #[error("expected phase {expected:?}, board is {actual:?}")]
    Phase { expected: Phase, actual: Phase },
    #[error("tally failed; board state is corrupted: {0}")]
    Corrupted(#[from] CryptoError),
}

impl BoardError {
    /// Short machine-readable tag, used in transcripts.
    pub fn tag(&self) -> &'static str {
        match self {
            BoardError::InvalidProof => "invalid_proof",
            BoardError::Closed => "closed",
            BoardError::DuplicateSession(_) => "duplicate_session",
            BoardError::UnknownSubmission(_) => "unknown_submission",
            BoardError::NotPending(_) => "stale_validation",
            BoardError::Phase { .. } => "phase",
            BoardError::Corrupted(_) => "corrupted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditViolation {
    InvalidProof {
        submission: SubmissionId,
    },
    MultipleAccepted {
        voter_id: String,
        submissions: Vec<SubmissionId>,
    },
    NotOnRoll {
        voter_id: String,
        submission: SubmissionId,
    },
    MissingVoter {
        submission: SubmissionId,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Read-only view used by voters checking their accepted entry.
pub trait BoardLookup {
    fn lookup_voter_entry(&self, voter_id: &str) -> Option<(Digest, EntryStatus)>;
}

#[derive(Debug, Clone)]
pub struct Board {
    params: GroupParams,
    pk: BigUint,
    policy: ArchivePolicy,
    roll: BTreeSet<String>,
    phase: Phase,
    entries: Vec<BoardEntry>,
    sessions: BTreeMap<String, SubmissionId>,
    outstanding: BTreeMap<SubmissionId, usize>,
    closed_at: Option<u64>,
    result: Option<u64>,
}

impl Board {
    pub fn new(
        params: GroupParams,
        pk: BigUint,
        policy: ArchivePolicy,
        roll: impl IntoIterator<Item = String>,
    ) -> Self {
        Self {
            params,
            pk,
            policy,
            roll: roll.into_iter().collect(),
            phase: Phase::Open,
            entries: Vec::new(),
            sessions: BTreeMap::new(),
            outstanding: BTreeMap::new(),
            closed_at: None,
            result: None,
        }
    }

    pub fn policy(&self) -> ArchivePolicy {
        self.policy
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn result(&self) -> Option<u64> {
        self.result
    }

    pub fn closed_at(&self) -> Option<u64> {
        self.closed_at
    }

    pub fn entries(&self) -> &[BoardEntry] {
        &self.entries
    }

    pub fn entry(&self, submission: SubmissionId) -> Option<&BoardEntry> {
        self.entries.get(submission.0 as usize)
    }

    pub fn submission_for_session(&self, session: &str) -> Option<SubmissionId> {
        self.sessions.get(session).copied()
    }

    pub fn accepted_entry(&self, voter_id: &str) -> Option<&BoardEntry> {
        self.entries
            .iter()
            .find(|e| e.status == EntryStatus::Accepted && e.voter_id.as_deref() == Some(voter_id))
    }

    fn entry_mut(&mut self, submission: SubmissionId) -> Result<&mut BoardEntry, BoardError> {
        self.entries
            .get_mut(submission.0 as usize)
            .ok_or(BoardError::UnknownSubmission(submission))
    }

    /// Stores a verified ballot as pending, awaiting a token.
    pub fn submit_ballot(
        &mut self,
        session: &str,
        ballot: Ballot,
    ) -> Result<SubmissionId, BoardError> {
        if self.phase != Phase::Open {
            return Err(BoardError::Closed);
        }
        if !verify_ballot(&self.params, &self.pk, &ballot) {
            return Err(BoardError::InvalidProof);
        }
        if self.sessions.contains_key(session) {
            return Err(BoardError::DuplicateSession(session.to_owned()));
        }
        let submission = SubmissionId(self.entries.len() as u64);
        self.entries.push(BoardEntry {
            submission,
            session: session.to_owned(),
            voter_id: None,
            ballot,
            status: EntryStatus::Pending,
            auth_issued_at: None,
            accepted_at: None,
        });
        self.sessions.insert(session.to_owned(), submission);
        Ok(submission)
    }

    /// Relays a token for a pending submission. Several tokens may be relayed
    /// for one submission; the first active introspection wins.
    pub fn submit_token(
        &mut self,
        submission: SubmissionId,
        token: TokenValue,
    ) -> Result<IntrospectRequest, BoardError> {
        if self.phase != Phase::Open {
            return Err(BoardError::Closed);
        }
        let entry = self.entry_mut(submission)?;
        if entry.status != EntryStatus::Pending {
            return Err(BoardError::NotPending(submission));
        }
        *self.outstanding.entry(submission).or_default() += 1;
        Ok(IntrospectRequest { submission, token })
    }

    /// Applies the archive policy to an introspection result. Validations
    /// that were already in flight are still processed after close, but not
    /// after the tally.
    pub fn process_validation(
        &mut self,
        submission: SubmissionId,
        intro: &Introspection,
        now: u64,
    ) -> Result<AcceptDecision, BoardError> {
        if self.phase == Phase::Tallied {
            return Err(BoardError::Phase {
                expected: Phase::Closed,
                actual: Phase::Tallied,
            });
        }
        let status = self.entry_mut(submission)?.status;
        if status != EntryStatus::Pending {
            return Err(BoardError::NotPending(submission));
        }
        let outstanding = self.outstanding.entry(submission).or_default();
        *outstanding = outstanding.saturating_sub(1);
        let others_outstanding = *outstanding > 0;

        let voter_id = match (&intro.active, &intro.voter_id) {
            (true, Some(voter_id)) => voter_id.clone(),
            _ if others_outstanding => return Ok(AcceptDecision::Deferred),
            _ => return Ok(self.reject(submission, RejectReason::InactiveToken)),
        };

        let newcomer_key = match self.policy {
            ArchivePolicy::Vulnerable => None,
            ArchivePolicy::TokenTimestamp => match intro.issued_at {
                Some(t) => Some(t),
                None => return Ok(self.reject(submission, RejectReason::MissingTokenTimestamp)),
            },
            ArchivePolicy::BallotTimestamp => match self.entries[submission.0 as usize]
                .ballot
                .timestamp
            {
                Some(t) => Some(t),
                None => return Ok(self.reject(submission, RejectReason::MissingBallotTimestamp)),
            },
        };

        let incumbent = self.accepted_entry(&voter_id).map(|e| e.submission);
        let newcomer_wins = match (incumbent, newcomer_key) {
            (None, _) | (_, None) => true,
            // Ties keep the incumbent.
            (Some(incumbent), Some(key)) => self
                .policy_key(incumbent)
                .is_none_or(|incumbent_key| key > incumbent_key),
        };

        self.outstanding.remove(&submission);
        let entry = &mut self.entries[submission.0 as usize];
        entry.voter_id = Some(voter_id.clone());
        entry.auth_issued_at = intro.issued_at;
        if newcomer_wins {
            entry.status = EntryStatus::Accepted;
            entry.accepted_at = Some(now);
            if let Some(old) = incumbent {
                self.entries[old.0 as usize].status = EntryStatus::Archived;
            }
            Ok(AcceptDecision::Accepted {
                voter_id,
                archived: incumbent,
            })
        } else {
            entry.status = EntryStatus::Archived;
            Ok(AcceptDecision::Outdated {
                voter_id,
                incumbent: incumbent.expect("newcomer loses only to an incumbent"),
            })
        }
    }

    fn policy_key(&self, submission: SubmissionId) -> Option<u64> {
        let entry = &self.entries[submission.0 as usize];
        match self.policy {
            ArchivePolicy::Vulnerable => None,
            ArchivePolicy::TokenTimestamp => entry.auth_issued_at,
            ArchivePolicy::BallotTimestamp => entry.ballot.timestamp,
        }
    }

    fn reject(&mut self, submission: SubmissionId, reason: RejectReason) -> AcceptDecision {
        self.outstanding.remove(&submission);
        self.entries[submission.0 as usize].status = EntryStatus::Rejected;
        AcceptDecision::Rejected(reason)
    }

    pub fn close_voting(&mut self, now: u64) -> Result<(), BoardError> {
        if self.phase != Phase::Open {
            return Err(BoardError::Phase {
                expected: Phase::Open,
                actual: self.phase,
            });
        }
        self.phase = Phase::Closed;
        self.closed_at = Some(now);
        Ok(())
    }

    /// Combines the accepted ciphertexts and decrypts the sum.
    pub fn tally(&mut self, kp: &KeyPair) -> Result<u64, BoardError> {
        if self.phase != Phase::Closed {
            return Err(BoardError::Phase {
                expected: Phase::Closed,
                actual: self.phase,
            });
        }
        let accepted: Vec<_> = self
            .entries
            .iter()
            .filter(|e| e.status == EntryStatus::Accepted)
            .map(|e| e.ballot.ct.clone())
            .collect();
        let result = if accepted.is_empty() {
            0
        } else {
            let combined = homomorphic_combine(&self.params, &accepted)?;
            decrypt_tally(&self.params, kp, &combined, accepted.len() as u64)?
        };
        self.phase = Phase::Tallied;
        self.result = Some(result);
        Ok(result)
    }

    pub fn audit_board(&self) -> AuditReport {
        let mut violations = Vec::new();
        let mut accepted_by_voter: BTreeMap<&str, Vec<SubmissionId>> = BTreeMap::new();
        for entry in &self.entries {
            if !matches!(entry.status, EntryStatus::Accepted | EntryStatus::Archived) {
                continue;
            }
            if !verify_ballot(&self.params, &self.pk, &entry.ballot) {
                violations.push(AuditViolation::InvalidProof {
                    submission: entry.submission,
                });
            }
            if entry.status != EntryStatus::Accepted {
                continue;
            }
            let Some(voter_id) = entry.voter_id.as_deref() else {
                violations.push(AuditViolation::MissingVoter {
                    submission: entry.submission,
                });
                continue;
            };
            if !self.roll.contains(voter_id) {
                violations.push(AuditViolation::NotOnRoll {
                    voter_id: voter_id.to_owned(),
                    submission: entry.submission,
                });
            }
            accepted_by_voter
                .entry(voter_id)
                .or_default()
                .push(entry.submission);
        }
        for (voter_id, submissions) in accepted_by_voter {
            if submissions.len() > 1 {
                violations.push(AuditViolation::MultipleAccepted {
                    voter_id: voter_id.to_owned(),
                    submissions,
                });
            }
        }
        AuditReport { violations }
    }

    pub fn export(&self) -> BoardExport {
        BoardExport {
            phase: self.phase,
            policy: self.policy,
            entries: self
                .entries
                .iter()
                .map(|e| ExportedEntry {
                    submission: e.submission,
                    session: e.session.clone(),
                    voter_id: e.voter_id.clone(),
                    digest: e.ballot.digest(),
                    ballot: e.ballot.clone(),
                    status: e.status,
                    auth_issued_at: e.auth_issued_at,
                    accepted_at: e.accepted_at,
                })
                .collect(),
            result: self.result,
        }
    }

    #[cfg(test)]
    pub(crate) fn inject_entry(&mut self, entry: BoardEntry) {
        self.entries.push(entry);
    }
}

impl BoardLookup for Board {
    fn lookup_voter_entry(&self, voter_id: &str) -> Option<(Digest, EntryStatus)> {
        self.accepted_entry(voter_id)
            .map(|e| (e.ballot.digest(), e.status))
    }
}

/// JSON view of the board.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardExport {
    pub phase: Phase,
    pub policy: ArchivePolicy,
    pub entries: Vec<ExportedEntry>,
    pub result: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedEntry {
    pub submission: SubmissionId,
    pub session: String,
    pub voter_id: Option<String>,
    pub ballot: Ballot,
    pub digest: Digest,
    pub status: EntryStatus,
    pub auth_issued_at: Option<u64>,
    pub accepted_at: Option<u64>,
}

impl BoardExport {
    pub fn accepted_for(&self, voter_id: &str) -> Vec<&ExportedEntry> {
        self.entries
            .iter()
            .filter(|e| {
                e.status == EntryStatus::Accepted && e.voter_id.as_deref() == Some(voter_id)
            })
            .collect()
    }
}
