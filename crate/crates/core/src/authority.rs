//! Third-party authenticator: issues bearer tokens to registered voters and
//! answers the bulletin board's introspection queries.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::seeded_rng;

pub const TOKEN_BYTES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("voter `{0}` is already registered")]
    DuplicateVoter(String),
    #[error("authentication failed for `{0}`")]
    AuthenticationFailed(String),
}

#[derive(Clone, PartialEq, Eq)]
pub struct Credential {
    pub voter_id: String,
    pub secret: Vec<u8>,
}

impl fmt::Debug for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Credential")
            .field("voter_id", &self.voter_id)
            .finish_non_exhaustive()
    }
}

/// Opaque bearer token, hex encoded on the wire.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenValue(#[serde(with = "hex::serde")] pub Vec<u8>);

impl fmt::Debug for TokenValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TokenValue({})", hex::encode(&self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthToken {
    pub token_value: TokenValue,
    pub voter_id: String,
    pub issued_at: u64,
}

/// Introspection metadata in the `{active, voter_id?, issued_at?}` shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Introspection {
    pub active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voter_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issued_at: Option<u64>,
}

impl Introspection {
    pub fn inactive() -> Self {
        Self {
            active: false,
            voter_id: None,
            issued_at: None,
        }
    }

    pub fn active(voter_id: impl Into<String>, issued_at: u64) -> Self {
        Self {
            active: true,
            voter_id: Some(voter_id.into()),
            issued_at: Some(issued_at),
        }
    }
}

#[derive(Debug, Clone)]
struct Issued {
    voter_id: String,
    issued_at: u64,
}

/// The authority's state: electoral roll, issued tokens, and the token
/// nonce stream.
pub struct Authority {
    credentials: BTreeMap<String, Vec<u8>>,
    issued: BTreeMap<TokenValue, Issued>,
    validity_window: Option<u64>,
    rng: ChaCha20Rng,
}

impl fmt::Debug for Authority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Authority")
            .field("roll", &self.credentials.keys().collect::<Vec<_>>())
            .field("issued", &self.issued.len())
            .field("validity_window", &self.validity_window)
            .finish()
    }
}

impl Authority {
    /// An authority with an unbounded validity window.
    pub fn new(seed: u64) -> Self {
        Self {
            credentials: BTreeMap::new(),
            issued: BTreeMap::new(),
            validity_window: None,
            rng: seeded_rng("authority-tokens", &seed.to_be_bytes()),
        }
    }

    /// Tokens introspected more than `window` ticks after issuance are
    /// reported inactive. `None` keeps tokens valid for the whole election.
    pub fn with_validity_window(mut self, window: Option<u64>) -> Self {
        self.validity_window = window;
        self
    }

    pub fn validity_window(&self) -> Option<u64> {
        self.validity_window
    }

    pub fn register_voter(&mut self, voter_id: &str, secret: &[u8]) -> Result<(), AuthError> {
        if self.credentials.contains_key(voter_id) {
            return Err(AuthError::DuplicateVoter(voter_id.to_owned()));
        }
        self.credentials
            .insert(voter_id.to_owned(), secret.to_vec());
        Ok(())
    }

    pub fn register(&mut self, credential: Credential) -> Result<(), AuthError> {
        self.register_voter(&credential.voter_id, &credential.secret)
    }

    pub fn is_registered(&self, voter_id: &str) -> bool {
        self.credentials.contains_key(voter_id)
    }

    pub fn roll(&self) -> impl Iterator<Item = &str> {
        self.credentials.keys().map(String::as_str)
    }

    pub fn authenticate(
        &mut self,
        voter_id: &str,
        secret: &[u8],
        now: u64,
    ) -> Result<AuthToken, AuthError> {
        match self.credentials.get(voter_id) {
            Some(stored) if stored.as_slice() == secret => {}
            _ => return Err(AuthError::AuthenticationFailed(voter_id.to_owned())),
        }
        let token_value = loop {
            let mut bytes = vec![0u8; TOKEN_BYTES];
            self.rng.fill_bytes(&mut bytes);
            let candidate = TokenValue(bytes);
            if !self.issued.contains_key(&candidate) {
                break candidate;
            }
        };
        self.issued.insert(
            token_value.clone(),
            Issued {
                voter_id: voter_id.to_owned(),
                issued_at: now,
            },
        );
        Ok(AuthToken {
            token_value,
            voter_id: voter_id.to_owned(),
            issued_at: now,
        })
    }

    /// Tokens are not consumed: the same token may be introspected any
    /// number of times while it is inside the validity window.
    pub fn introspect(&self, token_value: &TokenValue, now: u64) -> Introspection {
        let Some(issued) = self.issued.get(token_value) else {
            return Introspection::inactive();
        };
        let age = now.saturating_sub(issued.issued_at);
        if self.validity_window.is_some_and(|window| age > window) {
            return Introspection::inactive();
        }
        Introspection::active(issued.voter_id.clone(), issued.issued_at)
    }

    pub fn issued_count(&self) -> usize {
        self.issued.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn authority() -> Authority {
        let mut authority = Authority::new(1);
        authority.register_voter("alice", b"alice-secret").unwrap();
        authority
    }

    #[test]
    fn register_and_authenticate() {
        let mut authority = authority();
        let token = authority.authenticate("alice", b"alice-secret", 7).unwrap();
        assert_eq!(token.voter_id, "alice");
        assert_eq!(token.issued_at, 7);
        assert_eq!(token.token_value.0.len(), TOKEN_BYTES);
    }

    #[test]
    fn duplicate_registration() {
        let mut authority = authority();
        assert_eq!(
            authority.register_voter("alice", b"other"),
            Err(AuthError::DuplicateVoter("alice".into()))
        );
    }

    #[test]
    fn unknown_voter_and_wrong_secret_are_rejected() {
        let mut authority = authority();
        assert_eq!(
            authority.authenticate("mallory", b"anything", 1),
            Err(AuthError::AuthenticationFailed("mallory".into()))
        );
        assert!(authority.authenticate("alice", b"wrong", 1).is_err());
        assert_eq!(authority.issued_count(), 0);
    }

    #[test]
    fn tokens_are_fresh() {
        let mut authority = authority();
        let a = authority.authenticate("alice", b"alice-secret", 1).unwrap();
        let b = authority.authenticate("alice", b"alice-secret", 1).unwrap();
        assert_ne!(a.token_value, b.token_value);
    }

    #[test]
    fn token_stream_is_seeded() {
        let mut x = authority();
        let mut y = authority();
        assert_eq!(
            x.authenticate("alice", b"alice-secret", 1).unwrap(),
            y.authenticate("alice", b"alice-secret", 1).unwrap()
        );
    }

    #[test]
    fn introspection_roundtrip_and_reuse() {
        let mut authority = authority();
        let token = authority.authenticate("alice", b"alice-secret", 3).unwrap();
        for now in [3, 10, 1_000_000] {
            assert_eq!(
                authority.introspect(&token.token_value, now),
                Introspection::active("alice", 3)
            );
        }
        let never_issued = TokenValue(vec![0xab; TOKEN_BYTES]);
        assert_eq!(
            authority.introspect(&never_issued, 4),
            Introspection::inactive()
        );
    }

    #[test]
    fn validity_window() {
        let mut authority = authority().with_validity_window(Some(100));
        let token = authority.authenticate("alice", b"alice-secret", 3).unwrap();
        assert!(authority.introspect(&token.token_value, 90).active);
        assert!(authority.introspect(&token.token_value, 103).active);
        assert!(!authority.introspect(&token.token_value, 104).active);
    }

    #[test]
    fn introspection_wire_shape() {
        let json = serde_json::to_string(&Introspection::active("alice", 3)).unwrap();
        assert_eq!(json, r#"{"active":true,"voter_id":"alice","issued_at":3}"#);
        let json = serde_json::to_string(&Introspection::inactive()).unwrap();
        assert_eq!(json, r#"{"active":false}"#);
        let back: Introspection = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Introspection::inactive());
    }
}
