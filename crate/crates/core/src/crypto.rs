//! Exponential ElGamal over a prime-order subgroup of `Z_p^*`, with a
//! Cramer-Damgård-Schoenmakers disjunctive proof that a ciphertext encrypts
//! 0 or 1.
//!
//! Every operation is a pure function of its inputs. Randomness enters only
//! through explicit scalars or seeds, so that simulation transcripts replay
//! byte-for-byte.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Iteration budget for [`generate_group`].
pub const GROUP_SEARCH_BUDGET: u64 = 2_000_000;

/// Miller-Rabin witnesses. Deterministic for `n < 3.3 * 10^24`, and an error
/// bound of `4^-40` beyond that.
const MR_BASES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid group parameters: {0}")]
    InvalidParams(&'static str),
    #[error("no safe-prime group found within {0} candidates")]
    ParameterGeneration(u64),
    #[error("choice must be 0 or 1, got {0}")]
    ChoiceOutOfRange(u64),
    #[error("scalar is not in [0, q)")]
    ScalarOutOfRange,
    #[error("secret key is not in [1, q)")]
    SecretOutOfRange,
    #[error("cannot combine an empty list of ciphertexts")]
    EmptyCombination,
    #[error("ciphertext is not an element of the order-q subgroup")]
    NotInSubgroup,
    #[error("ciphertext does not decrypt to a count in 0..={0}")]
    DecryptionFailure(u64),
}

pub type Result<T, E = CryptoError> = std::result::Result<T, E>;

/// Big integers travel as decimal strings in every external format.
pub(crate) mod decimal {
    use std::str::FromStr;

    use num_bigint::BigUint;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigUint, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&value.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<BigUint, D::Error> {
        let raw = String::deserialize(deserializer)?;
        parse(&raw).map_err(D::Error::custom)
    }

    pub fn parse(raw: &str) -> Result<BigUint, String> {
        if raw.is_empty() || !raw.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("`{raw}` is not a decimal integer"));
        }
        BigUint::from_str(raw).map_err(|e| e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Group parameters
// ---------------------------------------------------------------------------

/// A prime-order subgroup of `Z_p^*`: `q | p - 1` and `g` generates the
/// subgroup of order `q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGroupParams")]
pub struct GroupParams {
    #[serde(with = "decimal")]
    p: BigUint,
    #[serde(with = "decimal")]
    q: BigUint,
    #[serde(with = "decimal")]
    g: BigUint,
}

#[derive(Deserialize)]
struct RawGroupParams {
    #[serde(with = "decimal")]
    p: BigUint,
    #[serde(with = "decimal")]
    q: BigUint,
    #[serde(with = "decimal")]
    g: BigUint,
}

impl TryFrom<RawGroupParams> for GroupParams {
    type Error = CryptoError;

    fn try_from(raw: RawGroupParams) -> Result<Self> {
        GroupParams::new(raw.p, raw.q, raw.g)
    }
}

impl GroupParams {
    /// Validates and wraps `(p, q, g)`.
    pub fn new(p: BigUint, q: BigUint, g: BigUint) -> Result<Self> {
        if !is_probable_prime(&p) {
            return Err(CryptoError::InvalidParams("p is not prime"));
        }
        if !is_probable_prime(&q) {
            return Err(CryptoError::InvalidParams("q is not prime"));
        }
        if !((&p - 1u32) % &q).is_zero() {
            return Err(CryptoError::InvalidParams("q does not divide p - 1"));
        }
        if g.is_zero() || g >= p {
            return Err(CryptoError::InvalidParams("g is not in [1, p)"));
        }
        if g.is_one() {
            return Err(CryptoError::InvalidParams("g is the identity"));
        }
        if !g.modpow(&q, &p).is_one() {
            return Err(CryptoError::InvalidParams("g does not have order q"));
        }
        Ok(Self { p, q, g })
    }

    /// The pinned toy group `(23, 11, 2)` used for fast tests and demos.
    pub fn tiny() -> Self {
        Self::new(23u32.into(), 11u32.into(), 2u32.into()).expect("(23, 11, 2) is a valid group")
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        base.modpow(exp, &self.p)
    }

    pub fn g_pow(&self, exp: &BigUint) -> BigUint {
        self.g.modpow(exp, &self.p)
    }

    pub fn mul(&self, x: &BigUint, y: &BigUint) -> BigUint {
        (x * y) % &self.p
    }

    /// `x^-e` for a subgroup element `x`, computed as `x^(q - e mod q)`.
    fn pow_neg(&self, x: &BigUint, e: &BigUint) -> BigUint {
        let e = e % &self.q;
        self.pow(x, &((&self.q - e) % &self.q))
    }

    /// `1 <= x < p` and `x^q = 1 (mod p)`.
    pub fn is_member(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.p && x.modpow(&self.q, &self.p).is_one()
    }

    pub fn is_scalar(&self, x: &BigUint) -> bool {
        x < &self.q
    }

    /// Uniform scalar in `[0, q)`.
    pub fn random_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_below(&self.q)
    }
}

/// Searches for a safe prime `p = 2q + 1` of `bit_length` bits and returns
/// the quadratic-residue subgroup, generated by `4`.
pub fn generate_group(bit_length: u32, seed: u64) -> Result<GroupParams> {
    if bit_length < 16 {
        return Err(CryptoError::InvalidParams("bit length must be at least 16"));
    }
    let mut rng = seeded_rng("group", &seed.to_be_bytes());
    let q_bits = u64::from(bit_length - 1);
    for _ in 0..GROUP_SEARCH_BUDGET {
        let mut q = rng.gen_biguint(q_bits);
        q.set_bit(q_bits - 1, true);
        q.set_bit(0, true);
        let p: BigUint = (&q << 1usize) + 1u32;
        if !passes_small_prime_sieve(&q) || !passes_small_prime_sieve(&p) {
            continue;
        }
        if is_probable_prime(&q) && is_probable_prime(&p) {
            return GroupParams::new(p, q, 4u32.into());
        }
    }
    Err(CryptoError::ParameterGeneration(GROUP_SEARCH_BUDGET))
}

fn passes_small_prime_sieve(n: &BigUint) -> bool {
    MR_BASES.iter().all(|&b| {
        let b = BigUint::from(b);
        n == &b || !(n % &b).is_zero()
    })
}

/// Miller-Rabin over the fixed witness set [`MR_BASES`].
pub fn is_probable_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &b in &MR_BASES {
        let b = BigUint::from(b);
        if n == &b {
            return true;
        }
        if (n % &b).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for &b in &MR_BASES {
        let mut x = BigUint::from(b).modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// ChaCha20 stream keyed by `SHA-256(len(label) || label || seed)`.
pub fn seeded_rng(label: &str, seed: &[u8]) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update((label.len() as u64).to_be_bytes());
    hasher.update(label.as_bytes());
    hasher.update(seed);
    ChaCha20Rng::from_seed(hasher.finalize().into())
}

// ---------------------------------------------------------------------------
// Keys and ciphertexts
// ---------------------------------------------------------------------------

/// The administrator's decryption key and the election public key.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    sk: BigUint,
    pk: BigUint,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("pk", &self.pk)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_secret(params: &GroupParams, sk: BigUint) -> Result<Self> {
        if sk.is_zero() || sk >= params.q {
            return Err(CryptoError::SecretOutOfRange);
        }
        let pk = params.g_pow(&sk);
        Ok(Self { sk, pk })
    }

    pub fn sk(&self) -> &BigUint {
        &self.sk
    }

    pub fn pk(&self) -> &BigUint {
        &self.pk
    }
}

/// Derives `sk` uniformly from `[1, q)` using a stream seeded by `seed`.
pub fn keygen(params: &GroupParams, seed: &[u8]) -> KeyPair {
    let mut rng = seeded_rng("keygen", seed);
    let sk = rng.gen_biguint_range(&BigUint::one(), &params.q);
    KeyPair::from_secret(params, sk).expect("sampled from [1, q)")
}

/// `(g^r, pk^r * g^m)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(with = "decimal")]
    pub a: BigUint,
    #[serde(with = "decimal")]
    pub b: BigUint,
}

impl Ciphertext {
    pub fn is_member(&self, params: &GroupParams) -> bool {
        params.is_member(&self.a) && params.is_member(&self.b)
    }
}

/// Commitments are ordered `[A0, B0, A1, B1]`: the Chaum-Pedersen pair for
/// the plaintext-0 branch followed by the plaintext-1 branch.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DisjunctiveProof {
    pub commitments: [BigUint; 4],
    pub challenges: [BigUint; 2],
    pub responses: [BigUint; 2],
}

/// An encrypted 0/1 choice with its well-formedness proof. When present, the
/// timestamp is hashed into the proof challenge.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "CanonicalBallot", try_from = "CanonicalBallot")]
pub struct Ballot {
    pub ct: Ciphertext,
    pub proof: DisjunctiveProof,
    pub timestamp: Option<u64>,
}

/// Wire form of a ballot. Field order is normative: it fixes the canonical
/// encoding hashed into ballot digests.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalBallot {
    a: String,
    b: String,
    commitments: [String; 4],
    challenges: [String; 2],
    responses: [String; 2],
    timestamp: Option<u64>,
}

impl From<Ballot> for CanonicalBallot {
    fn from(ballot: Ballot) -> Self {
        let dec = |x: &BigUint| x.to_str_radix(10);
        CanonicalBallot {
            a: dec(&ballot.ct.a),
            b: dec(&ballot.ct.b),
            commitments: ballot.proof.commitments.each_ref().map(dec),
            challenges: ballot.proof.challenges.each_ref().map(dec),
            responses: ballot.proof.responses.each_ref().map(dec),
            timestamp: ballot.timestamp,
        }
    }
}

impl TryFrom<CanonicalBallot> for Ballot {
    type Error = String;

    fn try_from(raw: CanonicalBallot) -> Result<Self, String> {
        fn all<const N: usize>(xs: [String; N]) -> Result<[BigUint; N], String> {
            let parsed = xs
                .iter()
                .map(|x| decimal::parse(x))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(parsed.try_into().expect("length preserved"))
        }
        Ok(Ballot {
            ct: Ciphertext {
                a: decimal::parse(&raw.a)?,
                b: decimal::parse(&raw.b)?,
            },
            proof: DisjunctiveProof {
                commitments: all(raw.commitments)?,
                challenges: all(raw.challenges)?,
                responses: all(raw.responses)?,
            },
            timestamp: raw.timestamp,
        })
    }
}

impl Ballot {
    /// Canonical JSON encoding; the input to [`Ballot::digest`].
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("ballot serialization is infallible")
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.canonical_bytes())
    }
}

/// SHA-256 digest, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Digest(#[serde(with = "hex::serde")] pub [u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &hex::encode(self.0)[..12])
    }
}

// ---------------------------------------------------------------------------
// Fiat-Shamir
// ---------------------------------------------------------------------------

/// Length-prefixed encoding of `(g, pk, a, b, A0, B0, A1, B1)` as decimal
/// strings, each preceded by its byte length as a big-endian `u64`.
pub fn proof_transcript(
    params: &GroupParams,
    pk: &BigUint,
    ct: &Ciphertext,
    commitments: &[BigUint; 4],
) -> Vec<u8> {
    let mut out = Vec::new();
    let fields = [&params.g, pk, &ct.a, &ct.b]
        .into_iter()
        .chain(commitments.iter());
    for field in fields {
        let digits = field.to_str_radix(10);
        out.extend_from_slice(&(digits.len() as u64).to_be_bytes());
        out.extend_from_slice(digits.as_bytes());
    }
    out
}

/// `SHA-256(transcript || ts_tag) mod q`, where `ts_tag` is `0x00` without a
/// timestamp and `0x01 || u64_be(ts)` with one.
pub fn fiat_shamir_challenge(transcript: &[u8], ts: Option<u64>, q: &BigUint) -> BigUint {
    let mut hasher = Sha256::new();
    hasher.update(transcript);
    match ts {
        None => hasher.update([0u8]),
        Some(t) => {
            hasher.update([1u8]);
            hasher.update(t.to_be_bytes());
        }
    }
    BigUint::from_bytes_be(&hasher.finalize()) % q
}

// ---------------------------------------------------------------------------
// Encryption and proofs
// ---------------------------------------------------------------------------

/// Encrypts `m` under `pk` with randomness `r` and proves `m ∈ {0, 1}`.
///
/// Proof nonces are derived deterministically from the statement and the
/// witness, so the same inputs always give the same ballot.
pub fn encrypt_choice(
    params: &GroupParams,
    pk: &BigUint,
    m: u64,
    r: &BigUint,
    ts: Option<u64>,
) -> Result<Ballot> {
    if m > 1 {
        return Err(CryptoError::ChoiceOutOfRange(m));
    }
    if !params.is_scalar(r) {
        return Err(CryptoError::ScalarOutOfRange);
    }
    Ok(prove(params, pk, m, r, ts))
}

/// The prover, without the `m ∈ {0, 1}` guard. The real branch is `m & 1`.
pub(crate) fn prove(
    params: &GroupParams,
    pk: &BigUint,
    m: u64,
    r: &BigUint,
    ts: Option<u64>,
) -> Ballot {
    let q = &params.q;
    let ct = Ciphertext {
        a: params.g_pow(r),
        b: params.mul(&params.pow(pk, r), &params.g_pow(&BigUint::from(m))),
    };

    let mut nonce_seed = proof_transcript(params, pk, &ct, &Default::default());
    nonce_seed.extend_from_slice(r.to_str_radix(10).as_bytes());
    nonce_seed.extend_from_slice(&m.to_be_bytes());
    nonce_seed.extend_from_slice(&ts.map_or([0xff; 8], u64::to_be_bytes));
    let mut rng = seeded_rng("disjunctive-proof", &nonce_seed);
    let w = params.random_scalar(&mut rng);
    let sim_challenge = params.random_scalar(&mut rng);
    let sim_response = params.random_scalar(&mut rng);

    let real = (m & 1) as usize;
    let fake = 1 - real;

    let mut commitments: [BigUint; 4] = Default::default();
    commitments[2 * real] = params.g_pow(&w);
    commitments[2 * real + 1] = params.pow(pk, &w);
    let shifted = branch_target(params, &ct.b, fake);
    commitments[2 * fake] = params.mul(
        &params.g_pow(&sim_response),
        &params.pow_neg(&ct.a, &sim_challenge),
    );
    commitments[2 * fake + 1] = params.mul(
        &params.pow(pk, &sim_response),
        &params.pow_neg(&shifted, &sim_challenge),
    );

    let transcript = proof_transcript(params, pk, &ct, &commitments);
    let challenge = fiat_shamir_challenge(&transcript, ts, q);
    let real_challenge = (&challenge + q - &sim_challenge) % q;
    let real_response = (&w + &real_challenge * r) % q;

    let mut challenges: [BigUint; 2] = Default::default();
    let mut responses: [BigUint; 2] = Default::default();
    challenges[real] = real_challenge;
    responses[real] = real_response;
    challenges[fake] = sim_challenge;
    responses[fake] = sim_response;

    Ballot {
        ct,
        proof: DisjunctiveProof {
            commitments,
            challenges,
            responses,
        },
        timestamp: ts,
    }
}

/// `b / g^branch`: the value whose discrete log base `pk` equals `r` when
/// the ciphertext encrypts `branch`.
fn branch_target(params: &GroupParams, b: &BigUint, branch: usize) -> BigUint {
    params.mul(b, &params.pow_neg(&params.g, &BigUint::from(branch)))
}

/// Checks subgroup membership of every element, the range of every scalar,
/// the challenge split, and both Chaum-Pedersen branches.
pub fn verify_ballot(params: &GroupParams, pk: &BigUint, ballot: &Ballot) -> bool {
    let proof = &ballot.proof;
    let elements_ok = params.is_member(pk)
        && ballot.ct.is_member(params)
        && proof.commitments.iter().all(|c| params.is_member(c));
    let scalars_ok = proof
        .challenges
        .iter()
        .chain(proof.responses.iter())
        .all(|s| params.is_scalar(s));
    if !elements_ok || !scalars_ok {
        return false;
    }

    let q = &params.q;
    let transcript = proof_transcript(params, pk, &ballot.ct, &proof.commitments);
    let challenge = fiat_shamir_challenge(&transcript, ballot.timestamp, q);
    if (&proof.challenges[0] + &proof.challenges[1]) % q != challenge {
        return false;
    }

    (0..2).all(|branch| {
        let c = &proof.challenges[branch];
        let s = &proof.responses[branch];
        let a_side = params.mul(&proof.commitments[2 * branch], &params.pow(&ballot.ct.a, c));
        let target = branch_target(params, &ballot.ct.b, branch);
        let b_side = params.mul(&proof.commitments[2 * branch + 1], &params.pow(&target, c));
        params.g_pow(s) == a_side && params.pow(pk, s) == b_side
    })
}

/// Componentwise product of ciphertexts; decrypts to the sum of plaintexts.
pub fn homomorphic_combine(params: &GroupParams, cts: &[Ciphertext]) -> Result<Ciphertext> {
    let (first, rest) = cts.split_first().ok_or(CryptoError::EmptyCombination)?;
    if !cts.iter().all(|ct| ct.is_member(params)) {
        return Err(CryptoError::NotInSubgroup);
    }
    Ok(rest.iter().fold(first.clone(), |acc, ct| Ciphertext {
        a: params.mul(&acc.a, &ct.a),
        b: params.mul(&acc.b, &ct.b),
    }))
}

/// Recovers `m` from `g^m = b / a^sk` by linear search over `0..=max_count`.
pub fn decrypt_tally(
    params: &GroupParams,
    kp: &KeyPair,
    ct: &Ciphertext,
    max_count: u64,
) -> Result<u64> {
    let target = params.mul(&ct.b, &params.pow_neg(&ct.a, &kp.sk));
    let mut acc = BigUint::one();
    for m in 0..=max_count {
        if acc == target {
            return Ok(m);
        }
        acc = params.mul(&acc, &params.g);
    }
    Err(CryptoError::DecryptionFailure(max_count))
}
