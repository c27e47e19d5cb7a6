//! Hash commitments, signatures and epoch time shared by both simulated ledgers.
//!
//! Everything here is a plain value type: cheap to clone, `Send + Sync`, and
//! serialized as lowercase hex so traces stay readable.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub const SECRET_LEN: usize = 32;

fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

macro_rules! hex_newtype_serde {
    ($ty:ident) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.0))
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                let mut out = [0u8; 32];
                hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
                Ok($ty(out))
            }
        }

        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($ty), &hex::encode(self.0)[..16])
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }
    };
}

/// A 32-byte hash preimage.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Secret([u8; SECRET_LEN]);

hex_newtype_serde!(Secret);

impl Secret {
    pub const fn from_bytes(bytes: [u8; SECRET_LEN]) -> Self {
        Secret(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SECRET_LEN] {
        &self.0
    }

    pub fn commit(&self) -> SecretHash {
        commit(self)
    }
}

/// SHA-256 digest of a [`Secret`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SecretHash([u8; 32]);

hex_newtype_serde!(SecretHash);

impl SecretHash {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        SecretHash(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn verify(&self, secret: &Secret) -> bool {
        commit(secret) == *self
    }
}

pub fn commit(secret: &Secret) -> SecretHash {
    SecretHash(sha256(&secret.0))
}

/// Deterministic source of secrets and key material for one simulation run.
#[derive(Clone, Debug)]
pub struct SecretRng(ChaCha20Rng);

impl SecretRng {
    pub fn from_seed(seed: u64) -> Self {
        SecretRng(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn next_bytes(&mut self) -> [u8; 32] {
        let mut out = [0u8; 32];
        rand::Rng::fill_bytes(&mut self.0, &mut out);
        out
    }
}

pub fn generate_secret(rng: &mut SecretRng) -> Secret {
    Secret(rng.next_bytes())
}

/// Participant identity. The verification key lives in the world's key directory.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum PartyId {
    Alice,
    Bob,
    Charlie,
    Other(u32),
}

impl PartyId {
    pub fn is_borrower_or_lender(self) -> bool {
        matches!(self, PartyId::Alice | PartyId::Bob)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Alice => f.write_str("alice"),
            PartyId::Bob => f.write_str("bob"),
            PartyId::Charlie => f.write_str("charlie"),
            PartyId::Other(n) => write!(f, "other-{n}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown party `{0}`")]
pub struct UnknownParty(pub String);

impl FromStr for PartyId {
    type Err = UnknownParty;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "alice" => Ok(PartyId::Alice),
            "bob" => Ok(PartyId::Bob),
            "charlie" => Ok(PartyId::Charlie),
            other => other
                .strip_prefix("other-")
                .and_then(|n| n.parse().ok())
                .map(PartyId::Other)
                .ok_or_else(|| UnknownParty(s.to_string())),
        }
    }
}

impl Serialize for PartyId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartyId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which signature scheme backs the key pairs of a run.
///
/// `Transparent` is a keyed-digest stand-in: signatures are `pubkey || H(message)`.
/// It is trivially forgeable and only exists because no adversary in the
/// simulator forges signatures; it keeps large enumerations cheap.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignatureScheme {
    #[default]
    Ed25519,
    Transparent,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey([u8; 32]);

hex_newtype_serde!(PublicKey);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// ACoin pay-to-key address of this key.
    pub fn address(&self) -> Address {
        let digest = sha256(&self.0);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[..20]);
        Address(out)
    }
}

/// 20-byte ACoin destination derived from a public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address([u8; 20]);

impl Address {
    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", hex::encode(self.0))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 20];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Address(out))
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature(Vec<u8>);

impl Signature {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn from_vec(bytes: Vec<u8>) -> Self {
        Signature(bytes)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = hex::encode(&self.0);
        write!(f, "Signature({})", &hex[..hex.len().min(16)])
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map(Signature).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone)]
enum SigningMaterial {
    Ed25519(Box<SigningKey>),
    Transparent,
}

#[derive(Clone)]
pub struct Keypair {
    scheme: SignatureScheme,
    public: PublicKey,
    material: SigningMaterial,
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair").field("scheme", &self.scheme).field("public", &self.public).finish_non_exhaustive()
    }
}

impl Keypair {
    pub fn from_seed(scheme: SignatureScheme, seed: [u8; 32]) -> Self {
        match scheme {
            SignatureScheme::Ed25519 => {
                let sk = SigningKey::from_bytes(&seed);
                let public = PublicKey(sk.verifying_key().to_bytes());
                Keypair { scheme, public, material: SigningMaterial::Ed25519(Box::new(sk)) }
            }
            SignatureScheme::Transparent => {
                let mut buf = Vec::with_capacity(44);
                buf.extend_from_slice(b"transparent:");
                buf.extend_from_slice(&seed);
                Keypair { scheme, public: PublicKey(sha256(&buf)), material: SigningMaterial::Transparent }
            }
        }
    }

    pub fn generate(scheme: SignatureScheme, rng: &mut SecretRng) -> Self {
        Self::from_seed(scheme, rng.next_bytes())
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn scheme(&self) -> SignatureScheme {
        self.scheme
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(self, message)
    }
}

pub fn sign(key: &Keypair, message: &[u8]) -> Signature {
    match &key.material {
        SigningMaterial::Ed25519(sk) => Signature(sk.sign(message).to_bytes().to_vec()),
        SigningMaterial::Transparent => {
            let mut payload = key.public.0.to_vec();
            payload.extend_from_slice(&sha256(message));
            Signature(payload)
        }
    }
}

/// Verifies `signature` by `pubkey` over `message`. Never panics; malformed
/// input simply fails verification.
pub fn verify(scheme: SignatureScheme, pubkey: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    match scheme {
        SignatureScheme::Ed25519 => {
            let Ok(vk) = VerifyingKey::from_bytes(&pubkey.0) else {
                return false;
            };
            let Ok(sig) = ed25519_dalek::Signature::from_slice(&signature.0) else {
                return false;
            };
            vk.verify(message, &sig).is_ok()
        }
        SignatureScheme::Transparent => {
            signature.0.len() == 64 && signature.0[..32] == pubkey.0 && signature.0[32..] == sha256(message)
        }
    }
}

/// Linux epoch seconds.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(u64);

impl Timestamp {
    /// Upper bound for any in-simulation time; arithmetic past it is refused.
    pub const MAX: Timestamp = Timestamp(1 << 62);

    pub const fn from_secs(secs: u64) -> Self {
        Timestamp(secs)
    }

    pub const fn secs(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, secs: u64) -> Option<Timestamp> {
        self.0.checked_add(secs).filter(|t| *t <= Self::MAX.0).map(Timestamp)
    }

    pub fn checked_sub(self, secs: u64) -> Option<Timestamp> {
        self.0.checked_sub(secs).map(Timestamp)
    }

    pub fn saturating_add(self, secs: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(secs).min(Self::MAX.0))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum ChainId {
    ACoin,
    BCoin,
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainId::ACoin => f.write_str("ACoin"),
            ChainId::BCoin => f.write_str("BCoin"),
        }
    }
}

/// Length-prefixed canonical encoding used for signed payloads and ids.
#[derive(Default)]
pub struct Encoder(Vec<u8>);

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(mut self, data: &[u8]) -> Self {
        self.0.extend_from_slice(&(data.len() as u32).to_be_bytes());
        self.0.extend_from_slice(data);
        self
    }

    pub fn u64(mut self, value: u64) -> Self {
        self.0.extend_from_slice(&value.to_be_bytes());
        self
    }

    pub fn u32(mut self, value: u32) -> Self {
        self.0.extend_from_slice(&value.to_be_bytes());
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.0
    }

    pub fn digest(self) -> [u8; 32] {
        sha256(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn zero_secret_digest_matches_reference_vector() {
        // SHA-256 of 32 zero bytes, from the reference implementation.
        let h = commit(&Secret::from_bytes([0u8; 32]));
        assert_eq!(h.to_string(), "66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925");
    }

    #[test]
    fn same_seed_same_secrets() {
        let mut a = SecretRng::from_seed(42);
        let mut b = SecretRng::from_seed(42);
        let s1 = generate_secret(&mut a);
        assert_eq!(s1, generate_secret(&mut b));
        assert_ne!(s1, generate_secret(&mut a));
    }

    #[test]
    fn thousand_draws_give_distinct_commitments() {
        let mut rng = SecretRng::from_seed(1);
        let seen: HashSet<SecretHash> = (0..1000).map(|_| generate_secret(&mut rng).commit()).collect();
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn one_bit_flip_changes_digest() {
        let base = Secret::from_bytes([7u8; 32]);
        for byte in 0..32 {
            for bit in 0..8 {
                let mut bytes = *base.as_bytes();
                bytes[byte] ^= 1 << bit;
                assert_ne!(commit(&Secret::from_bytes(bytes)), commit(&base));
            }
        }
    }

    fn check_scheme(scheme: SignatureScheme) {
        let mut rng = SecretRng::from_seed(3);
        let a = Keypair::generate(scheme, &mut rng);
        let b = Keypair::generate(scheme, &mut rng);
        let msg = b"liquidate to charlie";
        let sig = a.sign(msg);
        assert!(verify(scheme, &a.public(), msg, &sig));
        assert!(!verify(scheme, &b.public(), msg, &sig));
        for i in 0..msg.len() {
            let mut altered = msg.to_vec();
            altered[i] ^= 0x01;
            assert!(!verify(scheme, &a.public(), &altered, &sig), "byte {i}");
        }
        assert!(!verify(scheme, &a.public(), msg, &Signature::from_vec(vec![1, 2, 3])));
        // determinism
        assert_eq!(sig, a.sign(msg));
    }

    #[test]
    fn ed25519_round_trip_and_rejections() {
        check_scheme(SignatureScheme::Ed25519);
    }

    #[test]
    fn transparent_round_trip_and_rejections() {
        check_scheme(SignatureScheme::Transparent);
    }

    #[test]
    fn timestamp_arithmetic_is_capped() {
        assert_eq!(Timestamp::MAX.checked_add(1), None);
        assert_eq!(Timestamp::from_secs(5).checked_add(5), Some(Timestamp::from_secs(10)));
        assert_eq!(Timestamp::MAX.saturating_add(10), Timestamp::MAX);
    }

    #[test]
    fn party_names_round_trip() {
        for p in [PartyId::Alice, PartyId::Bob, PartyId::Charlie, PartyId::Other(4)] {
            assert_eq!(p.to_string().parse::<PartyId>().unwrap(), p);
        }
        assert!("mallory".parse::<PartyId>().is_err());
    }
}
