//! Spend-condition algebra for ACoin outputs and its evaluator.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::primitives::{verify, Encoder, PublicKey, Secret, SecretHash, Signature, SignatureScheme, Timestamp};

pub const MAX_SCRIPT_DEPTH: usize = 16;

/// Condition tree guarding a script output. Serialized as nested objects
/// tagged by `type`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ScriptCondition {
    PreimageOf {
        hash: SecretHash,
    },
    SignedBy {
        key: PublicKey,
    },
    #[serde(rename = "multisig-2of2")]
    MultiSig2of2 {
        keys: [PublicKey; 2],
    },
    /// Live when `now >= time`.
    After {
        time: Timestamp,
    },
    /// Live when `now < time`.
    Before {
        time: Timestamp,
    },
    All {
        of: Vec<ScriptCondition>,
    },
    Any {
        of: Vec<ScriptCondition>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("script nesting exceeds {MAX_SCRIPT_DEPTH} levels")]
    TooDeep,
    #[error("empty All/Any list")]
    EmptyList,
}

impl ScriptCondition {
    pub fn preimage(hash: SecretHash) -> Self {
        ScriptCondition::PreimageOf { hash }
    }

    pub fn signed_by(key: PublicKey) -> Self {
        ScriptCondition::SignedBy { key }
    }

    pub fn multisig(a: PublicKey, b: PublicKey) -> Self {
        ScriptCondition::MultiSig2of2 { keys: [a, b] }
    }

    pub fn after(time: Timestamp) -> Self {
        ScriptCondition::After { time }
    }

    pub fn before(time: Timestamp) -> Self {
        ScriptCondition::Before { time }
    }

    pub fn all(of: Vec<ScriptCondition>) -> Self {
        ScriptCondition::All { of }
    }

    pub fn any(of: Vec<ScriptCondition>) -> Self {
        ScriptCondition::Any { of }
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        self.validate_at(1)
    }

    fn validate_at(&self, depth: usize) -> Result<(), ScriptError> {
        if depth > MAX_SCRIPT_DEPTH {
            return Err(ScriptError::TooDeep);
        }
        match self {
            ScriptCondition::All { of } | ScriptCondition::Any { of } => {
                if of.is_empty() {
                    return Err(ScriptError::EmptyList);
                }
                of.iter().try_for_each(|c| c.validate_at(depth + 1))
            }
            _ => Ok(()),
        }
    }

    /// Every hash committed anywhere in the tree.
    pub fn hashes(&self) -> BTreeSet<SecretHash> {
        let mut out = BTreeSet::new();
        self.collect_hashes(&mut out);
        out
    }

    fn collect_hashes(&self, out: &mut BTreeSet<SecretHash>) {
        match self {
            ScriptCondition::PreimageOf { hash } => {
                out.insert(*hash);
            }
            ScriptCondition::All { of } | ScriptCondition::Any { of } => of.iter().for_each(|c| c.collect_hashes(out)),
            _ => {}
        }
    }

    /// Whether the time atoms alone admit `now`, ignoring secrets and signatures.
    pub fn time_live(&self, now: Timestamp) -> bool {
        match self {
            ScriptCondition::After { time } => now >= *time,
            ScriptCondition::Before { time } => now < *time,
            ScriptCondition::All { of } => of.iter().all(|c| c.time_live(now)),
            ScriptCondition::Any { of } => of.iter().any(|c| c.time_live(now)),
            _ => true,
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("script serializes");
        Encoder::new().bytes(b"script").bytes(&json).digest()
    }
}

/// Data offered to satisfy a lock.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub preimages: BTreeSet<Secret>,
    pub signatures: Vec<(PublicKey, Signature)>,
}

impl Witness {
    pub fn with_preimage(mut self, secret: Secret) -> Self {
        self.preimages.insert(secret);
        self
    }

    pub fn with_signature(mut self, key: PublicKey, sig: Signature) -> Self {
        self.signatures.push((key, sig));
        self
    }

    fn has_preimage(&self, hash: &SecretHash) -> bool {
        self.preimages.iter().any(|s| hash.verify(s))
    }
}

/// Everything the evaluator needs besides the tree itself.
pub struct EvalContext<'a> {
    pub witness: &'a Witness,
    /// Canonical message of the spending transaction.
    pub message: &'a [u8],
    pub scheme: SignatureScheme,
    pub now: Timestamp,
}

impl EvalContext<'_> {
    pub fn signed_by(&self, key: &PublicKey) -> bool {
        self.witness.signatures.iter().any(|(k, sig)| k == key && verify(self.scheme, key, self.message, sig))
    }
}

pub fn eval_condition(condition: &ScriptCondition, ctx: &EvalContext<'_>) -> bool {
    eval_at(condition, ctx, 1)
}

fn eval_at(condition: &ScriptCondition, ctx: &EvalContext<'_>, depth: usize) -> bool {
    if depth > MAX_SCRIPT_DEPTH {
        return false;
    }
    match condition {
        ScriptCondition::PreimageOf { hash } => ctx.witness.has_preimage(hash),
        ScriptCondition::SignedBy { key } => ctx.signed_by(key),
        ScriptCondition::MultiSig2of2 { keys } => ctx.signed_by(&keys[0]) && ctx.signed_by(&keys[1]),
        ScriptCondition::After { time } => ctx.now >= *time,
        ScriptCondition::Before { time } => ctx.now < *time,
        ScriptCondition::All { of } => !of.is_empty() && of.iter().all(|c| eval_at(c, ctx, depth + 1)),
        ScriptCondition::Any { of } => of.iter().any(|c| eval_at(c, ctx, depth + 1)),
    }
}
