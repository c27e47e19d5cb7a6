use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::primitives::{ChainId, PartyId, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Setup,
    Clock,
    TxAccepted,
    TxRejected,
    StateTransition,
    SecretRevealed,
    SecretShared,
    BidPlaced,
    Claim,
}

impl EventKind {
    /// Kinds that drive the simulation; everything else is derived from them.
    pub fn is_input(self) -> bool {
        matches!(
            self,
            EventKind::Setup
                | EventKind::Clock
                | EventKind::TxAccepted
                | EventKind::TxRejected
                | EventKind::SecretShared
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Actor {
    Party(PartyId),
    System(SystemActor),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemActor {
    System,
}

impl Actor {
    pub const SYSTEM: Actor = Actor::System(SystemActor::System);

    pub fn party(self) -> Option<PartyId> {
        match self {
            Actor::Party(p) => Some(p),
            Actor::System(_) => None,
        }
    }
}

/// One line of a JSON-lines trace. Field order here is the on-disk key order;
/// `detail` objects have sorted keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEvent {
    pub seq: u64,
    pub time: Timestamp,
    pub chain: Option<ChainId>,
    pub actor: Actor,
    pub kind: EventKind,
    pub detail: Value,
}

impl TraceEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace event serializes")
    }
}

pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_in_fixed_order() {
        let e = TraceEvent {
            seq: 3,
            time: Timestamp::from_secs(9),
            chain: Some(ChainId::BCoin),
            actor: Actor::Party(PartyId::Bob),
            kind: EventKind::StateTransition,
            detail: json!({"to": "funded", "from": null}),
        };
        assert_eq!(
            e.to_line(),
            r#"{"seq":3,"time":9,"chain":"BCoin","actor":"bob","kind":"state-transition","detail":{"from":null,"to":"funded"}}"#
        );
        let back: TraceEvent = serde_json::from_str(&e.to_line()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn system_actor_parses() {
        let a: Actor = serde_json::from_str("\"system\"").unwrap();
        assert_eq!(a, Actor::SYSTEM);
        let p: Actor = serde_json::from_str("\"other-2\"").unwrap();
        assert_eq!(p, Actor::Party(PartyId::Other(2)));
    }
}
