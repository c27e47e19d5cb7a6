//! Scenarios shipped with the simulator.

use super::scenario::{ScenarioConfig, ScenarioError};

const PARTIES: &str = r#"
[parties.alice]
acoin = 15000
bcoin = 1000

[parties.bob]
bcoin = 10000

[parties.charlie]
bcoin = 20000
bid = 12000
"#;

struct Builtin {
    name: &'static str,
    description: &'static str,
    body: &'static str,
    standard_parties: bool,
}

const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "atomic_swap_baseline",
        description: "plain cross-chain swap with hash-time locks on both ledgers",
        body: r#"
kind = "swap"

[parties.alice]
acoin = 15000

[parties.bob]
bcoin = 10000

[expect]
deltas = { "alice.acoin" = -5000, "alice.bcoin" = 5000, "bob.acoin" = 5000, "bob.bcoin" = -5000 }
"#,
        standard_parties: false,
    },
    Builtin {
        name: "happy_path",
        description: "loan funded, withdrawn, repaid; collateral reclaimed",
        body: r#"
[expect]
terminal = "closed"
deltas = { "alice.bcoin" = -500, "bob.bcoin" = 500, "alice.acoin" = 0 }
"#,
        standard_parties: true,
    },
    Builtin {
        name: "default_bidding",
        description: "borrower defaults; the collateral is auctioned and settled",
        body: r#"
[parties.alice.strategy]
repay = "omit"

[expect]
terminal = "settled"
deltas = { "alice.acoin" = -15000, "alice.bcoin" = 11000, "bob.bcoin" = 1000, "charlie.bcoin" = -12000, "charlie.acoin" = 15000 }
"#,
        standard_parties: true,
    },
    Builtin {
        name: "default_no_bids_seizure",
        description: "borrower defaults and nobody bids; the lender seizes",
        body: r#"
[parties.alice]
acoin = 15000
bcoin = 1000

[parties.alice.strategy]
repay = "omit"

[parties.bob]
bcoin = 10000

[expect]
terminal = "seizure-fallback"
deltas = { "alice.acoin" = -6000, "alice.bcoin" = 10000, "bob.acoin" = 6000, "bob.bcoin" = -10000 }
"#,
        standard_parties: false,
    },
    Builtin {
        name: "nonreciprocating_lender",
        description: "lender never accepts repayment; borrower takes it back",
        body: r#"
[parties.bob.strategy]
accept-repayment = "omit"

[expect]
terminal = "seizure-fallback"
deltas = { "alice.acoin" = -6000, "alice.bcoin" = 10000, "bob.acoin" = 6000, "bob.bcoin" = -10000 }
"#,
        standard_parties: true,
    },
    Builtin {
        name: "double_agent_alice",
        description: "borrower bids through an alias and withholds her settlement secret",
        body: r#"
[parties.alice]
acoin = 15000
bcoin = 1000
colludes_with = ["other-1"]

[parties.alice.strategy]
repay = "omit"
reveal-settlement = "omit"

[parties.bob]
bcoin = 10000
reveal_order = "reveal-first"

[parties.other-1]
bcoin = 20000
bid = 12000
colludes_with = ["alice"]

[expect]
terminal = "settled"
deltas = { "bob.bcoin" = 1000, "other-1.acoin" = 15000, "other-1.bcoin" = -12000 }
"#,
        standard_parties: false,
    },
    Builtin {
        name: "winner_walks_away",
        description: "winning bidder never reveals its secret and takes the bid back",
        body: r#"
[parties.alice.strategy]
repay = "omit"

[parties.charlie.strategy]
reveal-c = "omit"

[expect]
terminal = "seizure-fallback"
deltas = { "alice.acoin" = -6000, "alice.bcoin" = 10000, "bob.acoin" = 6000, "bob.bcoin" = -10000, "charlie.bcoin" = 0 }
"#,
        standard_parties: true,
    },
    Builtin {
        name: "lender_unresponsive_refund",
        description: "lender never hands over B1; principal refunded, collateral returned late",
        body: r#"
[parties.bob.strategy]
share-b1 = "omit"

[expect]
terminal = "principal-refunded"
deltas = { "alice.acoin" = 0, "alice.bcoin" = 0, "bob.bcoin" = 0 }
"#,
        standard_parties: true,
    },
    Builtin {
        name: "signatures_withheld",
        description: "borrower refuses to co-sign the liquidation",
        body: r#"
[parties.alice.strategy]
repay = "omit"
sign-liquidation = "omit"

[expect]
terminal = "seizure-fallback"
deltas = { "alice.acoin" = -6000, "bob.acoin" = 6000, "charlie.bcoin" = 0 }
"#,
        standard_parties: true,
    },
];

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn source(b: &Builtin) -> String {
    let mut table: toml::Table =
        if b.standard_parties { toml::from_str(PARTIES).expect("party block parses") } else { toml::Table::new() };
    merge(&mut table, toml::from_str(b.body).expect("builtin parses"));
    table.insert("name".into(), toml::Value::String(b.name.into()));
    table.insert("description".into(), toml::Value::String(b.description.into()));
    toml::to_string(&table).expect("table serializes")
}

/// `(name, description)` for every builtin.
pub fn list() -> Vec<(&'static str, &'static str)> {
    BUILTINS.iter().map(|b| (b.name, b.description)).collect()
}

pub fn get(name: &str) -> Option<ScenarioConfig> {
    let b = BUILTINS.iter().find(|b| b.name == name)?;
    Some(ScenarioConfig::from_toml(&source(b)).expect("builtin scenario is valid"))
}

/// A builtin by name, or a TOML file path.
pub fn load(name_or_path: &str) -> Result<ScenarioConfig, ScenarioError> {
    if let Some(c) = get(name_or_path) {
        return Ok(c);
    }
    let text = std::fs::read_to_string(name_or_path).map_err(|e| {
        ScenarioError::Parse(format!("no builtin scenario `{name_or_path}` and cannot read it as a file: {e}"))
    })?;
    ScenarioConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_parses_and_validates() {
        for (name, _) in list() {
            let c = get(name).unwrap();
            assert_eq!(c.name, name);
            c.validate().unwrap();
        }
    }

    #[test]
    fn overlay_keeps_unrelated_party_fields() {
        let c = get("winner_walks_away").unwrap();
        let charlie = c.party(crate::primitives::PartyId::Charlie);
        assert_eq!(charlie.bid, Some(12_000));
        assert_eq!(charlie.strategy.len(), 1);
    }
}
