//! Post-election audit of a bus log.

use serde::Serialize;

use crate::protocol::{finalize, ElectionConfig, ElectionResult, ResultStatus};
use crate::transport::BusLog;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditCheck {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub election_id: String,
    pub ok: bool,
    pub checks: Vec<AuditCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<ElectionResult>,
}

impl AuditReport {
    pub fn failed(&self) -> impl Iterator<Item = &AuditCheck> {
        self.checks.iter().filter(|c| !c.ok)
    }
}

fn check(name: &'static str, ok: bool, detail: impl Into<String>) -> AuditCheck {
    AuditCheck {
        name,
        ok,
        detail: detail.into(),
    }
}

/// Flag codes reported under each audit check.
const FLAG_CHECKS: &[(&str, &[&str])] = &[
    ("mask-commitment", &["mask-opening"]),
    ("assignment-commitment", &["assignment-opening"]),
    ("masked-list", &["masked-list-mismatch"]),
    ("unmask-factor", &["unmask-inconsistent"]),
    ("fairness", &["fairness", "share-order", "share-target"]),
    ("senders", &["unauthorized", "duplicate"]),
];

pub fn audit(config: &ElectionConfig, log: &BusLog) -> AuditReport {
    let mut checks = Vec::new();
    let mut result = None;
    let chain = log.verify_chain();
    checks.push(check(
        "digest-chain",
        chain.is_ok(),
        match &chain {
            Ok(()) => format!("{} entries, head {}", log.len(), hex::encode(log.head())),
            Err(e) => e.to_string(),
        },
    ));
    if chain.is_ok() {
        match log.transcript(config) {
            Err(e) => checks.push(check("signatures", false, e.to_string())),
            Ok(transcript) => {
                checks.push(check(
                    "signatures",
                    true,
                    format!("{} envelopes verified", transcript.posted.len()),
                ));
                match finalize(config, &transcript) {
                    Err(e) => checks.push(check("complete", false, e.to_string())),
                    Ok(r) => {
                        checks.push(check("complete", true, "every round present"));
                        for (name, codes) in FLAG_CHECKS {
                            let hits: Vec<String> = r
                                .flags
                                .iter()
                                .filter(|f| codes.contains(&f.code.as_str()))
                                .map(|f| f.detail.clone())
                                .collect();
                            checks.push(check(name, hits.is_empty(), hits.join("; ")));
                        }
                        checks.push(check(
                            "receipts",
                            r.allegations.is_empty(),
                            r.allegations
                                .iter()
                                .map(|a| format!("{}: {}", a.voter, a.claim))
                                .collect::<Vec<_>>()
                                .join("; "),
                        ));
                        let tally_ok = r.anomaly.is_none() && r.totals.is_some();
                        checks.push(check(
                            "tally",
                            tally_ok,
                            match (&r.anomaly, &r.totals) {
                                (Some(a), _) => a.details.clone(),
                                (None, Some(t)) => format!("totals {t:?}"),
                                (None, None) => "tally withheld".into(),
                            },
                        ));
                        debug_assert!(tally_ok || r.status != ResultStatus::Complete);
                        result = Some(r);
                    }
                }
            }
        }
    }
    AuditReport {
        election_id: config.election_id.clone(),
        ok: checks.iter().all(|c| c.ok),
        checks,
        result,
    }
}
