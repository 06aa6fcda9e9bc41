//! Election configuration: the roster, candidates, group and mode flags.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ballot::{check_lambda_policy, BallotError, LambdaPolicy, PrimeTable};
use crate::group::{GroupError, GroupParams, ParamsFile, Preset};
use crate::PartyId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("strict lambda policy: {0}")]
    LambdaPolicy(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Ballot(#[from] BallotError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyEntry {
    pub id: u32,
    /// Hex-encoded Ed25519 verification key.
    pub verification_key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfigFile {
    election_id: String,
    voters: u32,
    candidates: Vec<String>,
    lambda: u32,
    distributor: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<ParamsFile>,
    #[serde(default)]
    strict_lambda: bool,
    #[serde(default)]
    ea_mode: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    round_timeout_secs: Option<u64>,
    #[serde(default)]
    parties: Vec<PartyEntry>,
}

/// Everything the parties agree on before the election starts.
///
/// Voters are `0..voters`. Outside authority mode the distributor is one of
/// them; in authority mode it is the extra party `voters`, holds no key share
/// and casts no vote.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectionConfig {
    pub election_id: String,
    pub voters: u32,
    pub candidates: Vec<String>,
    pub lambda: u32,
    pub distributor: PartyId,
    pub params: GroupParams,
    pub preset: Option<Preset>,
    pub strict_lambda: bool,
    pub ea_mode: bool,
    pub round_timeout: Option<Duration>,
    /// Verification keys by party; empty when signatures are not in use.
    pub verification_keys: BTreeMap<PartyId, [u8; 32]>,
}

impl ElectionConfig {
    /// A toy-group configuration with voter 0 distributing.
    pub fn new(election_id: &str, voters: u32, candidates: &[&str], lambda: u32) -> Self {
        ElectionConfig {
            election_id: election_id.to_string(),
            voters,
            candidates: candidates.iter().map(|c| c.to_string()).collect(),
            lambda,
            distributor: PartyId(0),
            params: GroupParams::toy64(),
            preset: Some(Preset::Toy64),
            strict_lambda: false,
            ea_mode: false,
            round_timeout: None,
            verification_keys: BTreeMap::new(),
        }
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.params = preset.params();
        self.preset = Some(preset);
        self
    }

    /// Switches to authority mode: the distributor becomes party `voters`.
    pub fn with_ea_mode(mut self) -> Self {
        self.ea_mode = true;
        self.distributor = PartyId(self.voters);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        let (params, preset) = match (&file.preset, &file.params) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid("give either `preset` or `params`, not both".into()))
            }
            (Some(name), None) => {
                let preset: Preset = name.parse()?;
                (preset.params(), Some(preset))
            }
            (None, Some(p)) => (GroupParams::from_file(p)?, None),
            (None, None) => (GroupParams::toy64(), Some(Preset::Toy64)),
        };
        let mut verification_keys = BTreeMap::new();
        for entry in &file.parties {
            let bytes = hex::decode(&entry.verification_key)
                .ok()
                .and_then(|b| <[u8; 32]>::try_from(b).ok())
                .ok_or_else(|| ConfigError::Invalid(format!("party {} verification key", entry.id)))?;
            if verification_keys.insert(PartyId(entry.id), bytes).is_some() {
                return Err(ConfigError::Invalid(format!("party {} listed twice", entry.id)));
            }
        }
        let config = ElectionConfig {
            election_id: file.election_id,
            voters: file.voters,
            candidates: file.candidates,
            lambda: file.lambda,
            distributor: PartyId(file.distributor),
            params,
            preset,
            strict_lambda: file.strict_lambda,
            ea_mode: file.ea_mode,
            round_timeout: file.round_timeout_secs.map(Duration::from_secs),
            verification_keys,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            election_id: self.election_id.clone(),
            voters: self.voters,
            candidates: self.candidates.clone(),
            lambda: self.lambda,
            distributor: self.distributor.0,
            preset: self.preset.map(|p| p.name().to_string()),
            params: if self.preset.is_some() {
                None
            } else {
                Some(self.params.to_file())
            },
            strict_lambda: self.strict_lambda,
            ea_mode: self.ea_mode,
            round_timeout_secs: self.round_timeout.map(|d| d.as_secs()),
            parties: self
                .verification_keys
                .iter()
                .map(|(id, key)| PartyEntry {
                    id: id.0,
                    verification_key: hex::encode(key),
                })
                .collect(),
        };
        toml::to_string(&file).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let min_voters = if self.ea_mode { 1 } else { 2 };
        if self.voters < min_voters {
            return Err(ConfigError::Invalid(format!("need at least {min_voters} voters")));
        }
        if self.candidates.is_empty() || self.lambda == 0 {
            return Err(ConfigError::Invalid("need at least one candidate and lambda >= 1".into()));
        }
        if self.election_id.is_empty() {
            return Err(ConfigError::Invalid("empty election id".into()));
        }
        if self.ea_mode {
            if self.distributor != PartyId(self.voters) {
                return Err(ConfigError::Invalid(format!(
                    "in authority mode the distributor must be party {}",
                    self.voters
                )));
            }
        } else if self.distributor.0 >= self.voters {
            return Err(ConfigError::Invalid(format!(
                "distributor {} is not one of the {} voters",
                self.distributor, self.voters
            )));
        }
        if !self.verification_keys.is_empty() {
            let expected: Vec<PartyId> = self.participants();
            let listed: Vec<PartyId> = self.verification_keys.keys().copied().collect();
            if expected != listed {
                return Err(ConfigError::Invalid("roster does not match the participants".into()));
            }
        }
        if let LambdaPolicy::Warning(w) = self.lambda_policy() {
            if self.strict_lambda {
                return Err(ConfigError::LambdaPolicy(w));
            }
        }
        self.table()?;
        Ok(())
    }

    pub fn lambda_policy(&self) -> LambdaPolicy {
        check_lambda_policy(self.lambda, self.candidate_count(), self.voters, self.ea_mode)
    }

    pub fn candidate_count(&self) -> u32 {
        self.candidates.len() as u32
    }

    pub fn table(&self) -> Result<PrimeTable, BallotError> {
        PrimeTable::select(self.lambda, self.candidate_count(), self.voters, &self.params)
    }

    pub fn voter_ids(&self) -> Vec<PartyId> {
        (0..self.voters).map(PartyId).collect()
    }

    /// Voters plus the authority, if any.
    pub fn participants(&self) -> Vec<PartyId> {
        let mut ids = self.voter_ids();
        if self.ea_mode {
            ids.push(self.distributor);
        }
        ids
    }

    pub fn is_voter(&self, id: PartyId) -> bool {
        id.0 < self.voters
    }

    pub fn is_participant(&self, id: PartyId) -> bool {
        self.is_voter(id) || id == self.distributor
    }

    /// Voters who obtain a masked prime through oblivious transfer.
    pub fn ot_receivers(&self) -> Vec<PartyId> {
        self.voter_ids()
            .into_iter()
            .filter(|&v| v != self.distributor)
            .collect()
    }

    /// Votes carrying the mask, i.e. the multiple of `s` the unmask cancels.
    pub fn masked_votes(&self) -> u32 {
        self.ot_receivers().len() as u32
    }

    /// Domain separation for share targets.
    pub fn context(&self) -> Vec<u8> {
        format!("boardroom/election/{}", self.election_id).into_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = ElectionConfig::new("board-7", 4, &["Ann", "Ben", "Cal"], 3);
        c.verification_keys = (0..4).map(|i| (PartyId(i), [i as u8; 32])).collect();
        c.round_timeout = Some(Duration::from_secs(60));
        let text = c.to_toml();
        assert_eq!(ElectionConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn explicit_params() {
        let text = r#"
            election_id = "x"
            voters = 3
            candidates = ["a", "b"]
            lambda = 2
            distributor = 1
            [params]
            modulus = "fffffffffffffa43"
            generator = "4"
        "#;
        let c = ElectionConfig::from_toml(text).unwrap();
        assert_eq!(c.params, GroupParams::toy64());
        assert_eq!(c.preset, None);
        assert_eq!(c.ot_receivers(), vec![PartyId(0), PartyId(2)]);
    }

    #[test]
    fn rejects_bad_rosters() {
        let mut c = ElectionConfig::new("x", 1, &["a"], 3);
        assert!(c.validate().is_err());
        c.voters = 3;
        c.distributor = PartyId(3);
        assert!(c.validate().is_err());
        let c = ElectionConfig::new("x", 3, &["a", "b"], 2).with_ea_mode();
        c.validate().unwrap();
        assert_eq!(c.participants().len(), 4);
        assert_eq!(c.masked_votes(), 3);
    }

    #[test]
    fn strict_lambda_refuses() {
        let mut c = ElectionConfig::new("x", 4, &["a", "b", "c"], 1);
        c.validate().unwrap();
        c.strict_lambda = true;
        assert!(matches!(c.validate(), Err(ConfigError::LambdaPolicy(_))));
        let c = ElectionConfig {
            strict_lambda: true,
            ..ElectionConfig::new("x", 4, &["a", "b", "c"], 1).with_ea_mode()
        };
        c.validate().unwrap();
    }
}
