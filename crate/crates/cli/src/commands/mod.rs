pub mod complete;
pub mod ingest;
pub mod simulate;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use tcache::completion::{ModeSelection, UpdateRule};
use tcache::ingest::{Pairing, Weighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelectArg {
    Sigma,
    MinDim,
}

impl From<ModeSelectArg> for ModeSelection {
    fn from(a: ModeSelectArg) -> Self {
        match a {
            ModeSelectArg::Sigma => ModeSelection::SigmaMax,
            ModeSelectArg::MinDim => ModeSelection::MinDim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateArg {
    Multi,
    Rank1,
}

impl From<UpdateArg> for UpdateRule {
    fn from(a: UpdateArg) -> Self {
        match a {
            UpdateArg::Multi => UpdateRule::MultiRank,
            UpdateArg::Rank1 => UpdateRule::RankOne,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorArg {
    Lp,
    #[value(alias = "mp")]
    #[serde(alias = "mp")]
    Mean,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToggleArg {
    On,
    Off,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingArg {
    #[value(name = "self", alias = "self-diagonal")]
    #[serde(rename = "self", alias = "self-diagonal")]
    SelfDiagonal,
    Cosession,
}

impl PairingArg {
    pub fn resolve(self, gap_hours: f64) -> Pairing {
        match self {
            PairingArg::SelfDiagonal => Pairing::SelfDiagonal,
            PairingArg::Cosession => Pairing::CoSession { gap_hours },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingArg {
    Count,
    Stars,
}

impl From<WeightingArg> for Weighting {
    fn from(a: WeightingArg) -> Self {
        match a {
            WeightingArg::Count => Weighting::Count,
            WeightingArg::Stars => Weighting::Stars,
        }
    }
}
