use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every strategy the evaluation harness and the service can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "zero-shot")]
    ZeroShot,
    #[serde(rename = "lora1")]
    Lora1,
    #[serde(rename = "lora2")]
    Lora2,
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "concat")]
    Concat,
    #[serde(rename = "ties")]
    Ties,
    #[serde(rename = "lorahub")]
    LoraHub,
    #[serde(rename = "projection")]
    Projection,
    #[serde(rename = "joint")]
    Joint,
    #[serde(rename = "two-step")]
    TwoStep,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::ZeroShot,
        Method::Lora1,
        Method::Lora2,
        Method::Linear,
        Method::Concat,
        Method::Ties,
        Method::LoraHub,
        Method::Projection,
        Method::Joint,
        Method::TwoStep,
    ];

    /// One-pass baselines that the compositional methods should beat.
    pub const NAIVE: [Method; 7] = [
        Method::ZeroShot,
        Method::Lora1,
        Method::Lora2,
        Method::Linear,
        Method::Concat,
        Method::Ties,
        Method::LoraHub,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ZeroShot => "zero-shot",
            Method::Lora1 => "lora1",
            Method::Lora2 => "lora2",
            Method::Linear => "linear",
            Method::Concat => "concat",
            Method::Ties => "ties",
            Method::LoraHub => "lorahub",
            Method::Projection => "projection",
            Method::Joint => "joint",
            Method::TwoStep => "two-step",
        }
    }

    /// Row label in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::ZeroShot => "Zero-shot",
            Method::Lora1 => "Primary-task LoRA",
            Method::Lora2 => "Secondary-task LoRA",
            Method::Linear => "Linear merge",
            Method::Concat => "Concat merge",
            Method::Ties => "TIES merge",
            Method::LoraHub => "LoraHub merge",
            Method::Projection => "Projection merge",
            Method::Joint => "Joint-expert LoRA",
            Method::TwoStep => "Two-step LoRA usage",
        }
    }

    pub fn inference_passes(self) -> u32 {
        if self == Method::TwoStep {
            2
        } else {
            1
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|m| m.name()).collect()
    }

    /// `all` or a comma-separated list of method names, deduplicated in
    /// registry order.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        let mut picked = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            picked.push(part.parse::<Method>()?);
        }
        if picked.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        Ok(Self::ALL.into_iter().filter(|m| picked.contains(m)).collect())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown method {s:?}; expected one of {}",
                Method::names().join(", ")
            ))
        })
    }
}
