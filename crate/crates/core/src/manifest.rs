//! Run manifests embedded in every report so a result can be regenerated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Everything needed to replay a run. Deliberately free of timestamps and
/// host details so identical runs serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Replayable arguments (everything after the subcommand, minus output
    /// and worker flags).
    pub args: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub criteria: BTreeMap<String, Value>,
    pub parameters: BTreeMap<String, Value>,
    #[serde(rename = "B")]
    pub replications: Option<u64>,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            command: command.into(),
            args,
            inputs: Vec::new(),
            outputs: Vec::new(),
            criteria: BTreeMap::new(),
            parameters: BTreeMap::new(),
            replications: None,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn input(mut self, path: impl Into<String>) -> Self {
        self.inputs.push(path.into());
        self
    }

    pub fn output(mut self, path: impl Into<String>) -> Self {
        self.outputs.push(path.into());
        self
    }

    pub fn criterion(mut self, key: &str, value: impl Serialize) -> Self {
        self.criteria.insert(key.to_string(), to_value(value));
        self
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters.insert(key.to_string(), to_value(value));
        self
    }

    pub fn random(mut self, replications: Option<u64>, seed: u64) -> Self {
        self.replications = replications;
        self.seed = Some(seed);
        self
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let m = RunManifest::new("test", vec!["--seed".into(), "7".into()])
            .input("c.csv")
            .param("top_k", 12)
            .random(Some(1000), 7);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"B\":1000"));
        let back: RunManifest = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
