use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use strata_core::effective::Regime;

use crate::error::ErrorRecord;
use crate::run::Command;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn limit(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

pub fn regime_record(r: &Regime) -> Value {
    json!({
        "class": r.class,
        "k": limit(r.k),
        "kappa": limit(r.kappa),
        "theta": r.theta,
        "l": r.l,
        "description": r.describe(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: Command,
    pub status: &'static str,
    pub exit_code: i32,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    pub regime: Option<Value>,
    pub versions: Value,
    pub seeds: Value,
    pub threads: Option<usize>,
    pub artifacts: Vec<String>,
    pub error: Option<ErrorRecord>,
}

impl Manifest {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            status: "ok",
            exit_code: 0,
            config_path: None,
            config_sha256: None,
            regime: None,
            versions: json!({
                "strata-cli": env!("CARGO_PKG_VERSION"),
                "strata-core": strata_core::VERSION,
            }),
            seeds: Value::Null,
            threads: None,
            artifacts: Vec::new(),
            error: None,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn infinite_limits_are_strings() {
        let r = Regime {
            class: strata_core::effective::InterlayerClass::Critical,
            k: f64::INFINITY,
            kappa: 0.5,
            theta: 0.0,
            l: 1.0,
        };
        let v = regime_record(&r);
        assert_eq!(v["k"], "inf");
        assert_eq!(v["kappa"], 0.5);
        assert_eq!(v["class"], "critical");
    }
}
