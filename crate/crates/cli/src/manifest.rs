use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Provenance block written into every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub subcommand: String,
    pub case_path: Option<String>,
    /// SHA-256 of the case file bytes.
    pub case_sha256: Option<String>,
    pub model: String,
    /// Every subcommand option, solver settings included.
    pub settings: Value,
    pub seed: u64,
    pub output: Option<String>,
    pub tool_version: String,
    /// SHA-256 over everything above except `output` and `tool_version`.
    pub config_fingerprint: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl ExperimentManifest {
    pub fn new(
        subcommand: &str,
        case: Option<(&str, &[u8])>,
        model: &str,
        settings: Value,
        seed: u64,
        output: Option<String>,
    ) -> Self {
        let case_path = case.map(|(p, _)| p.to_string());
        let case_sha256 = case.map(|(_, bytes)| sha256_hex(bytes));
        let keyed = serde_json::json!({
            "subcommand": subcommand,
            "case_sha256": case_sha256,
            "model": model,
            "settings": settings,
            "seed": seed,
        });
        let config_fingerprint = sha256_hex(keyed.to_string().as_bytes());
        Self {
            subcommand: subcommand.to_string(),
            case_path,
            case_sha256,
            model: model.to_string(),
            settings,
            seed,
            output,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_fingerprint,
        }
    }

    /// `# key: value` lines for the head of a CSV file.
    pub fn csv_comment(&self) -> String {
        let opt = |o: &Option<String>| o.clone().unwrap_or_else(|| "-".into());
        let lines = [
            ("subcommand", self.subcommand.clone()),
            ("case_path", opt(&self.case_path)),
            ("case_sha256", opt(&self.case_sha256)),
            ("model", self.model.clone()),
            ("settings", self.settings.to_string()),
            ("seed", self.seed.to_string()),
            ("output", opt(&self.output)),
            ("tool_version", self.tool_version.clone()),
            ("config_fingerprint", self.config_fingerprint.clone()),
        ];
        lines.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }
}
