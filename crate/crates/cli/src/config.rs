//! Experiment configuration schema. Strict: unknown keys are rejected and
//! every run record carries the hash of the resolved configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A numeric grid given by inclusive endpoints and a step count.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.min];
        }
        (0..self.steps)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }

    pub fn validate(&self, name: &str) -> Result<(), String> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(format!("{name}: grid endpoints must be finite"));
        }
        if self.steps == 0 {
            return Err(format!("{name}: grid needs at least one step"));
        }
        if self.steps > 1 && self.max <= self.min {
            return Err(format!("{name}: max must exceed min"));
        }
        Ok(())
    }
}

/// Logarithmic epsilon grid, descending from `max`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub per_decade: usize,
}

impl LogGrid {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let step = 10f64.powf(1.0 / self.per_decade as f64);
        let mut x = self.max;
        while x >= self.min * (1.0 - 1e-12) {
            out.push(x);
            x /= step;
        }
        out
    }

    pub fn validate(&self, name: &str) -> Result<(), String> {
        if self.min <= 0.0 || self.max <= self.min {
            return Err(format!("{name}: need 0 < min < max"));
        }
        if self.per_decade == 0 || self.per_decade > 64 {
            return Err(format!("{name}: per_decade must be in 1..=64"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MixingModel {
    /// One of: glauber, wis-chain, wis-chain-pair, star, search.
    pub kind: String,
    /// Sites (glauber/wis), branches (star), or elements (search).
    pub size: usize,
    pub beta: f64,
}

/// Top-level experiment configuration, tagged by experiment id.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "experiment", deny_unknown_fields)]
pub enum ExperimentConfig {
    #[serde(rename = "ising-phase-map")]
    IsingPhaseMap {
        n: usize,
        j1: Grid,
        j2: Grid,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "ising-fidelity")]
    IsingFidelity {
        n_values: Vec<usize>,
        paths: Vec<String>,
        eps: LogGrid,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "ising-ta")]
    IsingTa {
        n_values: Vec<usize>,
        paths: Vec<String>,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "wis-phase-map")]
    WisPhaseMap {
        n: usize,
        omega: Grid,
        ve: Grid,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "wis-gap")]
    WisGap {
        n_values: Vec<usize>,
        beta: Grid,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "wis-ta")]
    WisTa {
        n_values: Vec<usize>,
        paths: Vec<String>,
        /// Optional fixed target beta for path (i); default is 2 log n.
        #[serde(default)]
        beta_target: Option<f64>,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "star-thermo")]
    StarThermo {
        b_values: Vec<usize>,
        beta: Grid,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "star-gap")]
    StarGap {
        b_values: Vec<usize>,
        beta: Grid,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "star-ta")]
    StarTa {
        b_values: Vec<usize>,
        paths: Vec<String>,
        /// beta_final as a multiple of beta* (default 2).
        #[serde(default)]
        beta_final_factor: Option<f64>,
        /// Run the Schrödinger integration for t_a (slow); the path length
        /// is always computed.
        #[serde(default)]
        tdse: bool,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "star-sudden")]
    StarSudden {
        b_values: Vec<usize>,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "search-gap")]
    SearchGap {
        /// Powers of two: N = 2^k.
        n_exponents: Vec<u32>,
        paths: Vec<String>,
        s_steps: usize,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "search-ta")]
    SearchTa {
        n_exponents: Vec<u32>,
        paths: Vec<String>,
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "markov-mixing")]
    MarkovMixing {
        model: MixingModel,
        steps: usize,
        /// "exact" push-forward or "sampled:<walkers>".
        #[serde(default)]
        mode: Option<String>,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        out_dir: Option<String>,
    },
}

impl ExperimentConfig {
    pub fn id(&self) -> &'static str {
        match self {
            ExperimentConfig::IsingPhaseMap { .. } => "ising-phase-map",
            ExperimentConfig::IsingFidelity { .. } => "ising-fidelity",
            ExperimentConfig::IsingTa { .. } => "ising-ta",
            ExperimentConfig::WisPhaseMap { .. } => "wis-phase-map",
            ExperimentConfig::WisGap { .. } => "wis-gap",
            ExperimentConfig::WisTa { .. } => "wis-ta",
            ExperimentConfig::StarThermo { .. } => "star-thermo",
            ExperimentConfig::StarGap { .. } => "star-gap",
            ExperimentConfig::StarTa { .. } => "star-ta",
            ExperimentConfig::StarSudden { .. } => "star-sudden",
            ExperimentConfig::SearchGap { .. } => "search-gap",
            ExperimentConfig::SearchTa { .. } => "search-ta",
            ExperimentConfig::MarkovMixing { .. } => "markov-mixing",
        }
    }

    pub fn out_dir(&self) -> Option<&str> {
        match self {
            ExperimentConfig::IsingPhaseMap { out_dir, .. }
            | ExperimentConfig::IsingFidelity { out_dir, .. }
            | ExperimentConfig::IsingTa { out_dir, .. }
            | ExperimentConfig::WisPhaseMap { out_dir, .. }
            | ExperimentConfig::WisGap { out_dir, .. }
            | ExperimentConfig::WisTa { out_dir, .. }
            | ExperimentConfig::StarThermo { out_dir, .. }
            | ExperimentConfig::StarGap { out_dir, .. }
            | ExperimentConfig::StarTa { out_dir, .. }
            | ExperimentConfig::StarSudden { out_dir, .. }
            | ExperimentConfig::SearchGap { out_dir, .. }
            | ExperimentConfig::SearchTa { out_dir, .. }
            | ExperimentConfig::MarkovMixing { out_dir, .. } => out_dir.as_deref(),
        }
    }

    /// Sanity checks beyond the serde schema; returns field-level messages.
    pub fn validate(&self) -> Result<(), String> {
        let check_paths = |paths: &[String], allowed: &[&str]| -> Result<(), String> {
            if paths.is_empty() {
                return Err("paths: must not be empty".into());
            }
            for p in paths {
                if !allowed.contains(&p.as_str()) {
                    return Err(format!("paths: unknown id {p:?}, allowed {allowed:?}"));
                }
            }
            Ok(())
        };
        match self {
            ExperimentConfig::IsingPhaseMap { n, j1, j2, .. } => {
                if n % 2 != 0 || *n < 4 {
                    return Err("n: must be even and at least 4".into());
                }
                j1.validate("j1")?;
                j2.validate("j2")
            }
            ExperimentConfig::IsingFidelity {
                n_values, paths, eps, ..
            } => {
                if n_values.iter().any(|n| n % 2 != 0 || *n < 4) {
                    return Err("n_values: chain lengths must be even and >= 4".into());
                }
                check_paths(paths, &["i", "ii", "iii", "iv"])?;
                eps.validate("eps")
            }
            ExperimentConfig::IsingTa { n_values, paths, .. } => {
                if n_values.iter().any(|n| n % 2 != 0 || *n < 4) {
                    return Err("n_values: chain lengths must be even and >= 4".into());
                }
                check_paths(paths, &["i", "ii", "iii", "iv"])
            }
            ExperimentConfig::WisPhaseMap { n, omega, ve, .. } => {
                if *n < 4 || *n % 6 != 0 {
                    return Err(
                        "n: must be a multiple of 6 so both orders are commensurate".into(),
                    );
                }
                omega.validate("omega")?;
                ve.validate("ve")
            }
            ExperimentConfig::WisGap { n_values, beta, .. } => {
                if n_values.iter().any(|n| *n < 4) {
                    return Err("n_values: need n >= 4".into());
                }
                beta.validate("beta")
            }
            ExperimentConfig::WisTa { n_values, paths, .. } => {
                if n_values.iter().any(|n| *n < 4 || *n % 2 != 0) {
                    return Err("n_values: need even n >= 4".into());
                }
                check_paths(paths, &["i", "ii"])
            }
            ExperimentConfig::StarThermo { b_values, beta, .. }
            | ExperimentConfig::StarGap { b_values, beta, .. } => {
                if b_values.iter().any(|b| *b == 0) {
                    return Err("b_values: need b >= 1".into());
                }
                beta.validate("beta")
            }
            ExperimentConfig::StarTa { b_values, paths, .. } => {
                if b_values.iter().any(|b| *b == 0) {
                    return Err("b_values: need b >= 1".into());
                }
                check_paths(paths, &["family", "improved", "constant-drive"])
            }
            ExperimentConfig::StarSudden { b_values, .. } => {
                if b_values.iter().any(|b| *b == 0) {
                    return Err("b_values: need b >= 1".into());
                }
                Ok(())
            }
            ExperimentConfig::SearchGap {
                n_exponents,
                paths,
                s_steps,
                ..
            } => {
                if n_exponents.iter().any(|k| *k == 0 || *k > 24) {
                    return Err("n_exponents: need 1 <= k <= 24".into());
                }
                if *s_steps < 2 {
                    return Err("s_steps: need at least 2".into());
                }
                check_paths(paths, &["i", "ii"])
            }
            ExperimentConfig::SearchTa {
                n_exponents, paths, ..
            } => {
                if n_exponents.iter().any(|k| *k == 0 || *k > 24) {
                    return Err("n_exponents: need 1 <= k <= 24".into());
                }
                check_paths(paths, &["i", "ii"])
            }
            ExperimentConfig::MarkovMixing { model, steps, mode, .. } => {
                let allowed = ["glauber", "wis-chain", "wis-chain-pair", "star", "search"];
                if !allowed.contains(&model.kind.as_str()) {
                    return Err(format!("model.kind: unknown {:?}", model.kind));
                }
                if model.beta < 0.0 {
                    return Err("model.beta: must be nonnegative".into());
                }
                if *steps == 0 {
                    return Err("steps: must be positive".into());
                }
                if let Some(m) = mode {
                    if m != "exact" && !m.starts_with("sampled:") {
                        return Err(format!("mode: expected \"exact\" or \"sampled:<walkers>\", got {m:?}"));
                    }
                    if let Some(w) = m.strip_prefix("sampled:") {
                        w.parse::<usize>()
                            .map_err(|_| format!("mode: bad walker count {w:?}"))?;
                    }
                }
                Ok(())
            }
        }
    }

    /// SHA-256 of the canonical (serde-serialized) resolved configuration.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse a config file with path-aware diagnostics.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        format!(
            "config error at {} (line {}, column {}): {}",
            e.path(),
            e.inner().line(),
            e.inner().column(),
            e.inner()
        )
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_config() {
        let cfg = parse_config(
            r#"{"experiment": "star-thermo", "b_values": [2, 4], "beta": {"min": 0.0, "max": 1.0, "steps": 5}}"#,
        )
        .unwrap();
        assert_eq!(cfg.id(), "star-thermo");
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = parse_config(
            r#"{"experiment": "star-thermo", "b_values": [2], "beta": {"min": 0, "max": 1, "steps": 2}, "bogus": 1}"#,
        )
        .unwrap_err();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn validation_catches_bad_grid() {
        let err = parse_config(
            r#"{"experiment": "star-thermo", "b_values": [2], "beta": {"min": 1.0, "max": 0.0, "steps": 5}}"#,
        )
        .unwrap_err();
        assert!(err.contains("beta"), "{err}");
    }

    #[test]
    fn hash_stable_and_sensitive() {
        let a = parse_config(
            r#"{"experiment": "star-sudden", "b_values": [8, 10]}"#,
        )
        .unwrap();
        let b = parse_config(
            r#"{"experiment": "star-sudden", "b_values": [8, 10]}"#,
        )
        .unwrap();
        let c = parse_config(
            r#"{"experiment": "star-sudden", "b_values": [8, 12]}"#,
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn log_grid_descends() {
        let g = LogGrid {
            min: 0.01,
            max: 0.1,
            per_decade: 8,
        };
        let v = g.values();
        assert_eq!(v.len(), 9);
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }
}
