//! The JSON run configuration. Every key is optional; command-line flags
//! override whatever the file sets.

use std::path::{Path, PathBuf};

use label_audit::gradient::LissaConfig;
use label_audit::{Activation, ModelConfig, NoiseKind, NoiseSpec, RectifyConfig, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const METHODS: [&str; 9] = ["sc", "nm", "ce", "if", "gd", "gc", "tracin", "sim-cos", "sim-dot"];

pub const OUT_ENV: &str = "LABEL_AUDIT_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds every stage (synthesis, split, noise, training, LiSSA) when set.
    pub seed: Option<u64>,
    pub synth: SynthSpec,
    /// Auxiliary set size `m`.
    pub aux_size: usize,
    /// Held-out test set size for retraining experiments; 0 disables it.
    pub test_size: usize,
    pub noise: NoiseSpec,
    pub model: ModelConfig,
    pub rectify: RectifyConfig,
    pub lissa: LissaConfig,
    pub methods: Vec<String>,
    pub t_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Sampled pairs for the kernel-ratio check.
    pub theory_pairs: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            synth: SynthSpec::default(),
            aux_size: 1000,
            test_size: 0,
            noise: NoiseSpec {
                kind: NoiseKind::Uniform,
                rate: 0.10,
                seed: 16,
            },
            model: ModelConfig {
                hidden: 32,
                activation: Activation::Relu,
                epochs: 30,
                ..ModelConfig::default()
            },
            rectify: RectifyConfig::default(),
            lissa: LissaConfig::default(),
            methods: METHODS.iter().map(|m| m.to_string()).collect(),
            t_grid: label_audit::evaluation::default_t_grid(),
            seeds: vec![16, 32, 64, 128],
            theory_pairs: 20_000,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::argument(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text).map_err(|e| CliError::format(format!("config {}: {e}", p.display())))
            }
        }
    }

    /// Parse a config, filling missing keys (nested ones too) from the run
    /// defaults rather than each section's own defaults.
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let user: serde_json::Value = serde_json::from_str(text)?;
        let mut merged = serde_json::to_value(RunConfig::default())?;
        merge(&mut merged, user);
        serde_json::from_value(merged)
    }

    /// Propagate a single run seed to every seeded stage.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.synth.seed = seed;
        self.noise.seed = seed;
        self.model.seed = seed;
        self.lissa.seed = seed;
    }

    /// The seed for splits and sampling.
    pub fn run_seed(&self) -> u64 {
        self.seed.unwrap_or(self.synth.seed)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::argument("seeds must be non-empty"));
        }
        if let Some(m) = self.methods.iter().find(|m| !METHODS.contains(&m.as_str())) {
            return Err(CliError::argument(format!(
                "unknown method {m:?}; expected one of {}",
                METHODS.join(", ")
            )));
        }
        if self.t_grid.is_empty()
            || self.t_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0))
            || self.t_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(CliError::argument(
                "t grid must be strictly increasing values in (0, 1]",
            ));
        }
        self.model.validate()?;
        Ok(())
    }

    /// Flag, then config key, then `LABEL_AUDIT_OUT`, then `./out`.
    pub fn resolve_out(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    use serde_json::Value;
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let c: RunConfig =
            serde_json::from_str(r#"{"lissa": {"depth": 50}, "noise": {"kind": "uniform", "rate": 0.2, "seed": 1}}"#)
                .unwrap();
        assert_eq!(c.lissa.depth, 50);
        assert_eq!(c.lissa.damping, LissaConfig::default().damping);
        assert_eq!(c.noise.rate, 0.2);
        assert_eq!(c.aux_size, 1000);
    }

    #[test]
    fn nested_partial_keeps_run_defaults() {
        let c = RunConfig::from_json(r#"{"model": {"epochs": 3}}"#).unwrap();
        assert_eq!(c.model.epochs, 3);
        assert_eq!(c.model.hidden, 32);
        assert_eq!(c.model.activation, Activation::Relu);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"lisa": {}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"hiden": 4}}"#).is_err());
    }

    #[test]
    fn method_names_are_checked() {
        let c = RunConfig {
            methods: vec!["sim-cos".into(), "knn".into()],
            ..RunConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().code, 2);
    }

    #[test]
    fn seed_reaches_every_stage() {
        let mut c = RunConfig::default();
        c.apply_seed(64);
        assert_eq!(
            (c.synth.seed, c.noise.seed, c.model.seed, c.lissa.seed),
            (64, 64, 64, 64)
        );
    }
}
