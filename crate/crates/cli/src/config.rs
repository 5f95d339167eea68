//! Training configuration: a TOML file overlaid by command-line flags.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use btot_core::{BetaPriorParams, HeldoutMode, ModelKind, ModelSpec, MomentMethod, NyScheme, TrainConfig, TrainMode};
use clap::Args;
use serde::{Deserialize, Deserializer};

use crate::error::{CliError, CliResult};

fn from_str_opt<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    let s: Option<String> = Option::deserialize(d)?;
    s.map(|s| s.parse::<T>().map_err(serde::de::Error::custom)).transpose()
}

/// Every setting is optional so that file and flags can be merged; keys in
/// the file are the flag names with `_` for `-`.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// lda, tot, btot or wbtot
    #[arg(long)]
    #[serde(default, deserialize_with = "from_str_opt")]
    pub model: Option<ModelKind>,
    /// Number of topics
    #[arg(long)]
    pub k: Option<usize>,
    /// batch or online
    #[arg(long)]
    #[serde(default, deserialize_with = "from_str_opt")]
    pub mode: Option<TrainMode>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// EM iterations (batch) or corpus passes (online)
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Perplexity-change stopping threshold
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// const:<c>, frac:<d> or sqrt
    #[arg(long)]
    #[serde(default, deserialize_with = "from_str_opt")]
    pub ny: Option<NyScheme>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub chi1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub chi2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// full or words-only
    #[arg(long)]
    #[serde(default, deserialize_with = "from_str_opt")]
    pub heldout: Option<HeldoutMode>,
    /// laplace or quadrature
    #[arg(long)]
    #[serde(default, deserialize_with = "from_str_opt")]
    pub moments: Option<MomentMethod>,
    /// Per-document update tolerance
    #[arg(long)]
    pub e_tol: Option<f64>,
    #[arg(long)]
    pub e_max_iter: Option<usize>,
    /// Re-estimate α and η in batch mode (true/false)
    #[arg(long)]
    pub optimize_hyper: Option<bool>,
    /// Keep the time-posterior normalizers in reported perplexities
    #[arg(long)]
    pub include_time_entropy: Option<bool>,
    /// Directory written by `prep` or `synth`
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {}", e.to_string().trim())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display()))
    }

    /// Fields set in `top` win.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(base, top; model, k, mode, restarts, max_iter, tol, batch_size, tau, kappa, ny, delta, nu,
            chi1, chi2, seed, heldout, moments, e_tol, e_max_iter, optimize_hyper, include_time_entropy, corpus, out)
    }

    pub fn corpus_dir(&self) -> CliResult<&Path> {
        self.corpus.as_deref().ok_or_else(|| field("corpus", "required"))
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| field("out", "required"))
    }

    /// Checks every field and builds the core configuration.
    pub fn resolve(&self) -> CliResult<TrainConfig> {
        let kind = self.model.ok_or_else(|| field("model", "required (lda, tot, btot or wbtot)"))?;
        let k = self.k.ok_or_else(|| field("k", "required"))?;
        if k < 1 {
            return Err(field("k", "must be at least 1"));
        }
        let mut spec = ModelSpec::new(kind, k);
        let d = spec.prior;
        let (nu, chi1, chi2) = (self.nu.unwrap_or(d.nu), self.chi1.unwrap_or(d.chi[0]), self.chi2.unwrap_or(d.chi[1]));
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(field("nu", format!("must be positive, got {nu}")));
        }
        spec.prior = BetaPriorParams::new(nu, [chi1, chi2])
            .map_err(|_| field("chi1/chi2", format!("need exp(chi1) + exp(chi2) < 1, got ({chi1}, {chi2})")))?;
        if let Some(ny) = self.ny {
            ny.validate().map_err(|e| field("ny", e))?;
            spec.ny = ny;
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(field("delta", format!("must lie in (0, 1], got {delta}")));
            }
            spec.delta = delta;
        }
        spec.method = self.moments.unwrap_or(spec.method);

        let mut cfg = TrainConfig::new(spec);
        cfg.mode = self.mode.unwrap_or(cfg.mode);
        cfg.restarts = self.restarts.unwrap_or(cfg.restarts);
        if cfg.restarts < 1 {
            return Err(field("restarts", "must be at least 1"));
        }
        cfg.max_iter = self.max_iter.unwrap_or(cfg.max_iter);
        if cfg.max_iter < 1 {
            return Err(field("max_iter", "must be at least 1"));
        }
        cfg.tol = self.tol.unwrap_or(cfg.tol);
        if !(cfg.tol >= 0.0 && cfg.tol.is_finite()) {
            return Err(field("tol", format!("must be finite and non-negative, got {}", cfg.tol)));
        }
        cfg.batch_size = self.batch_size.unwrap_or(cfg.batch_size);
        if cfg.batch_size < 1 {
            return Err(field("batch_size", "must be at least 1"));
        }
        cfg.tau = self.tau.unwrap_or(cfg.tau);
        if !(cfg.tau >= 0.0 && cfg.tau.is_finite()) {
            return Err(field("tau", format!("must be non-negative, got {}", cfg.tau)));
        }
        cfg.kappa = self.kappa.unwrap_or(cfg.kappa);
        if !(cfg.kappa > 0.5 && cfg.kappa <= 1.0) {
            return Err(field("kappa", format!("must lie in (0.5, 1], got {}", cfg.kappa)));
        }
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.heldout = self.heldout.unwrap_or(cfg.heldout);
        cfg.e_tol = self.e_tol.unwrap_or(cfg.e_tol);
        if !(cfg.e_tol > 0.0 && cfg.e_tol.is_finite()) {
            return Err(field("e_tol", format!("must be positive, got {}", cfg.e_tol)));
        }
        cfg.e_max_iter = self.e_max_iter.unwrap_or(cfg.e_max_iter);
        if cfg.e_max_iter < 1 {
            return Err(field("e_max_iter", "must be at least 1"));
        }
        cfg.optimize_hyper = self.optimize_hyper.unwrap_or(cfg.optimize_hyper);
        cfg.include_time_entropy = self.include_time_entropy.unwrap_or(cfg.include_time_entropy);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn field(name: &str, msg: impl Display) -> CliError {
    CliError::usage(format!("invalid config: {name}: {msg}"))
}
