//! Experiment configuration: a TOML file merged with command-line flags.

use clap::{Args, ValueEnum};
use glmscreen::optimize::AnnealConfig;
use glmscreen::selection::Criterion;
use glmscreen::{Family, ModelSpace, PriorSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Logistic,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Annealing search for a Bayesian IC design.
    Search,
    /// Closed-form construction.
    Construct,
    /// A design file.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructKind {
    /// Minimally supported Poisson design at the prior means.
    MinSupport,
    /// Regular two-level fraction from the generator catalogue.
    Factorial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CriterionName {
    Aic,
    Gic,
}

impl From<CriterionName> for Criterion {
    fn from(c: CriterionName) -> Self {
        match c {
            CriterionName::Aic => Criterion::Aic,
            CriterionName::Gic => Criterion::Gic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilyName,
    /// Binomial trials per run.
    pub trials: u32,
    pub q: usize,
    /// Largest model size in the space; defaults to `q`.
    pub max_active: Option<usize>,
    pub kappa: f64,
    pub intercept: f64,
    /// Per-variable `[lo, hi]` slope intervals replacing the kappa prior.
    pub prior_intervals: Option<Vec<[f64; 2]>>,
    pub source: Source,
    pub construct: ConstructKind,
    /// Fraction exponent for factorial construction; defaults to the
    /// catalogue entry for `q`, or the full factorial.
    pub fraction: Option<usize>,
    pub design_file: Option<PathBuf>,
    /// Support points for search.
    pub support_points: usize,
    /// Total runs for exact designs.
    pub runs: Option<usize>,
    pub qmc_samples: usize,
    /// Defaults to GIC for logistic and AIC for Poisson.
    pub criterion: Option<CriterionName>,
    pub reps: usize,
    pub draws: usize,
    /// True models to simulate; empty means all.
    pub true_models: Vec<usize>,
    /// Support points of annealed reference designs; defaults to the
    /// model's parameter count.
    pub reference_support: Option<usize>,
    pub seed: u64,
    pub anneal: AnnealConfig,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: FamilyName::Logistic,
            trials: 1,
            q: 5,
            max_active: None,
            kappa: 1.0,
            intercept: 0.0,
            prior_intervals: None,
            source: Source::Search,
            construct: ConstructKind::MinSupport,
            fraction: None,
            design_file: None,
            support_points: 30,
            runs: None,
            qmc_samples: 128,
            criterion: None,
            reps: 1000,
            draws: 500,
            true_models: Vec::new(),
            reference_support: None,
            seed: 0,
            anneal: AnnealConfig::default(),
            out: PathBuf::from("glmscreen-out"),
        }
    }
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyName>,
    /// Binomial trials per run.
    #[arg(long)]
    pub trials: Option<u32>,
    /// Number of variables.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long = "max-active")]
    pub max_active: Option<usize>,
    /// Lower bound of the slope prior magnitudes.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Number of support points for design search.
    #[arg(long = "n")]
    pub support_points: Option<usize>,
    /// Total number of runs.
    #[arg(long = "N")]
    pub runs: Option<usize>,
    /// Closed-form construction instead of search.
    #[arg(long, value_enum)]
    pub construct: Option<ConstructKind>,
    /// Fraction exponent for factorial construction.
    #[arg(long)]
    pub fraction: Option<usize>,
    /// Design JSON file to use instead of search or construction.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// QMC prior samples for the Bayesian criterion.
    #[arg(long = "qmc-samples")]
    pub qmc_samples: Option<usize>,
    #[arg(long, value_enum)]
    pub criterion: Option<CriterionName>,
    /// Replications per true model.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Prior draws per model for efficiency studies.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Comma-separated true model indices.
    #[arg(long = "true-models", value_delimiter = ',')]
    pub true_models: Option<Vec<usize>>,
    /// Annealing restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn resolve(o: &Overrides) -> Result<Self, String> {
        let mut c = match &o.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = o.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(family, trials, q, kappa, support_points, qmc_samples, reps, draws, seed, out);
        if o.max_active.is_some() {
            c.max_active = o.max_active;
        }
        if o.runs.is_some() {
            c.runs = o.runs;
        }
        if o.criterion.is_some() {
            c.criterion = o.criterion;
        }
        if o.fraction.is_some() {
            c.fraction = o.fraction;
        }
        if let Some(v) = &o.true_models {
            c.true_models = v.clone();
        }
        if let Some(r) = o.restarts {
            c.anneal.restarts = r;
        }
        if let Some(kind) = o.construct {
            c.source = Source::Construct;
            c.construct = kind;
        }
        if let Some(path) = &o.design {
            c.source = Source::File;
            c.design_file = Some(path.clone());
        }
        c.anneal.seed = c.seed;
        c.validate()?;
        Ok(c)
    }

    /// Checks every field; errors name the offending field.
    pub fn validate(&self) -> Result<(), String> {
        let bad = |field: &str, why: String| Err(format!("config.{field}: {why}"));
        if self.q == 0 || self.q > 26 {
            return bad("q", format!("must lie in 1..=26, got {}", self.q));
        }
        if let Some(m) = self.max_active {
            if m == 0 || m > self.q {
                return bad("max_active", format!("must lie in 1..={}, got {m}", self.q));
            }
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if self.family == FamilyName::Poisson && self.trials != 1 {
            return bad("trials", "only binomial data have trials".into());
        }
        match &self.prior_intervals {
            Some(iv) => {
                if iv.len() != self.q {
                    return bad("prior_intervals", format!("need {} intervals, got {}", self.q, iv.len()));
                }
                if let Some(k) = iv.iter().position(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
                    return bad(&format!("prior_intervals[{k}]"), "need finite lo <= hi".into());
                }
            }
            None => {
                if !(self.kappa > 0.0 && self.kappa < 5.0) {
                    return bad("kappa", format!("must lie in (0, 5), got {}", self.kappa));
                }
            }
        }
        if !self.intercept.is_finite() {
            return bad("intercept", "must be finite".into());
        }
        if self.support_points == 0 {
            return bad("support_points", "must be at least 1".into());
        }
        if self.runs == Some(0) {
            return bad("runs", "must be at least 1".into());
        }
        if self.qmc_samples == 0 || self.qmc_samples > 65536 {
            return bad("qmc_samples", format!("must lie in 1..=65536, got {}", self.qmc_samples));
        }
        if self.reps == 0 {
            return bad("reps", "must be at least 1".into());
        }
        if self.draws == 0 {
            return bad("draws", "must be at least 1".into());
        }
        if self.reference_support == Some(0) {
            return bad("reference_support", "must be at least 1".into());
        }
        if self.source == Source::File && self.design_file.is_none() {
            return bad("design_file", "required when source = \"file\"".into());
        }
        if self.source == Source::Construct && self.construct == ConstructKind::MinSupport && self.family != FamilyName::Poisson {
            return bad("construct", "min-support designs are defined for the poisson family".into());
        }
        let models = ModelSpace::enumerate(self.q, self.max_active.unwrap_or(self.q)).map(|s| s.len()).unwrap_or(0);
        if let Some(&m) = self.true_models.iter().find(|&&m| m == 0 || m > models) {
            return bad("true_models", format!("model {m} is outside 1..={models}"));
        }
        self.anneal.validate().map_err(|e| format!("config.{}", e.to_string().trim_start_matches("invalid data: ")))?;
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self.family {
            FamilyName::Logistic => Family::BinomialLogit { trials: self.trials },
            FamilyName::Poisson => Family::PoissonLog,
        }
    }

    pub fn space(&self) -> glmscreen::Result<ModelSpace> {
        ModelSpace::enumerate(self.q, self.max_active.unwrap_or(self.q))
    }

    pub fn prior(&self) -> glmscreen::Result<PriorSpec> {
        match &self.prior_intervals {
            Some(iv) => PriorSpec::custom(iv.iter().map(|[lo, hi]| (*lo, *hi)).collect(), self.intercept),
            None => {
                let mut p = PriorSpec::signed_uniform(self.q, self.kappa)?;
                p.intercept = self.intercept;
                Ok(p)
            }
        }
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
            .map(Criterion::from)
            .unwrap_or_else(|| glmscreen::simulate::default_criterion(self.family()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flags_win() {
        let o = Overrides {
            family: Some(FamilyName::Poisson),
            q: Some(10),
            max_active: Some(3),
            seed: Some(9),
            construct: Some(ConstructKind::MinSupport),
            ..Default::default()
        };
        let c = ExperimentConfig::resolve(&o).unwrap();
        assert_eq!((c.q, c.max_active, c.seed, c.anneal.seed), (10, Some(3), 9, 9));
        assert_eq!(c.source, Source::Construct);
        assert_eq!(c.space().unwrap().len(), 175);
        assert_eq!(c.criterion(), Criterion::Aic);
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("kappa = 7.0", "config.kappa"),
            ("q = 0", "config.q"),
            ("reps = 0", "config.reps"),
            ("source = \"file\"", "config.design_file"),
            ("true_models = [40]", "config.true_models"),
            ("[anneal]\ncooling = 2.0", "config.anneal.cooling"),
            ("prior_intervals = [[1.0, 0.0]]", "config.prior_intervals"),
        ];
        for (text, field) in cases {
            let c: ExperimentConfig = toml::from_str(text).unwrap();
            let err = c.validate().unwrap_err();
            assert!(err.starts_with(field), "{text}: {err}");
        }
        assert!(toml::from_str::<ExperimentConfig>("colour = 1").is_err());
    }
}
