//! Candidate model sets and the uniform prior boxes placed on their slopes.

use rand::Rng;
use rand_distr::{Distribution, Open01};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A main-effects submodel: intercept plus the variables flagged active.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "ModelRepr", into = "ModelRepr")]
pub struct CandidateModel {
    /// 1-based position in the canonical ordering of its space.
    pub index: usize,
    indicators: Vec<bool>,
    vars: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    index: usize,
    indicators: Vec<bool>,
}

impl From<ModelRepr> for CandidateModel {
    fn from(r: ModelRepr) -> Self {
        Self::new(r.index, r.indicators)
    }
}

impl From<CandidateModel> for ModelRepr {
    fn from(m: CandidateModel) -> Self {
        Self {
            index: m.index,
            indicators: m.indicators,
        }
    }
}

impl CandidateModel {
    pub fn new(index: usize, indicators: Vec<bool>) -> Self {
        let vars = indicators
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect();
        Self {
            index,
            indicators,
            vars,
        }
    }

    /// Builds a model from 0-based active variable indices.
    pub fn from_vars(index: usize, q: usize, vars: &[usize]) -> Self {
        let mut ind = vec![false; q];
        for &v in vars {
            ind[v] = true;
        }
        Self::new(index, ind)
    }

    pub fn intercept_only(q: usize) -> Self {
        Self::new(0, vec![false; q])
    }

    pub fn full(q: usize) -> Self {
        Self::new(0, vec![true; q])
    }

    pub fn q(&self) -> usize {
        self.indicators.len()
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    /// Active variables, 0-based and increasing.
    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn size(&self) -> usize {
        self.vars.len()
    }

    /// Parameter count `1 + size`.
    pub fn p(&self) -> usize {
        1 + self.vars.len()
    }

    pub fn contains(&self, var: usize) -> bool {
        self.indicators.get(var).copied().unwrap_or(false)
    }

    /// Regressor vector `f(x) = (1, x_i for active i)` written into `out`.
    pub fn fill_row(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for (slot, &v) in out[1..].iter_mut().zip(&self.vars) {
            *slot = x[v];
        }
    }

    pub fn row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p()];
        self.fill_row(x, &mut out);
        out
    }

    /// Active variables as a 1-based label such as `1 2 5`.
    pub fn label(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.vars.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{}", v + 1);
        }
        s
    }
}

/// All non-empty main-effects models with at most `max_active` variables,
/// ordered by size and then lexicographically with variable 1 most
/// significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    q: usize,
    max_active: usize,
    models: Vec<CandidateModel>,
}

impl ModelSpace {
    pub fn enumerate(q: usize, max_active: usize) -> Result<Self> {
        if q == 0 || max_active == 0 || max_active > q {
            return Err(Error::InvalidData(format!(
                "model space needs 1 <= max_active <= q, got q={q}, max_active={max_active}"
            )));
        }
        let mut models = Vec::new();
        let mut combo = Vec::with_capacity(max_active);
        for size in 1..=max_active {
            // combinations in lexicographic order of the variable lists,
            // which is decreasing order of the indicator tuples
            combo.clear();
            combo.extend(0..size);
            loop {
                models.push(CandidateModel::from_vars(models.len() + 1, q, &combo));
                let Some(pos) = (0..size).rev().find(|&i| combo[i] < q - size + i) else {
                    break;
                };
                combo[pos] += 1;
                for i in pos + 1..size {
                    combo[i] = combo[i - 1] + 1;
                }
            }
        }
        Ok(Self {
            q,
            max_active,
            models,
        })
    }

    /// A space holding exactly the given models, re-indexed from 1.
    pub fn from_models(q: usize, models: Vec<CandidateModel>) -> Result<Self> {
        if models.is_empty() || models.iter().any(|m| m.q() != q || m.size() == 0) {
            return Err(Error::InvalidData(
                "custom model space needs non-empty models over q variables".into(),
            ));
        }
        let max_active = models.iter().map(CandidateModel::size).max().unwrap_or(1);
        let models = models
            .into_iter()
            .enumerate()
            .map(|(i, m)| CandidateModel::new(i + 1, m.indicators))
            .collect();
        Ok(Self {
            q,
            max_active,
            models,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn max_active(&self) -> usize {
        self.max_active
    }

    pub fn models(&self) -> &[CandidateModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Model by 1-based index.
    pub fn get(&self, index: usize) -> Option<&CandidateModel> {
        index.checked_sub(1).and_then(|i| self.models.get(i))
    }

    pub fn max_p(&self) -> usize {
        self.max_active + 1
    }

    /// `index,size,vars` listing.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,size,vars\n");
        for m in &self.models {
            let _ = writeln!(s, "{},{},{}", m.index, m.size(), m.label());
        }
        s
    }
}

/// Independent uniform priors on the slopes of active variables; the
/// intercept is held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub intervals: Vec<(f64, f64)>,
    pub intercept: f64,
    pub kappa: Option<f64>,
}

/// Slope signs for variables 1..5, repeated for 6..10 and beyond.
const SIGN_PATTERN: [f64; 5] = [1.0, -1.0, 1.0, 1.0, -1.0];

impl PriorSpec {
    /// `Uniform(kappa, 5)` for positive-sign variables and `Uniform(-5, -kappa)`
    /// for negative-sign ones, intercept fixed at zero.
    pub fn signed_uniform(q: usize, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 5.0) {
            return Err(Error::InvalidData(format!(
                "kappa must lie in (0, 5), got {kappa}"
            )));
        }
        let intervals = (0..q)
            .map(|i| {
                if SIGN_PATTERN[i % 5] > 0.0 {
                    (kappa, 5.0)
                } else {
                    (-5.0, -kappa)
                }
            })
            .collect();
        Ok(Self {
            intervals,
            intercept: 0.0,
            kappa: Some(kappa),
        })
    }

    /// Zero-width boxes at the given slopes.
    pub fn point_mass(slopes: &[f64], intercept: f64) -> Self {
        Self {
            intervals: slopes.iter().map(|&b| (b, b)).collect(),
            intercept,
            kappa: None,
        }
    }

    pub fn custom(intervals: Vec<(f64, f64)>, intercept: f64) -> Result<Self> {
        let prior = Self {
            intervals,
            intercept,
            kappa: None,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &(lo, hi)) in self.intervals.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidData(format!(
                    "prior interval for variable {} is ({lo}, {hi})",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.intervals.len()
    }

    /// Maps a point of the unit cube (one coordinate per active variable)
    /// into the model's prior box.
    pub fn map_unit(&self, model: &CandidateModel, u: &[f64]) -> Vec<f64> {
        let mut beta = Vec::with_capacity(model.p());
        beta.push(self.intercept);
        for (&v, &ui) in model.vars().iter().zip(u) {
            let (lo, hi) = self.intervals[v];
            beta.push(lo + (hi - lo) * ui);
        }
        beta
    }

    pub fn sample_parameters<R: Rng + ?Sized>(&self, model: &CandidateModel, rng: &mut R) -> Vec<f64> {
        let u: Vec<f64> = (0..model.size()).map(|_| Open01.sample(rng)).collect();
        self.map_unit(model, &u)
    }

    pub fn prior_mean(&self, model: &CandidateModel) -> Vec<f64> {
        self.map_unit(model, &vec![0.5; model.size()])
    }

    /// Prior means of all `q` slopes.
    pub fn slope_means(&self) -> Vec<f64> {
        self.intervals.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }
}
