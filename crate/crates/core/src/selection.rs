//! All-subsets model selection by AIC or GIC.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimation::{fit_firth_pooled, fit_ml_pooled, gic_penalty, FitResult, PooledData};
use crate::glm::{Dataset, Family};
use crate::linalg::Matrix;
use crate::modelspace::{CandidateModel, ModelSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// ML fits, penalty `2 p`.
    Aic,
    /// Firth fits, penalty `2 tr(J^{-1} I)`.
    Gic,
}

impl Criterion {
    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Gic => "gic",
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "gic" => Ok(Criterion::Gic),
            other => Err(Error::InvalidData(format!("unknown criterion {other}"))),
        }
    }
}

/// `-2 l(beta_hat) + 2 p`.
pub fn aic(fit: &FitResult, model: &CandidateModel) -> f64 {
    -2.0 * fit.loglik + 2.0 * model.p() as f64
}

/// `-2 l(beta_tilde) + 2 tr(J^{-1} I)`, using the unpenalised likelihood.
pub fn gic(fit: &FitResult, j: &Matrix, i_hat: &Matrix) -> Result<f64> {
    Ok(-2.0 * fit.loglik + gic_penalty(j, i_hat)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: usize,
    pub size: usize,
    /// `+inf` when the fit failed.
    pub value: f64,
    /// GIC penalty term, or `2 p` for AIC.
    pub penalty: Option<f64>,
    pub converged: bool,
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub criterion: Criterion,
    /// 1-based index of the chosen model.
    pub chosen: usize,
    pub scores: Vec<ModelScore>,
    /// 1-based variables of the chosen model.
    pub active: Vec<usize>,
}

impl SelectionResult {
    /// `model,size,criterion,converged`, one row per model.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,size,criterion,converged\n");
        for m in &self.scores {
            let _ = writeln!(s, "{},{},{},{}", m.model, m.size, m.value, m.converged);
        }
        s
    }
}

/// Scores one model on pooled data.
pub fn score_model(model: &CandidateModel, data: &PooledData, criterion: Criterion) -> ModelScore {
    let (value, penalty, fit) = match criterion {
        Criterion::Aic => match fit_ml_pooled(model, data) {
            Ok(fit) => (aic(&fit, model), Some(2.0 * model.p() as f64), Some(fit)),
            Err(_) => (f64::INFINITY, None, None),
        },
        Criterion::Gic => match fit_firth_pooled(model, data) {
            Ok(fit) => match (&fit.j, &fit.i_hat) {
                (Some(j), Some(i)) => match gic_penalty(j, i) {
                    Ok(pen) => (-2.0 * fit.loglik + pen, Some(pen), Some(fit)),
                    Err(_) => (f64::INFINITY, None, Some(fit)),
                },
                _ => (f64::INFINITY, None, Some(fit)),
            },
            Err(_) => (f64::INFINITY, None, None),
        },
    };
    let value = if value.is_nan() { f64::INFINITY } else { value };
    ModelScore {
        model: model.index,
        size: model.size(),
        value,
        penalty,
        converged: fit.as_ref().is_some_and(|f| f.converged),
        fit,
    }
}

/// Position of the smallest value; ties go to fewer parameters, then to
/// the earlier model. `None` when every value is `+inf`.
pub fn argmin(values: &[f64], models: &[CandidateModel]) -> Option<usize> {
    (0..values.len())
        .filter(|&k| values[k] < f64::INFINITY)
        .min_by(|&a, &b| {
            values[a]
                .total_cmp(&values[b])
                .then(models[a].p().cmp(&models[b].p()))
                .then(models[a].index.cmp(&models[b].index))
        })
}

/// Fits every model of the space and picks the criterion minimiser.
pub fn select(space: &ModelSpace, data: &Dataset, family: Family, criterion: Criterion) -> Result<SelectionResult> {
    if data.q() != space.q() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} variables, model space {}",
            data.q(),
            space.q()
        )));
    }
    select_pooled(space, &PooledData::new(family, data), criterion)
}

pub fn select_pooled(space: &ModelSpace, data: &PooledData, criterion: Criterion) -> Result<SelectionResult> {
    let scores: Vec<ModelScore> = space
        .models()
        .iter()
        .map(|m| score_model(m, data, criterion))
        .collect();
    let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
    let k = argmin(&values, space.models()).ok_or(Error::AllModelsFailed)?;
    let chosen = &space.models()[k];
    Ok(SelectionResult {
        criterion,
        chosen: chosen.index,
        active: chosen.vars().iter().map(|v| v + 1).collect(),
        scores,
    })
}
