//! Maximum likelihood and Firth-penalised fits of a candidate model, with
//! the `J` and `I` matrices of the generalised information criterion.
//!
//! Runs sharing a treatment and trial count are pooled before fitting. The
//! likelihood, score, Fisher information and penalty terms only depend on
//! the pooled sums, so pooling is exact and makes all-subsets fitting cheap.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::glm::{log_normalizer, mean_and_variance, Dataset, Family};
use crate::linalg::{trace_product, Cholesky, Matrix};
use crate::modelspace::CandidateModel;

pub const MAX_ITERATIONS: usize = 100;
pub const MAX_HALVINGS: usize = 10;
/// Convergence bound on the max-abs (modified) score, scaled by the largest
/// response when that exceeds one.
pub const SCORE_TOLERANCE: f64 = 1e-8;
/// Largest Newton step accepted at convergence.
pub const STEP_TOLERANCE: f64 = 1e-4;
/// ML estimates beyond this magnitude are declared divergent.
pub const DIVERGENCE_BOUND: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Ml,
    FirthPml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: FitMethod,
    pub estimates: Vec<f64>,
    /// Unpenalised log-likelihood at the estimates, constants included.
    pub loglik: f64,
    /// `loglik + log det(X'WX) / 2`, Firth fits only.
    pub penalized_loglik: Option<f64>,
    pub converged: bool,
    /// ML estimates ran past [`DIVERGENCE_BOUND`].
    pub diverged: bool,
    pub iterations: usize,
    /// Minus the penalised Hessian over `N`, Firth fits only.
    pub j: Option<Matrix>,
    /// Empirical score outer product over `N`, Firth fits only.
    pub i_hat: Option<Matrix>,
}

/// Runs pooled by identical treatment and trial count.
#[derive(Debug, Clone)]
pub struct PooledData {
    family: Family,
    q: usize,
    x: Vec<Vec<f64>>,
    trials: Vec<u32>,
    count: Vec<f64>,
    sum_y: Vec<f64>,
    sum_y2: Vec<f64>,
    log_constant: f64,
    runs: usize,
    tolerance: f64,
}

impl PooledData {
    pub fn new(family: Family, data: &Dataset) -> Self {
        let mut groups: BTreeMap<(Vec<u64>, u32), (f64, f64, f64)> = BTreeMap::new();
        let mut log_constant = 0.0;
        let mut max_y = 0.0f64;
        for j in 0..data.runs() {
            let (x, y, n) = (&data.x()[j], data.y()[j], data.trials()[j]);
            // +0.0 folds -0.0 into the same key
            let key: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
            let e = groups.entry((key, n)).or_insert((0.0, 0.0, 0.0));
            e.0 += 1.0;
            e.1 += y;
            e.2 += y * y;
            log_constant += log_normalizer(family, y, n);
            max_y = max_y.max(y);
        }
        let mut pooled = Self {
            family,
            q: data.q(),
            x: Vec::with_capacity(groups.len()),
            trials: Vec::with_capacity(groups.len()),
            count: Vec::with_capacity(groups.len()),
            sum_y: Vec::with_capacity(groups.len()),
            sum_y2: Vec::with_capacity(groups.len()),
            log_constant,
            runs: data.runs(),
            tolerance: SCORE_TOLERANCE * max_y.max(1.0),
        };
        for ((key, n), (c, s, s2)) in groups {
            pooled.x.push(key.into_iter().map(f64::from_bits).collect());
            pooled.trials.push(n);
            pooled.count.push(c);
            pooled.sum_y.push(s);
            pooled.sum_y2.push(s2);
        }
        pooled
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    pub fn groups(&self) -> usize {
        self.x.len()
    }

    fn check(&self, model: &CandidateModel) -> Result<()> {
        if model.q() != self.q {
            return Err(Error::DimensionMismatch(format!(
                "data has {} variables, model {}",
                self.q,
                model.q()
            )));
        }
        Ok(())
    }

    fn check_beta(&self, model: &CandidateModel, beta: &[f64]) -> Result<()> {
        self.check(model)?;
        if beta.len() != model.p() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} parameters, beta has {}",
                model.p(),
                beta.len()
            )));
        }
        Ok(())
    }
}

/// Quantities at one parameter value.
struct State {
    loglik: f64,
    score: Vec<f64>,
    fisher: Matrix,
    chol: Option<Cholesky>,
    /// per-run mean, variance and v'/v, v''/v by group
    mu: Vec<f64>,
    var: Vec<f64>,
    r1: Vec<f64>,
    r2: Vec<f64>,
}

struct Fitter<'a> {
    data: &'a PooledData,
    rows: Vec<Vec<f64>>,
    p: usize,
}

impl<'a> Fitter<'a> {
    fn new(data: &'a PooledData, model: &CandidateModel) -> Self {
        Self {
            data,
            rows: data.x.iter().map(|x| model.row(x)).collect(),
            p: model.p(),
        }
    }

    fn state(&self, beta: &[f64]) -> State {
        let d = self.data;
        let g = self.rows.len();
        let p = self.p;
        let mut loglik = d.log_constant;
        let mut score = vec![0.0; p];
        let mut fisher = Matrix::zeros(p, p);
        let (mut mu, mut var, mut r1, mut r2) = (vec![0.0; g], vec![0.0; g], vec![0.0; g], vec![0.0; g]);
        for k in 0..g {
            let f = &self.rows[k];
            let eta: f64 = f.iter().zip(beta).map(|(a, b)| a * b).sum();
            let n = d.trials[k];
            let (m, v) = mean_and_variance(d.family, eta, n);
            let (a1, a2) = d.family.variance_ratios(eta);
            mu[k] = m;
            var[k] = v;
            r1[k] = a1;
            r2[k] = a2;
            loglik += d.sum_y[k] * eta - d.count[k] * d.family.cumulant(eta, n);
            let e = d.sum_y[k] - d.count[k] * m;
            let cv = d.count[k] * v;
            for i in 0..p {
                score[i] += e * f[i];
                for j in i..p {
                    fisher[(i, j)] += cv * f[i] * f[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                fisher[(i, j)] = fisher[(j, i)];
            }
        }
        let chol = Cholesky::new(&fisher).ok();
        State {
            loglik,
            score,
            fisher,
            chol,
            mu,
            var,
            r1,
            r2,
        }
    }

    /// Per-run hat values `v x'F^{-1}x` by group.
    fn hats(&self, st: &State, chol: &Cholesky) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&st.var)
            .map(|(f, v)| v * chol.inverse_quad(f))
            .collect()
    }

    /// Gradient of `log det(F) / 2`.
    fn penalty_gradient(&self, st: &State, hats: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.p];
        for (k, f) in self.rows.iter().enumerate() {
            let c = 0.5 * self.data.count[k] * hats[k] * st.r1[k];
            for i in 0..self.p {
                g[i] += c * f[i];
            }
        }
        g
    }

    /// Hessian of `log det(F) / 2`.
    fn penalty_hessian(&self, st: &State, chol: &Cholesky, hats: &[f64]) -> Matrix {
        let (p, g) = (self.p, self.rows.len());
        let d = self.data;
        let mut h = Matrix::zeros(p, p);
        for k in 0..g {
            let f = &self.rows[k];
            let c = d.count[k] * st.r2[k] * hats[k];
            for i in 0..p {
                for j in 0..p {
                    h[(i, j)] += c * f[i] * f[j];
                }
            }
        }
        let solved: Vec<Vec<f64>> = self.rows.iter().map(|f| chol.solve(f)).collect();
        let lead: Vec<f64> = (0..g).map(|k| d.count[k] * st.r1[k] * st.var[k]).collect();
        for a in 0..g {
            for b in 0..g {
                let qab: f64 = self.rows[a].iter().zip(&solved[b]).map(|(x, y)| x * y).sum();
                let c = lead[a] * lead[b] * qab * qab;
                for i in 0..p {
                    for j in 0..p {
                        h[(i, j)] -= c * self.rows[a][i] * self.rows[b][j];
                    }
                }
            }
        }
        h.scale(0.5)
    }

    fn penalized(&self, st: &State) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let chol = st.chol.as_ref()?;
        let hats = self.hats(st, chol);
        let grad = self.penalty_gradient(st, &hats);
        let value = st.loglik + 0.5 * chol.logdet();
        let modified = st.score.iter().zip(&grad).map(|(a, b)| a + b).collect();
        Some((value, modified, hats))
    }

    fn objective(&self, beta: &[f64], method: FitMethod) -> f64 {
        let st = self.state(beta);
        let v = match method {
            FitMethod::Ml => st.loglik,
            FitMethod::FirthPml => match st.chol {
                Some(ref c) => st.loglik + 0.5 * c.logdet(),
                None => f64::NEG_INFINITY,
            },
        };
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn start(&self) -> Result<Vec<f64>> {
        let d = self.data;
        match d.family {
            Family::BinomialLogit { .. } => Ok(vec![0.0; self.p]),
            Family::PoissonLog => {
                // weighted least squares of log(ybar + 1/2) on the model rows
                let mut a = Matrix::zeros(self.p, self.p);
                let mut b = vec![0.0; self.p];
                for (k, f) in self.rows.iter().enumerate() {
                    let ybar = d.sum_y[k] / d.count[k] + 0.5;
                    let w = d.count[k] * ybar;
                    let z = ybar.ln();
                    for i in 0..self.p {
                        b[i] += w * z * f[i];
                        for j in 0..self.p {
                            a[(i, j)] += w * f[i] * f[j];
                        }
                    }
                }
                let chol = Cholesky::new(&a).map_err(|_| Error::SingularInformation)?;
                Ok(chol.solve(&b))
            }
        }
    }

    fn fit(&self, method: FitMethod) -> Result<FitResult> {
        let mut beta = self.start()?;
        let mut converged = false;
        let mut diverged = false;
        let mut iterations = 0;
        loop {
            let st = self.state(&beta);
            let chol = match st.chol.as_ref() {
                Some(c) => c,
                None if iterations == 0 => return Err(Error::SingularInformation),
                None => break,
            };
            let (value, grad) = match method {
                FitMethod::Ml => (st.loglik, st.score.clone()),
                FitMethod::FirthPml => {
                    let (v, g, _) = self.penalized(&st).expect("factorised above");
                    (v, g)
                }
            };
            let step = chol.solve(&grad);
            let gmax = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let smax = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // under separation the score vanishes while the Newton step does not
            if gmax <= self.data.tolerance && smax <= STEP_TOLERANCE {
                converged = true;
                break;
            }
            if iterations == MAX_ITERATIONS {
                break;
            }
            iterations += 1;
            let slack = 1e-12 * value.abs().max(1.0);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..=MAX_HALVINGS {
                let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
                if self.objective(&cand, method) >= value - slack {
                    beta = cand;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
            if method == FitMethod::Ml && beta.iter().any(|b| b.abs() > DIVERGENCE_BOUND) {
                diverged = true;
                break;
            }
        }
        let st = self.state(&beta);
        let mut result = FitResult {
            method,
            estimates: beta,
            loglik: st.loglik,
            penalized_loglik: None,
            converged,
            diverged,
            iterations,
            j: None,
            i_hat: None,
        };
        if method == FitMethod::FirthPml {
            result.penalized_loglik = st.chol.as_ref().map(|c| st.loglik + 0.5 * c.logdet());
            if let Ok((j, i)) = self.gic_matrices(&result.estimates) {
                result.j = Some(j);
                result.i_hat = Some(i);
            }
        }
        Ok(result)
    }

    fn gic_matrices(&self, beta: &[f64]) -> Result<(Matrix, Matrix)> {
        let st = self.state(beta);
        let chol = st.chol.as_ref().ok_or(Error::SingularInformation)?;
        let hats = self.hats(&st, chol);
        let grad = self.penalty_gradient(&st, &hats);
        let hp = self.penalty_hessian(&st, chol, &hats);
        let n = self.data.runs as f64;
        let mut j = Matrix::zeros(self.p, self.p);
        for a in 0..self.p {
            for b in 0..self.p {
                j[(a, b)] = (st.fisher[(a, b)] - hp[(a, b)]) / n;
            }
        }
        // sum over runs of (e x + g/N)(e x)' from per-group sums of e and e^2
        let d = self.data;
        let shift: Vec<f64> = grad.iter().map(|g| g / n).collect();
        let mut i_hat = Matrix::zeros(self.p, self.p);
        for (k, f) in self.rows.iter().enumerate() {
            let m = st.mu[k];
            let e1 = d.sum_y[k] - d.count[k] * m;
            let e2 = d.sum_y2[k] - 2.0 * m * d.sum_y[k] + d.count[k] * m * m;
            for a in 0..self.p {
                for b in 0..self.p {
                    i_hat[(a, b)] += e2 * f[a] * f[b] + e1 * shift[a] * f[b];
                }
            }
        }
        Ok((j, i_hat.scale(1.0 / n)))
    }
}

fn check_runs(data: &PooledData, model: &CandidateModel) -> Result<()> {
    data.check(model)?;
    if data.runs < model.p() {
        return Err(Error::InvalidData(format!(
            "{} runs cannot estimate {} parameters",
            data.runs,
            model.p()
        )));
    }
    Ok(())
}

pub fn fit_ml(family: Family, model: &CandidateModel, data: &Dataset) -> Result<FitResult> {
    fit_ml_pooled(model, &PooledData::new(family, data))
}

pub fn fit_firth(family: Family, model: &CandidateModel, data: &Dataset) -> Result<FitResult> {
    fit_firth_pooled(model, &PooledData::new(family, data))
}

pub fn fit_ml_pooled(model: &CandidateModel, data: &PooledData) -> Result<FitResult> {
    check_runs(data, model)?;
    Fitter::new(data, model).fit(FitMethod::Ml)
}

pub fn fit_firth_pooled(model: &CandidateModel, data: &PooledData) -> Result<FitResult> {
    check_runs(data, model)?;
    Fitter::new(data, model).fit(FitMethod::FirthPml)
}

/// `J = -(1/N) d^2 l*/d beta^2` and `I = (1/N) sum_j u*_j u_j'` at the
/// fitted estimates, where `u_j` is run `j`'s score and `u*_j` adds an equal
/// share of the penalty gradient.
pub fn gic_matrices(family: Family, model: &CandidateModel, data: &Dataset, fit: &FitResult) -> Result<(Matrix, Matrix)> {
    let pooled = PooledData::new(family, data);
    pooled.check_beta(model, &fit.estimates)?;
    Fitter::new(&pooled, model).gic_matrices(&fit.estimates)
}

/// `2 tr(J^{-1} I)`.
pub fn gic_penalty(j: &Matrix, i_hat: &Matrix) -> Result<f64> {
    let chol = Cholesky::new(j)?;
    Ok(2.0 * trace_product(&chol.inverse(), i_hat)?)
}

pub fn score(family: Family, model: &CandidateModel, data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    let pooled = PooledData::new(family, data);
    pooled.check_beta(model, beta)?;
    Ok(Fitter::new(&pooled, model).state(beta).score)
}

/// Score of the penalised log-likelihood.
pub fn modified_score(family: Family, model: &CandidateModel, data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    let pooled = PooledData::new(family, data);
    pooled.check_beta(model, beta)?;
    let fitter = Fitter::new(&pooled, model);
    let st = fitter.state(beta);
    fitter
        .penalized(&st)
        .map(|(_, g, _)| g)
        .ok_or(Error::SingularInformation)
}

pub fn fisher_information(family: Family, model: &CandidateModel, data: &Dataset, beta: &[f64]) -> Result<Matrix> {
    let pooled = PooledData::new(family, data);
    pooled.check_beta(model, beta)?;
    Ok(Fitter::new(&pooled, model).state(beta).fisher)
}

/// `l(beta) + log det(X'WX) / 2`.
pub fn penalized_loglik(family: Family, model: &CandidateModel, data: &Dataset, beta: &[f64]) -> Result<f64> {
    let pooled = PooledData::new(family, data);
    pooled.check_beta(model, beta)?;
    let fitter = Fitter::new(&pooled, model);
    let st = fitter.state(beta);
    fitter
        .penalized(&st)
        .map(|(v, _, _)| v)
        .ok_or(Error::SingularInformation)
}

/// Hessian of the penalised log-likelihood.
pub fn penalized_hessian(family: Family, model: &CandidateModel, data: &Dataset, beta: &[f64]) -> Result<Matrix> {
    let pooled = PooledData::new(family, data);
    pooled.check_beta(model, beta)?;
    let fitter = Fitter::new(&pooled, model);
    let st = fitter.state(beta);
    let chol = st.chol.as_ref().ok_or(Error::SingularInformation)?;
    let hats = fitter.hats(&st, chol);
    let hp = fitter.penalty_hessian(&st, chol, &hats);
    let mut h = Matrix::zeros(model.p(), model.p());
    for a in 0..model.p() {
        for b in 0..model.p() {
            h[(a, b)] = hp[(a, b)] - st.fisher[(a, b)];
        }
    }
    Ok(h)
}
