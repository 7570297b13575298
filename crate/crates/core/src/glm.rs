//! Canonical-link exponential families: binomial with the logit link and
//! Poisson with the log link.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::modelspace::CandidateModel;

/// Largest Poisson mean we will sample from; beyond it counts lose integer
/// precision in `f64`.
const MAX_POISSON_MEAN: f64 = 9.0e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// Binomial responses with `trials` Bernoulli trials per run unless a
    /// dataset overrides them.
    BinomialLogit { trials: u32 },
    PoissonLog,
}

impl Family {
    pub fn logistic() -> Self {
        Family::BinomialLogit { trials: 1 }
    }

    pub fn poisson() -> Self {
        Family::PoissonLog
    }

    pub fn default_trials(&self) -> u32 {
        match *self {
            Family::BinomialLogit { trials } => trials,
            Family::PoissonLog => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::BinomialLogit { .. } => "logistic",
            Family::PoissonLog => "poisson",
        }
    }

    /// Cumulant function `b(eta)` for one run with `trials` trials.
    pub fn cumulant(&self, eta: f64, trials: u32) -> f64 {
        match self {
            Family::BinomialLogit { .. } => trials as f64 * softplus(eta),
            Family::PoissonLog => eta.exp(),
        }
    }

    /// `v'/v` and `v''/v` where `v` is the variance as a function of eta.
    pub(crate) fn variance_ratios(&self, eta: f64) -> (f64, f64) {
        match self {
            Family::BinomialLogit { .. } => {
                let p = logistic(eta);
                let pq = p * (1.0 - p);
                (1.0 - 2.0 * p, 1.0 - 6.0 * pq)
            }
            Family::PoissonLog => (1.0, 1.0),
        }
    }
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(1, x_i)` for active `i` dotted with `beta`.
pub fn linear_predictor(model: &CandidateModel, beta: &[f64], x: &[f64]) -> Result<f64> {
    if beta.len() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} parameters, beta has {}",
            model.p(),
            beta.len()
        )));
    }
    if x.len() != model.q() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} variables, treatment has {}",
            model.q(),
            x.len()
        )));
    }
    Ok(eta_unchecked(model, beta, x))
}

#[inline]
pub(crate) fn eta_unchecked(model: &CandidateModel, beta: &[f64], x: &[f64]) -> f64 {
    beta[0]
        + model
            .vars()
            .iter()
            .zip(&beta[1..])
            .map(|(&v, b)| b * x[v])
            .sum::<f64>()
}

/// Mean and variance of one run's response.
pub fn mean_and_variance(family: Family, eta: f64, trials: u32) -> (f64, f64) {
    match family {
        Family::BinomialLogit { .. } => {
            let n = trials as f64;
            let p = logistic(eta);
            // e^{-|eta|}/(1+e^{-|eta|})^2 keeps p(1-p) accurate in the tails
            let e = (-eta.abs()).exp();
            let pq = e / ((1.0 + e) * (1.0 + e));
            (n * p, n * pq)
        }
        Family::PoissonLog => {
            let mu = eta.exp();
            (mu, mu)
        }
    }
}

#[inline]
pub(crate) fn variance(family: Family, eta: f64, trials: u32) -> f64 {
    mean_and_variance(family, eta, trials).1
}

/// Observed runs: treatments in `[-1, 1]^q`, non-negative integer responses
/// and, for binomial data, per-run trial counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    trials: Vec<u32>,
}

impl Dataset {
    pub fn new(family: Family, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let trials = vec![family.default_trials(); y.len()];
        Self::with_trials(family, x, y, trials)
    }

    pub fn with_trials(family: Family, x: Vec<Vec<f64>>, y: Vec<f64>, trials: Vec<u32>) -> Result<Self> {
        if x.len() != y.len() || trials.len() != y.len() {
            return Err(Error::InvalidData(format!(
                "{} treatments, {} responses, {} trial counts",
                x.len(),
                y.len(),
                trials.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidData("dataset has no runs".into()));
        }
        let q = x[0].len();
        for (j, (xj, (&yj, &nj))) in x.iter().zip(y.iter().zip(&trials)).enumerate() {
            if xj.len() != q {
                return Err(Error::InvalidData(format!("run {} has {} variables, expected {q}", j + 1, xj.len())));
            }
            if xj.iter().any(|v| !(v.abs() <= 1.0)) {
                return Err(Error::InvalidData(format!("run {} has a variable outside [-1, 1]", j + 1)));
            }
            if !(yj >= 0.0 && yj.fract() == 0.0) {
                return Err(Error::InvalidData(format!("run {} response {yj} is not a count", j + 1)));
            }
            if let Family::BinomialLogit { .. } = family {
                if nj == 0 || yj > nj as f64 {
                    return Err(Error::InvalidData(format!(
                        "run {} has {yj} successes out of {nj} trials",
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { x, y, trials })
    }

    pub fn runs(&self) -> usize {
        self.y.len()
    }

    pub fn q(&self) -> usize {
        self.x[0].len()
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn trials(&self) -> &[u32] {
        &self.trials
    }

    /// Sum of the `c(y_j)` normalising constants.
    pub fn log_constant(&self, family: Family) -> f64 {
        self.y
            .iter()
            .zip(&self.trials)
            .map(|(&y, &n)| log_normalizer(family, y, n))
            .sum()
    }

    /// Reads `y,x1,...,xq[,n]` CSV.
    pub fn read_csv<R: Read>(family: Family, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("y") {
            return Err(Error::InvalidData("first column must be `y`".into()));
        }
        let has_n = headers.iter().next_back() == Some("n");
        let q = headers.len() - 1 - usize::from(has_n);
        for (i, h) in headers.iter().skip(1).take(q).enumerate() {
            if h != format!("x{}", i + 1) {
                return Err(Error::InvalidData(format!("column {} should be x{}, found `{h}`", i + 2, i + 1)));
            }
        }
        let (mut x, mut y, mut trials) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::InvalidData("short row".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidData(format!("bad number in column {}: {e}", k + 1)))
            };
            y.push(parse(0)?);
            x.push((1..=q).map(parse).collect::<Result<Vec<_>>>()?);
            trials.push(if has_n { parse(q + 1)? as u32 } else { family.default_trials() });
        }
        Self::with_trials(family, x, y, trials)
    }

    pub fn read_csv_path(family: Family, path: &Path) -> Result<Self> {
        Self::read_csv(family, std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W, with_trials: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.q()).map(|i| format!("x{i}")));
        if with_trials {
            header.push("n".into());
        }
        w.write_record(&header)?;
        for j in 0..self.runs() {
            let mut rec = vec![self.y[j].to_string()];
            rec.extend(self.x[j].iter().map(f64::to_string));
            if with_trials {
                rec.push(self.trials[j].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn log_normalizer(family: Family, y: f64, trials: u32) -> f64 {
    let y = y as u64;
    match family {
        Family::BinomialLogit { .. } => {
            let n = trials as u64;
            ln_factorial(n) - ln_factorial(y) - ln_factorial(n - y)
        }
        Family::PoissonLog => -ln_factorial(y),
    }
}

/// Log-likelihood including the `c(y)` constants.
pub fn loglik(family: Family, model: &CandidateModel, beta: &[f64], data: &Dataset) -> Result<f64> {
    if data.q() != model.q() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} variables, model {}",
            data.q(),
            model.q()
        )));
    }
    let mut l = 0.0;
    for j in 0..data.runs() {
        let eta = linear_predictor(model, beta, &data.x[j])?;
        let n = data.trials[j];
        l += data.y[j] * eta - family.cumulant(eta, n) + log_normalizer(family, data.y[j], n);
    }
    Ok(l)
}

/// Draws one response at linear predictor `eta`.
pub fn simulate_response<R: Rng + ?Sized>(family: Family, eta: f64, trials: u32, rng: &mut R) -> Result<u64> {
    if !eta.is_finite() {
        return Err(Error::Overflow(format!("linear predictor {eta}")));
    }
    match family {
        Family::BinomialLogit { .. } => {
            let dist = Binomial::new(trials as u64, logistic(eta))
                .map_err(|e| Error::InvalidData(format!("binomial: {e}")))?;
            Ok(dist.sample(rng))
        }
        Family::PoissonLog => {
            let mu = eta.exp();
            if mu > MAX_POISSON_MEAN {
                return Err(Error::Overflow(format!("Poisson mean e^{eta} is too large to sample")));
            }
            let dist = Poisson::new(mu).map_err(|e| Error::InvalidData(format!("poisson: {e}")))?;
            Ok(dist.sample(rng) as u64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(q: usize, vars: &[usize]) -> CandidateModel {
        CandidateModel::from_vars(1, q, vars)
    }

    #[test]
    fn linear_predictor_examples() {
        assert_eq!(linear_predictor(&m(1, &[0]), &[0.0, 3.0], &[1.0]).unwrap(), 3.0);
        assert_eq!(linear_predictor(&m(2, &[0, 1]), &[0.0, 3.0, -3.0], &[1.0, 1.0]).unwrap(), 0.0);
        let io = CandidateModel::intercept_only(3);
        assert_eq!(linear_predictor(&io, &[1.7], &[0.2, -0.9, 1.0]).unwrap(), 1.7);
        assert!(linear_predictor(&m(2, &[0]), &[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn moments() {
        assert_eq!(mean_and_variance(Family::poisson(), 0.0, 1), (1.0, 1.0));
        assert_eq!(mean_and_variance(Family::logistic(), 0.0, 1), (0.5, 0.25));
        let (mu, var) = mean_and_variance(Family::poisson(), 5f64.ln(), 1);
        assert!((mu - 5.0).abs() < 1e-14 && mu == var);
        let (mu, var) = mean_and_variance(Family::logistic(), -800.0, 3);
        assert!(mu >= 0.0 && var >= 0.0 && var.is_finite());
        let (_, var) = mean_and_variance(Family::logistic(), 40.0, 1);
        assert!(var > 0.0 && (var - (-40f64).exp()).abs() < 1e-30);
    }

    #[test]
    fn loglik_examples() {
        let pois = Dataset::new(Family::poisson(), vec![vec![0.0]], vec![0.0]).unwrap();
        let io = CandidateModel::intercept_only(1);
        assert!((loglik(Family::poisson(), &io, &[0.0], &pois).unwrap() + 1.0).abs() < 1e-15);
        let bern = Dataset::new(Family::logistic(), vec![vec![0.0]], vec![1.0]).unwrap();
        let l = loglik(Family::logistic(), &io, &[0.0], &bern).unwrap();
        assert!((l + 2f64.ln()).abs() < 1e-15);
    }

    /// Sum of log pmf values computed straight from the density.
    fn poisson_logpmf_oracle(y: &[f64], mu: &[f64]) -> f64 {
        y.iter()
            .zip(mu)
            .map(|(&y, &mu)| {
                let mut lf = 0.0;
                for k in 2..=(y as u64) {
                    lf += (k as f64).ln();
                }
                y * mu.ln() - mu - lf
            })
            .sum()
    }

    #[test]
    fn loglik_matches_pmf_oracle() {
        let x: Vec<Vec<f64>> = [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|&v| vec![v]).collect();
        let y = vec![0.0, 1.0, 2.0, 5.0, 17.0];
        let data = Dataset::new(Family::poisson(), x.clone(), y.clone()).unwrap();
        let model = m(1, &[0]);
        let mu: Vec<f64> = x.iter().map(|r| (3.0 * r[0]).exp()).collect();
        let l = loglik(Family::poisson(), &model, &[0.0, 3.0], &data).unwrap();
        assert!((l - poisson_logpmf_oracle(&y, &mu)).abs() < 1e-10);
    }

    #[test]
    fn loglik_differences_ignore_constants() {
        let x: Vec<Vec<f64>> = [-1.0, 0.0, 1.0].iter().map(|&v| vec![v]).collect();
        let data = Dataset::new(Family::poisson(), x, vec![3.0, 4.0, 9.0]).unwrap();
        let model = m(1, &[0]);
        let f = Family::poisson();
        let (b1, b2) = ([0.5, 0.3], [1.2, -0.1]);
        let diff = loglik(f, &model, &b1, &data).unwrap() - loglik(f, &model, &b2, &data).unwrap();
        let bare = |b: &[f64]| -> f64 {
            data.x()
                .iter()
                .zip(data.y())
                .map(|(x, &y)| {
                    let eta = b[0] + b[1] * x[0];
                    y * eta - eta.exp()
                })
                .sum()
        };
        assert!((diff - (bare(&b1) - bare(&b2))).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_poisson_maximised_at_log_mean() {
        let data = Dataset::new(
            Family::poisson(),
            vec![vec![0.0]; 4],
            vec![1.0, 4.0, 2.0, 7.0],
        )
        .unwrap();
        let io = CandidateModel::intercept_only(1);
        let f = |b: f64| loglik(Family::poisson(), &io, &[b], &data).unwrap();
        // golden-section search
        let (mut lo, mut hi) = (-5.0f64, 5.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if f(a) < f(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        assert!((0.5 * (lo + hi) - 3.5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn simulation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(simulate_response(Family::logistic(), -50.0, 1, &mut rng).unwrap(), 0);
            assert_eq!(simulate_response(Family::poisson(), -50.0, 1, &mut rng).unwrap(), 0);
        }
        let n = 100_000;
        let hits: u64 = (0..n)
            .map(|_| simulate_response(Family::logistic(), 0.0, 1, &mut rng).unwrap())
            .sum();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
        assert!(simulate_response(Family::poisson(), 40.0, 1, &mut rng).is_err());
    }

    #[test]
    fn simulation_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| simulate_response(Family::poisson(), 1.5, 1, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn dataset_validation_and_csv() {
        assert!(Dataset::new(Family::poisson(), vec![vec![1.5]], vec![1.0]).is_err());
        assert!(Dataset::new(Family::logistic(), vec![vec![0.5]], vec![2.0]).is_err());
        assert!(Dataset::new(Family::poisson(), vec![vec![0.5]], vec![1.5]).is_err());
        let text = "y,x1,x2,n\n1,0.5,-1,3\n0,1,1,2\n";
        let d = Dataset::read_csv(Family::logistic(), text.as_bytes()).unwrap();
        assert_eq!(d.trials(), &[3, 2]);
        let mut out = Vec::new();
        d.write_csv(&mut out, true).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
        let d = Dataset::read_csv(Family::poisson(), "y,x1\n4,0.25\n".as_bytes()).unwrap();
        assert_eq!(d.trials(), &[1]);
        assert!(Dataset::read_csv(Family::poisson(), "y,x2\n4,0.25\n".as_bytes()).is_err());
    }
}
