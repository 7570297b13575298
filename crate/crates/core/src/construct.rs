//! Closed-form designs: minimally supported Poisson designs and two-level
//! regular fractional factorials.

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::modelspace::{CandidateModel, PriorSpec};

/// Smallest prior-mean slope magnitude accepted by [`min_support_poisson`].
pub const MIN_SUPPORT_MEAN: f64 = 2.0;

const CATALOGUE: &str = include_str!("../data/factorial_generators.txt");

/// Minimally supported Poisson design at the prior slope means: the anchor
/// `x_i = sign(E beta_i)` plus, for each variable `k`, the anchor with
/// coordinate `k` moved to `sign(E beta_k) (1 - 2 / |E beta_k|)`. Equal
/// weights on the `q + 1` points.
pub fn min_support_poisson(prior: &PriorSpec, q: usize) -> Result<Design> {
    if prior.q() != q {
        return Err(Error::DimensionMismatch(format!(
            "prior covers {} variables, design needs {q}",
            prior.q()
        )));
    }
    let means = prior.slope_means();
    if let Some((i, b)) = means.iter().enumerate().find(|(_, b)| !(b.abs() >= MIN_SUPPORT_MEAN)) {
        return Err(Error::ConstructionInvalid(format!(
            "prior mean of variable {} is {b}; need magnitude at least {MIN_SUPPORT_MEAN}",
            i + 1
        )));
    }
    min_support_points(&means)
}

/// Locally D-optimal Poisson design for `model` at `beta`: the same
/// construction restricted to the active variables. Inactive coordinates
/// sit at +1. Needs every active slope to have magnitude at least 1 so the
/// moved coordinate stays inside [-1, 1].
pub fn locally_optimal_poisson(model: &CandidateModel, beta: &[f64]) -> Result<Design> {
    if beta.len() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} parameters, got {}",
            model.p(),
            beta.len()
        )));
    }
    let mut slopes = vec![1.0; model.q()];
    for (&v, &b) in model.vars().iter().zip(&beta[1..]) {
        if !(b.abs() >= 1.0) {
            return Err(Error::ConstructionInvalid(format!(
                "slope of variable {} is {b}; need magnitude at least 1",
                v + 1
            )));
        }
        slopes[v] = b;
    }
    let anchor: Vec<f64> = slopes.iter().map(|b| b.signum()).collect();
    let mut points = vec![anchor.clone()];
    for &v in model.vars() {
        points.push(moved(&anchor, v, slopes[v]));
    }
    Design::equal_weights(points)
}

fn min_support_points(slopes: &[f64]) -> Result<Design> {
    let anchor: Vec<f64> = slopes.iter().map(|b| b.signum()).collect();
    let mut points = vec![anchor.clone()];
    for (k, &b) in slopes.iter().enumerate() {
        points.push(moved(&anchor, k, b));
    }
    Design::equal_weights(points)
}

fn moved(anchor: &[f64], k: usize, slope: f64) -> Vec<f64> {
    let mut x = anchor.to_vec();
    x[k] = slope.signum() * (1.0 - 2.0 / slope.abs());
    x
}

/// Exact design with `floor(N / n)` replicates per point and one extra for
/// each of the first `N mod n` points.
pub fn replicate_to_n(design: &Design, runs: usize) -> Result<Design> {
    let n = design.len();
    if runs < n {
        return Err(Error::InvalidDesign(format!(
            "{runs} runs cannot cover {n} support points"
        )));
    }
    let (base, extra) = (runs / n, runs % n);
    let counts = (0..n).map(|k| base + usize::from(k < extra)).collect();
    Design::exact(design.points().to_vec(), counts)
}

/// A regular two-level `2^(q-k)` fraction. Factors are lettered `A, B, ...`;
/// the first `q - k` are base factors and each generator word defines one
/// added factor as a product of base factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorialSpec {
    pub q: usize,
    pub k: usize,
    pub generators: Vec<String>,
    resolution: Option<usize>,
}

impl FactorialSpec {
    pub fn new(q: usize, k: usize, generators: Vec<String>) -> Result<Self> {
        let mut spec = Self {
            q,
            k,
            generators,
            resolution: None,
        };
        let words = spec.defining_words()?;
        spec.resolution = resolution_of(&words);
        Ok(spec)
    }

    /// Generators shipped for `(q, k)` in the built-in catalogue.
    pub fn from_catalogue(q: usize, k: usize) -> Result<Self> {
        for line in CATALOGUE.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let lq: usize = parse_count(fields.next(), line)?;
            let lk: usize = parse_count(fields.next(), line)?;
            if (lq, lk) == (q, k) {
                return Self::new(q, k, fields.map(str::to_string).collect());
            }
        }
        Err(Error::BadGenerators(format!("no catalogue entry for 2^({q}-{k})")))
    }

    pub fn runs(&self) -> usize {
        1 << (self.q - self.k)
    }

    /// Length of the shortest word in the defining relation; `None` for a
    /// full factorial.
    pub fn resolution(&self) -> Option<usize> {
        self.resolution
    }

    /// Bitmasks of the generator words with their added factor included.
    fn defining_words(&self) -> Result<Vec<u32>> {
        let base = self
            .q
            .checked_sub(self.k)
            .filter(|&b| b >= 1)
            .ok_or_else(|| Error::BadGenerators(format!("need 0 <= k < q, got q={} k={}", self.q, self.k)))?;
        if self.q > 26 {
            return Err(Error::BadGenerators("at most 26 factors are supported".into()));
        }
        if self.generators.len() != self.k {
            return Err(Error::BadGenerators(format!(
                "{} generators for {} added factors",
                self.generators.len(),
                self.k
            )));
        }
        let mut words = Vec::with_capacity(self.k);
        for (j, raw) in self.generators.iter().enumerate() {
            let added = base + j;
            let body = match raw.split_once('=') {
                Some((lhs, rhs)) => {
                    let expected = letter(added);
                    if lhs.trim() != expected.to_string() {
                        return Err(Error::BadGenerators(format!(
                            "generator {raw} defines {lhs}, expected {expected}"
                        )));
                    }
                    rhs.trim()
                }
                None => raw.trim(),
            };
            let mut mask = 0u32;
            for c in body.chars() {
                let i = (c as u32).wrapping_sub('A' as u32) as usize;
                if !c.is_ascii_uppercase() || i >= base {
                    return Err(Error::BadGenerators(format!(
                        "generator {raw} uses {c}, which is not a base factor"
                    )));
                }
                if mask & (1 << i) != 0 {
                    return Err(Error::BadGenerators(format!("generator {raw} repeats {c}")));
                }
                mask |= 1 << i;
            }
            if mask.count_ones() < 2 {
                return Err(Error::BadGenerators(format!(
                    "generator {raw} must involve at least two base factors"
                )));
            }
            words.push(mask | (1 << added));
        }
        Ok(words)
    }
}

fn parse_count(field: Option<&str>, line: &str) -> Result<usize> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::BadGenerators(format!("malformed catalogue line: {line}")))
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Shortest word among all non-empty products of the generator words.
fn resolution_of(words: &[u32]) -> Option<usize> {
    (1u32..(1 << words.len()))
        .map(|subset| {
            words
                .iter()
                .enumerate()
                .filter(|(j, _)| subset & (1 << j) != 0)
                .fold(0u32, |acc, (_, w)| acc ^ w)
                .count_ones() as usize
        })
        .min()
}

/// The fraction in standard order (factor `A` alternating fastest), one run
/// per treatment.
pub fn fractional_factorial(spec: &FactorialSpec) -> Result<Design> {
    let words = spec.defining_words()?;
    let base = spec.q - spec.k;
    let points: Vec<Vec<f64>> = (0..spec.runs())
        .map(|r| {
            let mut x: Vec<f64> = (0..base).map(|i| if r >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            for w in &words {
                let product: f64 = (0..base).filter(|i| w >> i & 1 == 1).map(|i| x[i]).product();
                x.push(product);
            }
            x
        })
        .collect();
    let n = points.len();
    Design::exact(points, vec![1; n])
}
