//! Designs as weighted sets of distinct treatments, plus the
//! information-based criteria evaluated on them.

mod criteria;
mod qmc;

pub use criteria::{
    bayesian_ic_objective, d_efficiency, d_objective, information_matrix, local_ic_objective,
    poisson_bayes_objective, IcObjective, ModelTerms,
};
pub use qmc::QmcSampler;

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Points closer than this (max-abs) are treated as the same treatment.
pub const DISTINCT_TOLERANCE: f64 = 1e-9;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// Weights are proportions summing to one.
    Approximate,
    /// Weights are positive replicate counts summing to the run size.
    Exact,
}

/// Optional provenance stored alongside a design file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    q: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    kind: DesignKind,
}

impl Design {
    /// Approximate design; weights are rescaled to sum to one and
    /// coincident points merged.
    pub fn approximate(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        check_points(&points)?;
        if weights.len() != points.len() {
            return Err(Error::InvalidDesign(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidDesign("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.iter().map(|w| w / total).collect();
        let q = points[0].len();
        Ok(Self {
            q,
            points,
            weights,
            kind: DesignKind::Approximate,
        }
        .merged())
    }

    pub fn equal_weights(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::approximate(points, vec![1.0; n])
    }

    /// Exact design with integer replicate counts.
    pub fn exact(points: Vec<Vec<f64>>, counts: Vec<usize>) -> Result<Self> {
        check_points(&points)?;
        if counts.len() != points.len() {
            return Err(Error::InvalidDesign(format!(
                "{} points but {} counts",
                points.len(),
                counts.len()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidDesign("replicate counts must be positive".into()));
        }
        let q = points[0].len();
        Ok(Self {
            q,
            points,
            weights: counts.iter().map(|&c| c as f64).collect(),
            kind: DesignKind::Exact,
        }
        .merged())
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of distinct support points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Total run count of an exact design.
    pub fn runs(&self) -> Option<usize> {
        match self.kind {
            DesignKind::Exact => Some(self.weights.iter().sum::<f64>().round() as usize),
            DesignKind::Approximate => None,
        }
    }

    pub fn counts(&self) -> Option<Vec<usize>> {
        match self.kind {
            DesignKind::Exact => Some(self.weights.iter().map(|w| w.round() as usize).collect()),
            DesignKind::Approximate => None,
        }
    }

    /// Same support with weights rescaled to proportions.
    pub fn normalized(&self) -> Design {
        let total: f64 = self.weights.iter().sum();
        Design {
            q: self.q,
            points: self.points.clone(),
            weights: self.weights.iter().map(|w| w / total).collect(),
            kind: DesignKind::Approximate,
        }
    }

    /// Every run of an exact design in support order, each point repeated
    /// by its count.
    pub fn run_list(&self) -> Result<Vec<Vec<f64>>> {
        let counts = self
            .counts()
            .ok_or_else(|| Error::InvalidDesign("run list needs an exact design".into()))?;
        Ok(self
            .points
            .iter()
            .zip(counts)
            .flat_map(|(x, c)| std::iter::repeat_n(x.clone(), c))
            .collect())
    }

    /// Same design with weights multiplied by `c`; kind is unchanged.
    pub fn with_scaled_weights(&self, c: f64) -> Design {
        Design {
            weights: self.weights.iter().map(|w| w * c).collect(),
            ..self.clone()
        }
    }

    /// Support points reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Design {
        Design {
            q: self.q,
            points: perm.iter().map(|&i| self.points[i].clone()).collect(),
            weights: perm.iter().map(|&i| self.weights[i]).collect(),
            kind: self.kind,
        }
    }

    /// Unchecked constructor for optimizer internals; weights are used as
    /// given and points may coincide.
    pub(crate) fn raw(points: Vec<Vec<f64>>, weights: Vec<f64>, kind: DesignKind) -> Design {
        let q = points.first().map_or(0, Vec::len);
        Design {
            q,
            points,
            weights,
            kind,
        }
    }

    pub(crate) fn points_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.points
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Coincident points (within [`DISTINCT_TOLERANCE`]) collapse onto the
    /// first occurrence with summed weight.
    pub fn merged(mut self) -> Design {
        let mut points: Vec<Vec<f64>> = Vec::with_capacity(self.points.len());
        let mut weights: Vec<f64> = Vec::with_capacity(self.points.len());
        for (x, w) in self.points.drain(..).zip(self.weights.drain(..)) {
            match points.iter().position(|p| max_abs_diff(p, &x) <= DISTINCT_TOLERANCE) {
                Some(k) => weights[k] += w,
                None => {
                    points.push(x);
                    weights.push(w);
                }
            }
        }
        self.points = points;
        self.weights = weights;
        self
    }

    /// Nearest-integer rounding of `N * weight`, repaired to total `N`
    /// through the largest rounding residuals; points rounding to zero are
    /// dropped.
    pub fn round_to_exact(&self, runs: usize) -> Result<Design> {
        let norm = self.normalized();
        let target: Vec<f64> = norm.weights.iter().map(|w| w * runs as f64).collect();
        let mut counts: Vec<usize> = target.iter().map(|t| t.round() as usize).collect();
        let total: usize = counts.iter().sum();
        // residual > 0 means the point was rounded down
        let residual = |k: usize, c: &[usize]| target[k] - c[k] as f64;
        if total < runs {
            for _ in 0..runs - total {
                let k = (0..counts.len())
                    .max_by(|&a, &b| residual(a, &counts).total_cmp(&residual(b, &counts)).then(b.cmp(&a)))
                    .expect("design has points");
                counts[k] += 1;
            }
        } else if total > runs {
            for _ in 0..total - runs {
                let k = (0..counts.len())
                    .filter(|&k| counts[k] >= 2 || (counts[k] == 1 && target[k] < 0.5))
                    .min_by(|&a, &b| residual(a, &counts).total_cmp(&residual(b, &counts)).then(a.cmp(&b)))
                    .ok_or_else(|| Error::InfeasibleRounding {
                        runs,
                        reason: format!(
                            "{} points each need at least one run",
                            counts.iter().filter(|&&c| c > 0).count()
                        ),
                    })?;
                counts[k] -= 1;
            }
        }
        let (points, counts): (Vec<_>, Vec<_>) = norm
            .points
            .into_iter()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .unzip();
        if points.is_empty() {
            return Err(Error::InfeasibleRounding {
                runs,
                reason: "no point receives a run".into(),
            });
        }
        Design::exact(points, counts)
    }

    pub fn validate(&self) -> Result<()> {
        check_points(&self.points)?;
        match self.kind {
            DesignKind::Approximate => {
                let s: f64 = self.weights.iter().sum();
                if (s - 1.0).abs() > WEIGHT_SUM_TOLERANCE * self.weights.len() as f64 {
                    return Err(Error::InvalidDesign(format!("weights sum to {s}")));
                }
            }
            DesignKind::Exact => {
                if self.weights.iter().any(|w| w.fract() != 0.0 || *w < 1.0) {
                    return Err(Error::InvalidDesign("exact weights must be positive integers".into()));
                }
            }
        }
        for i in 0..self.points.len() {
            for j in 0..i {
                if max_abs_diff(&self.points[i], &self.points[j]) <= DISTINCT_TOLERANCE {
                    return Err(Error::InvalidDesign(format!("points {} and {} coincide", j + 1, i + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self, meta: Option<&DesignMeta>) -> Result<String> {
        let file = DesignFile {
            q: self.q,
            kind: self.kind,
            runs: self.runs(),
            points: self.points.clone(),
            weights: self.weights.clone(),
            meta: meta.cloned(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<(Design, Option<DesignMeta>)> {
        let file: DesignFile = serde_json::from_str(text)?;
        let design = match file.kind {
            DesignKind::Approximate => Design::approximate(file.points, file.weights)?,
            DesignKind::Exact => {
                if file.weights.iter().any(|w| w.fract() != 0.0 || *w < 1.0) {
                    return Err(Error::InvalidDesign("exact weights must be positive integers".into()));
                }
                Design::exact(file.points, file.weights.iter().map(|&w| w as usize).collect())?
            }
        };
        if design.q != file.q {
            return Err(Error::InvalidDesign(format!("q is {} but points have {} coordinates", file.q, design.q)));
        }
        if let (Some(n), Some(stated)) = (design.runs(), file.runs) {
            if n != stated {
                return Err(Error::InvalidDesign(format!("N is {stated} but counts sum to {n}")));
            }
        }
        Ok((design, file.meta))
    }

    pub fn read_json(path: &Path) -> Result<(Design, Option<DesignMeta>)> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// One row per point: `x1..xq,weight`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 1..=self.q {
            let _ = write!(s, "x{i},");
        }
        s.push_str("weight\n");
        for (x, w) in self.points.iter().zip(&self.weights) {
            for v in x {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{w}");
        }
        s
    }
}

#[derive(Serialize, Deserialize)]
struct DesignFile {
    q: usize,
    kind: DesignKind,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    runs: Option<usize>,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<DesignMeta>,
}

fn check_points(points: &[Vec<f64>]) -> Result<()> {
    let Some(first) = points.first() else {
        return Err(Error::InvalidDesign("design has no points".into()));
    };
    let q = first.len();
    if q == 0 {
        return Err(Error::InvalidDesign("points have no coordinates".into()));
    }
    for (k, x) in points.iter().enumerate() {
        if x.len() != q {
            return Err(Error::InvalidDesign(format!("point {} has {} coordinates, expected {q}", k + 1, x.len())));
        }
        if x.iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidDesign(format!("point {} leaves [-1, 1]^{q}", k + 1)));
        }
    }
    Ok(())
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
