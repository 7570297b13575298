//! Simulation studies: D-efficiency over prior draws, screening power /
//! type I error / FDR, and GIC penalty distributions.
//!
//! Every replication draws from its own ChaCha8 generator seeded by hashing
//! the master seed with the task coordinates, so results do not depend on
//! scheduling or thread count and a longer run extends a shorter one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::construct::locally_optimal_poisson;
use crate::design::{d_objective, Design, DesignKind};
use crate::error::{Error, Result};
use crate::estimation::PooledData;
use crate::glm::{eta_unchecked, simulate_response, Dataset, Family};
use crate::modelspace::{CandidateModel, ModelSpace, PriorSpec};
use crate::optimize::{find_locally_d_optimal, AnnealConfig};
use crate::selection::{select_pooled, Criterion, SelectionResult};

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of task `(a, b)` under `master`.
pub fn task_seed(master: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(master) ^ a) ^ b)
}

fn task_rng(master: u64, a: usize, b: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(task_seed(master, a as u64, b as u64))
}

/// Criterion the studies pair with each family: Firth fits with GIC for
/// binomial data, ML fits with AIC for Poisson data.
pub fn default_criterion(family: Family) -> Criterion {
    match family {
        Family::BinomialLogit { .. } => Criterion::Gic,
        Family::PoissonLog => Criterion::Aic,
    }
}

/// How the locally D-optimal reference design is obtained at each draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// Closed-form minimally supported design (Poisson only).
    Analytic,
    /// Annealed design with the given number of support points.
    Anneal { support: usize, config: AnnealConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySample {
    pub model: usize,
    pub draw: usize,
    pub efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let quantile = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Summary {
            count: v.len(),
            min: v[0],
            q1: quantile(0.25),
            median: quantile(0.5),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q3: quantile(0.75),
            max: v[v.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub seed: u64,
    pub draws: usize,
    pub samples: Vec<EfficiencySample>,
    /// Draws whose reference design could not be found, per model.
    pub failed: Vec<(usize, usize)>,
}

impl EfficiencyReport {
    pub fn per_model(&self) -> Vec<(usize, Summary)> {
        let mut out: Vec<(usize, Summary)> = Vec::new();
        let mut start = 0;
        while start < self.samples.len() {
            let m = self.samples[start].model;
            let end = start + self.samples[start..].iter().take_while(|s| s.model == m).count();
            let values: Vec<f64> = self.samples[start..end].iter().map(|s| s.efficiency).collect();
            out.extend(Summary::of(&values).map(|s| (m, s)));
            start = end;
        }
        out
    }

    /// Summary over every sample of every model.
    pub fn pooled(&self) -> Option<Summary> {
        Summary::of(&self.samples.iter().map(|s| s.efficiency).collect::<Vec<_>>())
    }

    /// `model,draw,efficiency` long format.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# seed={} draws={}\nmodel,draw,efficiency\n", self.seed, self.draws);
        for e in &self.samples {
            let _ = writeln!(s, "{},{},{}", e.model, e.draw, e.efficiency);
        }
        s
    }

    /// `model,count,min,q1,median,mean,q3,max,failed`.
    pub fn summary_csv(&self) -> String {
        let mut s = format!("# seed={} draws={}\nmodel,count,min,q1,median,mean,q3,max,failed\n", self.seed, self.draws);
        for (m, sum) in self.per_model() {
            let failed = self.failed.iter().find(|(fm, _)| *fm == m).map_or(0, |f| f.1);
            let _ = writeln!(
                s,
                "{m},{},{},{},{},{},{},{},{failed}",
                sum.count, sum.min, sum.q1, sum.median, sum.mean, sum.q3, sum.max
            );
        }
        s
    }
}

/// D-efficiency of `design` relative to the locally optimal design at each
/// of `draws` prior draws, for every model of the space. A design that is
/// singular for a model has efficiency 0.
pub fn efficiency_study(
    design: &Design,
    space: &ModelSpace,
    prior: &PriorSpec,
    family: Family,
    draws: usize,
    reference: &Reference,
    seed: u64,
) -> Result<EfficiencyReport> {
    if draws == 0 {
        return Err(Error::InvalidData("draws must be at least 1".into()));
    }
    check_dims(design, space, prior)?;
    if matches!(reference, Reference::Analytic) && family != Family::PoissonLog {
        return Err(Error::InvalidData("the analytic reference exists for Poisson models only".into()));
    }
    let design = design.normalized();
    let tasks: Vec<(usize, usize)> = (0..space.len())
        .flat_map(|m| (0..draws).map(move |d| (m, d)))
        .collect();
    let results: Vec<Option<f64>> = tasks
        .par_iter()
        .map(|&(m, d)| {
            let model = &space.models()[m];
            let mut rng = task_rng(seed, model.index, d);
            let beta = prior.sample_parameters(model, &mut rng);
            let reference_value = match reference {
                Reference::Analytic => locally_optimal_poisson(model, &beta)
                    .and_then(|r| d_objective(&r, model, &beta, family)),
                Reference::Anneal { support, config } => {
                    let config = AnnealConfig {
                        seed: task_seed(seed ^ 0x5EED, model.index as u64, d as u64),
                        ..config.clone()
                    };
                    find_locally_d_optimal(model, &beta, family, (*support).max(model.p()), &config).map(|o| o.objective)
                }
            };
            let reference_value = reference_value.ok()?;
            Some(match d_objective(&design, model, &beta, family) {
                Ok(v) => (v - reference_value).exp(),
                Err(_) => 0.0,
            })
        })
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut failed: Vec<(usize, usize)> = Vec::new();
    for (&(m, d), r) in tasks.iter().zip(results) {
        let index = space.models()[m].index;
        match r {
            Some(efficiency) => samples.push(EfficiencySample {
                model: index,
                draw: d + 1,
                efficiency,
            }),
            None => match failed.last_mut() {
                Some((fm, c)) if *fm == index => *c += 1,
                _ => failed.push((index, 1)),
            },
        }
    }
    Ok(EfficiencyReport {
        seed,
        draws,
        samples,
        failed,
    })
}

fn check_dims(design: &Design, space: &ModelSpace, prior: &PriorSpec) -> Result<()> {
    if design.q() != space.q() || prior.q() != space.q() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} variables, prior {}, model space {}",
            design.q(),
            prior.q(),
            space.q()
        )));
    }
    Ok(())
}

/// Scores of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationScore {
    pub power: f64,
    pub type1: f64,
    pub fdr: f64,
}

impl ReplicationScore {
    /// Compares declared-active with truly active variables (both 1-based).
    pub fn compare(q: usize, truth: &[usize], declared: &[usize]) -> Self {
        let hits = declared.iter().filter(|v| truth.contains(v)).count() as f64;
        let false_hits = declared.len() as f64 - hits;
        let inactive = (q - truth.len()) as f64;
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        Self {
            power: ratio(hits, truth.len() as f64),
            type1: ratio(false_hits, inactive),
            fdr: ratio(false_hits, declared.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningMetrics {
    pub true_model: usize,
    pub size: usize,
    pub power: f64,
    pub type1: f64,
    pub fdr: f64,
    pub se_power: f64,
    pub se_type1: f64,
    pub se_fdr: f64,
    /// Replications that produced a selection.
    pub replications: usize,
    pub failed_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub seed: u64,
    pub reps: usize,
    pub criterion: Criterion,
    pub rows: Vec<ScreeningMetrics>,
}

impl ScreeningReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# seed={} reps={} criterion={}\ntrue_model,size,power,type1,fdr,se_power,se_type1,se_fdr,failed_reps\n",
            self.seed,
            self.reps,
            self.criterion.name()
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.true_model, r.size, r.power, r.type1, r.fdr, r.se_power, r.se_type1, r.se_fdr, r.failed_reps
            );
        }
        s
    }

    /// Means of power, type I error and FDR over true models.
    pub fn grand_means(&self) -> (f64, f64, f64) {
        let n = self.rows.len().max(1) as f64;
        let sum = |f: fn(&ScreeningMetrics) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        (sum(|r| r.power), sum(|r| r.type1), sum(|r| r.fdr))
    }

    pub fn summary_line(&self) -> String {
        let (p, t, f) = self.grand_means();
        format!("mean power {p:.4}, mean type I error {t:.4}, mean FDR {f:.4} over {} true models", self.rows.len())
    }
}

/// Fixed ingredients of a screening or penalty study.
pub struct Study<'a> {
    pub design: &'a Design,
    pub space: &'a ModelSpace,
    pub prior: &'a PriorSpec,
    pub family: Family,
    pub criterion: Criterion,
    pub seed: u64,
}

impl Study<'_> {
    fn runs(&self) -> Result<Vec<Vec<f64>>> {
        check_dims(self.design, self.space, self.prior)?;
        if self.design.kind() != DesignKind::Exact {
            return Err(Error::InvalidDesign(
                "screening needs an exact design; round the approximate design first".into(),
            ));
        }
        self.design.run_list()
    }

    /// Simulates replication `rep` (0-based) with `true_model` generating
    /// the data, then selects a model.
    pub fn replicate(&self, runs: &[Vec<f64>], true_model: &CandidateModel, rep: usize) -> Result<SelectionResult> {
        let mut rng = task_rng(self.seed, true_model.index, rep);
        let beta = self.prior.sample_parameters(true_model, &mut rng);
        let trials = self.family.default_trials();
        let y = runs
            .iter()
            .map(|x| simulate_response(self.family, eta_unchecked(true_model, &beta, x), trials, &mut rng).map(|v| v as f64))
            .collect::<Result<Vec<f64>>>()?;
        let data = Dataset::with_trials(self.family, runs.to_vec(), y, vec![trials; runs.len()])?;
        select_pooled(self.space, &PooledData::new(self.family, &data), self.criterion)
    }

    /// Per-replication scores of one true model, `None` for failed
    /// replications.
    pub fn replication_scores(&self, true_model: usize, reps: usize) -> Result<Vec<Option<ReplicationScore>>> {
        let runs = self.runs()?;
        let model = self
            .space
            .get(true_model)
            .ok_or_else(|| Error::InvalidData(format!("no model {true_model}")))?;
        let truth: Vec<usize> = model.vars().iter().map(|v| v + 1).collect();
        Ok((0..reps)
            .into_par_iter()
            .map(|r| {
                self.replicate(&runs, model, r)
                    .ok()
                    .map(|sel| ReplicationScore::compare(self.space.q(), &truth, &sel.active))
            })
            .collect())
    }

    /// Screening metrics for the given true models (all models when empty).
    pub fn screening(&self, true_models: &[usize], reps: usize) -> Result<ScreeningReport> {
        if reps == 0 {
            return Err(Error::InvalidData("reps must be at least 1".into()));
        }
        let runs = self.runs()?;
        let models = self.true_models(true_models)?;
        let tasks: Vec<(usize, usize)> = models.iter().flat_map(|&m| (0..reps).map(move |r| (m, r))).collect();
        let scores: Vec<Option<ReplicationScore>> = tasks
            .par_iter()
            .map(|&(m, r)| {
                let model = &self.space.models()[m];
                let truth: Vec<usize> = model.vars().iter().map(|v| v + 1).collect();
                self.replicate(&runs, model, r)
                    .ok()
                    .map(|sel| ReplicationScore::compare(self.space.q(), &truth, &sel.active))
            })
            .collect();
        let rows = models
            .iter()
            .zip(scores.chunks(reps))
            .map(|(&m, chunk)| metrics(&self.space.models()[m], chunk))
            .collect();
        Ok(ScreeningReport {
            seed: self.seed,
            reps,
            criterion: self.criterion,
            rows,
        })
    }

    fn true_models(&self, wanted: &[usize]) -> Result<Vec<usize>> {
        if wanted.is_empty() {
            return Ok((0..self.space.len()).collect());
        }
        wanted
            .iter()
            .map(|&i| {
                self.space
                    .get(i)
                    .map(|_| i - 1)
                    .ok_or_else(|| Error::InvalidData(format!("no model {i} in a space of {}", self.space.len())))
            })
            .collect()
    }

    /// GIC penalties of every fitted model for each replication of the given
    /// true models.
    pub fn penalties(&self, true_models: &[usize], reps: usize) -> Result<PenaltyReport> {
        if reps == 0 {
            return Err(Error::InvalidData("reps must be at least 1".into()));
        }
        let runs = self.runs()?;
        let models = self.true_models(true_models)?;
        let tasks: Vec<(usize, usize)> = models.iter().flat_map(|&m| (0..reps).map(move |r| (m, r))).collect();
        let per_task: Vec<Option<Vec<PenaltyRow>>> = tasks
            .par_iter()
            .map(|&(m, r)| {
                let model = &self.space.models()[m];
                let sel = self.replicate(&runs, model, r).ok()?;
                Some(
                    sel.scores
                        .iter()
                        .filter_map(|s| {
                            s.penalty.map(|penalty| PenaltyRow {
                                true_model: model.index,
                                rep: r + 1,
                                fitted_model: s.model,
                                size: s.size,
                                penalty,
                            })
                        })
                        .collect(),
                )
            })
            .collect();
        let mut rows = Vec::new();
        let mut failed = vec![0usize; models.len()];
        for (t, res) in per_task.into_iter().enumerate() {
            match res {
                Some(r) => rows.extend(r),
                None => failed[t / reps] += 1,
            }
        }
        Ok(PenaltyReport {
            seed: self.seed,
            reps,
            rows,
            failed: models
                .iter()
                .zip(failed)
                .map(|(&m, f)| (self.space.models()[m].index, f))
                .collect(),
        })
    }
}

fn metrics(model: &CandidateModel, chunk: &[Option<ReplicationScore>]) -> ScreeningMetrics {
    let ok: Vec<&ReplicationScore> = chunk.iter().flatten().collect();
    let n = ok.len();
    let mean = |f: fn(&ReplicationScore) -> f64| if n > 0 { ok.iter().map(|s| f(s)).sum::<f64>() / n as f64 } else { 0.0 };
    let se = |p: f64| if n > 0 { (p * (1.0 - p) / n as f64).max(0.0).sqrt() } else { 0.0 };
    let (power, type1, fdr) = (mean(|s| s.power), mean(|s| s.type1), mean(|s| s.fdr));
    ScreeningMetrics {
        true_model: model.index,
        size: model.size(),
        power,
        type1,
        fdr,
        se_power: se(power),
        se_type1: se(type1),
        se_fdr: se(fdr),
        replications: n,
        failed_reps: chunk.len() - n,
    }
}

/// Screening study over every true model of the space.
pub fn screening_study(
    design: &Design,
    space: &ModelSpace,
    prior: &PriorSpec,
    family: Family,
    criterion: Criterion,
    reps: usize,
    seed: u64,
) -> Result<ScreeningReport> {
    Study {
        design,
        space,
        prior,
        family,
        criterion,
        seed,
    }
    .screening(&[], reps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRow {
    pub true_model: usize,
    pub rep: usize,
    pub fitted_model: usize,
    pub size: usize,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyReport {
    pub seed: u64,
    pub reps: usize,
    pub rows: Vec<PenaltyRow>,
    /// Failed replications per true model.
    pub failed: Vec<(usize, usize)>,
}

impl PenaltyReport {
    /// Penalty summaries keyed by (true model, fitted model).
    pub fn summaries(&self) -> Vec<(usize, usize, usize, Summary)> {
        let mut keys: Vec<(usize, usize, usize)> = self.rows.iter().map(|r| (r.true_model, r.fitted_model, r.size)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .filter_map(|(t, f, size)| {
                let v: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.true_model == t && r.fitted_model == f)
                    .map(|r| r.penalty)
                    .collect();
                Summary::of(&v).map(|s| (t, f, size, s))
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# seed={} reps={}\ntrue_model,rep,fitted_model,size,penalty\n", self.seed, self.reps);
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.true_model, r.rep, r.fitted_model, r.size, r.penalty);
        }
        s
    }

    /// `true_model,fitted_model,size,count,min,q1,median,mean,q3,max`.
    pub fn summary_csv(&self) -> String {
        let mut s = format!(
            "# seed={} reps={}\ntrue_model,fitted_model,size,count,min,q1,median,mean,q3,max\n",
            self.seed, self.reps
        );
        for (t, f, size, m) in self.summaries() {
            let _ = writeln!(
                s,
                "{t},{f},{size},{},{},{},{},{},{},{}",
                m.count, m.min, m.q1, m.median, m.mean, m.q3, m.max
            );
        }
        s
    }
}

pub fn penalty_study(
    design: &Design,
    space: &ModelSpace,
    prior: &PriorSpec,
    family: Family,
    true_models: &[usize],
    reps: usize,
    seed: u64,
) -> Result<PenaltyReport> {
    Study {
        design,
        space,
        prior,
        family,
        criterion: Criterion::Gic,
        seed,
    }
    .penalties(true_models, reps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{min_support_poisson, replicate_to_n};

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for a in 0..50 {
            for b in 0..50 {
                assert!(seen.insert(task_seed(7, a, b)));
            }
        }
        assert_eq!(task_seed(7, 3, 4), task_seed(7, 3, 4));
        assert_ne!(task_seed(7, 3, 4), task_seed(8, 3, 4));
    }

    #[test]
    fn replication_scores() {
        let s = ReplicationScore::compare(5, &[1, 2], &[1, 3]);
        assert_eq!((s.power, s.type1, s.fdr), (0.5, 1.0 / 3.0, 0.5));
        let s = ReplicationScore::compare(5, &[1, 2, 3, 4, 5], &[1, 2]);
        assert_eq!((s.power, s.type1, s.fdr), (0.4, 0.0, 0.0));
        let s = ReplicationScore::compare(5, &[2], &[]);
        assert_eq!((s.power, s.type1, s.fdr), (0.0, 0.0, 0.0));
    }

    #[test]
    fn summary_quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max, s.mean), (1.0, 2.0, 3.0, 4.0, 5.0, 3.0));
        let s = Summary::of(&[1.0, 2.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.25, 1.5, 1.75));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn reference_against_itself() {
        let slopes = [3.0, -2.5, 4.0];
        let prior = PriorSpec::point_mass(&slopes, 0.0);
        let design = min_support_poisson(&prior, 3).unwrap();
        let space = ModelSpace::from_models(3, vec![CandidateModel::full(3)]).unwrap();
        let rep = efficiency_study(&design, &space, &prior, Family::poisson(), 1, &Reference::Analytic, 1).unwrap();
        assert_eq!(rep.samples.len(), 1);
        assert!((rep.samples[0].efficiency - 1.0).abs() < 1e-12);
        assert!(efficiency_study(&design, &space, &prior, Family::logistic(), 1, &Reference::Analytic, 1).is_err());
    }

    #[test]
    fn annealed_reference_matches_analytic_for_poisson() {
        let prior = PriorSpec::signed_uniform(2, 1.0).unwrap();
        let design = min_support_poisson(&prior, 2).unwrap();
        let space = ModelSpace::enumerate(2, 2).unwrap();
        let config = AnnealConfig {
            restarts: 2,
            max_sweeps: 60,
            min_sweeps: 20,
            ..Default::default()
        };
        let a = efficiency_study(&design, &space, &prior, Family::poisson(), 4, &Reference::Analytic, 3).unwrap();
        let b = efficiency_study(&design, &space, &prior, Family::poisson(), 4, &Reference::Anneal { support: 3, config }, 3).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!(y.efficiency >= x.efficiency - 1e-6 && y.efficiency <= x.efficiency * (1.0 + 1e-3));
        }
    }

    #[test]
    fn poisson_efficiencies_grow_with_model_size() {
        let prior = PriorSpec::signed_uniform(5, 1.0).unwrap();
        let design = min_support_poisson(&prior, 5).unwrap();
        let space = ModelSpace::enumerate(5, 5).unwrap();
        let rep = efficiency_study(&design, &space, &prior, Family::poisson(), 100, &Reference::Analytic, 11).unwrap();
        assert!(rep.failed.is_empty());
        let by_size: Vec<f64> = (1..=5)
            .map(|k| {
                let v: Vec<f64> = rep
                    .samples
                    .iter()
                    .filter(|s| space.get(s.model).unwrap().size() == k)
                    .map(|s| s.efficiency)
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        assert!(by_size.windows(2).all(|w| w[1] > w[0]), "{by_size:?}");
        assert!(rep.per_model().iter().all(|(_, s)| s.mean > 0.5 && s.max <= 1.0 + 1e-12));
        assert!(rep.to_csv().starts_with("# seed=11 draws=100\nmodel,draw,efficiency\n1,1,"));
    }

    fn poisson_study(q: usize, runs: usize) -> (Design, ModelSpace, PriorSpec) {
        let prior = PriorSpec::signed_uniform(q, 1.0).unwrap();
        let design = replicate_to_n(&min_support_poisson(&prior, q).unwrap(), runs).unwrap();
        (design, ModelSpace::enumerate(q, q).unwrap(), prior)
    }

    #[test]
    fn screening_is_reproducible_and_extends() {
        let (design, space, prior) = poisson_study(3, 8);
        let study = Study {
            design: &design,
            space: &space,
            prior: &prior,
            family: Family::poisson(),
            criterion: Criterion::Aic,
            seed: 99,
        };
        let short = study.replication_scores(4, 10).unwrap();
        let long = study.replication_scores(4, 20).unwrap();
        assert_eq!(short[..], long[..10]);
        let a = study.screening(&[], 10).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let b = pool.install(|| study.screening(&[], 10)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 7);
        let full = a.rows.last().unwrap();
        assert_eq!(full.type1, 0.0);
        for r in &a.rows {
            for v in [r.power, r.type1, r.fdr] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn single_point_design_fails_every_replication() {
        let design = Design::exact(vec![vec![1.0, -1.0]], vec![10]).unwrap();
        let space = ModelSpace::enumerate(2, 2).unwrap();
        let prior = PriorSpec::signed_uniform(2, 1.0).unwrap();
        let rep = screening_study(&design, &space, &prior, Family::poisson(), Criterion::Aic, 5, 1).unwrap();
        for r in &rep.rows {
            assert_eq!((r.failed_reps, r.replications, r.power), (5, 0, 0.0));
        }
        let approx = design.normalized();
        assert!(screening_study(&approx, &space, &prior, Family::poisson(), Criterion::Aic, 5, 1).is_err());
    }

    #[test]
    fn penalty_rows_cover_every_fitted_model() {
        let prior = PriorSpec::signed_uniform(2, 1.0).unwrap();
        let points = vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]];
        let design = Design::exact(points, vec![4; 5]).unwrap();
        let space = ModelSpace::enumerate(2, 2).unwrap();
        let rep = penalty_study(&design, &space, &prior, Family::logistic(), &[1, 3], 6, 5).unwrap();
        assert_eq!(rep.rows.len() + rep.failed.iter().map(|f| f.1 * 3).sum::<usize>(), 2 * 6 * 3);
        assert!(rep.rows.iter().all(|r| r.penalty.is_finite()));
        assert_eq!(rep.summaries().len(), 6);
        assert!(penalty_study(&design, &space, &prior, Family::logistic(), &[9], 6, 5).is_err());
    }
}
