//! Simulated-annealing coordinate exchange over approximate designs.
//!
//! One sweep visits every coordinate of every support point, then every
//! weight. Each visit proposes a uniform perturbation, accepts it when the
//! objective does not drop and otherwise with probability `exp(delta / T)`.
//! The temperature is multiplied by the cooling factor after each sweep
//! block. The best design seen is kept and finally refined by a
//! deterministic pattern search.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::design::{Design, DesignKind, IcObjective};
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::modelspace::CandidateModel;

/// A design criterion to maximise. `-inf` marks designs to reject.
pub trait DesignObjective: Sync {
    fn evaluate(&self, design: &Design) -> f64;

    /// State that scores single-point or single-weight moves against a
    /// current design.
    fn tracker<'a>(&'a self, design: &Design) -> Box<dyn MoveTracker + 'a>;
}

pub trait MoveTracker {
    fn value(&self) -> f64;
    fn design(&self) -> &Design;
    /// Objective if point `k` moved to `x`.
    fn try_point(&mut self, k: usize, x: &[f64]) -> f64;
    /// Objective if point `k`'s weight became `w` and all weights were
    /// then rescaled to their previous total.
    fn try_weight(&mut self, k: usize, w: f64) -> f64;
    /// Commits the most recent proposal.
    fn accept(&mut self);
    /// Recomputes cached state from the current design.
    fn refresh(&mut self);
}

/// Wraps a plain function as an objective; every move is a full
/// re-evaluation.
pub struct FnObjective<F>(pub F);

impl<F: Fn(&Design) -> f64 + Sync> DesignObjective for FnObjective<F> {
    fn evaluate(&self, design: &Design) -> f64 {
        (self.0)(design)
    }

    fn tracker<'a>(&'a self, design: &Design) -> Box<dyn MoveTracker + 'a> {
        Box::new(Recompute::new(move |d: &Design| (self.0)(d), design))
    }
}

struct Recompute<F> {
    eval: F,
    design: Design,
    candidate: Design,
    value: f64,
    pending: f64,
}

impl<F: Fn(&Design) -> f64> Recompute<F> {
    fn new(eval: F, design: &Design) -> Self {
        let value = eval(design);
        Self {
            eval,
            design: design.clone(),
            candidate: design.clone(),
            value,
            pending: value,
        }
    }
}

impl<F: Fn(&Design) -> f64> MoveTracker for Recompute<F> {
    fn value(&self) -> f64 {
        self.value
    }

    fn design(&self) -> &Design {
        &self.design
    }

    fn try_point(&mut self, k: usize, x: &[f64]) -> f64 {
        self.candidate.clone_from(&self.design);
        self.candidate.points_mut()[k].copy_from_slice(x);
        self.pending = (self.eval)(&self.candidate);
        self.pending
    }

    fn try_weight(&mut self, k: usize, w: f64) -> f64 {
        self.candidate.clone_from(&self.design);
        let total: f64 = self.design.weights().iter().sum();
        let weights = self.candidate.weights_mut();
        weights[k] = w;
        let c = total / weights.iter().sum::<f64>();
        weights.iter_mut().for_each(|v| *v *= c);
        self.pending = (self.eval)(&self.candidate);
        self.pending
    }

    fn accept(&mut self) {
        std::mem::swap(&mut self.design, &mut self.candidate);
        self.value = self.pending;
    }

    fn refresh(&mut self) {
        self.value = (self.eval)(&self.design);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    /// Starting temperature; `None` scales it to the mean absolute change of
    /// 100 random proposals from the start design.
    pub initial_temperature: Option<f64>,
    pub cooling: f64,
    pub sweeps_per_temperature: usize,
    pub min_sweeps: usize,
    pub max_sweeps: usize,
    /// Stop once the temperature falls below this fraction of the start.
    pub min_temperature_ratio: f64,
    /// Coordinate proposal half-width, shrunk linearly from start to end.
    pub coordinate_width_start: f64,
    pub coordinate_width_end: f64,
    /// Weight proposal half-width as a multiple of `1/n`.
    pub weight_width: f64,
    pub weight_floor: f64,
    pub optimize_weights: bool,
    pub restarts: usize,
    pub seed: u64,
    pub polish: bool,
    /// Random starts tried per restart before giving up.
    pub start_attempts: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            initial_temperature: None,
            cooling: 0.95,
            sweeps_per_temperature: 1,
            min_sweeps: 50,
            max_sweeps: 200,
            min_temperature_ratio: 1e-4,
            coordinate_width_start: 1.0,
            coordinate_width_end: 0.1,
            weight_width: 0.5,
            weight_floor: 1e-4,
            optimize_weights: true,
            restarts: 5,
            seed: 0,
            polish: true,
            start_attempts: 100,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::InvalidData(format!("anneal.{field}: {why}")));
        if let Some(t) = self.initial_temperature {
            if !(t > 0.0 && t.is_finite()) {
                return bad("initial_temperature", "must be positive");
            }
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return bad("cooling", "must lie in (0, 1)");
        }
        if self.sweeps_per_temperature == 0 {
            return bad("sweeps_per_temperature", "must be at least 1");
        }
        if self.max_sweeps == 0 || self.min_sweeps > self.max_sweeps {
            return bad("min_sweeps", "need 0 <= min_sweeps <= max_sweeps and max_sweeps >= 1");
        }
        if !(self.min_temperature_ratio > 0.0 && self.min_temperature_ratio < 1.0) {
            return bad("min_temperature_ratio", "must lie in (0, 1)");
        }
        for (name, w) in [
            ("coordinate_width_start", self.coordinate_width_start),
            ("coordinate_width_end", self.coordinate_width_end),
        ] {
            if !(w > 0.0 && w <= 2.0) {
                return bad(name, "must lie in (0, 2]");
            }
        }
        if !(self.weight_width > 0.0 && self.weight_width < 1.0) {
            return bad("weight_width", "must lie in (0, 1)");
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 1.0) {
            return bad("weight_floor", "must lie in (0, 1)");
        }
        if self.restarts == 0 {
            return bad("restarts", "must be at least 1");
        }
        if self.start_attempts == 0 {
            return bad("start_attempts", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sweep: usize,
    pub temperature: f64,
    pub current: f64,
    pub best: f64,
}

#[derive(Debug, Clone)]
pub struct AnnealOutcome {
    pub design: Design,
    pub objective: f64,
    /// Trace of the winning restart.
    pub trace: Vec<TraceRow>,
    pub restart: usize,
    /// Best objective reached by each restart (`-inf` for failed starts).
    pub restart_values: Vec<f64>,
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("sweep,temperature,current,best\n");
    for r in trace {
        let _ = writeln!(s, "{},{},{},{}", r.sweep, r.temperature, r.current, r.best);
    }
    s
}

/// Anneals from `initial` (restart 0) and from random Latin-hypercube
/// starts (other restarts); returns the best design over all restarts.
pub fn anneal<O: DesignObjective>(objective: &O, initial: &Design, config: &AnnealConfig) -> Result<AnnealOutcome> {
    run_restarts(objective, initial.q(), initial.len(), Some(initial), config)
}

/// Anneals from random Latin-hypercube starts with `n` support points.
pub fn anneal_random<O: DesignObjective>(objective: &O, q: usize, n: usize, config: &AnnealConfig) -> Result<AnnealOutcome> {
    if q == 0 || n == 0 {
        return Err(Error::InvalidData("design needs at least one point and one variable".into()));
    }
    run_restarts(objective, q, n, None, config)
}

/// Locally D-optimal approximate design with `n` support points for one
/// model at one parameter vector.
pub fn find_locally_d_optimal(
    model: &CandidateModel,
    beta: &[f64],
    family: Family,
    n: usize,
    config: &AnnealConfig,
) -> Result<AnnealOutcome> {
    if n < model.p() {
        return Err(Error::InvalidData(format!(
            "{n} support points cannot estimate {} parameters",
            model.p()
        )));
    }
    let obj = IcObjective::d_optimal(model, beta, family)?;
    anneal_random(&obj, model.q(), n, config)
}

fn run_restarts<O: DesignObjective>(
    objective: &O,
    q: usize,
    n: usize,
    initial: Option<&Design>,
    config: &AnnealConfig,
) -> Result<AnnealOutcome> {
    config.validate()?;
    let chains: Vec<Option<Chain>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let start = initial
                .filter(|_| r == 0)
                .map(|d| d.normalized())
                .filter(|d| objective.evaluate(d).is_finite())
                .or_else(|| random_start(objective, q, n, config.start_attempts, &mut rng))?;
            Some(run_chain(objective, start, config, &mut rng))
        })
        .collect();
    let restart_values: Vec<f64> = chains
        .iter()
        .map(|c| c.as_ref().map_or(f64::NEG_INFINITY, |c| c.value))
        .collect();
    let (restart, best) = chains
        .into_iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| (r, c)))
        // strict comparison keeps the earliest restart on ties
        .fold(None::<(usize, Chain)>, |acc, (r, c)| match acc {
            Some((ar, a)) if a.value >= c.value => Some((ar, a)),
            _ => Some((r, c)),
        })
        .ok_or(Error::NoFeasibleStart {
            attempts: config.start_attempts * config.restarts,
        })?;
    Ok(AnnealOutcome {
        design: best.design,
        objective: best.value,
        trace: best.trace,
        restart,
        restart_values,
    })
}

/// Random Latin-hypercube points with equal weights.
pub fn latin_hypercube<R: Rng + ?Sized>(q: usize, n: usize, rng: &mut R) -> Design {
    let mut points = vec![vec![0.0; q]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..q {
        perm.shuffle(rng);
        for (k, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            points[k][i] = (-1.0 + 2.0 * (stratum as f64 + u) / n as f64).clamp(-1.0, 1.0);
        }
    }
    Design::raw(points, vec![1.0 / n as f64; n], DesignKind::Approximate)
}

fn random_start<O: DesignObjective, R: Rng>(objective: &O, q: usize, n: usize, attempts: usize, rng: &mut R) -> Option<Design> {
    (0..attempts)
        .map(|_| latin_hypercube(q, n, rng))
        .find(|d| objective.evaluate(d).is_finite())
}

struct Chain {
    design: Design,
    value: f64,
    trace: Vec<TraceRow>,
}

enum Move {
    Coordinate(usize, usize),
    Weight(usize),
}

fn propose<R: Rng>(tr: &mut dyn MoveTracker, mv: &Move, width: f64, config: &AnnealConfig, rng: &mut R) -> f64 {
    match *mv {
        Move::Coordinate(k, i) => {
            let mut x = tr.design().points()[k].clone();
            let lo = (x[i] - width).max(-1.0);
            let hi = (x[i] + width).min(1.0);
            x[i] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            tr.try_point(k, &x)
        }
        Move::Weight(k) => {
            let n = tr.design().len() as f64;
            let total: f64 = tr.design().weights().iter().sum();
            let half = config.weight_width * total / n;
            let w = tr.design().weights()[k];
            let lo = (w - half).max(config.weight_floor * total);
            let hi = w + half;
            let new_w = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            tr.try_weight(k, new_w)
        }
    }
}

fn moves(q: usize, n: usize, weights: bool) -> Vec<Move> {
    let mut v: Vec<Move> = (0..n)
        .flat_map(|k| (0..q).map(move |i| Move::Coordinate(k, i)))
        .collect();
    if weights && n > 1 {
        v.extend((0..n).map(Move::Weight));
    }
    v
}

fn initial_temperature<R: Rng>(tr: &mut dyn MoveTracker, all: &[Move], config: &AnnealConfig, rng: &mut R) -> f64 {
    if let Some(t) = config.initial_temperature {
        return t;
    }
    let current = tr.value();
    let mut total = 0.0;
    let mut count = 0usize;
    for _ in 0..100 {
        let mv = &all[rng.random_range(0..all.len())];
        let v = propose(tr, mv, config.coordinate_width_start, config, rng);
        if v.is_finite() {
            total += (v - current).abs();
            count += 1;
        }
    }
    let t = if count > 0 { total / count as f64 } else { 0.0 };
    if t > 0.0 {
        t
    } else {
        1e-8 * current.abs().max(1.0)
    }
}

fn run_chain<O: DesignObjective, R: Rng>(objective: &O, start: Design, config: &AnnealConfig, rng: &mut R) -> Chain {
    let (q, n) = (start.q(), start.len());
    let all = moves(q, n, config.optimize_weights);
    let mut tr = objective.tracker(&start);
    let t0 = initial_temperature(tr.as_mut(), &all, config, rng);
    let mut temperature = t0;
    let mut best_value = tr.value();
    let mut best_design = tr.design().clone();
    let mut trace = Vec::new();

    for sweep in 0..config.max_sweeps {
        let frac = if config.max_sweeps > 1 {
            sweep as f64 / (config.max_sweeps - 1) as f64
        } else {
            1.0
        };
        let width = config.coordinate_width_start + (config.coordinate_width_end - config.coordinate_width_start) * frac;
        for _ in 0..config.sweeps_per_temperature {
            for mv in &all {
                let current = tr.value();
                let v = propose(tr.as_mut(), mv, width, config, rng);
                if !v.is_finite() {
                    continue;
                }
                let delta = v - current;
                let accept = delta >= 0.0 || rng.random::<f64>() < (delta / temperature).exp();
                if accept {
                    tr.accept();
                    if v > best_value {
                        best_value = v;
                        best_design.clone_from(tr.design());
                    }
                }
            }
        }
        // clears drift from incremental updates
        tr.refresh();
        trace.push(TraceRow {
            sweep,
            temperature,
            current: tr.value(),
            best: best_value,
        });
        temperature *= config.cooling;
        if sweep + 1 >= config.min_sweeps && temperature < config.min_temperature_ratio * t0 {
            break;
        }
    }

    if config.polish {
        best_design = polish(objective, &best_design, config);
    }
    let design = finalize(best_design);
    let value = objective.evaluate(&design);
    Chain { design, value, trace }
}

/// Greedy pattern search: try +/- step on every coordinate and weight,
/// halving the step when no move helps.
fn polish<O: DesignObjective>(objective: &O, start: &Design, config: &AnnealConfig) -> Design {
    let (q, n) = (start.q(), start.len());
    let mut tr = objective.tracker(start);
    let mut step = 0.05;
    while step > 1e-6 {
        for _ in 0..50 {
            let mut improved = false;
            for k in 0..n {
                for i in 0..q {
                    for dir in [1.0, -1.0] {
                        let mut x = tr.design().points()[k].clone();
                        let moved = (x[i] + dir * step).clamp(-1.0, 1.0);
                        if moved == x[i] {
                            continue;
                        }
                        x[i] = moved;
                        let current = tr.value();
                        if tr.try_point(k, &x) > current + 1e-14 * current.abs().max(1.0) {
                            tr.accept();
                            improved = true;
                        }
                    }
                }
                if config.optimize_weights && n > 1 {
                    for dir in [1.0, -1.0] {
                        let total: f64 = tr.design().weights().iter().sum();
                        let w = tr.design().weights()[k];
                        let new_w = (w * (1.0 + dir * step)).max(config.weight_floor * total);
                        let current = tr.value();
                        if tr.try_weight(k, new_w) > current + 1e-14 * current.abs().max(1.0) {
                            tr.accept();
                            improved = true;
                        }
                    }
                }
            }
            tr.refresh();
            if !improved {
                break;
            }
        }
        step *= 0.5;
    }
    tr.design().clone()
}

fn finalize(design: Design) -> Design {
    let points = design
        .points()
        .iter()
        .map(|x| x.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
        .collect();
    Design::approximate(points, design.weights().to_vec()).expect("annealed design stays valid")
}
