use std::cmp::Ordering;

use super::{Design, QmcSampler};
use crate::error::{Error, Result};
use crate::glm::{eta_unchecked, variance, Family};
use crate::linalg::{logdet_buffer, logdet_spd, Matrix};
use crate::modelspace::{CandidateModel, ModelSpace, PriorSpec};
use crate::optimize::{DesignObjective, MoveTracker};

/// Support indices in a fixed total order of (point, weight), so sums over
/// points do not depend on how the design lists them.
fn canonical_order(design: &Design) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..design.len()).collect();
    idx.sort_by(|&a, &b| {
        let (pa, pb) = (&design.points[a], &design.points[b]);
        pa.iter()
            .zip(pb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(design.weights[a].total_cmp(&design.weights[b]))
    });
    idx
}

/// Adds `c * f f'` to the upper triangle of the packed `p x p` buffer.
#[inline]
fn add_outer_upper(m: &mut [f64], f: &[f64], c: f64) {
    let p = f.len();
    for i in 0..p {
        let ci = c * f[i];
        let row = &mut m[i * p..(i + 1) * p];
        for j in i..p {
            row[j] += ci * f[j];
        }
    }
}

fn mirror_upper(m: &mut [f64], p: usize) {
    for i in 0..p {
        for j in 0..i {
            m[i * p + j] = m[j * p + i];
        }
    }
}

/// Accumulates `sum_k w_k var_k f(x_k) f(x_k)'` into `m` (full symmetric).
fn accumulate_information(
    design: &Design,
    order: &[usize],
    model: &CandidateModel,
    beta: &[f64],
    family: Family,
    m: &mut [f64],
    f: &mut [f64],
) {
    let p = model.p();
    let trials = family.default_trials();
    m.iter_mut().for_each(|v| *v = 0.0);
    for &k in order {
        let x = &design.points[k];
        model.fill_row(x, f);
        let v = variance(family, eta_unchecked(model, beta, x), trials);
        add_outer_upper(m, f, design.weights[k] * v);
    }
    mirror_upper(m, p);
}

fn check_beta(model: &CandidateModel, beta: &[f64], design: &Design) -> Result<()> {
    if beta.len() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} parameters, beta has {}",
            model.p(),
            beta.len()
        )));
    }
    if design.q() != model.q() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} variables, model {}",
            design.q(),
            model.q()
        )));
    }
    Ok(())
}

/// Weighted information `sum_k w_k var(y_k) f_m(x_k) f_m(x_k)'`. Exact
/// designs use raw counts, approximate designs proportions.
pub fn information_matrix(design: &Design, model: &CandidateModel, beta: &[f64], family: Family) -> Result<Matrix> {
    check_beta(model, beta, design)?;
    let p = model.p();
    let mut m = vec![0.0; p * p];
    let mut f = vec![0.0; p];
    accumulate_information(design, &canonical_order(design), model, beta, family, &mut m, &mut f);
    Matrix::from_row_major(p, p, m)
}

/// `(1/p) log det` of the information matrix.
pub fn d_objective(design: &Design, model: &CandidateModel, beta: &[f64], family: Family) -> Result<f64> {
    let info = information_matrix(design, model, beta, family)?;
    Ok(logdet_spd(&info)? / model.p() as f64)
}

/// `exp(phi_D(candidate) - phi_D(reference))`.
pub fn d_efficiency(
    candidate: &Design,
    reference: &Design,
    model: &CandidateModel,
    beta: &[f64],
    family: Family,
) -> Result<f64> {
    let a = d_objective(candidate, model, beta, family)?;
    let b = d_objective(reference, model, beta, family)?;
    Ok((a - b).exp())
}

/// Sum over models of `(1/p_m) log det` at one parameter vector per model;
/// `-inf` when any model's information is singular.
pub fn local_ic_objective(design: &Design, space: &ModelSpace, betas: &[Vec<f64>], family: Family) -> f64 {
    match IcObjective::local(space, betas, family) {
        Ok(obj) => obj.evaluate(design),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Bayesian information capacity: per-model prior averages of the scaled
/// log-determinant, estimated on the sampler's points and summed.
pub fn bayesian_ic_objective(
    design: &Design,
    space: &ModelSpace,
    prior: &PriorSpec,
    family: Family,
    qmc: &QmcSampler,
) -> f64 {
    IcObjective::bayesian(space, prior, family, qmc).evaluate(design)
}

/// `log det` of the maximal model's information with every slope at its
/// prior mean. For minimally supported designs this equals the prior
/// average of the log-determinant.
pub fn poisson_bayes_objective(
    design: &Design,
    maximal_model: &CandidateModel,
    prior: &PriorSpec,
    family: Family,
) -> Result<f64> {
    if family != Family::PoissonLog {
        return Err(Error::InvalidData("the prior-mean collapse holds for Poisson models only".into()));
    }
    let beta = prior.prior_mean(maximal_model);
    if let Some(b) = beta[1..].iter().find(|b| b.abs() < 1.0) {
        return Err(Error::InvalidData(format!("prior mean slope {b} has magnitude below 1")));
    }
    Ok(d_objective(design, maximal_model, &beta, family)? * maximal_model.p() as f64)
}

/// One model's parameter vectors, each contributing `logdet / (p * B)`.
#[derive(Debug, Clone)]
pub struct ModelTerms {
    pub model: CandidateModel,
    pub betas: Vec<Vec<f64>>,
}

/// Information-capacity style objective: `sum_m (1/p_m) mean_s log det M(beta_ms)`.
/// A single model with a single vector is the D-criterion.
#[derive(Debug, Clone)]
pub struct IcObjective {
    family: Family,
    terms: Vec<ModelTerms>,
}

impl IcObjective {
    pub fn new(family: Family, terms: Vec<ModelTerms>) -> Result<Self> {
        for t in &terms {
            if t.betas.is_empty() || t.betas.iter().any(|b| b.len() != t.model.p()) {
                return Err(Error::DimensionMismatch(format!(
                    "parameter vectors for model {} must have length {}",
                    t.model.index,
                    t.model.p()
                )));
            }
        }
        Ok(Self { family, terms })
    }

    pub fn d_optimal(model: &CandidateModel, beta: &[f64], family: Family) -> Result<Self> {
        Self::new(
            family,
            vec![ModelTerms {
                model: model.clone(),
                betas: vec![beta.to_vec()],
            }],
        )
    }

    pub fn local(space: &ModelSpace, betas: &[Vec<f64>], family: Family) -> Result<Self> {
        if betas.len() != space.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} models but {} parameter vectors",
                space.len(),
                betas.len()
            )));
        }
        Self::new(
            family,
            space
                .models()
                .iter()
                .zip(betas)
                .map(|(m, b)| ModelTerms {
                    model: m.clone(),
                    betas: vec![b.clone()],
                })
                .collect(),
        )
    }

    /// Each model gets the sampler's points, first `size` coordinates,
    /// mapped through its prior box.
    pub fn bayesian(space: &ModelSpace, prior: &PriorSpec, family: Family, qmc: &QmcSampler) -> Self {
        let unit = qmc.points(space.max_active());
        let terms = space
            .models()
            .iter()
            .map(|m| ModelTerms {
                model: m.clone(),
                betas: unit.iter().map(|u| prior.map_unit(m, u)).collect(),
            })
            .collect();
        Self { family, terms }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn terms(&self) -> &[ModelTerms] {
        &self.terms
    }

    fn combine(&self, logdets: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut t = 0;
        for term in &self.terms {
            let b = term.betas.len();
            let s: f64 = logdets[t..t + b].iter().sum();
            t += b;
            total += s / b as f64 / term.model.p() as f64;
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }
}

impl DesignObjective for IcObjective {
    fn evaluate(&self, design: &Design) -> f64 {
        let order = canonical_order(design);
        let max_p = self.terms.iter().map(|t| t.model.p()).max().unwrap_or(1);
        let mut m = vec![0.0; max_p * max_p];
        let mut f = vec![0.0; max_p];
        let mut scratch = Vec::with_capacity(max_p * max_p);
        let mut total = 0.0;
        for term in &self.terms {
            let p = term.model.p();
            let mut s = 0.0;
            for beta in &term.betas {
                accumulate_information(design, &order, &term.model, beta, self.family, &mut m[..p * p], &mut f[..p]);
                match logdet_buffer(&m[..p * p], p, &mut scratch) {
                    Some(ld) => s += ld,
                    None => return f64::NEG_INFINITY,
                }
            }
            total += s / term.betas.len() as f64 / p as f64;
        }
        total
    }

    fn tracker<'a>(&'a self, design: &Design) -> Box<dyn MoveTracker + 'a> {
        Box::new(IcTracker::new(self, design))
    }
}

/// Keeps every term's information matrix so single-point and single-weight
/// moves cost a rank-two update per term.
struct IcTracker<'a> {
    obj: &'a IcObjective,
    design: Design,
    // (term, beta) pairs flattened in evaluation order
    slots: Vec<(usize, usize)>,
    mats: Vec<Vec<f64>>,
    logdets: Vec<f64>,
    value: f64,
    pending_mats: Vec<Vec<f64>>,
    pending_logdets: Vec<f64>,
    pending_value: f64,
    pending: Option<Pending>,
    f_old: Vec<f64>,
    f_new: Vec<f64>,
    scratch: Vec<f64>,
}

enum Pending {
    Point(usize, Vec<f64>),
    Weight(usize, f64),
}

impl<'a> IcTracker<'a> {
    fn new(obj: &'a IcObjective, design: &Design) -> Self {
        let slots: Vec<(usize, usize)> = obj
            .terms
            .iter()
            .enumerate()
            .flat_map(|(t, term)| (0..term.betas.len()).map(move |s| (t, s)))
            .collect();
        let mats: Vec<Vec<f64>> = slots
            .iter()
            .map(|&(t, _)| vec![0.0; obj.terms[t].model.p().pow(2)])
            .collect();
        let max_p = obj.terms.iter().map(|t| t.model.p()).max().unwrap_or(1);
        let mut tr = Self {
            obj,
            design: design.clone(),
            pending_mats: mats.clone(),
            logdets: vec![0.0; slots.len()],
            pending_logdets: vec![0.0; slots.len()],
            slots,
            mats,
            value: f64::NEG_INFINITY,
            pending_value: f64::NEG_INFINITY,
            pending: None,
            f_old: vec![0.0; max_p],
            f_new: vec![0.0; max_p],
            scratch: Vec::with_capacity(max_p * max_p),
        };
        tr.refresh();
        tr
    }

    fn finish_pending(&mut self) -> f64 {
        for (i, &(t, _)) in self.slots.iter().enumerate() {
            let p = self.obj.terms[t].model.p();
            self.pending_logdets[i] =
                logdet_buffer(&self.pending_mats[i], p, &mut self.scratch).unwrap_or(f64::NEG_INFINITY);
        }
        self.pending_value = self.obj.combine(&self.pending_logdets);
        self.pending_value
    }
}

impl MoveTracker for IcTracker<'_> {
    fn value(&self) -> f64 {
        self.value
    }

    fn design(&self) -> &Design {
        &self.design
    }

    fn try_point(&mut self, k: usize, x: &[f64]) -> f64 {
        let family = self.obj.family;
        let trials = family.default_trials();
        let w = self.design.weights[k];
        let old = &self.design.points[k];
        for (i, &(t, s)) in self.slots.iter().enumerate() {
            let term = &self.obj.terms[t];
            let (model, beta) = (&term.model, &term.betas[s]);
            let p = model.p();
            let (f_old, f_new) = (&mut self.f_old[..p], &mut self.f_new[..p]);
            model.fill_row(old, f_old);
            model.fill_row(x, f_new);
            let v_old = variance(family, eta_unchecked(model, beta, old), trials);
            let v_new = variance(family, eta_unchecked(model, beta, x), trials);
            let m = &mut self.pending_mats[i];
            m.copy_from_slice(&self.mats[i]);
            add_outer_upper(m, f_new, w * v_new);
            add_outer_upper(m, f_old, -w * v_old);
            mirror_upper(m, p);
        }
        self.pending = Some(Pending::Point(k, x.to_vec()));
        self.finish_pending()
    }

    fn try_weight(&mut self, k: usize, w: f64) -> f64 {
        let family = self.obj.family;
        let trials = family.default_trials();
        let total: f64 = self.design.weights.iter().sum();
        let new_total = total - self.design.weights[k] + w;
        let dw = w - self.design.weights[k];
        let x = &self.design.points[k];
        for (i, &(t, s)) in self.slots.iter().enumerate() {
            let term = &self.obj.terms[t];
            let (model, beta) = (&term.model, &term.betas[s]);
            let p = model.p();
            let f = &mut self.f_new[..p];
            model.fill_row(x, f);
            let v = variance(family, eta_unchecked(model, beta, x), trials);
            let m = &mut self.pending_mats[i];
            m.copy_from_slice(&self.mats[i]);
            add_outer_upper(m, f, dw * v);
            mirror_upper(m, p);
            let scale = total / new_total;
            m.iter_mut().for_each(|e| *e *= scale);
        }
        self.pending = Some(Pending::Weight(k, w));
        self.finish_pending()
    }

    fn accept(&mut self) {
        let Some(pending) = self.pending.take() else {
            return;
        };
        match pending {
            Pending::Point(k, x) => self.design.points[k] = x,
            Pending::Weight(k, w) => {
                // matrices were rescaled to the old total
                let total: f64 = self.design.weights.iter().sum();
                self.design.weights[k] = w;
                let new_total: f64 = self.design.weights.iter().sum();
                let c = total / new_total;
                self.design.weights.iter_mut().for_each(|v| *v *= c);
            }
        }
        std::mem::swap(&mut self.mats, &mut self.pending_mats);
        std::mem::swap(&mut self.logdets, &mut self.pending_logdets);
        self.value = self.pending_value;
    }

    fn refresh(&mut self) {
        let order = canonical_order(&self.design);
        for (i, &(t, s)) in self.slots.iter().enumerate() {
            let term = &self.obj.terms[t];
            let p = term.model.p();
            accumulate_information(
                &self.design,
                &order,
                &term.model,
                &term.betas[s],
                self.obj.family,
                &mut self.mats[i],
                &mut self.f_new[..p],
            );
            self.logdets[i] = logdet_buffer(&self.mats[i], p, &mut self.scratch).unwrap_or(f64::NEG_INFINITY);
        }
        self.value = self.obj.combine(&self.logdets);
        self.pending = None;
    }
}
