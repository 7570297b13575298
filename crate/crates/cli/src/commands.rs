use std::fs;
use std::path::Path;

use glmscreen::construct::{fractional_factorial, min_support_poisson, replicate_to_n, FactorialSpec};
use glmscreen::design::{IcObjective, QmcSampler};
use glmscreen::optimize::{anneal_random, trace_csv, AnnealOutcome};
use glmscreen::selection::select;
use glmscreen::simulate::{efficiency_study, Reference, Study};
use glmscreen::{Dataset, Design, DesignKind, DesignMeta, Error};

use crate::config::{ConstructKind, ExperimentConfig, FamilyName, Source};

/// Failure of a subcommand with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn simulation(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoFeasibleStart { .. } => 2,
            Error::AllModelsFailed => 3,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn prepare(config: &ExperimentConfig) -> Outcome {
    fs::create_dir_all(&config.out).map_err(|e| Failure::config(format!("{}: {e}", config.out.display())))?;
    write(&config.out, "config.toml", &config.to_toml())
}

struct Obtained {
    design: Design,
    meta: DesignMeta,
    search: Option<AnnealOutcome>,
}

fn obtain_design(config: &ExperimentConfig) -> Result<Obtained, Failure> {
    let family = config.family();
    let space = config.space()?;
    let prior = config.prior()?;
    let mut meta = DesignMeta {
        seed: Some(config.seed),
        ..Default::default()
    };
    let mut search = None;
    let design = match config.source {
        Source::Search => {
            let qmc = QmcSampler::new(config.q, config.qmc_samples, config.seed as u32)?;
            let objective = IcObjective::bayesian(&space, &prior, family, &qmc);
            let out = anneal_random(&objective, config.q, config.support_points, &config.anneal)?;
            meta.source = Some(format!("search n={} B={}", config.support_points, config.qmc_samples));
            meta.objective = Some(out.objective);
            let d = out.design.clone();
            search = Some(out);
            d
        }
        Source::Construct => match config.construct {
            ConstructKind::MinSupport => {
                meta.source = Some("construct min-support".into());
                min_support_poisson(&prior, config.q)?
            }
            ConstructKind::Factorial => {
                let spec = match config.fraction {
                    Some(k) if k > 0 => FactorialSpec::from_catalogue(config.q, k)?,
                    Some(_) => FactorialSpec::new(config.q, 0, Vec::new())?,
                    None => (1..config.q)
                        .find_map(|k| FactorialSpec::from_catalogue(config.q, k).ok())
                        .map_or_else(|| FactorialSpec::new(config.q, 0, Vec::new()), Ok)?,
                };
                meta.source = Some(format!(
                    "construct factorial 2^({}-{}) {}",
                    spec.q,
                    spec.k,
                    spec.generators.join(" ")
                ));
                fractional_factorial(&spec)?
            }
        },
        Source::File => {
            let path = config.design_file.as_ref().expect("validated");
            let (d, file_meta) = Design::read_json(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            meta = file_meta.unwrap_or(meta);
            d
        }
    };
    if design.q() != config.q {
        return Err(Failure::config(format!(
            "config.q: design has {} variables, config says {}",
            design.q(),
            config.q
        )));
    }
    if search.is_none() && meta.objective.is_none() && !design.is_empty() {
        let qmc = QmcSampler::new(config.q, config.qmc_samples, config.seed as u32)?;
        let v = IcObjective::bayesian(&space, &prior, family, &qmc);
        let value = glmscreen::optimize::DesignObjective::evaluate(&v, &design.normalized());
        meta.objective = value.is_finite().then_some(value);
    }
    Ok(Obtained { design, meta, search })
}

/// Exact version of the design at the configured run size.
fn exact(design: &Design, config: &ExperimentConfig) -> Result<Design, Failure> {
    match (design.kind(), config.runs) {
        (DesignKind::Exact, None) => Ok(design.clone()),
        (DesignKind::Exact, Some(n)) if design.runs() == Some(n) => Ok(design.clone()),
        (DesignKind::Exact, Some(n)) => Err(Failure::config(format!(
            "config.runs: design file has {} runs, config asks for {n}",
            design.runs().unwrap_or(0)
        ))),
        (DesignKind::Approximate, None) => Err(Failure::config("config.runs: an approximate design needs N to be rounded")),
        (DesignKind::Approximate, Some(n)) => {
            let equal = design.weights().iter().all(|w| (w - design.weights()[0]).abs() < 1e-12);
            if equal && config.source == Source::Construct {
                Ok(replicate_to_n(design, n)?)
            } else {
                Ok(design.round_to_exact(n)?)
            }
        }
    }
}

pub fn design(config: &ExperimentConfig, trace: bool) -> Outcome {
    prepare(config)?;
    let got = obtain_design(config)?;
    let final_design = match config.runs {
        Some(_) => {
            if got.design.kind() == DesignKind::Approximate {
                write(&config.out, "approximate.json", &got.design.to_json(Some(&got.meta))?)?;
            }
            exact(&got.design, config)?
        }
        None => got.design.clone(),
    };
    write(&config.out, "design.json", &final_design.to_json(Some(&got.meta))?)?;
    write(&config.out, "design.csv", &final_design.to_csv())?;
    if let Some(search) = &got.search {
        if trace {
            write(&config.out, "trace.csv", &trace_csv(&search.trace))?;
        }
    }
    println!(
        "{} design: {} support points{}, objective {}",
        match final_design.kind() {
            DesignKind::Approximate => "approximate",
            DesignKind::Exact => "exact",
        },
        final_design.len(),
        final_design.runs().map(|n| format!(", N={n}")).unwrap_or_default(),
        got.meta.objective.map_or("undefined".into(), |v| format!("{v:.6}"))
    );
    Ok(())
}

pub fn evaluate(config: &ExperimentConfig) -> Outcome {
    prepare(config)?;
    let got = obtain_design(config)?;
    let family = config.family();
    let reference = match config.family {
        FamilyName::Poisson => Reference::Analytic,
        FamilyName::Logistic => Reference::Anneal {
            support: config.reference_support.unwrap_or(1),
            config: config.anneal.clone(),
        },
    };
    let report = efficiency_study(
        &got.design,
        &config.space()?,
        &config.prior()?,
        family,
        config.draws,
        &reference,
        config.seed,
    )?;
    write(&config.out, "efficiency.csv", &report.to_csv())?;
    write(&config.out, "efficiency_summary.csv", &report.summary_csv())?;
    if let Some(s) = report.pooled() {
        println!(
            "efficiency over {} samples: min {:.4}, mean {:.4}, median {:.4}, max {:.4}",
            s.count, s.min, s.mean, s.median, s.max
        );
    }
    Ok(())
}

fn study_inputs(config: &ExperimentConfig) -> Result<Design, Failure> {
    let exact_source = config.source == Source::File
        || (config.source == Source::Construct && config.construct == ConstructKind::Factorial);
    if config.runs.is_none() && !exact_source {
        return Err(Failure::config("config.runs: an approximate design needs N to be rounded"));
    }
    let got = obtain_design(config)?;
    exact(&got.design, config)
}

pub fn simulate(config: &ExperimentConfig) -> Outcome {
    prepare(config)?;
    let design = study_inputs(config)?;
    let (space, prior) = (config.space()?, config.prior()?);
    let study = Study {
        design: &design,
        space: &space,
        prior: &prior,
        family: config.family(),
        criterion: config.criterion(),
        seed: config.seed,
    };
    let report = study.screening(&config.true_models, config.reps)?;
    write(&config.out, "report.csv", &report.to_csv())?;
    println!("{}", report.summary_line());
    if let Some(r) = report.rows.iter().find(|r| r.replications == 0) {
        return Err(Failure::simulation(format!(
            "every replication failed for true model {}",
            r.true_model
        )));
    }
    Ok(())
}

pub fn penalty_study(config: &ExperimentConfig) -> Outcome {
    prepare(config)?;
    let design = study_inputs(config)?;
    let (space, prior) = (config.space()?, config.prior()?);
    let wanted = if config.true_models.is_empty() {
        vec![1]
    } else {
        config.true_models.clone()
    };
    let report = glmscreen::simulate::penalty_study(&design, &space, &prior, config.family(), &wanted, config.reps, config.seed)?;
    write(&config.out, "penalties.csv", &report.to_csv())?;
    write(&config.out, "penalty_summary.csv", &report.summary_csv())?;
    if let Some(&(m, _)) = report.failed.iter().find(|(_, f)| *f == config.reps) {
        return Err(Failure::simulation(format!("every replication failed for true model {m}")));
    }
    Ok(())
}

pub fn fit(config: &ExperimentConfig, data_path: &Path) -> Outcome {
    prepare(config)?;
    let family = config.family();
    let data = Dataset::read_csv_path(family, data_path).map_err(|e| Failure::config(format!("{}: {e}", data_path.display())))?;
    if data.q() != config.q {
        return Err(Failure::config(format!(
            "config.q: data has {} variables, config says {}",
            data.q(),
            config.q
        )));
    }
    let result = select(&config.space()?, &data, family, config.criterion())?;
    write(&config.out, "criteria.csv", &result.to_csv())?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| Failure::config(e.to_string()))? + "\n";
    write(&config.out, "selection.json", &json)?;
    println!(
        "chosen model {} ({}), active variables {:?}",
        result.chosen,
        result.criterion.name(),
        result.active
    );
    Ok(())
}
