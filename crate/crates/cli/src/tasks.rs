//! One function per task. Each writes into a staging directory under the
//! output directory; files move into place only when the task succeeds.
//!
//! Seeds: data generation uses `derive_seed(seed, 0)` and the sampler uses
//! `derive_seed(seed, 1)`, so `gen-*` followed by `fit` on the written data
//! and `fit` on generated data see the same data set.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use qpost::io::{
    read_ising_dataset, read_logistic_dataset, read_matrix, read_vector, write_draw_store,
    write_edge_list, write_ising_dataset, write_logistic_dataset, write_matrix, write_vector,
};
use qpost::ising::{sample_ising_exact, sample_ising_gibbs, IsingData, IsingModel};
use qpost::logistic::{generate_design, generate_logistic_data, LogisticData};
use qpost::sampler::{
    derive_seed, exact_posterior_oracle, run_chain, run_ising_columns, run_ising_merged, Draw,
    EventFn, IsingFitConfig, PosteriorSummary,
};
use qpost::theory::{ising_bound_report, logistic_bound_report};
use qpost::{Error, Result, SparseParam};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    BoundsConfig, ExperimentConfig, Graph, Init, IsingMode, IsingModelConfig, IsingSampler,
    LogisticModelConfig, RhoContext, RhoRule, Task,
};
use crate::study::{alternating_theta_star, rate_study, StudySettings};
use crate::verify::run_suite;

/// Files written by a task and whether it passed (only `verify` can fail
/// without an error).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
}

struct Staging {
    dir: PathBuf,
    out: PathBuf,
    names: Vec<String>,
    committed: bool,
}

impl Staging {
    fn new(out: &Path, task: Task) -> Result<Self> {
        fs::create_dir_all(out)?;
        let dir = out.join(format!(".staging-{}-{}", task.name(), std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self {
            dir,
            out: out.to_path_buf(),
            names: Vec::new(),
            committed: false,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(p, body)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let body = serde_json::to_string_pretty(v)?;
        self.text(name, &(body + "\n"))
    }

    fn draws(&mut self, name: &str, draws: &[Draw]) -> Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(fs::File::create(p)?);
        write_draw_store(&mut w, draws)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut files = Vec::with_capacity(self.names.len());
        for name in &self.names {
            let dest = self.out.join(name);
            fs::rename(self.dir.join(name), &dest)?;
            files.push(dest);
        }
        self.committed = true;
        fs::remove_dir_all(&self.dir)?;
        Ok(files)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

fn header(task: Task, cfg: &ExperimentConfig) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("task".into(), json!(task.name()));
    m.insert("config".into(), json!(cfg));
    m
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

/// Run `task` with the resolved config. Worker pools are the caller's business.
pub fn run_task(task: Task, cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut st = Staging::new(&cfg.output.dir, task)?;
    let passed = match task {
        Task::GenLogistic => gen_logistic(cfg, &mut st)?,
        Task::GenIsing => gen_ising(cfg, &mut st)?,
        Task::Fit => match cfg.model.as_ref() {
            Some(crate::config::ModelConfig::Logistic(_)) => fit_logistic(cfg, &mut st)?,
            _ => fit_ising(cfg, &mut st)?,
        },
        Task::Oracle => oracle(cfg, &mut st)?,
        Task::Bounds => bounds(cfg, &mut st)?,
        Task::Verify => verify(cfg, &mut st)?,
        Task::RateStudy => study(cfg, &mut st)?,
    };
    Ok(Outcome {
        files: st.commit()?,
        passed,
    })
}

fn data_seed(cfg: &ExperimentConfig) -> u64 {
    derive_seed(cfg.seed, 0)
}

fn chain_seed(cfg: &ExperimentConfig) -> u64 {
    derive_seed(cfg.seed, 1)
}

/// Synthetic data from the model block, or the dataset file it names.
pub fn logistic_data(m: &LogisticModelConfig, seed: u64) -> Result<LogisticData> {
    if let Some(path) = &m.data {
        let data = read_logistic_dataset(path)?;
        return match &m.theta_star {
            Some(t) => data.with_theta_star(read_vector(t)?),
            None => Ok(data),
        };
    }
    let (n, d) = (m.n.unwrap(), m.d.unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let star = alternating_theta_star(d, m.s_star, m.signal);
    let x = generate_design(m.design, n, d, &mut rng);
    generate_logistic_data(&star, x, &mut rng)
}

/// `θ⋆` for synthetic Ising data.
pub fn ising_theta_star(m: &IsingModelConfig) -> Result<IsingModel> {
    let p = m.p.unwrap();
    let mut t = DMatrix::from_diagonal_element(p, p, m.field);
    let mut edge = |i: usize, j: usize, w: f64| {
        t[(i, j)] = w;
        t[(j, i)] = w;
    };
    match &m.edges {
        Some(list) => list.iter().for_each(|&(i, j, w)| edge(i, j, w)),
        None => {
            let w = m.edge_weight;
            match m.graph {
                Graph::Empty => {}
                Graph::Chain => (1..p).for_each(|j| edge(j - 1, j, w)),
                Graph::Cycle => {
                    (1..p).for_each(|j| edge(j - 1, j, w));
                    if p > 2 {
                        edge(p - 1, 0, w);
                    }
                }
                Graph::Star => (1..p).for_each(|j| edge(0, j, w)),
                Graph::Complete => {
                    for i in 0..p {
                        for j in i + 1..p {
                            edge(i, j, w);
                        }
                    }
                }
            }
        }
    }
    IsingModel::new(t)
}

pub fn ising_data(m: &IsingModelConfig, seed: u64) -> Result<IsingData> {
    if let Some(path) = &m.data {
        let star = m
            .theta_star
            .as_ref()
            .map(|t| IsingModel::new(read_matrix(t)?))
            .transpose()?;
        return read_ising_dataset(path, star);
    }
    let star = ising_theta_star(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.n.unwrap();
    match m.sampler {
        IsingSampler::Exact => sample_ising_exact(&star, n, &mut rng),
        IsingSampler::Gibbs => sample_ising_gibbs(&star, n, m.gibbs.unwrap_or_default(), &mut rng),
    }
}

fn gen_logistic(cfg: &ExperimentConfig, st: &mut Staging) -> Result<bool> {
    let m = cfg.logistic_model()?;
    let data = logistic_data(m, data_seed(cfg))?;
    let star = data.theta_star().unwrap();
    write_logistic_dataset(&st.path("data.txt"), &data)?;
    write_vector(&st.path("theta_star.txt"), star)?;
    let mut r = header(Task::GenLogistic, cfg);
    r.insert("data_seed".into(), json!(data_seed(cfg)));
    r.insert("n".into(), json!(data.n()));
    r.insert("d".into(), json!(data.d()));
    r.insert("x_inf".into(), json!(data.x_inf()));
    r.insert("positives".into(), json!(data.y().iter().sum::<f64>()));
    r.insert("theta_star".into(), json!(star.to_dense()));
    st.json("report.json", &r)?;
    Ok(true)
}

fn gen_ising(cfg: &ExperimentConfig, st: &mut Staging) -> Result<bool> {
    let m = cfg.ising_model()?;
    let data = ising_data(m, data_seed(cfg))?;
    let star = data.theta_star().unwrap();
    write_ising_dataset(&st.path("data.txt"), &data)?;
    write_matrix(&st.path("theta_star.txt"), star.theta())?;
    let z = data.z();
    let p = data.p();
    let n = data.n() as f64;
    let marginals: Vec<f64> = (0..p).map(|j| z.column(j).sum() / n).collect();
    let mut r = header(Task::GenIsing, cfg);
    r.insert("data_seed".into(), json!(data_seed(cfg)));
    r.insert("n".into(), json!(data.n()));
    r.insert("p".into(), json!(p));
    r.insert("marginals".into(), json!(marginals));
    r.insert("theta_star".into(), to_value(star.theta()));
    st.json("report.json", &r)?;
    Ok(true)
}

fn summary_csv(s: &PosteriorSummary, star: Option<&SparseParam>) -> String {
    let mut out = String::from("j,inclusion,mean,mean_abs,theta_star\n");
    for j in 0..s.d {
        let t = star.map(|t| t.get(j).to_string()).unwrap_or_default();
        writeln!(
            out,
            "{j},{},{},{},{t}",
            s.inclusion_probs[j], s.mean[j], s.mean_abs[j]
        )
        .unwrap();
    }
    out
}

/// `‖θ − θ⋆‖₂ > r` for each radius and `‖θ‖₀ ≥ s⋆ + k` for each offset.
fn record_events(
    s: &mut PosteriorSummary,
    star: &SparseParam,
    radii: &[f64],
    k_values: &[usize],
) -> Result<()> {
    let s_star = star.pattern().len();
    for &r in radii {
        s.record_event(&format!("l2>{r}"), |t| {
            t.sub(star).map(|v| v.norms().l2 > r).unwrap_or(false)
        })?;
    }
    for &k in k_values {
        s.record_event(&format!("l0>={}", s_star + k), |t| {
            t.pattern().len() >= s_star + k
        })?;
    }
    Ok(())
}

fn fit_logistic(cfg: &ExperimentConfig, st: &mut Staging) -> Result<bool> {
    let m = cfg.logistic_model()?;
    let sampler = cfg.sampler.as_ref().unwrap();
    let data = logistic_data(m, data_seed(cfg))?;
    let prior_cfg = cfg.prior();
    let rho = prior_cfg.resolve_rho(
        RhoRule::AutoLogistic,
        RhoContext {
            n: data.n(),
            dim: data.d(),
            x_inf: data.x_inf(),
            scale: 1.0,
        },
    )?;
    let prior = prior_cfg.build(data.d(), rho)?;
    let init = match (sampler.init, data.theta_star()) {
        (Init::Truth, Some(t)) => t.clone(),
        (Init::Truth, None) => {
            return Err(Error::config(
                "sampler.init",
                "\"truth\" needs a known theta_star",
            ))
        }
        (Init::Zero, _) => SparseParam::zeros(data.d()),
    };
    let chain = sampler.chain(chain_seed(cfg));
    let mut summary = run_chain(&data, &prior, chain, &init)?;
    if let Some(star) = data.theta_star() {
        record_events(&mut summary, star, &sampler.radii, &sampler.k_values)?;
    }
    let mut r = header(Task::Fit, cfg);
    r.insert("model".into(), json!("logistic"));
    r.insert("data_seed".into(), json!(data_seed(cfg)));
    r.insert("chain_seed".into(), json!(chain.seed));
    r.insert("rho".into(), json!(rho));
    r.insert("chain".into(), to_value(&chain));
    r.insert("posterior".into(), to_value(&summary));
    st.json("report.json", &r)?;
    st.text("summary.csv", &summary_csv(&summary, data.theta_star()))?;
    if sampler.draws {
        st.draws("draws.tsv", &summary.draws)?;
    }
    Ok(true)
}

fn fit_ising(cfg: &ExperimentConfig, st: &mut Staging) -> Result<bool> {
    let m = cfg.ising_model()?;
    let sampler = cfg.sampler.as_ref().unwrap();
    if sampler.init == Init::Truth {
        return Err(Error::config(
            "sampler.init",
            "Ising chains start from zero",
        ));
    }
    let data = ising_data(m, data_seed(cfg))?;
    let p = data.p();
    let prior_cfg = cfg.prior();
    let rho = prior_cfg.resolve_rho(
        RhoRule::AutoIsing,
        RhoContext {
            n: data.n(),
            dim: p,
            x_inf: 1.0,
            scale: 1.0,
        },
    )?;
    let prior = prior_cfg.build(p, rho)?;
    let fc = IsingFitConfig {
        chain: sampler.chain(chain_seed(cfg)),
        radii: sampler.radii.clone(),
        symmetrization: sampler.symmetrization,
    };
    let fit = match sampler.mode {
        IsingMode::Columns => run_ising_columns(&data, &prior, &fc)?,
        IsingMode::Merged => run_ising_merged(&data, &prior, &fc)?,
    };
    write_edge_list(&st.path("edges.csv"), &fit.edges)?;
    let mut r = header(Task::Fit, cfg);
    r.insert("model".into(), json!("ising"));
    r.insert("data_seed".into(), json!(data_seed(cfg)));
    r.insert("chain_seed".into(), json!(fc.chain.seed));
    r.insert("rho".into(), json!(rho));
    r.insert("chain".into(), to_value(&fc.chain));
    r.insert("fit".into(), to_value(&fit));
    st.json("report.json", &r)?;
    if sampler.draws {
        for (j, c) in fit.columns.iter().enumerate() {
            st.draws(&format!("draws_col{j}.tsv"), &c.draws)?;
        }
    }
    Ok(true)
}

fn oracle(cfg: &ExperimentConfig, st: &mut Staging) -> Result<bool> {
    let m = cfg.logistic_model()?;
    let data = logistic_data(m, data_seed(cfg))?;
    let prior_cfg = cfg.prior();
    let rho = prior_cfg.resolve_rho(
        RhoRule::AutoLogistic,
        RhoContext {
            n: data.n(),
            dim: data.d(),
            x_inf: data.x_inf(),
            scale: 1.0,
        },
    )?;
    let prior = prior_cfg.build(data.d(), rho)?;
    let oc = cfg.oracle.clone().unwrap_or_default();
    let grid = oc.grid(rho);
    let star = data.theta_star().map(SparseParam::to_dense);
    let names: Vec<String> = oc.radii.iter().map(|r| format!("l2>{r}")).collect();
    let preds: Vec<EventFn> = match &star {
        Some(s) => oc
            .radii
            .iter()
            .map(|&r| {
                let s = s.clone();
                Box::new(move |t: &[f64]| {
                    t.iter()
                        .zip(&s)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                        > r
                }) as EventFn
            })
            .collect(),
        None if oc.radii.is_empty() => Vec::new(),
        None => {
            return Err(Error::config(
                "oracle.radii",
                "distance events need a known theta_star",
            ))
        }
    };
    let events: Vec<qpost::sampler::OracleEvent> = names
        .iter()
        .zip(&preds)
        .map(|(n, f)| (n.as_str(), f.as_ref()))
        .collect();
    let summary = exact_posterior_oracle(&data, &prior, grid, &events)?;
    let mut r = header(Task::Oracle, cfg);
    r.insert("data_seed".into(), json!(data_seed(cfg)));
    r.insert("rho".into(), json!(rho));
    r.insert("grid".into(), to_value(&grid));
    r.insert("posterior".into(), to_value(&summary));
    st.json("report.json", &r)?;
    st.text("summary.csv", &summary_csv(&summary, data.theta_star()))?;
    Ok(true)
}

/// `key,value` lines for every numeric or boolean leaf, keys joined with `.`.
pub fn flatten_numbers(v: &Value) -> String {
    fn walk(v: &Value, key: &str, out: &mut String) {
        let sub = |k: &str| {
            if key.is_empty() {
                k.to_string()
            } else {
                format!("{key}.{k}")
            }
        };
        match v {
            Value::Number(_) | Value::Bool(_) => writeln!(out, "{key},{v}").unwrap(),
            Value::Object(m) => m.iter().for_each(|(k, x)| walk(x, &sub(k), out)),
            Value::Array(a) => a
                .iter()
                .enumerate()
                .for_each(|(i, x)| walk(x, &sub(&i.to_string()), out)),
            _ => {}
        }
    }
    let mut out = String::from("key,value\n");
    walk(v, "", &mut out);
    out
}

fn bounds(cfg: &ExperimentConfig, st: &mut Staging) -> Result<bool> {
    let report = match cfg.bounds.clone().unwrap() {
        BoundsConfig::Logistic(i) => to_value(&logistic_bound_report(i)?),
        BoundsConfig::Ising(i) => to_value(&ising_bound_report(i)?),
    };
    let mut r = header(Task::Bounds, cfg);
    r.insert("report".into(), report.clone());
    st.json("report.json", &r)?;
    st.text("summary.csv", &flatten_numbers(&report))?;
    Ok(true)
}

fn verify(cfg: &ExperimentConfig, st: &mut Staging) -> Result<bool> {
    let v = run_suite(cfg.seed)?;
    let mut csv = String::from("check,passed,cases,worst_slack,tolerance\n");
    for c in &v.checks {
        writeln!(
            csv,
            "{},{},{},{},{}",
            c.name, c.passed, c.cases, c.worst_slack, c.tolerance
        )
        .unwrap();
    }
    let mut r = header(Task::Verify, cfg);
    r.insert("suite".into(), to_value(&v));
    st.json("report.json", &r)?;
    st.text("summary.csv", &csv)?;
    Ok(v.passed)
}

fn study(cfg: &ExperimentConfig, st: &mut Staging) -> Result<bool> {
    let rs = cfg.rate_study.as_ref().unwrap();
    let sampler = cfg.sampler.as_ref().unwrap();
    let settings = StudySettings {
        signal: rs.signal,
        design: rs.design,
        rho_scale: rs.rho_scale,
        prior: cfg.prior(),
        init: sampler.init,
        k_values: sampler.k_values.clone(),
    };
    let result = rate_study(
        &rs.grid(),
        &settings,
        &sampler.chain(0),
        cfg.replications,
        cfg.seed,
    )?;
    let mut csv = String::from("n,d,s_star,median_error,mean_l0,e0_exceedance,e0_se");
    for k in &result.k_values {
        write!(csv, ",l0_exceedance_k{k}").unwrap();
    }
    csv.push('\n');
    for c in &result.cells {
        write!(
            csv,
            "{},{},{},{},{},{},{}",
            c.cell.n,
            c.cell.d,
            c.cell.s_star,
            c.median_error,
            c.mean_l0,
            c.e0_exceedance.fraction,
            c.e0_exceedance.se
        )
        .unwrap();
        for v in &c.l0_exceedance {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    let mut slopes = String::from("d,s_star,slope,intercept,se,ci_low,ci_high\n");
    for s in &result.slopes {
        writeln!(
            slopes,
            "{},{},{},{},{},{},{}",
            s.d, s.s_star, s.slope, s.intercept, s.se, s.ci.0, s.ci.1
        )
        .unwrap();
    }
    let mut r = header(Task::RateStudy, cfg);
    r.insert("result".into(), to_value(&result));
    st.json("report.json", &r)?;
    st.text("summary.csv", &csv)?;
    st.text("slopes.csv", &slopes)?;
    Ok(true)
}
