//! Evaluation of single points and parameter sweeps.

use rayon::prelude::*;
use tandem_core::oracle::{build_truncated_generator, finite_generator, solve_stationary, tail_ratio_estimate};
use tandem_core::spectral::{self, Method};
use tandem_core::{compute_metrics, run_sim, stability_report, GeneratorMode, Params, SimConfig};

use crate::config::{MethodKind, RunConfig, SeriesSpec, SweepParam};

/// One output line: a method evaluated at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub sweep_param: String,
    pub value: f64,
    /// Method name, with `@key=value` appended for series members.
    pub method: String,
    pub gamma: Option<f64>,
    pub mql1: Option<f64>,
    pub mql2: Option<f64>,
    pub blocking_prob: Option<f64>,
    pub throughput: Option<f64>,
    pub loss_rate: Option<f64>,
    pub stable: bool,
    pub error: Option<String>,
}

/// Model parameters at one point, before validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub sigma: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub p_fb: f64,
    pub n_threshold: usize,
    pub k_capacity: Option<usize>,
}

impl Point {
    fn set(&mut self, param: SweepParam, v: Option<f64>) {
        match param {
            SweepParam::Sigma => self.sigma = v.unwrap_or(f64::INFINITY),
            SweepParam::PFb => self.p_fb = v.unwrap_or(f64::INFINITY),
            SweepParam::NThreshold => self.n_threshold = v.map_or(usize::MAX, |x| x as usize),
            SweepParam::KCapacity => self.k_capacity = v.map(|x| x as usize),
        }
    }

    pub fn params(&self) -> Result<Params, String> {
        Params::new(self.sigma, self.mu1, self.mu2, self.p_fb, self.n_threshold)
            .and_then(|p| p.with_capacity(self.k_capacity))
            .map_err(|e| e.to_string())
    }
}

/// Solver outputs at one point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub gamma: Option<f64>,
    pub mql1: Option<f64>,
    pub mql2: Option<f64>,
    pub blocking_prob: Option<f64>,
    pub throughput: Option<f64>,
    pub loss_rate: Option<f64>,
    pub stable: bool,
    pub error: Option<String>,
}

impl Outcome {
    fn failed(stable: bool, msg: impl Into<String>) -> Self {
        Outcome { stable, error: Some(msg.into()), ..Default::default() }
    }
}

/// Runs one method at one point. Unstable infinite-buffer points and solver
/// failures are reported in the outcome instead of as errors.
pub fn evaluate(point: &Point, method: MethodKind, cfg: &RunConfig, sim: &SimConfig) -> Outcome {
    let p = match point.params() {
        Ok(p) => p,
        Err(e) => return Outcome::failed(false, e),
    };
    let stable = match p.k_capacity {
        Some(_) => true,
        None => match stability_report(&p) {
            Ok(r) => r.is_stable,
            Err(e) => return Outcome::failed(false, e.to_string()),
        },
    };
    if !stable {
        return Outcome { stable, ..Default::default() };
    }
    let result = match method {
        MethodKind::Exact | MethodKind::Geometric | MethodKind::Hybrid => spectral_outcome(&p, method, cfg),
        MethodKind::Oracle => oracle_outcome(&p, cfg),
        MethodKind::Sim => sim_outcome(&p, sim),
    };
    result.unwrap_or_else(|e| Outcome::failed(stable, e))
}

fn spectral_outcome(p: &Params, method: MethodKind, cfg: &RunConfig) -> Result<Outcome, String> {
    if p.k_capacity.is_some() {
        return Err("spectral methods need an infinite first buffer; use oracle or sim".into());
    }
    let m = match method {
        MethodKind::Exact => Method::Exact,
        MethodKind::Geometric => Method::Geometric,
        _ => Method::Hybrid(cfg.m_boundary),
    };
    let sol = spectral::solve(p, m).map_err(|e| e.to_string())?;
    let metrics = compute_metrics(p, &sol.distribution).map_err(|e| e.to_string())?;
    Ok(Outcome {
        gamma: Some(sol.gamma),
        mql1: Some(metrics.mql1),
        mql2: Some(metrics.mql2),
        blocking_prob: Some(metrics.blocking_prob),
        throughput: Some(metrics.throughput),
        loss_rate: Some(metrics.loss_rate),
        stable: true,
        error: None,
    })
}

fn oracle_outcome(p: &Params, cfg: &RunConfig) -> Result<Outcome, String> {
    let (g, tail) = match p.k_capacity {
        Some(_) => (finite_generator(p).map_err(|e| e.to_string())?, false),
        None => (build_truncated_generator(p, cfg.j_max, GeneratorMode::TruncatedInfinite), true),
    };
    let dist = solve_stationary(&g).map_err(|e| e.to_string())?;
    let metrics = compute_metrics(p, &dist).map_err(|e| e.to_string())?;
    // the decay estimate avoids the first levels and the reflecting top
    let gamma = if tail { tail_ratio_estimate(&dist, 3 * cfg.j_max / 8, 7 * cfg.j_max / 8).ok() } else { None };
    Ok(Outcome {
        gamma,
        mql1: Some(metrics.mql1),
        mql2: Some(metrics.mql2),
        blocking_prob: Some(metrics.blocking_prob),
        throughput: Some(metrics.throughput),
        loss_rate: Some(metrics.loss_rate),
        stable: true,
        error: None,
    })
}

fn sim_outcome(p: &Params, sim: &SimConfig) -> Result<Outcome, String> {
    let est = run_sim(p, sim).map_err(|e| e.to_string())?;
    Ok(Outcome {
        gamma: None,
        mql1: Some(est.mql1.mean),
        mql2: Some(est.mql2.mean),
        blocking_prob: Some(est.blocking_prob.mean),
        throughput: Some(est.throughput.mean),
        loss_rate: Some(est.loss_rate.map_or(0.0, |e| e.mean)),
        stable: true,
        error: None,
    })
}

struct Task {
    value: f64,
    label: String,
    point: Point,
    method: MethodKind,
    seed: u64,
}

/// Method-cell suffix and the parameter override of one series value.
type SeriesMember = (Option<String>, Option<(SweepParam, Option<f64>)>);

fn series_label(series: &SeriesSpec, v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{}={x}", series.param.name()),
        None => format!("{}=inf", series.param.name()),
    }
}

fn base_point(cfg: &RunConfig) -> Point {
    let m = &cfg.model;
    Point {
        sigma: m.sigma.unwrap_or(f64::NAN),
        mu1: m.mu1,
        mu2: m.mu2,
        p_fb: m.p_fb,
        n_threshold: m.n_threshold,
        k_capacity: m.k_capacity,
    }
}

fn tasks(cfg: &RunConfig) -> (String, Vec<Task>) {
    let base = base_point(cfg);
    let (param_name, grid): (String, Vec<(f64, Point)>) = match &cfg.sweep {
        Some(s) => (
            s.param.name().to_string(),
            s.grid()
                .into_iter()
                .map(|x| {
                    let mut pt = base;
                    pt.set(s.param, Some(x));
                    (x, pt)
                })
                .collect(),
        ),
        None => ("sigma".to_string(), vec![(base.sigma, base)]),
    };
    let series: Vec<SeriesMember> = match &cfg.series {
        Some(s) => s.values.iter().map(|&v| (Some(series_label(s, v)), Some((s.param, v)))).collect(),
        None => vec![(None, None)],
    };
    let mut out = Vec::new();
    for (value, pt) in grid {
        for (label, set) in &series {
            let mut pt = pt;
            if let Some((param, v)) = set {
                pt.set(*param, *v);
            }
            for &method in &cfg.methods {
                let label = match label {
                    Some(l) => format!("{}@{l}", method.name()),
                    None => method.name().to_string(),
                };
                let seed = cfg.sim.seed.wrapping_add(out.len() as u64);
                out.push(Task { value, label, point: pt, method, seed });
            }
        }
    }
    (param_name, out)
}

/// Evaluates every grid point, series member and method in parallel. Rows
/// come back in grid order, then series order, then method order. Each
/// simulation task gets the configured seed plus its row index.
pub fn run_sweep(cfg: &RunConfig) -> Vec<Row> {
    let (param, tasks) = tasks(cfg);
    tasks
        .into_par_iter()
        .map(|t| {
            let sim = SimConfig { seed: t.seed, ..cfg.sim };
            let o = evaluate(&t.point, t.method, cfg, &sim);
            Row {
                sweep_param: param.clone(),
                value: t.value,
                method: t.label,
                gamma: o.gamma,
                mql1: o.mql1,
                mql2: o.mql2,
                blocking_prob: o.blocking_prob,
                throughput: o.throughput,
                loss_rate: o.loss_rate,
                stable: o.stable,
                error: o.error,
            }
        })
        .collect()
}
