//! Parameter sweeps and power-law fits of tracked metrics.

use std::fs;
use std::path::{Path, PathBuf};

use bosetracer_core::diagnostics::loglog_fit;
use bosetracer_core::ModelConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::{read_csv, write_csv, write_json, write_artifact, Table};
use crate::runner::{run_scenario, RunArtifact};
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Rho,
    LambdaVol,
    Dt,
    N,
}

/// Which of `N`, `|Lambda|`, `rho = N/|Lambda|` stays put while the axis
/// moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedRule {
    #[default]
    FixN,
    FixRho,
    FixLambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `fourier_l1(phi_0)`, time independent.
    FourierL1,
    Alpha,
    Beta,
    DmDistance,
    TrajDistance,
    /// `|X_t - <x>_t|` alone.
    TrajGap,
    /// `||phi_t - e^{i t Delta} phi_0||_2`.
    HartreeDiff,
    PhiRefGradLinf,
    EpsL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub name: Metric,
    /// Comparison time; defaults to the sweep's.
    #[serde(default)]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ModelConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub derived_rule: DerivedRule,
    pub metrics: Vec<MetricSpec>,
    /// Defaults to `t_end / 2`.
    #[serde(default)]
    pub comparison_time: Option<f64>,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(ln x, ln y)`.
    pub points: Vec<(f64, f64)>,
    /// Some sweep member was aborted or lacked the metric.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFit {
    pub metric: String,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MemberOutcome {
    pub value: f64,
    pub status: String,
    pub metrics: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub metrics: Vec<String>,
    pub members: Vec<MemberOutcome>,
    pub fits: Vec<MetricFit>,
}

impl SweepOutcome {
    pub fn fit(&self, metric: Metric) -> Option<&FitResult> {
        let name = metric_name(metric);
        self.fits.iter().find(|f| f.metric == name).and_then(|f| f.fit.as_ref())
    }

    /// Metric values in sweep order.
    pub fn series(&self, metric: Metric) -> Vec<Option<f64>> {
        let name = metric_name(metric);
        match self.metrics.iter().position(|m| *m == name) {
            Some(i) => self.members.iter().map(|m| m.metrics[i]).collect(),
            None => Vec::new(),
        }
    }
}

pub fn metric_name(m: Metric) -> String {
    serde_json::to_value(m).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn integral(v: f64, what: &str) -> Result<usize, SimError> {
    let r = v.round();
    if (v - r).abs() > 1e-9 * v.abs().max(1.0) || r < 1.0 {
        return Err(SimError::Config(format!("{what} = {v} is not a positive integer")));
    }
    Ok(r as usize)
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.values.len() < 3 {
            return Err(SimError::Config("a sweep needs at least 3 values".into()));
        }
        let up = self.values.windows(2).all(|w| w[1] > w[0]);
        let down = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(SimError::Config("sweep values must be strictly monotone".into()));
        }
        if self.metrics.is_empty() {
            return Err(SimError::Config("a sweep needs at least one metric".into()));
        }
        for v in &self.values {
            self.member(*v)?;
        }
        Ok(())
    }

    /// Configuration of the member at axis value `v`.
    pub fn member(&self, v: f64) -> Result<ModelConfig, SimError> {
        let mut cfg = self.base.clone();
        let rho = self.base.rho();
        match (self.axis, self.derived_rule) {
            (SweepAxis::Rho, DerivedRule::FixN) => cfg.lambda_vol = cfg.n_gas as f64 / v,
            (SweepAxis::Rho, DerivedRule::FixLambda) => cfg.n_gas = integral(v * cfg.lambda_vol, "N")?,
            (SweepAxis::LambdaVol, DerivedRule::FixN) => cfg.lambda_vol = v,
            (SweepAxis::LambdaVol, DerivedRule::FixRho) => {
                cfg.lambda_vol = v;
                cfg.n_gas = integral(rho * v, "N")?;
            }
            (SweepAxis::Dt, _) => cfg.dt = v,
            (SweepAxis::N, _) => cfg.grid.n = integral(v, "n")?,
            (axis, rule) => {
                return Err(SimError::Config(format!("derived rule {rule:?} cannot be combined with axis {axis:?}")))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn comparison_time(&self) -> f64 {
        self.comparison_time.unwrap_or(0.5 * self.base.t_end)
    }
}

/// Value of `metric` at the recorded time nearest `t`, if it is within half
/// an output stride.
pub fn extract_metric(art: &RunArtifact, metric: Metric, t: f64) -> Option<f64> {
    if metric == Metric::FourierL1 {
        return Some(art.summary.initial.fourier_l1);
    }
    let tol = 0.5 * art.config.dt * art.config.run.stride as f64 + 1e-12;
    let j = art
        .diagnostics
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.t - t).abs().total_cmp(&(b.1.t - t).abs()))
        .filter(|(_, r)| (r.t - t).abs() <= tol)?
        .0;
    let d = &art.diagnostics[j];
    let v = match metric {
        Metric::FourierL1 => unreachable!(),
        Metric::Alpha => d.alpha_total,
        Metric::Beta => d.beta_total,
        Metric::DmDistance => d.dm_distance,
        Metric::TrajDistance => d.traj_gap + d.vel_gap,
        Metric::TrajGap => d.traj_gap,
        Metric::HartreeDiff => art.intermediate[j].diff_l2,
        Metric::PhiRefGradLinf => art.macro_rows[j].phi_ref_grad_linf,
        Metric::EpsL2 => art.macro_rows[j].eps_l2,
    };
    v.is_finite().then_some(v)
}

/// Least-squares fit of `ln y` against `ln x` over the available points.
pub fn fit_points(xs: &[f64], ys: &[Option<f64>], partial: bool) -> Result<FitResult, String> {
    let (px, py): (Vec<f64>, Vec<f64>) =
        xs.iter().zip(ys).filter_map(|(x, y)| y.filter(|v| *v > 0.0).map(|v| (*x, v))).unzip();
    let partial = partial || px.len() < xs.len();
    if px.len() < 3 {
        return Err(format!("only {} usable points, need 3", px.len()));
    }
    let fit = loglog_fit(&px, &py).map_err(|e| e.to_string())?;
    Ok(FitResult {
        exponent: fit.exponent,
        intercept: fit.intercept,
        r_squared: fit.r2,
        points: px.iter().zip(&py).map(|(x, y)| (x.ln(), y.ln())).collect(),
        partial,
    })
}

fn fits_for(values: &[f64], metrics: &[String], members: &[MemberOutcome]) -> Vec<MetricFit> {
    let aborted = members.iter().any(|m| m.status == "aborted");
    metrics
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let ys: Vec<Option<f64>> = members.iter().map(|m| m.metrics[i]).collect();
            match fit_points(values, &ys, aborted) {
                Ok(f) => MetricFit { metric: name.clone(), fit: Some(f), error: None },
                Err(e) => MetricFit { metric: name.clone(), fit: None, error: Some(e) },
            }
        })
        .collect()
}

const RESULTS_FILE: &str = "sweep_results.csv";
const FITS_FILE: &str = "fits.json";

/// Runs every member in a worker pool of `parallel` threads (default: all
/// cores) and fits each metric. With an output directory, each member's run
/// goes to `member_<i>/` next to `sweep_results.csv` and `fits.json`.
pub fn run_sweep(spec: &SweepSpec, parallel: Option<usize>, out: Option<&Path>) -> Result<SweepOutcome, SimError> {
    spec.validate()?;
    let out = out.map(Path::to_path_buf).or_else(|| spec.outputs.clone());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = parallel {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| SimError::Config(e.to_string()))?;
    let t_cmp = spec.comparison_time();
    let members: Vec<Result<MemberOutcome, SimError>> = pool.install(|| {
        spec.values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| {
                let cfg = spec.member(v)?;
                let art = run_scenario(&cfg)?;
                if let Some(dir) = &out {
                    write_artifact(&dir.join(format!("member_{i:02}")), &art, false)?;
                }
                let metrics = spec.metrics.iter().map(|m| extract_metric(&art, m.name, m.t.unwrap_or(t_cmp))).collect();
                Ok(MemberOutcome { value: v, status: art.summary.status.clone(), metrics })
            })
            .collect()
    });
    let members = members.into_iter().collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = spec.metrics.iter().map(|m| metric_name(m.name)).collect();
    let fits = fits_for(&spec.values, &names, &members);
    let outcome = SweepOutcome { metrics: names, members, fits };
    if let Some(dir) = &out {
        write_sweep(dir, spec, &outcome)?;
    }
    Ok(outcome)
}

fn write_sweep(dir: &Path, spec: &SweepSpec, outcome: &SweepOutcome) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(|e| SimError::Io(format!("{}: {e}", dir.display())))?;
    let mut header = vec!["value".to_string(), "aborted".into()];
    header.extend(outcome.metrics.iter().cloned());
    let rows = outcome
        .members
        .iter()
        .map(|m| {
            let mut r = vec![m.value, if m.status == "aborted" { 1.0 } else { 0.0 }];
            r.extend(m.metrics.iter().map(|v| v.unwrap_or(f64::NAN)));
            r
        })
        .collect();
    write_csv(&dir.join(RESULTS_FILE), &Table { header, rows })?;
    write_json(&dir.join("sweep_spec.json"), spec)?;
    write_json(&dir.join(FITS_FILE), &outcome.fits)
}

/// Re-fits the metrics of an existing sweep directory and rewrites
/// `fits.json`.
pub fn refit(dir: &Path) -> Result<Vec<MetricFit>, SimError> {
    let table = read_csv(&dir.join(RESULTS_FILE))?;
    if table.header.len() < 2 || table.header[0] != "value" || table.header[1] != "aborted" {
        return Err(SimError::Io(format!("{}: not a sweep result table", dir.display())));
    }
    let values: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let members: Vec<MemberOutcome> = table
        .rows
        .iter()
        .map(|r| MemberOutcome {
            value: r[0],
            status: if r[1] != 0.0 { "aborted".into() } else { "ok".into() },
            metrics: r[2..].iter().map(|v| v.is_finite().then_some(*v)).collect(),
        })
        .collect();
    let fits = fits_for(&values, &table.header[2..], &members);
    write_json(&dir.join(FITS_FILE), &fits)?;
    Ok(fits)
}
