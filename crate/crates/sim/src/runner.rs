//! One scenario: microscopic, effective and intermediate dynamics in lock
//! step, with diagnostics at every output stride.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use bosetracer_core::diagnostics::{
    appendix_margins, compute_alpha, compute_beta, ehrenfest_residual, field_gap, theorem_distances,
    BoundMargins, DiagnosticsRecord, MarginInputs,
};
use bosetracer_core::field::Point;
use bosetracer_core::intermediate::{DrivenTrajectory, IntermediateModel, IntermediateState};
use bosetracer_core::macroscopic::{MacroModel, MacroState};
use bosetracer_core::microscopic::{MicroModel, MicroObservables, MicroPropagator, MicroState};
use bosetracer_core::model::{build_gas_state, build_tracer_state, GasState, MicroMode};
use bosetracer_core::{Error, ManyBodyField, MemoryCap, ModelConfig};
use serde::Serialize;

use crate::config::memory_cap;
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MicroUsed {
    Full,
    Factorized,
    Off,
    /// Requested `auto` but the tensor grid exceeds the cap and the
    /// coupling is on.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroRow {
    pub t: f64,
    pub positions: Vec<Point>,
    pub velocities: Vec<Point>,
    pub force_norms: Vec<f64>,
    pub eps_l2: f64,
    pub overlap_abs: f64,
    pub phi_ref_l2: f64,
    pub phi_ref_linf: f64,
    pub phi_ref_grad_linf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntermediateRow {
    pub t: f64,
    pub norm: f64,
    pub diff_l2: f64,
    pub free_linf: f64,
    pub gronwall_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margins {
    #[serde(rename = "lemA1_i")]
    pub lem_a1_i: f64,
    #[serde(rename = "lemA1_ii_ref")]
    pub lem_a1_ii_ref: f64,
    #[serde(rename = "lemA1_ii_grad")]
    pub lem_a1_ii_grad: f64,
    #[serde(rename = "lemA2_i")]
    pub lem_a2_i: f64,
    #[serde(rename = "lemA2_ii")]
    pub lem_a2_ii: f64,
}

impl From<BoundMargins> for Margins {
    fn from(m: BoundMargins) -> Self {
        Self {
            lem_a1_i: m.lem_a1_i,
            lem_a1_ii_ref: m.lem_a1_ii_ref,
            lem_a1_ii_grad: m.lem_a1_ii_grad,
            lem_a2_i: m.lem_a2_i,
            lem_a2_ii: m.lem_a2_ii,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FinalValues {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub field_gap: Option<f64>,
    pub dm_distance: Option<f64>,
    pub traj_distance: Option<f64>,
    pub eps_l2: f64,
    pub hartree_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Maxima {
    pub beta: Option<f64>,
    pub dm_distance: Option<f64>,
    pub traj_distance: Option<f64>,
    pub ehrenfest_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct NormDrift {
    pub micro: Option<f64>,
    pub phi_ref: f64,
    pub intermediate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WallTimes {
    pub micro: f64,
    pub macro_: f64,
    pub intermediate: f64,
    pub diagnostics: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RichardsonOrder {
    pub position: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialValues {
    pub fourier_l1: f64,
    pub fourier_l1_grad: f64,
    pub var_x: f64,
    pub var_v: f64,
    pub spread_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// `ok`, `flagged` (a checked bound failed) or `aborted`.
    pub status: String,
    pub reasons: Vec<String>,
    pub micro_mode: MicroUsed,
    pub steps_completed: usize,
    pub t_final: f64,
    pub initial: InitialValues,
    #[serde(rename = "final")]
    pub final_values: FinalValues,
    pub max: Maxima,
    pub margins_final: Option<Margins>,
    pub margins_min: Option<Margins>,
    pub gronwall_ok: bool,
    pub norm_drift: NormDrift,
    pub richardson_order: Option<RichardsonOrder>,
    pub wall_time_s: WallTimes,
    pub peak_memory_kb: Option<u64>,
    pub timestamp_unix: u64,
    pub config: ModelConfig,
}

#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub config: ModelConfig,
    pub micro: Vec<MicroObservables>,
    pub macro_rows: Vec<MacroRow>,
    pub intermediate: Vec<IntermediateRow>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub summary: Summary,
}

impl RunArtifact {
    pub fn is_aborted(&self) -> bool {
        self.summary.status == "aborted"
    }
}

struct Micro {
    model: MicroModel,
    prop: MicroPropagator,
    state: MicroState,
}

fn choose_micro(
    cfg: &ModelConfig,
    cap: MemoryCap,
    tracer: &bosetracer_core::model::TracerState,
    gas: &GasState,
    reasons: &mut Vec<String>,
) -> Result<(MicroUsed, Option<Micro>), Error> {
    let mode = cfg.run.micro_mode;
    if mode == MicroMode::Off {
        return Ok((MicroUsed::Off, None));
    }
    if cfg.variant.m_tracers > 1 {
        reasons.push("micro_single_tracer_only".into());
        return Ok((MicroUsed::Off, None));
    }
    let model = MicroModel::new(cfg)?;
    let fits = ManyBodyField::sample_count(model.grid(), cfg.n_gas) <= cap.0 as u128;
    let used = match mode {
        MicroMode::Full => MicroUsed::Full,
        MicroMode::Factorized => MicroUsed::Factorized,
        _ if fits => MicroUsed::Full,
        _ if !model.is_coupled() => MicroUsed::Factorized,
        _ => {
            reasons.push("micro_skipped_memory_cap".into());
            return Ok((MicroUsed::Skipped, None));
        }
    };
    let state = match used {
        MicroUsed::Full => MicroState::full(&model, &tracer.chi, &gas.phi0, cap)?,
        _ => MicroState::factorized(&model, &tracer.chi, &gas.phi0)?,
    };
    let prop = MicroPropagator::new(&model, cfg.dt);
    Ok((used, Some(Micro { model, prop, state })))
}

fn peak_memory_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|v| v.parse().ok())
}

fn min_margins(a: Margins, b: Margins) -> Margins {
    Margins {
        lem_a1_i: a.lem_a1_i.min(b.lem_a1_i),
        lem_a1_ii_ref: a.lem_a1_ii_ref.min(b.lem_a1_ii_ref),
        lem_a1_ii_grad: a.lem_a1_ii_grad.min(b.lem_a1_ii_grad),
        lem_a2_i: a.lem_a2_i.min(b.lem_a2_i),
        lem_a2_ii: a.lem_a2_ii.min(b.lem_a2_ii),
    }
}

fn macro_row(mac: &MacroState, lambda_vol: f64) -> MacroRow {
    let report = mac.energy_report(lambda_vol);
    let phi = mac.phi_ref();
    let grad = phi.gradient();
    let grad_linf = (0..phi.values().len())
        .map(|i| grad.iter().map(|g| g.values()[i].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    MacroRow {
        t: mac.t(),
        positions: mac.positions().to_vec(),
        velocities: mac.velocities().to_vec(),
        force_norms: report.force_norms,
        eps_l2: report.eps_l2,
        overlap_abs: report.overlap.norm(),
        phi_ref_l2: phi.l2_norm(),
        phi_ref_linf: phi.linf_norm(),
        phi_ref_grad_linf: grad_linf,
    }
}

fn push_reason(reasons: &mut Vec<String>, r: String) {
    if !reasons.contains(&r) {
        reasons.push(r);
    }
}

/// Runs the scenario. Configuration errors are returned; failures during
/// the run end it early and are recorded in the summary.
pub fn run_scenario(cfg: &ModelConfig) -> Result<RunArtifact, SimError> {
    let started = Instant::now();
    cfg.validate()?;
    let cap = memory_cap(cfg)?;
    let tracer = build_tracer_state(cfg)?;
    let gas = build_gas_state(cfg)?;
    let grid = cfg.spatial_grid()?;
    let lambda = cfg.lambda_vol;
    let dt = cfg.dt;
    let mut reasons = Vec::new();
    let mut times = WallTimes::default();
    let initial = InitialValues {
        fourier_l1: gas.fourier_l1,
        fourier_l1_grad: gas.fourier_l1_grad,
        var_x: tracer.var_x,
        var_v: tracer.var_v,
        spread_constant: tracer.spread_constant,
    };

    let clock = Instant::now();
    let mut aborted = false;
    let (micro_used, mut micro) = match choose_micro(cfg, cap, &tracer, &gas, &mut reasons) {
        Ok(v) => v,
        Err(Error::MemoryCap { .. }) => {
            reasons.push("memory_cap".into());
            aborted = true;
            (MicroUsed::Full, None)
        }
        Err(e) => return Err(e.into()),
    };
    times.micro += clock.elapsed().as_secs_f64();

    let obs0 = micro.as_ref().map(|m| m.state.observables(&m.model));
    let (x0, v0) = match &obs0 {
        Some(o) => (vec![o.mean_x], vec![o.mean_v]),
        None => (cfg.tracer_positions(), vec![cfg.v0(); cfg.variant.m_tracers]),
    };
    let mac_model = MacroModel::new(cfg)?;
    let mut mac = MacroState::new(&mac_model, x0.clone(), v0, gas.phi_ref0.clone())?;
    let inter_model = IntermediateModel::new(grid, cfg.potentials.w, dt);
    let mut inter = IntermediateState::new(gas.phi0.clone());
    let mut driver = DrivenTrajectory::new();
    driver.push(0.0, x0)?;

    let mut art = RunArtifact {
        config: cfg.clone(),
        micro: Vec::new(),
        macro_rows: Vec::new(),
        intermediate: Vec::new(),
        diagnostics: Vec::new(),
        summary: Summary {
            status: String::new(),
            reasons: Vec::new(),
            micro_mode: micro_used,
            steps_completed: 0,
            t_final: 0.0,
            initial,
            final_values: FinalValues::default(),
            max: Maxima::default(),
            margins_final: None,
            margins_min: None,
            gronwall_ok: true,
            norm_drift: NormDrift::default(),
            richardson_order: None,
            wall_time_s: WallTimes::default(),
            peak_memory_kb: None,
            timestamp_unix: 0,
            config: cfg.clone(),
        },
    };
    let phi_ref_norm0 = gas.phi_ref0.l2_norm();
    let mut dm_available = true;

    let steps = if aborted { 0 } else { cfg.steps() };
    let stride = cfg.run.stride;
    let mut done = 0usize;
    let mut record = |art: &mut RunArtifact,
                      micro: &Option<Micro>,
                      mac: &MacroState,
                      inter: &IntermediateState,
                      reasons: &mut Vec<String>,
                      times: &mut WallTimes|
     -> Result<(), Error> {
        let clock = Instant::now();
        let margins = appendix_margins(&MarginInputs::collect(
            mac,
            inter,
            gas.fourier_l1,
            gas.fourier_l1_grad,
            lambda,
        ));
        let mut rec = DiagnosticsRecord::empty(mac.t(), margins);
        rec.field_gap = field_gap(mac, inter, lambda)?;
        if let Some(m) = micro {
            let obs = m.state.observables(&m.model);
            let alpha = compute_alpha(&m.state, &obs, inter, lambda, dt)?;
            if alpha.q1q2_scaled.is_none() {
                push_reason(reasons, "q1q2_omitted_single_gas_particle".into());
            }
            let beta = compute_beta(mac, &obs, inter, lambda, dt)?;
            rec = rec.with_alpha(&alpha).with_beta(&beta);
            if dm_available {
                match theorem_distances(&m.state, &obs, mac, lambda, cap) {
                    Ok(d) => rec.dm_distance = d.dm_distance,
                    Err(Error::MemoryCap { .. }) => {
                        dm_available = false;
                        push_reason(reasons, "dm_distance_skipped_memory_cap".into());
                    }
                    Err(e) => return Err(e),
                }
            }
            art.micro.push(obs);
        }
        for name in margins.violations() {
            push_reason(reasons, format!("margin_violation:{name}"));
        }
        let gap = inter.hartree_vs_free();
        let gronwall_ok = inter.gronwall_holds();
        if !gronwall_ok {
            push_reason(reasons, "gronwall_violation".into());
        }
        art.intermediate.push(IntermediateRow {
            t: inter.t(),
            norm: inter.phi().l2_norm(),
            diff_l2: gap.diff_l2,
            free_linf: gap.free_linf,
            gronwall_ok,
        });
        art.macro_rows.push(macro_row(mac, lambda));
        art.diagnostics.push(rec);
        times.diagnostics += clock.elapsed().as_secs_f64();
        Ok(())
    };

    let outcome: Result<(), Error> = (|| {
        if aborted {
            return Ok(());
        }
        record(&mut art, &micro, &mac, &inter, &mut reasons, &mut times)?;
        while done < steps {
            let chunk = stride.min(steps - done);
            let clock = Instant::now();
            if let Some(m) = micro.as_mut() {
                m.state.advance(&m.prop, chunk)?;
            }
            times.micro += clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            mac_model.advance(&mut mac, chunk)?;
            times.macro_ += clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let (t, pos) = match &micro {
                Some(m) => (m.state.t(), vec![m.state.observables(&m.model).mean_x]),
                None => (mac.t(), mac.positions().to_vec()),
            };
            driver.push(t, pos)?;
            inter_model.advance(&mut inter, &driver, chunk)?;
            times.intermediate += clock.elapsed().as_secs_f64();
            done += chunk;
            record(&mut art, &micro, &mac, &inter, &mut reasons, &mut times)?;
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        reasons.push(e.code().into());
        aborted = true;
    }

    // second differences need a uniform stride, so a shorter final chunk is left out
    let uniform = if steps % stride == 0 { art.micro.len() } else { art.micro.len().saturating_sub(1) };
    if uniform >= 3 {
        if let Ok(res) = ehrenfest_residual(&art.micro[..uniform]) {
            for (j, r) in res.into_iter().enumerate() {
                art.diagnostics[j + 1].ehrenfest_residual = r;
            }
        }
    }

    if cfg.run.richardson && !aborted {
        let clock = Instant::now();
        match richardson(cfg, &mac_model, &art, &gas) {
            Ok(r) => art.summary.richardson_order = Some(r),
            Err(e) => push_reason(&mut reasons, format!("richardson_{}", e.code())),
        }
        times.macro_ += clock.elapsed().as_secs_f64();
    }

    summarize(&mut art, &mac, &inter, micro.as_ref(), phi_ref_norm0, done, reasons, aborted);
    times.total = started.elapsed().as_secs_f64();
    art.summary.wall_time_s = times;
    art.summary.peak_memory_kb = peak_memory_kb();
    art.summary.timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(art)
}

/// Reruns the effective system at `dt/2` and `dt/4` from the same initial
/// data and compares final states.
fn richardson(cfg: &ModelConfig, model: &MacroModel, art: &RunArtifact, gas: &GasState) -> Result<RichardsonOrder, Error> {
    let first = &art.macro_rows[0];
    let steps = cfg.steps();
    let finals: Vec<MacroState> = [1usize, 2, 4]
        .iter()
        .map(|&k| {
            let m = model.with_dt(cfg.dt / k as f64);
            let mut s = MacroState::new(&m, first.positions.clone(), first.velocities.clone(), gas.phi_ref0.clone())?;
            m.advance(&mut s, steps * k)?;
            Ok(s)
        })
        .collect::<Result<_, Error>>()?;
    let pos_gap = |a: &MacroState, b: &MacroState| {
        a.positions()
            .iter()
            .zip(b.positions())
            .map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    };
    let eps_gap = |a: &MacroState, b: &MacroState| a.eps().sub(b.eps()).map(|d| d.l2_norm());
    Ok(RichardsonOrder {
        position: (pos_gap(&finals[0], &finals[1]) / pos_gap(&finals[1], &finals[2])).log2(),
        eps: (eps_gap(&finals[0], &finals[1])? / eps_gap(&finals[1], &finals[2])?).log2(),
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    art: &mut RunArtifact,
    mac: &MacroState,
    inter: &IntermediateState,
    micro: Option<&Micro>,
    phi_ref_norm0: f64,
    steps_done: usize,
    reasons: Vec<String>,
    aborted: bool,
) {
    let s = &mut art.summary;
    s.steps_completed = steps_done;
    s.t_final = art.diagnostics.last().map_or(0.0, |r| r.t);
    let finite = |v: f64| v.is_finite().then_some(v);
    let max_of = |f: &dyn Fn(&DiagnosticsRecord) -> f64| {
        art.diagnostics.iter().map(f).filter(|v| v.is_finite()).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    };
    if let Some(last) = art.diagnostics.last() {
        s.final_values = FinalValues {
            alpha: finite(last.alpha_total),
            beta: finite(last.beta_total),
            field_gap: finite(last.field_gap),
            dm_distance: finite(last.dm_distance),
            traj_distance: finite(last.traj_gap + last.vel_gap),
            eps_l2: art.macro_rows.last().map_or(0.0, |r| r.eps_l2),
            hartree_diff: art.intermediate.last().map_or(0.0, |r| r.diff_l2),
        };
        s.margins_final = Some(last.margins.into());
        s.margins_min = art.diagnostics.iter().map(|r| Margins::from(r.margins)).reduce(min_margins);
    }
    s.max = Maxima {
        beta: max_of(&|r| r.beta_total),
        dm_distance: max_of(&|r| r.dm_distance),
        traj_distance: max_of(&|r| r.traj_gap + r.vel_gap),
        ehrenfest_residual: max_of(&|r| r.ehrenfest_residual),
    };
    s.gronwall_ok = art.intermediate.iter().all(|r| r.gronwall_ok);
    s.norm_drift = NormDrift {
        micro: micro.map(|_| art.micro.iter().map(|o| (o.norm - 1.0).abs()).fold(0.0, f64::max)),
        phi_ref: (mac.phi_ref().l2_norm() - phi_ref_norm0).abs() / phi_ref_norm0,
        intermediate: (inter.phi().l2_norm() - 1.0).abs(),
    };
    let flagged = reasons.iter().any(|r| r.starts_with("margin_violation") || r == "gronwall_violation");
    s.status = if aborted {
        "aborted"
    } else if flagged {
        "flagged"
    } else {
        "ok"
    }
    .into();
    s.reasons = reasons;
}
