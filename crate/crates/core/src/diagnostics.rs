//! Comparison functionals between the microscopic, intermediate and
//! effective descriptions, plus the a-priori bound margins.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

use crate::field::{gradient_magnitude_max, norm_of, DensityMatrix, MemoryCap, MAX_DIM};
use crate::intermediate::{HartreeGap, IntermediateState};
use crate::macroscopic::{BoundTracker, MacroState};
use crate::microscopic::{MicroObservables, MicroState};
use crate::{Error, Result};

/// Margins below this are violations.
pub const MARGIN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRecord {
    pub var_x: f64,
    pub var_v: f64,
    /// `|Lambda| <q_1>`.
    pub q1_scaled: f64,
    /// `|Lambda|^2 <q_1 q_2>`, absent with a single gas particle.
    pub q1q2_scaled: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaRecord {
    /// `|X - <x>|`.
    pub traj_gap: f64,
    /// `|X' - <p>/rho|`.
    pub vel_gap: f64,
    /// `||phi_ref + eps - |Lambda|^{1/2} phi_t||_2`.
    pub field_gap: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremDistances {
    pub dm_distance: f64,
    pub traj_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundMargins {
    pub lem_a1_i: f64,
    pub lem_a1_ii_ref: f64,
    pub lem_a1_ii_grad: f64,
    pub lem_a2_i: f64,
    pub lem_a2_ii: f64,
}

impl BoundMargins {
    pub fn as_array(&self) -> [f64; 5] {
        [self.lem_a1_i, self.lem_a1_ii_ref, self.lem_a1_ii_grad, self.lem_a2_i, self.lem_a2_ii]
    }

    pub const NAMES: [&'static str; 5] = ["lemA1_i", "lemA1_ii_ref", "lemA1_ii_grad", "lemA2_i", "lemA2_ii"];

    /// Names of the margins below `-MARGIN_TOL`.
    pub fn violations(&self) -> Vec<&'static str> {
        Self::NAMES
            .iter()
            .zip(self.as_array())
            .filter(|(_, m)| !(*m >= -MARGIN_TOL))
            .map(|(n, _)| *n)
            .collect()
    }
}

fn check_times(a: f64, b: f64, dt: f64) -> Result<()> {
    if (a - b).abs() > 0.5 * dt {
        return Err(Error::TimeMismatch { expected: a, found: b });
    }
    Ok(())
}

/// `alpha = (Var x^2 + Var(p/rho)^2 + (|Lambda| <q_1>)^2 + (|Lambda|^2 <q_1 q_2>)^2)^{1/2}`
/// with `q` built from the intermediate field `phi_t`.
pub fn compute_alpha(
    micro: &MicroState,
    obs: &MicroObservables,
    inter: &IntermediateState,
    lambda_vol: f64,
    dt: f64,
) -> Result<AlphaRecord> {
    check_times(micro.t(), inter.t(), dt)?;
    let q = micro.q_expectations(inter.phi())?;
    let q1_scaled = lambda_vol * q.q1;
    let q1q2_scaled = q.q1q2.map(|v| lambda_vol * lambda_vol * v);
    let total = (obs.var_x.powi(2)
        + obs.var_v.powi(2)
        + q1_scaled.powi(2)
        + q1q2_scaled.map_or(0.0, |v| v.powi(2)))
    .sqrt();
    Ok(AlphaRecord { var_x: obs.var_x, var_v: obs.var_v, q1_scaled, q1q2_scaled, total })
}

fn gap(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]) -> f64 {
    norm_of(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

/// `|||Lambda|^{1/2} phi_t - phi_ref - eps||_2`.
pub fn field_gap(mac: &MacroState, inter: &IntermediateState, lambda_vol: f64) -> Result<f64> {
    let target = inter.phi().scaled(lambda_vol.sqrt());
    Ok(mac.phi_ref().add(mac.eps())?.sub(&target)?.l2_norm())
}

/// `beta = (|X - <x>|^2 + |X' - <p>/rho|^2 + ||phi_ref + eps - |Lambda|^{1/2} phi_t||^2)^{1/2}`
/// for the first tracer.
pub fn compute_beta(
    mac: &MacroState,
    obs: &MicroObservables,
    inter: &IntermediateState,
    lambda_vol: f64,
    dt: f64,
) -> Result<BetaRecord> {
    check_times(mac.t(), obs.t, dt)?;
    check_times(mac.t(), inter.t(), dt)?;
    let traj_gap = gap(&mac.positions()[0], &obs.mean_x);
    let vel_gap = gap(&mac.velocities()[0], &obs.mean_v);
    let field_gap = field_gap(mac, inter, lambda_vol)?;
    let total = (traj_gap * traj_gap + vel_gap * vel_gap + field_gap * field_gap).sqrt();
    Ok(BetaRecord { traj_gap, vel_gap, field_gap, total })
}

/// Operator-norm distance of the excitation density matrices and the
/// tracer phase-space distance.
pub fn theorem_distances(
    micro: &MicroState,
    obs: &MicroObservables,
    mac: &MacroState,
    lambda_vol: f64,
    cap: MemoryCap,
) -> Result<TheoremDistances> {
    let micro_dm = micro.excitation_density_matrix(mac.phi_ref(), lambda_vol, cap)?;
    let macro_dm = DensityMatrix::rank_one(mac.eps());
    let dm_distance = micro_dm.sub(&macro_dm)?.operator_norm()?;
    let traj_distance = gap(&mac.positions()[0], &obs.mean_x) + gap(&mac.velocities()[0], &obs.mean_v);
    Ok(TheoremDistances { dm_distance, traj_distance })
}

/// `|d^2<x>/dt^2 - <force>|` by centred second differences, one value per
/// interior sample.
pub fn ehrenfest_residual(samples: &[MicroObservables]) -> Result<Vec<f64>> {
    if samples.len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, found: samples.len() });
    }
    let stride = samples[1].t - samples[0].t;
    for w in samples.windows(2) {
        if !(stride > 0.0) || ((w[1].t - w[0].t) - stride).abs() > 1e-9 * stride.max(1.0) {
            return Err(Error::NonUniformStride);
        }
    }
    Ok(samples
        .windows(3)
        .map(|w| {
            let mut r = [0.0; MAX_DIM];
            for a in 0..MAX_DIM {
                let acc = (w[2].mean_x[a] - 2.0 * w[1].mean_x[a] + w[0].mean_x[a]) / (stride * stride);
                r[a] = acc - w[1].mean_force[a];
            }
            norm_of(&r)
        })
        .collect())
}

/// Measured quantities entering the bound margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginInputs {
    pub t: f64,
    pub d: usize,
    pub lambda_vol: f64,
    /// `fourier_l1(phi_0)` and `fourier_l1(grad phi_0)`.
    pub fourier_l1: f64,
    pub fourier_l1_grad: f64,
    pub hartree: HartreeGap,
    /// Sup-norms of the driving potential `W(X_s - .)` so far.
    pub w_l2: f64,
    pub w_linf: f64,
    pub phi_ref_linf: f64,
    pub phi_ref_grad_linf: f64,
    pub eps_l2: f64,
    pub overlap: f64,
    pub bounds: BoundTracker,
}

impl MarginInputs {
    pub fn collect(
        mac: &MacroState,
        inter: &IntermediateState,
        fourier_l1: f64,
        fourier_l1_grad: f64,
        lambda_vol: f64,
    ) -> Self {
        let report = mac.energy_report(lambda_vol);
        Self {
            t: mac.t(),
            d: mac.phi_ref().grid().dim(),
            lambda_vol,
            fourier_l1,
            fourier_l1_grad,
            hartree: inter.hartree_vs_free(),
            w_l2: inter.sup_w_l2(),
            w_linf: inter.sup_w_linf(),
            phi_ref_linf: mac.phi_ref().linf_norm(),
            phi_ref_grad_linf: gradient_magnitude_max(&mac.phi_ref().gradient()),
            eps_l2: report.eps_l2,
            overlap: report.overlap.norm(),
            bounds: *mac.bounds(),
        }
    }
}

/// Margins `RHS - LHS` of the a-priori bounds, from measured norms.
pub fn appendix_margins(m: &MarginInputs) -> BoundMargins {
    let c = (2.0 * PI).powf(-0.5 * m.d as f64);
    let b0 = c * m.fourier_l1;
    let sqrt_l = m.lambda_vol.sqrt();
    let a1_i_rhs = b0 + m.t * m.w_l2 * b0 * (m.w_linf * m.t).exp();
    BoundMargins {
        lem_a1_i: a1_i_rhs - (m.hartree.free_linf + m.hartree.diff_l2),
        lem_a1_ii_ref: sqrt_l * b0 - m.phi_ref_linf,
        lem_a1_ii_grad: sqrt_l * c * m.fourier_l1_grad - m.phi_ref_grad_linf,
        lem_a2_i: m.bounds.eps_bound(m.t) - m.eps_l2,
        lem_a2_ii: m.bounds.overlap_bound(m.t, m.lambda_vol) - m.overlap,
    }
}

/// Observed order `log2(|a - b| / |b - c|)` from results at step sizes
/// `dt`, `dt/2`, `dt/4`.
pub fn richardson_order(a: f64, b: f64, c: f64) -> f64 {
    ((a - b).abs() / (b - c).abs()).log2()
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonFinite);
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("fit abscissae coincide".into()));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit { exponent, intercept, r2 })
}

/// One row of `diagnostics.csv`. Quantities that are unavailable in a run
/// (no microscopic state, single gas particle) are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub var_x: f64,
    pub var_v: f64,
    pub q1_scaled: f64,
    pub q1q2_scaled: f64,
    pub alpha_total: f64,
    pub traj_gap: f64,
    pub vel_gap: f64,
    pub field_gap: f64,
    pub beta_total: f64,
    pub dm_distance: f64,
    pub ehrenfest_residual: f64,
    pub margins: BoundMargins,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 17] = [
        "t",
        "var_x",
        "var_v",
        "q1_scaled",
        "q1q2_scaled",
        "alpha_total",
        "traj_gap",
        "vel_gap",
        "field_gap",
        "beta_total",
        "dm_distance",
        "ehrenfest_residual",
        "lemA1_i_margin",
        "lemA1_ii_ref_margin",
        "lemA1_ii_grad_margin",
        "lemA2_i_margin",
        "lemA2_ii_margin",
    ];

    pub fn empty(t: f64, margins: BoundMargins) -> Self {
        Self {
            t,
            var_x: f64::NAN,
            var_v: f64::NAN,
            q1_scaled: f64::NAN,
            q1q2_scaled: f64::NAN,
            alpha_total: f64::NAN,
            traj_gap: f64::NAN,
            vel_gap: f64::NAN,
            field_gap: f64::NAN,
            beta_total: f64::NAN,
            dm_distance: f64::NAN,
            ehrenfest_residual: f64::NAN,
            margins,
        }
    }

    pub fn with_alpha(mut self, a: &AlphaRecord) -> Self {
        self.var_x = a.var_x;
        self.var_v = a.var_v;
        self.q1_scaled = a.q1_scaled;
        self.q1q2_scaled = a.q1q2_scaled.unwrap_or(f64::NAN);
        self.alpha_total = a.total;
        self
    }

    pub fn with_beta(mut self, b: &BetaRecord) -> Self {
        self.traj_gap = b.traj_gap;
        self.vel_gap = b.vel_gap;
        self.field_gap = b.field_gap;
        self.beta_total = b.total;
        self
    }

    pub fn values(&self) -> [f64; 17] {
        let m = self.margins.as_array();
        [
            self.t,
            self.var_x,
            self.var_v,
            self.q1_scaled,
            self.q1q2_scaled,
            self.alpha_total,
            self.traj_gap,
            self.vel_gap,
            self.field_gap,
            self.beta_total,
            self.dm_distance,
            self.ehrenfest_residual,
            m[0],
            m[1],
            m[2],
            m[3],
            m[4],
        ]
    }
}
