//! Split-step propagation of the (N+1)-body Schrödinger equation
//! `i d/dt Psi = H Psi` with
//! `H = -Delta_x/(2 rho) + rho V(x) - sum_k Delta_{y_k} + sum_k W(x - y_k)`
//! and the microscopic observables read off `Psi`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

use crate::fft::{self, FftPlan};
use crate::field::{
    free_multiplier, moments_from_weights, DensityMatrix, Direction, Field, Grid, ManyBodyField,
    MemoryCap, Point, Projector, MAX_DIM,
};
use crate::model::{BumpSpec, ModelConfig};
use crate::{Error, Result, C64};

/// Largest norm change tolerated in a single step.
pub const NORM_DRIFT_TOL: f64 = 1e-6;

/// Tolerance on the normalization of `phi_ref / |Lambda|^{1/2}`.
const REF_NORM_TOL: f64 = 1e-6;

/// Potentials tabulated on the grid. `W` and its gradient depend only on the
/// displacement `x - y`, which on the grid is itself a grid vector, so they
/// are stored per displacement index.
#[derive(Debug, Clone)]
pub struct MicroModel {
    grid: Grid,
    n_gas: usize,
    rho: f64,
    lambda_vol: f64,
    coupled: bool,
    v: Vec<f64>,
    grad_v: Vec<Point>,
    w: Vec<f64>,
    grad_w: Vec<Point>,
}

impl MicroModel {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let grid = cfg.spatial_grid()?;
        Ok(Self::from_parts(grid, cfg.n_gas, cfg.rho(), cfg.lambda_vol, cfg.potentials.v, cfg.potentials.w))
    }

    pub fn from_parts(grid: Grid, n_gas: usize, rho: f64, lambda_vol: f64, v: BumpSpec, w: BumpSpec) -> Self {
        let m = grid.len();
        let h = grid.spacing();
        let disp_point = |idx: usize| {
            let ix = grid.unravel(idx);
            let mut p = [0.0; MAX_DIM];
            for a in 0..grid.dim() {
                p[a] = grid.min_image(ix[a] as f64 * h);
            }
            p
        };
        Self {
            grid,
            n_gas,
            rho,
            lambda_vol,
            coupled: !w.is_zero(),
            v: (0..m).map(|i| v.eval(&grid.point(i))).collect(),
            grad_v: (0..m).map(|i| v.grad(&grid.point(i))).collect(),
            w: (0..m).map(|i| w.eval(&disp_point(i))).collect(),
            grad_w: (0..m).map(|i| w.grad(&disp_point(i))).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_gas(&self) -> usize {
        self.n_gas
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lambda_vol(&self) -> f64 {
        self.lambda_vol
    }

    /// Whether the tracer couples to the gas at all.
    pub fn is_coupled(&self) -> bool {
        self.coupled
    }

    /// Flat displacement index of `x - y` for flat sample indices `x`, `y`.
    fn displacement(&self, x: usize, y: usize) -> usize {
        let n = self.grid.n();
        if self.grid.dim() == 1 {
            return (x + n - y) % n;
        }
        let ix = self.grid.unravel(x);
        let iy = self.grid.unravel(y);
        (0..self.grid.dim()).fold(0, |acc, a| acc * n + (ix[a] + n - iy[a]) % n)
    }

    /// `W(x - y)` for every gas position `y`, at fixed tracer position `x`.
    fn w_row(&self, x: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|y| self.w[self.displacement(x, y)]).collect()
    }
}

/// Precomputed split-step factors for one time step.
#[derive(Debug, Clone)]
pub struct MicroPropagator {
    dt: f64,
    plan: FftPlan,
    tracer_half: Vec<C64>,
    tracer_full: Vec<C64>,
    gas_half: Vec<C64>,
    gas_full: Vec<C64>,
    v_phase: Vec<C64>,
    /// `exp(-i dt W(x - y))` for every `(x, y)`, row-major in `x`.
    w_phase: Vec<C64>,
}

impl MicroPropagator {
    pub fn new(model: &MicroModel, dt: f64) -> Self {
        let grid = model.grid;
        let n = grid.n() as f64;
        let tracer = |tau: f64| -> Vec<C64> {
            grid.frequencies()
                .iter()
                .map(|k| C64::from_polar(1.0 / n, -tau * k * k / (2.0 * model.rho)))
                .collect()
        };
        let m = grid.len();
        let w_phase = if model.coupled {
            let mut out = Vec::with_capacity(m * m);
            for x in 0..m {
                out.extend(model.w_row(x).into_iter().map(|w| C64::from_polar(1.0, -dt * w)));
            }
            out
        } else {
            Vec::new()
        };
        Self {
            dt,
            plan: FftPlan::new(grid.n()),
            tracer_half: tracer(0.5 * dt),
            tracer_full: tracer(dt),
            gas_half: free_multiplier(&grid, 0.5 * dt),
            gas_full: free_multiplier(&grid, dt),
            v_phase: model.v.iter().map(|v| C64::from_polar(1.0, -dt * model.rho * v)).collect(),
            w_phase,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn kinetic(&self, psi: &mut ManyBodyField, full: bool) {
        let d = psi.grid().dim();
        let rank = psi.rank();
        let (t, g) = if full {
            (&self.tracer_full, &self.gas_full)
        } else {
            (&self.tracer_half, &self.gas_half)
        };
        let mults: Vec<&[C64]> =
            (0..rank).map(|axis| if axis < d { t.as_slice() } else { g.as_slice() }).collect();
        fft::apply_separable_multiplier(&self.plan, psi.values_mut(), rank, &mults);
    }

    fn potential(&self, psi: &mut ManyBodyField) {
        let n_gas = psi.n_gas();
        let m = psi.slot_len();
        let gas_len = m.pow(n_gas as u32);
        let coupled = !self.w_phase.is_empty() && n_gas > 0;
        for (x, block) in psi.values_mut().chunks_exact_mut(gas_len).enumerate() {
            let vx = self.v_phase[x];
            block.iter_mut().for_each(|v| *v *= vx);
            if !coupled {
                continue;
            }
            let wx = &self.w_phase[x * m..(x + 1) * m];
            for s in 1..=n_gas {
                let inner = m.pow((n_gas - s) as u32);
                for chunk in block.chunks_exact_mut(m * inner) {
                    for (row, w) in chunk.chunks_exact_mut(inner).zip(wx) {
                        row.iter_mut().for_each(|v| *v *= w);
                    }
                }
            }
        }
    }

    /// `steps` Strang steps with adjacent half kinetic steps merged.
    fn advance(&self, psi: &mut ManyBodyField, steps: usize) {
        if steps == 0 {
            return;
        }
        self.kinetic(psi, false);
        for s in 0..steps {
            self.potential(psi);
            self.kinetic(psi, s + 1 < steps);
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Full(ManyBodyField),
    /// `chi_t ⊗ phi_t^{⊗N}`, exact when `W = 0`. The tracer factor is held as
    /// a tensor field with no gas slots.
    Factorized { tracer: ManyBodyField, gas: Field, n_gas: usize },
}

/// Microscopic state `Psi_t` at time `t`.
#[derive(Debug, Clone)]
pub struct MicroState {
    repr: Repr,
    t: f64,
    norm: f64,
}

/// Tracer moments and expectation values at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroObservables {
    pub t: f64,
    pub norm: f64,
    pub mean_x: Point,
    pub var_x: f64,
    /// `<p> / rho`.
    pub mean_v: Point,
    /// Variance of `p / rho`.
    pub var_v: f64,
    pub energy: f64,
    /// `<-grad V(x) - (1/rho) sum_k grad W(x - y_k)>`.
    pub mean_force: Point,
}

/// `<q_1>` and `<q_1 q_2>`; the latter is absent for a single gas particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QExpectations {
    pub q1: f64,
    pub q1q2: Option<f64>,
}

impl MicroState {
    pub fn full(model: &MicroModel, chi: &Field, phi0: &Field, cap: MemoryCap) -> Result<Self> {
        let psi = ManyBodyField::product(chi, phi0, model.n_gas, cap)?;
        Self::from_field(model, psi, 0.0)
    }

    pub fn from_field(model: &MicroModel, psi: ManyBodyField, t: f64) -> Result<Self> {
        if *psi.grid() != model.grid || psi.n_gas() != model.n_gas {
            return Err(Error::GridMismatch);
        }
        let norm = psi.l2_norm();
        Ok(Self { repr: Repr::Full(psi), t, norm })
    }

    /// Product evolution for an uncoupled gas. Fails if `W` is not zero.
    pub fn factorized(model: &MicroModel, chi: &Field, phi0: &Field) -> Result<Self> {
        if model.coupled {
            return Err(Error::InvalidConfig(
                "the factorized system is exact only when W vanishes".into(),
            ));
        }
        let tracer = ManyBodyField::product(chi, phi0, 0, MemoryCap::DEFAULT)?;
        let norm = tracer.l2_norm();
        Ok(Self { repr: Repr::Factorized { tracer, gas: phi0.clone(), n_gas: model.n_gas }, t: 0.0, norm })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn is_factorized(&self) -> bool {
        matches!(self.repr, Repr::Factorized { .. })
    }

    /// The full tensor field, if this state holds one.
    pub fn psi(&self) -> Option<&ManyBodyField> {
        match &self.repr {
            Repr::Full(psi) => Some(psi),
            Repr::Factorized { .. } => None,
        }
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn step(&mut self, prop: &MicroPropagator) -> Result<()> {
        self.advance(prop, 1)
    }

    /// Advances `steps` steps. The norm is checked once at the end against a
    /// per-step budget.
    pub fn advance(&mut self, prop: &MicroPropagator, steps: usize) -> Result<()> {
        match &mut self.repr {
            Repr::Full(psi) => prop.advance(psi, steps),
            Repr::Factorized { tracer, gas, .. } => {
                prop.advance(tracer, steps);
                *gas = gas.free_evolved(prop.dt * steps as f64);
            }
        }
        self.t += prop.dt * steps as f64;
        let norm = match &self.repr {
            Repr::Full(psi) => psi.l2_norm(),
            Repr::Factorized { tracer, .. } => tracer.l2_norm(),
        };
        let drift = (norm - self.norm).abs();
        if !norm.is_finite() {
            return Err(Error::NonFinite);
        }
        if drift > NORM_DRIFT_TOL * steps.max(1) as f64 {
            return Err(Error::NormDrift { drift, t: self.t });
        }
        self.norm = norm;
        Ok(())
    }

    pub fn observables(&self, model: &MicroModel) -> MicroObservables {
        let (field, n_gas, gas) = match &self.repr {
            Repr::Full(psi) => (psi, model.n_gas, None),
            Repr::Factorized { tracer, gas, n_gas } => (tracer, 0, Some((gas, *n_gas))),
        };
        let grid = model.grid;
        let m = grid.len();
        let d = grid.dim();
        let rho = model.rho;
        let h_all = field.measure();

        let dens: Vec<f64> = field.values().iter().map(|v| v.norm_sqr()).collect();
        let spectrum = field.spectral_transform(Direction::Forward);
        let spec_dens: Vec<f64> = spectrum.values().iter().map(|v| v.norm_sqr()).collect();

        let tracer_pos = slot_marginal(&dens, m, n_gas, 0);
        let tracer_mom = slot_marginal(&spec_dens, m, n_gas, 0);
        let mom = moments_from_weights(&grid, &tracer_pos, &tracer_mom);
        let norm = (h_all * dens.iter().sum::<f64>()).sqrt();
        let total_k: f64 = spec_dens.iter().sum();

        let k2 = |j: usize| {
            let k = grid.wavevector(j);
            k[..d].iter().map(|v| v * v).sum::<f64>()
        };
        let mut kinetic = tracer_mom.iter().enumerate().map(|(j, w)| w * k2(j)).sum::<f64>() / (2.0 * rho);
        for s in 1..=n_gas {
            let marg = slot_marginal(&spec_dens, m, n_gas, s);
            kinetic += marg.iter().enumerate().map(|(j, w)| w * k2(j)).sum::<f64>();
        }
        kinetic /= total_k;

        let total_x: f64 = tracer_pos.iter().sum();
        let mut potential = tracer_pos.iter().zip(&model.v).map(|(w, v)| w * rho * v).sum::<f64>();
        let mut force = [0.0; MAX_DIM];
        for (w, g) in tracer_pos.iter().zip(&model.grad_v) {
            for a in 0..d {
                force[a] -= w * g[a];
            }
        }
        if n_gas > 0 && model.coupled {
            for s in 1..=n_gas {
                let pair = pair_marginal(&dens, m, n_gas, s);
                for x in 0..m {
                    for y in 0..m {
                        let w = pair[x * m + y];
                        if w == 0.0 {
                            continue;
                        }
                        let disp = model.displacement(x, y);
                        potential += w * model.w[disp];
                        for a in 0..d {
                            force[a] -= w * model.grad_w[disp][a] / rho;
                        }
                    }
                }
            }
        }
        potential /= total_x;
        force.iter_mut().for_each(|f| *f /= total_x);

        if let Some((gas, count)) = gas {
            let spec = gas.spectral_transform(Direction::Forward);
            let gas_total: f64 = spec.values().iter().map(|v| v.norm_sqr()).sum();
            let gas_kin: f64 =
                spec.values().iter().enumerate().map(|(j, v)| v.norm_sqr() * k2(j)).sum::<f64>() / gas_total;
            kinetic += count as f64 * gas_kin;
        }

        let mut mean_v = mom.mean_p;
        mean_v.iter_mut().for_each(|v| *v /= rho);
        MicroObservables {
            t: self.t,
            norm,
            mean_x: mom.mean_x,
            var_x: mom.var_x,
            mean_v,
            var_v: mom.var_p / (rho * rho),
            energy: kinetic + potential,
            mean_force: force,
        }
    }

    /// `<Psi, q_1 Psi>` and `<Psi, q_1 q_2 Psi>` for the one-particle state `phi`.
    pub fn q_expectations(&self, phi: &Field) -> Result<QExpectations> {
        match &self.repr {
            Repr::Full(psi) => {
                let q1 = psi.project(phi, 1, Projector::Q)?;
                let q1_val = q1.l2_norm().powi(2);
                let q1q2 = if psi.n_gas() >= 2 {
                    Some(q1.project(phi, 2, Projector::Q)?.l2_norm().powi(2))
                } else {
                    None
                };
                Ok(QExpectations { q1: q1_val, q1q2 })
            }
            Repr::Factorized { tracer, gas, n_gas } => {
                let deviation = phi.normalization_defect();
                if deviation > 1e-6 {
                    return Err(Error::NotNormalized { deviation });
                }
                // each gas slot carries ||gas||^2 = 1; the tracer norm factors out
                let overlap = phi.inner(gas)?.norm_sqr();
                let g2 = gas.l2_norm().powi(2);
                let tn = tracer.l2_norm().powi(2);
                let q = g2 - overlap;
                let rest = |k: usize| g2.powi((n_gas - k) as i32) * tn;
                Ok(QExpectations {
                    q1: q * rest(1),
                    q1q2: (*n_gas >= 2).then(|| q * q * rest(2)),
                })
            }
        }
    }

    /// One-body density matrix of gas particle 1,
    /// `gamma(y, y') = int Psi(x, y, r) conj Psi(x, y', r) dx dr`.
    pub fn one_body_density(&self, cap: MemoryCap) -> Result<DensityMatrix> {
        match &self.repr {
            Repr::Full(psi) => one_body_density(psi, cap),
            Repr::Factorized { tracer, gas, n_gas } => {
                let mut out = DensityMatrix::rank_one(gas);
                let rest = gas.l2_norm().powi(2 * (*n_gas as i32 - 1)) * tracer.l2_norm().powi(2);
                out.scale(rest);
                let m = out.dim() as u128;
                cap.check(m * m)?;
                Ok(out)
            }
        }
    }

    /// `q_ref tr_{x, y_2..y_N}(|Lambda| |Psi><Psi|) q_ref` with
    /// `q_ref = 1 - |phi^><phi^|`, `phi^ = phi_ref / |Lambda|^{1/2}`.
    pub fn excitation_density_matrix(
        &self,
        phi_ref: &Field,
        lambda_vol: f64,
        cap: MemoryCap,
    ) -> Result<DensityMatrix> {
        let phi_hat = phi_ref.scaled(1.0 / lambda_vol.sqrt());
        let deviation = phi_hat.normalization_defect();
        if deviation > REF_NORM_TOL {
            return Err(Error::NotNormalized { deviation });
        }
        let mut gamma = self.one_body_density(cap)?;
        gamma.scale(lambda_vol);
        gamma.complement_sandwich(&phi_hat)
    }
}

/// Marginal of `weights` on slot `s` of an `N+1`-slot tensor with `m`
/// samples per slot.
fn slot_marginal(weights: &[f64], m: usize, n_gas: usize, s: usize) -> Vec<f64> {
    let inner = m.pow((n_gas - s) as u32);
    let mut out = vec![0.0; m];
    for chunk in weights.chunks_exact(m * inner) {
        for (o, row) in out.iter_mut().zip(chunk.chunks_exact(inner)) {
            *o += row.iter().sum::<f64>();
        }
    }
    out
}

/// Joint marginal of the tracer and gas slot `s`, row-major in the tracer
/// index.
fn pair_marginal(weights: &[f64], m: usize, n_gas: usize, s: usize) -> Vec<f64> {
    let gas_len = m.pow(n_gas as u32);
    let mut out = Vec::with_capacity(m * m);
    for block in weights.chunks_exact(gas_len) {
        let inner = m.pow((n_gas - s) as u32);
        let mut row = vec![0.0; m];
        for chunk in block.chunks_exact(m * inner) {
            for (o, r) in row.iter_mut().zip(chunk.chunks_exact(inner)) {
                *o += r.iter().sum::<f64>();
            }
        }
        out.extend(row);
    }
    out
}

/// Reduced one-body density matrix of gas slot 1 of a tensor field.
pub fn one_body_density(psi: &ManyBodyField, cap: MemoryCap) -> Result<DensityMatrix> {
    if psi.n_gas() < 1 {
        return Err(Error::InvalidConfig("no gas particle to keep".into()));
    }
    let grid = *psi.grid();
    let m = grid.len();
    let mut out = DensityMatrix::zeros(grid, cap)?;
    let inner = m.pow((psi.n_gas() - 1) as u32);
    let traced = grid.cell_volume().powi(psi.n_gas() as i32);
    let entries = out.entries_mut();
    for block in psi.values().chunks_exact(m * inner) {
        for y in 0..m {
            let a = &block[y * inner..(y + 1) * inner];
            for yp in y..m {
                let b = &block[yp * inner..(yp + 1) * inner];
                let s: C64 = a.iter().zip(b).map(|(u, v)| u * v.conj()).sum();
                entries[y * m + yp] += s;
            }
        }
    }
    for y in 0..m {
        for yp in y..m {
            let v = entries[y * m + yp] * traced;
            entries[y * m + yp] = v;
            entries[yp * m + y] = v.conj();
        }
    }
    Ok(out)
}
