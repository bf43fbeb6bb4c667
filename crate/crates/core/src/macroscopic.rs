//! Effective dynamics: free reference field, excitation field and classical
//! tracers.
//!
//! ```text
//! i d/dt phi_ref = -Delta phi_ref
//! i d/dt eps     = (-Delta + U) eps + S,   U(y) = sum_k W(X_k - y)
//! X_k''          = -grad V(X_k) - Re (grad W * (|eps|^2 + 2 conj(phi_ref) eps))(X_k)
//!                  - sum_{j != k} grad I(X_k - X_j)
//! ```
//!
//! with `S = U phi_ref`, or `S(y) = sum_k W(X_k - y) phi_ref(X_k)` in the
//! variant that freezes the reference field at the tracer.

use alloc::vec::Vec;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

use crate::fft::{self, FftPlan};
use crate::field::{convolve_with, free_multiplier, Field, Grid, Point, MAX_DIM};
use crate::model::{bump_at_displacement, BumpSpec, ModelConfig};
use crate::{Error, Result, C64};

/// How the convolution force is evaluated at off-grid tracer positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForceSampling {
    /// FFT convolution on the grid, then multilinear interpolation.
    #[default]
    Interpolated,
    /// Direct quadrature `h^d sum_y grad W(X - y) g(y)`.
    Direct,
}

/// Exact free step of the reference field, the multiplier `exp(-i dt |k|^2)`.
pub fn propagate_phi_ref(phi_ref: &Field, dt: f64) -> Field {
    phi_ref.free_evolved(dt)
}

#[derive(Debug, Clone)]
pub struct MacroModel {
    grid: Grid,
    dt: f64,
    v: BumpSpec,
    w: BumpSpec,
    pair: BumpSpec,
    source_at_tracer: bool,
    sampling: ForceSampling,
    plan: FftPlan,
    kinetic_half: Vec<C64>,
    free_full: Vec<C64>,
    /// Components of `grad W` sampled around the origin.
    grad_w: Vec<Field>,
}

/// Running suprema of the measured quantities entering the a-priori bounds
/// on `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundTracker {
    /// `sup_s max_y |phi_ref,s(y)|`.
    pub c_ref: f64,
    /// `sup_s ||U_s||_2`.
    pub u_l2: f64,
    /// `sup_s ||U_s||_1`.
    pub u_l1: f64,
}

impl BoundTracker {
    fn observe(&mut self, phi_ref: &Field, u: &Field) {
        self.c_ref = self.c_ref.max(phi_ref.linf_norm());
        self.u_l2 = self.u_l2.max(u.l2_norm());
        self.u_l1 = self.u_l1.max(u.l1_norm());
    }

    /// Right-hand side of `||eps_t||_2 <= t ||U||_2 C_ref`.
    pub fn eps_bound(&self, t: f64) -> f64 {
        t * self.u_l2 * self.c_ref
    }

    /// Right-hand side of
    /// `|<phi_ref/|Lambda|^{1/2}, eps_t>| <= t/|Lambda|^{1/2} (C_ref ||U||_2 C_eps + C_ref^2 ||U||_1)`.
    pub fn overlap_bound(&self, t: f64, lambda_vol: f64) -> f64 {
        let c_eps = self.eps_bound(t);
        t / lambda_vol.sqrt() * (self.c_ref * self.u_l2 * c_eps + self.c_ref * self.c_ref * self.u_l1)
    }
}

#[derive(Debug, Clone)]
pub struct MacroState {
    positions: Vec<Point>,
    velocities: Vec<Point>,
    eps: Field,
    phi_ref: Field,
    t: f64,
    forces: Vec<Point>,
    bounds: BoundTracker,
}

/// Monitoring scalars for the effective system.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub eps_l2: f64,
    /// `|F|` per tracer.
    pub force_norms: Vec<f64>,
    /// `<phi_ref / |Lambda|^{1/2}, eps>`.
    pub overlap: C64,
}

impl MacroModel {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let grid = cfg.spatial_grid()?;
        Ok(Self::from_parts(
            grid,
            cfg.dt,
            cfg.potentials.v,
            cfg.potentials.w,
            cfg.pair_potential(),
            cfg.variant.inhomogeneity_at_x,
        ))
    }

    pub fn from_parts(grid: Grid, dt: f64, v: BumpSpec, w: BumpSpec, pair: BumpSpec, source_at_tracer: bool) -> Self {
        let origin = [0.0; MAX_DIM];
        let grad_w = (0..grid.dim())
            .map(|a| {
                Field::from_fn(grid, |p| C64::new(w.grad(&grid.min_image_point(&sub(p, &origin)))[a], 0.0))
            })
            .collect();
        Self {
            grid,
            dt,
            v,
            w,
            pair,
            source_at_tracer,
            sampling: ForceSampling::default(),
            plan: FftPlan::new(grid.n()),
            kinetic_half: free_multiplier(&grid, 0.5 * dt),
            free_full: free_multiplier(&grid, dt),
            grad_w,
        }
    }

    pub fn with_sampling(mut self, sampling: ForceSampling) -> Self {
        self.sampling = sampling;
        self
    }

    /// Same model with a different time step.
    pub fn with_dt(&self, dt: f64) -> Self {
        let mut out = self.clone();
        out.dt = dt;
        out.kinetic_half = free_multiplier(&self.grid, 0.5 * dt);
        out.free_full = free_multiplier(&self.grid, dt);
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sampling(&self) -> ForceSampling {
        self.sampling
    }

    /// `U(y) = sum_k W(X_k - y)`.
    pub fn source_potential(&self, positions: &[Point]) -> Field {
        let grid = self.grid;
        Field::from_fn(grid, |y| {
            let u: f64 = positions.iter().map(|x| bump_at_displacement(&grid, &self.w, y, x)).sum();
            C64::new(u, 0.0)
        })
    }

    fn source(&self, positions: &[Point], phi_ref: &Field) -> Field {
        let grid = self.grid;
        if self.source_at_tracer {
            let at: Vec<C64> = positions.iter().map(|x| phi_ref.sample(x)).collect();
            Field::from_fn(grid, |y| {
                positions
                    .iter()
                    .zip(&at)
                    .map(|(x, f)| f * bump_at_displacement(&grid, &self.w, y, x))
                    .sum()
            })
        } else {
            let u = self.source_potential(positions);
            let values = u.values().iter().zip(phi_ref.values()).map(|(a, b)| a * b).collect();
            Field::from_values(grid, values).unwrap_or_else(|_| Field::zeros(grid))
        }
    }

    /// Force on every tracer.
    pub fn forces(&self, positions: &[Point], eps: &Field, phi_ref: &Field) -> Vec<Point> {
        let d = self.grid.dim();
        let coupled = !self.w.is_zero();
        let density = coupled.then(|| {
            let values = eps
                .values()
                .iter()
                .zip(phi_ref.values())
                .map(|(e, f)| C64::new(e.norm_sqr() + 2.0 * (f.conj() * e).re, 0.0))
                .collect();
            Field::from_values(self.grid, values).unwrap_or_else(|_| Field::zeros(self.grid))
        });
        let convolved: Option<Vec<Field>> = match (&density, self.sampling) {
            (Some(g), ForceSampling::Interpolated) => Some(
                self.grad_w
                    .iter()
                    .map(|gw| convolve_with(&self.plan, gw, g).unwrap_or_else(|_| Field::zeros(self.grid)))
                    .collect(),
            ),
            _ => None,
        };
        positions
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let mut f = [0.0; MAX_DIM];
                let gv = self.v.grad(x);
                for a in 0..d {
                    f[a] -= gv[a];
                }
                if let Some(g) = &density {
                    let field_force = match &convolved {
                        Some(conv) => {
                            let mut out = [0.0; MAX_DIM];
                            for a in 0..d {
                                out[a] = conv[a].sample(x).re;
                            }
                            out
                        }
                        None => self.direct_convolution(x, g),
                    };
                    for a in 0..d {
                        f[a] -= field_force[a];
                    }
                }
                if !self.pair.is_zero() {
                    for (j, y) in positions.iter().enumerate() {
                        if j == k {
                            continue;
                        }
                        let gi = self.pair.grad(&self.grid.min_image_point(&sub(x, y)));
                        for a in 0..d {
                            f[a] -= gi[a];
                        }
                    }
                }
                f
            })
            .collect()
    }

    fn direct_convolution(&self, x: &Point, g: &Field) -> Point {
        let d = self.grid.dim();
        let h = self.grid.cell_volume();
        let mut out = [0.0; MAX_DIM];
        for (idx, gv) in g.values().iter().enumerate() {
            if gv.re == 0.0 {
                continue;
            }
            let y = self.grid.point(idx);
            let gw = self.w.grad(&self.grid.min_image_point(&sub(x, &y)));
            for a in 0..d {
                out[a] += h * gw[a] * gv.re;
            }
        }
        out
    }

    fn check_inside(&self, positions: &[Point], t: f64) -> Result<()> {
        let half = 0.5 * self.grid.box_len();
        for (k, x) in positions.iter().enumerate() {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
            if x[..self.grid.dim()].iter().any(|v| v.abs() + self.w.radius >= half) {
                return Err(Error::TracerEscaped { tracer: k, t });
            }
        }
        Ok(())
    }

    fn free_step(&self, f: &mut Field, mult: &[C64]) {
        let rank = self.grid.dim();
        let axes: Vec<&[C64]> = (0..rank).map(|_| mult).collect();
        fft::apply_separable_multiplier(&self.plan, f.values_mut(), rank, &axes);
    }

    /// One kick-drift-field-kick step.
    pub fn step(&self, s: &mut MacroState) -> Result<()> {
        let dt = self.dt;
        let d = self.grid.dim();
        let old_positions = s.positions.clone();
        for ((x, v), f) in s.positions.iter_mut().zip(s.velocities.iter_mut()).zip(&s.forces) {
            for a in 0..d {
                v[a] += 0.5 * dt * f[a];
                x[a] += dt * v[a];
            }
        }
        let t_new = s.t + dt;
        self.check_inside(&s.positions, t_new)?;

        if !self.w.is_zero() {
            let mid: Vec<Point> = old_positions
                .iter()
                .zip(&s.positions)
                .map(|(a, b)| {
                    let mut m = [0.0; MAX_DIM];
                    for i in 0..d {
                        m[i] = 0.5 * (a[i] + b[i]);
                    }
                    m
                })
                .collect();
            let u_mid = self.source_potential(&mid);
            let s_old = self.source(&old_positions, &s.phi_ref);
            let half = C64::new(0.0, -0.5 * dt);
            for (e, src) in s.eps.values_mut().iter_mut().zip(s_old.values()) {
                *e += half * src;
            }
            self.free_step(&mut s.eps, &self.kinetic_half);
            for (e, u) in s.eps.values_mut().iter_mut().zip(u_mid.values()) {
                *e *= C64::from_polar(1.0, -dt * u.re);
            }
            self.free_step(&mut s.eps, &self.kinetic_half);
        }
        self.free_step(&mut s.phi_ref, &self.free_full);
        if !self.w.is_zero() {
            let s_new = self.source(&s.positions, &s.phi_ref);
            let half = C64::new(0.0, -0.5 * dt);
            for (e, src) in s.eps.values_mut().iter_mut().zip(s_new.values()) {
                *e += half * src;
            }
        }
        if s.eps.values().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite);
        }

        s.forces = self.forces(&s.positions, &s.eps, &s.phi_ref);
        for (v, f) in s.velocities.iter_mut().zip(&s.forces) {
            for a in 0..d {
                v[a] += 0.5 * dt * f[a];
            }
        }
        s.t = t_new;
        let u = self.source_potential(&s.positions);
        s.bounds.observe(&s.phi_ref, &u);
        Ok(())
    }

    pub fn advance(&self, s: &mut MacroState, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(s)?;
        }
        Ok(())
    }
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

impl MacroState {
    /// Initial state with `eps = 0`.
    pub fn new(model: &MacroModel, positions: Vec<Point>, velocities: Vec<Point>, phi_ref: Field) -> Result<Self> {
        if positions.is_empty() || positions.len() != velocities.len() {
            return Err(Error::SizeMismatch { expected: positions.len(), found: velocities.len() });
        }
        if *phi_ref.grid() != model.grid {
            return Err(Error::GridMismatch);
        }
        model.check_inside(&positions, 0.0)?;
        let eps = Field::zeros(model.grid);
        let forces = model.forces(&positions, &eps, &phi_ref);
        let mut bounds = BoundTracker::default();
        bounds.observe(&phi_ref, &model.source_potential(&positions));
        Ok(Self { positions, velocities, eps, phi_ref, t: 0.0, forces, bounds })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Point] {
        &self.velocities
    }

    pub fn eps(&self) -> &Field {
        &self.eps
    }

    pub fn phi_ref(&self) -> &Field {
        &self.phi_ref
    }

    pub fn forces(&self) -> &[Point] {
        &self.forces
    }

    pub fn bounds(&self) -> &BoundTracker {
        &self.bounds
    }

    pub fn energy_report(&self, lambda_vol: f64) -> EnergyReport {
        let phi_hat = self.phi_ref.scaled(1.0 / lambda_vol.sqrt());
        EnergyReport {
            eps_l2: self.eps.l2_norm(),
            force_norms: self.forces.iter().map(|f| crate::field::norm_of(f)).collect(),
            overlap: phi_hat.inner(&self.eps).unwrap_or(C64::new(0.0, 0.0)),
        }
    }

    /// Replaces the excitation field, e.g. to probe diagnostics.
    pub fn set_eps(&mut self, eps: Field) {
        self.eps = eps;
    }

    /// Shifts tracer `k`, e.g. to probe diagnostics.
    pub fn shift_tracer(&mut self, k: usize, by: &Point) {
        for a in 0..MAX_DIM {
            self.positions[k][a] += by[a];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::model::build_gas_state;
    use crate::model::tests::config;

    fn plateau(grid: Grid, half: f64) -> Field {
        Field::from_fn(grid, |p| C64::new(crate::model::cube_profile(p[0], 2.0 * half), 0.0))
    }

    fn coupled_model(sampling: ForceSampling, dt: f64) -> (MacroModel, Field) {
        let grid = Grid::new(1, 256, 32.0).unwrap();
        let model = MacroModel::from_parts(
            grid,
            dt,
            BumpSpec { amplitude: 2.0, radius: 6.0 },
            BumpSpec { amplitude: 1.5, radius: 2.0 },
            BumpSpec::ZERO,
            false,
        )
        .with_sampling(sampling);
        (model, plateau(grid, 6.0))
    }

    #[test]
    fn reference_propagation_is_exact_and_unitary() {
        let grid = Grid::new(1, 64, 10.0).unwrap();
        let c = Field::from_fn(grid, |_| C64::new(0.7, -0.2));
        assert!(propagate_phi_ref(&c, 0.3).sub(&c).unwrap().linf_norm() < 1e-14);
        let k = grid.frequency(5);
        let wave = Field::from_fn(grid, |p| C64::from_polar(1.0, k * p[0]));
        let dt = 0.01;
        let next = propagate_phi_ref(&wave, dt);
        for (a, b) in next.values().iter().zip(wave.values()) {
            assert!((a - b * C64::from_polar(1.0, -k * k * dt)).norm() < 1e-12);
        }
        let mut f = plateau(grid, 2.0);
        let n0 = f.l2_norm();
        for _ in 0..1000 {
            f = propagate_phi_ref(&f, dt);
        }
        assert!((f.l2_norm() - n0).abs() < 1e-10);
    }

    #[test]
    fn free_motion_without_potentials() {
        let grid = Grid::new(1, 64, 20.0).unwrap();
        let model = MacroModel::from_parts(grid, 0.01, BumpSpec::ZERO, BumpSpec::ZERO, BumpSpec::ZERO, false);
        let mut s = MacroState::new(&model, vec![[-1.0, 0.0, 0.0]], vec![[0.8, 0.0, 0.0]], plateau(grid, 3.0)).unwrap();
        model.advance(&mut s, 500).unwrap();
        assert!((s.positions()[0][0] - (-1.0 + 0.8 * s.t())).abs() < 1e-12);
        assert!(s.eps().values().iter().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn uncoupled_tracer_solves_newton_in_v() {
        let grid = Grid::new(1, 64, 20.0).unwrap();
        let v = BumpSpec { amplitude: 1.0, radius: 4.0 };
        let dt = 1e-3;
        let model = MacroModel::from_parts(grid, dt, v, BumpSpec::ZERO, BumpSpec::ZERO, false);
        let mut s = MacroState::new(&model, vec![[1.0, 0.0, 0.0]], vec![[0.0; 3]], plateau(grid, 3.0)).unwrap();
        model.advance(&mut s, 2000).unwrap();
        // classical RK4 on x'' = -V'(x) as the oracle
        let acc = |x: f64| -v.grad(&[x, 0.0, 0.0])[0];
        let (mut x, mut u) = (1.0f64, 0.0f64);
        let h = 1e-4;
        for _ in 0..20_000 {
            let (k1x, k1u) = (u, acc(x));
            let (k2x, k2u) = (u + 0.5 * h * k1u, acc(x + 0.5 * h * k1x));
            let (k3x, k3u) = (u + 0.5 * h * k2u, acc(x + 0.5 * h * k2x));
            let (k4x, k4u) = (u + h * k3u, acc(x + h * k3x));
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        }
        assert!((s.positions()[0][0] - x).abs() < 1e-6);
        assert!((s.velocities()[0][0] - u).abs() < 1e-6);
        assert!(s.eps().l2_norm() == 0.0);
        assert_eq!(s.energy_report(1.0).overlap, C64::new(0.0, 0.0));
    }

    #[test]
    fn symmetric_data_keeps_tracer_at_rest() {
        let cfg = config(1, 8, 4.0, 128, 24.0);
        let gas = build_gas_state(&cfg).unwrap();
        let grid = *gas.phi0.grid();
        let model = MacroModel::from_parts(
            grid,
            2e-3,
            BumpSpec { amplitude: 1.0, radius: 3.0 },
            BumpSpec { amplitude: 1.0, radius: 2.0 },
            BumpSpec::ZERO,
            false,
        );
        let mut s = MacroState::new(&model, vec![[0.0; 3]], vec![[0.0; 3]], gas.phi_ref0).unwrap();
        model.advance(&mut s, 300).unwrap();
        assert!(s.positions()[0][0].abs() < 1e-8);
        assert!(s.eps().l2_norm() > 1e-3);
    }

    #[test]
    fn excitation_obeys_a_priori_bounds() {
        let (model, phi_ref) = coupled_model(ForceSampling::Interpolated, 2e-3);
        let lambda = 12.0;
        let mut s = MacroState::new(&model, vec![[1.0, 0.0, 0.0]], vec![[0.5, 0.0, 0.0]], phi_ref).unwrap();
        assert_eq!(s.energy_report(lambda).eps_l2, 0.0);
        for _ in 0..50 {
            model.advance(&mut s, 10).unwrap();
            let r = s.energy_report(lambda);
            assert!(r.eps_l2 <= s.bounds().eps_bound(s.t()) + 1e-6);
            assert!(r.overlap.norm() <= s.bounds().overlap_bound(s.t(), lambda) + 1e-6);
        }
    }

    fn richardson(sampling: ForceSampling) -> (f64, f64) {
        let t_end = 1.0;
        let run = |steps: usize| {
            let (model, phi_ref) = coupled_model(sampling, t_end / steps as f64);
            let mut s = MacroState::new(&model, vec![[0.7, 0.0, 0.0]], vec![[1.1, 0.0, 0.0]], phi_ref).unwrap();
            model.advance(&mut s, steps).unwrap();
            (s.positions()[0][0], s.eps().l2_norm())
        };
        let (a, b, c) = (run(50), run(100), run(200));
        let order = |x: f64, y: f64, z: f64| ((x - y).abs() / (y - z).abs()).log2();
        (order(a.0, b.0, c.0), order(a.1, b.1, c.1))
    }

    #[test]
    fn coupled_step_is_second_order() {
        for sampling in [ForceSampling::Interpolated, ForceSampling::Direct] {
            let (px, pe) = richardson(sampling);
            assert!((px - 2.0).abs() < 0.3 && (pe - 2.0).abs() < 0.3, "{sampling:?}: X {px}, eps {pe}");
        }
    }

    #[test]
    fn interpolated_and_direct_forces_agree() {
        let (model, phi_ref) = coupled_model(ForceSampling::Interpolated, 1e-3);
        let direct = model.clone().with_sampling(ForceSampling::Direct);
        let mut s = MacroState::new(&model, vec![[0.33, 0.0, 0.0]], vec![[1.0, 0.0, 0.0]], phi_ref).unwrap();
        model.advance(&mut s, 200).unwrap();
        let force = |m: &MacroModel, x: f64| m.forces(&[[x, 0.0, 0.0]], s.eps(), s.phi_ref())[0][0];
        let h = model.grid().spacing();
        let node = model.grid().coord(137);
        assert!((force(&model, node) - force(&direct, node)).abs() < 1e-12);
        // off the grid the gap is the linear interpolation error, h^2/8 max |F''|
        let x = node + 0.37 * h;
        let curvature = [node - h, node, node + h, node + 2.0 * h]
            .windows(3)
            .map(|w| (force(&direct, w[0]) - 2.0 * force(&direct, w[1]) + force(&direct, w[2])).abs() / (h * h))
            .fold(0.0, f64::max);
        let gap = (force(&model, x) - force(&direct, x)).abs();
        assert!(gap <= 1.5 * h * h / 8.0 * curvature, "{gap} vs {curvature}");
    }

    #[test]
    fn identical_tracers_move_together() {
        let grid = Grid::new(1, 128, 24.0).unwrap();
        let w = BumpSpec { amplitude: 1.0, radius: 2.0 };
        let v = BumpSpec { amplitude: 1.0, radius: 5.0 };
        let many = MacroModel::from_parts(grid, 2e-3, v, w, BumpSpec::ZERO, false);
        let phi_ref = plateau(grid, 4.0);
        let start = [1.0, 0.0, 0.0];
        let mut s = MacroState::new(&many, vec![start; 3], vec![[0.2, 0.0, 0.0]; 3], phi_ref.clone()).unwrap();
        let uncoupled = MacroModel::from_parts(grid, 2e-3, v, BumpSpec::ZERO, BumpSpec::ZERO, false);
        let mut a = MacroState::new(&uncoupled, vec![start; 3], vec![[0.2, 0.0, 0.0]; 3], phi_ref.clone()).unwrap();
        let mut b = MacroState::new(&uncoupled, vec![start], vec![[0.2, 0.0, 0.0]], phi_ref).unwrap();
        for _ in 0..200 {
            many.step(&mut s).unwrap();
            uncoupled.step(&mut a).unwrap();
            uncoupled.step(&mut b).unwrap();
            let p = s.positions();
            assert!(p.iter().all(|x| (x[0] - p[0][0]).abs() < 1e-9));
            assert!(a.positions().iter().all(|x| (x[0] - b.positions()[0][0]).abs() < 1e-9));
        }
    }

    #[test]
    fn pair_potential_repels() {
        let grid = Grid::new(1, 64, 24.0).unwrap();
        let i = BumpSpec { amplitude: 1.0, radius: 2.0 };
        let model = MacroModel::from_parts(grid, 1e-3, BumpSpec::ZERO, BumpSpec::ZERO, i, false);
        let mut s = MacroState::new(
            &model,
            vec![[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]],
            vec![[0.0; 3]; 2],
            plateau(grid, 3.0),
        )
        .unwrap();
        model.advance(&mut s, 500).unwrap();
        let p = s.positions();
        assert!(p[0][0] < -0.5 && p[1][0] > 0.5);
        assert!((p[0][0] + p[1][0]).abs() < 1e-12);
    }

    #[test]
    fn source_at_tracer_matches_standard_for_flat_reference() {
        let grid = Grid::new(1, 128, 24.0).unwrap();
        let v = BumpSpec { amplitude: 1.0, radius: 5.0 };
        let w = BumpSpec { amplitude: 1.0, radius: 2.0 };
        let flat = Field::from_fn(grid, |_| C64::new(1.0, 0.0));
        let a = MacroModel::from_parts(grid, 2e-3, v, w, BumpSpec::ZERO, false);
        let b = MacroModel::from_parts(grid, 2e-3, v, w, BumpSpec::ZERO, true);
        let mut sa = MacroState::new(&a, vec![[1.0, 0.0, 0.0]], vec![[0.3, 0.0, 0.0]], flat.clone()).unwrap();
        let mut sb = MacroState::new(&b, vec![[1.0, 0.0, 0.0]], vec![[0.3, 0.0, 0.0]], flat).unwrap();
        a.advance(&mut sa, 100).unwrap();
        b.advance(&mut sb, 100).unwrap();
        assert!(sa.eps().sub(sb.eps()).unwrap().l2_norm() < 1e-12);
        assert!((sa.positions()[0][0] - sb.positions()[0][0]).abs() < 1e-12);
    }

    #[test]
    fn escaping_tracer_is_reported() {
        let grid = Grid::new(1, 64, 10.0).unwrap();
        let model = MacroModel::from_parts(
            grid,
            0.01,
            BumpSpec::ZERO,
            BumpSpec { amplitude: 1.0, radius: 1.0 },
            BumpSpec::ZERO,
            false,
        );
        let mut s = MacroState::new(&model, vec![[3.5, 0.0, 0.0]], vec![[2.0, 0.0, 0.0]], plateau(grid, 1.0)).unwrap();
        let err = model.advance(&mut s, 100).unwrap_err();
        assert!(matches!(err, Error::TracerEscaped { tracer: 0, .. }));
    }
}
