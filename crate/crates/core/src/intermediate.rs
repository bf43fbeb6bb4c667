//! One-body gas field driven by a prescribed tracer path,
//! `i d/dt phi = (-Delta + sum_k W(X_k(t) - y)) phi`, next to its free
//! evolution.

use alloc::vec::Vec;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

use crate::fft::{self, FftPlan};
use crate::field::{free_multiplier, Field, Grid, Point, MAX_DIM};
use crate::model::{bump_at_displacement, BumpSpec};
use crate::{Error, Result, C64};

/// Tracer positions sampled at increasing times, linearly interpolated in
/// between.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DrivenTrajectory {
    times: Vec<f64>,
    positions: Vec<Vec<Point>>,
}

impl DrivenTrajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample; times must increase and the tracer count stays fixed.
    pub fn push(&mut self, t: f64, positions: Vec<Point>) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::TimeMismatch { expected: last, found: t });
            }
            if positions.len() != self.positions[0].len() {
                return Err(Error::SizeMismatch { expected: self.positions[0].len(), found: positions.len() });
            }
        }
        self.times.push(t);
        self.positions.push(positions);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Positions at `t`, or `OutsideTrajectory` when `t` is not covered.
    pub fn at(&self, t: f64) -> Result<Vec<Point>> {
        let outside = || Error::OutsideTrajectory {
            t,
            start: self.times.first().copied().unwrap_or(f64::NAN),
            end: self.times.last().copied().unwrap_or(f64::NAN),
        };
        let (&first, &last) = match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(outside()),
        };
        // accumulated step times may overshoot an endpoint by rounding
        let slack = 1e-9 * (last - first).abs().max(1.0);
        if !(t >= first - slack && t <= last + slack) {
            return Err(outside());
        }
        let t = t.clamp(first, last);
        let j = self.times.partition_point(|&s| s <= t);
        if j == self.times.len() {
            return Ok(self.positions[j - 1].clone());
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let s = (t - t0) / (t1 - t0);
        Ok(self.positions[j - 1]
            .iter()
            .zip(&self.positions[j])
            .map(|(a, b)| {
                let mut p = [0.0; MAX_DIM];
                for i in 0..MAX_DIM {
                    p[i] = (1.0 - s) * a[i] + s * b[i];
                }
                p
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct IntermediateModel {
    grid: Grid,
    w: BumpSpec,
    dt: f64,
    plan: FftPlan,
    kinetic_half: Vec<C64>,
    free_full: Vec<C64>,
}

/// Driven field, its free counterpart, and running suprema used by the
/// Gronwall comparison.
#[derive(Debug, Clone)]
pub struct IntermediateState {
    phi: Field,
    free: Field,
    t: f64,
    sup_w_l2: f64,
    sup_w_linf: f64,
    sup_free_linf: f64,
}

/// `||phi_t - e^{i t Delta} phi_0||_2` together with `||e^{i t Delta} phi_0||_inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HartreeGap {
    pub diff_l2: f64,
    pub free_linf: f64,
}

impl IntermediateModel {
    pub fn new(grid: Grid, w: BumpSpec, dt: f64) -> Self {
        Self {
            grid,
            w,
            dt,
            plan: FftPlan::new(grid.n()),
            kinetic_half: free_multiplier(&grid, 0.5 * dt),
            free_full: free_multiplier(&grid, dt),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn potential(&self, positions: &[Point]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|idx| {
                let y = self.grid.point(idx);
                positions.iter().map(|x| bump_at_displacement(&self.grid, &self.w, &y, x)).sum()
            })
            .collect()
    }

    fn free_step(&self, f: &mut Field, mult: &[C64]) {
        let rank = self.grid.dim();
        let axes: Vec<&[C64]> = (0..rank).map(|_| mult).collect();
        fft::apply_separable_multiplier(&self.plan, f.values_mut(), rank, &axes);
    }

    /// Strang step with the driver evaluated at the midpoint time.
    pub fn step(&self, s: &mut IntermediateState, driver: &DrivenTrajectory) -> Result<()> {
        let mid = driver.at(s.t + 0.5 * self.dt)?;
        driver.at(s.t + self.dt)?;
        let u = self.potential(&mid);
        self.free_step(&mut s.phi, &self.kinetic_half);
        for (v, w) in s.phi.values_mut().iter_mut().zip(&u) {
            *v *= C64::from_polar(1.0, -self.dt * w);
        }
        self.free_step(&mut s.phi, &self.kinetic_half);
        self.free_step(&mut s.free, &self.free_full);
        s.t += self.dt;
        let h = self.grid.cell_volume();
        s.sup_w_l2 = s.sup_w_l2.max((h * u.iter().map(|w| w * w).sum::<f64>()).sqrt());
        s.sup_w_linf = s.sup_w_linf.max(u.iter().fold(0.0, |m, w| m.max(w.abs())));
        s.sup_free_linf = s.sup_free_linf.max(s.free.linf_norm());
        if s.phi.values().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn advance(&self, s: &mut IntermediateState, driver: &DrivenTrajectory, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(s, driver)?;
        }
        Ok(())
    }
}

impl IntermediateState {
    pub fn new(phi0: Field) -> Self {
        let sup_free_linf = phi0.linf_norm();
        Self { free: phi0.clone(), phi: phi0, t: 0.0, sup_w_l2: 0.0, sup_w_linf: 0.0, sup_free_linf }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }

    pub fn free(&self) -> &Field {
        &self.free
    }

    pub fn hartree_vs_free(&self) -> HartreeGap {
        HartreeGap {
            diff_l2: self.phi.sub(&self.free).map(|d| d.l2_norm()).unwrap_or(f64::NAN),
            free_linf: self.free.linf_norm(),
        }
    }

    /// `sup ||W(X_s - .)||_2` over the potentials applied so far.
    pub fn sup_w_l2(&self) -> f64 {
        self.sup_w_l2
    }

    pub fn sup_w_linf(&self) -> f64 {
        self.sup_w_linf
    }

    pub fn sup_free_linf(&self) -> f64 {
        self.sup_free_linf
    }

    /// `diff <= e^{||W||_inf t} t ||W||_2 sup ||free||_inf`, up to `1e-6`.
    pub fn gronwall_holds(&self) -> bool {
        let gap = self.hartree_vs_free();
        let bound = (self.sup_w_linf * self.t).exp() * self.t * self.sup_w_l2 * self.sup_free_linf;
        gap.diff_l2 <= bound + 1e-6
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn packet(grid: Grid) -> Field {
        Field::from_fn(grid, |p| C64::from_polar((-p[0] * p[0] / 2.0).exp(), 0.4 * p[0])).normalized()
    }

    fn resting(t_end: f64, x: f64) -> DrivenTrajectory {
        let mut d = DrivenTrajectory::new();
        d.push(0.0, vec![[x, 0.0, 0.0]]).unwrap();
        d.push(t_end, vec![[x, 0.0, 0.0]]).unwrap();
        d
    }

    #[test]
    fn driver_interpolates_and_rejects_outside() {
        let mut d = DrivenTrajectory::new();
        d.push(0.0, vec![[0.0, 0.0, 0.0]]).unwrap();
        d.push(1.0, vec![[2.0, -1.0, 0.0]]).unwrap();
        assert_eq!(d.at(0.25).unwrap()[0], [0.5, -0.25, 0.0]);
        assert_eq!(d.at(1.0).unwrap()[0], [2.0, -1.0, 0.0]);
        assert!(matches!(d.at(1.5), Err(Error::OutsideTrajectory { .. })));
        assert!(d.push(1.0, vec![[0.0; 3]]).is_err());
        assert!(d.push(2.0, vec![[0.0; 3]; 2]).is_err());
    }

    #[test]
    fn uncoupled_field_is_free() {
        let grid = Grid::new(1, 128, 20.0).unwrap();
        let model = IntermediateModel::new(grid, BumpSpec::ZERO, 0.01);
        let mut s = IntermediateState::new(packet(grid));
        model.advance(&mut s, &resting(1.0, 0.0), 100).unwrap();
        let exact = packet(grid).free_evolved(s.t());
        assert!(s.phi().sub(&exact).unwrap().l2_norm() < 1e-12);
        assert!(s.hartree_vs_free().diff_l2 < 1e-12);
    }

    #[test]
    fn driven_step_is_unitary() {
        let grid = Grid::new(1, 128, 20.0).unwrap();
        let model = IntermediateModel::new(grid, BumpSpec { amplitude: 3.0, radius: 1.5 }, 1e-3);
        let mut d = DrivenTrajectory::new();
        for j in 0..=10 {
            let t = j as f64 * 0.1;
            d.push(t, vec![[(3.0 * t).sin(), 0.0, 0.0]]).unwrap();
        }
        let mut s = IntermediateState::new(packet(grid));
        model.advance(&mut s, &d, 1000).unwrap();
        assert!((s.phi().l2_norm() - 1.0).abs() < 1e-10);
        assert!(s.gronwall_holds());
        assert!(s.hartree_vs_free().diff_l2 > 1e-3);
        assert!(matches!(model.step(&mut s, &d), Err(Error::OutsideTrajectory { .. })));
    }

    #[test]
    fn stationary_driver_converges_at_second_order() {
        let grid = Grid::new(1, 128, 20.0).unwrap();
        let w = BumpSpec { amplitude: 2.0, radius: 2.0 };
        let run = |steps: usize| {
            let model = IntermediateModel::new(grid, w, 1.0 / steps as f64);
            let mut s = IntermediateState::new(packet(grid));
            model.advance(&mut s, &resting(1.0, 0.5), steps).unwrap();
            s.phi().clone()
        };
        let reference = run(6400);
        let e1 = run(100).sub(&reference).unwrap().l2_norm();
        let e2 = run(200).sub(&reference).unwrap().l2_norm();
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
        assert!(e2 < 1e-3);
    }
}
