use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

use super::{Direction, Grid, Point};
use crate::fft::{self, FftPlan};
use crate::{Error, Result, C64};

/// Complex one-particle field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<C64>,
}

/// First and second moments of a normalized wave function. Variances are
/// summed over axes, `<|x - <x>|^2>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean_x: Point,
    pub var_x: f64,
    pub mean_p: Point,
    pub var_p: f64,
}

/// Moments from unnormalized position weights (`|psi|^2` per sample) and
/// momentum weights (`|U_m|^2` per DFT mode). Positions use the grid
/// coordinates without wrapping, momenta the wrapped frequencies.
pub(crate) fn moments_from_weights(grid: &Grid, pos: &[f64], mom: &[f64]) -> Moments {
    let (mean_x, var_x) = weighted_moments(grid, pos, |idx| grid.point(idx));
    let (mean_p, var_p) = weighted_moments(grid, mom, |idx| grid.wavevector(idx));
    Moments { mean_x, var_x, mean_p, var_p }
}

fn weighted_moments(grid: &Grid, w: &[f64], at: impl Fn(usize) -> Point) -> (Point, f64) {
    let d = grid.dim();
    let total: f64 = w.iter().sum();
    let mut first = [0.0; 3];
    let mut second = 0.0;
    if total == 0.0 {
        return (first, 0.0);
    }
    for (idx, wi) in w.iter().enumerate() {
        let p = at(idx);
        for a in 0..d {
            first[a] += wi * p[a];
            second += wi * p[a] * p[a];
        }
    }
    first.iter_mut().for_each(|m| *m /= total);
    let var = second / total - first[..d].iter().map(|m| m * m).sum::<f64>();
    (first, var.max(0.0))
}

/// Norms reported for one-particle fields.
///
/// `fourier_l1` approximates the continuum `||f^||_1` with the convention
/// `f^(k) = (2 pi)^{-d/2} int f(x) e^{-ikx} dx` and mode spacing `(2 pi/L)^d`
/// as the measure on k-space. In terms of the unitary DFT `U` this is
/// `(2 pi)^{d/2} n^{-d/2} sum |U_m|`, and `linf <= (2 pi)^{-d/2} fourier_l1`
/// holds exactly on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    pub fourier_l1: f64,
    pub grad_linf: f64,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch { expected: grid.len(), found: values.len() });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&Point) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.norm()).sum::<f64>()
    }

    /// Scales to unit L² norm. A zero field is returned unchanged.
    pub fn normalized(mut self) -> Self {
        let norm = self.l2_norm();
        if norm > 0.0 {
            self.scale(1.0 / norm);
        }
        self
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// Conjugate-linear in `self`.
    pub fn inner(&self, other: &Field) -> Result<C64> {
        self.check_grid(other)?;
        let sum: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        Ok(sum * self.grid.cell_volume())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub(crate) fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }

    /// `| ||f||_2 - 1 |`, for precondition checks.
    pub fn normalization_defect(&self) -> f64 {
        (self.l2_norm() - 1.0).abs()
    }

    /// Unitary DFT over all axes.
    pub fn spectral_transform(&self, direction: Direction) -> Field {
        let plan = FftPlan::new(self.grid.n());
        self.spectral_transform_with(&plan, direction)
    }

    pub(crate) fn spectral_transform_with(&self, plan: &FftPlan, direction: Direction) -> Field {
        let mut out = self.clone();
        let rank = self.grid.dim();
        fft::unitary_transform(plan, &mut out.values, rank, 0..rank, direction == Direction::Inverse);
        out
    }

    /// Exact free evolution `e^{i Delta t} f`, the Fourier multiplier
    /// `exp(-i t |k|^2)`.
    pub fn free_evolved(&self, t: f64) -> Field {
        let plan = FftPlan::new(self.grid.n());
        let mult = free_multiplier(&self.grid, t);
        let mut out = self.clone();
        let rank = self.grid.dim();
        let axes: Vec<&[C64]> = (0..rank).map(|_| mult.as_slice()).collect();
        fft::apply_separable_multiplier(&plan, &mut out.values, rank, &axes);
        out
    }

    /// Spectral partial derivatives, one field per axis.
    pub fn gradient(&self) -> Vec<Field> {
        let plan = FftPlan::new(self.grid.n());
        let spectrum = self.spectral_transform_with(&plan, Direction::Forward);
        (0..self.grid.dim())
            .map(|axis| {
                let mut d = spectrum.clone();
                for (idx, v) in d.values.iter_mut().enumerate() {
                    let k = self.grid.wavevector(idx)[axis];
                    *v *= C64::new(0.0, k);
                }
                d.spectral_transform_with(&plan, Direction::Inverse)
            })
            .collect()
    }

    pub fn norms(&self) -> Norms {
        let plan = FftPlan::new(self.grid.n());
        let spectrum = self.spectral_transform_with(&plan, Direction::Forward);
        let grad_linf = if self.values.iter().all(|v| *v == C64::new(0.0, 0.0)) {
            0.0
        } else {
            gradient_magnitude_max(&self.gradient())
        };
        Norms {
            l2: self.l2_norm(),
            linf: self.linf_norm(),
            fourier_l1: self.fourier_measure() * spectrum.values.iter().map(|v| v.norm()).sum::<f64>(),
            grad_linf,
        }
    }

    /// `||(grad f)^||_1` with the same k-space measure as [`Norms::fourier_l1`].
    pub fn fourier_l1_gradient(&self) -> f64 {
        let spectrum = self.spectral_transform(Direction::Forward);
        let sum: f64 = spectrum
            .values
            .iter()
            .enumerate()
            .map(|(idx, v)| super::norm_of(&self.grid.wavevector(idx)) * v.norm())
            .sum();
        self.fourier_measure() * sum
    }

    fn fourier_measure(&self) -> f64 {
        let d = self.grid.dim() as i32;
        (2.0 * PI).powf(0.5 * d as f64) / (self.grid.n() as f64).powf(0.5 * d as f64)
    }

    pub fn moments(&self) -> Moments {
        let pos: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        let spectrum = self.spectral_transform(Direction::Forward);
        let mom: Vec<f64> = spectrum.values.iter().map(|v| v.norm_sqr()).collect();
        moments_from_weights(&self.grid, &pos, &mom)
    }

    /// Periodic multilinear interpolation at an off-grid point.
    pub fn sample(&self, p: &Point) -> C64 {
        self.grid
            .interpolation_stencil(p)
            .into_iter()
            .map(|(idx, w)| self.values[idx] * w)
            .sum()
    }

    /// Fraction of `||f||_2^2` within `width` of the box faces.
    pub fn boundary_mass(&self, width: f64) -> f64 {
        let half = 0.5 * self.grid.box_len() - width;
        let total: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let edge: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(idx, _)| {
                let p = self.grid.point(*idx);
                p[..self.grid.dim()].iter().any(|x| x.abs() > half)
            })
            .map(|(_, v)| v.norm_sqr())
            .sum();
        edge / total
    }
}

/// Per-axis multiplier `exp(-i t k^2) / n` for one unnormalized
/// forward/backward transform pair.
pub(crate) fn free_multiplier(grid: &Grid, t: f64) -> Vec<C64> {
    let n = grid.n() as f64;
    grid.frequencies().iter().map(|k| C64::from_polar(1.0 / n, -t * k * k)).collect()
}

pub(crate) fn gradient_magnitude_max(grad: &[Field]) -> f64 {
    let len = grad[0].values.len();
    (0..len)
        .map(|i| grad.iter().map(|g| g.values[i].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Periodic convolution `(f * g)(x) = h^d sum_y f(x - y) g(y)`, with `x - y`
/// taken modulo the box, computed with FFTs.
pub fn convolve(f: &Field, g: &Field) -> Result<Field> {
    f.check_grid(g)?;
    let grid = *f.grid();
    let plan = FftPlan::new(grid.n());
    convolve_with(&plan, f, g)
}

pub(crate) fn convolve_with(plan: &FftPlan, f: &Field, g: &Field) -> Result<Field> {
    f.check_grid(g)?;
    let grid = *f.grid();
    let rank = grid.dim();
    let n = grid.n();
    let mut a = f.values.clone();
    let mut b = g.values.clone();
    for axis in 0..rank {
        fft::for_each_line(&mut a, n, rank, axis, |l| plan.forward(l));
        fft::for_each_line(&mut b, n, rank, axis, |l| plan.forward(l));
    }
    // The origin sits at index n/2 on every axis, which is a shift by n/2:
    // a factor (-1)^m per axis on the spectrum.
    let scale = grid.cell_volume() / grid.len() as f64;
    for (idx, (x, y)) in a.iter_mut().zip(&b).enumerate() {
        let ix = grid.unravel(idx);
        let parity: usize = ix[..rank].iter().sum();
        let sign = if parity % 2 == 0 { scale } else { -scale };
        *x = *x * y * sign;
    }
    for axis in 0..rank {
        fft::for_each_line(&mut a, n, rank, axis, |l| plan.backward(l));
    }
    Ok(Field { grid, values: a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_field(grid: Grid, seed: u64) -> Field {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let values = (0..grid.len())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        Field::from_values(grid, values).unwrap()
    }

    fn gaussian(grid: Grid, center: f64, sigma: f64) -> Field {
        Field::from_fn(grid, |p| {
            let r2: f64 = p.iter().map(|x| (x - center) * (x - center)).sum();
            C64::new((-r2 / (4.0 * sigma * sigma)).exp(), 0.0)
        })
        .normalized()
    }

    #[test]
    fn constant_field_has_single_zero_mode() {
        for dim in 1..=3 {
            let grid = Grid::new(dim, 8, 3.0).unwrap();
            let f = Field::from_fn(grid, |_| C64::new(2.0, -1.0));
            let s = f.spectral_transform(Direction::Forward);
            assert!(s.values[0].norm() > 1.0);
            assert!(s.values[1..].iter().all(|v| v.norm() < 1e-12));
        }
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let grid = Grid::new(2, 16, 5.0).unwrap();
        let f = random_field(grid, 3);
        let back = f.spectral_transform(Direction::Forward).spectral_transform(Direction::Inverse);
        let err = back.sub(&f).unwrap().l2_norm() / f.l2_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn plane_wave_occupies_one_bin() {
        let grid = Grid::new(1, 32, 7.0).unwrap();
        let k1 = grid.frequency(3);
        let f = Field::from_fn(grid, |p| C64::from_polar(1.0, k1 * p[0]));
        let s = f.spectral_transform(Direction::Forward);
        for (j, v) in s.values.iter().enumerate() {
            if j == 3 {
                assert!(v.norm() > 1.0);
            } else {
                assert!(v.norm() < 1e-12, "bin {j}: {v}");
            }
        }
    }

    #[test]
    fn inner_product_properties() {
        let grid = Grid::new(1, 64, 10.0).unwrap();
        let f = gaussian(grid, 0.0, 0.7);
        assert!((f.inner(&f).unwrap().re - 1.0).abs() < 1e-10);
        let a = random_field(grid, 1);
        let b = random_field(grid, 2);
        let ab = a.inner(&b).unwrap();
        let ba = b.inner(&a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-12);
        let left = Field::from_fn(grid, |p| C64::new(if p[0] < -1.0 { 1.0 } else { 0.0 }, 0.0));
        let right = Field::from_fn(grid, |p| C64::new(if p[0] > 1.0 { 1.0 } else { 0.0 }, 0.0));
        assert!(left.inner(&right).unwrap().norm() < 1e-12);
        let other = Field::zeros(Grid::new(1, 32, 10.0).unwrap());
        assert_eq!(f.inner(&other), Err(Error::GridMismatch));
    }

    #[test]
    fn norms_of_zero_and_gaussian() {
        let grid = Grid::new(1, 64, 12.0).unwrap();
        let z = Field::zeros(grid).norms();
        assert_eq!((z.l2, z.linf, z.fourier_l1, z.grad_linf), (0.0, 0.0, 0.0, 0.0));
        let g = gaussian(grid, 0.0, 0.8).norms();
        assert!((g.l2 - 1.0).abs() < 1e-10);
        assert!(g.linf <= g.fourier_l1 / (2.0 * PI).sqrt() + 1e-12);
    }

    #[test]
    fn gaussian_norms_match_closed_forms() {
        // f = A exp(-x^2/(4 s^2)) with A = (2 pi s^2)^{-1/4} has a positive
        // transform, so ||f^||_1 = sqrt(2 pi) A and max |f'| sits at x = sqrt(2) s.
        let s = 0.6;
        let amp = (2.0 * PI * s * s).powf(-0.25);
        let norms = gaussian(Grid::new(1, 128, 16.0).unwrap(), 0.0, s).norms();
        assert!((norms.linf - amp).abs() < 1e-3);
        assert!((norms.fourier_l1 - (2.0 * PI).sqrt() * amp).abs() < 1e-8);
        let x = 2.0_f64.sqrt() * s;
        let expect = amp * x / (2.0 * s * s) * (-x * x / (4.0 * s * s)).exp();
        assert!((norms.grad_linf - expect).abs() < 1e-3);
    }

    #[test]
    fn convolution_with_unit_impulse_is_identity() {
        let grid = Grid::new(2, 16, 4.0).unwrap();
        let f = random_field(grid, 9);
        let mut delta = Field::zeros(grid);
        let origin = (grid.n() / 2) * grid.n() + grid.n() / 2;
        delta.values[origin] = C64::new(1.0 / grid.cell_volume(), 0.0);
        let c = convolve(&f, &delta).unwrap();
        assert!(c.sub(&f).unwrap().l2_norm() < 1e-10);
    }

    #[test]
    fn convolution_of_centered_bumps_is_even_and_peaks_at_origin() {
        let grid = Grid::new(1, 64, 8.0).unwrap();
        let a = gaussian(grid, 0.0, 0.5);
        let b = gaussian(grid, 0.0, 0.3);
        let c = convolve(&a, &b).unwrap();
        let n = grid.n();
        for j in 1..n / 2 {
            assert!((c.values[n / 2 + j] - c.values[n / 2 - j]).norm() < 1e-12);
        }
        let peak = c.values.iter().map(|v| v.re).fold(f64::MIN, f64::max);
        assert_eq!(c.values[n / 2].re, peak);
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let grid = Grid::new(1, 16, 3.0).unwrap();
        let f = random_field(grid, 11);
        let g = random_field(grid, 12);
        let n = grid.n();
        let h = grid.cell_volume();
        let direct: Vec<C64> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        // x_a - y_b lands on grid index a - b + n/2 (mod n)
                        let z = grid.coord(a) - grid.coord(b);
                        let idx = ((z / grid.spacing()).round() as i64 + (n / 2) as i64)
                            .rem_euclid(n as i64) as usize;
                        f.values[idx] * g.values[b] * h
                    })
                    .sum()
            })
            .collect();
        let c = convolve(&f, &g).unwrap();
        for (x, y) in c.values.iter().zip(&direct) {
            assert!((x - y).norm() < 1e-10);
        }
        let swapped = convolve(&g, &f).unwrap();
        assert!(swapped.sub(&c).unwrap().l2_norm() < 1e-10);
    }

    #[test]
    fn gaussian_packet_moments() {
        let grid = Grid::new(1, 256, 20.0).unwrap();
        let (x0, p0, s) = (1.5, 2.0, 0.7);
        let f = Field::from_fn(grid, |p| {
            let x = p[0] - x0;
            C64::from_polar((-x * x / (4.0 * s * s)).exp(), p0 * p[0])
        });
        let m = f.moments();
        assert!((m.mean_x[0] - x0).abs() < 1e-10);
        assert!((m.var_x - s * s).abs() < 1e-10);
        assert!((m.mean_p[0] - p0).abs() < 1e-10);
        assert!((m.var_p - 1.0 / (4.0 * s * s)).abs() < 1e-10);
    }

    #[test]
    fn multilinear_sample_reproduces_linear_functions() {
        let grid = Grid::new(2, 16, 4.0).unwrap();
        let f = Field::from_fn(grid, |p| C64::new(p[0] + 2.0 * p[1], -p[1]));
        let v = f.sample(&[0.31, -0.47, 0.0]);
        assert!((v - C64::new(0.31 - 0.94, 0.47)).norm() < 1e-12);
    }
}
