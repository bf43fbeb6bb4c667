//! Periodic grids, complex fields and the linear algebra built on them.
//!
//! Grid points along each axis sit at `x_j = -L/2 + j h` with `h = L/n`, so
//! the origin is the sample with index `n/2`. Frequencies use the usual
//! wrapped ordering `k_j = 2 pi wrap(j) / L`, `wrap(j)` in `[-n/2, n/2)`.
//! Every spatial quantity uses the discrete measure `h^d` per sample:
//! `<f, g> = h^d sum conj(f) g`.

mod density;
mod many_body;
mod single;

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

pub use density::{DensityMatrix, PowerIteration};
pub use many_body::ManyBodyField;
pub use single::{convolve, Field, Moments, Norms};
pub(crate) use single::{convolve_with, free_multiplier, gradient_magnitude_max, moments_from_weights};

use crate::{Error, Result};

/// Spatial point; components beyond the grid dimension are zero.
pub type Point = [f64; 3];

pub const MAX_DIM: usize = 3;

/// Direction of a spectral transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Which half of the `p_k + q_k = 1` decomposition to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projector {
    P,
    Q,
}

/// Upper bound on the number of complex samples a tensor-grid field may hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryCap(pub usize);

impl MemoryCap {
    pub const DEFAULT: MemoryCap = MemoryCap(1 << 28);

    pub fn check(self, requested: u128) -> Result<usize> {
        if requested > self.0 as u128 {
            Err(Error::MemoryCap { requested, cap: self.0 })
        } else {
            Ok(requested as usize)
        }
    }
}

impl Default for MemoryCap {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Uniform periodic grid on the cube `[-L/2, L/2)^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    box_len: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, box_len: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidConfig(format!("dimension {dim} not in 1..=3")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(box_len > 0.0 && box_len.is_finite()) {
            return Err(Error::InvalidConfig(format!("box length must be positive, got {box_len}")));
        }
        Ok(Self { dim, n, box_len })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_len(&self) -> f64 {
        self.box_len
    }

    pub fn spacing(&self) -> f64 {
        self.box_len / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Samples in one field, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, j: usize) -> f64 {
        -0.5 * self.box_len + j as f64 * self.spacing()
    }

    pub fn wrap(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn frequency(&self, j: usize) -> f64 {
        2.0 * PI * self.wrap(j) as f64 / self.box_len
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.coord(j)).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.frequency(j)).collect()
    }

    /// Per-axis indices of a flat row-major sample index.
    pub fn unravel(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn point(&self, idx: usize) -> Point {
        let ix = self.unravel(idx);
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = self.coord(ix[a]);
        }
        p
    }

    pub fn wavevector(&self, idx: usize) -> Point {
        let ix = self.unravel(idx);
        let mut k = [0.0; MAX_DIM];
        for a in 0..self.dim {
            k[a] = self.frequency(ix[a]);
        }
        k
    }

    /// Minimum-image representative of a displacement, in `[-L/2, L/2)`.
    pub fn min_image(&self, dx: f64) -> f64 {
        let l = self.box_len;
        dx - l * libm::floor(dx / l + 0.5)
    }

    pub fn min_image_point(&self, dx: &Point) -> Point {
        let mut out = [0.0; MAX_DIM];
        for a in 0..self.dim {
            out[a] = self.min_image(dx[a]);
        }
        out
    }

    /// Flat indices and weights of the `2^d` grid points surrounding `p` for
    /// periodic multilinear interpolation.
    pub fn interpolation_stencil(&self, p: &Point) -> Vec<(usize, f64)> {
        let h = self.spacing();
        let n = self.n;
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..self.dim {
            let u = (p[a] + 0.5 * self.box_len) / h;
            let i0 = libm::floor(u);
            frac[a] = u - i0;
            base[a] = (i0 as i64).rem_euclid(n as i64) as usize;
        }
        let corners = 1usize << self.dim;
        let mut out = Vec::with_capacity(corners);
        for c in 0..corners {
            let mut idx = 0;
            let mut w = 1.0;
            for a in 0..self.dim {
                let up = (c >> a) & 1 == 1;
                let i = if up { (base[a] + 1) % n } else { base[a] };
                idx = idx * n + i;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            out.push((idx, w));
        }
        out
    }
}

pub(crate) fn norm_of(p: &Point) -> f64 {
    libm::sqrt(p.iter().map(|x| x * x).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_invariants() {
        let g = Grid::new(2, 16, 4.0).unwrap();
        assert_eq!(g.len(), 256);
        assert_eq!(g.cell_volume(), 0.0625);
        assert_eq!(g.coord(8), 0.0);
        assert_eq!(g.wrap(8), -8);
        assert_eq!(g.wrap(7), 7);
        assert!((g.frequency(1) - 2.0 * PI / 4.0).abs() < 1e-15);
        assert!(Grid::new(1, 12, 1.0).is_err());
        assert!(Grid::new(1, 4, 1.0).is_err());
        assert!(Grid::new(1, 16, 0.0).is_err());
        assert!(Grid::new(4, 16, 1.0).is_err());
    }

    #[test]
    fn min_image_wraps_into_half_box() {
        let g = Grid::new(1, 8, 10.0).unwrap();
        assert!((g.min_image(7.0) + 3.0).abs() < 1e-12);
        assert!((g.min_image(-7.0) - 3.0).abs() < 1e-12);
        assert!((g.min_image(2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stencil_weights_sum_to_one() {
        let g = Grid::new(3, 8, 2.0).unwrap();
        let s = g.interpolation_stencil(&[0.13, -0.77, 0.99]);
        assert_eq!(s.len(), 8);
        let total: f64 = s.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn memory_cap_rejects_oversized_requests() {
        assert!(MemoryCap(100).check(101).is_err());
        assert_eq!(MemoryCap(100).check(100).unwrap(), 100);
    }
}
