use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

use super::{Field, Grid, MemoryCap};
use crate::{Error, Result, C64};

/// Kernel `A(y, y')` of an operator on one-particle fields, acting as
/// `(A eta)(y) = h^d sum_{y'} A(y, y') eta(y')`. Entries are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    grid: Grid,
    entries: Vec<C64>,
}

/// Settings for the largest-singular-value estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
    /// Operators whose Frobenius norm is below this are accepted after the
    /// first Ritz step; the estimate is then within `abs_tol` of the norm.
    pub abs_tol: f64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 10_000, abs_tol: 1e-12 }
    }
}

impl DensityMatrix {
    pub fn zeros(grid: Grid, cap: MemoryCap) -> Result<Self> {
        let m = grid.len() as u128;
        let len = cap.check(m * m)?;
        Ok(Self { grid, entries: vec![C64::new(0.0, 0.0); len] })
    }

    pub fn from_entries(grid: Grid, entries: Vec<C64>) -> Result<Self> {
        let m = grid.len();
        if entries.len() != m * m {
            return Err(Error::SizeMismatch { expected: m * m, found: entries.len() });
        }
        if entries.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, entries })
    }

    /// `|f><f|`.
    pub fn rank_one(f: &Field) -> Self {
        let v = f.values();
        let entries = v.iter().flat_map(|a| v.iter().map(move |b| a * b.conj())).collect();
        Self { grid: *f.grid(), entries }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Matrix dimension `n^d`.
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [C64] {
        &mut self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim() + col]
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let h = self.grid.cell_volume();
        let values = self.mat_vec(f.values()).into_iter().map(|v| v * h).collect();
        Field::from_values(self.grid, values)
    }

    fn mat_vec(&self, v: &[C64]) -> Vec<C64> {
        self.entries
            .chunks_exact(self.dim())
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn adjoint_mat_vec(&self, v: &[C64]) -> Vec<C64> {
        let m = self.dim();
        let mut out = vec![C64::new(0.0, 0.0); m];
        for (row, w) in self.entries.chunks_exact(m).zip(v) {
            out.iter_mut().zip(row).for_each(|(o, a)| *o += a.conj() * w);
        }
        out
    }

    pub fn sub(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid, entries })
    }

    pub fn scale(&mut self, s: f64) {
        self.entries.iter_mut().for_each(|v| *v *= s);
    }

    /// `h^d sum_y A(y, y)`.
    pub fn trace(&self) -> C64 {
        let m = self.dim();
        let sum: C64 = (0..m).map(|i| self.entries[i * m + i]).sum();
        sum * self.grid.cell_volume()
    }

    /// `max |A - A^dagger| / max |A|`, zero for the zero matrix.
    pub fn hermitian_defect(&self) -> f64 {
        let m = self.dim();
        let scale = self.entries.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in i..m {
                let d = (self.entries[i * m + j] - self.entries[j * m + i].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst / scale
    }

    /// `q A q` with `q = 1 - |phi><phi|`.
    pub fn complement_sandwich(&self, phi: &Field) -> Result<DensityMatrix> {
        if *phi.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let h = self.grid.cell_volume();
        let p = phi.values();
        let m = self.dim();
        // a = A phi, b = phi^dagger A, c = <phi, A phi>
        let a: Vec<C64> = self.mat_vec(p).into_iter().map(|v| v * h).collect();
        let pc: Vec<C64> = p.iter().map(|v| v.conj()).collect();
        let b: Vec<C64> = self.adjoint_mat_vec(p).into_iter().map(|v| v.conj() * h).collect();
        let c: C64 = pc.iter().zip(&a).map(|(x, y)| x * y).sum::<C64>() * h;
        let mut entries = self.entries.clone();
        for (i, row) in entries.chunks_exact_mut(m).enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e += -p[i] * b[j] - a[i] * pc[j] + c * p[i] * pc[j];
            }
        }
        Ok(Self { grid: self.grid, entries })
    }

    pub fn operator_norm(&self) -> Result<f64> {
        self.operator_norm_with(PowerIteration::default())
    }

    /// Largest singular value of the operator, by block power iteration on
    /// `G = B^dagger B` with `B = h^d A`.
    ///
    /// A block of `BLOCK` vectors is iterated with a Rayleigh-Ritz step on
    /// each pass, so a nearly degenerate top pair does not stall convergence.
    /// Stops when the eigen-residual `||G u - theta u|| / theta` of the top
    /// Ritz pair drops below the tolerance. Start vectors are fixed for
    /// reproducibility; the first is `v_j = 1 + j/m`, deliberately not
    /// constant because a constant vector is orthogonal to every odd singular
    /// vector of a reflection-symmetric kernel.
    pub fn operator_norm_with(&self, settings: PowerIteration) -> Result<f64> {
        const BLOCK: usize = 4;
        let m = self.dim();
        let h2 = self.grid.cell_volume().powi(2);
        if self.entries.iter().all(|v| *v == C64::new(0.0, 0.0)) {
            return Ok(0.0);
        }
        let frobenius = self.grid.cell_volume() * self.entries.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let p = BLOCK.min(m);
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(p);
        for i in 0..p {
            let mut v = start_vector(m, i);
            orthogonalize(&mut v, &basis);
            normalize(&mut v);
            basis.push(v);
        }
        let mut theta = 0.0;
        let mut residual = f64::INFINITY;
        for _ in 0..settings.max_iter {
            let images: Vec<Vec<C64>> = basis
                .iter()
                .map(|v| {
                    let mut g = self.adjoint_mat_vec(&self.mat_vec(v));
                    g.iter_mut().for_each(|x| *x *= h2);
                    g
                })
                .collect();
            let mut small = vec![C64::new(0.0, 0.0); p * p];
            for i in 0..p {
                for j in 0..p {
                    small[i * p + j] = dot(&basis[i], &images[j]);
                }
            }
            let (value, coeffs) = top_eigenpair(&small, p);
            theta = value;
            if !theta.is_finite() {
                return Err(Error::NonFinite);
            }
            if theta <= 0.0 {
                break;
            }
            let mut r2 = 0.0;
            for j in 0..m {
                let mut gu = C64::new(0.0, 0.0);
                let mut u = C64::new(0.0, 0.0);
                for (i, c) in coeffs.iter().enumerate() {
                    gu += images[i][j] * c;
                    u += basis[i][j] * c;
                }
                r2 += (gu - u * theta).norm_sqr();
            }
            residual = r2.sqrt() / theta;
            if residual < settings.tol || frobenius <= settings.abs_tol {
                return Ok(theta.sqrt());
            }
            basis.clear();
            for (i, mut w) in images.into_iter().enumerate() {
                orthogonalize(&mut w, &basis);
                if normalize(&mut w) < 1e-300 {
                    w = start_vector(m, p + i);
                    orthogonalize(&mut w, &basis);
                    normalize(&mut w);
                }
                basis.push(w);
            }
        }
        Err(Error::NoConvergence { estimate: theta.max(0.0).sqrt(), residual, iterations: settings.max_iter })
    }
}

fn start_vector(m: usize, i: usize) -> Vec<C64> {
    (0..m)
        .map(|j| {
            let x = j as f64 / m as f64;
            if i == 0 {
                C64::new(1.0 + x, 0.0)
            } else {
                C64::new((core::f64::consts::PI * i as f64 * (x + 0.25)).cos(), 0.0)
            }
        })
        .collect()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Modified Gram-Schmidt against an orthonormal set, applied twice.
fn orthogonalize(v: &mut [C64], basis: &[Vec<C64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= y * c);
        }
    }
}

fn normalize(v: &mut [C64]) -> f64 {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Largest eigenvalue and its eigenvector of a small Hermitian matrix, via
/// cyclic Jacobi on the real symmetric embedding `[[Re, -Im], [Im, Re]]`.
fn top_eigenpair(a: &[C64], p: usize) -> (f64, Vec<C64>) {
    let n = 2 * p;
    let mut s = vec![0.0; n * n];
    for i in 0..p {
        for j in 0..p {
            // symmetrize to remove rounding asymmetry
            let z = 0.5 * (a[i * p + j] + a[j * p + i].conj());
            s[i * n + j] = z.re;
            s[(i + p) * n + (j + p)] = z.re;
            s[(i + p) * n + j] = z.im;
            s[i * n + (j + p)] = -z.im;
        }
    }
    let mut vecs = vec![0.0; n * n];
    for i in 0..n {
        vecs[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[i * n + j] * s[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| s[i * n + i] * s[i * n + i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for k in 0..n {
            for l in k + 1..n {
                let akl = s[k * n + l];
                if akl == 0.0 {
                    continue;
                }
                let tau = (s[l * n + l] - s[k * n + k]) / (2.0 * akl);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for r in 0..n {
                    let (x, y) = (s[r * n + k], s[r * n + l]);
                    s[r * n + k] = c * x - sn * y;
                    s[r * n + l] = sn * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (s[k * n + r], s[l * n + r]);
                    s[k * n + r] = c * x - sn * y;
                    s[l * n + r] = sn * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (vecs[r * n + k], vecs[r * n + l]);
                    vecs[r * n + k] = c * x - sn * y;
                    vecs[r * n + l] = sn * x + c * y;
                }
            }
        }
    }
    let top = (0..n).max_by(|&i, &j| s[i * n + i].total_cmp(&s[j * n + j])).unwrap_or(0);
    let mut y: Vec<C64> = (0..p).map(|i| C64::new(vecs[i * n + top], vecs[(i + p) * n + top])).collect();
    normalize(&mut y);
    (s[top * n + top], y)
}
