use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

use super::{Direction, Field, Grid, MemoryCap, Projector};
use crate::fft::{self, FftPlan};
use crate::{Error, Result, C64};

/// Tolerance on `| ||phi||_2 - 1 |` for one-particle states fed to projectors.
pub(crate) const NORMALIZATION_TOL: f64 = 1e-6;

/// Complex field on the tensor grid of tracer and gas coordinates.
///
/// Samples are row-major over slots `(x, y_1, ..., y_N)`; each slot is one
/// `n^d` block of the shared per-particle [`Grid`]. Slot 0 is the tracer.
#[derive(Debug, Clone, PartialEq)]
pub struct ManyBodyField {
    grid: Grid,
    n_gas: usize,
    values: Vec<C64>,
}

impl ManyBodyField {
    pub fn sample_count(grid: &Grid, n_gas: usize) -> u128 {
        (grid.len() as u128).saturating_pow(n_gas as u32 + 1)
    }

    pub fn zeros(grid: Grid, n_gas: usize, cap: MemoryCap) -> Result<Self> {
        let len = cap.check(Self::sample_count(&grid, n_gas))?;
        Ok(Self { grid, n_gas, values: vec![C64::new(0.0, 0.0); len] })
    }

    pub fn from_values(grid: Grid, n_gas: usize, values: Vec<C64>) -> Result<Self> {
        let expected = Self::sample_count(&grid, n_gas);
        if values.len() as u128 != expected {
            return Err(Error::SizeMismatch {
                expected: expected.min(usize::MAX as u128) as usize,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, n_gas, values })
    }

    /// `chi ⊗ phi^{⊗N}`.
    pub fn product(chi: &Field, phi: &Field, n_gas: usize, cap: MemoryCap) -> Result<Self> {
        chi.check_grid(phi)?;
        let grid = *chi.grid();
        cap.check(Self::sample_count(&grid, n_gas))?;
        let mut values = chi.values().to_vec();
        for _ in 0..n_gas {
            let mut next = Vec::with_capacity(values.len() * grid.len());
            for a in &values {
                next.extend(phi.values().iter().map(|b| a * b));
            }
            values = next;
        }
        Ok(Self { grid, n_gas, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_gas(&self) -> usize {
        self.n_gas
    }

    /// Number of grid axes, `d (N + 1)`.
    pub fn rank(&self) -> usize {
        self.grid.dim() * (self.n_gas + 1)
    }

    /// Samples per slot, `n^d`.
    pub fn slot_len(&self) -> usize {
        self.grid.len()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    /// Measure of one sample, `h^{d (N+1)}`.
    pub fn measure(&self) -> f64 {
        self.grid.cell_volume().powi(self.n_gas as i32 + 1)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.measure() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn inner(&self, other: &ManyBodyField) -> Result<C64> {
        self.check_shape(other)?;
        let sum: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        Ok(sum * self.measure())
    }

    pub fn sub(&self, other: &ManyBodyField) -> Result<ManyBodyField> {
        self.check_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ManyBodyField { grid: self.grid, n_gas: self.n_gas, values })
    }

    pub(crate) fn check_shape(&self, other: &ManyBodyField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.n_gas != other.n_gas {
            return Err(Error::SizeMismatch { expected: self.values.len(), found: other.values.len() });
        }
        Ok(())
    }

    /// Unitary DFT over all `d (N + 1)` axes.
    pub fn spectral_transform(&self, direction: Direction) -> ManyBodyField {
        let plan = FftPlan::new(self.grid.n());
        let mut out = self.clone();
        let rank = self.rank();
        fft::unitary_transform(&plan, &mut out.values, rank, 0..rank, direction == Direction::Inverse);
        out
    }

    /// Splits the flat index space as `[outer, slot, inner]` around `slot`.
    pub(crate) fn slot_layout(&self, slot: usize) -> (usize, usize, usize) {
        let m = self.slot_len();
        let outer = m.pow(slot as u32);
        let inner = m.pow((self.n_gas - slot) as u32);
        (outer, m, inner)
    }

    /// `p_k` or `q_k = 1 - p_k` for the one-particle state `phi` acting on gas
    /// slot `k` (1-based).
    pub fn project(&self, phi: &Field, k: usize, which: Projector) -> Result<ManyBodyField> {
        if *phi.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if k == 0 || k > self.n_gas {
            return Err(Error::InvalidConfig(alloc::format!(
                "gas slot {k} out of range 1..={}",
                self.n_gas
            )));
        }
        let deviation = phi.normalization_defect();
        if deviation > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { deviation });
        }
        let (outer, m, inner) = self.slot_layout(k);
        let h = self.grid.cell_volume();
        let phi = phi.values();
        let mut out = self.values.clone();
        let mut coeff = vec![C64::new(0.0, 0.0); inner];
        for o in 0..outer {
            let block = &self.values[o * m * inner..(o + 1) * m * inner];
            coeff.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
            for (j, row) in block.chunks_exact(inner).enumerate() {
                let w = phi[j].conj() * h;
                coeff.iter_mut().zip(row).for_each(|(c, v)| *c += w * v);
            }
            let target = &mut out[o * m * inner..(o + 1) * m * inner];
            for (j, row) in target.chunks_exact_mut(inner).enumerate() {
                let f = phi[j];
                match which {
                    Projector::P => row.iter_mut().zip(&coeff).for_each(|(v, c)| *v = f * c),
                    Projector::Q => row.iter_mut().zip(&coeff).for_each(|(v, c)| *v -= f * c),
                }
            }
        }
        Ok(ManyBodyField { grid: self.grid, n_gas: self.n_gas, values: out })
    }

    /// L² norm of `Psi - P_ab Psi` where `P_ab` swaps gas slots `a` and `b`.
    /// Zero for bosonic states.
    pub fn gas_exchange_defect(&self, a: usize, b: usize) -> Result<f64> {
        if a == 0 || b == 0 || a > self.n_gas || b > self.n_gas {
            return Err(Error::InvalidConfig(alloc::format!(
                "gas slots ({a}, {b}) out of range 1..={}",
                self.n_gas
            )));
        }
        if a == b {
            return Ok(0.0);
        }
        let m = self.slot_len();
        let weight = |slot: usize| m.pow((self.n_gas - slot) as u32);
        let (wa, wb) = (weight(a), weight(b));
        let sum: f64 = (0..self.values.len())
            .map(|idx| {
                let ia = (idx / wa) % m;
                let ib = (idx / wb) % m;
                let swapped = idx - ia * wa - ib * wb + ib * wa + ia * wb;
                (self.values[idx] - self.values[swapped]).norm_sqr()
            })
            .sum();
        Ok((sum * self.measure()).sqrt())
    }
}
