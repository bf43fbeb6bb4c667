//! Physical configuration, the bump potentials and the initial states.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

use crate::field::{Field, Grid, ManyBodyField, MemoryCap, Point, MAX_DIM};
use crate::{Error, Result, C64};

/// Minimum number of grid cells per position standard deviation of the
/// tracer packet.
pub const MIN_CELLS_PER_SIGMA: f64 = 6.0;

/// Width of the smooth roll-off of the gas profile, as a fraction of the cube
/// side.
pub const ROLL_OFF_FRACTION: f64 = 0.1;

/// Smooth compactly supported bump `w0 exp(1 - 1/(1 - |x/r|^2))` for
/// `|x| < r`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BumpSpec {
    pub amplitude: f64,
    pub radius: f64,
}

impl BumpSpec {
    pub const ZERO: BumpSpec = BumpSpec { amplitude: 0.0, radius: 1.0 };

    pub fn eval(&self, x: &Point) -> f64 {
        let s2 = x.iter().map(|v| v * v).sum::<f64>() / (self.radius * self.radius);
        if s2 >= 1.0 || self.amplitude == 0.0 {
            return 0.0;
        }
        self.amplitude * (1.0 - 1.0 / (1.0 - s2)).exp()
    }

    pub fn grad(&self, x: &Point) -> Point {
        let r2 = self.radius * self.radius;
        let s2 = x.iter().map(|v| v * v).sum::<f64>() / r2;
        if s2 >= 1.0 || self.amplitude == 0.0 {
            return [0.0; MAX_DIM];
        }
        let u = 1.0 - s2;
        let factor = self.amplitude * (1.0 - 1.0 / u).exp() * (-2.0 / (r2 * u * u));
        [factor * x[0], factor * x[1], factor * x[2]]
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    pub(crate) fn validate(&self, name: &str) -> Result<()> {
        if !self.amplitude.is_finite() || !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "potential {name}: amplitude must be finite and radius positive"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TracerSpec {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    /// Position variance is `rho^-gamma`.
    #[cfg_attr(feature = "serde", serde(default = "default_gamma"))]
    pub gamma: f64,
    /// Explicit position standard deviation, overriding `gamma`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub sigma: Option<f64>,
}

#[cfg(feature = "serde")]
fn default_gamma() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Potentials {
    pub v: BumpSpec,
    pub w: BumpSpec,
    /// Pair potential between tracers; only used with several tracers.
    #[cfg_attr(feature = "serde", serde(default))]
    pub i: Option<BumpSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GridSpec {
    pub n: usize,
    pub box_len: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct Variant {
    /// Source term `W(X - y) phi_ref(X)` instead of `W(X - y) phi_ref(y)`.
    pub inhomogeneity_at_x: bool,
    pub m_tracers: usize,
    /// Tracer `k` starts at `x0 + k * tracer_spacing * e_1`.
    pub tracer_spacing: f64,
}

impl Default for Variant {
    fn default() -> Self {
        Self { inhomogeneity_at_x: false, m_tracers: 1, tracer_spacing: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MicroMode {
    /// Full tensor grid if it fits the memory cap, else the factorized
    /// system when the coupling vanishes, else skipped.
    #[default]
    Auto,
    Full,
    /// Tracer and gas evolve separately; exact only for `W = 0`.
    Factorized,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct RunSettings {
    /// Steps between recorded samples.
    pub stride: usize,
    pub micro_mode: MicroMode,
    pub memory_cap_samples: Option<usize>,
    /// Also rerun the effective system at `dt/2` and `dt/4` and record the
    /// observed convergence order.
    pub richardson: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { stride: 10, micro_mode: MicroMode::Auto, memory_cap_samples: None, richardson: false }
    }
}

/// Complete description of one scenario.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ModelConfig {
    pub d: usize,
    pub n_gas: usize,
    pub lambda_vol: f64,
    pub delta: f64,
    pub tracer: TracerSpec,
    pub potentials: Potentials,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_end: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub variant: Variant,
    #[cfg_attr(feature = "serde", serde(default))]
    pub run: RunSettings,
}

impl ModelConfig {
    /// `N / |Lambda|`.
    pub fn rho(&self) -> f64 {
        self.n_gas as f64 / self.lambda_vol
    }

    /// Side of the cube `Lambda`.
    pub fn lambda_side(&self) -> f64 {
        self.lambda_vol.powf(1.0 / self.d as f64)
    }

    pub fn spatial_grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.grid.n, self.grid.box_len)
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn sigma(&self) -> f64 {
        self.tracer.sigma.unwrap_or_else(|| self.rho().powf(-0.5 * self.tracer.gamma))
    }

    pub fn x0(&self) -> Point {
        to_point(&self.tracer.x0)
    }

    pub fn v0(&self) -> Point {
        to_point(&self.tracer.v0)
    }

    pub fn pair_potential(&self) -> BumpSpec {
        self.potentials.i.unwrap_or(BumpSpec::ZERO)
    }

    /// Initial tracer positions for the effective system.
    pub fn tracer_positions(&self) -> Vec<Point> {
        let x0 = self.x0();
        (0..self.variant.m_tracers)
            .map(|k| {
                let mut p = x0;
                p[0] += k as f64 * self.variant.tracer_spacing;
                p
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        let grid = self.spatial_grid()?;
        if self.n_gas < 1 {
            return bad(format!("N must be at least 1"));
        }
        if !(self.lambda_vol > 0.0 && self.lambda_vol.is_finite()) {
            return bad(format!("lambda_vol must be positive, got {}", self.lambda_vol));
        }
        if self.rho() <= 1.0 {
            return bad(format!("density N/|Lambda| = {} must exceed 1", self.rho()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("delta must lie in (0, 1], got {}", self.delta));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.tracer.x0.len() != self.d || self.tracer.v0.len() != self.d {
            return bad(format!("tracer x0 and v0 need {} components", self.d));
        }
        if self.tracer.x0.iter().chain(&self.tracer.v0).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !(self.tracer.gamma > 0.0 && self.tracer.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.tracer.gamma));
        }
        if let Some(s) = self.tracer.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma must be positive, got {s}"));
            }
        }
        self.potentials.v.validate("V")?;
        self.potentials.w.validate("W")?;
        if let Some(i) = &self.potentials.i {
            i.validate("I")?;
        }
        let margin = 0.5 * (grid.box_len() - self.lambda_side());
        if margin < 2.0 * self.potentials.w.radius {
            return bad(format!(
                "Lambda (side {}) leaves a margin of {margin} to the box faces; \
                 at least twice the W radius ({}) is required",
                self.lambda_side(),
                2.0 * self.potentials.w.radius
            ));
        }
        if self.variant.m_tracers < 1 {
            return bad(format!("m_tracers must be at least 1"));
        }
        if self.run.stride < 1 {
            return bad(format!("stride must be at least 1"));
        }
        Ok(())
    }
}

fn to_point(v: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    p[..v.len().min(MAX_DIM)].copy_from_slice(&v[..v.len().min(MAX_DIM)]);
    p
}

/// Initial tracer wave function and its measured spread.
#[derive(Debug, Clone)]
pub struct TracerState {
    pub chi: Field,
    pub var_x: f64,
    /// Variance of the velocity `p / rho`.
    pub var_v: f64,
    /// `(var_x + var_v) rho^delta`, the constant realized by this packet.
    pub spread_constant: f64,
}

/// Gaussian packet centred at `x0` with mean momentum `rho v0` and position
/// standard deviation `sigma` per axis.
pub fn build_tracer_state(cfg: &ModelConfig) -> Result<TracerState> {
    let grid = cfg.spatial_grid()?;
    let sigma = cfg.sigma();
    let cells = sigma / grid.spacing();
    if cells < MIN_CELLS_PER_SIGMA {
        return Err(Error::InvalidConfig(format!(
            "tracer width {sigma} spans only {cells:.2} cells; need at least {MIN_CELLS_PER_SIGMA}"
        )));
    }
    let rho = cfg.rho();
    let x0 = cfg.x0();
    let v0 = cfg.v0();
    let d = cfg.d;
    let chi = Field::from_fn(grid, |p| {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for a in 0..d {
            let dx = grid.min_image(p[a] - x0[a]);
            r2 += dx * dx;
            phase += rho * v0[a] * p[a];
        }
        C64::from_polar((-r2 / (4.0 * sigma * sigma)).exp(), phase)
    })
    .normalized();
    let m = chi.moments();
    let var_v = m.var_p / (rho * rho);
    Ok(TracerState {
        chi,
        var_x: m.var_x,
        var_v,
        spread_constant: (m.var_x + var_v) * rho.powf(cfg.delta),
    })
}

/// Initial gas orbital and reference field.
#[derive(Debug, Clone)]
pub struct GasState {
    pub phi0: Field,
    /// `|Lambda|^{1/2} phi0`.
    pub phi_ref0: Field,
    pub fourier_l1: f64,
    pub fourier_l1_grad: f64,
}

fn smooth_step(tau: f64) -> f64 {
    let e = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
    if tau <= 0.0 {
        0.0
    } else if tau >= 1.0 {
        1.0
    } else {
        e(tau) / (e(tau) + e(1.0 - tau))
    }
}

/// One-axis profile of the mollified indicator of `[-s/2, s/2]`: equal to 1
/// on `|u| <= s/2 - w/2`, 0 beyond `s/2 + w/2`, smooth in between.
pub fn cube_profile(u: f64, side: f64) -> f64 {
    let w = ROLL_OFF_FRACTION * side;
    smooth_step((0.5 * side + 0.5 * w - u.abs()) / w)
}

pub fn build_gas_state(cfg: &ModelConfig) -> Result<GasState> {
    let grid = cfg.spatial_grid()?;
    let side = cfg.lambda_side();
    let d = cfg.d;
    let phi0 = Field::from_fn(grid, |p| {
        C64::new((0..d).map(|a| cube_profile(p[a], side)).product(), 0.0)
    })
    .normalized();
    let phi_ref0 = phi0.scaled(cfg.lambda_vol.sqrt());
    let fourier_l1 = phi0.norms().fourier_l1;
    let fourier_l1_grad = phi0.fourier_l1_gradient();
    Ok(GasState { phi0, phi_ref0, fourier_l1, fourier_l1_grad })
}

/// `chi ⊗ phi^{⊗N}`.
pub fn build_product_state(chi: &Field, phi: &Field, n_gas: usize, cap: MemoryCap) -> Result<ManyBodyField> {
    ManyBodyField::product(chi, phi, n_gas, cap)
}

/// `sum_k W(x - y_k)` style evaluation of a bump at a minimum-image
/// displacement.
pub(crate) fn bump_at_displacement(grid: &Grid, bump: &BumpSpec, from: &Point, to: &Point) -> f64 {
    let mut dx = [0.0; MAX_DIM];
    for a in 0..grid.dim() {
        dx[a] = to[a] - from[a];
    }
    bump.eval(&grid.min_image_point(&dx))
}

/// Bump sampled on the grid, centred at `center` with minimum-image distances.
pub fn bump_on_grid(grid: &Grid, bump: &BumpSpec, center: &Point) -> Field {
    Field::from_fn(*grid, |p| C64::new(bump_at_displacement(grid, bump, center, p), 0.0))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::field::Projector;
    use proptest::prelude::*;

    pub(crate) fn config(d: usize, n_gas: usize, lambda_vol: f64, n: usize, box_len: f64) -> ModelConfig {
        ModelConfig {
            d,
            n_gas,
            lambda_vol,
            delta: 0.5,
            tracer: TracerSpec { x0: alloc::vec![0.0; d], v0: alloc::vec![0.0; d], gamma: 0.5, sigma: None },
            potentials: Potentials {
                v: BumpSpec { amplitude: 0.0, radius: 1.0 },
                w: BumpSpec { amplitude: 0.0, radius: 1.0 },
                i: None,
            },
            grid: GridSpec { n, box_len },
            dt: 1e-3,
            t_end: 0.1,
            variant: Variant::default(),
            run: RunSettings::default(),
        }
    }

    fn fit_slope(points: &[(f64, f64)]) -> f64 {
        let k = points.len() as f64;
        let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / k, sy / k);
        let num: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        num / den
    }

    #[test]
    fn bump_closed_form_values() {
        let b = BumpSpec { amplitude: 1.0, radius: 1.0 };
        assert_eq!(b.eval(&[0.0; 3]), 1.0);
        assert_eq!(b.eval(&[1.0, 0.0, 0.0]), 0.0);
        assert_eq!(b.grad(&[1.0, 0.0, 0.0]), [0.0; 3]);
        assert!((b.eval(&[0.5, 0.0, 0.0]) - 0.716_531_310_573_789_2).abs() < 1e-12);
        let b2 = BumpSpec { amplitude: -3.0, radius: 2.0 };
        assert!((b2.eval(&[0.6, 0.8, 0.0]) - -3.0 * (1.0f64 - 1.0 / 0.75).exp()).abs() < 1e-14);
        // continuity just inside the support edge
        assert!(b.eval(&[0.999_999, 0.0, 0.0]) < 1e-300);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn bump_gradient_matches_central_differences(
            x in -1.2f64..1.2, y in -1.2f64..1.2, z in -1.2f64..1.2,
            amp in -2.0f64..2.0, r in 0.5f64..2.0,
        ) {
            let b = BumpSpec { amplitude: amp, radius: r };
            let p = [x, y, z];
            let g = b.grad(&p);
            let h = 1e-5 * r;
            for a in 0..3 {
                let mut lo = p;
                let mut hi = p;
                lo[a] -= h;
                hi[a] += h;
                let fd = (b.eval(&hi) - b.eval(&lo)) / (2.0 * h);
                prop_assert!((fd - g[a]).abs() < 1e-6, "axis {} fd {} grad {}", a, fd, g[a]);
            }
        }
    }

    #[test]
    fn centred_tracer_has_zero_mean() {
        let cfg = config(1, 4, 2.0, 128, 16.0);
        let t = build_tracer_state(&cfg).unwrap();
        let m = t.chi.moments();
        assert!(m.mean_x[0].abs() < 1e-8);
        assert!(m.mean_p[0].abs() < 1e-8);
        assert!((t.chi.l2_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tracer_moments_match_gaussian_closed_form() {
        let mut cfg = config(1, 8, 2.0, 256, 16.0);
        cfg.tracer.x0 = alloc::vec![0.7];
        cfg.tracer.v0 = alloc::vec![0.25];
        let rho = cfg.rho();
        let t = build_tracer_state(&cfg).unwrap();
        let sigma = rho.powf(-0.25);
        assert!((t.var_x - sigma * sigma).abs() < 1e-6);
        assert!((t.var_v - 1.0 / (4.0 * sigma * sigma * rho * rho)).abs() < 1e-6);
        let m = t.chi.moments();
        assert!((m.mean_x[0] - 0.7).abs() < 1e-8);
        assert!((m.mean_p[0] / rho - 0.25).abs() < 1e-8);
    }

    #[test]
    fn tracer_spread_scales_as_inverse_sqrt_rho() {
        // Var(x) = rho^-gamma dominates, so doubling rho shrinks the sum by
        // about 2^-gamma.
        let a = build_tracer_state(&config(1, 8, 2.0, 512, 16.0)).unwrap();
        let b = build_tracer_state(&config(1, 16, 2.0, 512, 16.0)).unwrap();
        let ratio = (b.var_x + b.var_v) / (a.var_x + a.var_v);
        let expect = 2.0f64.powf(-0.5);
        assert!((ratio / expect - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn under_resolved_tracer_is_rejected() {
        let cfg = config(1, 8, 2.0, 16, 16.0);
        assert!(matches!(build_tracer_state(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn gas_state_is_normalized_with_unit_plateau() {
        for (d, lam, n, l) in [(1, 1.0, 128, 8.0), (1, 16.0, 256, 32.0), (2, 4.0, 64, 8.0)] {
            let cfg = config(d, 32, lam, n, l);
            let g = build_gas_state(&cfg).unwrap();
            assert!((g.phi0.l2_norm() - 1.0).abs() < 1e-10);
            let sup = g.phi_ref0.linf_norm();
            assert!((0.9..=1.1).contains(&sup), "d={d} |Lambda|={lam}: {sup}");
        }
    }

    #[test]
    fn gas_fourier_l1_scales_as_inverse_sqrt_volume() {
        let points: Vec<(f64, f64)> = [4.0f64, 8.0, 16.0, 32.0]
            .iter()
            .map(|&lam| {
                let cfg = config(1, (2.0 * lam) as usize, lam, 4096, 64.0);
                let g = build_gas_state(&cfg).unwrap();
                (lam.ln(), g.fourier_l1.ln())
            })
            .collect();
        let slope = fit_slope(&points);
        assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn product_state_properties() {
        let mut cfg = config(1, 2, 1.0, 64, 8.0);
        cfg.tracer.sigma = Some(1.0);
        let chi = build_tracer_state(&cfg).unwrap().chi;
        let gas = build_gas_state(&cfg).unwrap();
        let psi = build_product_state(&chi, &gas.phi0, 1, MemoryCap::DEFAULT).unwrap();
        let again = ManyBodyField::product(&chi, &gas.phi0, 1, MemoryCap::DEFAULT).unwrap();
        assert!((psi.inner(&again).unwrap().re - 1.0).abs() < 1e-8);
        let q = psi.project(&gas.phi0, 1, Projector::Q).unwrap();
        assert!(q.l2_norm() < 1e-10);
        let psi2 = build_product_state(&chi, &gas.phi0, 2, MemoryCap::DEFAULT).unwrap();
        assert!(psi2.gas_exchange_defect(1, 2).unwrap() < 1e-14);
        assert!((psi2.l2_norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let ok = config(1, 4, 2.0, 64, 16.0);
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.n_gas = 2;
        assert!(c.validate().is_err(), "rho = 1 must be rejected");
        let mut c = ok.clone();
        c.delta = 1.5;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.lambda_vol = 14.0;
        c.n_gas = 28;
        assert!(c.validate().is_err(), "Lambda too close to the box faces");
        let mut c = ok.clone();
        c.tracer.x0 = alloc::vec![0.0, 0.0];
        assert!(c.validate().is_err());
    }
}
