//! Invariant suite evaluated on a finished run.

use bosetracer_core::diagnostics::MARGIN_TOL;

use crate::runner::RunArtifact;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Unitary propagation tolerance on the recorded norms.
pub const NORM_TOL: f64 = 1e-8;

pub fn run_checks(art: &RunArtifact) -> Vec<CheckOutcome> {
    let s = &art.summary;
    let d = &art.diagnostics;
    let mut out = vec![CheckOutcome::new("completed", !art.is_aborted(), format!("reasons {:?}", s.reasons))];

    if let Some(drift) = s.norm_drift.micro {
        out.push(CheckOutcome::new("micro_norm", drift <= NORM_TOL, format!("max drift {drift:.3e}")));
    }
    out.push(CheckOutcome::new(
        "phi_ref_norm",
        s.norm_drift.phi_ref <= NORM_TOL,
        format!("relative drift {:.3e}", s.norm_drift.phi_ref),
    ));
    out.push(CheckOutcome::new(
        "intermediate_norm",
        s.norm_drift.intermediate <= NORM_TOL,
        format!("drift {:.3e}", s.norm_drift.intermediate),
    ));

    if let Some(first) = d.first().filter(|r| r.beta_total.is_finite()) {
        out.push(CheckOutcome::new("beta_initial_zero", first.beta_total == 0.0, format!("beta_0 = {:e}", first.beta_total)));
        out.push(CheckOutcome::new(
            "dm_distance_initial",
            first.dm_distance < 1e-8,
            format!("dm_distance(0) = {:e}", first.dm_distance),
        ));
        let worst = d
            .iter()
            .map(|r| (r.traj_gap + r.vel_gap) - std::f64::consts::SQRT_2 * r.beta_total)
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(CheckOutcome::new(
            "traj_within_beta",
            worst <= 1e-12,
            format!("max of traj_distance - sqrt2 beta = {worst:.3e}"),
        ));
        let bad = d.iter().filter(|r| !(r.alpha_total >= 0.0 && r.beta_total >= 0.0)).count();
        out.push(CheckOutcome::new("alpha_beta_finite", bad == 0, format!("{bad} rows non-finite or negative")));
    }

    let names = ["lemA1_i", "lemA1_ii_ref", "lemA1_ii_grad", "lemA2_i", "lemA2_ii"];
    let checks: [&'static str; 5] =
        ["margin_lemA1_i", "margin_lemA1_ii_ref", "margin_lemA1_ii_grad", "margin_lemA2_i", "margin_lemA2_ii"];
    for (k, (name, check)) in names.iter().zip(checks).enumerate() {
        let min = d.iter().map(|r| r.margins.as_array()[k]).fold(f64::INFINITY, f64::min);
        out.push(CheckOutcome::new(check, min >= -MARGIN_TOL, format!("min {name} margin {min:.3e}")));
    }
    out.push(CheckOutcome::new("gronwall", s.gronwall_ok, String::new()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::runner::run_scenario;

    #[test]
    fn free_run_passes_every_check() {
        let cfg = parse_config(
            r#"{
            "d": 1, "n_gas": 2, "lambda_vol": 1.0, "delta": 0.5,
            "tracer": {"x0": [0.0], "v0": [0.5]},
            "potentials": {"v": {"amplitude": 0.0, "radius": 1.0}, "w": {"amplitude": 0.0, "radius": 1.0}},
            "grid": {"n": 64, "box_len": 8.0},
            "dt": 0.001, "t_end": 0.05
        }"#,
        )
        .unwrap();
        let art = run_scenario(&cfg).unwrap();
        let checks = run_checks(&art);
        assert!(checks.iter().all(|c| c.passed), "{checks:#?}");
        assert!(checks.iter().any(|c| c.name == "beta_initial_zero"));
    }
}
