//! Post-hoc validators for the scheme's stability inequalities. Each check
//! consumes a logged trajectory record (never re-running the simulation) and
//! produces per-step slack values (RHS − LHS) with a verdict.

use std::io::Write;

use crate::bounds;
use crate::error::{Result, WgError};
use crate::fmt_f64;
use crate::stepper::{SchemeKind, TrajectoryRecord};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlackRow {
    pub step: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl SlackRow {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub check: String,
    pub rows: Vec<SlackRow>,
    pub min_slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Caveats, e.g. when a surrogate makes a failure inconclusive.
    pub note: Option<String>,
}

impl CheckReport {
    fn build(check: &str, rows: Vec<SlackRow>, allowed: impl Fn(&SlackRow) -> f64, tolerance: f64) -> Self {
        let mut min_slack = f64::INFINITY;
        let mut pass = true;
        for r in &rows {
            let s = r.slack();
            if s < min_slack {
                min_slack = s;
            }
            if s < -allowed(r) {
                pass = false;
            }
        }
        if rows.is_empty() {
            min_slack = 0.0;
        }
        CheckReport {
            check: check.to_string(),
            rows,
            min_slack,
            tolerance,
            pass,
            note: None,
        }
    }

    /// CSV: `check,step,lhs,rhs,slack` rows plus a trailing verdict comment.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "check,step,lhs,rhs,slack")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.check,
                r.step,
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.slack())
            )?;
        }
        writeln!(w, "# verdict: {}", if self.pass { "pass" } else { "fail" })?;
        Ok(())
    }
}

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;

/// Energy φ_n, gradient norm γ_n, displacement δ_n = ‖X_{n+1} − X_n‖ at
/// transition index n = 0..n_steps-1, reconstructed from the record.
struct Series {
    phi: Vec<f64>,   // length n_steps + 1
    gamma: Vec<f64>, // length n_steps + 1
    delta: Vec<f64>, // length n_steps; delta[n] = step from X_n to X_{n+1}
}

fn series(rec: &TrajectoryRecord) -> Series {
    let mut phi = Vec::with_capacity(rec.rows.len() + 1);
    let mut gamma = Vec::with_capacity(rec.rows.len() + 1);
    let mut delta = Vec::with_capacity(rec.rows.len());
    phi.push(rec.meta.initial_energy);
    gamma.push(rec.meta.initial_grad_norm);
    for r in &rec.rows {
        phi.push(r.energy);
        gamma.push(r.grad_norm);
        delta.push(r.step_displacement);
    }
    Series { phi, gamma, delta }
}

fn require_trapezoid(rec: &TrajectoryRecord) -> Result<()> {
    if rec.meta.scheme != SchemeKind::Trapezoid {
        return Err(WgError::Applicability(format!(
            "check requires a trapezoid trajectory, record was {}",
            rec.meta.scheme.as_str()
        )));
    }
    Ok(())
}

/// φ_{n+1} − φ_n ≤ (τ/4)(γ_n² − γ_{n+1}²), with relative tolerance on the
/// energy scale.
pub fn check_energy_almost_decreasing(rec: &TrajectoryRecord, tol: f64) -> Result<CheckReport> {
    require_trapezoid(rec)?;
    let s = series(rec);
    let tau = rec.meta.tau;
    let rows: Vec<SlackRow> = (0..s.delta.len())
        .map(|n| SlackRow {
            step: n,
            lhs: s.phi[n + 1] - s.phi[n],
            rhs: tau / 4.0 * (s.gamma[n] * s.gamma[n] - s.gamma[n + 1] * s.gamma[n + 1]),
        })
        .collect();
    let phi = s.phi.clone();
    Ok(CheckReport::build(
        "energy_almost_decreasing",
        rows,
        |r| tol * (1.0 + phi[r.step].abs()),
        tol,
    ))
}

/// γ_{n+1}² ≤ C(λ,τ)·γ_n².
pub fn check_gradient_decay(rec: &TrajectoryRecord, lambda: f64, tol: f64) -> Result<CheckReport> {
    require_trapezoid(rec)?;
    let factor = bounds::gradient_decay_factor(lambda, rec.meta.tau)?;
    let s = series(rec);
    let rows: Vec<SlackRow> = (0..s.delta.len())
        .map(|n| SlackRow {
            step: n,
            lhs: s.gamma[n + 1] * s.gamma[n + 1],
            rhs: factor * s.gamma[n] * s.gamma[n],
        })
        .collect();
    let gamma = s.gamma.clone();
    Ok(CheckReport::build(
        "gradient_decay",
        rows,
        |r| tol * (1.0 + gamma[r.step] * gamma[r.step]),
        tol,
    ))
}

/// The three refined inequalities of the λ ≥ 0, L-smooth, τ ≤ 1/L regime:
/// energy non-increase with margin, exponential gradient decay, and the
/// displacement lower bound. Returned as three reports with a combined
/// verdict available via `all_pass`.
pub fn check_refined_decay(
    rec: &TrajectoryRecord,
    lambda: f64,
    lipschitz: f64,
    tol: f64,
) -> Result<Vec<CheckReport>> {
    require_trapezoid(rec)?;
    let tau = rec.meta.tau;
    if lambda < 0.0 {
        return Err(WgError::Applicability("refined decay requires lambda >= 0".into()));
    }
    if lipschitz > 0.0 && tau > 1.0 / lipschitz {
        return Err(WgError::Applicability(format!(
            "refined decay requires tau <= 1/L; tau = {tau}, L = {lipschitz}"
        )));
    }
    let ltl = bounds::lambda_tau_l(lambda, tau, lipschitz)?;
    let decay = (-2.0 * ltl * tau).exp();
    let s = series(rec);

    let energy_rows: Vec<SlackRow> = (0..s.delta.len())
        .map(|n| SlackRow {
            step: n,
            lhs: s.phi[n + 1]
                + lambda / 2.0 * s.delta[n] * s.delta[n]
                + tau * (1.0 - lipschitz * tau / 2.0) * s.gamma[n + 1] * s.gamma[n + 1],
            rhs: s.phi[n],
        })
        .collect();
    let gradient_rows: Vec<SlackRow> = (0..s.delta.len())
        .map(|n| SlackRow {
            step: n,
            lhs: s.gamma[n + 1] * s.gamma[n + 1],
            rhs: decay * s.gamma[n] * s.gamma[n],
        })
        .collect();
    let displacement_rows: Vec<SlackRow> = (0..s.delta.len())
        .map(|n| SlackRow {
            step: n,
            lhs: tau * tau * (1.0 - lipschitz * tau / 2.0) * s.gamma[n + 1] * s.gamma[n + 1],
            rhs: s.delta[n] * s.delta[n],
        })
        .collect();

    let phi = s.phi.clone();
    let gamma = s.gamma.clone();
    let gamma2 = s.gamma.clone();
    Ok(vec![
        CheckReport::build(
            "refined_energy_decrease",
            energy_rows,
            |r| tol * (1.0 + phi[r.step].abs()),
            tol,
        ),
        CheckReport::build(
            "refined_gradient_decay",
            gradient_rows,
            |r| tol * (1.0 + gamma[r.step] * gamma[r.step]),
            tol,
        ),
        CheckReport::build(
            "refined_displacement_lower_bound",
            displacement_rows,
            |r| tol * (1.0 + gamma2[r.step] * gamma2[r.step]),
            tol,
        ),
    ])
}

pub fn all_pass(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

/// Classical stability: Σ δ_j²/τ ≤ T·C̃(λ,τ,T)·γ₀² plus the Lipschitz-in-time
/// pairwise bound checked through the triangle-inequality surrogate
/// Σ_{j=m}^{n−1} δ_j ≤ τ|n−m|·sqrt(C̃)·γ₀. The surrogate upper-bounds the true
/// pairwise distance, so a pass is sound but a fail is inconclusive.
pub fn check_classical_stability(
    rec: &TrajectoryRecord,
    lambda: f64,
    t_horizon: f64,
    tol: f64,
) -> Result<CheckReport> {
    require_trapezoid(rec)?;
    let tau = rec.meta.tau;
    let s = series(rec);
    let n_steps = s.delta.len();
    if n_steps as f64 * tau > t_horizon * (1.0 + 1e-12) {
        return Err(WgError::Applicability(format!(
            "record covers {} > T = {t_horizon}",
            n_steps as f64 * tau
        )));
    }
    let c_tilde = bounds::stability_factor(lambda, tau, t_horizon)?;
    let g0 = s.gamma[0];

    let mut rows = Vec::new();
    // Aggregate sum bound, reported as step 0.
    let sum: f64 = s.delta.iter().map(|d| d * d / tau).sum();
    rows.push(SlackRow {
        step: 0,
        lhs: sum,
        rhs: t_horizon * c_tilde * g0 * g0,
    });

    // Worst pair of the Lipschitz surrogate via prefix sums.
    let mut prefix = vec![0.0; n_steps + 1];
    for (j, d) in s.delta.iter().enumerate() {
        prefix[j + 1] = prefix[j] + d;
    }
    let rate = tau * c_tilde.sqrt() * g0;
    let mut worst: Option<SlackRow> = None;
    for m in 0..=n_steps {
        for n in (m + 1)..=n_steps {
            let row = SlackRow {
                step: n,
                lhs: prefix[n] - prefix[m],
                rhs: (n - m) as f64 * rate,
            };
            if worst.map_or(true, |w| row.slack() < w.slack()) {
                worst = Some(row);
            }
        }
    }
    if let Some(w) = worst {
        rows.push(w);
    }

    let scale = 1.0 + g0 * g0 * t_horizon.max(1.0);
    let mut report = CheckReport::build("classical_stability", rows, |_| tol * scale, tol);
    report.note = Some(
        "pairwise bound checked via the triangle-inequality surrogate; a fail is inconclusive"
            .into(),
    );
    Ok(report)
}

/// Refined stability: δ_j ≤ τ e^{−j λ_{τ,L} τ} γ₀ per step and
/// Σ e^{2j λ_{τ,L} τ} δ_j²/τ ≤ T·γ₀² in aggregate.
pub fn check_refined_stability(
    rec: &TrajectoryRecord,
    lambda: f64,
    lipschitz: f64,
    t_horizon: f64,
    tol: f64,
) -> Result<CheckReport> {
    require_trapezoid(rec)?;
    let tau = rec.meta.tau;
    if lambda < 0.0 {
        return Err(WgError::Applicability("refined stability requires lambda >= 0".into()));
    }
    if lipschitz > 0.0 && tau > 1.0 / lipschitz {
        return Err(WgError::Applicability(format!(
            "refined stability requires tau <= 1/L; tau = {tau}, L = {lipschitz}"
        )));
    }
    let ltl = bounds::lambda_tau_l(lambda, tau, lipschitz)?;
    let s = series(rec);
    let g0 = s.gamma[0];

    let mut rows: Vec<SlackRow> = s
        .delta
        .iter()
        .enumerate()
        .map(|(j, d)| SlackRow {
            step: j,
            lhs: *d,
            rhs: tau * (-(j as f64) * ltl * tau).exp() * g0,
        })
        .collect();
    let aggregate: f64 = s
        .delta
        .iter()
        .enumerate()
        .map(|(j, d)| (2.0 * j as f64 * ltl * tau).exp() * d * d / tau)
        .sum();
    rows.push(SlackRow {
        step: s.delta.len(),
        lhs: aggregate,
        rhs: t_horizon * g0 * g0,
    });

    let scale = 1.0 + g0 * g0 * t_horizon.max(1.0) + g0;
    Ok(CheckReport::build("refined_stability", rows, |_| tol * scale, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergySpec;
    use crate::ensemble::ParticleEnsemble;
    use crate::stepper::{run_trajectory, SchemeConfig};

    fn quadratic_record(a: f64, tau: f64, t_final: f64) -> TrajectoryRecord {
        let spec = EnergySpec::quadratic_confinement(a);
        let mut cfg = SchemeConfig::new(SchemeKind::Trapezoid, tau, t_final);
        cfg.inner.tol = 1e-13;
        cfg.lambda = Some(a);
        cfg.lipschitz = Some(a);
        let x0 = ParticleEnsemble::from_1d(&[1.0]).unwrap();
        run_trajectory(&x0, &spec, &cfg, 1).unwrap().0
    }

    fn stationary_record() -> TrajectoryRecord {
        let spec = EnergySpec::none();
        let cfg = SchemeConfig::new(SchemeKind::Trapezoid, 0.1, 0.5);
        let x0 = ParticleEnsemble::from_1d(&[0.4, -0.2]).unwrap();
        run_trajectory(&x0, &spec, &cfg, 1).unwrap().0
    }

    #[test]
    fn energy_almost_decreasing_cases() {
        let rec = quadratic_record(1.0, 0.1, 1.0);
        let rep = check_energy_almost_decreasing(&rec, DEFAULT_REL_TOL).unwrap();
        assert!(rep.pass);
        assert!(rep.min_slack >= -1e-12);

        let stat = stationary_record();
        let rep = check_energy_almost_decreasing(&stat, DEFAULT_REL_TOL).unwrap();
        assert!(rep.pass);
        assert!(rep.rows.iter().all(|r| r.slack().abs() <= 1e-15));

        // Constructed violation: bump the energy at one step.
        let mut bad = rec.clone();
        bad.rows[4].energy += 1.0;
        let rep = check_energy_almost_decreasing(&bad, DEFAULT_REL_TOL).unwrap();
        assert!(!rep.pass);
        // The targeted step shows negative slack.
        assert!(bad.rows[4].step == 5 && rep.rows[4].slack() < 0.0);
    }

    #[test]
    fn gradient_decay_cases() {
        let rec = quadratic_record(1.0, 0.1, 1.0);
        let rep = check_gradient_decay(&rec, 1.0, DEFAULT_ABS_TOL).unwrap();
        assert!(rep.pass);

        let stat = stationary_record();
        assert!(check_gradient_decay(&stat, 0.0, DEFAULT_ABS_TOL).unwrap().pass);

        // Declaring λ = −1 loosens the factor; still passes.
        let rep = check_gradient_decay(&rec, -1.0, DEFAULT_ABS_TOL).unwrap();
        assert!(rep.pass);

        assert!(check_gradient_decay(&rec, 20.0, DEFAULT_ABS_TOL).is_err());
    }

    #[test]
    fn refined_decay_cases() {
        let rec = quadratic_record(1.0, 0.1, 1.0);
        let reps = check_refined_decay(&rec, 1.0, 1.0, DEFAULT_REL_TOL).unwrap();
        assert_eq!(reps.len(), 3);
        assert!(all_pass(&reps), "{reps:#?}");

        let stat = stationary_record();
        let reps = check_refined_decay(&stat, 0.0, 1.0, DEFAULT_REL_TOL).unwrap();
        assert!(all_pass(&reps));
        for rep in &reps {
            assert!(rep.rows.iter().all(|r| r.slack().abs() <= 1e-15));
        }

        // τ > 1/L is outside the refined-decay regime.
        let rec2 = quadratic_record(0.5, 1.5, 3.0);
        assert!(matches!(
            check_refined_decay(&rec2, 0.5, 1.0, DEFAULT_REL_TOL),
            Err(WgError::Applicability(_))
        ));
    }

    #[test]
    fn classical_stability_cases() {
        let stat = stationary_record();
        let rep = check_classical_stability(&stat, 0.0, 1.0, DEFAULT_ABS_TOL).unwrap();
        assert!(rep.pass);

        let rec = quadratic_record(1.0, 0.1, 1.0);
        let rep = check_classical_stability(&rec, 1.0, 1.0, DEFAULT_ABS_TOL).unwrap();
        assert!(rep.pass, "{rep:?}");

        // Horizon mismatch.
        assert!(matches!(
            check_classical_stability(&rec, 1.0, 0.5, DEFAULT_ABS_TOL),
            Err(WgError::Applicability(_))
        ));
    }

    #[test]
    fn refined_stability_cases() {
        let stat = stationary_record();
        assert!(check_refined_stability(&stat, 0.0, 1.0, 1.0, DEFAULT_ABS_TOL)
            .unwrap()
            .pass);

        let rec = quadratic_record(1.0, 0.1, 1.0);
        let rep = check_refined_stability(&rec, 1.0, 1.0, 1.0, DEFAULT_ABS_TOL).unwrap();
        assert!(rep.pass, "{rep:?}");

        // Constructed violation: inflate the first displacement.
        let mut bad = rec.clone();
        bad.rows[0].step_displacement = 10.0 * rec.meta.tau * rec.meta.initial_grad_norm;
        let rep = check_refined_stability(&bad, 1.0, 1.0, 1.0, DEFAULT_ABS_TOL).unwrap();
        assert!(!rep.pass);
        assert!(rep.rows[0].slack() < 0.0);
    }

    #[test]
    fn checks_reject_non_trapezoid_records() {
        let spec = EnergySpec::quadratic_confinement(1.0);
        let cfg = SchemeConfig::new(SchemeKind::ImplicitEuler, 0.1, 0.5);
        let x0 = ParticleEnsemble::from_1d(&[1.0]).unwrap();
        let rec = run_trajectory(&x0, &spec, &cfg, 1).unwrap().0;
        assert!(matches!(
            check_energy_almost_decreasing(&rec, DEFAULT_REL_TOL),
            Err(WgError::Applicability(_))
        ));
    }

    #[test]
    fn reports_are_deterministic() {
        let rec = quadratic_record(1.0, 0.1, 1.0);
        let a = check_energy_almost_decreasing(&rec, DEFAULT_REL_TOL).unwrap();
        let b = check_energy_almost_decreasing(&rec, DEFAULT_REL_TOL).unwrap();
        assert_eq!(a, b);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }
}
