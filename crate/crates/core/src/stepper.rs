//! One-step maps for explicit Euler, implicit Euler, and the implicit
//! trapezoidal scheme, with warm-started inner solvers, plus trajectory
//! iteration and the per-step log.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::energy::{wasserstein_gradient, EnergySpec, GradientField};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Result, WgError};
use crate::fmt_f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    ExplicitEuler,
    ImplicitEuler,
    Trapezoid,
}

impl SchemeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::ExplicitEuler => "explicit_euler",
            SchemeKind::ImplicitEuler => "implicit_euler",
            SchemeKind::Trapezoid => "trapezoid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKind {
    FixedPoint,
    ProxDescent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentRate {
    Auto,
    Fixed(f64),
}

/// Inner-solver settings. Termination criterion is the L²(ρ₀) norm of
/// successive iterates falling below `tol`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub kind: InnerKind,
    pub tol: f64,
    pub max_iters: usize,
    pub descent_rate: DescentRate,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            kind: InnerKind::FixedPoint,
            tol: 1e-10,
            max_iters: 10_000,
            descent_rate: DescentRate::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub tau: f64,
    pub t_final: f64,
    pub inner: InnerConfig,
    /// User-declared convexity modulus, if known.
    pub lambda: Option<f64>,
    /// User-declared gradient Lipschitz constant, if known.
    pub lipschitz: Option<f64>,
}

impl SchemeConfig {
    pub fn new(scheme: SchemeKind, tau: f64, t_final: f64) -> Self {
        SchemeConfig {
            scheme,
            tau,
            t_final,
            inner: InnerConfig::default(),
            lambda: None,
            lipschitz: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(WgError::Parameter("tau must be > 0".into()));
        }
        if !(self.t_final > 0.0) {
            return Err(WgError::Parameter("t_final must be > 0".into()));
        }
        if !(self.inner.tol > 0.0) {
            return Err(WgError::Parameter("inner tol must be > 0".into()));
        }
        if self.inner.max_iters == 0 {
            return Err(WgError::Parameter("inner max_iters must be >= 1".into()));
        }
        if let DescentRate::Fixed(r) = self.inner.descent_rate {
            if !(r > 0.0) {
                return Err(WgError::Parameter("descent rate must be > 0".into()));
            }
        }
        // Admissibility of the trapezoid variational problem for declared λ < 0.
        if self.scheme == SchemeKind::Trapezoid {
            if let Some(lam) = self.lambda {
                if lam < 0.0 && lam / 2.0 + 1.0 / self.tau <= 0.0 {
                    return Err(WgError::Parameter(format!(
                        "declared lambda {lam} violates lambda/2 + 1/tau > 0 at tau {}",
                        self.tau
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one implicit step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub next: ParticleEnsemble,
    pub inner_iterations: usize,
    /// L²(ρ₀) norm of the implicit-equation defect at `next` (solver-agnostic).
    pub residual: f64,
    pub gradient_at_next: GradientField,
}

fn l2_diff(a: &[f64], b: &[f64], n: usize) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum / n as f64).sqrt()
}

/// X − τ·∇φ^#(X): the warm start for both implicit solvers.
pub fn explicit_euler_step(
    x: &ParticleEnsemble,
    spec: &EnergySpec,
    tau: f64,
) -> Result<ParticleEnsemble> {
    if !(tau > 0.0) {
        return Err(WgError::Parameter("tau must be > 0".into()));
    }
    let g = wasserstein_gradient(x, spec)?;
    let data: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(p, gi)| p - tau * gi)
        .collect();
    ParticleEnsemble::new(x.dim(), data)
}

/// Resolves `DescentRate::Auto` against an estimate of the gradient Lipschitz
/// constant near `x0`, returning a config with the rate fixed. The fixed-point
/// solver ignores the rate. Recorded in run manifests for reproducibility.
pub fn resolve_inner(
    cfg: &SchemeConfig,
    spec: &EnergySpec,
    x0: &ParticleEnsemble,
) -> Result<SchemeConfig> {
    let mut out = *cfg;
    if cfg.inner.kind == InnerKind::ProxDescent && cfg.inner.descent_rate == DescentRate::Auto {
        let l_hat = match cfg.lipschitz {
            Some(l) => l,
            None => {
                let radius = 1e-3 * (1.0 + x0.rms_radius());
                crate::energy::estimate_lipschitz(spec, x0, 32, radius, 0)?
            }
        };
        let rate = match cfg.scheme {
            // Curvature of the trapezoid objective is at most 1/τ + L/2.
            SchemeKind::Trapezoid => 1.0 / (1.0 / cfg.tau + l_hat / 2.0),
            _ => 1.0 / (1.0 / cfg.tau + l_hat),
        };
        out.inner.descent_rate = DescentRate::Fixed(rate);
    }
    Ok(out)
}

/// Shared implicit solve. `grad_weight` is τ for implicit Euler and τ/2 for
/// the trapezoid rule; `drift` is the constant part of the update
/// (0 for implicit Euler, (τ/2)·g(x) for trapezoid).
fn solve_implicit(
    x: &ParticleEnsemble,
    spec: &EnergySpec,
    cfg: &SchemeConfig,
    grad_weight: f64,
    drift: &[f64],
) -> Result<StepResult> {
    cfg.validate()?;
    let n = x.len();
    let tau = cfg.tau;
    let tol = cfg.inner.tol;

    // Initialized by an explicit Euler step.
    let mut xi = explicit_euler_step(x, spec, tau)?;
    let mut iterations = 0usize;
    let mut best_residual = f64::INFINITY;

    let rate = match cfg.inner.descent_rate {
        DescentRate::Fixed(r) => r,
        DescentRate::Auto => match cfg.inner.kind {
            InnerKind::FixedPoint => 0.0, // unused
            InnerKind::ProxDescent => {
                return solve_implicit(x, spec, &resolve_inner(cfg, spec, x)?, grad_weight, drift)
            }
        },
    };

    loop {
        let g_xi = wasserstein_gradient(&xi, spec)?;
        let next_data: Vec<f64> = match cfg.inner.kind {
            InnerKind::FixedPoint => {
                // ξ ← x − weight·g(ξ) − drift
                x.as_slice()
                    .iter()
                    .zip(g_xi.as_slice())
                    .zip(drift)
                    .map(|((p, g), dr)| p - grad_weight * g - dr)
                    .collect()
            }
            InnerKind::ProxDescent => {
                // descent on the step objective: direction
                // weight/τ·g(ξ) + drift/τ + (ξ − x)/τ
                xi.as_slice()
                    .iter()
                    .zip(x.as_slice())
                    .zip(g_xi.as_slice().iter().zip(drift))
                    .map(|((cur, p), (g, dr))| {
                        cur - rate * ((grad_weight / tau) * g + dr / tau + (cur - p) / tau)
                    })
                    .collect()
            }
        };
        let step_norm = l2_diff(&next_data, xi.as_slice(), n);
        if !step_norm.is_finite() {
            return Err(WgError::InnerSolver {
                iterations,
                residual: best_residual,
            });
        }
        xi = ParticleEnsemble::new(x.dim(), next_data)?;
        iterations += 1;
        if step_norm <= tol {
            break;
        }
        if iterations >= cfg.inner.max_iters {
            // Report the defect of the best iterate we have.
            let g_end = wasserstein_gradient(&xi, spec)?;
            let defect: Vec<f64> = xi
                .as_slice()
                .iter()
                .zip(x.as_slice())
                .zip(g_end.as_slice().iter().zip(drift))
                .map(|((nx, p), (g, dr))| nx - p + grad_weight * g + dr)
                .collect();
            let res = (defect.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            best_residual = best_residual.min(res);
            return Err(WgError::InnerSolver {
                iterations,
                residual: best_residual,
            });
        }
    }

    let gradient_at_next = wasserstein_gradient(&xi, spec)?;
    let defect: Vec<f64> = xi
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .zip(gradient_at_next.as_slice().iter().zip(drift))
        .map(|((nx, p), (g, dr))| nx - p + grad_weight * g + dr)
        .collect();
    let residual = (defect.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();

    Ok(StepResult {
        next: xi,
        inner_iterations: iterations,
        residual,
        gradient_at_next,
    })
}

/// Solve X′ = X − τ ∇φ^#(X′).
pub fn implicit_euler_step(
    x: &ParticleEnsemble,
    spec: &EnergySpec,
    cfg: &SchemeConfig,
) -> Result<StepResult> {
    let drift = vec![0.0; x.as_slice().len()];
    solve_implicit(x, spec, cfg, cfg.tau, &drift)
}

/// Solve X′ = X − (τ/2)(∇φ^#(X′) + ∇φ^#(X)).
pub fn trapezoid_step(
    x: &ParticleEnsemble,
    spec: &EnergySpec,
    cfg: &SchemeConfig,
) -> Result<StepResult> {
    let g_x = wasserstein_gradient(x, spec)?;
    let drift: Vec<f64> = g_x.as_slice().iter().map(|g| 0.5 * cfg.tau * g).collect();
    solve_implicit(x, spec, cfg, 0.5 * cfg.tau, &drift)
}

/// One row of the per-step log. Row `step = n` describes the transition to
/// iterate X_n: its energy, gradient norm, displacement from X_{n-1}, the
/// implicit defect, and inner iteration count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub grad_norm: f64,
    pub step_displacement: f64,
    pub residual: f64,
    pub inner_iterations: usize,
}

/// Trajectory metadata carried alongside the rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub scheme: SchemeKind,
    pub tau: f64,
    pub t_final: f64,
    pub spec_digest: String,
    pub lambda: Option<f64>,
    pub lipschitz: Option<f64>,
    pub initial_energy: f64,
    pub initial_grad_norm: f64,
    pub complete: bool,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub meta: TrajectoryMeta,
    pub rows: Vec<StepRow>,
}

impl TrajectoryRecord {
    /// Time-series CSV: `step,t,energy,grad_norm,step_displacement,residual,inner_iterations`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "step,t,energy,grad_norm,step_displacement,residual,inner_iterations"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.step,
                fmt_f64(r.t),
                fmt_f64(r.energy),
                fmt_f64(r.grad_norm),
                fmt_f64(r.step_displacement),
                fmt_f64(r.residual),
                r.inner_iterations
            )?;
        }
        Ok(())
    }

    /// Reads the row table; the caller supplies metadata (e.g. from a
    /// manifest).
    pub fn read_csv<R: BufRead>(meta: TrajectoryMeta, r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| WgError::Format("empty time-series file".into()))??;
        if header.trim() != "step,t,energy,grad_norm,step_displacement,residual,inner_iterations" {
            return Err(WgError::Format(format!("bad time-series header: {header}")));
        }
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 7 {
                return Err(WgError::Format(format!("bad time-series row: {line}")));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| WgError::Format(format!("bad float {s}")))
            };
            rows.push(StepRow {
                step: f[0]
                    .parse()
                    .map_err(|_| WgError::Format(format!("bad step {}", f[0])))?,
                t: parse(f[1])?,
                energy: parse(f[2])?,
                grad_norm: parse(f[3])?,
                step_displacement: parse(f[4])?,
                residual: parse(f[5])?,
                inner_iterations: f[6]
                    .parse()
                    .map_err(|_| WgError::Format(format!("bad iteration count {}", f[6])))?,
            });
        }
        Ok(TrajectoryRecord { meta, rows })
    }
}

/// Number of uniform steps covering `t_final`: ⌈t_final/τ⌉ with the last step
/// taken at full τ. A small relative guard absorbs representation error in
/// exact-quotient cases like 1.0 / 0.1.
pub fn step_count(tau: f64, t_final: f64) -> usize {
    ((t_final / tau) - 1e-9).ceil().max(1.0) as usize
}

/// Iterates the configured one-step map from `x0` until n·τ ≥ t_final.
/// Snapshots are kept at steps divisible by `save_every` plus the final step.
/// On inner-solver failure the partial record is returned flagged incomplete.
pub fn run_trajectory(
    x0: &ParticleEnsemble,
    spec: &EnergySpec,
    cfg: &SchemeConfig,
    save_every: usize,
) -> Result<(TrajectoryRecord, Vec<(usize, ParticleEnsemble)>)> {
    cfg.validate()?;
    run_trajectory_steps(x0, spec, cfg, step_count(cfg.tau, cfg.t_final), save_every)
}

/// As `run_trajectory` with the step count supplied exactly (used by sweeps
/// where the grid is rational).
pub fn run_trajectory_steps(
    x0: &ParticleEnsemble,
    spec: &EnergySpec,
    cfg: &SchemeConfig,
    n_steps: usize,
    save_every: usize,
) -> Result<(TrajectoryRecord, Vec<(usize, ParticleEnsemble)>)> {
    cfg.validate()?;
    if save_every == 0 {
        return Err(WgError::Parameter("save_every must be >= 1".into()));
    }
    let cfg = resolve_inner(cfg, spec, x0)?;
    let n = x0.len();

    let g0 = wasserstein_gradient(x0, spec)?;
    let mut meta = TrajectoryMeta {
        scheme: cfg.scheme,
        tau: cfg.tau,
        t_final: cfg.t_final,
        spec_digest: spec.digest(),
        lambda: cfg.lambda,
        lipschitz: cfg.lipschitz,
        initial_energy: crate::energy::energy_value(x0, spec)?,
        initial_grad_norm: g0.l2_rho_norm(),
        complete: false,
        failure: None,
    };

    let mut rows = Vec::with_capacity(n_steps);
    let mut snapshots = Vec::new();
    snapshots.push((0usize, x0.clone()));

    let mut current = x0.clone();
    for step in 1..=n_steps {
        let outcome = match cfg.scheme {
            SchemeKind::ExplicitEuler => explicit_euler_step(&current, spec, cfg.tau).map(|next| {
                let g = wasserstein_gradient(&next, spec);
                (next, 0usize, 0.0, g)
            }),
            SchemeKind::ImplicitEuler => implicit_euler_step(&current, spec, &cfg)
                .map(|r| (r.next, r.inner_iterations, r.residual, Ok(r.gradient_at_next))),
            SchemeKind::Trapezoid => trapezoid_step(&current, spec, &cfg)
                .map(|r| (r.next, r.inner_iterations, r.residual, Ok(r.gradient_at_next))),
        };
        let (next, iters, residual, grad) = match outcome {
            Ok((next, iters, residual, Ok(grad))) => (next, iters, residual, grad),
            Ok((_, _, _, Err(e))) | Err(e) => {
                meta.failure = Some(format!("step {step}: {e}"));
                let record = TrajectoryRecord { meta, rows };
                snapshots.push((step - 1, current));
                return Ok((record, snapshots));
            }
        };
        let displacement = l2_diff(next.as_slice(), current.as_slice(), n);
        let energy = match crate::energy::energy_value(&next, spec) {
            Ok(v) => v,
            Err(e) => {
                meta.failure = Some(format!("step {step}: {e}"));
                let record = TrajectoryRecord { meta, rows };
                snapshots.push((step - 1, current));
                return Ok((record, snapshots));
            }
        };
        rows.push(StepRow {
            step,
            t: step as f64 * cfg.tau,
            energy,
            grad_norm: grad.l2_rho_norm(),
            step_displacement: displacement,
            residual,
            inner_iterations: iters,
        });
        current = next;
        if step % save_every == 0 && step != n_steps {
            snapshots.push((step, current.clone()));
        }
    }
    snapshots.push((n_steps, current));
    meta.complete = true;
    Ok((TrajectoryRecord { meta, rows }, snapshots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e1(xs: &[f64]) -> ParticleEnsemble {
        ParticleEnsemble::from_1d(xs).unwrap()
    }

    fn cfg(scheme: SchemeKind, tau: f64, t_final: f64) -> SchemeConfig {
        SchemeConfig::new(scheme, tau, t_final)
    }

    #[test]
    fn explicit_euler_examples() {
        let spec = EnergySpec::quadratic_confinement(1.0);
        let crit = e1(&[0.0]);
        let out = explicit_euler_step(&crit, &spec, 0.1).unwrap();
        assert_eq!(out.as_slice(), &[0.0]);

        let x = e1(&[1.0]);
        let out = explicit_euler_step(&x, &spec, 0.1).unwrap();
        assert_abs_diff_eq!(out.as_slice()[0], 0.9, epsilon = 1e-15);

        let pair = e1(&[1.0, -1.0]);
        let w = EnergySpec::quadratic_interaction(1.0);
        let out = explicit_euler_step(&pair, &w, 0.5).unwrap();
        assert_abs_diff_eq!(out.as_slice()[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(out.as_slice()[1], -0.5, epsilon = 1e-14);
    }

    #[test]
    fn implicit_euler_examples() {
        let spec = EnergySpec::quadratic_confinement(1.0);
        let c = cfg(SchemeKind::ImplicitEuler, 0.1, 1.0);

        let crit = e1(&[0.0]);
        let r = implicit_euler_step(&crit, &spec, &c).unwrap();
        assert_abs_diff_eq!(r.next.as_slice()[0], 0.0, epsilon = 1e-12);
        assert!(r.residual <= c.inner.tol);

        let x = e1(&[1.0]);
        let r = implicit_euler_step(&x, &spec, &c).unwrap();
        assert_abs_diff_eq!(r.next.as_slice()[0], 1.0 / 1.1, epsilon = 1e-9);

        let spec2 = EnergySpec::quadratic_confinement(2.0);
        let c2 = cfg(SchemeKind::ImplicitEuler, 0.25, 1.0);
        let r = implicit_euler_step(&x, &spec2, &c2).unwrap();
        assert_abs_diff_eq!(r.next.as_slice()[0], 2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn trapezoid_examples() {
        let spec = EnergySpec::quadratic_confinement(1.0);
        let c = cfg(SchemeKind::Trapezoid, 0.1, 1.0);

        let crit = e1(&[0.0]);
        let r = trapezoid_step(&crit, &spec, &c).unwrap();
        assert_abs_diff_eq!(r.next.as_slice()[0], 0.0, epsilon = 1e-12);
        assert!(r.residual <= c.inner.tol);

        // Closed form (1 − aτ/2)/(1 + aτ/2).
        let x = e1(&[1.0]);
        let r = trapezoid_step(&x, &spec, &c).unwrap();
        assert_abs_diff_eq!(r.next.as_slice()[0], 0.95 / 1.05, epsilon = 1e-10);

        let pair = e1(&[1.0, -1.0]);
        let w = EnergySpec::quadratic_interaction(1.0);
        let r = trapezoid_step(&pair, &w, &c).unwrap();
        assert_abs_diff_eq!(r.next.as_slice()[0], 0.95 / 1.05, epsilon = 1e-10);
        assert_abs_diff_eq!(r.next.as_slice()[1], -0.95 / 1.05, epsilon = 1e-10);
    }

    #[test]
    fn prox_descent_matches_fixed_point() {
        let spec = EnergySpec::quadratic_confinement(1.0);
        let mut c = cfg(SchemeKind::Trapezoid, 0.1, 1.0);
        c.inner.kind = InnerKind::ProxDescent;
        c.lipschitz = Some(1.0);
        let x = e1(&[1.0]);
        let r = trapezoid_step(&x, &spec, &c).unwrap();
        assert_abs_diff_eq!(r.next.as_slice()[0], 0.95 / 1.05, epsilon = 1e-9);
        assert!(r.residual <= 1e-9);
    }

    #[test]
    fn fixed_point_iteration_count_matches_contraction() {
        // On the quadratic oracle the sweep contracts by exactly τL/2; the
        // iteration count should match the geometric prediction within ±2.
        let a = 1.0;
        let tau = 0.5;
        let spec = EnergySpec::quadratic_confinement(a);
        let c = cfg(SchemeKind::Trapezoid, tau, 1.0);
        let x = e1(&[1.0]);
        let r = trapezoid_step(&x, &spec, &c).unwrap();
        let q: f64 = tau * a / 2.0;
        // First sweep moves |x* − euler| ≈ q·τ·|g|-scale; predict iterations
        // from |initial gap|·q^k ≤ tol.
        let x_star = (1.0 - a * tau / 2.0) / (1.0 + a * tau / 2.0);
        let x_euler = 1.0 - tau * a;
        let gap = (x_star - x_euler).abs();
        let predicted = ((c.inner.tol / gap).ln() / q.ln()).ceil() as i64;
        assert!(
            (r.inner_iterations as i64 - predicted).abs() <= 2,
            "iters {} predicted {}",
            r.inner_iterations,
            predicted
        );
    }

    #[test]
    fn non_convergence_reports_best_residual() {
        // τL/2 > 1 breaks the fixed-point contraction.
        let spec = EnergySpec::quadratic_confinement(30.0);
        let mut c = cfg(SchemeKind::Trapezoid, 0.1, 1.0);
        c.inner.max_iters = 50;
        let x = e1(&[1.0]);
        match trapezoid_step(&x, &spec, &c) {
            Err(WgError::InnerSolver { iterations, .. }) => assert!(iterations <= 50),
            other => panic!("expected inner-solver error, got {other:?}"),
        }
    }

    #[test]
    fn lambda_admissibility() {
        let mut c = cfg(SchemeKind::Trapezoid, 1.0, 2.0);
        c.lambda = Some(-3.0);
        assert!(c.validate().is_err());
        c.lambda = Some(-1.5);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn trajectory_quadratic_oracle() {
        let spec = EnergySpec::quadratic_confinement(1.0);
        let mut c = cfg(SchemeKind::Trapezoid, 0.1, 1.0);
        c.inner.tol = 1e-13;
        let x0 = e1(&[1.0]);
        let (rec, snaps) = run_trajectory(&x0, &spec, &c, 5).unwrap();
        assert!(rec.meta.complete);
        assert_eq!(rec.rows.len(), 10);
        let last = snaps.last().unwrap();
        assert_eq!(last.0, 10);
        // ((0.95/1.05))^{10} vs e^{-1}
        let expect = (0.95f64 / 1.05).powi(10);
        assert_abs_diff_eq!(last.1.as_slice()[0], expect, epsilon = 1e-9);
        let err = (last.1.as_slice()[0] - (-1.0f64).exp()).abs();
        assert_abs_diff_eq!(err, 3.0689878857317214e-4, epsilon = 1e-8);
        // Snapshot steps: 0, 5, 10.
        let steps: Vec<usize> = snaps.iter().map(|s| s.0).collect();
        assert_eq!(steps, vec![0, 5, 10]);
    }

    #[test]
    fn trajectory_stationary_and_centroid() {
        let none = EnergySpec::none();
        let x0 = e1(&[0.3, -0.7]);
        let c = cfg(SchemeKind::Trapezoid, 0.1, 0.5);
        let (rec, snaps) = run_trajectory(&x0, &none, &c, 1).unwrap();
        for (_, s) in &snaps {
            assert_eq!(s, &x0);
        }
        for r in &rec.rows {
            assert_eq!(r.energy, rec.meta.initial_energy);
        }

        // Interaction-only flow conserves the centroid.
        let w = EnergySpec::quadratic_interaction(1.0);
        let x0 = e1(&[1.0, -0.5, 0.25]);
        let c0: f64 = x0.centroid()[0];
        let (_, snaps) = run_trajectory(&x0, &w, &c, 1).unwrap();
        for (_, s) in &snaps {
            assert!((s.centroid()[0] - c0).abs() <= 1e-12);
        }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let spec = EnergySpec::quadratic_confinement(1.0);
        let c = cfg(SchemeKind::Trapezoid, 0.25, 1.0);
        let (rec, _) = run_trajectory(&e1(&[1.0, 0.5]), &spec, &c, 2).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let back = TrajectoryRecord::read_csv(rec.meta.clone(), &buf[..]).unwrap();
        assert_eq!(rec, back);
    }

    #[test]
    fn step_count_rounding() {
        assert_eq!(step_count(0.1, 1.0), 10);
        assert_eq!(step_count(0.3, 1.0), 4);
        assert_eq!(step_count(1.0 / 3.0, 1.0), 3);
        assert_eq!(step_count(2.0, 1.0), 1);
    }

    #[test]
    fn incomplete_record_on_solver_failure() {
        let spec = EnergySpec::quadratic_confinement(30.0);
        let mut c = cfg(SchemeKind::Trapezoid, 0.1, 1.0);
        c.inner.max_iters = 20;
        let (rec, _) = run_trajectory(&e1(&[1.0]), &spec, &c, 1).unwrap();
        assert!(!rec.meta.complete);
        assert!(rec.meta.failure.is_some());
    }
}
