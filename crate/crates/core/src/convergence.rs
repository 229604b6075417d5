//! The τ-sweep experiment: run a family of trajectories to a common final
//! time on an exact rational grid, measure terminal L²(ρ₀) error against a
//! reference, and fit the observed convergence order.

use std::io::Write;
use std::sync::Mutex;
use std::time::Instant;

use num::rational::Ratio;
use num::{Signed, Zero};

use crate::bounds::{self, BoundInputs};
use crate::energy::EnergySpec;
use crate::ensemble::{l2_reference_distance, ParticleEnsemble};
use crate::error::{Result, WgError};
use crate::fmt_f64;
use crate::stepper::{run_trajectory_steps, InnerConfig, SchemeConfig, SchemeKind};

pub type Rational = Ratio<i64>;

/// Parses "p/q", "p", or decimal forms (each side of the slash may itself be
/// a decimal, e.g. "0.5/4096"), into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    fn decimal(part: &str) -> Result<Rational> {
        let part = part.trim();
        if part.is_empty() {
            return Err(WgError::Plan("empty rational component".into()));
        }
        match part.split_once('.') {
            None => {
                let n: i64 = part
                    .parse()
                    .map_err(|_| WgError::Plan(format!("bad integer {part}")))?;
                Ok(Rational::from_integer(n))
            }
            Some((int, frac)) => {
                if frac.is_empty() || frac.chars().any(|c| !c.is_ascii_digit()) {
                    return Err(WgError::Plan(format!("bad decimal {part}")));
                }
                let neg = int.trim_start().starts_with('-');
                let int_part: i64 = if int.is_empty() || int == "-" {
                    0
                } else {
                    int.parse()
                        .map_err(|_| WgError::Plan(format!("bad decimal {part}")))?
                };
                let num: i64 = frac
                    .parse()
                    .map_err(|_| WgError::Plan(format!("bad decimal {part}")))?;
                let den = 10i64
                    .checked_pow(frac.len() as u32)
                    .ok_or_else(|| WgError::Plan(format!("decimal {part} too precise")))?;
                let frac_r = Rational::new(num, den);
                let int_r = Rational::from_integer(int_part);
                Ok(if neg { int_r - frac_r } else { int_r + frac_r })
            }
        }
    }
    match s.split_once('/') {
        None => decimal(s),
        Some((a, b)) => {
            let num = decimal(a)?;
            let den = decimal(b)?;
            if den.is_zero() {
                return Err(WgError::Plan(format!("zero denominator in {s}")));
            }
            Ok(num / den)
        }
    }
}

pub fn rational_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Validation oracles with closed-form flows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticFlow {
    /// V = ½ a |x|²: X(t) = e^{−at} X₀.
    QuadraticConfinement { a: f64 },
    /// W = ½ |x|²: centroid fixed, deviations scaled by e^{−t}.
    QuadraticInteraction,
}

/// Exact-flow ensemble at time `t`.
pub fn analytic_oracle(flow: AnalyticFlow, x0: &ParticleEnsemble, t: f64) -> ParticleEnsemble {
    match flow {
        AnalyticFlow::QuadraticConfinement { a } => {
            let s = (-a * t).exp();
            let data: Vec<f64> = x0.as_slice().iter().map(|x| s * x).collect();
            ParticleEnsemble::new(x0.dim(), data).expect("scaled ensemble is valid")
        }
        AnalyticFlow::QuadraticInteraction => {
            let c = x0.centroid();
            let s = (-t).exp();
            let d = x0.dim();
            let data: Vec<f64> = x0
                .as_slice()
                .iter()
                .enumerate()
                .map(|(k, x)| c[k % d] + s * (x - c[k % d]))
                .collect();
            ParticleEnsemble::new(x0.dim(), data).expect("scaled ensemble is valid")
        }
    }
}

#[derive(Clone, Debug)]
pub enum ReferenceKind {
    /// Fine-τ trapezoid run at the given rational step.
    FineTau(Rational),
    Analytic(AnalyticFlow),
}

/// τ-sweep plan. All member runs and the reference share the initial
/// ensemble; every τ must divide the final time exactly in rational
/// arithmetic.
#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub taus: Vec<Rational>,
    pub t_final: Rational,
    pub reference: ReferenceKind,
    pub spec: EnergySpec,
    pub scheme: SchemeKind,
    pub inner: InnerConfig,
    pub lambda: Option<f64>,
    pub lipschitz: Option<f64>,
    /// Inputs for the theory-bound overlay column, when available.
    pub curvature_l2: Option<f64>,
    pub alpha: f64,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(WgError::Plan("tau list is empty".into()));
        }
        if !self.t_final.is_positive() {
            return Err(WgError::Plan("t_final must be positive".into()));
        }
        for tau in &self.taus {
            if !tau.is_positive() {
                return Err(WgError::Plan(format!("tau {tau} must be positive")));
            }
            if !(self.t_final / tau).is_integer() {
                return Err(WgError::Plan(format!(
                    "tau {tau} does not divide t_final {} exactly",
                    self.t_final
                )));
            }
        }
        if let ReferenceKind::FineTau(tau_ref) = &self.reference {
            if !tau_ref.is_positive() || !(self.t_final / tau_ref).is_integer() {
                return Err(WgError::Plan(format!(
                    "tau_ref {tau_ref} does not divide t_final {} exactly",
                    self.t_final
                )));
            }
            let min_tau = self.taus.iter().min().expect("non-empty");
            if tau_ref >= min_tau {
                return Err(WgError::Plan(format!(
                    "tau_ref {tau_ref} must be finer than every sweep tau"
                )));
            }
        }
        Ok(())
    }
}

/// Terminal error between a run and a reference at the identical rational
/// final time.
pub fn terminal_error(
    run: (Rational, &ParticleEnsemble),
    reference: (Rational, &ParticleEnsemble),
) -> Result<f64> {
    if run.0 != reference.0 {
        return Err(WgError::Plan(format!(
            "terminal times differ: {} vs {}",
            run.0, reference.0
        )));
    }
    l2_reference_distance(run.1, reference.1)
}

/// Least-squares slope of log error against log τ. Returns (order, residual)
/// where residual is the RMS of the log-space fit residuals.
pub fn fit_order(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(tau, err)| *tau > 0.0 && *err > 0.0)
        .map(|(tau, err)| (tau.ln(), err.ln()))
        .collect();
    if usable.len() < 2 {
        return Err(WgError::Fit(format!(
            "need at least 2 points with positive error, got {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mean_x = usable.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = usable.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = usable
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(WgError::Fit("all tau values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss: f64 = usable
        .iter()
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok((slope, (ss / n).sqrt()))
}

#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub tau: Rational,
    pub steps: usize,
    pub terminal_error: f64,
    /// Fitted order using rows up to and including this one (NaN until two
    /// usable rows exist).
    pub fitted_p_cumulative: f64,
    pub bound_overlay: Option<f64>,
    pub wall_secs: f64,
    pub failed: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub fitted_order: f64,
    pub fit_residual: f64,
    pub reference_desc: String,
}

impl ConvergenceReport {
    /// CSV: `tau,steps,terminal_error,fitted_p_cumulative,bound_overlay`
    /// plus a trailing `# fitted_order=<p> residual=<r>` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau,steps,terminal_error,fitted_p_cumulative,bound_overlay")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.tau,
                r.steps,
                fmt_f64(r.terminal_error),
                fmt_f64(r.fitted_p_cumulative),
                r.bound_overlay.map(fmt_f64).unwrap_or_default()
            )?;
        }
        writeln!(
            w,
            "# fitted_order={} residual={}",
            fmt_f64(self.fitted_order),
            fmt_f64(self.fit_residual)
        )?;
        Ok(())
    }
}

fn run_member(
    plan: &SweepPlan,
    x0: &ParticleEnsemble,
    tau: Rational,
) -> Result<(usize, ParticleEnsemble, f64)> {
    let steps: usize = (plan.t_final / tau)
        .to_integer()
        .try_into()
        .map_err(|_| WgError::Plan(format!("step count for tau {tau} overflows")))?;
    let mut cfg = SchemeConfig::new(plan.scheme, rational_to_f64(tau), rational_to_f64(plan.t_final));
    cfg.inner = plan.inner;
    cfg.lambda = plan.lambda;
    cfg.lipschitz = plan.lipschitz;
    let started = Instant::now();
    let (rec, snaps) = run_trajectory_steps(x0, &plan.spec, &cfg, steps.max(1), usize::MAX)?;
    let wall = started.elapsed().as_secs_f64();
    if !rec.meta.complete {
        return Err(WgError::Domain(
            rec.meta.failure.unwrap_or_else(|| "incomplete trajectory".into()),
        ));
    }
    let (_, terminal) = snaps.into_iter().last().expect("final snapshot present");
    Ok((steps, terminal, wall))
}

/// Runs the sweep. Member trajectories run concurrently up to `threads`
/// workers (0 = one per member); the report assembly is a deterministic
/// reduction in τ-descending order regardless of scheduling.
pub fn run_sweep(plan: &SweepPlan, x0: &ParticleEnsemble, threads: usize) -> Result<ConvergenceReport> {
    plan.validate()?;

    let mut taus = plan.taus.clone();
    taus.sort();
    taus.reverse(); // τ descending

    // Reference terminal state, computed once and reused.
    let (reference_terminal, reference_desc) = match &plan.reference {
        ReferenceKind::FineTau(tau_ref) => {
            let mut ref_plan = plan.clone();
            ref_plan.scheme = SchemeKind::Trapezoid;
            let (_, terminal, _) = run_member(&ref_plan, x0, *tau_ref)?;
            (terminal, format!("trapezoid run at tau_ref={tau_ref}"))
        }
        ReferenceKind::Analytic(flow) => (
            analytic_oracle(*flow, x0, rational_to_f64(plan.t_final)),
            format!("analytic oracle {flow:?}"),
        ),
    };

    // Worker pool over member indices; results land in slot order.
    let n_members = taus.len();
    let workers = if threads == 0 {
        n_members
    } else {
        threads.min(n_members)
    };
    let next_index = Mutex::new(0usize);
    let slots: Mutex<Vec<Option<std::result::Result<(usize, ParticleEnsemble, f64), String>>>> =
        Mutex::new(vec![None; n_members]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = {
                    let mut guard = next_index.lock().expect("index lock");
                    let i = *guard;
                    if i >= n_members {
                        return;
                    }
                    *guard += 1;
                    i
                };
                let outcome = run_member(plan, x0, taus[i]).map_err(|e| e.to_string());
                slots.lock().expect("slot lock")[i] = Some(outcome);
            });
        }
    });

    let results = slots.into_inner().expect("slot lock");
    let mut rows = Vec::with_capacity(n_members);
    let mut fit_points: Vec<(f64, f64)> = Vec::new();
    for (i, tau) in taus.iter().enumerate() {
        let outcome = results[i].clone().expect("worker filled slot");
        match outcome {
            Ok((steps, terminal, wall)) => {
                let err = terminal_error(
                    (plan.t_final, &terminal),
                    (plan.t_final, &reference_terminal),
                )?;
                fit_points.push((rational_to_f64(*tau), err));
                let cumulative = fit_order(&fit_points).map(|(p, _)| p).unwrap_or(f64::NAN);
                let overlay = match (plan.lambda, plan.lipschitz, plan.curvature_l2) {
                    (_, Some(l), Some(curv)) => bounds::smooth_error_bound(&BoundInputs {
                        lambda: plan.lambda.unwrap_or(0.0),
                        lipschitz: l,
                        tau: rational_to_f64(*tau),
                        t: rational_to_f64(plan.t_final),
                        init_error: 0.0,
                        init_grad_norm: 0.0,
                        curvature_l2: curv,
                        alpha: plan.alpha,
                    })
                    .ok(),
                    _ => None,
                };
                rows.push(ConvergenceRow {
                    tau: *tau,
                    steps,
                    terminal_error: err,
                    fitted_p_cumulative: cumulative,
                    bound_overlay: overlay,
                    wall_secs: wall,
                    failed: None,
                });
            }
            Err(msg) => rows.push(ConvergenceRow {
                tau: *tau,
                steps: 0,
                terminal_error: f64::NAN,
                fitted_p_cumulative: f64::NAN,
                bound_overlay: None,
                wall_secs: 0.0,
                failed: Some(msg),
            }),
        }
    }

    let (fitted_order, fit_residual) = fit_order(&fit_points)?;
    Ok(ConvergenceReport {
        rows,
        fitted_order,
        fit_residual,
        reference_desc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num::One;

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("1/64").unwrap(), Rational::new(1, 64));
        assert_eq!(parse_rational("2").unwrap(), Rational::from_integer(2));
        assert_eq!(parse_rational("0.5").unwrap(), Rational::new(1, 2));
        assert_eq!(parse_rational("0.5/4096").unwrap(), Rational::new(1, 8192));
        assert_eq!(parse_rational("-0.25").unwrap(), Rational::new(-1, 4));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn analytic_oracle_examples() {
        let x0 = ParticleEnsemble::from_1d(&[1.0]).unwrap();
        let flow = AnalyticFlow::QuadraticConfinement { a: 1.0 };
        let at1 = analytic_oracle(flow, &x0, 1.0);
        assert_abs_diff_eq!(at1.as_slice()[0], (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(analytic_oracle(flow, &x0, 0.0), x0);

        let pair = ParticleEnsemble::from_1d(&[1.0, -1.0]).unwrap();
        let half = analytic_oracle(AnalyticFlow::QuadraticInteraction, &pair, 2.0f64.ln());
        assert_abs_diff_eq!(half.as_slice()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(half.as_slice()[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn terminal_error_examples() {
        let x0 = ParticleEnsemble::from_1d(&[1.0]).unwrap();
        let t = Rational::one();
        assert_eq!(terminal_error((t, &x0), (t, &x0)).unwrap(), 0.0);
        let other = ParticleEnsemble::from_1d(&[0.5]).unwrap();
        assert!(terminal_error((t, &x0), (Rational::new(1, 2), &other)).is_err());
    }

    #[test]
    fn fit_order_examples() {
        let (p, r) = fit_order(&[(0.1, 1e-2), (0.05, 2.5e-3), (0.025, 6.25e-4)]).unwrap();
        assert_abs_diff_eq!(p, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        let (p, _) = fit_order(&[(0.1, 1e-1), (0.05, 5e-2)]).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        assert!(fit_order(&[(0.1, 1e-2)]).is_err());
        assert!(fit_order(&[(0.1, 0.0), (0.05, 0.0)]).is_err());
    }

    fn quadratic_plan(scheme: SchemeKind, ks: std::ops::RangeInclusive<u32>) -> SweepPlan {
        SweepPlan {
            taus: ks.map(|k| Rational::new(1, 1 << k)).collect(),
            t_final: Rational::one(),
            reference: ReferenceKind::Analytic(AnalyticFlow::QuadraticConfinement { a: 1.0 }),
            spec: EnergySpec::quadratic_confinement(1.0),
            scheme,
            inner: InnerConfig {
                tol: 1e-13,
                ..InnerConfig::default()
            },
            lambda: Some(1.0),
            lipschitz: Some(1.0),
            curvature_l2: None,
            alpha: 1.0,
        }
    }

    #[test]
    fn trapezoid_sweep_is_second_order() {
        let x0 = ParticleEnsemble::from_1d(&[1.0]).unwrap();
        let plan = quadratic_plan(SchemeKind::Trapezoid, 4..=9);
        let report = run_sweep(&plan, &x0, 0).unwrap();
        assert!(
            report.fitted_order > 1.95 && report.fitted_order < 2.05,
            "p = {}",
            report.fitted_order
        );
        // Rows in tau-descending order.
        for pair in report.rows.windows(2) {
            assert!(pair[0].tau > pair[1].tau);
        }
    }

    #[test]
    fn implicit_euler_sweep_is_first_order() {
        let x0 = ParticleEnsemble::from_1d(&[1.0]).unwrap();
        let plan = quadratic_plan(SchemeKind::ImplicitEuler, 4..=9);
        let report = run_sweep(&plan, &x0, 2).unwrap();
        assert!(
            report.fitted_order > 0.9 && report.fitted_order < 1.1,
            "p = {}",
            report.fitted_order
        );
    }

    #[test]
    fn self_reference_consistency() {
        // Swapping the analytic reference for a fine-τ run moves the fitted
        // order by < 0.1.
        let x0 = ParticleEnsemble::from_1d(&[1.0]).unwrap();
        let analytic = quadratic_plan(SchemeKind::Trapezoid, 4..=7);
        let p_analytic = run_sweep(&analytic, &x0, 0).unwrap().fitted_order;
        let mut fine = analytic.clone();
        fine.reference = ReferenceKind::FineTau(Rational::new(1, 1 << 10));
        let p_fine = run_sweep(&fine, &x0, 0).unwrap().fitted_order;
        assert!((p_analytic - p_fine).abs() < 0.1, "{p_analytic} vs {p_fine}");
    }

    #[test]
    fn plan_validation() {
        let mut plan = quadratic_plan(SchemeKind::Trapezoid, 4..=5);
        plan.t_final = Rational::new(1, 2);
        plan.taus.push(Rational::new(1, 3)); // (1/2)/(1/3) = 3/2, not integral
        assert!(plan.validate().is_err());

        let mut plan2 = quadratic_plan(SchemeKind::Trapezoid, 4..=5);
        plan2.reference = ReferenceKind::FineTau(Rational::new(1, 16)); // not finer
        assert!(plan2.validate().is_err());
    }

    #[test]
    fn report_csv_shape() {
        let x0 = ParticleEnsemble::from_1d(&[1.0]).unwrap();
        let plan = quadratic_plan(SchemeKind::Trapezoid, 4..=6);
        let report = run_sweep(&plan, &x0, 1).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau,steps,terminal_error,fitted_p_cumulative,bound_overlay\n"));
        assert!(text.contains("# fitted_order="));
        assert_eq!(text.lines().count(), 1 + 3 + 1);
    }
}
