//! Closed-form calculators for the constants and error bounds of the
//! trapezoidal scheme's analysis, used to overlay theoretical curves on
//! observed errors. Pure stateless functions, double precision throughout.

use crate::error::{Result, WgError};

/// Inputs shared by the bound calculators.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoundInputs {
    /// Convexity modulus of the lifted energy.
    pub lambda: f64,
    /// Lipschitz constant of the lifted gradient.
    pub lipschitz: f64,
    pub tau: f64,
    /// Horizon (t or T depending on the bound).
    pub t: f64,
    /// ‖X₀^τ − Id‖_{L²(ρ₀)}
    pub init_error: f64,
    /// ‖∇φ^#(X₀^τ)‖_{L²(ρ₀)}
    pub init_grad_norm: f64,
    /// Hölder modulus of the exact flow's acceleration.
    pub curvature_l2: f64,
    /// Hölder exponent in (0, 1].
    pub alpha: f64,
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(WgError::Domain(msg.into()))
    }
}

/// λ_τ = (1/(2τ)) log((1+λτ)/(1−λτ)); requires |λ|τ < 1.
pub fn lambda_tau(lambda: f64, tau: f64) -> Result<f64> {
    require(tau > 0.0, "tau must be > 0")?;
    require(lambda.abs() * tau < 1.0, "|lambda|*tau must be < 1")?;
    Ok(((1.0 + lambda * tau) / (1.0 - lambda * tau)).ln() / (2.0 * tau))
}

/// λ_{τ,L} = log(1 + λτ(2 − Lτ)) / (2τ); requires λ ≥ 0 and τ ≤ 1/L.
pub fn lambda_tau_l(lambda: f64, tau: f64, lipschitz: f64) -> Result<f64> {
    require(tau > 0.0, "tau must be > 0")?;
    require(lambda >= 0.0, "lambda must be >= 0")?;
    require(lipschitz >= 0.0, "L must be >= 0")?;
    require(
        lipschitz == 0.0 || tau <= 1.0 / lipschitz,
        "tau must be <= 1/L",
    )?;
    Ok((1.0 + lambda * tau * (2.0 - lipschitz * tau)).ln() / (2.0 * tau))
}

/// One-step gradient growth factor C(λ,τ): 1 for λ ≥ 0, e^{2|λ_τ|τ}
/// (= (1−λτ)/(1+λτ)) for λ < 0.
pub fn gradient_decay_factor(lambda: f64, tau: f64) -> Result<f64> {
    let lt = lambda_tau(lambda, tau)?;
    if lambda >= 0.0 {
        Ok(1.0)
    } else {
        Ok((2.0 * lt.abs() * tau).exp())
    }
}

/// Stability factor C̃(λ,τ,T) = max{1, e^{−2λ_τ T}}.
pub fn stability_factor(lambda: f64, tau: f64, t_horizon: f64) -> Result<f64> {
    require(t_horizon >= 0.0, "T must be >= 0")?;
    let lt = lambda_tau(lambda, tau)?;
    Ok((-2.0 * lt * t_horizon).exp().max(1.0))
}

/// Lower-order constant C(λ_τ, t, τ) of the λ < 0 first-order estimate.
fn evi_lower_order_constant(lt: f64, t: f64, tau: f64) -> f64 {
    (1.0 + lt.abs() * (t + tau)) * (-lt * tau).exp()
        + (0.75 + (1.0 + (7.0 / 3.0) * lt.abs() * (t + tau)) * (-2.0 * lt * tau).exp()).sqrt()
}

/// First-order (O(τ)) error bound:
/// λ ≥ 0: √3·e₀ + (√33/2)·τ·g₀;
/// λ < 0: √3·e^{−λ_τ t}·e₀ + √3·C(λ_τ,t,τ)·τ·e^{−λ_τ t}·g₀.
pub fn evi_error_bound(inputs: &BoundInputs) -> Result<f64> {
    let BoundInputs {
        lambda,
        tau,
        t,
        init_error,
        init_grad_norm,
        ..
    } = *inputs;
    require(t >= 0.0, "t must be >= 0")?;
    let sqrt3 = 3.0f64.sqrt();
    if lambda >= 0.0 {
        // lambda_tau still validates |λ|τ < 1.
        lambda_tau(lambda, tau)?;
        Ok(sqrt3 * init_error + (33.0f64.sqrt() / 2.0) * tau * init_grad_norm)
    } else {
        let lt = lambda_tau(lambda, tau)?;
        let growth = (-lt * t).exp();
        Ok(sqrt3 * growth * init_error
            + sqrt3 * evi_lower_order_constant(lt, t, tau) * tau * growth * init_grad_norm)
    }
}

/// K(λ_τ, T, τ′) of the two-step-size comparison bound (λ < 0 regime).
/// The analysis subscripts the modulus inconsistently between the two
/// occurrences; this calculator takes one λ_τ and uses it for both.
pub fn k_constant(lambda_tau_value: f64, t_horizon: f64, tau_prime: f64) -> Result<f64> {
    require(lambda_tau_value <= 0.0, "lambda_tau must be <= 0")?;
    let lt = lambda_tau_value;
    let inner = 0.75
        + (1.0 - (7.0 / 3.0) * lt * (t_horizon + tau_prime)) * (-2.0 * lt * tau_prime).exp();
    Ok(inner.sqrt() + lt.abs() * (t_horizon + tau_prime) * (-lt * tau_prime).exp())
}

/// Ratio λ/λ_{τ,L} with its removable singularity at λ → 0 filled by the
/// limit 2/(2 − Lτ).
fn lambda_ratio(lambda: f64, tau: f64, lipschitz: f64, ltl: f64) -> f64 {
    if lambda < 1e-12 {
        2.0 / (2.0 - lipschitz * tau)
    } else {
        lambda / ltl
    }
}

/// Refined (λ ≥ 0, L-smooth) error bound:
/// √3 e^{−λ_{τ,L} t} (e₀ + C̃(λ,t,τ)·τ·g₀).
pub fn refined_error_bound(inputs: &BoundInputs) -> Result<f64> {
    let BoundInputs {
        lambda,
        lipschitz,
        tau,
        t,
        init_error,
        init_grad_norm,
        ..
    } = *inputs;
    require(t >= 0.0, "t must be >= 0")?;
    let ltl = lambda_tau_l(lambda, tau, lipschitz)?;
    let ratio = lambda_ratio(lambda, tau, lipschitz, ltl);
    let c_tilde = (ltl * tau).exp()
        + ratio.sqrt() * (t + tau)
        + (ratio * (1.0 + 2.0 * lambda * (t + tau))
            + lambda * (t + tau)
            + (2.0 * ltl * tau).exp())
        .sqrt();
    Ok(3.0f64.sqrt() * (-ltl * t).exp() * (init_error + c_tilde * tau * init_grad_norm))
}

/// Smooth-regime (second-order) bound:
/// e^{2LT}·e₀ + 2·(curvature/L)·(e^{2LT} − 1)·τ^{1+α}.
pub fn smooth_error_bound(inputs: &BoundInputs) -> Result<f64> {
    let BoundInputs {
        lipschitz,
        tau,
        t,
        init_error,
        curvature_l2,
        alpha,
        ..
    } = *inputs;
    require(lipschitz > 0.0, "L must be > 0")?;
    require(tau > 0.0 && tau <= 1.0 / lipschitz, "tau must be in (0, 1/L]")?;
    require(t >= 0.0, "T must be >= 0")?;
    require(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]")?;
    require(init_error >= 0.0 && curvature_l2 >= 0.0, "inputs must be >= 0")?;
    let growth = (2.0 * lipschitz * t).exp();
    Ok(growth * init_error + 2.0 * (curvature_l2 / lipschitz) * (growth - 1.0) * tau.powf(1.0 + alpha))
}
