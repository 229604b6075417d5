//! The model energy on empirical measures, its particle-level Wasserstein
//! gradient, and empirical convexity/smoothness probes.
//!
//! The energy of an ensemble X = (X_1, ..., X_N) is
//!
//!   E(X) = (1/N) Σ_i f((ρ⋆χ_σ)(X_i)) + (1/N) Σ_i V(X_i)
//!        + (1/(2N²)) Σ_i Σ_j W(X_i − X_j),
//!
//! with χ_σ the isotropic Gaussian density of width σ. The diagonal i = j of
//! the interaction sum is included; every built-in W is finite at 0 and
//! ∇W(0) = 0, so gradients are unaffected. Summation order is fixed (outer i
//! ascending, inner j ascending) so identical inputs reproduce bit-identical
//! values.

use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Result, WgError};
use crate::rng::CounterRng;

/// Scalar internal-energy density f with its first two derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarField1D {
    None,
    Identity,
    LogRegularized { scale: f64, eps: f64 },
    Quadratic { a: f64 },
}

impl ScalarField1D {
    pub fn is_none(&self) -> bool {
        matches!(self, ScalarField1D::None)
    }

    pub fn in_domain(&self, s: f64) -> bool {
        match self {
            ScalarField1D::LogRegularized { eps, .. } => s > -eps,
            _ => true,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            ScalarField1D::None => 0.0,
            ScalarField1D::Identity => s,
            ScalarField1D::LogRegularized { scale, eps } => scale * (s + eps).ln(),
            ScalarField1D::Quadratic { a } => 0.5 * a * s * s,
        }
    }

    pub fn d1(&self, s: f64) -> f64 {
        match self {
            ScalarField1D::None => 0.0,
            ScalarField1D::Identity => 1.0,
            ScalarField1D::LogRegularized { scale, eps } => scale / (s + eps),
            ScalarField1D::Quadratic { a } => a * s,
        }
    }

    pub fn d2(&self, s: f64) -> f64 {
        match self {
            ScalarField1D::None => 0.0,
            ScalarField1D::Identity => 0.0,
            ScalarField1D::LogRegularized { scale, eps } => -scale / ((s + eps) * (s + eps)),
            ScalarField1D::Quadratic { a } => *a,
        }
    }
}

/// Radial (even) potential with value and gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialPotential {
    None,
    /// V(x) = ½ a |x|²
    Quadratic { a: f64 },
    /// V(x) = |x|², i.e. quadratic without the ½ factor; ∇V = 2x.
    QuadraticPaper,
    /// W(x) = c log(eps² + |x|²)
    LogRegularized { c: f64, eps: f64 },
}

impl RadialPotential {
    pub fn is_none(&self) -> bool {
        matches!(self, RadialPotential::None)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            RadialPotential::None => 0.0,
            RadialPotential::Quadratic { a } => 0.5 * a * r2,
            RadialPotential::QuadraticPaper => r2,
            RadialPotential::LogRegularized { c, eps } => c * (eps * eps + r2).ln(),
        }
    }

    /// Writes the gradient into `out` (accumulating).
    pub fn accumulate_grad(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        match self {
            RadialPotential::None => {}
            RadialPotential::Quadratic { a } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o += weight * a * v;
                }
            }
            RadialPotential::QuadraticPaper => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o += weight * 2.0 * v;
                }
            }
            RadialPotential::LogRegularized { c, eps } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let s = 2.0 * c / (eps * eps + r2);
                for (o, v) in out.iter_mut().zip(x) {
                    *o += weight * s * v;
                }
            }
        }
    }
}

/// The triple (f, V, W) plus mollifier width σ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySpec {
    pub f: ScalarField1D,
    pub sigma: f64,
    pub potential: RadialPotential,
    pub interaction: RadialPotential,
}

impl EnergySpec {
    pub fn new(
        f: ScalarField1D,
        sigma: f64,
        potential: RadialPotential,
        interaction: RadialPotential,
    ) -> Result<Self> {
        if !f.is_none() && !(sigma > 0.0) {
            return Err(WgError::Parameter(
                "mollifier width sigma must be > 0 when f is present".into(),
            ));
        }
        Ok(EnergySpec {
            f,
            sigma,
            potential,
            interaction,
        })
    }

    /// Energy with all terms absent; the flow is stationary.
    pub fn none() -> Self {
        EnergySpec {
            f: ScalarField1D::None,
            sigma: 1.0,
            potential: RadialPotential::None,
            interaction: RadialPotential::None,
        }
    }

    /// Confinement only: V(x) = ½ a |x|².
    pub fn quadratic_confinement(a: f64) -> Self {
        EnergySpec {
            f: ScalarField1D::None,
            sigma: 1.0,
            potential: RadialPotential::Quadratic { a },
            interaction: RadialPotential::None,
        }
    }

    /// Interaction only: W(x) = ½ a |x|².
    pub fn quadratic_interaction(a: f64) -> Self {
        EnergySpec {
            f: ScalarField1D::None,
            sigma: 1.0,
            potential: RadialPotential::None,
            interaction: RadialPotential::Quadratic { a },
        }
    }

    /// Stable hash of the canonical serialization, carried by trajectory
    /// records so mismatched spec/record pairs are rejected.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("energy spec serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{:02x}", b)).collect()
    }
}

/// Per-particle gradient vectors, aligned with particle indices.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    dim: usize,
    data: Vec<f64>,
}

impl GradientField {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(WgError::Parameter("bad gradient field shape".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(WgError::Parameter("gradient entries must be finite".into()));
        }
        Ok(GradientField { dim, data })
    }

    pub fn zeros_like(e: &ParticleEnsemble) -> Self {
        GradientField {
            dim: e.dim(),
            data: vec![0.0; e.as_slice().len()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vec(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn aligned_with(&self, e: &ParticleEnsemble) -> bool {
        self.dim == e.dim() && self.data.len() == e.as_slice().len()
    }

    /// ‖g‖_{L²(ρ₀)} = sqrt((1/N) Σ_i |g_i|²).
    pub fn l2_rho_norm(&self) -> f64 {
        let n = self.len() as f64;
        (self.data.iter().map(|x| x * x).sum::<f64>() / n).sqrt()
    }
}

fn gaussian_coeff(dim: usize, sigma: f64) -> f64 {
    (2.0 * std::f64::consts::PI * sigma * sigma).powf(-(dim as f64) / 2.0)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// (ρ⋆χ_σ)(x) = (1/N) Σ_j χ_σ(x − X_j), χ_σ the N(0, σ² Id) density.
pub fn mollified_density(e: &ParticleEnsemble, sigma: f64, x: &[f64]) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(WgError::Parameter("sigma must be > 0".into()));
    }
    if x.len() != e.dim() {
        return Err(WgError::Parameter(format!(
            "query point dimension {} does not match ensemble dimension {}",
            x.len(),
            e.dim()
        )));
    }
    let coeff = gaussian_coeff(e.dim(), sigma);
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let mut acc = 0.0;
    for j in 0..e.len() {
        acc += coeff * (-sq_dist(x, e.point(j)) * inv2s2).exp();
    }
    Ok(acc / e.len() as f64)
}

/// Mollified densities at every particle, in index order.
fn densities_at_particles(e: &ParticleEnsemble, sigma: f64) -> Vec<f64> {
    let coeff = gaussian_coeff(e.dim(), sigma);
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let n = e.len();
    let mut dens = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += coeff * (-sq_dist(e.point(i), e.point(j)) * inv2s2).exp();
        }
        dens[i] = acc / n as f64;
    }
    dens
}

/// Discrete energy value; errors name the first particle whose mollified
/// density leaves f's domain.
pub fn energy_value(e: &ParticleEnsemble, spec: &EnergySpec) -> Result<f64> {
    let n = e.len();
    let nf = n as f64;
    let mut total = 0.0;

    if !spec.f.is_none() {
        if !(spec.sigma > 0.0) {
            return Err(WgError::Parameter("sigma must be > 0".into()));
        }
        let dens = densities_at_particles(e, spec.sigma);
        let mut acc = 0.0;
        for (i, &s) in dens.iter().enumerate() {
            if !spec.f.in_domain(s) {
                return Err(WgError::Evaluation {
                    index: i,
                    reason: format!("mollified density {s} outside the domain of f"),
                });
            }
            acc += spec.f.value(s);
        }
        total += acc / nf;
    }

    if !spec.potential.is_none() {
        let mut acc = 0.0;
        for i in 0..n {
            acc += spec.potential.value(e.point(i));
        }
        total += acc / nf;
    }

    if !spec.interaction.is_none() {
        let mut acc = 0.0;
        for i in 0..n {
            let pi = e.point(i);
            let mut row = 0.0;
            for j in 0..n {
                let pj = e.point(j);
                let diff: Vec<f64> = pi.iter().zip(pj).map(|(a, b)| a - b).collect();
                row += spec.interaction.value(&diff);
            }
            acc += row;
        }
        total += acc / (2.0 * nf * nf);
    }

    Ok(total)
}

/// Particle-level Wasserstein gradient of the discrete energy:
///
///   g_i = (1/N) Σ_j (f′(ρ̂_i) + f′(ρ̂_j)) ∇χ_σ(X_i − X_j)
///       + ∇V(X_i) + (1/N) Σ_j ∇W(X_i − X_j),
///
/// with ρ̂_i the mollified density at X_i. The symmetrized f′ term is what
/// makes this field the exact gradient of `energy_value`.
pub fn wasserstein_gradient(e: &ParticleEnsemble, spec: &EnergySpec) -> Result<GradientField> {
    let n = e.len();
    let nf = n as f64;
    let d = e.dim();
    let mut g = vec![0.0; n * d];

    if !spec.f.is_none() {
        if !(spec.sigma > 0.0) {
            return Err(WgError::Parameter("sigma must be > 0".into()));
        }
        let dens = densities_at_particles(e, spec.sigma);
        let mut fp = vec![0.0; n];
        for (i, &s) in dens.iter().enumerate() {
            if !spec.f.in_domain(s) {
                return Err(WgError::Evaluation {
                    index: i,
                    reason: format!("mollified density {s} outside the domain of f"),
                });
            }
            fp[i] = spec.f.d1(s);
        }
        let coeff = gaussian_coeff(d, spec.sigma);
        let inv_s2 = 1.0 / (spec.sigma * spec.sigma);
        for i in 0..n {
            let pi = e.point(i);
            let gi = &mut g[i * d..(i + 1) * d];
            for j in 0..n {
                let pj = e.point(j);
                let r2 = sq_dist(pi, pj);
                // ∇χ_σ(z) = −z/σ² · χ_σ(z)
                let chi = coeff * (-r2 * 0.5 * inv_s2).exp();
                let w = (fp[i] + fp[j]) * chi * inv_s2 / nf;
                for k in 0..d {
                    gi[k] += w * (pj[k] - pi[k]);
                }
            }
        }
    }

    if !spec.potential.is_none() {
        for i in 0..n {
            let pi = e.point(i);
            spec.potential
                .accumulate_grad(pi, 1.0, &mut g[i * d..(i + 1) * d]);
        }
    }

    if !spec.interaction.is_none() {
        for i in 0..n {
            let pi = e.point(i);
            let mut row = vec![0.0; d];
            for j in 0..n {
                let pj = e.point(j);
                let diff: Vec<f64> = pi.iter().zip(pj).map(|(a, b)| a - b).collect();
                spec.interaction.accumulate_grad(&diff, 1.0, &mut row);
            }
            let gi = &mut g[i * d..(i + 1) * d];
            for k in 0..d {
                gi[k] += row[k] / nf;
            }
        }
    }

    GradientField::new(d, g)
}

/// ‖∇φ^#(X)‖_{L²(ρ₀)} of the current iterate.
pub fn lifted_gradient_norm(e: &ParticleEnsemble, spec: &EnergySpec) -> Result<f64> {
    Ok(wasserstein_gradient(e, spec)?.l2_rho_norm())
}

/// Default finite-difference step for `convexity_probe`: balances truncation
/// against rounding for doubles at the ensemble's scale.
pub fn default_probe_step(e: &ParticleEnsemble) -> f64 {
    1e-4 * (1.0 + e.rms_radius())
}

fn displaced(e: &ParticleEnsemble, v: &GradientField, t: f64) -> Result<ParticleEnsemble> {
    let data: Vec<f64> = e
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(x, w)| x + t * w)
        .collect();
    ParticleEnsemble::new(e.dim(), data)
}

/// Directional first derivative (analytic, via the gradient field) and second
/// derivative (central finite difference with step `h`) of the energy along
/// the straight-line displacement t ↦ X + t v.
pub fn convexity_probe(
    e: &ParticleEnsemble,
    v: &GradientField,
    spec: &EnergySpec,
    h: f64,
) -> Result<(f64, f64)> {
    if !v.aligned_with(e) {
        return Err(WgError::Alignment);
    }
    if !(h > 0.0) {
        return Err(WgError::Parameter("probe step h must be > 0".into()));
    }
    let g = wasserstein_gradient(e, spec)?;
    let n = e.len() as f64;
    let first = g
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n;
    let e_plus = energy_value(&displaced(e, v, h)?, spec)?;
    let e_mid = energy_value(e, spec)?;
    let e_minus = energy_value(&displaced(e, v, -h)?, spec)?;
    let second = (e_plus - 2.0 * e_mid + e_minus) / (h * h);
    Ok((first, second))
}

/// Streams for the perturbation sampler; fixed so estimates are reproducible.
const STREAM_XI1: u64 = 0x5EED_0001;
const STREAM_XI2: u64 = 0x5EED_0002;

fn perturbed(e: &ParticleEnsemble, rng: &CounterRng, base_counter: u64, radius: f64) -> ParticleEnsemble {
    let data: Vec<f64> = e
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, x)| x + radius * rng.normal(base_counter + k as u64))
        .collect();
    ParticleEnsemble::from_raw(e.dim(), data)
}

fn sample_secant_ratios<F>(
    spec: &EnergySpec,
    base: &ParticleEnsemble,
    samples: usize,
    radius: f64,
    seed: u64,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(f64, f64, f64), // (inner product / N, ||dxi||^2, ||dg||^2) per pair
{
    if samples == 0 {
        return Err(WgError::Parameter("samples must be >= 1".into()));
    }
    if !(radius > 0.0) {
        return Err(WgError::Parameter("radius must be > 0".into()));
    }
    let r1 = CounterRng::new(seed, STREAM_XI1);
    let r2 = CounterRng::new(seed, STREAM_XI2);
    let stride = base.as_slice().len() as u64;
    let mut consecutive_degenerate = 0usize;
    let mut draw = 0u64;
    let mut accepted = 0usize;
    while accepted < samples {
        let xi1 = perturbed(base, &r1, draw * stride, radius);
        let xi2 = perturbed(base, &r2, draw * stride, radius);
        draw += 1;
        let n = base.len() as f64;
        let den: f64 = xi1
            .as_slice()
            .iter()
            .zip(xi2.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        if den == 0.0 {
            consecutive_degenerate += 1;
            if consecutive_degenerate >= 100 {
                return Err(WgError::Sampling(consecutive_degenerate));
            }
            continue;
        }
        consecutive_degenerate = 0;
        let g1 = wasserstein_gradient(&xi1, spec)?;
        let g2 = wasserstein_gradient(&xi2, spec)?;
        let mut ip = 0.0;
        let mut dg2 = 0.0;
        for ((a, b), (ga, gb)) in xi1
            .as_slice()
            .iter()
            .zip(xi2.as_slice())
            .zip(g1.as_slice().iter().zip(g2.as_slice()))
        {
            let dx = a - b;
            let dg = ga - gb;
            ip += dg * dx;
            dg2 += dg * dg;
        }
        visit(ip / n, den, dg2 / n);
        accepted += 1;
    }
    Ok(())
}

/// Empirical lower estimate of the convexity modulus λ of the lifted energy:
/// min over sampled pairs of ⟨g(ξ₁)−g(ξ₂), ξ₁−ξ₂⟩ / ‖ξ₁−ξ₂‖².
pub fn estimate_lambda(
    spec: &EnergySpec,
    base: &ParticleEnsemble,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    let mut min = f64::INFINITY;
    sample_secant_ratios(spec, base, samples, radius, seed, |ip, den, _| {
        let r = ip / den;
        if r < min {
            min = r;
        }
    })?;
    Ok(min)
}

/// Empirical maximum of ‖g(ξ₁)−g(ξ₂)‖ / ‖ξ₁−ξ₂‖ over the same protocol.
pub fn estimate_lipschitz(
    spec: &EnergySpec,
    base: &ParticleEnsemble,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    let mut max = 0.0f64;
    sample_secant_ratios(spec, base, samples, radius, seed, |_, den, dg2| {
        let r = (dg2 / den).sqrt();
        if r > max {
            max = r;
        }
    })?;
    Ok(max)
}
