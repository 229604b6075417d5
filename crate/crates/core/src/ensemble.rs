//! Particle ensembles and the two distances used throughout: the
//! same-reference L²(ρ₀) distance and exact W2 between small empirical
//! measures.

use std::io::{BufRead, Write};

use crate::error::{Result, WgError};
use crate::fmt_f64;

/// Largest ensemble accepted by the exact assignment solver (O(N³)).
pub const DEFAULT_ASSIGNMENT_CAP: usize = 512;

/// Positions of N equally weighted particles in R^d. The particle index is
/// the Lagrangian label: operations never reorder particles.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>, // flat, row-major: particle i at [i*dim .. (i+1)*dim]
}

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(WgError::Parameter("dimension must be >= 1".into()));
        }
        if positions.is_empty() || positions.len() % dim != 0 {
            return Err(WgError::Parameter(format!(
                "position buffer of length {} is not a positive multiple of dim {}",
                positions.len(),
                dim
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(WgError::Parameter(
                "particle coordinates must be finite".into(),
            ));
        }
        Ok(ParticleEnsemble { dim, positions })
    }

    /// Convenience constructor for 1-d ensembles.
    pub fn from_1d(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.positions
    }

    pub(crate) fn from_raw(dim: usize, positions: Vec<f64>) -> Self {
        debug_assert!(positions.len() % dim == 0 && !positions.is_empty());
        ParticleEnsemble { dim, positions }
    }

    pub fn check_comparable(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.len() != other.len() {
            return Err(WgError::Comparability {
                n_a: self.len(),
                d_a: self.dim,
                n_b: other.len(),
                d_b: other.dim,
            });
        }
        Ok(())
    }

    /// Root-mean-square particle radius, used to scale probe steps.
    pub fn rms_radius(&self) -> f64 {
        let n = self.len() as f64;
        (self.positions.iter().map(|x| x * x).sum::<f64>() / n).sqrt()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (k, ck) in c.iter_mut().enumerate() {
                *ck += self.point(i)[k];
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|x| *x /= n);
        c
    }

    /// Snapshot CSV: `particle_index,x0,...,x{d-1}`, index ascending.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("particle_index");
        for k in 0..self.dim {
            header.push_str(&format!(",x{}", k));
        }
        writeln!(w, "{}", header)?;
        for i in 0..self.len() {
            let mut line = i.to_string();
            for v in self.point(i) {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(w, "{}", line)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| WgError::Format("empty snapshot file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"particle_index") || cols.len() < 2 {
            return Err(WgError::Format(format!("bad snapshot header: {header}")));
        }
        let dim = cols.len() - 1;
        let mut positions = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != dim + 1 {
                return Err(WgError::Format(format!(
                    "snapshot row {row} has {} fields, expected {}",
                    fields.len(),
                    dim + 1
                )));
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| WgError::Format(format!("bad particle index {}", fields[0])))?;
            if idx != row {
                return Err(WgError::Format(format!(
                    "particle index {idx} out of order at row {row}"
                )));
            }
            for f in &fields[1..] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| WgError::Format(format!("bad float {f}")))?;
                positions.push(v);
            }
        }
        Self::new(dim, positions)
    }
}

/// ‖a − b‖_{L²(ρ₀)} = sqrt((1/N) Σ_i |a_i − b_i|²), the identity-coupling
/// upper bound on W2 used as the error metric.
pub fn l2_reference_distance(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<f64> {
    a.check_comparable(b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Exact W2 between the two uniform empirical measures, via an optimal
/// assignment on the squared-Euclidean cost matrix.
pub fn exact_w2(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<f64> {
    exact_w2_capped(a, b, DEFAULT_ASSIGNMENT_CAP)
}

pub fn exact_w2_capped(a: &ParticleEnsemble, b: &ParticleEnsemble, cap: usize) -> Result<f64> {
    a.check_comparable(b)?;
    let n = a.len();
    if n > cap {
        return Err(WgError::Capacity { n, cap });
    }
    let d = a.dim();
    // Row-major cost matrix in particle order for determinism.
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        let pi = a.point(i);
        for j in 0..n {
            let pj = b.point(j);
            let mut s = 0.0;
            for k in 0..d {
                let z = pi[k] - pj[k];
                s += z * z;
            }
            cost[i * n + j] = s;
        }
    }
    let total = min_cost_assignment(n, &cost);
    Ok((total / n as f64).max(0.0).sqrt())
}

/// W2 bound after applying an `l`-Lipschitz map to both measures.
pub fn lipschitz_pushforward_bound(
    l: f64,
    a: &ParticleEnsemble,
    b: &ParticleEnsemble,
) -> Result<f64> {
    if !(l >= 0.0) {
        return Err(WgError::Parameter("Lipschitz constant must be >= 0".into()));
    }
    Ok(l * exact_w2(a, b)?)
}

/// Exact minimum-cost perfect matching on an n x n matrix (Hungarian method
/// with potentials, O(n³)). Returns the optimal total cost.
fn min_cost_assignment(n: usize, cost: &[f64]) -> f64 {
    const INF: f64 = f64::INFINITY;
    // 1-based arrays; p[j] = row matched to column j, p[0] is the active row.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        total += cost[(p[j] - 1) * n + (j - 1)];
    }
    total
}
