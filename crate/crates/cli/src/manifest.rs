//! The per-run manifest: a JSON record of exactly what was run, with enough
//! metadata to replay the run or validate its time series later.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wgflow_core::stepper::{InnerConfig, TrajectoryMeta};
use wgflow_core::{ParticleEnsemble, Result, WgError};

use crate::config::RunConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub taus: Vec<String>,
    pub reference: String,
    pub t_final: String,
    pub fitted_order: f64,
    pub fit_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Resolved configuration echo (canonical form).
    pub config: RunConfig,
    /// Digest of the canonical config serialization.
    pub config_digest: String,
    /// Digest of the energy specification.
    pub energy_digest: String,
    /// Digest of the initial ensemble's snapshot CSV bytes.
    pub initial_digest: String,
    /// Inner-solver settings actually used, with `auto` rates resolved.
    pub resolved_inner: InnerConfig,
    pub trajectory: Option<TrajectoryMeta>,
    pub sweep: Option<SweepSummary>,
    pub wall_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn ensemble_digest(e: &ParticleEnsemble) -> Result<String> {
    let mut buf = Vec::new();
    e.write_csv(&mut buf)?;
    Ok(sha256_hex(&buf))
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path)
            .map_err(|e| WgError::Parameter(format!("cannot create {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| WgError::Format(format!("manifest serialization: {e}")))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| WgError::Parameter(format!("cannot open {}: {e}", path.display())))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| WgError::Format(format!("bad manifest {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_stable() {
        let e = ParticleEnsemble::from_1d(&[1.0, 2.0]).unwrap();
        let d1 = ensemble_digest(&e).unwrap();
        let d2 = ensemble_digest(&e).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1.len(), 64);
        let other = ParticleEnsemble::from_1d(&[1.0, 2.5]).unwrap();
        assert_ne!(d1, ensemble_digest(&other).unwrap());
    }
}
