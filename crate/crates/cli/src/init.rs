//! Deterministic initial-ensemble generation. All generators draw through a
//! counter-based stream keyed only by (seed, particle index, coordinate), so
//! particle i's position does not depend on the total count.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use wgflow_core::rng::CounterRng;
use wgflow_core::{ParticleEnsemble, Result, WgError};

use crate::config::InitSpec;

const STREAM_BLOB: u64 = 0x1217_0001;
const STREAM_ANGLE: u64 = 0x1217_0002;
const STREAM_RADIUS: u64 = 0x1217_0003;

pub fn generate_initial(
    dimension: usize,
    count: usize,
    init: &InitSpec,
    seed: u64,
) -> Result<ParticleEnsemble> {
    match init {
        InitSpec::GaussianBlob { center, std } => {
            if center.len() != dimension {
                return Err(WgError::Parameter("init center must match dimension".into()));
            }
            let rng = CounterRng::new(seed, STREAM_BLOB);
            let data: Vec<f64> = (0..count * dimension)
                .map(|k| center[k % dimension] + std * rng.normal(k as u64))
                .collect();
            ParticleEnsemble::new(dimension, data)
        }
        InitSpec::TwoBlobs { c1, c2, std } => {
            if c1.len() != dimension || c2.len() != dimension {
                return Err(WgError::Parameter("blob centers must match dimension".into()));
            }
            let rng = CounterRng::new(seed, STREAM_BLOB);
            let data: Vec<f64> = (0..count * dimension)
                .map(|k| {
                    let i = k / dimension;
                    let c = if i % 2 == 0 { c1 } else { c2 };
                    c[k % dimension] + std * rng.normal(k as u64)
                })
                .collect();
            ParticleEnsemble::new(dimension, data)
        }
        InitSpec::Ring { radius, std } => {
            if dimension != 2 {
                return Err(WgError::Parameter("ring init requires dimension 2".into()));
            }
            let angles = CounterRng::new(seed, STREAM_ANGLE);
            let radii = CounterRng::new(seed, STREAM_RADIUS);
            let mut data = Vec::with_capacity(count * 2);
            for i in 0..count {
                let theta = 2.0 * std::f64::consts::PI * angles.uniform(i as u64);
                let r = radius + std * radii.normal(i as u64);
                data.push(r * theta.cos());
                data.push(r * theta.sin());
            }
            ParticleEnsemble::new(2, data)
        }
        InitSpec::File { path } => {
            let file = File::open(Path::new(path)).map_err(|e| {
                WgError::Parameter(format!("cannot open initial ensemble {path}: {e}"))
            })?;
            let e = ParticleEnsemble::read_csv(BufReader::new(file))?;
            if e.dim() != dimension || e.len() != count {
                return Err(WgError::Parameter(format!(
                    "file ensemble is {}x{}, config wants {}x{}",
                    e.len(),
                    e.dim(),
                    count,
                    dimension
                )));
            }
            Ok(e)
        }
    }
}
