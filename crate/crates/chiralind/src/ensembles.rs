//! Seeded, reproducible generators for clean and disordered hopping chains,
//! plus deterministic parameter-sweep scaffolding.
//!
//! Determinism contract: every chain and every sweep row is a pure function
//! of the spec and seeds; parallel scheduling never changes output.

use crate::error::{ChiralError, Result};
use crate::model::{condition_number, HoppingChain, KAPPA_MAX_DEFAULT};
use crate::{c, CMat};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Scalar coupling distribution.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dist {
    Const { value: f64 },
    /// Uniform on `[lo, hi]`, `lo > 0`.
    Uniform { lo: f64, hi: f64 },
    /// `log x` uniform on `[log lo, log hi]`, `lo > 0`.
    LogUniform { lo: f64, hi: f64 },
    /// `log x` normal with the given mean and standard deviation.
    LogNormal { mu_log: f64, sigma_log: f64 },
}

impl Dist {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Dist::Const { value } => *value != 0.0,
            Dist::Uniform { lo, hi } | Dist::LogUniform { lo, hi } => *lo > 0.0 && hi > lo,
            Dist::LogNormal { sigma_log, .. } => *sigma_log >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ChiralError::Config(format!(
                "distribution support must exclude a neighborhood of zero: {self:?}"
            )))
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Dist::Const { value } => *value,
            Dist::Uniform { lo, hi } => Uniform::new_inclusive(*lo, *hi).sample(rng),
            Dist::LogUniform { lo, hi } => {
                Uniform::new_inclusive(lo.ln(), hi.ln()).sample(rng).exp()
            }
            Dist::LogNormal { mu_log, sigma_log } => {
                if *sigma_log == 0.0 {
                    mu_log.exp()
                } else {
                    LogNormal::new(*mu_log, *sigma_log).unwrap().sample(rng)
                }
            }
        }
    }

    /// `E log x` where available in closed form.
    pub fn mean_log(&self) -> f64 {
        match self {
            Dist::Const { value } => value.abs().ln(),
            Dist::Uniform { lo, hi } => {
                // E log x for x uniform on [lo, hi]
                (hi * hi.ln() - lo * lo.ln()) / (hi - lo) - 1.0
            }
            Dist::LogUniform { lo, hi } => 0.5 * (lo.ln() + hi.ln()),
            Dist::LogNormal { mu_log, .. } => *mu_log,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Constant matrices from the distributions' `Const` values.
    Clean,
    /// `A_n, B_n = (scalar sample) x identity`.
    ScalarDiag,
    /// Complex Ginibre matrices, rejected until well-conditioned.
    FullRandomGl,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DisorderSpec {
    pub channels: usize,
    pub length: usize,
    pub a_dist: Dist,
    pub b_dist: Dist,
    pub structure: Structure,
    pub seed: u64,
}

const GINIBRE_RETRIES: usize = 100;
const GINIBRE_COND_MAX: f64 = 1e4;

fn ginibre(rng: &mut ChaCha8Rng, n: usize) -> Result<CMat> {
    let normal = Normal::new(0.0, (2.0 * n as f64).sqrt().recip()).unwrap();
    for _ in 0..GINIBRE_RETRIES {
        let m = CMat::from_fn(n, n, |_, _| {
            Complex64::new(normal.sample(rng), normal.sample(rng))
        });
        if condition_number(&m) <= GINIBRE_COND_MAX {
            return Ok(m);
        }
    }
    Err(ChiralError::GenerationFailure(format!(
        "no well-conditioned Ginibre sample in {GINIBRE_RETRIES} tries (N = {n})"
    )))
}

/// Deterministic chain from a disorder spec: identical spec, identical chain.
pub fn generate(spec: &DisorderSpec) -> Result<HoppingChain> {
    if spec.channels == 0 || spec.length == 0 {
        return Err(ChiralError::Config(
            "channels and length must be positive".into(),
        ));
    }
    spec.a_dist.validate()?;
    spec.b_dist.validate()?;
    if spec.structure == Structure::Clean {
        let constant = matches!(spec.a_dist, Dist::Const { .. })
            && matches!(spec.b_dist, Dist::Const { .. });
        if !constant {
            return Err(ChiralError::Config(
                "clean structure requires const distributions".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.channels;
    let mut a = Vec::with_capacity(spec.length);
    let mut b = Vec::with_capacity(spec.length);
    for _ in 0..spec.length {
        match spec.structure {
            Structure::Clean | Structure::ScalarDiag => {
                let av = spec.a_dist.sample(&mut rng);
                let bv = spec.b_dist.sample(&mut rng);
                a.push(CMat::identity(n, n) * c(av));
                b.push(CMat::identity(n, n) * c(bv));
            }
            Structure::FullRandomGl => {
                let scale_a = spec.a_dist.sample(&mut rng);
                let scale_b = spec.b_dist.sample(&mut rng);
                a.push(ginibre(&mut rng, n)? * c(scale_a));
                b.push(ginibre(&mut rng, n)? * c(scale_b));
            }
        }
    }
    let chain = HoppingChain::new(0, n, a, b)?;
    chain.validate(&crate::model::BoundarySpec::DirichletCut, KAPPA_MAX_DEFAULT)?;
    Ok(chain)
}

/// splitmix64 step, used to derive statistically independent sub-streams.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for (grid point, replica), independent of execution order.
pub fn derive_seed(base_seed: u64, point_index: usize, replica: usize) -> u64 {
    splitmix64(
        splitmix64(base_seed ^ 0xd1b54a32d192ed03)
            .wrapping_add(splitmix64(point_index as u64))
            .wrapping_add(splitmix64(replica as u64).rotate_left(17)),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub parameter: String,
    pub values: Vec<f64>,
    pub seeds_per_point: usize,
    pub base_seed: u64,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.seeds_per_point == 0 {
            return Err(ChiralError::Config(
                "sweep grid needs at least one value and one replica".into(),
            ));
        }
        Ok(())
    }
}

/// One (point, replica) slot of a sweep, with its derived seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepCell {
    pub point_index: usize,
    pub point_value: f64,
    pub replica: usize,
    pub seed: u64,
}

/// Runs `f` on every (point, replica) cell, in parallel, returning rows in
/// deterministic (point-major, replica-minor) order regardless of
/// scheduling. Per-cell failures must be captured inside `R` by the caller's
/// closure; this function never aborts a sweep.
pub fn sweep<R: Send>(grid: &SweepGrid, f: impl Fn(&SweepCell) -> R + Sync) -> Result<Vec<(SweepCell, R)>> {
    grid.validate()?;
    let cells: Vec<SweepCell> = grid
        .values
        .iter()
        .enumerate()
        .flat_map(|(pi, &pv)| {
            (0..grid.seeds_per_point).map(move |r| SweepCell {
                point_index: pi,
                point_value: pv,
                replica: r,
                seed: derive_seed(grid.base_seed, pi, r),
            })
        })
        .collect();
    // indexed parallel map collects in input order: output is scheduling-free
    Ok(cells.into_par_iter().map(|cell| (cell, f(&cell))).collect())
}
