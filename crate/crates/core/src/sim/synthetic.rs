use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{Dataset, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    /// Number of non-zero coefficients.
    pub m_star: usize,
    pub psi2: f64,
    pub sigma2: f64,
    pub test_size: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `n = 10`, `m* = 10`, unit slab and noise variances, 1000 test rows.
    pub fn small_n(m: usize, seed: u64) -> Self {
        Self {
            n: 10,
            m,
            m_star: 10.min(m),
            psi2: 1.0,
            sigma2: 1.0,
            test_size: 1000,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProblem {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: GroundTruth,
}

/// Draws `X ~ N(0, I)`, `m*` coefficients from `N(0, psi2)` at a random set
/// of positions, and `y = X w + N(0, sigma2)` for both partitions.
pub fn generate_synthetic(spec: &SyntheticSpec) -> SyntheticProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = draw_truth(spec, &mut rng);
    let train = sample_rows(&truth, spec.n, spec.sigma2, &mut rng);
    let test = sample_rows(&truth, spec.test_size, spec.sigma2, &mut rng);
    SyntheticProblem { train, test, truth }
}

/// [`generate_synthetic`] plus a pool of extra rows from the same truth,
/// drawn after the test set.
pub fn generate_with_pool(spec: &SyntheticSpec, pool_size: usize) -> (SyntheticProblem, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = draw_truth(spec, &mut rng);
    let train = sample_rows(&truth, spec.n, spec.sigma2, &mut rng);
    let test = sample_rows(&truth, spec.test_size, spec.sigma2, &mut rng);
    let pool = sample_rows(&truth, pool_size, spec.sigma2, &mut rng);
    (SyntheticProblem { train, test, truth }, pool)
}

fn draw_truth(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> GroundTruth {
    let m_star = spec.m_star.min(spec.m);
    let sd = spec.psi2.sqrt();
    let mut w: Vec<f64> = (0..spec.m)
        .map(|j| {
            if j < m_star {
                sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        })
        .collect();
    w.shuffle(rng);
    let gamma = w.iter().map(|v| *v != 0.0).collect();
    GroundTruth { w, gamma, m_star }
}

pub fn sample_rows(truth: &GroundTruth, rows: usize, sigma2: f64, rng: &mut impl Rng) -> Dataset {
    let m = truth.w.len();
    let x = DMatrix::from_fn(rows, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = DVector::from_column_slice(&truth.w);
    let noise_sd = sigma2.sqrt();
    let y = &x * &w + DVector::from_fn(rows, |_, _| noise_sd * rng.sample::<f64, _>(StandardNormal));
    Dataset::with_default_names(x, y).expect("synthetic data is finite")
}
