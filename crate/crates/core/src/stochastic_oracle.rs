//! Monte-Carlo ensemble of the linear fluctuation SDE `du = A(t) u dt + B dW`
//! with `BBᵀ = N`, used to cross-check the Lyapunov propagation.

use nalgebra::SVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::classical::{self, ClassicalState};
use crate::fluctuations::{self, DriftVariant};
use crate::smallmat::Mat8;
use crate::{Error, Result, SystemParams};

type Vec8 = SVector<f64, 8>;

/// Number of delete-a-group jackknife blocks.
const JACKKNIFE_GROUPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n_trajectories: usize,
    pub dt: f64,
    pub seed: u64,
    /// Fixed drift; when absent `A(t)` follows the mean-field trajectory
    /// started from rest.
    pub frozen_drift: Option<Mat8>,
    /// Covariance of `u(0)`; zero when absent.
    pub initial_covariance: Option<Mat8>,
    pub variant: DriftVariant,
}

impl EnsembleSpec {
    pub fn new(n_trajectories: usize, dt: f64, seed: u64) -> Self {
        Self { n_trajectories, dt, seed, frozen_drift: None, initial_covariance: None, variant: DriftVariant::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trajectories < 2 {
            return Err(Error::InvalidArgument("at least two trajectories are required".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid step {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSample {
    pub t: f64,
    pub mean: [f64; 8],
    pub mean_se: [f64; 8],
    /// Unbiased sample covariance.
    pub cov: Mat8,
    /// Jackknife standard errors of `cov`.
    pub se: Mat8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub samples: Vec<EnsembleSample>,
    pub n_used: usize,
    /// Trajectories that left `|u| < 1e12`; excluded from the statistics.
    pub n_diverged: usize,
}

/// Per-component noise amplitudes `b` with `diag(b)² = N`.
pub fn noise_amplitudes(noise: &Mat8) -> Result<[f64; 8]> {
    for r in 0..8 {
        for c in 0..8 {
            if r != c && noise[(r, c)] != 0.0 {
                return Err(Error::InvalidArgument("noise matrix must be diagonal".into()));
            }
        }
        if noise[(r, r)] < 0.0 {
            return Err(Error::InvalidArgument("noise intensities must be non-negative".into()));
        }
    }
    Ok(std::array::from_fn(|i| noise[(i, i)].sqrt()))
}

fn drift_path(params: &SystemParams, spec: &EnsembleSpec, steps: usize) -> Vec<Mat8> {
    if let Some(a) = spec.frozen_drift {
        return vec![a];
    }
    // classical RK4 on the same grid; A is evaluated at each step start
    let mut y = ClassicalState::default().to_array();
    let mut out = Vec::with_capacity(steps);
    let f = |y: &[f64; 8]| {
        let mut d = [0.0; 8];
        classical::rhs_into(params, y, &mut d);
        d
    };
    let h = spec.dt;
    for _ in 0..steps {
        out.push(fluctuations::drift_matrix(&ClassicalState::from_array(y), params, spec.variant));
        let add = |a: &[f64; 8], k: &[f64; 8], s: f64| -> [f64; 8] { std::array::from_fn(|i| a[i] + s * k[i]) };
        let k1 = f(&y);
        let k2 = f(&add(&y, &k1, h / 2.0));
        let k3 = f(&add(&y, &k2, h / 2.0));
        let k4 = f(&add(&y, &k3, h));
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    out
}

fn pairwise_sum<T: Copy + std::ops::Add<Output = T>>(xs: &[T], zero: T) -> T {
    match xs.len() {
        0 => zero,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2], zero) + pairwise_sum(&xs[n / 2..], zero),
    }
}

fn moments(us: &[Vec8]) -> (Vec8, Mat8) {
    let outer: Vec<Mat8> = us.iter().map(|u| u * u.transpose()).collect();
    (pairwise_sum(us, Vec8::zeros()), pairwise_sum(&outer, Mat8::zeros()))
}

fn covariance_from(s1: &Vec8, s2: &Mat8, m: f64) -> Mat8 {
    (s2 - s1 * s1.transpose() / m) / (m - 1.0)
}

fn statistics(t: f64, us: &[Vec8]) -> EnsembleSample {
    let n = us.len();
    let (s1, s2) = moments(us);
    let cov = covariance_from(&s1, &s2, n as f64);
    let mean = s1 / n as f64;
    let groups = JACKKNIFE_GROUPS.min(n);
    let bounds: Vec<usize> = (0..=groups).map(|g| g * n / groups).collect();
    let leave_out: Vec<Mat8> = bounds
        .windows(2)
        .map(|b| {
            let (g1, g2) = moments(&us[b[0]..b[1]]);
            covariance_from(&(s1 - g1), &(s2 - g2), (n - (b[1] - b[0])) as f64)
        })
        .collect();
    let g = groups as f64;
    let jk_mean = pairwise_sum(&leave_out, Mat8::zeros()) / g;
    let var = leave_out.iter().fold(Mat8::zeros(), |acc, c| acc + (c - jk_mean).component_mul(&(c - jk_mean)));
    let se = (var * ((g - 1.0) / g)).map(f64::sqrt);
    let mean_se = std::array::from_fn(|i| (cov[(i, i)] / n as f64).sqrt());
    EnsembleSample { t, mean: std::array::from_fn(|i| mean[i]), mean_se, cov, se }
}

/// Runs the ensemble and reports statistics at the step nearest each of
/// `t_samples` (ascending).
pub fn ensemble_covariance(spec: &EnsembleSpec, params: &SystemParams, t_samples: &[f64]) -> Result<EnsembleResult> {
    spec.validate()?;
    if t_samples.is_empty() || t_samples.windows(2).any(|w| w[1] <= w[0]) || t_samples[0] < 0.0 {
        return Err(Error::InvalidArgument("sample times must be non-empty, non-negative and increasing".into()));
    }
    let sample_steps: Vec<usize> = t_samples.iter().map(|t| (t / spec.dt).round() as usize).collect();
    let steps = *sample_steps.last().unwrap();
    let drifts = drift_path(params, spec, steps.max(1));
    let b = noise_amplitudes(&fluctuations::noise_matrix(params))?;
    let init_chol = spec
        .initial_covariance
        .map(|v| nalgebra::Cholesky::new(v).map(|c| c.l()).ok_or(Error::NotPositiveDefinite))
        .transpose()?;
    let sqrt_dt = spec.dt.sqrt();

    let run = |k: usize| -> Option<Vec<Vec8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(k as u64);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut u = match &init_chol {
            Some(l) => l * Vec8::from_fn(|_, _| gauss()),
            None => Vec8::zeros(),
        };
        let mut out = Vec::with_capacity(sample_steps.len());
        let mut next = 0;
        for step in 0..=steps {
            while next < sample_steps.len() && sample_steps[next] == step {
                out.push(u);
                next += 1;
            }
            if step == steps {
                break;
            }
            let a = &drifts[if drifts.len() == 1 { 0 } else { step }];
            let mut du = a * u * spec.dt;
            for i in 0..8 {
                if b[i] != 0.0 {
                    du[i] += b[i] * sqrt_dt * gauss();
                }
            }
            u += du;
            if !(u.amax() < 1e12) {
                return None;
            }
        }
        Some(out)
    };

    let paths: Vec<Option<Vec<Vec8>>> = (0..spec.n_trajectories).into_par_iter().map(run).collect();
    let kept: Vec<&Vec<Vec8>> = paths.iter().flatten().collect();
    let n_diverged = paths.len() - kept.len();
    if kept.len() < 2 {
        return Err(Error::Divergent { t: t_samples[t_samples.len() - 1], state: Vec::new() });
    }
    let samples = sample_steps
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let us: Vec<Vec8> = kept.iter().map(|p| p[i]).collect();
            statistics(s as f64 * spec.dt, &us)
        })
        .collect();
    Ok(EnsembleResult { samples, n_used: kept.len(), n_diverged })
}
