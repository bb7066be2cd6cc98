//! Sample-path simulation of the reversed-chain system and of the jump-linear
//! filter loop, plus exhaustive path enumeration for small instances.
//!
//! Simulation work is split into [`CHUNKS`] fixed substreams of a ChaCha8
//! generator seeded from the configured seed, and the partial sums are merged
//! in chunk order. Results therefore depend only on the seed and the sample
//! count, not on how many threads run the chunks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{Mat, MatrixFamily};
use crate::linalg::psd_sqrt;
use crate::model::{ControlPlant, FilterPlant, MarkovSpec};
use crate::moments::{closed_loop_matrices, GainSchedule, MomentKind, MomentTrajectory};

pub const CHUNKS: usize = 64;
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), stream k for chunk k";
/// Conditional estimates with fewer hits are flagged low-confidence.
pub const MIN_HITS: u64 = 30;
/// Largest number of chain paths [`enumerate_exact`] will visit.
pub const MAX_PATHS: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Moment,
    Cost,
    FilterError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub samples: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl SimConfig {
    pub fn new(samples: usize, seed: u64, estimator: Estimator) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidInput("samples must be at least 1".into()));
        }
        Ok(Self {
            samples,
            seed,
            estimator,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetadata {
    pub seed: u64,
    pub samples: usize,
    pub chunks: usize,
    pub rng: &'static str,
    pub estimator: Estimator,
}

impl SimMetadata {
    fn from(cfg: &SimConfig) -> Self {
        Self {
            seed: cfg.seed,
            samples: cfg.samples,
            chunks: CHUNKS,
            rng: RNG_ALGORITHM,
            estimator: cfg.estimator,
        }
    }
}

/// Row-major copy of a matrix for allocation-free products in the hot loop.
#[derive(Debug, Clone)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn from(m: &Mat) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        Self { rows, cols, data }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn draw(cum: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
    match cum.iter().position(|c| u < *c) {
        Some(k) => k,
        // u landed on the rounding gap above the last partial sum
        None => cum.iter().rposition(|c| *c > 0.0).unwrap_or(0),
    }
}

struct ChainSampler {
    initial: Vec<f64>,
    rows: Vec<Vec<f64>>,
    horizon: usize,
}

impl ChainSampler {
    fn new(chain: &MarkovSpec) -> Self {
        let n = chain.modes();
        Self {
            initial: cumulative(chain.initial_eta()),
            rows: (0..n)
                .map(|i| cumulative(&chain.transition().row(i).iter().copied().collect::<Vec<_>>()))
                .collect(),
            horizon: chain.horizon(),
        }
    }

    fn eta_path(&self, rng: &mut impl Rng, out: &mut Vec<usize>) {
        out.clear();
        let mut state = draw(&self.initial, rng);
        out.push(state);
        for _ in 0..self.horizon {
            state = draw(&self.rows[state], rng);
            out.push(state);
        }
    }
}

/// Draws `eta(0..=horizon)` forward and returns it reversed, i.e.
/// `theta(t) = eta(horizon - t)`.
pub fn sample_theta_path<R: Rng>(chain: &MarkovSpec, rng: &mut R) -> Vec<usize> {
    let mut path = Vec::with_capacity(chain.horizon() + 1);
    ChainSampler::new(chain).eta_path(rng, &mut path);
    path.reverse();
    path
}

fn gaussian(rng: &mut impl Rng, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
}

/// Running sums of `v v'` per `(t, mode)`.
#[derive(Debug, Clone)]
struct OuterSums {
    dim: usize,
    modes: usize,
    counts: Vec<u64>,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl OuterSums {
    fn new(steps: usize, modes: usize, dim: usize) -> Self {
        let cells = steps * modes;
        Self {
            dim,
            modes,
            counts: vec![0; cells],
            sum: vec![0.0; cells * dim * dim],
            sumsq: vec![0.0; cells * dim * dim],
        }
    }

    fn add(&mut self, t: usize, mode: usize, v: &[f64]) {
        let cell = t * self.modes + mode;
        self.counts[cell] += 1;
        let d = self.dim;
        let base = cell * d * d;
        for r in 0..d {
            for c in 0..d {
                let x = v[r] * v[c];
                self.sum[base + r * d + c] += x;
                self.sumsq[base + r * d + c] += x * x;
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
    }

    fn steps(&self) -> usize {
        self.counts.len() / self.modes
    }

    /// Mean and standard error per `(t, mode)`, dividing by `denom(count)`:
    /// the hit count for conditional means, the sample count for
    /// indicator-weighted means.
    fn finish(&self, denom: impl Fn(u64) -> u64) -> (Vec<MatrixFamily>, Vec<MatrixFamily>, Vec<Vec<u64>>) {
        let d = self.dim;
        let mut means = Vec::new();
        let mut errs = Vec::new();
        let mut counts = Vec::new();
        for t in 0..self.steps() {
            let mut mt = Vec::new();
            let mut et = Vec::new();
            let mut ct = Vec::new();
            for i in 0..self.modes {
                let cell = t * self.modes + i;
                let k = denom(self.counts[cell]);
                let base = cell * d * d;
                let mut mean = Mat::zeros(d, d);
                let mut se = Mat::zeros(d, d);
                if k > 0 {
                    let kf = k as f64;
                    for r in 0..d {
                        for c in 0..d {
                            let m = self.sum[base + r * d + c] / kf;
                            let var = (self.sumsq[base + r * d + c] / kf - m * m).max(0.0);
                            mean[(r, c)] = m;
                            se[(r, c)] = if k > 1 { (var / (kf - 1.0)).sqrt() } else { f64::INFINITY };
                        }
                    }
                }
                mt.push(mean);
                et.push(se);
                ct.push(self.counts[cell]);
            }
            means.push(MatrixFamily::new(mt).expect("uniform shapes"));
            errs.push(MatrixFamily::new(et).expect("uniform shapes"));
            counts.push(ct);
        }
        (means, errs, counts)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ScalarSums {
    sum: f64,
    sumsq: f64,
}

impl ScalarSums {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.sumsq += x * x;
    }

    fn merge(&mut self, o: &Self) {
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    fn mean_se(&self, n: usize) -> (f64, f64) {
        let nf = n as f64;
        let mean = self.sum / nf;
        let var = (self.sumsq / nf - mean * mean).max(0.0);
        let se = if n > 1 { (var / (nf - 1.0)).sqrt() } else { f64::INFINITY };
        (mean, se)
    }
}

fn chunk_sizes(samples: usize) -> Vec<usize> {
    (0..CHUNKS)
        .map(|c| samples / CHUNKS + usize::from(c < samples % CHUNKS))
        .collect()
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Conditional sample moments `E[x x' | theta(t) = i]` with hit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMoments {
    pub mean: Vec<MatrixFamily>,
    pub std_err: Vec<MatrixFamily>,
    /// `counts[t][i]`: paths with `theta(t) = i`.
    pub counts: Vec<Vec<u64>>,
}

impl EmpiricalMoments {
    pub fn low_confidence(&self, t: usize, i: usize) -> bool {
        self.counts[t][i] < MIN_HITS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiSimulation {
    pub moments: EmpiricalMoments,
    /// Sample mean of `sum_t ||y(t)||^2`.
    pub cost: f64,
    pub cost_std_err: f64,
    pub metadata: SimMetadata,
}

/// Simulates `x(t+1) = (A + B K(t))_{theta(t)} x(t)` with Gaussian `x0` of
/// second moment `Delta`, outputs `y(t) = (C + D K(t))_{theta(t)} x(t)` and
/// `y(horizon) = E_{theta(horizon)} x(horizon)`.
pub fn simulate_phi(plant: &ControlPlant, k: Option<&GainSchedule>, cfg: &SimConfig) -> Result<PhiSimulation> {
    plant.check_dimensions()?;
    let horizon = plant.chain.horizon();
    let modes = plant.modes();
    let n = plant.state_dim();
    let gains = match k {
        Some(k) => {
            k.check_for(plant)?;
            k.clone()
        }
        None => GainSchedule::zeros(modes, plant.input_dim(), n, horizon),
    };
    let mut dyn_mats = Vec::with_capacity(horizon);
    let mut out_mats = Vec::with_capacity(horizon + 1);
    for t in 0..horizon {
        let acl = closed_loop_matrices(plant, gains.at(t))?;
        dyn_mats.push(acl.iter().map(Dense::from).collect::<Vec<_>>());
        let ycl = plant.c.add(&plant.d.mul(gains.at(t))?)?;
        out_mats.push(ycl.iter().map(Dense::from).collect::<Vec<_>>());
    }
    out_mats.push(plant.e.iter().map(Dense::from).collect());
    let x0 = Dense::from(&psd_sqrt(&plant.delta));
    let sampler = ChainSampler::new(&plant.chain);
    let s_max = out_mats.iter().flatten().map(|d| d.rows).max().unwrap_or(0);

    let partials: Vec<(OuterSums, ScalarSums)> = chunk_sizes(cfg.samples)
        .into_par_iter()
        .enumerate()
        .map(|(chunk, count)| {
            let mut rng = chunk_rng(cfg.seed, chunk);
            let mut sums = OuterSums::new(horizon + 1, modes, n);
            let mut cost = ScalarSums::default();
            let mut path = Vec::with_capacity(horizon + 1);
            let (mut xi, mut x, mut nx) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut y = vec![0.0; s_max];
            for _ in 0..count {
                sampler.eta_path(&mut rng, &mut path);
                gaussian(&mut rng, &mut xi);
                x0.apply(&xi, &mut x);
                let mut total = 0.0;
                for t in 0..=horizon {
                    let mode = path[horizon - t];
                    sums.add(t, mode, &x);
                    let out = &out_mats[t][mode];
                    out.apply(&x, &mut y[..out.rows]);
                    total += y[..out.rows].iter().map(|v| v * v).sum::<f64>();
                    if t < horizon {
                        dyn_mats[t][mode].apply(&x, &mut nx);
                        std::mem::swap(&mut x, &mut nx);
                    }
                }
                cost.add(total);
            }
            (sums, cost)
        })
        .collect();

    let mut sums = OuterSums::new(horizon + 1, modes, n);
    let mut cost = ScalarSums::default();
    for (s, c) in &partials {
        sums.merge(s);
        cost.merge(c);
    }
    let (mean, std_err, counts) = sums.finish(|k| k);
    let (cost_mean, cost_std_err) = cost.mean_se(cfg.samples);
    Ok(PhiSimulation {
        moments: EmpiricalMoments { mean, std_err, counts },
        cost: cost_mean,
        cost_std_err,
        metadata: SimMetadata::from(cfg),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSimulation {
    /// Estimates of `E[e(t) e(t)' 1{eta(t) = i}]`, `e = zhat - z`.
    pub second_moments: Vec<MatrixFamily>,
    pub std_err: Vec<MatrixFamily>,
    /// `counts[t][i]`: paths with `eta(t) = i`.
    pub counts: Vec<Vec<u64>>,
    /// Sample mean of `||e(horizon)||^2`.
    pub final_error: f64,
    pub final_error_std_err: f64,
    pub metadata: SimMetadata,
}

/// Runs the observer `zhat(t+1) = F zhat(t) + K^f(t) (y(t) - L zhat(t))`
/// against `z(t+1) = F z(t) + G w(t)`, `y(t) = L z(t) + H w(t)`, every matrix
/// indexed by `eta(t+1)`, from `zhat(0) = 0` and Gaussian `z0` with second
/// moment `Sigma`. Uses `gains[0..horizon]`.
pub fn simulate_filter(plant: &FilterPlant, gains: &[MatrixFamily], cfg: &SimConfig) -> Result<FilterSimulation> {
    plant.check_dimensions()?;
    let horizon = plant.chain.horizon();
    let modes = plant.modes();
    let (n, q, s) = (plant.state_dim(), plant.noise_dim(), plant.output_dim());
    if gains.len() < horizon {
        return Err(Error::dims("filter gains", format!("at least {horizon} steps"), gains.len()));
    }
    for g in &gains[..horizon] {
        if g.modes() != modes || g.shape() != (n, s) {
            return Err(Error::dims("filter gain", format!("{modes} modes of {n}x{s}"), format!("{:?}", g.shape())));
        }
    }
    let to_dense = |f: &MatrixFamily| f.iter().map(Dense::from).collect::<Vec<_>>();
    let (fm, gm, lm, hm) = (to_dense(&plant.f), to_dense(&plant.g), to_dense(&plant.l), to_dense(&plant.h));
    let km: Vec<Vec<Dense>> = gains[..horizon].iter().map(to_dense).collect();
    let z0 = Dense::from(&psd_sqrt(&plant.sigma));
    let sampler = ChainSampler::new(&plant.chain);

    let partials: Vec<(OuterSums, ScalarSums)> = chunk_sizes(cfg.samples)
        .into_par_iter()
        .enumerate()
        .map(|(chunk, count)| {
            let mut rng = chunk_rng(cfg.seed, chunk);
            let mut sums = OuterSums::new(horizon + 1, modes, n);
            let mut fin = ScalarSums::default();
            let mut path = Vec::with_capacity(horizon + 1);
            let (mut xi, mut z, mut zh) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let (mut nz, mut nzh, mut err) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut w = vec![0.0; q];
            let (mut y, mut innov) = (vec![0.0; s], vec![0.0; s]);
            for _ in 0..count {
                sampler.eta_path(&mut rng, &mut path);
                gaussian(&mut rng, &mut xi);
                z0.apply(&xi, &mut z);
                zh.iter_mut().for_each(|v| *v = 0.0);
                for t in 0..=horizon {
                    for k in 0..n {
                        err[k] = zh[k] - z[k];
                    }
                    sums.add(t, path[t], &err);
                    if t == horizon {
                        fin.add(err.iter().map(|e| e * e).sum());
                        break;
                    }
                    let mode = path[t + 1];
                    gaussian(&mut rng, &mut w);
                    lm[mode].apply(&z, &mut y);
                    hm[mode].apply_add(&w, &mut y);
                    fm[mode].apply(&z, &mut nz);
                    gm[mode].apply_add(&w, &mut nz);
                    lm[mode].apply(&zh, &mut innov);
                    for k in 0..s {
                        innov[k] = y[k] - innov[k];
                    }
                    fm[mode].apply(&zh, &mut nzh);
                    km[t][mode].apply_add(&innov, &mut nzh);
                    std::mem::swap(&mut z, &mut nz);
                    std::mem::swap(&mut zh, &mut nzh);
                }
            }
            (sums, fin)
        })
        .collect();

    let mut sums = OuterSums::new(horizon + 1, modes, n);
    let mut fin = ScalarSums::default();
    for (s, f) in &partials {
        sums.merge(s);
        fin.merge(f);
    }
    let samples = cfg.samples as u64;
    let (second_moments, std_err, counts) = sums.finish(|_| samples);
    let (final_error, final_error_std_err) = fin.mean_se(cfg.samples);
    Ok(FilterSimulation {
        second_moments,
        std_err,
        counts,
        final_error,
        final_error_std_err,
        metadata: SimMetadata::from(cfg),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    /// Conditioned moments; entries with zero path mass are left at zero.
    pub trajectory: MomentTrajectory,
    /// `mass[t][i] = Pr(theta(t) = i)` accumulated over the visited paths.
    pub mass: Vec<Vec<f64>>,
    pub cost: f64,
}

/// Total-probability sum over every chain path: each path contributes its
/// probability times the deterministic propagation of `Delta` through its
/// closed-loop matrices.
pub fn enumerate_exact(plant: &ControlPlant, k: Option<&GainSchedule>) -> Result<ExactResult> {
    plant.check_dimensions()?;
    let horizon = plant.chain.horizon();
    let modes = plant.modes();
    let n = plant.state_dim();
    let paths = (modes as u128).checked_pow(horizon as u32 + 1).unwrap_or(u128::MAX);
    if paths > MAX_PATHS {
        return Err(Error::TooLarge {
            paths,
            limit: MAX_PATHS,
        });
    }
    let gains = match k {
        Some(k) => {
            k.check_for(plant)?;
            k.clone()
        }
        None => GainSchedule::zeros(modes, plant.input_dim(), n, horizon),
    };
    let mut acl = Vec::with_capacity(horizon);
    let mut weight = Vec::with_capacity(horizon + 1);
    for t in 0..horizon {
        acl.push(closed_loop_matrices(plant, gains.at(t))?);
        let y = plant.c.add(&plant.d.mul(gains.at(t))?)?;
        weight.push(y.transpose().mul(&y)?);
    }
    weight.push(plant.e.transpose().mul(&plant.e)?);

    let chain = &plant.chain;
    let mut sums = vec![vec![Mat::zeros(n, n); modes]; horizon + 1];
    let mut mass = vec![vec![0.0; modes]; horizon + 1];
    let mut cost = 0.0;
    let mut eta = vec![0usize; horizon + 1];
    'paths: loop {
        let mut prob = chain.initial_eta()[eta[0]];
        for s in 0..horizon {
            prob *= chain.p(eta[s], eta[s + 1]);
        }
        if prob > 0.0 {
            let mut x = plant.delta.clone();
            for t in 0..=horizon {
                let mode = eta[horizon - t];
                sums[t][mode] += &x * prob;
                mass[t][mode] += prob;
                cost += prob * (&weight[t][mode] * &x).trace();
                if t < horizon {
                    let a = &acl[t][mode];
                    x = a * x * a.transpose();
                }
            }
        }
        // odometer over eta(0..=horizon)
        for digit in eta.iter_mut() {
            *digit += 1;
            if *digit < modes {
                continue 'paths;
            }
            *digit = 0;
        }
        break;
    }
    let values = sums
        .into_iter()
        .zip(&mass)
        .map(|(row, m)| {
            MatrixFamily::new(
                row.into_iter()
                    .zip(m)
                    .map(|(s, w)| if *w > 0.0 { s / *w } else { s })
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExactResult {
        trajectory: MomentTrajectory {
            values,
            kind: MomentKind::Conditioned,
        },
        mass,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::theta_distribution;

    fn chain(p: &[f64], eta0: &[f64], horizon: usize) -> MarkovSpec {
        let n = eta0.len();
        MarkovSpec::new(Mat::from_row_slice(n, n, p), eta0.to_vec(), horizon).unwrap()
    }

    fn static_plant(horizon: usize) -> ControlPlant {
        ControlPlant::new(
            MatrixFamily::identity(1, 2),
            MatrixFamily::zeros(1, 2, 1),
            MatrixFamily::new(vec![Mat::from_row_slice(3, 2, &[1., 0., 0., 1., 0., 0.])]).unwrap(),
            MatrixFamily::new(vec![Mat::from_row_slice(3, 1, &[0., 0., 1.])]).unwrap(),
            MatrixFamily::identity(1, 2),
            Mat::identity(2, 2),
            chain(&[1.0], &[1.0], horizon),
        )
        .unwrap()
    }

    #[test]
    fn theta_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let id = chain(&[1., 0., 0., 1.], &[0.5, 0.5], 4);
        for _ in 0..20 {
            let p = sample_theta_path(&id, &mut rng);
            assert!(p.iter().all(|m| *m == p[0]));
        }
        let cyc = chain(&[0., 1., 1., 0.], &[1., 0.], 3);
        assert_eq!(sample_theta_path(&cyc, &mut rng), vec![1, 0, 1, 0]);
    }

    #[test]
    fn theta_path_frequencies() {
        let ch = chain(&[0.9, 0.1, 0.0, 0.2, 0.5, 0.3, 0.3, 0.3, 0.4], &[0.6, 0.3, 0.1], 4);
        let pi = theta_distribution(&ch);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = 100_000;
        let mut freq = vec![vec![0.0; 3]; 5];
        for _ in 0..samples {
            for (t, m) in sample_theta_path(&ch, &mut rng).into_iter().enumerate() {
                freq[t][m] += 1.0 / samples as f64;
            }
        }
        for t in 0..=4 {
            let tv: f64 = (0..3).map(|i| (freq[t][i] - pi.row(t)[i]).abs()).sum::<f64>() / 2.0;
            assert!(tv < 0.01, "t={t} tv={tv}");
        }
    }

    #[test]
    fn static_system_keeps_identity_moment() {
        let plant = static_plant(3);
        let sim = simulate_phi(&plant, None, &SimConfig::new(20_000, 5, Estimator::Moment).unwrap()).unwrap();
        for t in 0..=3 {
            assert_eq!(sim.moments.counts[t][0], 20_000);
            let (m, se) = (&sim.moments.mean[t][0], &sim.moments.std_err[t][0]);
            for r in 0..2 {
                for c in 0..2 {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!((m[(r, c)] - want).abs() <= 3.0 * se[(r, c)], "t={t} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let plant = static_plant(2);
        let cfg = SimConfig::new(1_000, 99, Estimator::Cost).unwrap();
        let a = simulate_phi(&plant, None, &cfg).unwrap();
        let b = simulate_phi(&plant, None, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metadata.chunks, CHUNKS);
        assert!(SimConfig::new(0, 1, Estimator::Cost).is_err());
    }

    #[test]
    fn exact_single_mode_is_product_propagation() {
        let mut plant = static_plant(3);
        plant.a = MatrixFamily::new(vec![Mat::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.9])]).unwrap();
        let ex = enumerate_exact(&plant, None).unwrap();
        let mut x = plant.delta.clone();
        for t in 0..=3 {
            assert!((&ex.trajectory.at(t)[0] - &x).amax() < 1e-15);
            x = &plant.a[0] * x * plant.a[0].transpose();
        }
    }

    #[test]
    fn exact_refuses_large_instances() {
        let mut plant = static_plant(3);
        plant.chain = chain(&[0.5, 0.5, 0.5, 0.5], &[1.0, 0.0], 25);
        plant.a = MatrixFamily::identity(2, 2);
        plant.b = MatrixFamily::zeros(2, 2, 1);
        plant.c = MatrixFamily::repeat(2, plant.c[0].clone());
        plant.d = MatrixFamily::repeat(2, plant.d[0].clone());
        plant.e = MatrixFamily::identity(2, 2);
        match enumerate_exact(&plant, None) {
            Err(Error::TooLarge { paths, limit }) => {
                assert_eq!(paths, 1 << 26);
                assert_eq!(limit, MAX_PATHS);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn filter_without_noise_has_zero_error() {
        let ch = chain(&[0.9, 0.1, 0.2, 0.8], &[0.4, 0.6], 3);
        let fp = FilterPlant::new(
            MatrixFamily::identity(2, 1).scale(0.9),
            MatrixFamily::zeros(2, 1, 2),
            MatrixFamily::identity(2, 1),
            MatrixFamily::new(vec![Mat::from_row_slice(1, 2, &[0.0, 1.0]); 2]).unwrap(),
            Mat::zeros(1, 1),
            ch,
        )
        .unwrap();
        // measurement noise only reaches the error through the gain
        let gains = vec![MatrixFamily::zeros(2, 1, 1); 4];
        let sim = simulate_filter(&fp, &gains, &SimConfig::new(500, 1, Estimator::FilterError).unwrap()).unwrap();
        assert!(sim.second_moments.iter().all(|f| f.max_abs() == 0.0));
        assert_eq!(sim.final_error, 0.0);
        let total: u64 = sim.counts[2].iter().sum();
        assert_eq!(total, 500);
    }
}
