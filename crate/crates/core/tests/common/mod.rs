//! Random instance generators and independent reference recursions shared by
//! the integration tests. Nothing here calls the library's solvers.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rjls::{ControlPlant, FilterPlant, Mat, MarkovSpec, MatrixFamily};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_family<R: Rng>(rng: &mut R, modes: usize, rows: usize, cols: usize) -> MatrixFamily {
    MatrixFamily::new((0..modes).map(|_| gaussian(rng, rows, cols)).collect()).unwrap()
}

pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> Mat {
    gaussian(rng, n, n).qr().q()
}

/// `X X' + floor I`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Mat {
    let x = gaussian(rng, n, n);
    &x * x.transpose() + Mat::identity(n, n) * floor
}

pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Dense random transition matrix with a random initial distribution.
pub fn random_chain<R: Rng>(rng: &mut R, modes: usize, horizon: usize) -> MarkovSpec {
    let mut p = Mat::zeros(modes, modes);
    for i in 0..modes {
        let row = random_distribution(rng, modes);
        for j in 0..modes {
            p[(i, j)] = row[j];
        }
    }
    MarkovSpec::new(p, random_distribution(rng, modes), horizon).unwrap()
}

/// Cyclic shift `i -> i+1 mod N` started in mode 1: exactly one mode is
/// reachable at each time, so every other mode has probability zero.
pub fn periodic_chain(modes: usize, horizon: usize) -> MarkovSpec {
    let p = Mat::from_fn(modes, modes, |i, j| if j == (i + 1) % modes { 1.0 } else { 0.0 });
    let mut eta0 = vec![0.0; modes];
    eta0[0] = 1.0;
    MarkovSpec::new(p, eta0, horizon).unwrap()
}

/// Control plant with `C = Q [Ct; 0]`, `D = Q [0; Dt]` (so `C'D = 0` and
/// `D'D > 0`), `A` scaled by `a_scale`, random `E` and `Delta`.
pub fn random_control<R: Rng>(rng: &mut R, chain: MarkovSpec, n: usize, m: usize, a_scale: f64) -> ControlPlant {
    let modes = chain.modes();
    let p = n + m;
    let mut c = Vec::with_capacity(modes);
    let mut d = Vec::with_capacity(modes);
    for _ in 0..modes {
        let q = random_orthogonal(rng, p);
        let mut ct = Mat::zeros(p, n);
        ct.view_mut((0, 0), (n, n)).copy_from(&gaussian(rng, n, n));
        let mut dt = Mat::zeros(p, m);
        dt.view_mut((n, 0), (m, m)).copy_from(&(gaussian(rng, m, m) * 0.5 + Mat::identity(m, m) * 1.5));
        c.push(&q * ct);
        d.push(&q * dt);
    }
    ControlPlant::new(
        gaussian_family(rng, modes, n, n).scale(a_scale),
        gaussian_family(rng, modes, n, m),
        MatrixFamily::new(c).unwrap(),
        MatrixFamily::new(d).unwrap(),
        gaussian_family(rng, modes, n, n),
        random_spd(rng, n, 0.1),
        chain,
    )
    .unwrap()
}

/// Filter plant with `G = [Gt 0] Q'`, `H = [0 Ht] Q'` (so `GH' = 0`,
/// `HH' > 0`).
pub fn random_filter<R: Rng>(rng: &mut R, chain: MarkovSpec, n: usize, s: usize, f_scale: f64) -> FilterPlant {
    let modes = chain.modes();
    let q_dim = n + s;
    let mut g = Vec::with_capacity(modes);
    let mut h = Vec::with_capacity(modes);
    for _ in 0..modes {
        let q = random_orthogonal(rng, q_dim);
        let mut gt = Mat::zeros(n, q_dim);
        gt.view_mut((0, 0), (n, n)).copy_from(&(gaussian(rng, n, n) * 0.5));
        let mut ht = Mat::zeros(s, q_dim);
        ht.view_mut((0, n), (s, s)).copy_from(&(gaussian(rng, s, s) * 0.3 + Mat::identity(s, s) * 0.8));
        g.push(gt * q.transpose());
        h.push(ht * q.transpose());
    }
    FilterPlant::new(
        gaussian_family(rng, modes, n, n).scale(f_scale),
        MatrixFamily::new(g).unwrap(),
        gaussian_family(rng, modes, s, n),
        MatrixFamily::new(h).unwrap(),
        random_spd(rng, n, 0.1),
        chain,
    )
    .unwrap()
}

pub fn frob(m: &Mat) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn rel_mat(a: &Mat, b: &Mat) -> f64 {
    let scale = frob(a).max(frob(b));
    if scale == 0.0 {
        0.0
    } else {
        frob(&(a - b)) / scale
    }
}

/// Forward distributions `Pr(eta(t) = i)`, `t = 0..=steps`, by repeated
/// row-vector products.
pub fn eta_distributions(chain: &MarkovSpec, steps: usize) -> Vec<Vec<f64>> {
    let n = chain.modes();
    let mut rows = vec![chain.initial_eta().to_vec()];
    for _ in 0..steps {
        let prev = rows.last().unwrap();
        let next = (0..n).map(|j| (0..n).map(|i| prev[i] * chain.p(i, j)).sum()).collect();
        rows.push(next);
    }
    rows
}

pub struct LqrReference {
    /// `p[t]`, `t = 0..=horizon`.
    pub p: Vec<Mat>,
    /// Feedback `u = k[t] x`, `t = 0..horizon`.
    pub k: Vec<Mat>,
    pub cost: f64,
}

/// Finite-horizon discrete LQR with stage cost `|Cx + Du|^2` and terminal
/// `|Ex|^2`, in Joseph form: `K = -(R + B'PB)^{-1} B'PA`,
/// `P <- Q + K'RK + (A+BK)'P(A+BK)`.
pub fn lqr_reference(a: &Mat, b: &Mat, c: &Mat, d: &Mat, e: &Mat, delta: &Mat, horizon: usize) -> LqrReference {
    let q = c.transpose() * c;
    let r = d.transpose() * d;
    let mut p = vec![e.transpose() * e];
    let mut k = Vec::new();
    for _ in 0..horizon {
        let next = p.last().unwrap();
        let gram = &r + b.transpose() * next * b;
        let kt = -(gram.try_inverse().expect("R + B'PB invertible") * b.transpose() * next * a);
        let acl = a + b * &kt;
        let pt = &q + kt.transpose() * &r * &kt + acl.transpose() * next * &acl;
        p.push((&pt + pt.transpose()) * 0.5);
        k.push(kt);
    }
    p.reverse();
    k.reverse();
    let cost = (&p[0] * delta).trace();
    LqrReference { p, k, cost }
}

pub struct KalmanReference {
    /// One-step prediction error covariance `s[t]`, `t = 0..=horizon`.
    pub s: Vec<Mat>,
    /// Predictor gains `k[t]`, `t = 0..=horizon`.
    pub k: Vec<Mat>,
}

/// Kalman one-step predictor for `z+ = Fz + Gw`, `y = Lz + Hw`, in Joseph
/// form: `K = F S L' (L S L' + HH')^{-1}`,
/// `S+ = (F - KL) S (F - KL)' + (G - KH)(G - KH)'`.
pub fn kalman_reference(f: &Mat, g: &Mat, l: &Mat, h: &Mat, sigma: &Mat, horizon: usize) -> KalmanReference {
    let mut s = vec![sigma.clone()];
    let mut k = Vec::new();
    for t in 0..=horizon {
        let st = &s[t];
        let inn = l * st * l.transpose() + h * h.transpose();
        let kt = f * st * l.transpose() * inn.try_inverse().expect("innovation invertible");
        if t < horizon {
            let fk = f - &kt * l;
            let gk = g - &kt * h;
            let next = &fk * st * fk.transpose() + &gk * gk.transpose();
            s.push((&next + next.transpose()) * 0.5);
        }
        k.push(kt);
    }
    KalmanReference { s, k }
}

/// Steps `Y(t) -> Y(t+1)` of the recursion satisfied by
/// `Y_i(t) = sum_j p_ji S_j(t)`:
/// `Y_i(t+1) = sum_j p_ji [F_j Y_j F_j' + w_j G_jG_j'
///             - F_j Y_j L_j' (L_j Y_j L_j' + w_j H_jH_j')^{-1} L_j Y_j F_j']`
/// with `w_j = Pr(eta(t+1) = j)` and terms with `w_j = 0` dropped.
pub fn y_step(plant: &FilterPlant, y: &[Mat], w: &[f64]) -> Vec<Mat> {
    let modes = plant.modes();
    let n = plant.state_dim();
    let inner: Vec<Mat> = (0..modes)
        .map(|j| {
            if w[j] == 0.0 {
                return Mat::zeros(n, n);
            }
            let (f, g, l, h) = (&plant.f[j], &plant.g[j], &plant.l[j], &plant.h[j]);
            let inn = l * &y[j] * l.transpose() + h * h.transpose() * w[j];
            let cross = f * &y[j] * l.transpose();
            f * &y[j] * f.transpose() + g * g.transpose() * w[j]
                - &cross * inn.try_inverse().expect("innovation invertible") * cross.transpose()
        })
        .collect();
    (0..modes)
        .map(|i| (0..modes).fold(Mat::zeros(n, n), |acc, j| acc + &inner[j] * plant.chain.p(j, i)))
        .collect()
}

/// `Y_i = sum_j p_ji S_j`.
pub fn mix(plant: &FilterPlant, s: &MatrixFamily) -> Vec<Mat> {
    let n = plant.state_dim();
    (0..plant.modes())
        .map(|i| (0..plant.modes()).fold(Mat::zeros(n, n), |acc, j| acc + &s[j] * plant.chain.p(j, i)))
        .collect()
}
