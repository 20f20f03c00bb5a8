#![allow(dead_code)]

use misnet::{standardize, ObservedMatrix, ResponseVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Correlated Gaussian design with a linear response, then a random mask.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize, miss: f64) -> (ObservedMatrix, ResponseVector) {
    let mix = DMatrix::from_fn(p, p, |i, j| {
        let g: f64 = rng.sample(StandardNormal);
        if i == j { 1.0 } else { 0.4 * g }
    });
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut values = vec![0.0; n * p];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &mix * z;
        for j in 0..p {
            values[i * p + j] = x[j] + 1.5 * j as f64;
        }
        let e: f64 = rng.sample(StandardNormal);
        y[i] = (0..p).map(|j| x[j] * beta[j]).sum::<f64>() + 0.5 * e + 3.0;
    }
    loop {
        let mask: Vec<bool> = (0..n * p).map(|_| rng.random::<f64>() >= miss).collect();
        let x = ObservedMatrix::new(values.clone(), mask, n, p).unwrap();
        let ok = (0..p).all(|j| x.observed_in_column(j) >= 3)
            && (0..p).all(|j| (j..p).all(|k| (0..n).any(|i| x.is_observed(i, j) && x.is_observed(i, k))));
        if ok {
            return (x, ResponseVector::new(y).unwrap());
        }
    }
}

pub fn standardized_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    miss: f64,
) -> (ObservedMatrix, ResponseVector) {
    let (x, y) = random_problem(rng, n, p, miss);
    let (xs, ys, _) = standardize(&x, &y).unwrap();
    (xs, ys)
}

/// Pairwise-deletion estimate straight from the definitions, one entry at a time.
pub fn naive_covariance(x: &ObservedMatrix, y: &ResponseVector, eta: f64) -> (DMatrix<f64>, Vec<f64>) {
    let (n, p) = (x.n_rows(), x.n_cols());
    let w = |count: usize| (1.0 - eta) / count as f64 + eta / n as f64;
    let mut c = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in 0..p {
            let mut inner = 0.0;
            let mut count = 0;
            for i in 0..n {
                if x.is_observed(i, j) && x.is_observed(i, k) {
                    inner += x.get(i, j).unwrap() * x.get(i, k).unwrap();
                    count += 1;
                }
            }
            c[(j, k)] = w(count) * inner;
        }
    }
    let cy = (0..p)
        .map(|j| {
            let mut inner = 0.0;
            let mut count = 0;
            for i in 0..n {
                if let Some(v) = x.get(i, j) {
                    inner += v * y.values()[i];
                    count += 1;
                }
            }
            w(count) * inner
        })
        .collect();
    (c, cy)
}

/// Elastic-net objective evaluated independently of the library.
pub fn objective(c: &DMatrix<f64>, cy: &[f64], y_sq: f64, lambda: f64, alpha: f64, b: &[f64]) -> f64 {
    let bv = DVector::from_column_slice(b);
    let quad = (bv.transpose() * c * &bv)[(0, 0)];
    let lin: f64 = cy.iter().zip(b).map(|(u, v)| u * v).sum();
    let l1: f64 = b.iter().map(|v| v.abs()).sum();
    let l2: f64 = b.iter().map(|v| v * v).sum();
    0.5 * (quad - 2.0 * lin + y_sq) + lambda * (alpha * l1 + 0.5 * (1.0 - alpha) * l2)
}

/// Accelerated proximal gradient on the same objective, run to a tight tolerance.
pub fn fista(c: &DMatrix<f64>, cy: &[f64], lambda: f64, alpha: f64) -> Vec<f64> {
    let p = cy.len();
    let ridge = lambda * (1.0 - alpha);
    let l1 = lambda * alpha;
    let h = c + DMatrix::identity(p, p) * ridge;
    let lip = h.clone().symmetric_eigen().eigenvalues.max().max(1e-12);
    let step = 1.0 / lip;
    let cyv = DVector::from_column_slice(cy);
    let mut x = DVector::zeros(p);
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let grad = &h * &z - &cyv;
        let u = &z - grad * step;
        let next = u.map(|v| {
            let a = v.abs() - l1 * step;
            if a > 0.0 { a * v.signum() } else { 0.0 }
        });
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        let change = (&next - &x).amax();
        x = next;
        t = t_next;
        if change < 1e-14 {
            break;
        }
    }
    x.iter().copied().collect()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
        m.swap_rows(col, piv);
        inv.swap_rows(col, piv);
        let d = m[(col, col)];
        for k in 0..n {
            m[(col, k)] /= d;
            inv[(col, k)] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[(r, col)];
                if f != 0.0 {
                    for k in 0..n {
                        m[(r, k)] -= f * m[(col, k)];
                        inv[(r, k)] -= f * inv[(col, k)];
                    }
                }
            }
        }
    }
    inv
}

/// `mu_m + Sigma_mo Sigma_oo^{-1} (x_o - mu_o)` written out with an explicit inverse.
pub fn explicit_conditional_mean(mu: &[f64], sigma: &DMatrix<f64>, row: &[Option<f64>]) -> Vec<f64> {
    let obs: Vec<usize> = (0..row.len()).filter(|&j| row[j].is_some()).collect();
    let mis: Vec<usize> = (0..row.len()).filter(|&j| row[j].is_none()).collect();
    let mut out: Vec<f64> = row.iter().zip(mu).map(|(r, m)| r.unwrap_or(*m)).collect();
    if obs.is_empty() || mis.is_empty() {
        return out;
    }
    let soo = DMatrix::from_fn(obs.len(), obs.len(), |a, b| sigma[(obs[a], obs[b])]);
    let smo = DMatrix::from_fn(mis.len(), obs.len(), |a, b| sigma[(mis[a], obs[b])]);
    let d = DVector::from_fn(obs.len(), |a, _| row[obs[a]].unwrap() - mu[obs[a]]);
    let cond = smo * gauss_jordan_inverse(&soo) * d;
    for (a, &j) in mis.iter().enumerate() {
        out[j] = mu[j] + cond[a];
    }
    out
}

/// Random covariance `A A' + eps I` with the given conditioning floor.
pub fn random_spd(rng: &mut ChaCha8Rng, p: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(p, p) * floor
}
