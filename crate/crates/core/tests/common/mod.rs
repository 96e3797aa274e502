//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use convgroups::features::{FeatureTensor, PresenceMask};
use convgroups::net::ModelParams;
use nalgebra::DMatrix;

/// Dominant-set weights `w_S(i)` for every subset `S` (bitmask) and member `i`,
/// by the recursive definition over `S \ {i}`.
pub struct DsWeights {
    p: usize,
    w: Vec<Vec<f64>>,
}

impl DsWeights {
    pub fn new(a: &[f64], p: usize) -> Self {
        let full = 1usize << p;
        let mut w = vec![vec![0.0; p]; full];
        let awdeg = |s: usize, i: usize| {
            let size = s.count_ones() as f64;
            (0..p).filter(|&j| s >> j & 1 == 1).map(|j| a[i * p + j]).sum::<f64>() / size
        };
        let mut order: Vec<usize> = (1..full).collect();
        order.sort_by_key(|s| s.count_ones());
        for s in order {
            for i in (0..p).filter(|&i| s >> i & 1 == 1) {
                if s.count_ones() == 1 {
                    w[s][i] = 1.0;
                    continue;
                }
                let rest = s & !(1 << i);
                w[s][i] = (0..p)
                    .filter(|&j| rest >> j & 1 == 1)
                    .map(|j| (a[j * p + i] - awdeg(rest, j)) * w[rest][j])
                    .sum();
            }
        }
        Self { p, w }
    }

    pub fn weight(&self, s: usize, i: usize) -> f64 {
        self.w[s][i]
    }

    pub fn total(&self, s: usize) -> f64 {
        (0..self.p).filter(|&i| s >> i & 1 == 1).map(|i| self.w[s][i]).sum()
    }

    /// Internal coherence (every member weight positive, every sub-subset
    /// of positive total weight) and external incoherence (every outsider
    /// would enter with negative weight).
    pub fn is_dominant(&self, s: usize, tol: f64) -> bool {
        if s == 0 {
            return false;
        }
        let mut t = s;
        while t > 0 {
            if self.total(t) <= tol {
                return false;
            }
            t = (t - 1) & s;
        }
        let members_ok = (0..self.p)
            .filter(|&i| s >> i & 1 == 1)
            .all(|i| self.weight(s, i) > tol);
        let outsiders_ok = (0..self.p)
            .filter(|&i| s >> i & 1 == 0)
            .all(|i| self.weight(s | 1 << i, i) < -tol);
        members_ok && outsiders_ok
    }

    pub fn dominant_sets(&self, tol: f64) -> Vec<usize> {
        (1..1usize << self.p).filter(|&s| self.is_dominant(s, tol)).collect()
    }
}

pub fn mask_of(members: &[usize]) -> usize {
    members.iter().fold(0, |m, &i| m | 1 << i)
}

/// AUC by counting every positive/negative pair.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate().filter(|(i, _)| labels[*i]) {
        let _ = i;
        for (_, &sj) in scores.iter().enumerate().filter(|(j, _)| !labels[*j]) {
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A plain LSTM run on one slot alone: gate input `[v; m·h; h]` where `m`
/// is the slot's presence at the previous step. This is what the joint
/// model must reduce to when the pooling weight is zero.
pub fn lone_lstm(params: &ModelParams, features: &FeatureTensor, mask: &PresenceMask, slot: usize) -> f64 {
    let hs = params.hidden_size;
    let n = params.input_size;
    let d = n + 2 * hs;
    let mut h = vec![0.0; hs];
    let mut c = vec![0.0; hs];
    for t in 0..features.steps {
        let m = if t > 0 && mask.get(t - 1, slot) { 1.0 } else { 0.0 };
        let mut x = features.at(t, slot).to_vec();
        x.extend(h.iter().map(|v| m * v));
        x.extend_from_slice(&h);
        let z = |row: usize| -> f64 {
            (0..d).map(|k| params.w_gates[row * d + k] * x[k]).sum::<f64>() + params.b_gates[row]
        };
        let mut h_new = vec![0.0; hs];
        for u in 0..hs {
            let f = sig(z(u));
            let i = sig(z(hs + u));
            let o = sig(z(2 * hs + u));
            let g = z(3 * hs + u).tanh();
            c[u] = f * c[u] + i * g;
            h_new[u] = o * c[u].tanh();
        }
        h = h_new;
    }
    sig((0..hs).map(|u| params.w_out[u] * h[u]).sum::<f64>() + params.b_out)
}

/// GP log marginal likelihood via an LU decomposition, for grid search.
pub fn lml_lu(times: &[f64], y: &[f64], ell: f64, sf2: f64, sn2: f64) -> f64 {
    let n = times.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let d = (times[i] - times[j]) / ell;
        sf2 * (-0.5 * d * d).exp() + if i == j { sn2 } else { 0.0 }
    });
    let lu = k.clone().lu();
    let alpha = lu.solve(&nalgebra::DVector::from_column_slice(y)).unwrap();
    let det = lu.determinant();
    let fit: f64 = y.iter().zip(alpha.iter()).map(|(a, b)| a * b).sum();
    -0.5 * fit - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// `points` log-spaced values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// One joint draw from a zero-mean RBF GP plus noise at `times`.
pub fn draw_gp(times: &[f64], ell: f64, sf2: f64, sn2: f64, z: &[f64]) -> Vec<f64> {
    let n = times.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let d = (times[i] - times[j]) / ell;
        sf2 * (-0.5 * d * d).exp() + if i == j { sn2 + 1e-10 } else { 0.0 }
    });
    let l = k.cholesky().unwrap().unpack();
    (l * nalgebra::DVector::from_column_slice(z)).iter().copied().collect()
}
