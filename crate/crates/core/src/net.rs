//! Joint LSTM affinity model.
//!
//! One focal person at a time: every other slot runs the same LSTM cell.
//! Before each step the hidden states of the slots present at the previous
//! step are averaged into a context vector `K`, and each slot receives the
//! mixture `o = λK + (1 − λ)g` (with `g = mask · h`) next to its features.
//! The final hidden state goes through a linear head and a sigmoid.

use qd::Quad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureTensor, PresenceMask, N_CHANNELS, PAD};

/// Gate row blocks in `w_gates` / `b_gates`.
const FORGET: usize = 0;
const INPUT: usize = 1;
const OUTPUT: usize = 2;
const CELL: usize = 3;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// All trainable weights.
///
/// `w_gates` is `4H × (N + 2H)` row-major, stacking the forget, input,
/// output and cell-candidate blocks; each row consumes `[v; o; h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_gates: Vec<f64>,
    pub b_gates: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
    /// Unconstrained; `λ = sigmoid(lambda_raw)`.
    pub lambda_raw: f64,
}

impl ModelParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let d = input_size + 2 * hidden_size;
        Self {
            input_size,
            hidden_size,
            w_gates: vec![0.0; 4 * hidden_size * d],
            b_gates: vec![0.0; 4 * hidden_size],
            w_out: vec![0.0; hidden_size],
            b_out: 0.0,
            lambda_raw: 0.0,
        }
    }

    /// Uniform `±1/√fan_in` weights, zero biases except the forget gate at 1.
    pub fn init<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        let gate_bound = 1.0 / (p.gate_input_size() as f64).sqrt();
        for w in &mut p.w_gates {
            *w = rng.random_range(-gate_bound..gate_bound);
        }
        let out_bound = 1.0 / (hidden_size as f64).sqrt();
        for w in &mut p.w_out {
            *w = rng.random_range(-out_bound..out_bound);
        }
        p.b_gates[FORGET * hidden_size..(FORGET + 1) * hidden_size].fill(1.0);
        p
    }

    pub fn gate_input_size(&self) -> usize {
        self.input_size + 2 * self.hidden_size
    }

    pub fn lambda(&self) -> f64 {
        sigmoid(self.lambda_raw)
    }

    pub fn num_params(&self) -> usize {
        self.w_gates.len() + self.b_gates.len() + self.w_out.len() + 2
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(&self.w_gates);
        v.extend_from_slice(&self.b_gates);
        v.extend_from_slice(&self.w_out);
        v.push(self.b_out);
        v.push(self.lambda_raw);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let (w, rest) = flat.split_at(self.w_gates.len());
        let (b, rest) = rest.split_at(self.b_gates.len());
        let (wo, rest) = rest.split_at(self.w_out.len());
        self.w_gates.copy_from_slice(w);
        self.b_gates.copy_from_slice(b);
        self.w_out.copy_from_slice(wo);
        self.b_out = rest[0];
        self.lambda_raw = rest[1];
    }

    /// Adds `other` into `self` elementwise.
    pub fn accumulate(&mut self, other: &ModelParams) {
        axpy(1.0, &other.w_gates, &mut self.w_gates);
        axpy(1.0, &other.b_gates, &mut self.b_gates);
        axpy(1.0, &other.w_out, &mut self.w_out);
        self.b_out += other.b_out;
        self.lambda_raw += other.lambda_raw;
    }

    /// Checks that every buffer matches the declared sizes.
    pub fn check_layout(&self) -> Result<()> {
        let expect = [
            (
                "w_gates",
                self.w_gates.len(),
                4 * self.hidden_size * self.gate_input_size(),
            ),
            ("b_gates", self.b_gates.len(), 4 * self.hidden_size),
            ("w_out", self.w_out.len(), self.hidden_size),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!("{name} holds {got} values, expected {want}")));
            }
        }
        if !self.is_finite() {
            return Err(Error::invariant("params", "contain non-finite values"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    fn check_shapes(&self, features: &FeatureTensor, mask: &PresenceMask) -> Result<()> {
        if features.values.len() != features.steps * features.slots * self.input_size {
            return Err(Error::Shape(format!(
                "feature tensor holds {} values, expected {} steps x {} slots x {} channels",
                features.values.len(),
                features.steps,
                features.slots,
                self.input_size
            )));
        }
        if mask.steps != features.steps || mask.slots != features.slots {
            return Err(Error::Shape(format!(
                "mask is {}x{}, features are {}x{}",
                mask.steps, mask.slots, features.steps, features.slots
            )));
        }
        if features.steps == 0 {
            return Err(Error::Shape("zero-length window".into()));
        }
        Ok(())
    }
}

/// Affinities of every slot with respect to the focal person.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalOutput {
    pub affinities: Vec<f64>,
    /// False for slots absent at the final step.
    pub valid: Vec<bool>,
}

/// Recurrent state of all slots for one focal person.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl NetState {
    pub fn zeros(slots: usize, hidden: usize) -> Self {
        Self {
            h: vec![0.0; slots * hidden],
            c: vec![0.0; slots * hidden],
        }
    }
}

/// Forward intermediates kept for backpropagation.
struct Trace {
    rows: Vec<usize>,
    /// per step, per row: gate input `[v; o; h]`
    x: Vec<Vec<f64>>,
    /// per step, per row: activated gates `[f; i; o; c~]`
    gates: Vec<Vec<f64>>,
    /// per step 0..=T, per row: cell state
    c: Vec<Vec<f64>>,
    /// per step 0..=T, per row: hidden state
    h: Vec<Vec<f64>>,
    /// per step: pooled context and pooling mask over rows
    context: Vec<Vec<f64>>,
    pool_mask: Vec<Vec<bool>>,
    affinities: Vec<f64>,
}

fn rollout(params: &ModelParams, features: &FeatureTensor, mask: &PresenceMask, rows: Vec<usize>) -> Trace {
    let hs = params.hidden_size;
    let d = params.gate_input_size();
    let n_in = params.input_size;
    let steps = features.steps;
    let r = rows.len();
    let lambda = params.lambda();

    let mut trace = Trace {
        x: Vec::with_capacity(steps),
        gates: Vec::with_capacity(steps),
        c: vec![vec![0.0; r * hs]],
        h: vec![vec![0.0; r * hs]],
        context: Vec::with_capacity(steps),
        pool_mask: Vec::with_capacity(steps),
        affinities: Vec::new(),
        rows,
    };

    for step in 0..steps {
        let h_prev = &trace.h[step];
        let c_prev = &trace.c[step];
        // h_step summarises input up to step-1, so it is pooled with that step's mask.
        let pm: Vec<bool> = trace
            .rows
            .iter()
            .map(|&slot| step > 0 && mask.get(step - 1, slot))
            .collect();
        let count = pm.iter().filter(|&&p| p).count();
        let mut context = vec![0.0; hs];
        if count > 0 {
            for (k, _) in pm.iter().enumerate().filter(|(_, &p)| p) {
                axpy(1.0, &h_prev[k * hs..(k + 1) * hs], &mut context);
            }
            let inv = 1.0 / count as f64;
            context.iter_mut().for_each(|v| *v *= inv);
        }

        let mut x = vec![0.0; r * d];
        let mut gates = vec![0.0; r * 4 * hs];
        let mut c_new = vec![0.0; r * hs];
        let mut h_new = vec![0.0; r * hs];
        for (k, &slot) in trace.rows.iter().enumerate() {
            let xk = &mut x[k * d..(k + 1) * d];
            let hk = &h_prev[k * hs..(k + 1) * hs];
            xk[..n_in].copy_from_slice(features.at(step, slot));
            let m = if pm[k] { 1.0 } else { 0.0 };
            for u in 0..hs {
                xk[n_in + u] = lambda * context[u] + (1.0 - lambda) * m * hk[u];
            }
            xk[n_in + hs..].copy_from_slice(hk);

            let gk = &mut gates[k * 4 * hs..(k + 1) * 4 * hs];
            for (row, g) in gk.iter_mut().enumerate() {
                let z = dot(&params.w_gates[row * d..(row + 1) * d], xk) + params.b_gates[row];
                *g = if row / hs == CELL { z.tanh() } else { sigmoid(z) };
            }
            for u in 0..hs {
                let f = gk[FORGET * hs + u];
                let i = gk[INPUT * hs + u];
                let o = gk[OUTPUT * hs + u];
                let cand = gk[CELL * hs + u];
                let c = f * c_prev[k * hs + u] + i * cand;
                c_new[k * hs + u] = c;
                h_new[k * hs + u] = o * c.tanh();
            }
        }
        trace.x.push(x);
        trace.gates.push(gates);
        trace.c.push(c_new);
        trace.h.push(h_new);
        trace.context.push(context);
        trace.pool_mask.push(pm);
    }

    let h_last = &trace.h[steps];
    trace.affinities = (0..r)
        .map(|k| sigmoid(dot(&params.w_out, &h_last[k * hs..(k + 1) * hs]) + params.b_out))
        .collect();
    trace
}

/// Accumulates parameter gradients given `d loss / d affinity` per traced row.
fn backprop(params: &ModelParams, trace: &Trace, d_aff: &[f64], grads: &mut ModelParams) {
    let hs = params.hidden_size;
    let d = params.gate_input_size();
    let n_in = params.input_size;
    let steps = trace.x.len();
    let r = trace.rows.len();
    let lambda = params.lambda();

    let mut dh = vec![0.0; r * hs];
    let mut dc = vec![0.0; r * hs];
    let h_last = &trace.h[steps];
    for k in 0..r {
        let a = trace.affinities[k];
        let dz = d_aff[k] * a * (1.0 - a);
        if dz == 0.0 {
            continue;
        }
        grads.b_out += dz;
        axpy(dz, &h_last[k * hs..(k + 1) * hs], &mut grads.w_out);
        axpy(dz, &params.w_out, &mut dh[k * hs..(k + 1) * hs]);
    }

    let mut dz = vec![0.0; 4 * hs];
    let mut dx = vec![0.0; d];
    let mut d_mix = vec![0.0; r * hs];
    for step in (0..steps).rev() {
        let x = &trace.x[step];
        let gates = &trace.gates[step];
        let c_prev = &trace.c[step];
        let c_cur = &trace.c[step + 1];
        let mut dh_prev = vec![0.0; r * hs];
        let mut dc_prev = vec![0.0; r * hs];
        for k in 0..r {
            let gk = &gates[k * 4 * hs..(k + 1) * 4 * hs];
            for u in 0..hs {
                let f = gk[FORGET * hs + u];
                let i = gk[INPUT * hs + u];
                let o = gk[OUTPUT * hs + u];
                let cand = gk[CELL * hs + u];
                let tc = c_cur[k * hs + u].tanh();
                let dhu = dh[k * hs + u];
                let dcu = dc[k * hs + u] + dhu * o * (1.0 - tc * tc);
                dz[FORGET * hs + u] = dcu * c_prev[k * hs + u] * f * (1.0 - f);
                dz[INPUT * hs + u] = dcu * cand * i * (1.0 - i);
                dz[OUTPUT * hs + u] = dhu * tc * o * (1.0 - o);
                dz[CELL * hs + u] = dcu * i * (1.0 - cand * cand);
                dc_prev[k * hs + u] = dcu * f;
            }
            let xk = &x[k * d..(k + 1) * d];
            dx.fill(0.0);
            for (row, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grads.b_gates[row] += g;
                axpy(g, xk, &mut grads.w_gates[row * d..(row + 1) * d]);
                axpy(g, &params.w_gates[row * d..(row + 1) * d], &mut dx);
            }
            d_mix[k * hs..(k + 1) * hs].copy_from_slice(&dx[n_in..n_in + hs]);
            axpy(1.0, &dx[n_in + hs..], &mut dh_prev[k * hs..(k + 1) * hs]);
        }

        // Through o = λK + (1 − λ)g, K = Σ g / count, g = mask · h.
        let pm = &trace.pool_mask[step];
        let count = pm.iter().filter(|&&p| p).count();
        if count > 0 {
            let h_prev = &trace.h[step];
            let context = &trace.context[step];
            let mut d_context = vec![0.0; hs];
            let mut d_lambda = 0.0;
            for k in 0..r {
                let dm = &d_mix[k * hs..(k + 1) * hs];
                axpy(lambda, dm, &mut d_context);
                let m = if pm[k] { 1.0 } else { 0.0 };
                for u in 0..hs {
                    d_lambda += dm[u] * (context[u] - m * h_prev[k * hs + u]);
                }
                if pm[k] {
                    axpy(1.0 - lambda, dm, &mut dh_prev[k * hs..(k + 1) * hs]);
                }
            }
            grads.lambda_raw += d_lambda * lambda * (1.0 - lambda);
            let inv = 1.0 / count as f64;
            for k in (0..r).filter(|&k| pm[k]) {
                axpy(inv, &d_context, &mut dh_prev[k * hs..(k + 1) * hs]);
            }
        }
        dh = dh_prev;
        dc = dc_prev;
    }
}

/// Affinities of all `n − 1` slots; rows absent at the final step are flagged invalid.
pub fn forward(params: &ModelParams, features: &FeatureTensor, mask: &PresenceMask) -> Result<FocalOutput> {
    params.check_shapes(features, mask)?;
    let trace = rollout(params, features, mask, (0..features.slots).collect());
    let last = features.steps - 1;
    Ok(FocalOutput {
        affinities: trace.affinities,
        valid: (0..features.slots).map(|s| mask.get(last, s)).collect(),
    })
}

/// Final recurrent state after the rollout (all slots).
pub fn final_state(params: &ModelParams, features: &FeatureTensor, mask: &PresenceMask) -> Result<NetState> {
    params.check_shapes(features, mask)?;
    let trace = rollout(params, features, mask, (0..features.slots).collect());
    let steps = features.steps;
    Ok(NetState {
        h: trace.h[steps].clone(),
        c: trace.c[steps].clone(),
    })
}

/// One training example: a focal window with per-slot binary labels.
#[derive(Debug, Clone)]
pub struct Sample {
    pub features: FeatureTensor,
    pub mask: PresenceMask,
    pub labels: Vec<f64>,
}

impl Sample {
    pub fn valid_slots(&self) -> impl Iterator<Item = usize> + '_ {
        let last = self.mask.steps - 1;
        (0..self.mask.slots).filter(move |&s| self.mask.get(last, s))
    }

    pub fn num_valid(&self) -> usize {
        self.valid_slots().count()
    }
}

/// Squared error of one sample and its gradient (scaled by `scale`) added to `grads`.
///
/// Slots never present in the window are skipped: they do not enter the
/// pooling and their output is invalid, so they cannot affect the loss.
pub fn sample_loss_grad(params: &ModelParams, sample: &Sample, scale: f64, grads: &mut ModelParams) -> Result<f64> {
    params.check_shapes(&sample.features, &sample.mask)?;
    let m = &sample.mask;
    let rows: Vec<usize> = (0..m.slots).filter(|&s| (0..m.steps).any(|t| m.get(t, s))).collect();
    let trace = rollout(params, &sample.features, m, rows);
    let last = m.steps - 1;
    let mut loss = 0.0;
    let d_aff: Vec<f64> = trace
        .rows
        .iter()
        .zip(&trace.affinities)
        .map(|(&slot, &a)| {
            if m.get(last, slot) {
                let r = a - sample.labels[slot];
                loss += r * r;
                2.0 * r * scale
            } else {
                0.0
            }
        })
        .collect();
    backprop(params, &trace, &d_aff, grads);
    Ok(loss)
}

/// Sum of squared errors over all valid pairs of the batch.
pub fn loss(predicted: &[FocalOutput], gt: &[Vec<f64>]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if predicted.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} label vectors",
            predicted.len(),
            gt.len()
        )));
    }
    let mut total = 0.0;
    for (p, y) in predicted.iter().zip(gt) {
        if p.affinities.len() != y.len() || p.valid.len() != y.len() {
            return Err(Error::Shape("prediction and label lengths differ".into()));
        }
        for ((&a, &v), &label) in p.affinities.iter().zip(&p.valid).zip(y) {
            if !v {
                continue;
            }
            if label != 0.0 && label != 1.0 {
                return Err(Error::invariant("gt", format!("label {label} is not binary")));
            }
            total += (a - label) * (a - label);
        }
    }
    Ok(total)
}

/// Batch loss (sum over valid pairs) and its analytic gradient.
pub fn batch_loss_grad(params: &ModelParams, batch: &[Sample]) -> Result<(f64, ModelParams)> {
    let mut grads = ModelParams::zeros(params.input_size, params.hidden_size);
    let mut total = 0.0;
    for s in batch {
        total += sample_loss_grad(params, s, 1.0, &mut grads)?;
    }
    Ok((total, grads))
}

/// Summed squared error of a batch.
pub fn batch_loss(params: &ModelParams, batch: &[Sample]) -> Result<f64> {
    let preds = batch
        .iter()
        .map(|s| forward(params, &s.features, &s.mask))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Vec<f64>> = batch.iter().map(|s| s.labels.clone()).collect();
    loss(&preds, &labels)
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;

fn sigmoid_dd(z: Quad) -> Quad {
    let one = Quad::from(1.0);
    one / (one + (-z).exp())
}

fn tanh_dd(z: Quad) -> Quad {
    let one = Quad::from(1.0);
    let e = (z * Quad::from(-2.0)).exp();
    (one - e) / (one + e)
}

fn dot_dd(w: &[f64], x: &[Quad]) -> Quad {
    w.iter()
        .zip(x)
        .fold(Quad::from(0.0), |acc, (&a, &b)| acc + Quad::from(a) * b)
}

/// Batch loss evaluated in double-double arithmetic.
fn batch_loss_dd(params: &ModelParams, batch: &[Sample]) -> Quad {
    let hs = params.hidden_size;
    let d = params.gate_input_size();
    let n_in = params.input_size;
    let zero = Quad::from(0.0);
    let lambda = sigmoid_dd(Quad::from(params.lambda_raw));
    let keep = Quad::from(1.0) - lambda;
    let mut total = zero;
    for s in batch {
        let slots = s.features.slots;
        let mut h = vec![zero; slots * hs];
        let mut c = vec![zero; slots * hs];
        let mut x = vec![zero; d];
        for step in 0..s.features.steps {
            let pm: Vec<bool> = (0..slots).map(|k| step > 0 && s.mask.get(step - 1, k)).collect();
            let count = pm.iter().filter(|&&p| p).count();
            let mut context = vec![zero; hs];
            if count > 0 {
                for k in (0..slots).filter(|&k| pm[k]) {
                    for u in 0..hs {
                        context[u] += h[k * hs + u];
                    }
                }
                let inv = Quad::from(count as f64);
                context.iter_mut().for_each(|v| *v /= inv);
            }
            let mut h_new = h.clone();
            for k in 0..slots {
                for (xi, &v) in x.iter_mut().zip(s.features.at(step, k)) {
                    *xi = Quad::from(v);
                }
                for u in 0..hs {
                    let g = if pm[k] { h[k * hs + u] } else { zero };
                    x[n_in + u] = lambda * context[u] + keep * g;
                    x[n_in + hs + u] = h[k * hs + u];
                }
                let gate = |block: usize, u: usize| {
                    let row = block * hs + u;
                    dot_dd(&params.w_gates[row * d..(row + 1) * d], &x) + Quad::from(params.b_gates[row])
                };
                for u in 0..hs {
                    let f = sigmoid_dd(gate(FORGET, u));
                    let i = sigmoid_dd(gate(INPUT, u));
                    let o = sigmoid_dd(gate(OUTPUT, u));
                    let cand = tanh_dd(gate(CELL, u));
                    let cu = f * c[k * hs + u] + i * cand;
                    c[k * hs + u] = cu;
                    h_new[k * hs + u] = o * tanh_dd(cu);
                }
            }
            h = h_new;
        }
        for k in s.valid_slots() {
            let a = sigmoid_dd(dot_dd(&params.w_out, &h[k * hs..(k + 1) * hs]) + Quad::from(params.b_out));
            let r = a - Quad::from(s.labels[k]);
            total += r * r;
        }
    }
    total
}

/// Largest relative disagreement between analytic and central-difference
/// gradients. The differences are taken on a double-double evaluation of
/// the loss; in plain f64 its rounding (about 1e-16 of the loss, divided by
/// the step) swamps gradient components below roughly 1e-6.
pub fn grad_check(params: &ModelParams, batch: &[Sample]) -> Result<f64> {
    let (_, analytic) = batch_loss_grad(params, batch)?;
    let analytic = analytic.to_flat();
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let (hi, lo) = (base[k] + GRAD_CHECK_STEP, base[k] - GRAD_CHECK_STEP);
        flat[k] = hi;
        probe.set_flat(&flat);
        let up = batch_loss_dd(&probe, batch);
        flat[k] = lo;
        probe.set_flat(&flat);
        let down = batch_loss_dd(&probe, batch);
        flat[k] = base[k];
        let diff = up - down;
        // hi - lo is exact, unlike 2 * step
        let numeric = (diff.0 + diff.1) / (hi - lo);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Random parameters and a small batch for gradient checking. Every
/// sample has at least two persons present at each step, so the pooling
/// weight receives gradient.
pub fn grad_check_fixture(
    seed: u64,
    n: usize,
    steps: usize,
    hidden: usize,
    batch: usize,
) -> (ModelParams, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(N_CHANNELS, hidden, &mut rng);
    for b in &mut params.b_gates {
        *b += rng.random_range(-0.5..0.5);
    }
    for w in &mut params.w_out {
        *w = rng.random_range(-1.0..1.0);
    }
    params.b_out = rng.random_range(-0.5..0.5);
    params.lambda_raw = rng.random_range(-1.0..1.0);
    let slots = n.saturating_sub(1).max(2);
    let samples = (0..batch)
        .map(|_| {
            let mut features = FeatureTensor::new(0, steps, slots);
            let mut mask = PresenceMask::new(steps, slots);
            for t in 0..steps {
                let forced = rng.random_range(0..slots);
                for s in 0..slots {
                    let present = s == forced || s == (forced + 1) % slots || rng.random_bool(0.7);
                    mask.set(t, s, present);
                    for v in features.at_mut(t, s) {
                        *v = if present { rng.random_range(0.0..1.0) } else { PAD };
                    }
                }
            }
            let labels = (0..slots)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
                .collect();
            Sample { features, mask, labels }
        })
        .collect();
    (params, samples)
}
