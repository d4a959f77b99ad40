//! Direct simulation of one (N,β,κ) exponential-model generation.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{ensure, Result};

/// Tail-weight level above which the truncation is flagged.
pub const TAIL_FLAG: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct EmGeneration {
    /// Positions of the N selected children, in selection order.
    pub child_positions: Vec<f64>,
    /// Parent index (0-based) of each selected child.
    pub parent_of: Vec<usize>,
    /// Estimated selection mass beyond the M retained atoms, relative to the retained mass.
    pub tail_weight: f64,
    pub truncation_flag: bool,
}

impl EmGeneration {
    /// Family frequencies of the next generation: softmax(κ·positions).
    pub fn frequencies(&self, kappa: f64) -> Vec<f64> {
        let m = self.child_positions.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let w: Vec<f64> = self.child_positions.iter().map(|x| (kappa * (x - m)).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }
}

fn log_sum_exp(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = x.clone().fold(f64::NEG_INFINITY, f64::max);
    m + x.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// The superposed children form a PPP with atoms `X_eq − ln T_i`, T_i the
/// arrival times of a unit Poisson process and `X_eq = ln Σ e^{κX_j}`. The
/// first M atoms are kept; N are selected without replacement with weights
/// `e^{βz} ∝ T^{−β}` via exponential keys; each selected child picks its
/// parent from softmax(κX).
pub fn em_generation_direct<R: Rng + ?Sized>(
    beta: f64,
    kappa: f64,
    parent_positions: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<EmGeneration> {
    let n = parent_positions.len();
    ensure!(beta > 1.0, Model, "exponential model needs beta > 1, got {}", beta);
    ensure!(kappa > 0.0, Model, "kappa must be positive, got {}", kappa);
    ensure!(n >= 1, Model, "empty parent generation");
    ensure!(m >= 10 * n, Model, "truncation M = {} below 10 N = {}", m, 10 * n);
    ensure!(parent_positions.iter().all(|x| x.is_finite()), Model, "parent positions must be finite");
    let scaled = parent_positions.iter().map(|x| kappa * x);
    let x_eq = log_sum_exp(scaled.clone());
    let mut t = 0.0;
    let mut ln_t = Vec::with_capacity(m);
    let mut mass = 0.0;
    for _ in 0..m {
        let e: f64 = Exp1.sample(rng);
        t += e;
        ln_t.push(t.ln());
        mass += t.powf(-beta);
    }
    let tail = t.powf(1.0 - beta) / (beta - 1.0);
    let tail_weight = tail / mass;
    // key_i = E_i · T_i^β; the N smallest keys in ascending order are a
    // weighted sample without replacement in selection order
    let mut keys: Vec<(f64, usize)> = ln_t
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let e: f64 = Exp1.sample(rng);
            (e.ln() + beta * l, i)
        })
        .collect();
    keys.select_nth_unstable_by(n - 1, |a, b| a.0.total_cmp(&b.0));
    keys.truncate(n);
    keys.sort_by(|a, b| a.0.total_cmp(&b.0));
    let child_positions: Vec<f64> = keys.iter().map(|&(_, i)| x_eq - ln_t[i]).collect();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for x in scaled {
        acc += (x - x_eq).exp();
        cum.push(acc);
    }
    let parent_of: Vec<usize> = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cum.partition_point(|&c| c <= u).min(n - 1)
        })
        .collect();
    Ok(EmGeneration { child_positions, parent_of, tail_weight, truncation_flag: tail_weight > TAIL_FLAG })
}
