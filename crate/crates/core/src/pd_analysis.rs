//! Stick-breaking construction of Poisson–Dirichlet size-biased picks and the
//! martingale bookkeeping around ζ_{N,γ} = Σ Ṽ_i^γ.
//!
//! `Y_i ~ Beta(1−α, θ+iα)` independently, `Ṽ_1 = Y_1`,
//! `Ṽ_i = (1−Y_1)⋯(1−Y_{i−1}) Y_i`. Beta variates are drawn as Gamma ratios in
//! log space so that `ln Y_i` and `ln(1−Y_i)` are both accurate even when
//! `Y_i` is of order 1e-10.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::diagnostics::{CheckReport, Row, Tolerance};
use crate::error::{ensure, Result};
use crate::quadrature::beta_kernel_integral;
use crate::rng::par_replicates;
use crate::special_fn::{ln_beta_unchecked, ln_gamma, psi, PdParams};
use crate::stats::{joint_z, EstimateWithError};

/// Samples ln G for G ~ Gamma(shape, 1). Shapes below one use
/// G = G' U^{1/shape} with G' ~ Gamma(shape + 1).
#[derive(Clone, Debug)]
pub struct LnGammaSampler {
    dist: Gamma<f64>,
    inv_shape: Option<f64>,
}

impl LnGammaSampler {
    pub fn new(shape: f64) -> Self {
        assert!(shape > 0.0 && shape.is_finite(), "gamma shape {}", shape);
        if shape < 1.0 {
            LnGammaSampler { dist: Gamma::new(shape + 1.0, 1.0).unwrap(), inv_shape: Some(1.0 / shape) }
        } else {
            LnGammaSampler { dist: Gamma::new(shape, 1.0).unwrap(), inv_shape: None }
        }
    }

    pub fn sample_ln<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = self.dist.sample(rng).ln();
        match self.inv_shape {
            Some(inv) => {
                let u: f64 = rng.random();
                // u ∈ [0,1); map to (0,1]
                g + (1.0 - u).ln() * inv
            }
            None => g,
        }
    }
}

/// `(ln X, ln W)` ↦ `(ln Y, ln(1−Y))` for `Y = X/(X+W)`.
#[inline]
fn beta_logs(lx: f64, lw: f64) -> (f64, f64) {
    let (hi, lo) = if lx > lw { (lx, lw) } else { (lw, lx) };
    let ls = hi + (lo - hi).exp().ln_1p();
    (lx - ls, lw - ls)
}

/// Samples `(ln Y_i, ln(1−Y_i))` for i = 1..N.
#[derive(Clone, Debug)]
pub struct StickSampler {
    pub params: PdParams,
    pub n: usize,
    x: LnGammaSampler,
    w: Vec<LnGammaSampler>,
}

impl StickSampler {
    pub fn new(params: PdParams, n: usize) -> Self {
        let x = LnGammaSampler::new(1.0 - params.alpha);
        let w = (1..=n).map(|i| LnGammaSampler::new(params.theta + i as f64 * params.alpha)).collect();
        StickSampler { params, n, x, w }
    }

    /// Fills `ln_y` and `ln_1my` (cleared first).
    pub fn sample_logs<R: Rng + ?Sized>(&self, rng: &mut R, ln_y: &mut Vec<f64>, ln_1my: &mut Vec<f64>) {
        ln_y.clear();
        ln_1my.clear();
        for w in &self.w {
            let (a, b) = beta_logs(self.x.sample_ln(rng), w.sample_ln(rng));
            ln_y.push(a);
            ln_1my.push(b);
        }
    }

    /// Σ_i ln(1−Y_i) only.
    pub fn sample_log_survival<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut s = 0.0;
        for w in &self.w {
            s += beta_logs(self.x.sample_ln(rng), w.sample_ln(rng)).1;
        }
        s
    }

    /// ln Ṽ_i for i = 1..N.
    pub fn sample_ln_v<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        let mut acc = 0.0;
        for w in &self.w {
            let (a, b) = beta_logs(self.x.sample_ln(rng), w.sample_ln(rng));
            out.push(acc + a);
            acc += b;
        }
    }
}

/// A sampled stick-breaking path with all derived quantities.
#[derive(Clone, Debug)]
pub struct StickBreakingPath {
    pub params: PdParams,
    pub n: usize,
    pub y: Vec<f64>,
    pub ln_y: Vec<f64>,
    pub ln_1my: Vec<f64>,
    /// Size-biased picks Ṽ_i.
    pub v: Vec<f64>,
    pub ln_v: Vec<f64>,
    /// S_i = μ_i + Σ_{j≤i} ln(1−Y_j), i = 1..N.
    pub s: Vec<f64>,
    /// μ_i, i = 1..N.
    pub mu: Vec<f64>,
}

/// μ_i for i = 1..N: the cumulative sums of −E[ln(1−Y_i)] = ψ(θ+(i−1)α+1) − ψ(θ+iα).
pub fn mu_sequence(params: &PdParams, n: usize) -> Vec<f64> {
    let (a, t) = (params.alpha, params.theta);
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 1..=n {
        acc += psi(t + (i - 1) as f64 * a + 1.0) - psi(t + i as f64 * a);
        out.push(acc);
    }
    out
}

pub fn stick_breaking<R: Rng + ?Sized>(params: &PdParams, n: usize, rng: &mut R) -> Result<StickBreakingPath> {
    let params = PdParams::new(params.alpha, params.theta, params.gamma)?;
    ensure!(n >= 1, Domain, "path length must be positive");
    let sampler = StickSampler::new(params, n);
    Ok(path_from_sampler(&sampler, &mu_sequence(&params, n), rng))
}

fn path_from_sampler<R: Rng + ?Sized>(sampler: &StickSampler, mu: &[f64], rng: &mut R) -> StickBreakingPath {
    let n = sampler.n;
    let mut ln_y = Vec::with_capacity(n);
    let mut ln_1my = Vec::with_capacity(n);
    sampler.sample_logs(rng, &mut ln_y, &mut ln_1my);
    let mut ln_v = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        ln_v.push(acc + ln_y[i]);
        acc += ln_1my[i];
        s.push(mu[i] + acc);
    }
    StickBreakingPath {
        params: sampler.params,
        n,
        y: ln_y.iter().map(|x| x.exp()).collect(),
        v: ln_v.iter().map(|x| x.exp()).collect(),
        ln_y,
        ln_1my,
        ln_v,
        s,
        mu: mu.to_vec(),
    }
}

/// u_N = Σ_{i≤N} i^{−γ/α}, summed from the smallest term with Neumaier
/// compensation.
pub fn u_n(params: &PdParams, n: usize) -> f64 {
    let e = -params.gamma / params.alpha;
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for i in (1..=n).rev() {
        let x = (i as f64).powf(e);
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// μ_N = ψ(θ+1) − ψ(θ+Nα) + Σ_{i=1}^{N−1} 1/(θ+iα).
pub fn mu_n(params: &PdParams, n: usize) -> f64 {
    let (a, t) = (params.alpha, params.theta);
    let mut sum = 0.0;
    for i in (1..n).rev() {
        sum += 1.0 / (t + i as f64 * a);
    }
    psi(t + 1.0) - psi(t + n as f64 * a) + sum
}

/// ζ_{N,g} = Σ Ṽ_i^g.
pub fn zeta(path: &StickBreakingPath, g: f64) -> f64 {
    if g == 0.0 {
        return path.n as f64;
    }
    path.ln_v.iter().map(|l| (g * l).exp()).sum()
}

/// ln E[Y_i^g] for Y_i ~ Beta(1−α, θ+iα).
fn ln_mean_y_pow(params: &PdParams, i: usize, g: f64) -> f64 {
    let (a, t) = (params.alpha, params.theta);
    let c = 1.0 + t + (i - 1) as f64 * a;
    ln_gamma(1.0 - a + g) - ln_gamma(1.0 - a) + ln_gamma(c) - ln_gamma(c + g)
}

/// (M̄_{N,g}, Σ_{N,g}) with ζ_{N,g} = M̄_{N,g} + Σ_{N,g} pathwise.
///
/// M̄ sums the martingale increments `i^{g−1}(Y_i^g − E[Y_i^g])` weighted by
/// `i^{1−g} e^{−gμ_{i−1}} e^{gS_{i−1}}`; Σ sums `E[Y_i^g] e^{−gμ_{i−1}} e^{gS_{i−1}}`.
pub fn martingale_decomposition(path: &StickBreakingPath, g: f64) -> (f64, f64) {
    let mut m_bar = 0.0;
    let mut sigma = 0.0;
    for i in 1..=path.n {
        let (mu_prev, s_prev) = if i == 1 { (0.0, 0.0) } else { (path.mu[i - 2], path.s[i - 2]) };
        let weight = (-g * mu_prev + g * s_prev).exp();
        let ey = ln_mean_y_pow(&path.params, i, g).exp();
        let ii = i as f64;
        let dm = ii.powf(g - 1.0) * ((g * path.ln_y[i - 1]).exp() - ey);
        m_bar += dm * ii.powf(1.0 - g) * weight;
        sigma += ey * weight;
    }
    (m_bar, sigma)
}

/// Monte Carlo mean of e^{γS_N}.
pub fn s_infty_check(params: &PdParams, n: usize, replicates: usize, seed: u64) -> Result<EstimateWithError> {
    let params = PdParams::new(params.alpha, params.theta, params.gamma)?;
    let g = params.gamma;
    ensure!(g > -(params.theta + params.alpha), Domain, "need gamma > -(theta+alpha), got {}", g);
    ensure!(replicates >= 1 && n >= 1, Domain, "need N >= 1 and replicates >= 1");
    if g == 0.0 {
        return Ok(EstimateWithError::exact(1.0, replicates));
    }
    let mu = mu_n(&params, n);
    let sampler = StickSampler::new(params, n);
    let samples = par_replicates(replicates, seed, |rng, _| (g * (mu + sampler.sample_log_survival(rng))).exp());
    Ok(EstimateWithError::from_samples(&samples))
}

/// Exact finite-N value of E[e^{γS_N}] = e^{γμ_N} Π_i E[(1−Y_i)^γ].
pub fn exp_gamma_s_n(params: &PdParams, n: usize) -> f64 {
    let (a, t, g) = (params.alpha, params.theta, params.gamma);
    let mut ln = g * mu_n(params, n);
    for i in 1..=n {
        let b = t + i as f64 * a;
        // E[(1−Y)^g] = B(1−α, b+g)/B(1−α, b)
        ln += ln_gamma(b + g) - ln_gamma(b) + ln_gamma(1.0 - a + b) - ln_gamma(1.0 - a + b + g);
    }
    ln.exp()
}

/// Compares the first three moments of Ṽ₂/(1−Ṽ₁) under PD(α,θ) with those of
/// Ṽ₁ under PD(α,θ+α); both should be Beta(1−α, θ+2α).
pub fn change_of_param_check(params: &PdParams, n: usize, replicates: usize, seed: u64) -> Result<CheckReport> {
    let params = PdParams::new(params.alpha, params.theta, params.gamma)?;
    ensure!(n >= 2, Domain, "change of parameter needs N >= 2");
    let shifted = PdParams::new(params.alpha, params.theta + params.alpha, params.gamma)?;
    let s1 = StickSampler::new(params, n.min(2));
    let s2 = StickSampler::new(shifted, 1);
    let lhs = par_replicates(replicates, seed, |rng, _| {
        let mut lv = Vec::new();
        s1.sample_ln_v(rng, &mut lv);
        let v1 = lv[0].exp();
        assert!(v1 < 1.0, "V1 reached 1");
        lv[1].exp() / (1.0 - v1)
    });
    let rhs = par_replicates(replicates, crate::rng::derive_seed(seed, 1), |rng, _| {
        let mut lv = Vec::new();
        s2.sample_ln_v(rng, &mut lv);
        lv[0].exp()
    });
    let (a, b) = (1.0 - params.alpha, params.theta + 2.0 * params.alpha);
    let mut report = CheckReport::new("change-of-parameter", serde_json::json!({
        "alpha": params.alpha, "theta": params.theta, "N": n, "replicates": replicates, "seed": seed
    }));
    for k in 1..=3 {
        let l: Vec<f64> = lhs.iter().map(|x| x.powi(k)).collect();
        let r: Vec<f64> = rhs.iter().map(|x| x.powi(k)).collect();
        let el = EstimateWithError::from_samples(&l);
        let er = EstimateWithError::from_samples(&r);
        // E[Beta^k] = Π_{j<k} (a+j)/(a+b+j)
        let target: f64 = (0..k).map(|j| (a + j as f64) / (a + b + j as f64)).product();
        report.push(Row::stat(&format!("E[(V2/(1-V1))^{}]", k), el, target, Tolerance::ZScore(4.0)));
        report.push(Row::stat(&format!("E[V1'^{}] shifted", k), er, target, Tolerance::ZScore(4.0)));
        report.push(Row::info_z(&format!("moment {} joint z", k), el.value - er.value, joint_z(&el, &er)));
    }
    report.finish();
    Ok(report)
}

/// Rao–Blackwellised moments of PD power weights, conditioning on everything
/// but the first stick.
///
/// Given Y₁ = y and the remaining picks (which form a PD(α, θ+α) stick of
/// length N−1 with power sums Z_g), `η₁ = y^γ/D` and
/// `Σ_{i≥2} η_i^b = (1−y)^{bγ} Z_{bγ}/D^b` with `D = y^γ + (1−y)^γ Z_γ`. The
/// y-integral against Beta(1−α, θ+α) is done by quadrature, which removes the
/// heavy-tailed contribution of the first family from the Monte Carlo noise.
#[derive(Clone, Debug)]
pub struct PdMoments {
    pub n: usize,
    pub c_n: EstimateWithError,
    /// (b, E[η₁^b]).
    pub eta1: Vec<(f64, EstimateWithError)>,
    /// (b, E[Σ_{i≥2} η_i^b]).
    pub rest: Vec<(f64, EstimateWithError)>,
    /// (b, E[Σ_i η_i^b]).
    pub total: Vec<(f64, EstimateWithError)>,
}

pub fn pd_conditioned_moments(params: &PdParams, n: usize, b_list: &[f64], replicates: usize, seed: u64) -> Result<PdMoments> {
    let mut orders: Vec<f64> = b_list.to_vec();
    if !orders.contains(&2.0) {
        orders.push(2.0);
    }
    orders.sort_by(f64::total_cmp);
    orders.dedup();
    let per_rep = pd_conditioned_samples(params, n, &orders, replicates, seed)?;
    let mut eta1 = Vec::new();
    let mut rest = Vec::new();
    let mut total = Vec::new();
    let mut c_n = None;
    for (k, &b) in orders.iter().enumerate() {
        let f: Vec<f64> = per_rep.iter().map(|r| r[k].0).collect();
        let r: Vec<f64> = per_rep.iter().map(|r| r[k].1).collect();
        let t: Vec<f64> = per_rep.iter().map(|r| r[k].0 + r[k].1).collect();
        let et = EstimateWithError::from_samples(&t);
        if b == 2.0 {
            c_n = Some(et);
        }
        if b_list.contains(&b) {
            eta1.push((b, EstimateWithError::from_samples(&f)));
            rest.push((b, EstimateWithError::from_samples(&r)));
            total.push((b, et));
        }
    }
    Ok(PdMoments { n, c_n: c_n.unwrap(), eta1, rest, total })
}

/// Per-replicate `(E[η₁^b | rest], E[Σ_{i≥2} η_i^b | rest])` for each order b,
/// as used by [`pd_conditioned_moments`].
pub fn pd_conditioned_samples(
    params: &PdParams,
    n: usize,
    orders: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let params = PdParams::new(params.alpha, params.theta, params.gamma)?;
    ensure!(n >= 2, Domain, "conditioned moments need N >= 2");
    ensure!(orders.iter().all(|&b| b >= 2.0 && b.is_finite()), Domain, "moment orders must be >= 2");
    let g = params.gamma;
    let shifted = PdParams::new(params.alpha, params.theta + params.alpha, g)?;
    let rest_sampler = StickSampler::new(shifted, n - 1);
    let (e0, e1) = (1.0 - params.alpha, params.theta + params.alpha);
    let norm = ln_beta_unchecked(e0, e1).exp();
    Ok(par_replicates(replicates, seed, |rng, _| {
        let mut lv = Vec::with_capacity(n - 1);
        rest_sampler.sample_ln_v(rng, &mut lv);
        let z1: f64 = lv.iter().map(|l| (g * l).exp()).sum();
        orders
            .iter()
            .map(|&b| {
                let bg = b * g;
                let zb: f64 = lv.iter().map(|l| (bg * l).exp()).sum();
                let first = beta_kernel_integral(
                    e0,
                    e1,
                    |y, q| {
                        let yg = y.powf(g);
                        let d = yg + q.powf(g) * z1;
                        (yg / d).powf(b)
                    },
                    1e-300,
                    1e-10,
                );
                let rest = beta_kernel_integral(
                    e0,
                    e1,
                    |y, q| {
                        let d = y.powf(g) + q.powf(g) * z1;
                        q.powf(bg) * zb / d.powf(b)
                    },
                    1e-300,
                    1e-10,
                );
                (first.value / norm, rest.value / norm)
            })
            .collect()
    }))
}

/// Standard normal helper used by tests of the samplers.
#[doc(hidden)]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
