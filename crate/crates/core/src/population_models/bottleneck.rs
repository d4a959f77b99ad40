//! Wright–Fisher reproduction interrupted by rare drastic bottlenecks:
//! `η = η̄ B + η̂ (1−B)` with `P(B=1) = Σ_{k≤b_N} F(k) / a_N`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::WeightVector;
use crate::error::{ensure, Result};
use crate::special_fn::ln_gamma;

/// The bottleneck-size measure F on {1, 2, …}.
#[derive(Clone, Debug, PartialEq)]
pub enum FSpec {
    Finite(Vec<(usize, f64)>),
    /// F(k) = scale · k^{−exponent}.
    PowerLaw { scale: f64, exponent: f64 },
}

impl FSpec {
    pub fn value(&self, k: usize) -> f64 {
        match self {
            FSpec::Finite(v) => v.iter().filter(|e| e.0 == k).map(|e| e.1).sum(),
            FSpec::PowerLaw { scale, exponent } => scale * (k as f64).powf(-exponent),
        }
    }

    /// (k, F(k)) for 1 ≤ k ≤ b with F(k) > 0.
    pub fn support_up_to(&self, b: usize) -> Vec<(usize, f64)> {
        match self {
            FSpec::Finite(v) => {
                let mut out: Vec<(usize, f64)> = Vec::new();
                for &(k, w) in v {
                    if k <= b && w > 0.0 {
                        match out.iter_mut().find(|e| e.0 == k) {
                            Some(e) => e.1 += w,
                            None => out.push((k, w)),
                        }
                    }
                }
                out.sort_by_key(|e| e.0);
                out
            }
            FSpec::PowerLaw { .. } => (1..=b).map(|k| (k, self.value(k))).collect(),
        }
    }
}

/// Law ν̄_k of the surviving families' frequencies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NuBar {
    /// (1/k, …, 1/k).
    Uniform,
    /// Normalised i.i.d. Gamma(shape) weights, i.e. symmetric Dirichlet.
    Dirichlet { shape: f64 },
}

impl NuBar {
    /// c̄_k = E[Σ η̄_i² | k survivors].
    pub fn c_bar(&self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            NuBar::Uniform => 1.0 / k,
            NuBar::Dirichlet { shape } => (shape + 1.0) / (k * shape + 1.0),
        }
    }

    /// Expected paint-box probability of a partition with block sizes
    /// `shape` under ν̄_k: `(k)_j E[Π_{i≤j} X_i^{b_i}]`.
    pub fn paintbox_prob(&self, k: usize, shape: &[usize]) -> f64 {
        let j = shape.len();
        if j > k {
            return 0.0;
        }
        let n: usize = shape.iter().sum();
        let ff: f64 = (0..j).map(|i| (k - i) as f64).product();
        match self {
            NuBar::Uniform => ff * (k as f64).powi(-(n as i32)),
            NuBar::Dirichlet { shape: a } => {
                let ka = k as f64 * a;
                let mut ln = ln_gamma(ka) - ln_gamma(ka + n as f64);
                for &b in shape {
                    ln += ln_gamma(a + b as f64) - ln_gamma(*a);
                }
                ff * ln.exp()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EtaHat {
    WrightFisher,
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BottleneckSpec {
    pub f: FSpec,
    pub a_exp: f64,
    pub b_exp: f64,
    pub nu_bar: NuBar,
    pub eta_hat: EtaHat,
}

impl BottleneckSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.a_exp > 0.0 && self.a_exp.is_finite(), Model, "a_exp must be positive, got {}", self.a_exp);
        ensure!(self.b_exp >= 0.0 && self.b_exp < 1.0, Model, "b_exp must lie in [0,1), got {}", self.b_exp);
        match &self.f {
            FSpec::Finite(v) => {
                ensure!(!v.is_empty(), Model, "F must have at least one atom");
                for &(k, w) in v {
                    ensure!(k >= 1, Model, "F is a measure on k >= 1, got k = {}", k);
                    ensure!(w >= 0.0 && w.is_finite(), Model, "F({}) = {} must be non-negative", k, w);
                }
            }
            FSpec::PowerLaw { scale, exponent } => {
                ensure!(*scale > 0.0 && scale.is_finite(), Model, "F scale must be positive");
                ensure!(exponent.is_finite(), Model, "F exponent must be finite");
            }
        }
        if let NuBar::Dirichlet { shape } = self.nu_bar {
            ensure!(shape > 0.0 && shape.is_finite(), Model, "Dirichlet shape must be positive, got {}", shape);
        }
        if let EtaHat::Explicit(v) = &self.eta_hat {
            WeightVector::new(v.clone())?;
        }
        Ok(())
    }

    pub fn a_n(&self, n_pop: usize) -> f64 {
        (n_pop as f64).powf(self.a_exp)
    }

    pub fn b_n(&self, n_pop: usize) -> usize {
        (n_pop as f64).powf(self.b_exp).floor() as usize
    }

    /// P(B = 1) at population size N.
    pub fn bottleneck_prob(&self, n_pop: usize) -> f64 {
        self.f.support_up_to(self.b_n(n_pop)).iter().map(|e| e.1).sum::<f64>() / self.a_n(n_pop)
    }

    /// (Σ_{k≤b_N} F(k) / a_N, b_N / N): both should be small at a usable N.
    pub fn condition_ratios(&self, n_pop: usize) -> (f64, f64) {
        (self.bottleneck_prob(n_pop), self.b_n(n_pop) as f64 / n_pop as f64)
    }

    /// c_N = Σ F(k) c̄_k / a_N + ĉ_N (1 − Σ F(k)/a_N), with ĉ_N the (deterministic) Ση̂².
    pub fn c_n(&self, n_pop: usize) -> Result<f64> {
        let hat = self.c_n_hat(n_pop)?;
        let a = self.a_n(n_pop);
        let sup = self.f.support_up_to(self.b_n(n_pop));
        let pb: f64 = sup.iter().map(|e| e.1).sum::<f64>() / a;
        let bar: f64 = sup.iter().map(|&(k, w)| w * self.nu_bar.c_bar(k)).sum::<f64>() / a;
        Ok(bar + hat * (1.0 - pb))
    }

    /// ĉ_N = Σ η̂_i², the merger probability outside bottlenecks.
    pub fn c_n_hat(&self, n_pop: usize) -> Result<f64> {
        Ok(self.eta_hat_vector(n_pop)?.power_sum(2))
    }

    fn eta_hat_vector(&self, n_pop: usize) -> Result<WeightVector> {
        match &self.eta_hat {
            EtaHat::WrightFisher => Ok(WeightVector::uniform(n_pop)),
            EtaHat::Explicit(v) => {
                ensure!(v.len() == n_pop, Model, "eta_hat has length {}, N = {}", v.len(), n_pop);
                WeightVector::new(v.clone())
            }
        }
    }

    pub(crate) fn prepare(&self, n_pop: usize) -> Result<PreparedBottleneck> {
        self.validate()?;
        let b_n = self.b_n(n_pop);
        ensure!(b_n < n_pop, Model, "b_N = {} must be below N = {}", b_n, n_pop);
        let sup = self.f.support_up_to(b_n);
        let total: f64 = sup.iter().map(|e| e.1).sum();
        let p_b = total / self.a_n(n_pop);
        ensure!(p_b <= 1.0, Model, "P(B=1) = {} exceeds 1 at N = {}", p_b, n_pop);
        let (r1, r2) = self.condition_ratios(n_pop);
        if r1 > 0.1 || r2 > 0.1 {
            log::warn!("bottleneck sequences far from asymptotic regime at N={}: sum F/a_N = {:.3}, b_N/N = {:.3}", n_pop, r1, r2);
        }
        let mut cum = Vec::with_capacity(sup.len());
        let mut acc = 0.0;
        for &(_, w) in &sup {
            acc += w;
            cum.push(acc);
        }
        let gamma = match self.nu_bar {
            NuBar::Dirichlet { shape } => Some(Gamma::new(shape, 1.0).unwrap()),
            NuBar::Uniform => None,
        };
        Ok(PreparedBottleneck { n_pop, p_b, sizes: sup.iter().map(|e| e.0).collect(), cum, gamma, eta_hat: self.eta_hat_vector(n_pop)? })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct PreparedBottleneck {
    n_pop: usize,
    p_b: f64,
    sizes: Vec<usize>,
    cum: Vec<f64>,
    gamma: Option<Gamma<f64>>,
    eta_hat: WeightVector,
}

impl PreparedBottleneck {
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightVector {
        let u: f64 = rng.random();
        if self.sizes.is_empty() || u >= self.p_b {
            return self.eta_hat.clone();
        }
        let t = rng.random::<f64>() * self.cum[self.cum.len() - 1];
        let k = self.sizes[self.cum.partition_point(|&c| c <= t).min(self.sizes.len() - 1)];
        let mut eta = vec![0.0; self.n_pop];
        match &self.gamma {
            None => eta[..k].iter_mut().for_each(|x| *x = 1.0 / k as f64),
            Some(g) => {
                let mut s = 0.0;
                for x in eta[..k].iter_mut() {
                    *x = g.sample(rng);
                    s += *x;
                }
                eta[..k].iter_mut().for_each(|x| *x /= s);
            }
        }
        WeightVector::new(eta).expect("positive bottleneck weights")
    }
}
