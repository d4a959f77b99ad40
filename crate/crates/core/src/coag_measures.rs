//! Λ- and finite-atomic Ξ-coagulation measures: merger rates, exact paint-box
//! probabilities, generators on 𝒫ₙ, their semigroups, and a continuous-time
//! Λ-coalescent simulator.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{ensure, Error, Result};
use crate::injections::{injection_sum_dp, MAX_LABELS};
use crate::partitions::{coagulate, enumerate_partitions, MassPartition, Partition};
use crate::quadrature::beta_kernel_integral;
use crate::special_fn::{ln_beta_unchecked, ln_gamma};

/// Largest ground set for [`build_rate_matrix`] (Bell(6) = 203 states).
pub const RATE_MATRIX_CAP: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub enum LambdaMeasure {
    /// δ₀ with unit mass.
    Kingman,
    /// Σ w_j δ_{p_j} with p_j ∈ (0,1].
    PointMasses(Vec<(f64, f64)>),
    /// `mass` times the Beta(a, b) law.
    Beta { a: f64, b: f64, mass: f64 },
}

impl LambdaMeasure {
    pub fn point_masses(atoms: Vec<(f64, f64)>) -> Result<Self> {
        ensure!(!atoms.is_empty(), Measure, "point-mass measure needs at least one atom");
        for &(p, w) in &atoms {
            ensure!(p > 0.0 && p <= 1.0, Measure, "point-mass location {} outside (0,1]", p);
            ensure!(w > 0.0 && w.is_finite(), Measure, "point-mass weight {} must be positive", w);
        }
        Ok(LambdaMeasure::PointMasses(atoms))
    }

    pub fn beta(a: f64, b: f64, mass: f64) -> Result<Self> {
        ensure!(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(), Measure, "Beta parameters must be positive, got ({}, {})", a, b);
        ensure!(mass > 0.0 && mass.is_finite(), Measure, "Beta total mass must be positive, got {}", mass);
        Ok(LambdaMeasure::Beta { a, b, mass })
    }

    /// Bolthausen–Sznitman, Beta(1,1).
    pub fn bolthausen_sznitman() -> Self {
        LambdaMeasure::Beta { a: 1.0, b: 1.0, mass: 1.0 }
    }

    /// λ_{n,b} = ∫ p^{b−2}(1−p)^{n−b} Λ(dp).
    pub fn rate(&self, n: usize, b: usize) -> Result<f64> {
        ensure!(b >= 2 && b <= n, Domain, "merger size b={} outside [2, n={}]", b, n);
        Ok(self.ln_rate(n, b).exp())
    }

    /// ln λ_{n,b}; −∞ for vanishing rates.
    pub fn ln_rate(&self, n: usize, b: usize) -> f64 {
        match self {
            LambdaMeasure::Kingman => {
                if b == 2 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            LambdaMeasure::PointMasses(atoms) => {
                let terms: Vec<f64> = atoms
                    .iter()
                    .map(|&(p, w)| {
                        let tail = if n == b { 0.0 } else { (n - b) as f64 * (-p).ln_1p() };
                        w.ln() + (b as f64 - 2.0) * p.ln() + tail
                    })
                    .collect();
                log_sum_exp(&terms)
            }
            LambdaMeasure::Beta { a, b: bb, mass } => {
                mass.ln() + ln_beta_unchecked(a + b as f64 - 2.0, bb + (n - b) as f64) - ln_beta_unchecked(*a, *bb)
            }
        }
    }

    /// λ_{n,b} by adaptive quadrature (Beta) or direct summation; used only to
    /// cross-check [`LambdaMeasure::rate`].
    pub fn rate_by_quadrature(&self, n: usize, b: usize) -> Result<f64> {
        ensure!(b >= 2 && b <= n, Domain, "merger size b={} outside [2, n={}]", b, n);
        Ok(match self {
            LambdaMeasure::Kingman => f64::from(b == 2),
            LambdaMeasure::PointMasses(atoms) => {
                atoms.iter().map(|&(p, w)| w * p.powi(b as i32 - 2) * (1.0 - p).powi((n - b) as i32)).sum()
            }
            LambdaMeasure::Beta { a, b: bb, mass } => {
                let r = beta_kernel_integral(
                    *a,
                    *bb,
                    |p, q| p.powi(b as i32 - 2) * q.powi((n - b) as i32),
                    1e-300,
                    1e-13,
                );
                mass * r.value / ln_beta_unchecked(*a, *bb).exp()
            }
        })
    }

    /// The finite-atomic Ξ representation, when one exists (Kingman and point
    /// masses; a Λ point mass at p is a Ξ atom at ρ = (p) with the same weight).
    pub fn to_xi(&self) -> Option<XiMeasure> {
        match self {
            LambdaMeasure::Kingman => Some(XiMeasure { atoms: vec![], kingman_mass: 1.0 }),
            LambdaMeasure::PointMasses(atoms) => Some(XiMeasure {
                atoms: atoms.iter().map(|&(p, w)| (w, MassPartition::new(vec![p]).unwrap())).collect(),
                kingman_mass: 0.0,
            }),
            LambdaMeasure::Beta { .. } => None,
        }
    }
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Σ_k w_k δ_{ρ^k} plus a Kingman component.
#[derive(Clone, Debug, PartialEq)]
pub struct XiMeasure {
    pub atoms: Vec<(f64, MassPartition)>,
    pub kingman_mass: f64,
}

impl XiMeasure {
    pub fn new(atoms: Vec<(f64, MassPartition)>, kingman_mass: f64) -> Result<Self> {
        for (w, rho) in &atoms {
            ensure!(*w > 0.0 && w.is_finite(), Measure, "Xi atom weight {} must be positive", w);
            ensure!(rho.sum_sq() > 0.0, Measure, "Xi atom needs at least one positive mass");
        }
        ensure!(kingman_mass >= 0.0 && kingman_mass.is_finite(), Measure, "Kingman mass must be non-negative");
        ensure!(!atoms.is_empty() || kingman_mass > 0.0, Measure, "Xi measure is zero");
        Ok(XiMeasure { atoms, kingman_mass })
    }
}

/// Exact probability that the paint-box directed by `rho` produces `pi_prime`.
///
/// Non-singleton blocks must occupy distinct atoms. Each singleton lands
/// either in the dust or in an atom used by no other block, so with q
/// singletons of which t sit in atoms the probability is
/// `Σ_t C(q,t) ρ₀^{q−t} D(t)`, where `D(t)` sums `Π ρ_i^{|block|}` over
/// injective atom assignments of the non-singleton blocks and the t chosen
/// singletons.
pub fn paintbox_partition_prob(rho: &MassPartition, pi_prime: &Partition) -> Result<f64> {
    ensure!(pi_prime.n() <= MAX_LABELS, Cap, "paint-box probabilities capped at n <= {}", MAX_LABELS);
    let w = rho.weights();
    let big: Vec<i32> = pi_prime.blocks().iter().filter(|b| b.len() > 1).map(|b| b.len() as i32).collect();
    let q = pi_prime.blocks().len() - big.len();
    let dust = rho.dust();
    let mut total = 0.0;
    let mut binom = 1.0;
    for t in 0..=q {
        if t > 0 {
            binom = binom * (q - t + 1) as f64 / t as f64;
        }
        let labels = big.len() + t;
        if labels > w.len() {
            break;
        }
        let dust_part = if q == t { 1.0 } else { dust.powi((q - t) as i32) };
        if dust_part == 0.0 {
            continue;
        }
        let exps: Vec<i32> = big.iter().cloned().chain(std::iter::repeat(1).take(t)).collect();
        let d = injection_sum_dp(w.len(), labels, |k, i| w[i].powi(exps[k]));
        total += binom * dust_part * d;
    }
    Ok(total)
}

/// Rate of the increment `pi_prime` (a partition of the current blocks).
pub fn xi_rate(x: &XiMeasure, pi_prime: &Partition) -> Result<f64> {
    ensure!(!pi_prime.is_singletons(), Domain, "rates are defined only for proper coagulations");
    let mut r = 0.0;
    for (w, rho) in &x.atoms {
        r += w * paintbox_partition_prob(rho, pi_prime)? / rho.sum_sq();
    }
    if pi_prime.is_single_pair_merger() {
        r += x.kingman_mass;
    }
    Ok(r)
}

/// A limit coalescent: Λ (simple mergers) or finite-atomic Ξ.
#[derive(Clone, Debug, PartialEq)]
pub enum CoagulationMeasure {
    Lambda(LambdaMeasure),
    Xi(XiMeasure),
}

impl CoagulationMeasure {
    /// Rate at which the current blocks coagulate according to `pi_prime`.
    pub fn increment_rate(&self, pi_prime: &Partition) -> Result<f64> {
        ensure!(!pi_prime.is_singletons(), Domain, "rates are defined only for proper coagulations");
        match self {
            CoagulationMeasure::Lambda(l) => match pi_prime.simple_merger_size() {
                Some(b) => l.rate(pi_prime.n(), b),
                None => Ok(0.0),
            },
            CoagulationMeasure::Xi(x) => xi_rate(x, pi_prime),
        }
    }
}

impl FromStr for CoagulationMeasure {
    type Err = Error;

    /// `kingman`, `beta:a,b[,mass]`, `point:p1:w1[,p2:w2...]`,
    /// `xi:w@r1/r2/...;w@...[;kingman@c]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |m: &str| Error::Measure(format!("{} in measure spec {:?}", m, s));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad(&format!("bad number {:?}", t)));
        if s == "kingman" {
            return Ok(CoagulationMeasure::Lambda(LambdaMeasure::Kingman));
        }
        let (head, body) = s.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        match head {
            "beta" => {
                let v: Vec<f64> = body.split(',').map(num).collect::<Result<_>>()?;
                match v.as_slice() {
                    [a, b] => Ok(CoagulationMeasure::Lambda(LambdaMeasure::beta(*a, *b, 1.0)?)),
                    [a, b, m] => Ok(CoagulationMeasure::Lambda(LambdaMeasure::beta(*a, *b, *m)?)),
                    _ => Err(bad("beta takes a,b[,mass]")),
                }
            }
            "point" => {
                let atoms = body
                    .split(',')
                    .map(|t| {
                        let (p, w) = t.split_once(':').ok_or_else(|| bad("point atoms are p:w"))?;
                        Ok((num(p)?, num(w)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CoagulationMeasure::Lambda(LambdaMeasure::point_masses(atoms)?))
            }
            "xi" => {
                let mut atoms = Vec::new();
                let mut kingman = 0.0;
                for seg in body.split(';').filter(|t| !t.trim().is_empty()) {
                    let (w, r) = seg.split_once('@').ok_or_else(|| bad("xi atoms are w@r1/r2/..."))?;
                    if w.trim() == "kingman" {
                        kingman += num(r)?;
                        continue;
                    }
                    let rho: Vec<f64> = r.split('/').map(num).collect::<Result<_>>()?;
                    atoms.push((num(w)?, MassPartition::from_unsorted(rho)?));
                }
                Ok(CoagulationMeasure::Xi(XiMeasure::new(atoms, kingman)?))
            }
            _ => Err(bad(&format!("unknown measure kind {:?}", head))),
        }
    }
}

impl fmt::Display for CoagulationMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoagulationMeasure::Lambda(LambdaMeasure::Kingman) => write!(f, "kingman"),
            CoagulationMeasure::Lambda(LambdaMeasure::Beta { a, b, mass }) => write!(f, "beta:{},{},{}", a, b, mass),
            CoagulationMeasure::Lambda(LambdaMeasure::PointMasses(atoms)) => {
                let s: Vec<String> = atoms.iter().map(|(p, w)| format!("{}:{}", p, w)).collect();
                write!(f, "point:{}", s.join(","))
            }
            CoagulationMeasure::Xi(x) => {
                let mut s: Vec<String> = x
                    .atoms
                    .iter()
                    .map(|(w, r)| {
                        let rs: Vec<String> = r.weights().iter().map(|v| v.to_string()).collect();
                        format!("{}@{}", w, rs.join("/"))
                    })
                    .collect();
                if x.kingman_mass > 0.0 {
                    s.push(format!("kingman@{}", x.kingman_mass));
                }
                write!(f, "xi:{}", s.join(";"))
            }
        }
    }
}

/// Generator of the coalescent restricted to 𝒫ₙ.
#[derive(Clone, Debug)]
pub struct RateMatrix {
    pub n: usize,
    pub states: Vec<Partition>,
    index: HashMap<Partition, usize>,
    pub q: DMatrix<f64>,
}

impl RateMatrix {
    pub fn index_of(&self, p: &Partition) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn rate(&self, from: &Partition, to: &Partition) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.q[(i, j)],
            _ => 0.0,
        }
    }
}

pub fn build_rate_matrix(measure: &CoagulationMeasure, n: usize) -> Result<RateMatrix> {
    ensure!(n >= 1 && n <= RATE_MATRIX_CAP, Cap, "rate matrices capped at n <= {}, got {}", RATE_MATRIX_CAP, n);
    let states = enumerate_partitions(n)?;
    let index: HashMap<Partition, usize> = states.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let mut q = DMatrix::zeros(states.len(), states.len());
    let mut increments: HashMap<usize, Vec<(Partition, f64)>> = HashMap::new();
    for m in 1..=n {
        let mut v = Vec::new();
        for pp in enumerate_partitions(m)? {
            if !pp.is_singletons() {
                let r = measure.increment_rate(&pp)?;
                if r > 0.0 {
                    v.push((pp, r));
                }
            }
        }
        increments.insert(m, v);
    }
    for (i, s) in states.iter().enumerate() {
        let mut out = 0.0;
        for (pp, r) in &increments[&s.num_blocks()] {
            let t = coagulate(s, pp)?;
            q[(i, index[&t])] += r;
            out += r;
        }
        q[(i, i)] = -out;
    }
    Ok(RateMatrix { n, states, index, q })
}

/// e^{tQ} by scaling and squaring of the Taylor series, with ‖tQ‖∞/2^s ≤ 0.5.
pub fn semigroup(q: &RateMatrix, t: f64) -> Result<DMatrix<f64>> {
    ensure!(t >= 0.0 && t.is_finite(), Domain, "time must be non-negative, got {}", t);
    let dim = q.q.nrows();
    let a = &q.q * t;
    let norm = (0..dim).map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let a = a / 2f64.powi(s);
    let mut result = DMatrix::<f64>::identity(dim, dim);
    let mut term = DMatrix::<f64>::identity(dim, dim);
    for k in 1..60 {
        term = &term * &a / k as f64;
        result += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result.apply(|x| {
        if *x < 0.0 && *x > -1e-12 {
            *x = 0.0
        }
    });
    Ok(result)
}

/// Continuous-time Λ-coalescent from 0ₙ, recorded at time 0 and at every
/// jump up to `t_max`.
pub fn simulate_lambda_coalescent<R: Rng + ?Sized>(
    l: &LambdaMeasure,
    n: usize,
    t_max: f64,
    rng: &mut R,
) -> Result<Vec<(f64, Partition)>> {
    ensure!(n >= 1, Domain, "sample size must be positive");
    let mut blocks: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut t = 0.0;
    let mut out = vec![(0.0, Partition::singletons(n))];
    while blocks.len() > 1 {
        let m = blocks.len();
        // ln of C(m,b)·λ_{m,b}
        let ln_w: Vec<f64> = (2..=m)
            .map(|b| ln_gamma(m as f64 + 1.0) - ln_gamma(b as f64 + 1.0) - ln_gamma((m - b) as f64 + 1.0) + l.ln_rate(m, b))
            .collect();
        let top = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ensure!(top.is_finite(), Domain, "total merger rate with {} blocks is not finite and positive", m);
        let w: Vec<f64> = ln_w.iter().map(|x| (x - top).exp()).collect();
        let sum: f64 = w.iter().sum();
        let total = top.exp() * sum;
        ensure!(total.is_finite() && total > 0.0, Domain, "total merger rate {} with {} blocks", total, m);
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        if t > t_max {
            break;
        }
        let mut u = rng.random::<f64>() * sum;
        let mut b = m;
        for (k, wk) in w.iter().enumerate() {
            if u < *wk {
                b = k + 2;
                break;
            }
            u -= wk;
        }
        let mut chosen = rand::seq::index::sample(rng, m, b).into_vec();
        chosen.sort_unstable_by(|x, y| y.cmp(x));
        let mut merged = Vec::new();
        for c in chosen {
            merged.extend(blocks.swap_remove(c));
        }
        merged.sort_unstable();
        blocks.push(merged);
        blocks.sort_unstable_by_key(|b| b[0]);
        out.push((t, Partition::new(n, blocks.clone())?));
    }
    Ok(out)
}
