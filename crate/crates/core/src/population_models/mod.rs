//! One-generation reproduction laws and their exact finite-N coalescence
//! probabilities.
//!
//! AWF models produce a weight vector η and children pick parents i.i.d. from
//! it; AC models produce an offspring vector ν and the sampled children are a
//! uniform draw without replacement among the Σν offspring.

mod bottleneck;
mod eldon_wakeley;
mod exponential;

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

pub use bottleneck::{BottleneckSpec, EtaHat, FSpec, NuBar};
pub use eldon_wakeley::YSampler;
pub use exponential::{em_generation_direct, EmGeneration};

use crate::coag_measures::LambdaMeasure;
use crate::error::{ensure, Result};
use crate::injections::{injection_sum_grouped, injection_sum_moebius, moebius_terms};
use crate::partitions::{group_by_parent, Partition};
use crate::pd_analysis::StickSampler;
use crate::special_fn::PdParams;

/// Largest sample size accepted by the exact transition functions.
pub const TRANSITION_CAP: usize = 8;
/// Above this many distinct positive weights the AWF sum switches from the
/// term-by-term recursion to the Möbius form.
const DP_GROUP_LIMIT: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    eta: Vec<f64>,
}

impl WeightVector {
    /// Validates and renormalises. Vectors already summing to 1 within 1e-12
    /// are kept bit-for-bit.
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        ensure!(!eta.is_empty(), Model, "weight vector is empty");
        ensure!(eta.iter().all(|x| *x >= 0.0 && x.is_finite()), Model, "weights must be finite and non-negative");
        let s: f64 = eta.iter().sum();
        ensure!(s > 0.0, Model, "weights sum to zero");
        if (s - 1.0).abs() <= 1e-12 {
            return Ok(WeightVector { eta });
        }
        Ok(WeightVector { eta: eta.into_iter().map(|x| x / s).collect() })
    }

    pub fn uniform(n: usize) -> Self {
        WeightVector { eta: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.eta
    }

    pub fn power_sum(&self, b: u32) -> f64 {
        self.eta.iter().map(|x| x.powi(b as i32)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffspringVector {
    nu: Vec<u64>,
    sigma: u64,
}

impl OffspringVector {
    pub fn new(nu: Vec<u64>) -> Result<Self> {
        ensure!(!nu.is_empty(), Model, "offspring vector is empty");
        let sigma: u64 = nu.iter().sum();
        ensure!(sigma >= nu.len() as u64, Model, "total offspring {} below population size {}", sigma, nu.len());
        Ok(OffspringVector { nu, sigma })
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.nu
    }

    pub fn sigma(&self) -> u64 {
        self.sigma
    }

    /// ν/Σ.
    pub fn to_weights(&self) -> WeightVector {
        let s = self.sigma as f64;
        WeightVector { eta: self.nu.iter().map(|&v| v as f64 / s).collect() }
    }

    /// (value, multiplicity) of the positive entries, ascending.
    pub fn histogram(&self) -> Vec<(u64, u64)> {
        let mut h: BTreeMap<u64, u64> = BTreeMap::new();
        for &v in &self.nu {
            if v > 0 {
                *h.entry(v).or_default() += 1;
            }
        }
        h.into_iter().collect()
    }

    /// Σν(ν−1)/(N(N−1)), the pair-merger probability of the Cannings sample.
    pub fn c_cannings(&self) -> f64 {
        let n = self.nu.len() as f64;
        if self.nu.len() < 2 {
            return 1.0;
        }
        self.nu.iter().map(|&v| v as f64 * (v as f64 - 1.0)).sum::<f64>() / (n * (n - 1.0))
    }

    /// Σν(ν−1)/(Σ(Σ−1)), the pair-merger probability of the without-replacement sample.
    pub fn c_tilde(&self) -> f64 {
        let s = self.sigma as f64;
        if self.sigma < 2 {
            return 1.0;
        }
        self.nu.iter().map(|&v| v as f64 * (v as f64 - 1.0)).sum::<f64>() / (s * (s - 1.0))
    }
}

/// The size-biased reordering of a weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeBiasedSequence {
    pub s: Vec<f64>,
    /// Source index of each positive entry, in pick order.
    pub order: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    EldonWakeley { base: LambdaMeasure, epsilon: f64 },
    Bottleneck(BottleneckSpec),
    PdPower(PdParams),
    /// (N,β,κ) exponential model; `truncation` is only used by the direct sampler.
    Exponential { beta: f64, kappa: f64, truncation: Option<usize> },
    ExplicitWeights(WeightVector),
    ExplicitOffspring(OffspringVector),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::EldonWakeley { base, epsilon } => {
                ensure!(*epsilon > 0.0 && *epsilon < 1.0, Model, "epsilon must lie in (0,1), got {}", epsilon);
                ensure!(!matches!(base, LambdaMeasure::Kingman), Model, "Eldon-Wakeley base measure must be point masses or Beta");
            }
            ModelSpec::Bottleneck(b) => b.validate()?,
            ModelSpec::PdPower(p) => {
                PdParams::new(p.alpha, p.theta, p.gamma)?;
            }
            ModelSpec::Exponential { beta, kappa, .. } => {
                ensure!(*beta > 1.0, Model, "exponential model needs beta > 1, got {}", beta);
                ensure!(*kappa > 0.5 && *kappa <= 1.0, Model, "exponential model needs kappa in (1/2, 1], got {}", kappa);
            }
            ModelSpec::ExplicitWeights(_) | ModelSpec::ExplicitOffspring(_) => {}
        }
        Ok(())
    }

    /// True for models that produce offspring vectors.
    pub fn is_ac(&self) -> bool {
        matches!(self, ModelSpec::EldonWakeley { .. } | ModelSpec::ExplicitOffspring(_))
    }

    /// The PD parameters of the weight law, for the PD-power and exponential models.
    pub fn pd_params(&self) -> Option<PdParams> {
        match self {
            ModelSpec::PdPower(p) => Some(*p),
            ModelSpec::Exponential { beta, kappa, .. } => Some(PdParams { alpha: 1.0 / beta, theta: 0.0, gamma: kappa / beta }),
            _ => None,
        }
    }

    pub fn prepare(&self, n_pop: usize) -> Result<PreparedModel> {
        self.validate()?;
        ensure!(n_pop >= 1, Model, "population size must be positive");
        let kind = match self {
            ModelSpec::EldonWakeley { base, epsilon } => {
                let y0 = (n_pop as f64).powf((epsilon - 1.0) / 2.0);
                Prepared::Ew(YSampler::new(base, y0)?)
            }
            ModelSpec::Bottleneck(b) => Prepared::Bottleneck(b.prepare(n_pop)?),
            ModelSpec::PdPower(_) | ModelSpec::Exponential { .. } => {
                let p = self.pd_params().unwrap();
                Prepared::Pd(StickSampler::new(p, n_pop), p.gamma)
            }
            ModelSpec::ExplicitWeights(w) => {
                ensure!(w.len() == n_pop, Model, "explicit weight vector has length {}, N = {}", w.len(), n_pop);
                Prepared::Weights(w.clone())
            }
            ModelSpec::ExplicitOffspring(o) => {
                ensure!(o.len() == n_pop, Model, "explicit offspring vector has length {}, N = {}", o.len(), n_pop);
                Prepared::Offspring(o.clone())
            }
        };
        Ok(PreparedModel { n_pop, kind })
    }
}

/// A model with its per-N samplers built.
#[derive(Clone, Debug)]
pub struct PreparedModel {
    pub n_pop: usize,
    kind: Prepared,
}

#[derive(Clone, Debug)]
enum Prepared {
    Ew(YSampler),
    Bottleneck(bottleneck::PreparedBottleneck),
    Pd(StickSampler, f64),
    Weights(WeightVector),
    Offspring(OffspringVector),
}

/// One generation's reproduction randomness.
#[derive(Clone, Debug, PartialEq)]
pub enum Draw {
    Weights(WeightVector),
    Offspring(OffspringVector),
}

impl Draw {
    /// η for AWF draws, ν/Σ for AC draws.
    pub fn weights(&self) -> WeightVector {
        match self {
            Draw::Weights(w) => w.clone(),
            Draw::Offspring(o) => o.to_weights(),
        }
    }

    /// Pair-merger probability of this draw: Ση² or Σν(ν−1)/(N(N−1)).
    pub fn pair_merge_prob(&self) -> f64 {
        match self {
            Draw::Weights(w) => w.power_sum(2),
            Draw::Offspring(o) => o.c_cannings(),
        }
    }

    pub fn increment<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Partition> {
        match self {
            Draw::Weights(w) => awf_increment(w, n, rng),
            Draw::Offspring(o) => ac_increment(o, n, rng),
        }
    }
}

impl PreparedModel {
    pub fn is_ac(&self) -> bool {
        matches!(self.kind, Prepared::Ew(_) | Prepared::Offspring(_))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        match &self.kind {
            Prepared::Ew(y) => Draw::Offspring(ew_offspring(y.sample(rng), self.n_pop, rng)),
            Prepared::Bottleneck(b) => Draw::Weights(b.sample(rng)),
            Prepared::Pd(s, g) => Draw::Weights(pd_weights(s, *g, rng)),
            Prepared::Weights(w) => Draw::Weights(w.clone()),
            Prepared::Offspring(o) => Draw::Offspring(o.clone()),
        }
    }

    /// For Eldon–Wakeley models, a draw of Y.
    pub fn sample_y<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        match &self.kind {
            Prepared::Ew(y) => Some(y.sample(rng)),
            _ => None,
        }
    }
}

fn pd_weights<R: Rng + ?Sized>(s: &StickSampler, g: f64, rng: &mut R) -> WeightVector {
    let mut lv = Vec::with_capacity(s.n);
    s.sample_ln_v(rng, &mut lv);
    // scale by the largest term before exponentiating
    let m = lv.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let w: Vec<f64> = lv.iter().map(|l| (g * (l - m)).exp()).collect();
    let z: f64 = w.iter().sum();
    WeightVector { eta: w.into_iter().map(|x| x / z).collect() }
}

/// Offspring vector of one Eldon–Wakeley generation given Y. The reproducer
/// sits at index 0 and ⌊YN⌋ ≤ 1 means no replacement event.
fn ew_offspring<R: Rng + ?Sized>(y: f64, n_pop: usize, rng: &mut R) -> OffspringVector {
    let k = ((y * n_pop as f64).floor() as usize).min(n_pop);
    if k <= 1 {
        return OffspringVector { nu: vec![1; n_pop], sigma: n_pop as u64 };
    }
    let mut nu = vec![1u64; n_pop];
    nu[0] = k as u64;
    // k−1 of the other N−1 individuals leave no offspring
    let zeros = k - 1;
    if zeros <= (n_pop - 1) / 2 {
        for j in index::sample(rng, n_pop - 1, zeros) {
            nu[j + 1] = 0;
        }
    } else {
        nu[1..].iter_mut().for_each(|v| *v = 0);
        for j in index::sample(rng, n_pop - 1, n_pop - k) {
            nu[j + 1] = 1;
        }
    }
    OffspringVector { nu, sigma: n_pop as u64 }
}

pub fn sample_weights<R: Rng + ?Sized>(spec: &ModelSpec, n_pop: usize, rng: &mut R) -> Result<WeightVector> {
    ensure!(!spec.is_ac(), Model, "sample_weights needs an AWF-type model");
    match spec.prepare(n_pop)?.draw(rng) {
        Draw::Weights(w) => Ok(w),
        Draw::Offspring(_) => unreachable!(),
    }
}

pub fn sample_offspring<R: Rng + ?Sized>(spec: &ModelSpec, n_pop: usize, rng: &mut R) -> Result<OffspringVector> {
    ensure!(spec.is_ac(), Model, "sample_offspring needs an Eldon-Wakeley or explicit offspring model");
    match spec.prepare(n_pop)?.draw(rng) {
        Draw::Offspring(o) => Ok(o),
        Draw::Weights(_) => unreachable!(),
    }
}

/// n children pick parents i.i.d. from η.
pub fn awf_increment<R: Rng + ?Sized>(eta: &WeightVector, n: usize, rng: &mut R) -> Result<Partition> {
    ensure!(n >= 1 && n <= eta.len(), Domain, "sample size {} outside [1, N={}]", n, eta.len());
    let dist = WeightedIndex::new(&eta.eta).expect("validated weights");
    let parents: Vec<usize> = (0..n).map(|_| dist.sample(rng)).collect();
    Ok(group_by_parent(&parents))
}

/// n children drawn without replacement among the Σν offspring.
pub fn ac_increment<R: Rng + ?Sized>(nu: &OffspringVector, n: usize, rng: &mut R) -> Result<Partition> {
    ensure!(n >= 1 && n as u64 <= nu.sigma, Domain, "sample size {} exceeds total offspring {}", n, nu.sigma);
    ensure!(n <= nu.len(), Domain, "sample size {} exceeds N={}", n, nu.len());
    let mut cum = Vec::with_capacity(nu.len());
    let mut acc = 0u64;
    for &v in &nu.nu {
        acc += v;
        cum.push(acc);
    }
    let slots = index::sample(rng, nu.sigma as usize, n);
    let parents: Vec<usize> = slots.iter().map(|s| cum.partition_point(|&c| c <= s as u64)).collect();
    Ok(group_by_parent(&parents))
}

/// Exponential-race reordering: sorting by E_j/η_j picks each next index
/// with probability proportional to its weight among those left.
pub fn size_biased_reorder<R: Rng + ?Sized>(eta: &WeightVector, rng: &mut R) -> SizeBiasedSequence {
    let mut keyed: Vec<(f64, usize)> = eta
        .eta
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(j, &w)| {
            let e: f64 = Exp1.sample(rng);
            (e / w, j)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let order: Vec<usize> = keyed.iter().map(|k| k.1).collect();
    let mut s: Vec<f64> = order.iter().map(|&j| eta.eta[j]).collect();
    s.resize(eta.len(), 0.0);
    SizeBiasedSequence { s, order }
}

fn check_shape(pi_tilde: &Partition) -> Result<Vec<usize>> {
    ensure!(pi_tilde.n() >= 1 && pi_tilde.n() <= TRANSITION_CAP, Cap, "exact transitions capped at n <= {}, got {}", TRANSITION_CAP, pi_tilde.n());
    Ok(pi_tilde.block_sizes_desc())
}

/// Per-draw power sums for the AWF transition probabilities.
struct AwfSums {
    groups: Vec<(u64, f64)>,
    p: Vec<f64>,
}

impl AwfSums {
    fn new(eta: &WeightVector, n: usize) -> Self {
        let mut h: BTreeMap<u64, u64> = BTreeMap::new();
        for &x in &eta.eta {
            if x > 0.0 {
                *h.entry(x.to_bits()).or_default() += 1;
            }
        }
        let groups: Vec<(u64, f64)> = h.into_iter().map(|(b, c)| (c, f64::from_bits(b))).collect();
        let mut p = vec![0.0; n + 1];
        for (m, pm) in p.iter_mut().enumerate().skip(1) {
            *pm = groups.iter().map(|(c, x)| *c as f64 * x.powi(m as i32)).sum();
        }
        AwfSums { groups, p }
    }

    fn shape_prob(&self, shape: &[usize], terms: Option<&[(f64, Vec<usize>)]>) -> f64 {
        let j = shape.len();
        if self.groups.len() <= DP_GROUP_LIMIT {
            let groups: Vec<(u64, Vec<f64>)> =
                self.groups.iter().map(|&(c, x)| (c, shape.iter().map(|&b| x.powi(b as i32)).collect())).collect();
            return injection_sum_grouped(&groups, j);
        }
        let mut subset = vec![0.0; 1 << j];
        for (mask, s) in subset.iter_mut().enumerate().skip(1) {
            let m: usize = (0..j).filter(|k| mask & (1 << k) != 0).map(|k| shape[k]).sum();
            *s = self.p[m];
        }
        let owned;
        let terms = match terms {
            Some(t) => t,
            None => {
                owned = moebius_terms(j);
                &owned
            }
        };
        injection_sum_moebius(terms, &subset).max(0.0)
    }
}

fn falling(x: f64, k: usize) -> f64 {
    (0..k).map(|j| x - j as f64).product()
}

fn ac_shape_prob(hist: &[(u64, u64)], sigma: u64, shape: &[usize]) -> f64 {
    let n: usize = shape.iter().sum();
    if (sigma as usize) < n {
        return 0.0;
    }
    let groups: Vec<(u64, Vec<f64>)> =
        hist.iter().map(|&(v, c)| (c, shape.iter().map(|&b| falling(v as f64, b)).collect())).collect();
    injection_sum_grouped(&groups, shape.len()) / falling(sigma as f64, n)
}

/// P(increment = π̃ | η): the sum over distinct parent assignments of the
/// blocks of Π η^{|block|}.
pub fn exact_transition_awf(eta: &WeightVector, pi_tilde: &Partition) -> Result<f64> {
    let shape = check_shape(pi_tilde)?;
    Ok(AwfSums::new(eta, pi_tilde.n()).shape_prob(&shape, None))
}

/// P(increment = π̃ | ν) for the without-replacement sample.
pub fn exact_transition_ac(nu: &OffspringVector, pi_tilde: &Partition) -> Result<f64> {
    let shape = check_shape(pi_tilde)?;
    ensure!(pi_tilde.n() <= nu.len(), Domain, "sample size exceeds N");
    Ok(ac_shape_prob(&nu.histogram(), nu.sigma, &shape))
}

/// All one-step transition probabilities out of 0ₙ, evaluated per block-size
/// shape and shared by the partitions of that shape.
#[derive(Clone, Debug)]
pub struct TransitionTable {
    pub n: usize,
    pub partitions: Vec<Partition>,
    shapes: Vec<Vec<usize>>,
    shape_of: Vec<usize>,
    terms: Vec<Vec<(f64, Vec<usize>)>>,
}

impl TransitionTable {
    pub fn new(n: usize) -> Result<Self> {
        ensure!(n >= 1 && n <= crate::partitions::ENUMERATION_CAP, Cap, "transition tables capped at n <= {}", crate::partitions::ENUMERATION_CAP);
        let partitions = crate::partitions::enumerate_partitions(n)?;
        let mut shapes: Vec<Vec<usize>> = Vec::new();
        let mut shape_of = Vec::with_capacity(partitions.len());
        for p in &partitions {
            let s = p.block_sizes_desc();
            let k = match shapes.iter().position(|x| *x == s) {
                Some(k) => k,
                None => {
                    shapes.push(s);
                    shapes.len() - 1
                }
            };
            shape_of.push(k);
        }
        let terms = (0..=n).map(moebius_terms).collect();
        Ok(TransitionTable { n, partitions, shapes, shape_of, terms })
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Index of the block-size shape of partition `i`.
    pub fn shape_index(&self, i: usize) -> usize {
        self.shape_of[i]
    }

    pub fn index_of(&self, p: &Partition) -> Option<usize> {
        self.partitions.iter().position(|q| q == p)
    }

    /// Per-shape probabilities (one partition of each shape).
    pub fn awf_shapes(&self, eta: &WeightVector) -> Vec<f64> {
        let sums = AwfSums::new(eta, self.n);
        self.shapes.iter().map(|s| sums.shape_prob(s, Some(&self.terms[s.len()]))).collect()
    }

    pub fn ac_shapes(&self, nu: &OffspringVector) -> Vec<f64> {
        let hist = nu.histogram();
        self.shapes.iter().map(|s| ac_shape_prob(&hist, nu.sigma, s)).collect()
    }

    pub fn draw_shapes(&self, d: &Draw) -> Vec<f64> {
        match d {
            Draw::Weights(w) => self.awf_shapes(w),
            Draw::Offspring(o) => self.ac_shapes(o),
        }
    }

    /// Expands per-shape values to one value per partition.
    pub fn expand(&self, per_shape: &[f64]) -> Vec<f64> {
        self.shape_of.iter().map(|&k| per_shape[k]).collect()
    }
}
