//! Monte Carlo over population models: genealogies, c_N, one-step transition
//! probabilities and weight moments.
//!
//! Replicate r always runs on stream r of the run seed, and every reduction is
//! over a replicate-ordered vector, so results are bit-identical for any
//! number of worker threads.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::partitions::{coagulate, Partition};
use crate::population_models::{Draw, ModelSpec, PreparedModel, TransitionTable};
use crate::rng::{derive_seed, par_replicates, StreamRng};
use crate::stats::EstimateWithError;

/// Largest sample size for transition estimates.
pub const TRANSITION_SAMPLE_CAP: usize = 5;

/// Replicates used to estimate c_N when a rescaled horizon needs it and the
/// model has no closed form.
const HORIZON_CN_REPS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Generations(u64),
    /// t_max in coalescent time units; the run lasts ⌊t_max/c_N⌋ generations.
    Rescaled(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSpec {
    pub model: ModelSpec,
    pub n_pop: usize,
    pub n: usize,
    pub horizon: Horizon,
    pub replicates: usize,
    pub seed: u64,
    /// Keep only generations at which the partition changes.
    pub thin: bool,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        ensure!(self.n >= 1, Config, "sample size n must be positive");
        ensure!(self.n <= self.n_pop, Config, "sample size n = {} exceeds N = {}", self.n, self.n_pop);
        ensure!(self.replicates >= 1, Config, "replicates must be >= 1");
        if let Horizon::Rescaled(t) = self.horizon {
            ensure!(t >= 0.0 && t.is_finite(), Config, "t_max must be non-negative, got {}", t);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenealogyTrajectory {
    /// (generation, partition); always starts with (0, 0ₙ).
    pub steps: Vec<(u64, Partition)>,
    /// Reached a single block before the horizon.
    pub absorbed: bool,
}

impl GenealogyTrajectory {
    pub fn last(&self) -> &Partition {
        &self.steps[self.steps.len() - 1].1
    }
}

/// A prepared genealogy run: the model's samplers and the horizon in
/// generations.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub spec: SimulationSpec,
    pub model: PreparedModel,
    pub generations: u64,
}

impl Simulation {
    pub fn new(spec: &SimulationSpec) -> Result<Self> {
        spec.validate()?;
        let model = spec.model.prepare(spec.n_pop)?;
        let generations = match spec.horizon {
            Horizon::Generations(g) => g,
            Horizon::Rescaled(t) => {
                let c = match exact_cn(&spec.model, spec.n_pop) {
                    Some(c) => c,
                    None => {
                        let reps = HORIZON_CN_REPS;
                        let seed = derive_seed(spec.seed, 0x4f52);
                        formula_cn(&model, reps, seed).value
                    }
                };
                ensure!(c > 0.0, Model, "c_N = 0: the rescaled horizon is infinite");
                // guard against t/c landing just below an integer
                (t / c * (1.0 + 1e-12)).floor().min(u64::MAX as f64) as u64
            }
        };
        Ok(Simulation { spec: spec.clone(), model, generations })
    }

    /// One genealogy of the first n individuals. Each generation draws fresh
    /// reproduction randomness and lets one child per current block choose
    /// its parent.
    pub fn run(&self, rng: &mut StreamRng) -> Result<GenealogyTrajectory> {
        let n = self.spec.n;
        let mut current = Partition::singletons(n);
        let mut steps = vec![(0, current.clone())];
        let mut absorbed = n == 1;
        let mut g = 0;
        while g < self.generations && !absorbed {
            g += 1;
            let draw = self.model.draw(rng);
            let inc = draw.increment(current.num_blocks(), rng)?;
            let changed = !inc.is_singletons();
            if changed {
                current = coagulate(&current, &inc)?;
                absorbed = current.num_blocks() == 1;
            }
            if changed || !self.spec.thin {
                steps.push((g, current.clone()));
            }
        }
        if self.spec.thin && steps[steps.len() - 1].0 != g {
            steps.push((g, current));
        }
        Ok(GenealogyTrajectory { steps, absorbed })
    }

    pub fn run_all(&self) -> Result<Vec<GenealogyTrajectory>> {
        par_replicates(self.spec.replicates, self.spec.seed, |rng, _| self.run(rng)).into_iter().collect()
    }
}

pub fn simulate_genealogy(spec: &SimulationSpec, rng: &mut StreamRng) -> Result<GenealogyTrajectory> {
    Simulation::new(spec)?.run(rng)
}

/// c_N for models where it is available without sampling.
pub fn exact_cn(model: &ModelSpec, n_pop: usize) -> Option<f64> {
    match model {
        ModelSpec::ExplicitWeights(w) => Some(w.power_sum(2)),
        ModelSpec::ExplicitOffspring(o) => Some(o.c_cannings()),
        ModelSpec::Bottleneck(b) => b.c_n(n_pop).ok(),
        _ => None,
    }
}

fn formula_cn(model: &PreparedModel, reps: usize, seed: u64) -> EstimateWithError {
    let v = par_replicates(reps, seed, |rng, _| model.draw(rng).pair_merge_prob());
    EstimateWithError::from_samples(&v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnEstimate {
    /// Mean of Ση² (AWF) or Σν(ν−1)/(N(N−1)) (AC) per draw.
    pub formula: EstimateWithError,
    /// Frequency of a pair merger in two-child increments.
    pub empirical: EstimateWithError,
    /// AC models only: mean of Σν(ν−1)/(Σ(Σ−1)).
    pub tilde: Option<EstimateWithError>,
}

pub fn estimate_cn(model: &ModelSpec, n_pop: usize, replicates: usize, seed: u64) -> Result<CnEstimate> {
    ensure!(n_pop >= 2, Domain, "c_N needs N >= 2");
    ensure!(replicates >= 1, Config, "replicates must be >= 1");
    let prepared = model.prepare(n_pop)?;
    let rows = par_replicates(replicates, seed, |rng, _| -> Result<[f64; 3]> {
        let draw = prepared.draw(rng);
        let f = draw.pair_merge_prob();
        let t = match &draw {
            Draw::Offspring(o) => o.c_tilde(),
            Draw::Weights(_) => f64::NAN,
        };
        let merged = !draw.increment(2, rng)?.is_singletons();
        Ok([f, if merged { 1.0 } else { 0.0 }, t])
    });
    let rows: Vec<[f64; 3]> = rows.into_iter().collect::<Result<_>>()?;
    let col = |k: usize| EstimateWithError::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    Ok(CnEstimate {
        formula: col(0),
        empirical: col(1),
        tilde: prepared.is_ac().then(|| col(2)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionMethod {
    /// Average the exact conditional probabilities given each draw.
    Conditioned,
    /// Count sampled increments.
    Counting,
}

/// One-step transition probabilities out of 0ₙ, one entry per partition of [n]
/// in enumeration order.
pub fn estimate_transition(
    model: &ModelSpec,
    n_pop: usize,
    n: usize,
    replicates: usize,
    seed: u64,
    method: TransitionMethod,
) -> Result<Vec<(Partition, EstimateWithError)>> {
    ensure!(n >= 1 && n <= TRANSITION_SAMPLE_CAP, Cap, "transition estimates capped at n <= {}, got {}", TRANSITION_SAMPLE_CAP, n);
    ensure!(n <= n_pop, Config, "sample size n = {} exceeds N = {}", n, n_pop);
    ensure!(replicates >= 1, Config, "replicates must be >= 1");
    let prepared = model.prepare(n_pop)?;
    let table = TransitionTable::new(n)?;
    let est = transition_with(&prepared, &table, replicates, seed, method)?;
    Ok(table.partitions.iter().cloned().zip(est).collect())
}

/// As [`estimate_transition`], for an already prepared model and table.
pub fn transition_with(
    model: &PreparedModel,
    table: &TransitionTable,
    replicates: usize,
    seed: u64,
    method: TransitionMethod,
) -> Result<Vec<EstimateWithError>> {
    match method {
        TransitionMethod::Conditioned => {
            let per_rep = par_replicates(replicates, seed, |rng, _| table.draw_shapes(&model.draw(rng)));
            let per_shape: Vec<EstimateWithError> = (0..table.shapes().len())
                .map(|k| EstimateWithError::from_samples(&per_rep.iter().map(|r| r[k]).collect::<Vec<_>>()))
                .collect();
            Ok((0..table.partitions.len()).map(|i| per_shape[table.shape_index(i)]).collect())
        }
        TransitionMethod::Counting => {
            let hits = par_replicates(replicates, seed, |rng, _| -> Result<usize> {
                let inc = model.draw(rng).increment(table.n, rng)?;
                Ok(table.index_of(&inc).expect("increment is a partition of [n]"))
            });
            let mut counts = vec![0usize; table.partitions.len()];
            for h in hits {
                counts[h?] += 1;
            }
            Ok(counts.into_iter().map(|c| indicator_estimate(c, replicates)).collect())
        }
    }
}

/// Mean and standard error of `hits` ones among `reps` indicator samples.
pub fn indicator_estimate(hits: usize, reps: usize) -> EstimateWithError {
    let p = hits as f64 / reps as f64;
    let stderr = if reps > 1 { (p * (1.0 - p) / (reps - 1) as f64).sqrt() } else { 0.0 };
    EstimateWithError { value: p, stderr, reps }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub b: f64,
    /// E[η₁^b].
    pub eta1: EstimateWithError,
    /// E[Σ_{i≥2} η_i^b].
    pub rest: EstimateWithError,
    /// E[Σ_i η_i^b].
    pub total: EstimateWithError,
}

/// Moments of the family frequencies (ν/Σ for offspring models); index 1 is
/// the distinguished family of each model.
pub fn estimate_weight_moments(
    model: &ModelSpec,
    n_pop: usize,
    b_list: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<MomentRow>> {
    ensure!(!b_list.is_empty(), Config, "no moment orders given");
    ensure!(b_list.iter().all(|&b| b >= 2.0 && b.is_finite()), Config, "moment orders must be >= 2");
    ensure!(replicates >= 1, Config, "replicates must be >= 1");
    let prepared = model.prepare(n_pop)?;
    let per_rep = par_replicates(replicates, seed, |rng, _| {
        let w = prepared.draw(rng).weights();
        let w = w.as_slice();
        b_list
            .iter()
            .map(|&b| {
                let first = w[0].powf(b);
                let rest: f64 = w[1..].iter().map(|x| x.powf(b)).sum();
                (first, rest)
            })
            .collect::<Vec<_>>()
    });
    Ok(b_list
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let col = |f: &dyn Fn(&(f64, f64)) -> f64| {
                EstimateWithError::from_samples(&per_rep.iter().map(|r| f(&r[k])).collect::<Vec<_>>())
            };
            MomentRow { b, eta1: col(&|x| x.0), rest: col(&|x| x.1), total: col(&|x| x.0 + x.1) }
        })
        .collect())
}
