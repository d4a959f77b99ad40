//! Sampling Y from the truncated law `∝ y^{-2} Λ(dy)` on `(y0, 1]`.

use rand::Rng;

use crate::coag_measures::LambdaMeasure;
use crate::error::{ensure, Result};
use crate::quadrature::integrate;

const CELLS: usize = 512;
const Y_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub enum YSampler {
    /// Atoms above the cut-off with cumulative weights w·p^{-2}.
    Atoms { locs: Vec<f64>, cum: Vec<f64> },
    /// Beta(a, b) base. Inverse CDF in s = ln y, where the density is
    /// `e^{(a-2)s} (1-e^s)^{b-1}`; `cdf[j]` is the mass below cell j.
    Beta { a: f64, b: f64, s0: f64, h: f64, cdf: Vec<f64> },
}

fn density(a: f64, b: f64, s: f64) -> f64 {
    ((a - 2.0) * s).exp() * (-s.exp_m1()).powf(b - 1.0)
}

impl YSampler {
    pub fn new(base: &LambdaMeasure, y0: f64) -> Result<Self> {
        ensure!(y0 > 0.0 && y0 < 1.0, Model, "truncation point {} outside (0,1); need N >= 2", y0);
        match base {
            LambdaMeasure::Kingman => Err(crate::Error::Model("Kingman base puts no mass above the truncation".into())),
            LambdaMeasure::PointMasses(atoms) => {
                let mut locs = Vec::new();
                let mut cum = Vec::new();
                let mut acc = 0.0;
                for &(p, w) in atoms {
                    if p > y0 {
                        acc += w / (p * p);
                        locs.push(p);
                        cum.push(acc);
                    }
                }
                ensure!(!locs.is_empty(), Model, "no atom of the base measure lies above the truncation point {}", y0);
                Ok(YSampler::Atoms { locs, cum })
            }
            LambdaMeasure::Beta { a, b, .. } => {
                let (a, b) = (*a, *b);
                let s0 = y0.ln();
                let h = -s0 / CELLS as f64;
                let mut cdf = Vec::with_capacity(CELLS + 1);
                cdf.push(0.0);
                let mut acc = 0.0;
                for j in 0..CELLS {
                    let lo = s0 + j as f64 * h;
                    let hi = if j + 1 == CELLS { 0.0 } else { lo + h };
                    acc += integrate(|s| density(a, b, s), lo, hi, 1e-300, 1e-13).value;
                    cdf.push(acc);
                }
                ensure!(acc > 0.0 && acc.is_finite(), Model, "truncated Beta law has no finite mass");
                Ok(YSampler::Beta { a, b, s0, h, cdf })
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            YSampler::Atoms { locs, cum } => {
                let u = rng.random::<f64>() * cum[cum.len() - 1];
                let k = cum.partition_point(|&c| c <= u).min(locs.len() - 1);
                locs[k]
            }
            YSampler::Beta { .. } => self.quantile(rng.random::<f64>()),
        }
    }

    /// Inverse CDF at `u ∈ [0,1)`, used by [`sample`](Self::sample).
    pub fn quantile(&self, u: f64) -> f64 {
        let YSampler::Beta { a, b, s0, h, cdf } = self else {
            panic!("quantile is defined for continuous bases only");
        };
        let (a, b) = (*a, *b);
        let target = u * cdf[CELLS];
        let j = (cdf.partition_point(|&c| c <= target).max(1) - 1).min(CELLS - 1);
        let mut lo = s0 + j as f64 * h;
        let mut hi = if j + 1 == CELLS { 0.0 } else { lo + h };
        let base = cdf[j];
        let start = lo;
        let rem = |s: f64| base + integrate(|x| density(a, b, x), start, s, 1e-300, 1e-13).value - target;
        let mut s = 0.5 * (lo + hi);
        for _ in 0..100 {
            let f = rem(s);
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            if hi.exp() - lo.exp() < Y_TOL {
                break;
            }
            let d = density(a, b, s);
            let newton = s - f / d;
            if d > 0.0 && newton > lo && newton < hi {
                let small = (f / d).abs() * s.exp() < 0.01 * Y_TOL;
                s = newton;
                if small {
                    break;
                }
            } else {
                s = 0.5 * (lo + hi);
            }
        }
        s.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::stats::EstimateWithError;

    #[test]
    fn quantile_inverts_cdf() {
        // Beta(2,2): y^{-2}·y(1−y) = 1/y − 1 on (y0,1], CDF ∝ −ln y0 + ln y − (y − y0)
        let y0 = 0.1;
        let s = YSampler::new(&LambdaMeasure::beta(2.0, 2.0, 1.0).unwrap(), y0).unwrap();
        let c = |y: f64| y.ln() - y0.ln() - (y - y0);
        for u in [0.0, 1e-6, 0.1, 0.5, 0.9, 0.999999] {
            let y = s.quantile(u);
            assert!((c(y) / c(1.0) - u).abs() < 1e-9, "{} {}", u, y);
        }
    }

    #[test]
    fn beta_singular_at_one() {
        // Beta(1, 0.5): y^{-2}(1−y)^{-1/2}, singular at y=1
        let s = YSampler::new(&LambdaMeasure::beta(1.0, 0.5, 1.0).unwrap(), 0.2).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..1000 {
            let y = s.sample(&mut rng);
            assert!(y > 0.2 && y <= 1.0);
        }
        assert!(s.quantile(0.9999) < 1.0);
    }

    #[test]
    fn moments_of_truncated_beta() {
        // Beta(2,2), y0 = 0.1: E[Y] = ∫(1−y)dy / ∫(1/y − 1)dy
        let y0: f64 = 0.1;
        let s = YSampler::new(&LambdaMeasure::beta(2.0, 2.0, 1.0).unwrap(), y0).unwrap();
        let z = -y0.ln() - (1.0 - y0);
        let m1 = ((1.0 - y0) - 0.5 * (1.0 - y0 * y0)) / z;
        let mut rng = stream_rng(2, 0);
        let ys: Vec<f64> = (0..200_000).map(|_| s.sample(&mut rng)).collect();
        let e = EstimateWithError::from_samples(&ys);
        assert!((e.value - m1).abs() < 3.0 * e.stderr, "{:?} {}", e, m1);
    }

    #[test]
    fn atoms_below_cutoff_are_dropped() {
        let m = LambdaMeasure::point_masses(vec![(0.05, 10.0), (0.5, 1.0)]).unwrap();
        let s = YSampler::new(&m, 0.1).unwrap();
        let mut rng = stream_rng(3, 0);
        assert!((0..100).all(|_| s.sample(&mut rng) == 0.5));
        assert!(YSampler::new(&LambdaMeasure::point_masses(vec![(0.05, 1.0)]).unwrap(), 0.1).is_err());
    }
}
