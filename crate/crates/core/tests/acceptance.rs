//! Acceptance criteria, one test per criterion. Each test writes a
//! `criterion k: PASS|FAIL` line (plus the rows it was judged on) directly to
//! stdout, so the lines appear in the test log even when output is captured.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use coalgene::coag_measures::{paintbox_partition_prob, CoagulationMeasure, LambdaMeasure};
use coalgene::diagnostics::{self, CheckReport, Regime, Status};
use coalgene::partitions::{enumerate_partitions, MassPartition, Partition};
use coalgene::pd_analysis::{martingale_decomposition, mu_n, s_infty_check, stick_breaking, zeta, StickSampler};
use coalgene::population_models::{
    ac_increment, awf_increment, exact_transition_ac, exact_transition_awf, BottleneckSpec, EtaHat, FSpec, ModelSpec, NuBar,
    OffspringVector, WeightVector,
};
use coalgene::rng::{par_replicates, stream_rng};
use coalgene::special_fn::{ell_const, exp_gamma_s_infty, PdParams};
use coalgene::stats::EstimateWithError;
use rand::Rng;

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", line);
    let _ = out.flush();
}

/// Prints the verdict line and the supporting detail, then fails the test on FAIL.
fn verdict(k: usize, pass: bool, summary: &str, detail: &[String]) {
    say(&format!("criterion {}: {} {}", k, if pass { "PASS" } else { "FAIL" }, summary));
    for d in detail {
        say(&format!("    {}", d));
    }
    assert!(pass, "criterion {} failed: {}", k, summary);
}

fn fmt_row(r: &diagnostics::Row) -> String {
    let n = r.n.map(|n| format!(" N={}", n)).unwrap_or_default();
    let num = |x: Option<f64>| x.map(|v| format!("{:.6}", v)).unwrap_or_else(|| "-".into());
    format!(
        "{}{}: {} ± {} target {} [{:?}]",
        r.quantity,
        n,
        num(r.estimate),
        num(r.stderr),
        num(r.target),
        r.status
    )
}

fn report_lines(r: &CheckReport) -> Vec<String> {
    let mut v: Vec<String> = r.rows.iter().map(fmt_row).collect();
    v.extend(r.notes.iter().map(|n| format!("note: {}", n)));
    v.push(format!("verdict: {:?}", r.verdict));
    v
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

#[test]
fn criterion_01_rate_formulas() {
    let start = Instant::now();
    let mut worst_quad = 0.0f64;
    let mut worst_rec = 0.0f64;
    for (a, b) in [(1.0, 1.0), (0.5, 1.5), (2.0, 2.0)] {
        let l = LambdaMeasure::beta(a, b, 1.0).unwrap();
        for n in 2..=20 {
            for k in 2..=n {
                let closed = l.rate(n, k).unwrap();
                let quad = l.rate_by_quadrature(n, k).unwrap();
                worst_quad = worst_quad.max((closed - quad).abs() / closed.abs().max(1.0));
                if n < 20 {
                    let rec = l.rate(n + 1, k).unwrap() + l.rate(n + 1, k + 1).unwrap();
                    worst_rec = worst_rec.max((closed - rec).abs() / closed.abs().max(1.0));
                }
            }
        }
    }
    let t = start.elapsed();
    let pass = worst_quad <= 1e-10 && worst_rec <= 1e-10 && t < Duration::from_secs(1);
    verdict(
        1,
        pass,
        "closed-form Beta rates vs quadrature and consistency recursion",
        &[format!("max |closed - quadrature| = {:.3e}, max recursion residual = {:.3e}, runtime {}", worst_quad, worst_rec, secs(t))],
    );
}

/// P(π′) by enumerating every assignment of the n points to an atom or to dust.
fn paintbox_brute_force(rho: &[f64], pi: &Partition) -> f64 {
    let n = pi.n();
    let k = rho.len();
    let dust = 1.0 - rho.iter().sum::<f64>();
    let mut total = 0.0;
    let choices = k + 1;
    for code in 0..choices.pow(n as u32) {
        let mut c = code;
        let mut prob = 1.0;
        // labels: atoms 0..k, dust points get a fresh label each
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let a = c % choices;
            c /= choices;
            if a == k {
                prob *= dust;
                labels.push(k + 1 + i);
            } else {
                prob *= rho[a];
                labels.push(a);
            }
        }
        if prob > 0.0 && Partition::from_labels(&labels) == *pi {
            total += prob;
        }
    }
    total
}

#[test]
fn criterion_02_paintbox_exactness() {
    let start = Instant::now();
    let mut rng = stream_rng(2002, 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let atoms = rng.random_range(1..=3usize);
        let total: f64 = rng.random_range(0.3..=1.0);
        let raw: Vec<f64> = (0..atoms).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|x| x / s * total).collect();
        w.sort_by(|a, b| b.total_cmp(a));
        let rho = MassPartition::new(w.clone()).unwrap();
        for n in 1..=4 {
            for pi in enumerate_partitions(n).unwrap() {
                let d = (paintbox_partition_prob(&rho, &pi).unwrap() - paintbox_brute_force(&w, &pi)).abs();
                worst = worst.max(d);
            }
        }
    }
    let t = start.elapsed();
    verdict(
        2,
        worst <= 1e-12 && t < Duration::from_secs(10),
        "paint-box probabilities vs brute-force enumeration",
        &[format!("max abs difference {:.3e} over 50 mass partitions, n <= 4, runtime {}", worst, secs(t))],
    );
}

const DRAWS_3: usize = 1_000_000;
const CHUNKS: usize = 100;

/// Increment counts over 𝒫₃ (enumeration order) from `DRAWS_3` draws.
fn increment_counts(sample: impl Fn(&mut coalgene::rng::StreamRng) -> Partition + Sync, seed: u64) -> Vec<u64> {
    let parts = enumerate_partitions(3).unwrap();
    let per = par_replicates(CHUNKS, seed, |rng, _| {
        let mut c = vec![0u64; parts.len()];
        for _ in 0..DRAWS_3 / CHUNKS {
            let p = sample(rng);
            c[parts.iter().position(|q| *q == p).unwrap()] += 1;
        }
        c
    });
    (0..parts.len()).map(|i| per.iter().map(|c| c[i]).sum()).collect()
}

/// max |z| over 𝒫₃ between counts and exact probabilities; `None` if an
/// impossible partition was observed.
fn max_z(counts: &[u64], exact: &[f64]) -> Option<f64> {
    let mut worst = 0.0f64;
    for (&c, &p) in counts.iter().zip(exact) {
        let f = c as f64 / DRAWS_3 as f64;
        if p == 0.0 {
            if c > 0 {
                return None;
            }
            continue;
        }
        let se = (p * (1.0 - p) / DRAWS_3 as f64).sqrt();
        if se > 0.0 {
            worst = worst.max(((f - p) / se).abs());
        } else if (f - p).abs() > 1e-12 {
            return None;
        }
    }
    Some(worst)
}

#[test]
fn criterion_03_transition_exactness() {
    let start = Instant::now();
    let parts = enumerate_partitions(3).unwrap();
    let mut rng = stream_rng(3003, 0);
    let mut awf_worst = 0.0f64;
    let mut ac_worst = 0.0f64;
    let mut impossible = 0;
    for case in 0..20u64 {
        let n_pop = rng.random_range(3..=10usize);
        let w: Vec<f64> = (0..n_pop).map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() }).collect();
        let w = if w.iter().all(|&x| x == 0.0) { vec![1.0; n_pop] } else { w };
        let eta = WeightVector::new(w).unwrap();
        let exact: Vec<f64> = parts.iter().map(|p| exact_transition_awf(&eta, p).unwrap()).collect();
        let counts = increment_counts(|r| awf_increment(&eta, 3, r).unwrap(), 10 + case);
        match max_z(&counts, &exact) {
            Some(z) => awf_worst = awf_worst.max(z),
            None => impossible += 1,
        }

        let mut nu: Vec<u64> = (0..n_pop).map(|_| rng.random_range(0..=4u64)).collect();
        while nu.iter().sum::<u64>() < (n_pop as u64).max(3) {
            let i = rng.random_range(0..n_pop);
            nu[i] += 1;
        }
        let nu = OffspringVector::new(nu).unwrap();
        let exact: Vec<f64> = parts.iter().map(|p| exact_transition_ac(&nu, p).unwrap()).collect();
        let counts = increment_counts(|r| ac_increment(&nu, 3, r).unwrap(), 100 + case);
        match max_z(&counts, &exact) {
            Some(z) => ac_worst = ac_worst.max(z),
            None => impossible += 1,
        }
    }
    let t = start.elapsed();
    verdict(
        3,
        awf_worst < 4.0 && ac_worst < 4.0 && impossible == 0 && t < Duration::from_secs(120),
        "empirical increments vs exact transition probabilities on P_3",
        &[format!(
            "20 weight vectors and 20 offspring vectors, 10^6 draws each: max |z| AWF {:.2}, AC {:.2}, impossible outcomes {}, runtime {}",
            awf_worst, ac_worst, impossible, secs(t)
        )],
    );
}

#[test]
fn criterion_04_semigroup() {
    let start = Instant::now();
    let model = ModelSpec::ExplicitWeights(WeightVector::uniform(200));
    let r = diagnostics::check_semigroup(&model, &"kingman".parse().unwrap(), 200, 3, &[1.0], 0.02, 100_000, 4004).unwrap();
    let t = start.elapsed();
    let mut d = report_lines(&r);
    d.push(format!("runtime {}", secs(t)));
    verdict(4, r.passed() && t < Duration::from_secs(300), "Wright-Fisher N=200 one-step matrix powered vs exp(tQ_Kingman)", &d);
}

fn eldon_wakeley() -> ModelSpec {
    ModelSpec::EldonWakeley { base: LambdaMeasure::beta(2.0, 2.0, 1.0).unwrap(), epsilon: 0.5 }
}

#[test]
fn criterion_05_eldon_wakeley_lambda_limit() {
    let start = Instant::now();
    let limit = LambdaMeasure::beta(2.0, 2.0, 1.0).unwrap();
    let r = diagnostics::check_lambda_criterion(&eldon_wakeley(), &limit, &[1_000, 10_000], 4, 0.1, 20_000, 5005).unwrap();
    let t = start.elapsed();
    let mut d = report_lines(&r);
    d.push(format!("runtime {}", secs(t)));
    verdict(5, r.passed() && t < Duration::from_secs(300), "Eldon-Wakeley Beta(2,2), eps=0.5: E[eta1^b]/c_N vs lambda_bb/lambda_22", &d);
}

#[test]
fn criterion_06_replacement_equivalence() {
    let start = Instant::now();
    let r = diagnostics::check_replacement_equivalence(&eldon_wakeley(), &[100, 1_000, 10_000], 2, 20_000, 6006).unwrap();
    let t = start.elapsed();
    let mut d = report_lines(&r);
    d.push(format!("runtime {}", secs(t)));
    verdict(6, r.passed() && t < Duration::from_secs(300), "sampling with vs without replacement, Eldon-Wakeley", &d);
}

#[test]
fn criterion_07_stick_breaking_identities() {
    let start = Instant::now();
    let mut d = Vec::new();
    let mut pass = true;

    let p = PdParams::new(0.8, 0.0, 0.5).unwrap();
    let mut rng = stream_rng(7007, 0);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let path = stick_breaking(&p, 1_000, &mut rng).unwrap();
        let (m, s) = martingale_decomposition(&path, p.gamma);
        worst = worst.max(((m + s) / zeta(&path, p.gamma) - 1.0).abs());
    }
    pass &= worst <= 1e-9;
    d.push(format!("decomposition identity: max relative residual {:.3e} over 10^3 paths, N=10^3", worst));

    for p in [PdParams::new(0.5, 0.0, 0.5).unwrap(), PdParams::new(0.7, 0.2, 0.5).unwrap()] {
        let sampler = StickSampler::new(p, 1_000);
        let s = par_replicates(100_000, 7107, |rng, _| -sampler.sample_log_survival(rng));
        let e = EstimateWithError::from_samples(&s);
        let target = mu_n(&p, 1_000);
        let ok = (e.value - target).abs() < 3.0 * e.stderr;
        pass &= ok;
        d.push(format!(
            "centering (alpha={}, theta={}): MC {:.6} ± {:.6} vs mu_N {:.6} [{}]",
            p.alpha, p.theta, e.value, e.stderr, target, if ok { "ok" } else { "off" }
        ));

        let e = s_infty_check(&p, 10_000, 100_000, 7207).unwrap();
        let target = exp_gamma_s_infty(&p).unwrap();
        let ok = (e.value - target).abs() < 3.0 * e.stderr;
        pass &= ok;
        d.push(format!(
            "E[exp(gamma S_N)] (alpha={}, theta={}, gamma={}), N=10^4: {:.6} ± {:.6} vs {:.6} [{}]",
            p.alpha, p.theta, p.gamma, e.value, e.stderr, target, if ok { "ok" } else { "off" }
        ));
    }
    let t = start.elapsed();
    d.push(format!("runtime {}", secs(t)));
    verdict(7, pass && t < Duration::from_secs(600), "stick-breaking identities", &d);
}

#[test]
fn criterion_08_pd_case_i_constant() {
    let start = Instant::now();
    let p = PdParams::new(0.8, 0.0, 0.5).unwrap();
    let r = diagnostics::check_pd_theorem(&p, &[10_000, 100_000], 0.1, 4_000, 8008).unwrap();
    let t = start.elapsed();
    let row = |q: &str| r.rows.iter().rev().find(|x| x.quantity == q).unwrap();
    let reduced = row("1/ell theta=0 reduced form").status == Status::Pass;
    let scaled = row("c_N*u_N^(1+theta/alpha)").status == Status::Pass;
    let trend = row("trend c_N*u_N^(1+theta/alpha) toward target").status == Status::Pass;
    let mut d = report_lines(&r);
    d.push(format!(
        "judged rows: reduced form of 1/ell {}, constant at N=10^5 {}, trend {}",
        reduced, scaled, trend
    ));
    if !scaled {
        // Σ Ṽ_i^{2γ} has 2γ/α = 1.25 > 1, so it stays O(1) while ζ_{N,γ} grows like u_N;
        // c_N then scales like u_N^{-2}, not 1/(ℓ u_N).
        let est = row("c_N*u_N^(1+theta/alpha)").estimate.unwrap_or(f64::NAN);
        d.push(format!(
            "analysis: c_N*u_N = {:.4} vs (1-theta/alpha)/ell = {:.4}. For gamma < alpha the sum of squared weights is \
             dominated by O(1) picks while the normaliser grows like u_N, so c_N*u_N keeps falling instead of \
             approaching a positive constant.",
            est,
            1.0 / ell_const(&p).unwrap()
        ));
    }
    d.push(format!("runtime {}", secs(t)));
    verdict(8, reduced && scaled && trend && t < Duration::from_secs(900), "PD case i: c_N*u_N vs 1/ell, alpha=0.8, theta=0, gamma=0.5", &d);
}

#[test]
fn criterion_09_pd_case_ii_boundedness() {
    let start = Instant::now();
    let p = PdParams::new(0.8, 0.96, 0.5).unwrap();
    let r = diagnostics::check_pd_theorem(&p, &[10_000, 100_000], 0.1, 4_000, 9009).unwrap();
    let t = start.elapsed();
    let mut d = report_lines(&r);
    d.push(format!("runtime {}", secs(t)));
    verdict(9, r.passed() && t < Duration::from_secs(900), "PD case ii (theta = 1.2 alpha): c_N*u_N^2 bounded, Kingman ratios decreasing", &d);
}

#[test]
fn criterion_10_exponential_model_equivalence() {
    let start = Instant::now();
    let mut pass = true;
    let mut d = Vec::new();
    for kappa in [0.75, 1.0] {
        let r = diagnostics::check_em_equivalence(2.0, kappa, 100, 10_000, 10_000, 10010).unwrap();
        pass &= r.passed();
        d.push(format!("kappa = {}", kappa));
        d.extend(report_lines(&r));
    }
    let t = start.elapsed();
    d.push(format!("runtime {}", secs(t)));
    verdict(10, pass && t < Duration::from_secs(600), "direct branching-selection sampler vs PD representation, N=100, beta=2", &d);
}

#[test]
fn criterion_11_exponential_constant_adjudication() {
    let start = Instant::now();
    let r = diagnostics::check_em_theorem(2.0, 1.0, &[10_000, 100_000], 0.15, 4_000, 11011).unwrap();
    let (disp, spec) = diagnostics::em_candidates(2.0, 1.0);
    let est = r.rows.iter().rev().find(|x| x.quantity == "c_N*sum i^-kappa vs specialised").unwrap().estimate.unwrap();
    let within = |c: f64| (est - c).abs() <= 0.15 * c;
    let exactly_one = within(disp) != within(spec);
    let flagged = r.notes.iter().any(|n| n.starts_with("supported target"));
    let mut d = report_lines(&r);
    d.push(format!(
        "c_N H_N = {:.4}; displayed constant {:.6}, specialised constant {:.6}; within 15%: displayed {}, specialised {}",
        est,
        disp,
        spec,
        within(disp),
        within(spec)
    ));
    if !exactly_one {
        d.push(
            "analysis: at kappa=1, beta=2 both Gamma factors are Gamma(2) = Gamma(1) = 1, so the two candidates are the same \
             number and no estimate can be close to exactly one of them. The criterion cannot be met at these parameters."
                .into(),
        );
    }
    // The separating run: at beta=1.2, kappa=0.6 the candidates differ by a third.
    let sep = diagnostics::check_em_theorem(1.2, 0.6, &[10_000, 100_000], 0.15, 4_000, 11111).unwrap();
    d.push("separating run at beta=1.2, kappa=0.6 (informational):".into());
    d.extend(report_lines(&sep));
    let t = start.elapsed();
    d.push(format!("runtime {}", secs(t)));
    verdict(
        11,
        exactly_one && flagged && t < Duration::from_secs(900),
        "exponential model kappa=1, beta=2: c_N H_N near exactly one candidate constant",
        &d,
    );
}

#[test]
fn criterion_12_bottleneck_regime_i() {
    let start = Instant::now();
    let spec = BottleneckSpec {
        f: FSpec::Finite(vec![(2, 1.0)]),
        a_exp: 0.5,
        b_exp: 0.5,
        nu_bar: NuBar::Uniform,
        eta_hat: EtaHat::WrightFisher,
    };
    let kingman = CoagulationMeasure::Lambda(LambdaMeasure::Kingman);
    let r = diagnostics::check_bottleneck_regimes(&spec, Regime::I, &kingman, &[10_000], 2, 0.1, 200_000, 12012).unwrap();
    let t = start.elapsed();
    let merge = r.rows.iter().find(|x| x.quantity == "scaled P(1,2)").unwrap();
    let mut d = report_lines(&r);
    d.push(format!("runtime {}", secs(t)));
    verdict(
        12,
        merge.status == Status::Pass && r.passed() && t < Duration::from_secs(300),
        "bottleneck regime i: a_N * P(merge) vs F(2)/2",
        &d,
    );
}

fn run_bin(args: &[&str], threads: usize, out: &std::path::Path) -> (i32, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_coalgene"))
        .args(args)
        .args(["--threads", &threads.to_string(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    (status.code().unwrap_or(-1), std::fs::read(out).unwrap_or_default())
}

#[test]
fn criterion_13_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    let ew = cfg(
        "ew.json",
        r#"{"model": {"kind": "eldon_wakeley", "base": "beta:2,2", "epsilon": 0.5},
            "run": {"N": 200, "n": 4, "replicates": 200, "seed": 13, "t_max": 1.0, "thin": true}}"#,
    );
    let ew3 = cfg(
        "ew3.json",
        r#"{"model": {"kind": "eldon_wakeley", "base": "beta:2,2", "epsilon": 0.5},
            "run": {"N_list": [100, 200], "n": 3, "replicates": 200, "seed": 13}}"#,
    );
    let pd = cfg(
        "pd.json",
        r#"{"model": {"kind": "pd_power", "alpha": 0.8, "theta": 0.0, "gamma": 0.5},
            "run": {"N_list": [100, 1000], "replicates": 300, "seed": 13}}"#,
    );
    let wf = cfg(
        "wf.toml",
        "[model]\nkind = \"explicit_weights\"\nweights = [0.4, 0.3, 0.2, 0.1]\n[limit]\nmeasure = \"kingman\"\n[run]\nn = 3\nreplicates = 1000\nseed = 13\nmethod = \"counting\"\n",
    );
    let commands: Vec<Vec<&str>> = vec![
        vec!["simulate", "--config", &ew],
        vec!["estimate-cn", "--config", &ew],
        vec!["transition", "--config", &ew],
        vec!["transition", "--config", &wf],
        vec!["check", "replacement", "--config", &ew3],
        vec!["check", "pd-theorem", "--config", &pd],
        vec!["plotdata", "pd-theorem", "--config", &pd],
        vec!["pd", "--alpha", "0.5", "--theta", "0.2", "--gamma", "0.4", "--N", "500", "--reps", "500", "--seed", "13"],
        vec!["rates", "--measure", "beta:0.5,1.5", "--n", "6"],
        vec!["constants", "--alpha", "0.7", "--theta", "0.2", "--gamma", "0.5"],
    ];
    let mut pass = true;
    let mut d = Vec::new();
    for (i, args) in commands.iter().enumerate() {
        let outs: Vec<(i32, Vec<u8>)> =
            [1, 4, 8].iter().map(|&t| run_bin(args, t, &dir.path().join(format!("out{}_{}", i, t)))).collect();
        let rerun = run_bin(args, 1, &dir.path().join(format!("out{}_again", i)));
        let same = outs.iter().all(|o| o == &outs[0]) && rerun == outs[0];
        let ran = outs[0].0 != 1 && !outs[0].1.is_empty();
        pass &= same && ran;
        d.push(format!(
            "{}: exit {}, {} bytes, identical across threads 1/4/8 and rerun: {}",
            args[..2.min(args.len())].join(" "),
            outs[0].0,
            outs[0].1.len(),
            same
        ));
    }
    d.push(format!("runtime {}", secs(start.elapsed())));
    verdict(13, pass, "byte-identical outputs across thread counts and reruns", &d);
}
