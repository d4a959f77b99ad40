//! Globally adaptive 15-point Gauss–Kronrod quadrature.

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Integrates `f` over `[a, b]` until the summed error estimate is below
/// `max(abs_tol, rel_tol·|I|)` or `max_intervals` is reached.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> QuadResult {
    integrate_with_limit(&mut f, a, b, abs_tol, rel_tol, 2000)
}

pub fn integrate_with_limit<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, abs_err: 0.0 };
    }
    // (a, b, value, err)
    let (v, e) = gk15(f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || pieces.len() >= max_intervals {
            return QuadResult { value: total, abs_err: err };
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (pa, pb, _, _) = pieces.swap_remove(worst);
        let m = 0.5 * (pa + pb);
        if m <= pa || m >= pb {
            // interval exhausted at machine precision
            let total: f64 = pieces.iter().map(|p| p.2).sum::<f64>() + gk15(f, pa, pb).0;
            return QuadResult { value: total, abs_err: err };
        }
        let (v1, e1) = gk15(f, pa, m);
        let (v2, e2) = gk15(f, m, pb);
        pieces.push((pa, m, v1, e1));
        pieces.push((m, pb, v2, e2));
    }
}

/// `∫_0^1 p^{e0-1} (1-p)^{e1-1} g(p, 1-p) dp` for `e0, e1 > 0`.
///
/// The two halves are mapped by `p = s^{1/e0}` and `1 - p = r^{1/e1}`, which
/// turns the algebraic endpoint behaviour into a constant factor, so `g` only
/// needs to be smooth. `g` receives both `p` and `1 - p` so that neither is
/// formed by cancellation.
pub fn beta_kernel_integral<F: FnMut(f64, f64) -> f64>(e0: f64, e1: f64, mut g: F, abs_tol: f64, rel_tol: f64) -> QuadResult {
    let left = integrate(
        |s| {
            let p = s.powf(1.0 / e0);
            (1.0 - p).powf(e1 - 1.0) * g(p, 1.0 - p)
        },
        0.0,
        0.5f64.powf(e0),
        abs_tol * e0 / 2.0,
        rel_tol,
    );
    let right = integrate(
        |r| {
            let q = r.powf(1.0 / e1);
            (1.0 - q).powf(e0 - 1.0) * g(1.0 - q, q)
        },
        0.0,
        0.5f64.powf(e1),
        abs_tol * e1 / 2.0,
        rel_tol,
    );
    QuadResult {
        value: left.value / e0 + right.value / e1,
        abs_err: left.abs_err / e0 + right.abs_err / e1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_smooth_functions() {
        let r = integrate(|x| x * x, 0.0, 3.0, 1e-14, 1e-14);
        assert!((r.value - 9.0).abs() < 1e-13);
        let r = integrate(f64::exp, -1.0, 2.0, 1e-14, 1e-14);
        assert!((r.value - (2f64.exp() - (-1f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let r = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-11, 1e-11);
        assert!((r.value - 2.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn beta_kernel_against_closed_forms() {
        // ∫ p^{a-1}(1-p)^{b-1} dp = B(a,b); with g = p the result is B(a+1,b)
        for (a, b) in [(0.5, 1.5), (1.0, 1.0), (2.0, 2.0), (0.2, 3.7), (7.0, 0.4)] {
            let lb = crate::special_fn::ln_beta(a, b).unwrap();
            let r = beta_kernel_integral(a, b, |_, _| 1.0, 1e-14, 1e-13);
            assert!((r.value / lb.exp() - 1.0).abs() < 1e-11);
            let lb1 = crate::special_fn::ln_beta(a + 1.0, b).unwrap();
            let r = beta_kernel_integral(a, b, |p, _| p, 1e-14, 1e-13);
            assert!((r.value / lb1.exp() - 1.0).abs() < 1e-11, "{} {}", a, b);
        }
    }
}
