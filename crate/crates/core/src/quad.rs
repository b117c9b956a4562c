//! Adaptive one-dimensional quadrature.
//!
//! Used to cross-check the closed-form conjugate-prior normalizers, so the
//! implementation favors determinism and tight absolute tolerances over raw
//! speed. The integrand is always a unimodal log-concave density slice here,
//! which adaptive Simpson refinement handles well.

/// Adaptive Simpson integration of `f` over `[a, b]`.
///
/// `tol` is an absolute tolerance on the final result. Subdivision stops at
/// depth 60, deep enough that the interval width underflows long before the
/// limit binds.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(a, b, fa, fm, fb);
    adapt(&f, a, b, fa, fm, fb, whole, tol, 60)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // Stop on the accuracy target, at the depth cap, or when the interval
    // width underflows and the midpoints stop being distinct.
    if depth == 0 || delta.abs() <= 15.0 * tol || !(a < lm && lm < m && m < rm && rm < b) {
        left + right + delta / 15.0
    } else {
        adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}
