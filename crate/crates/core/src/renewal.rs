//! First-passage simulation for random walks with linear, power, and
//! perturbed boundaries, plus empirical overshoot corrections.
//!
//! For a walk S_n with positive drift mu crossing S_n - nu > b, the mean
//! stopping time satisfies mu E[tau_b] = b + rho + o(1), where rho is the
//! limiting mean overshoot. `estimate_rho` recovers rho from ladder-epoch
//! overshoots via r(u) = E[R^2] / 2 E[R]; `corrected_expectation` and
//! `fit_c0` apply and fit the resulting expansions.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expfam::Family;
use crate::sim::{replicate, sub_rng, SimReport};

/// Default per-replication step cap.
pub const DEFAULT_MAX_N: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Crossing {
    pub tau: u64,
    pub s_tau: f64,
    /// Statistic minus boundary at tau; zero when truncated.
    pub overshoot: f64,
    pub boundary_value: f64,
    pub truncated: bool,
}

/// First n >= 1 with S_n - n u > c.
pub fn cross_linear(
    stream: impl IntoIterator<Item = f64>,
    c: f64,
    u: f64,
    max_n: u64,
) -> Result<Crossing> {
    if c < 0.0 || !c.is_finite() {
        return Err(Error::config(format!("boundary level c={c} must be >= 0")));
    }
    let mut s = 0.0;
    let mut n: u64 = 0;
    for x in stream {
        n += 1;
        s += x;
        let boundary_value = c + u * n as f64;
        if s > boundary_value {
            return Ok(Crossing {
                tau: n,
                s_tau: s,
                overshoot: s - boundary_value,
                boundary_value,
                truncated: false,
            });
        }
        if n >= max_n {
            break;
        }
    }
    if n == 0 {
        return Err(Error::data("empty increment stream".to_string()));
    }
    Ok(Crossing {
        tau: n,
        s_tau: s,
        overshoot: 0.0,
        boundary_value: c + u * n as f64,
        truncated: true,
    })
}

/// First n >= 1 with S_n > lambda n^alpha; alpha = 0 reduces to
/// cross_linear(c = lambda, u = 0).
pub fn cross_power(
    stream: impl IntoIterator<Item = f64>,
    lambda: f64,
    alpha: f64,
    max_n: u64,
) -> Result<Crossing> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::config(format!("lambda={lambda} must be positive")));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha={alpha} outside [0, 1)")));
    }
    let mut s = 0.0;
    let mut n: u64 = 0;
    for x in stream {
        n += 1;
        s += x;
        let boundary_value = lambda * (n as f64).powf(alpha);
        if s > boundary_value {
            return Ok(Crossing {
                tau: n,
                s_tau: s,
                overshoot: s - boundary_value,
                boundary_value,
                truncated: false,
            });
        }
        if n >= max_n {
            break;
        }
    }
    if n == 0 {
        return Err(Error::data("empty increment stream".to_string()));
    }
    Ok(Crossing {
        tau: n,
        s_tau: s,
        overshoot: 0.0,
        boundary_value: lambda * (n as f64).powf(alpha),
        truncated: true,
    })
}

/// Perturbation summary H applied to the auxiliary state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryH {
    Zero,
    Min,
}

impl BoundaryH {
    fn eval(self, w: &[f64]) -> Result<f64> {
        match self {
            BoundaryH::Zero => Ok(0.0),
            BoundaryH::Min => w
                .iter()
                .cloned()
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
                .ok_or_else(|| Error::config("H = min needs dimension >= 1".to_string())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneralCrossing {
    pub crossing: Crossing,
    /// Auxiliary state W at the stopping time (cumulative sums of Y).
    pub w_tau: Vec<f64>,
}

/// First n >= 1 with S_n - H(W_n + n eps(n)) > b, for joint increments
/// (X, Y) with W_n the running sum of Y.
pub fn cross_general(
    rows: impl IntoIterator<Item = (f64, Vec<f64>)>,
    h: BoundaryH,
    eps: impl Fn(u64) -> f64,
    b: f64,
    max_n: u64,
) -> Result<GeneralCrossing> {
    if !b.is_finite() {
        return Err(Error::config(format!("boundary b={b} must be finite")));
    }
    let mut s = 0.0;
    let mut w: Vec<f64> = Vec::new();
    let mut n: u64 = 0;
    let mut shifted: Vec<f64> = Vec::new();
    for (x, y) in rows {
        if n == 0 {
            if matches!(h, BoundaryH::Min) && y.is_empty() {
                return Err(Error::config("H = min needs dimension >= 1".to_string()));
            }
            w = vec![0.0; y.len()];
        } else if y.len() != w.len() {
            return Err(Error::data(format!(
                "auxiliary dimension changed from {} to {} at n={}",
                w.len(),
                y.len(),
                n + 1
            )));
        }
        n += 1;
        s += x;
        for (wi, yi) in w.iter_mut().zip(&y) {
            *wi += yi;
        }
        let e = eps(n);
        shifted.clear();
        shifted.extend(w.iter().map(|wi| wi + n as f64 * e));
        let hv = h.eval(&shifted)?;
        let boundary_value = b + hv;
        if s > boundary_value {
            return Ok(GeneralCrossing {
                crossing: Crossing {
                    tau: n,
                    s_tau: s,
                    overshoot: s - boundary_value,
                    boundary_value,
                    truncated: false,
                },
                w_tau: w,
            });
        }
        if n >= max_n {
            break;
        }
    }
    if n == 0 {
        return Err(Error::data("empty increment stream".to_string()));
    }
    Ok(GeneralCrossing {
        crossing: Crossing {
            tau: n,
            s_tau: s,
            overshoot: 0.0,
            boundary_value: b,
            truncated: true,
        },
        w_tau: w,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct RenewalEstimate {
    /// Limiting mean overshoot r(u) = E[R^2] / 2 E[R]; equals rho for
    /// i.i.d. increments.
    pub rho_plus: f64,
    pub rho_se: f64,
    pub mean_overshoot: f64,
    pub overshoot_se: f64,
    pub r_u: f64,
    pub reps: u64,
}

/// Monte Carlo estimate of r(u) from ladder crossings S_n - nu > 0, with a
/// delta-method standard error for the moment ratio.
pub fn estimate_rho_with(
    sample: impl Fn(u64, &mut ChaCha8Rng) -> f64 + Sync + Send,
    u: f64,
    reps: u64,
    seed: u64,
    max_n: u64,
) -> Result<RenewalEstimate> {
    if reps < 2 {
        return Err(Error::config(format!("need reps >= 2, got {reps}")));
    }
    let sample = &sample;
    let overshoots: Vec<Result<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = sub_rng(seed, rep, 0);
            let stream = std::iter::repeat_with(move || sample(rep, &mut rng));
            let crossing = cross_linear(stream, 0.0, u, max_n)?;
            if crossing.truncated {
                return Err(Error::numeric(format!(
                    "ladder crossing not reached within {max_n} steps (rep {rep}); drift <= u?"
                )));
            }
            Ok(crossing.overshoot)
        })
        .collect();
    let mut m = [0.0f64; 4];
    for r in &overshoots {
        let r = *r.as_ref().map_err(Clone::clone)?;
        let mut p = 1.0;
        for mk in m.iter_mut() {
            p *= r;
            *mk += p;
        }
    }
    let nf = reps as f64;
    let (m1, m2, m3, m4) = (m[0] / nf, m[1] / nf, m[2] / nf, m[3] / nf);
    if m1 <= 0.0 {
        return Err(Error::numeric("zero mean overshoot; cannot form ratio".to_string()));
    }
    let var1 = (m2 - m1 * m1).max(0.0);
    let var2 = (m4 - m2 * m2).max(0.0);
    let cov12 = m3 - m1 * m2;
    let r_u = m2 / (2.0 * m1);
    // gradient of (a, b) -> b / 2a at (m1, m2)
    let g1 = -m2 / (2.0 * m1 * m1);
    let g2 = 1.0 / (2.0 * m1);
    let var_r = (g1 * g1 * var1 + 2.0 * g1 * g2 * cov12 + g2 * g2 * var2).max(0.0) / nf;
    Ok(RenewalEstimate {
        rho_plus: r_u,
        rho_se: var_r.sqrt(),
        mean_overshoot: m1,
        overshoot_se: (var1 / nf).sqrt(),
        r_u,
        reps,
    })
}

/// `estimate_rho_with` for a built-in family at natural parameter theta.
pub fn estimate_rho(
    family: Family,
    theta: f64,
    u: f64,
    reps: u64,
    seed: u64,
    max_n: u64,
) -> Result<RenewalEstimate> {
    estimate_rho_with(move |_, rng| family.sample(theta, rng), u, reps, seed, max_n)
}

/// Expansion (b + c0 sqrt(b) + rho) / mu for E[tau_b]; c0 defaults to 0.
pub fn corrected_expectation(b: f64, mu: f64, rho_plus: f64, c0: Option<f64>) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::config(format!("drift mu={mu} must be positive")));
    }
    if b < 0.0 {
        return Err(Error::config(format!("boundary b={b} must be >= 0")));
    }
    Ok((b + c0.unwrap_or(0.0) * b.sqrt() + rho_plus) / mu)
}

/// Least-squares slope of mu Ehat[tau_b] - b - rho against sqrt(b) over a
/// boundary grid; needs at least two distinct b values.
pub fn fit_c0(samples: &[(f64, f64)], mu: f64, rho: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::config(format!("drift mu={mu} must be positive")));
    }
    let n = samples.len();
    if n < 2 || samples.windows(2).all(|w| w[0].0 == w[1].0) {
        return Err(Error::config(format!(
            "need tau estimates at >= 2 distinct b values, got {n}"
        )));
    }
    let xs: Vec<f64> = samples.iter().map(|&(b, _)| b.sqrt()).collect();
    let ys: Vec<f64> = samples.iter().map(|&(b, tau)| mu * tau - b - rho).collect();
    let nf = n as f64;
    let xbar = xs.iter().sum::<f64>() / nf;
    let ybar = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    if sxx <= 0.0 {
        return Err(Error::numeric("degenerate b grid".to_string()));
    }
    Ok(sxy / sxx)
}

/// Monte Carlo first-passage summary for a linear boundary: mean_tau,
/// mean_s_tau, mean_overshoot as simulation reports.
pub fn linear_passage_stats(
    family: Family,
    theta: f64,
    u: f64,
    c: f64,
    reps: u64,
    seed: u64,
    max_n: u64,
) -> Result<Vec<SimReport>> {
    replicate(reps, seed, |_rep, rng| {
        let stream = std::iter::repeat_with(|| family.sample(theta, rng));
        let crossing = cross_linear(stream, c, u, max_n)?;
        if crossing.truncated {
            return Err(Error::numeric(format!(
                "no crossing within {max_n} steps; drift <= u?"
            )));
        }
        Ok(vec![
            ("mean_tau".to_string(), crossing.tau as f64),
            ("mean_s_tau".to_string(), crossing.s_tau),
            ("mean_overshoot".to_string(), crossing.overshoot),
        ])
    })
}
