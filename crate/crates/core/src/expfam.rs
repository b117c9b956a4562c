//! One-parameter exponential families in natural form.
//!
//! Densities are written f_theta(x) = exp{theta*x - b(theta)} h(x) with
//! respect to a carrier h. Everything downstream (likelihood ratios, KL
//! information numbers, conjugate priors, segment marginals) reduces to the
//! log-partition `b` and its first two derivatives, so a family is a small
//! bundle of function pointers plus domain metadata.

use rand::{Rng, RngCore};
use rand_distr::{Exp1, Poisson, StandardNormal};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad;

type Scalar = fn(f64) -> f64;

/// One-parameter exponential family descriptor.
///
/// `domain` is the open natural-parameter interval where b is defined;
/// `numeric` is the finite sub-interval actually used by solvers and
/// quadrature. MLEs whose mean falls outside the numeric mean range are
/// clipped a small margin inside it so that information numbers stay finite.
#[derive(Clone, Copy)]
pub struct Family {
    pub name: &'static str,
    domain: (f64, f64),
    numeric: (f64, f64),
    b: Scalar,
    b1: Scalar,
    b2: Scalar,
    log_carrier: Scalar,
    sample: fn(f64, &mut dyn RngCore) -> f64,
    log_c: fn(f64, f64) -> Result<f64>,
}

/// Fraction of the numeric natural-parameter width used as the inward nudge
/// when an MLE is clipped at a boundary.
const CLIP_MARGIN: f64 = 1e-6;

impl Family {
    /// Gaussian with unit variance and mean theta: b(theta) = theta^2/2.
    pub fn gaussian() -> Family {
        Family {
            name: "gaussian",
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            numeric: (-1e8, 1e8),
            b: |t| 0.5 * t * t,
            b1: |t| t,
            b2: |_| 1.0,
            log_carrier: |x| -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln(),
            sample: |t, rng| t + rng.sample::<f64, _>(StandardNormal),
            log_c: |a, mu| {
                if a <= 0.0 || !mu.is_finite() {
                    return Err(Error::numeric(format!(
                        "gaussian normalizer undefined for a={a}, mu={mu}"
                    )));
                }
                Ok(0.5 * (a / (2.0 * std::f64::consts::PI)).ln() - 0.5 * a * mu * mu)
            },
        }
    }

    /// Bernoulli with success probability sigma(theta): b(theta) = log(1+e^theta).
    pub fn bernoulli() -> Family {
        Family {
            name: "bernoulli",
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            numeric: (-700.0, 700.0),
            b: |t| {
                // log(1+e^t) without overflow for large |t|
                if t > 0.0 {
                    t + (-t).exp().ln_1p()
                } else {
                    t.exp().ln_1p()
                }
            },
            b1: |t| 1.0 / (1.0 + (-t).exp()),
            b2: |t| {
                let s = 1.0 / (1.0 + (-t).exp());
                s * (1.0 - s)
            },
            log_carrier: |_| 0.0,
            sample: |t, rng| {
                let s = 1.0 / (1.0 + (-t).exp());
                if rng.gen::<f64>() < s {
                    1.0
                } else {
                    0.0
                }
            },
            log_c: |a, mu| {
                if a <= 0.0 || mu <= 0.0 || mu >= 1.0 {
                    return Err(Error::numeric(format!(
                        "bernoulli normalizer needs a>0 and 0<mu<1, got a={a}, mu={mu}"
                    )));
                }
                Ok(-ln_beta(a * mu, a * (1.0 - mu)))
            },
        }
    }

    /// Poisson with mean e^theta: b(theta) = e^theta.
    pub fn poisson() -> Family {
        Family {
            name: "poisson",
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            numeric: (-500.0, 500.0),
            b: |t| t.exp(),
            b1: |t| t.exp(),
            b2: |t| t.exp(),
            log_carrier: |x| -ln_gamma(x + 1.0),
            sample: |t, rng| {
                let pois = Poisson::new(t.exp()).expect("positive Poisson mean");
                rng.sample(pois)
            },
            log_c: |a, mu| {
                if a <= 0.0 || mu <= 0.0 {
                    return Err(Error::numeric(format!(
                        "poisson normalizer needs a>0 and mu>0, got a={a}, mu={mu}"
                    )));
                }
                Ok(a * mu * a.ln() - ln_gamma(a * mu))
            },
        }
    }

    /// Exponential with rate -theta, theta < 0: b(theta) = -log(-theta).
    pub fn exponential() -> Family {
        Family {
            name: "exponential",
            domain: (f64::NEG_INFINITY, 0.0),
            numeric: (-1e6, -1e-6),
            b: |t| -(-t).ln(),
            b1: |t| -1.0 / t,
            b2: |t| 1.0 / (t * t),
            log_carrier: |_| 0.0,
            sample: |t, rng| rng.sample::<f64, _>(Exp1) / (-t),
            log_c: |a, mu| {
                if a <= 0.0 || mu <= 0.0 {
                    return Err(Error::numeric(format!(
                        "exponential normalizer needs a>0 and mu>0, got a={a}, mu={mu}"
                    )));
                }
                Ok((a + 1.0) * (a * mu).ln() - ln_gamma(a + 1.0))
            },
        }
    }

    pub fn by_name(name: &str) -> Result<Family> {
        match name {
            "gaussian" | "normal" => Ok(Family::gaussian()),
            "bernoulli" => Ok(Family::bernoulli()),
            "poisson" => Ok(Family::poisson()),
            "exponential" => Ok(Family::exponential()),
            other => Err(Error::config(format!("unknown family '{other}'"))),
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta.is_finite() && theta > self.domain.0 && theta < self.domain.1
    }

    fn check(&self, theta: f64) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "theta={theta} outside {} domain ({}, {})",
                self.name, self.domain.0, self.domain.1
            )))
        }
    }

    pub fn b(&self, theta: f64) -> f64 {
        (self.b)(theta)
    }
    pub fn b1(&self, theta: f64) -> f64 {
        (self.b1)(theta)
    }
    pub fn b2(&self, theta: f64) -> f64 {
        (self.b2)(theta)
    }
    pub fn log_carrier(&self, x: f64) -> f64 {
        (self.log_carrier)(x)
    }
    pub fn mean(&self, theta: f64) -> f64 {
        (self.b1)(theta)
    }

    /// Finite natural-parameter interval used by solvers.
    pub fn numeric_bounds(&self) -> (f64, f64) {
        self.numeric
    }

    /// Interior natural-parameter interval after the clipping margin.
    fn clipped_bounds(&self) -> (f64, f64) {
        // Scale the margin with each endpoint's magnitude so families with
        // wide asymmetric bounds (e.g. theta in (-1e6, -1e-6)) keep their
        // near-zero endpoint usable.
        let (lo, hi) = self.numeric;
        (
            lo + CLIP_MARGIN * (1.0 + lo.abs()),
            hi - CLIP_MARGIN * (1.0 + hi.abs()),
        )
    }

    /// Draw one observation under natural parameter theta.
    pub fn sample(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        (self.sample)(theta, rng)
    }

    /// Closed-form log-normalizer log c(a, mu) of the conjugate prior.
    pub fn log_c(&self, a: f64, mu: f64) -> Result<f64> {
        (self.log_c)(a, mu)
    }

    /// log f_theta(x) - log f_lambda(x) = (theta-lambda)x - (b(theta)-b(lambda)).
    pub fn log_density_ratio(&self, theta: f64, lambda: f64, x: f64) -> Result<f64> {
        self.check(theta)?;
        self.check(lambda)?;
        if !x.is_finite() {
            return Err(Error::domain(format!("non-finite observation {x}")));
        }
        Ok((theta - lambda) * x - (self.b(theta) - self.b(lambda)))
    }

    /// Kullback-Leibler information I(theta, lambda) >= 0.
    pub fn kl(&self, theta: f64, lambda: f64) -> Result<f64> {
        self.check(theta)?;
        self.check(lambda)?;
        let v = (theta - lambda) * self.b1(theta) - (self.b(theta) - self.b(lambda));
        // Convexity makes the true value nonnegative; tiny negative values are
        // floating-point noise near theta = lambda.
        Ok(v.max(0.0))
    }

    /// Log density at x, for simulation diagnostics.
    pub fn log_density(&self, theta: f64, x: f64) -> Result<f64> {
        self.check(theta)?;
        Ok(theta * x - self.b(theta) + self.log_carrier(x))
    }

    /// MLE from the sufficient statistic: solves b'(theta) = sum/n.
    ///
    /// Means outside the representable range are clipped to the corresponding
    /// endpoint nudged inward, so the result always carries finite
    /// information numbers.
    pub fn mle(&self, sum: f64, n: u64) -> f64 {
        assert!(n >= 1, "mle needs at least one observation");
        self.mle_mean(sum / n as f64)
    }

    /// Solve b'(theta) = target with clipping at the numeric boundary.
    pub fn mle_mean(&self, target: f64) -> f64 {
        let (lo, hi) = self.clipped_bounds();
        let mlo = self.b1(lo);
        let mhi = self.b1(hi);
        if !target.is_finite() || target <= mlo {
            return lo;
        }
        if target >= mhi {
            return hi;
        }
        // Safeguarded Newton: keep a bracket, fall back to bisection whenever
        // the Newton step leaves it.
        let (mut a, mut b) = (lo, hi);
        let mut x = 0.5 * (a + b);
        for _ in 0..200 {
            let f = self.b1(x) - target;
            if f.abs() <= 1e-13 * target.abs().max(1.0) {
                return x;
            }
            if f > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let d = self.b2(x);
            let step = if d > 0.0 { x - f / d } else { f64::NAN };
            x = if step.is_finite() && step > a && step < b {
                step
            } else {
                0.5 * (a + b)
            };
            if b - a <= f64::EPSILON * (x.abs() + 1.0) {
                return x;
            }
        }
        x
    }

    /// Log-normalizer by adaptive quadrature; cross-check for `log_c`.
    pub fn log_c_quadrature(&self, a: f64, mu: f64) -> Result<f64> {
        // Validate with the closed form first so both paths reject the same inputs.
        self.log_c(a, mu)?;
        let mode = self.mle_mean(mu);
        let g = |t: f64| a * (mu * t - self.b(t));
        let gmax = g(mode);
        let sigma = 1.0 / (a * self.b2(mode)).sqrt();
        let cut = |dir: f64| -> f64 {
            // g is concave in theta; walk out until 60 nats below the peak.
            let (lo, hi) = self.numeric;
            let mut step = sigma;
            let mut t = mode;
            for _ in 0..200 {
                let next = (t + dir * step).clamp(lo, hi);
                if g(next) < gmax - 60.0 {
                    return next;
                }
                if next == lo || next == hi {
                    return next;
                }
                t = next;
                step *= 2.0;
            }
            t
        };
        let left = cut(-1.0);
        let right = cut(1.0);
        let integral = quad::integrate(|t| (g(t) - gmax).exp(), left, right, 1e-11 * sigma);
        if !(integral.is_finite() && integral > 0.0) {
            return Err(Error::numeric(format!(
                "normalizer quadrature failed for {} a={a} mu={mu}",
                self.name
            )));
        }
        Ok(-(integral.ln() + gmax))
    }
}

impl std::fmt::Debug for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Family({})", self.name)
    }
}

/// Conjugate prior pi(theta; a, mu) proportional to exp{a mu theta - a b(theta)}.
#[derive(Clone, Copy, Debug)]
pub struct ConjugatePrior {
    pub a: f64,
    pub mu: f64,
    pub log_c: f64,
}

impl ConjugatePrior {
    pub fn new(family: &Family, a: f64, mu: f64) -> Result<ConjugatePrior> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::config(format!("prior pseudo-count a={a} must be positive")));
        }
        let log_c = family.log_c(a, mu)?;
        if !log_c.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite prior normalizer for {} a={a} mu={mu}",
                family.name
            )));
        }
        Ok(ConjugatePrior { a, mu, log_c })
    }

    /// Posterior after observing m points with sufficient-statistic total `sum`.
    pub fn posterior_update(&self, family: &Family, sum: f64, m: u64) -> Result<ConjugatePrior> {
        if m == 0 {
            return Ok(*self);
        }
        let a = self.a + m as f64;
        let mu = (self.a * self.mu + sum) / a;
        ConjugatePrior::new(family, a, mu)
    }

    /// Log predictive density of the next observation.
    pub fn log_predictive(&self, family: &Family, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::domain(format!("non-finite observation {x}")));
        }
        let a1 = self.a + 1.0;
        let post = family.log_c(a1, (self.a * self.mu + x) / a1)?;
        Ok(self.log_c - post + family.log_carrier(x))
    }
}

/// Cumulative sums S_0 = 0, S_t = x_1 + ... + x_t for O(1) segment totals.
#[derive(Clone, Debug, Default)]
pub struct PrefixSums {
    s: Vec<f64>,
}

impl PrefixSums {
    pub fn new() -> PrefixSums {
        PrefixSums { s: vec![0.0] }
    }

    pub fn from_data(data: &[f64]) -> PrefixSums {
        let mut p = PrefixSums::new();
        for &x in data {
            p.push(x);
        }
        p
    }

    pub fn push(&mut self, x: f64) {
        let last = *self.s.last().unwrap();
        self.s.push(last + x);
    }

    /// Number of observations covered.
    pub fn len(&self) -> usize {
        self.s.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total of x_i + ... + x_j, indices 1-based inclusive.
    pub fn segment_sum(&self, i: usize, j: usize) -> f64 {
        self.s[j] - self.s[i - 1]
    }
}

/// log pi_{i,j} = log c(a0 + j - i + 1, Xbar_{i,j}) for the data segment [i, j],
/// with Xbar the prior-weighted segment mean. The convention pi_{i,i-1} = pi_{0,0}
/// (empty segment) is handled by allowing j = i - 1.
pub fn log_pi(
    family: &Family,
    a0: f64,
    mu0: f64,
    i: usize,
    j: usize,
    sums: &PrefixSums,
) -> Result<f64> {
    if i == 0 || j + 1 < i {
        return Err(Error::domain(format!("bad segment [{i}, {j}]")));
    }
    if j + 1 == i {
        return family.log_c(a0, mu0);
    }
    if j > sums.len() {
        return Err(Error::domain(format!(
            "segment [{i}, {j}] outside data of length {}",
            sums.len()
        )));
    }
    let count = (j - i + 1) as f64;
    let mean = (a0 * mu0 + sums.segment_sum(i, j)) / (a0 + count);
    family.log_c(a0 + count, mean)
}
