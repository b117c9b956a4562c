//! Wald's sequential probability ratio test and Lorden's 2-SPRT.
//!
//! Both run over caller-supplied streams of log-likelihood-ratio increments,
//! so any model (built-in family or external data) plugs in the same way.

use crate::error::{Error, Result};

/// Terminal state of a sequential binary test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    /// Number of observations consumed.
    pub stop_time: u64,
    /// 1 = reject the null, 0 = accept.
    pub decision: u8,
    /// Statistic that triggered the stop.
    pub final_statistic: f64,
    /// Excess of the statistic over the crossed boundary; 0 when truncated.
    pub overshoot: f64,
    /// True when the stream or the cap ran out before a boundary crossing.
    pub truncated: bool,
}

/// SPRT: stop at the first n with lambda_n outside (a0, a1).
///
/// Truncation at `max_n` (or stream end) decides by the sign of the statistic,
/// with a tie going to the null.
pub fn run_sprt<I>(stream: I, a0: f64, a1: f64, max_n: u64) -> Result<Verdict>
where
    I: IntoIterator<Item = f64>,
{
    if !(a0 < 0.0 && a1 > 0.0) {
        return Err(Error::config(format!(
            "SPRT thresholds need a0 < 0 < a1, got a0={a0}, a1={a1}"
        )));
    }
    if max_n < 1 {
        return Err(Error::config("max_n must be at least 1".to_string()));
    }
    let mut lambda = 0.0;
    let mut n = 0u64;
    for z in stream {
        if !z.is_finite() {
            return Err(Error::numeric(format!("non-finite LLR increment {z} at n={}", n + 1)));
        }
        n += 1;
        lambda += z;
        if lambda >= a1 {
            return Ok(Verdict {
                stop_time: n,
                decision: 1,
                final_statistic: lambda,
                overshoot: lambda - a1,
                truncated: false,
            });
        }
        if lambda <= a0 {
            return Ok(Verdict {
                stop_time: n,
                decision: 0,
                final_statistic: lambda,
                overshoot: a0 - lambda,
                truncated: false,
            });
        }
        if n >= max_n {
            break;
        }
    }
    if n == 0 {
        return Err(Error::data("empty LLR stream".to_string()));
    }
    Ok(Verdict {
        stop_time: n,
        decision: u8::from(lambda > 0.0),
        final_statistic: lambda,
        overshoot: 0.0,
        truncated: true,
    })
}

/// Wald's conservative thresholds a0 = log(alpha1/(1-alpha0)),
/// a1 = log((1-alpha1)/alpha0).
pub fn wald_thresholds(alpha0: f64, alpha1: f64) -> Result<(f64, f64)> {
    check_level(alpha0)?;
    check_level(alpha1)?;
    let a0 = (alpha1 / (1.0 - alpha0)).ln();
    let a1 = ((1.0 - alpha1) / alpha0).ln();
    if !(a0 < 0.0 && a1 > 0.0) {
        return Err(Error::config(format!(
            "degenerate error targets ({alpha0}, {alpha1}) give thresholds ({a0}, {a1})"
        )));
    }
    Ok((a0, a1))
}

/// 2-SPRT: stop when lambda^(0) reaches a0 (reject the null) or lambda^(1)
/// reaches a1 (accept). Simultaneous crossings reject.
///
/// The stream yields increment pairs (z0, z1) of the LLR against each
/// hypothesis. Truncation decides by the larger of lambda^(0)/a0 and
/// lambda^(1)/a1.
pub fn run_2sprt<I>(stream: I, a0: f64, a1: f64, max_n: u64) -> Result<Verdict>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    if !(a0 > 0.0 && a1 > 0.0) {
        return Err(Error::config(format!(
            "2-SPRT thresholds must be positive, got a0={a0}, a1={a1}"
        )));
    }
    if max_n < 1 {
        return Err(Error::config("max_n must be at least 1".to_string()));
    }
    let (mut l0, mut l1) = (0.0f64, 0.0f64);
    let mut n = 0u64;
    for (z0, z1) in stream {
        if !(z0.is_finite() && z1.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite LLR increments ({z0}, {z1}) at n={}",
                n + 1
            )));
        }
        n += 1;
        l0 += z0;
        l1 += z1;
        if l0 >= a0 {
            return Ok(Verdict {
                stop_time: n,
                decision: 1,
                final_statistic: l0,
                overshoot: l0 - a0,
                truncated: false,
            });
        }
        if l1 >= a1 {
            return Ok(Verdict {
                stop_time: n,
                decision: 0,
                final_statistic: l1,
                overshoot: l1 - a1,
                truncated: false,
            });
        }
        if n >= max_n {
            break;
        }
    }
    if n == 0 {
        return Err(Error::data("empty LLR stream".to_string()));
    }
    let reject = l0 / a0 >= l1 / a1;
    Ok(Verdict {
        stop_time: n,
        decision: u8::from(reject),
        final_statistic: if reject { l0 } else { l1 },
        overshoot: 0.0,
        truncated: true,
    })
}

/// 2-SPRT thresholds a_i = log(1/alpha_i), which bound the error
/// probabilities by e^{-a_i}.
pub fn two_sprt_thresholds(alpha0: f64, alpha1: f64) -> Result<(f64, f64)> {
    check_level(alpha0)?;
    check_level(alpha1)?;
    Ok((alpha0.recip().ln(), alpha1.recip().ln()))
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("error level {alpha} outside (0, 1)")))
    }
}

/// Hypothesis under which a first-order moment reference is requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    Null,
    Alternative,
    /// Intermediate measure with drifts (eta0, eta1) against each hypothesis.
    Intermediate,
}

/// First-order reference value for E_i[T^r] of a sequential test with error
/// targets (alpha0, alpha1): the familiar |log alpha|/information expressions,
/// with zero-information branches treated as +infinity in the min.
#[allow(clippy::too_many_arguments)]
pub fn asymptotic_moment(
    alpha0: f64,
    alpha1: f64,
    i0: f64,
    i1: f64,
    r: f64,
    hypothesis: Hypothesis,
    eta0: f64,
    eta1: f64,
) -> Result<f64> {
    check_level(alpha0)?;
    check_level(alpha1)?;
    if !(i0 < 0.0) || !(i1 > 0.0) {
        return Err(Error::config(format!(
            "information numbers must satisfy I0 < 0 < I1, got I0={i0}, I1={i1}"
        )));
    }
    if r <= 0.0 {
        return Err(Error::config(format!("moment order r={r} must be positive")));
    }
    let base = match hypothesis {
        Hypothesis::Null => alpha1.ln().abs() / i0.abs(),
        Hypothesis::Alternative => alpha0.ln().abs() / i1,
        Hypothesis::Intermediate => {
            if eta0 <= 0.0 && eta1 <= 0.0 {
                return Err(Error::config(
                    "intermediate hypothesis needs a positive eta".to_string(),
                ));
            }
            let t1 = if eta1 > 0.0 {
                alpha1.ln().abs() / eta1
            } else {
                f64::INFINITY
            };
            let t0 = if eta0 > 0.0 {
                alpha0.ln().abs() / eta0
            } else {
                f64::INFINITY
            };
            t0.min(t1)
        }
    };
    Ok(base.powf(r))
}
