//! Monte Carlo engine: keyed RNG substreams, streaming moment accumulation,
//! parallel replication with deterministic aggregation, and scalar threshold
//! calibration.
//!
//! Reproducibility contract: results depend only on (seed, reps), never on
//! thread count or scheduling, because every replication derives its own
//! generator from (seed, rep, stream) and aggregation walks replications in
//! index order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// SplitMix64 finalizer; mixes a 64-bit word into an avalanche output.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one (replication, stream) cell of a seeded experiment.
///
/// The 256-bit ChaCha key is filled from a SplitMix walk over the triple, so
/// distinct cells get statistically independent streams and parallel order
/// cannot matter.
pub fn sub_rng(seed: u64, rep: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = mix(seed) ^ mix(rep.wrapping_mul(0x9e37_79b9_7f4a_7c15)) ^ mix(stream.rotate_left(32));
    for chunk in key.chunks_exact_mut(8) {
        state = mix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Streaming mean/variance accumulator (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Welford {
        Welford::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n-1 denominator).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// One Monte Carlo estimate with its uncertainty and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub reps: u64,
    pub seed: u64,
    pub wall_time: f64,
}

/// Run `reps` independent replications of `f` and aggregate every metric it
/// reports. `f` receives the replication index and a generator derived from
/// (seed, rep, 0); extra streams for the same replication come from
/// [`sub_rng`] with other stream ids.
///
/// Metric order in the output follows first appearance in replication 0.
/// Replications run in parallel but are aggregated in index order, so output
/// is bit-identical for a fixed (seed, reps) regardless of thread count.
pub fn replicate<F>(reps: u64, seed: u64, f: F) -> Result<Vec<SimReport>>
where
    F: Fn(u64, &mut ChaCha8Rng) -> Result<Vec<(String, f64)>> + Sync,
{
    if reps < 2 {
        return Err(Error::config(format!("reps={reps}, need at least 2")));
    }
    let start = std::time::Instant::now();
    let rows: Vec<Vec<(String, f64)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = sub_rng(seed, rep, 0);
            f(rep, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<String> = Vec::new();
    let mut acc: std::collections::BTreeMap<String, Welford> = std::collections::BTreeMap::new();
    for row in &rows {
        for (name, value) in row {
            if !acc.contains_key(name) {
                order.push(name.clone());
            }
            acc.entry(name.clone()).or_default().push(*value);
        }
    }
    let wall = start.elapsed().as_secs_f64();
    Ok(order
        .into_iter()
        .map(|name| {
            let w = acc[&name];
            SimReport {
                name,
                estimate: w.mean(),
                std_error: w.std_error(),
                reps: w.count(),
                seed,
                wall_time: wall,
            }
        })
        .collect())
}

/// Outcome of a scalar threshold search.
#[derive(Clone, Copy, Debug)]
pub struct Calibrated {
    pub threshold: f64,
    pub metric: f64,
    pub std_error: f64,
}

/// Monotone bisection of a noisy metric in a scalar threshold.
///
/// `eval` must reuse common random numbers across calls (same seed per
/// evaluation) so the sampled metric is a deterministic monotone function of
/// the threshold. Stops when the bracket narrows to `tol` or the metric lands
/// inside one standard error of the target.
pub fn calibrate_scalar<F>(
    mut eval: F,
    target: f64,
    bracket: (f64, f64),
    tol: f64,
    max_iter: u32,
) -> Result<Calibrated>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(Error::config(format!("reversed bracket [{lo}, {hi}]")));
    }
    let (flo, _) = eval(lo)?;
    let (fhi, _) = eval(hi)?;
    let increasing = fhi >= flo;
    let (lo_val, hi_val) = if increasing { (flo, fhi) } else { (fhi, flo) };
    if target < lo_val - 1e-12 || target > hi_val + 1e-12 {
        return Err(Error::calibration(format!(
            "target {target} outside achievable range [{lo_val}, {hi_val}] on bracket [{lo}, {hi}]"
        )));
    }
    let mut best = Calibrated {
        threshold: 0.5 * (lo + hi),
        metric: f64::NAN,
        std_error: f64::NAN,
    };
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let (value, se) = eval(mid)?;
        best = Calibrated {
            threshold: mid,
            metric: value,
            std_error: se,
        };
        if (value - target).abs() <= se || hi - lo <= tol {
            return Ok(best);
        }
        let go_up = (value < target) == increasing;
        if go_up {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn welford_matches_naive() {
        let xs = [1.0, 4.0, -2.0, 0.5, 9.0];
        let mut w = Welford::new();
        for &x in &xs {
            w.push(x);
        }
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 =
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((w.mean() - mean).abs() < 1e-12);
        assert!((w.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn sub_rng_distinct_streams() {
        let mut a = sub_rng(1, 0, 0);
        let mut b = sub_rng(1, 0, 1);
        let mut c = sub_rng(1, 1, 0);
        let xa: f64 = a.gen();
        let xb: f64 = b.gen();
        let xc: f64 = c.gen();
        assert!(xa != xb && xa != xc && xb != xc);
        // same key reproduces
        let mut a2 = sub_rng(1, 0, 0);
        assert_eq!(xa, a2.gen::<f64>());
    }

    #[test]
    fn replicate_constant_metric() {
        let out = replicate(16, 9, |_, _| Ok(vec![("seven".into(), 7.0)])).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].estimate, 7.0);
        assert_eq!(out[0].std_error, 0.0);
        assert_eq!(out[0].reps, 16);
    }

    #[test]
    fn replicate_deterministic() {
        let run = || {
            replicate(64, 123, |_, rng| Ok(vec![("u".into(), rng.gen::<f64>())])).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].estimate.to_bits(), b[0].estimate.to_bits());
        assert_eq!(a[0].std_error.to_bits(), b[0].std_error.to_bits());
    }

    #[test]
    fn replicate_se_scaling() {
        let se = |reps| {
            replicate(reps, 5, |_, rng| {
                Ok(vec![("g".into(), rng.gen::<f64>() - 0.5)])
            })
            .unwrap()[0]
                .std_error
        };
        let s1 = se(4000);
        let s2 = se(8000);
        let ratio = s1 / s2;
        assert!((ratio - std::f64::consts::SQRT_2).abs() < 0.2 * std::f64::consts::SQRT_2);
    }

    #[test]
    fn replicate_rejects_tiny_reps() {
        assert!(replicate(1, 0, |_, _| Ok(vec![])).is_err());
    }

    #[test]
    fn calibrate_deterministic_identity() {
        let out = calibrate_scalar(|t| Ok((t, 0.0)), 0.7, (0.0, 2.0), 1e-9, 200).unwrap();
        assert!((out.threshold - 0.7).abs() < 1e-8);
    }

    #[test]
    fn calibrate_reversed_bracket() {
        assert!(calibrate_scalar(|t| Ok((t, 0.0)), 0.5, (2.0, 0.0), 1e-9, 50).is_err());
    }

    #[test]
    fn calibrate_decreasing_metric() {
        let out = calibrate_scalar(|t| Ok((10.0 - t, 0.0)), 4.0, (0.0, 10.0), 1e-9, 200).unwrap();
        assert!((out.threshold - 6.0).abs() < 1e-8);
    }
}
