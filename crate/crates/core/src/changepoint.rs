//! Single-changepoint quickest-detection procedures and the multihypothesis
//! detection-isolation rule.
//!
//! All detectors consume per-time log-likelihood-ratio increments Z_t of the
//! post-change model against the pre-change model. The CUSUM and
//! Shiryaev-Roberts statistics are one-pass recursions; the window-limited
//! forms restrict candidate change times to a sliding window and are the
//! streaming-friendly variants.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::expfam::Family;
use crate::sim::{sub_rng, SimReport, Welford};
use rayon::prelude::*;

/// CUSUM statistic W_n = (W_{n-1} + Z_n)^+.
#[derive(Clone, Copy, Debug, Default)]
pub struct CusumState {
    pub w: f64,
    pub n: u64,
}

impl CusumState {
    pub fn new() -> CusumState {
        CusumState { w: 0.0, n: 0 }
    }
}

pub fn cusum_update(state: CusumState, z: f64) -> CusumState {
    CusumState {
        w: (state.w + z).max(0.0),
        n: state.n + 1,
    }
}

/// CUSUM threshold a_gamma = log gamma for the ARL class E_inf[T] >= gamma.
pub fn cusum_threshold(gamma: f64) -> Result<f64> {
    if gamma >= 1.0 {
        Ok(gamma.ln())
    } else {
        Err(Error::config(format!("gamma={gamma} must be >= 1")))
    }
}

/// Shiryaev-Roberts statistic; p = 0 gives R_n = (1 + R_{n-1}) e^{Z_n},
/// p > 0 the Shiryaev statistic with geometric prior via the extra 1/(1-p).
#[derive(Clone, Copy, Debug)]
pub struct SrState {
    pub r: f64,
    pub n: u64,
    pub p: f64,
}

impl SrState {
    /// Start from R_0 = r0 (0 is the plain SR start; head-start variants
    /// supply a positive r0).
    pub fn new(p: f64, r0: f64) -> Result<SrState> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("p={p} outside [0, 1)")));
        }
        if r0 < 0.0 {
            return Err(Error::config(format!("head start r0={r0} must be >= 0")));
        }
        Ok(SrState { r: r0, n: 0, p })
    }
}

pub fn sr_update(state: SrState, z: f64) -> SrState {
    SrState {
        r: (1.0 + state.r) * z.exp() / (1.0 - state.p),
        n: state.n + 1,
        p: state.p,
    }
}

/// Window-limited CUSUM over candidate change times nu in [n-m, n].
///
/// Keeps prefix sums with a monotone deque, so each step is O(1) amortized.
/// The windowed statistic carries no positivity clamp and is defined only
/// once n >= m.
#[derive(Clone, Debug)]
pub struct WindowState {
    m: usize,
    n: usize,
    /// Running sum from each admissible segment start, oldest first. Each sum
    /// is built by the same sequential additions the plain CUSUM recursion
    /// performs, so when m >= n the windowed maximum reproduces the CUSUM
    /// statistic bit for bit (both addition and max are monotone).
    sums: VecDeque<f64>,
}

impl WindowState {
    pub fn new(m: usize) -> Result<WindowState> {
        if m < 1 {
            return Err(Error::config("window m must be >= 1".to_string()));
        }
        Ok(WindowState {
            m,
            n: 0,
            sums: VecDeque::new(),
        })
    }

    pub fn window(&self) -> usize {
        self.m
    }

    pub fn time(&self) -> u64 {
        self.n as u64
    }

    /// Advance by one increment; returns the statistic when defined (n >= m).
    pub fn push(&mut self, z: f64) -> Option<f64> {
        for s in self.sums.iter_mut() {
            *s += z;
        }
        self.sums.push_back(z);
        // admissible starts nu >= n - m: at most m + 1 candidates
        while self.sums.len() > self.m + 1 {
            self.sums.pop_front();
        }
        self.n += 1;
        if self.n >= self.m {
            Some(self.sums.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        } else {
            None
        }
    }
}

/// Threshold a = log(2m/alpha) for the window-limited rules.
pub fn wl_threshold(alpha: f64, m: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha={alpha} outside (0, 1)")));
    }
    if m < 1 {
        return Err(Error::config("window m must be >= 1".to_string()));
    }
    Ok((2.0 * m as f64 / alpha).ln())
}

/// Window size ceil(slack * |log alpha| / info).
pub fn window_size(alpha: f64, info: f64, slack: f64) -> Result<u64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha={alpha} outside (0, 1)")));
    }
    if info <= 0.0 {
        return Err(Error::config(format!("info={info} must be positive")));
    }
    if slack < 1.0 {
        return Err(Error::config(format!("slack={slack} must be >= 1")));
    }
    Ok((slack * alpha.ln().abs() / info).ceil() as u64)
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Window-limited mixture CUSUM over a discrete prior grid of post-change
/// parameters. Each step takes the per-atom LLR increments; the statistic is
/// max over nu in the window of log sum_k w_k exp(windowed LLR sum at atom k).
#[derive(Clone, Debug)]
pub struct MixtureWindow {
    m: usize,
    n: usize,
    log_w: Vec<f64>,
    prefix: Vec<f64>,
    /// prefix snapshots S_{nu-1}, most recent last; at most m+1 retained.
    hist: VecDeque<Vec<f64>>,
}

impl MixtureWindow {
    pub fn new(m: usize, weights: &[f64]) -> Result<MixtureWindow> {
        if m < 1 {
            return Err(Error::config("window m must be >= 1".to_string()));
        }
        if weights.is_empty() {
            return Err(Error::config("empty mixture grid".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && (total - 1.0).abs() < 1e-8) {
            return Err(Error::config(format!("mixture weights sum to {total}, need 1")));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::config("negative mixture weight".to_string()));
        }
        Ok(MixtureWindow {
            m,
            n: 0,
            log_w: weights.iter().map(|w| w.ln()).collect(),
            prefix: vec![0.0; weights.len()],
            hist: VecDeque::new(),
        })
    }

    pub fn push(&mut self, zs: &[f64]) -> Result<Option<f64>> {
        if zs.len() != self.prefix.len() {
            return Err(Error::data(format!(
                "expected {} increments, got {}",
                self.prefix.len(),
                zs.len()
            )));
        }
        self.hist.push_back(self.prefix.clone());
        if self.hist.len() > self.m + 1 {
            self.hist.pop_front();
        }
        for (p, z) in self.prefix.iter_mut().zip(zs) {
            *p += z;
        }
        self.n += 1;
        if self.n < self.m {
            return Ok(None);
        }
        let stat = self
            .hist
            .iter()
            .map(|snap| {
                log_sum_exp(
                    self.log_w
                        .iter()
                        .zip(self.prefix.iter().zip(snap.iter()))
                        .map(|(lw, (s, s0))| lw + s - s0),
                )
            })
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Some(stat))
    }
}

/// Alarm raised by a detector, optionally with an isolated hypothesis
/// (1-based index).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alarm {
    pub time: u64,
    pub statistic: f64,
    pub isolated: Option<usize>,
}

/// Detection-isolation over N >= 2 post-change hypotheses. `rows` yields per
/// time a vector of the N LLR increments of hypothesis i against the
/// pre-change model. Alarms at the first n where the best windowed hypothesis
/// statistic beats the clamped best rival by `a`; isolates the argmax
/// hypothesis (smallest index on ties).
pub fn detect_isolate<I>(n_hyp: usize, m: usize, a: f64, rows: I, max_n: u64) -> Result<Option<Alarm>>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    if n_hyp < 2 {
        return Err(Error::config(format!("need N >= 2 hypotheses, got {n_hyp}")));
    }
    let mut windows: Vec<WindowState> = (0..n_hyp)
        .map(|_| WindowState::new(m))
        .collect::<Result<_>>()?;
    let mut n = 0u64;
    for row in rows {
        if row.len() != n_hyp {
            return Err(Error::data(format!(
                "expected {n_hyp} increments per row, got {}",
                row.len()
            )));
        }
        n += 1;
        let mut stats = Vec::with_capacity(n_hyp);
        for (w, &z) in windows.iter_mut().zip(&row) {
            stats.push(w.push(z));
        }
        if stats.iter().any(|s| s.is_none()) {
            continue;
        }
        let stats: Vec<f64> = stats.into_iter().map(Option::unwrap).collect();
        // top two windowed statistics decide both alarm and isolation
        let mut best = 0usize;
        for (i, &s) in stats.iter().enumerate() {
            if s > stats[best] {
                best = i;
            }
        }
        let rival = stats
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != best)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = stats[best] - rival.max(0.0);
        if margin >= a {
            return Ok(Some(Alarm {
                time: n,
                statistic: stats[best],
                isolated: Some(best + 1),
            }));
        }
        if n >= max_n {
            return Ok(None);
        }
    }
    Ok(None)
}

/// Detector selection for metric estimation and the CLI.
#[derive(Clone, Copy, Debug)]
pub enum DetectorKind {
    Cusum,
    Sr,
    Shiryaev { p: f64 },
    WlCusum { m: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    /// Log scale for CUSUM variants, ratio scale for SR/Shiryaev.
    pub threshold: f64,
    /// Head start for the SR/Shiryaev statistic.
    pub r0: f64,
}

/// Data-generating model: i.i.d. family draws with a mean shift at the
/// change time.
#[derive(Clone, Copy, Debug)]
pub struct ModelSpec {
    pub family: Family,
    pub theta_pre: f64,
    pub theta_post: f64,
}

impl ModelSpec {
    fn z(&self, x: f64) -> Result<f64> {
        self.family
            .log_density_ratio(self.theta_post, self.theta_pre, x)
    }
}

/// First alarm time of a detector on increments generated by `model` with a
/// change at `nu` (1-based; u64::MAX means never). Returns (time, alarmed);
/// time is capped at max_n.
pub fn first_alarm(
    det: &DetectorSpec,
    model: &ModelSpec,
    nu: u64,
    max_n: u64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(u64, bool)> {
    let mut cusum = CusumState::new();
    let mut sr = match det.kind {
        DetectorKind::Shiryaev { p } => SrState::new(p, det.r0)?,
        _ => SrState::new(0.0, det.r0)?,
    };
    let mut window = match det.kind {
        DetectorKind::WlCusum { m } => Some(WindowState::new(m)?),
        _ => None,
    };
    for n in 1..=max_n {
        let theta = if n >= nu {
            model.theta_post
        } else {
            model.theta_pre
        };
        let x = model.family.sample(theta, rng);
        let z = model.z(x)?;
        let crossed = match det.kind {
            DetectorKind::Cusum => {
                cusum = cusum_update(cusum, z);
                cusum.w >= det.threshold
            }
            DetectorKind::Sr | DetectorKind::Shiryaev { .. } => {
                sr = sr_update(sr, z);
                sr.r >= det.threshold
            }
            DetectorKind::WlCusum { .. } => match window.as_mut().unwrap().push(z) {
                Some(stat) => stat >= det.threshold,
                None => false,
            },
        };
        if crossed {
            return Ok((n, true));
        }
    }
    Ok((max_n, false))
}

#[derive(Clone, Debug)]
pub struct MetricsConfig {
    /// Change times for delay estimation.
    pub nu_list: Vec<u64>,
    /// Start points k for the windowed false-alarm probability
    /// P_inf(k <= T < k+m); reported only for window-limited detectors.
    pub k_list: Vec<u64>,
    pub max_n: u64,
}

/// Monte Carlo estimation of run-length and delay metrics: ARL2FA, per-nu
/// expected detection delay E_nu[(T-nu+1)^+], the supremum of the
/// conditional delays over the configured nu list, the worst-case CUSUM delay
/// surrogate at nu=1, and windowed false-alarm probabilities.
pub fn estimate_metrics(
    det: &DetectorSpec,
    model: &ModelSpec,
    cfg: &MetricsConfig,
    reps: u64,
    seed: u64,
) -> Result<Vec<SimReport>> {
    if reps < 2 {
        return Err(Error::config(format!("reps={reps}, need at least 2")));
    }
    let mut nus = cfg.nu_list.clone();
    if matches!(det.kind, DetectorKind::Cusum) && !nus.contains(&1) {
        // the i.i.d. CUSUM worst case sits at nu=1 with W_0 = 0
        nus.insert(0, 1);
    }
    if nus.iter().any(|&nu| nu == 0) {
        return Err(Error::config("change times are 1-based".to_string()));
    }
    let start = std::time::Instant::now();
    let rows: Vec<(u64, Vec<u64>)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = sub_rng(seed, rep, 0);
            let t_inf = first_alarm(det, model, u64::MAX, cfg.max_n, &mut rng)?.0;
            let mut t_nu = Vec::with_capacity(nus.len());
            for (s, &nu) in nus.iter().enumerate() {
                let mut rng = sub_rng(seed, rep, 1 + s as u64);
                t_nu.push(first_alarm(det, model, nu, cfg.max_n, &mut rng)?.0);
            }
            Ok((t_inf, t_nu))
        })
        .collect::<Result<_>>()?;

    let mut arl = Welford::new();
    let mut edd: Vec<Welford> = vec![Welford::new(); nus.len()];
    let mut cond: Vec<Welford> = vec![Welford::new(); nus.len()];
    let mut pfa: Vec<Welford> = vec![Welford::new(); cfg.k_list.len()];
    let wl_m = match det.kind {
        DetectorKind::WlCusum { m } => Some(m as u64),
        _ => None,
    };
    for (t_inf, t_nu) in &rows {
        arl.push(*t_inf as f64);
        for (s, &t) in t_nu.iter().enumerate() {
            let nu = nus[s];
            let delay = if t >= nu { (t - nu + 1) as f64 } else { 0.0 };
            edd[s].push(delay);
            if t >= nu {
                cond[s].push(delay);
            }
        }
        if let Some(m) = wl_m {
            for (ki, &k) in cfg.k_list.iter().enumerate() {
                pfa[ki].push(f64::from(k <= *t_inf && *t_inf < k + m));
            }
        }
    }
    let wall = start.elapsed().as_secs_f64();
    let report = |name: String, w: &Welford| SimReport {
        name,
        estimate: w.mean(),
        std_error: w.std_error(),
        reps: w.count(),
        seed,
        wall_time: wall,
    };
    let mut out = vec![report("arl2fa".to_string(), &arl)];
    let mut sedd: Option<(usize, f64)> = None;
    for (s, &nu) in nus.iter().enumerate() {
        out.push(report(format!("edd_nu{nu}"), &edd[s]));
        out.push(report(format!("cedd_nu{nu}"), &cond[s]));
        if cond[s].count() >= 2 {
            let mean = cond[s].mean();
            if sedd.map_or(true, |(_, best)| mean > best) {
                sedd = Some((s, mean));
            }
        }
    }
    if let Some((s, _)) = sedd {
        out.push(report("sedd".to_string(), &cond[s]));
    }
    if matches!(det.kind, DetectorKind::Cusum) {
        let s = nus.iter().position(|&nu| nu == 1).unwrap();
        out.push(report("esedd".to_string(), &cond[s]));
    }
    if wl_m.is_some() {
        let mut sup: Option<usize> = None;
        for (ki, &k) in cfg.k_list.iter().enumerate() {
            out.push(report(format!("pfa_window_k{k}"), &pfa[ki]));
            if sup.map_or(true, |b| pfa[ki].mean() > pfa[b].mean()) {
                sup = Some(ki);
            }
        }
        if let Some(ki) = sup {
            out.push(report("pfa_window_sup".to_string(), &pfa[ki]));
        }
    }
    Ok(out)
}
