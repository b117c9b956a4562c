//! Multi-stage tests with data-dependent group sizes.
//!
//! The three-stage design tests H0: theta <= u0 with a first look at m, an
//! adaptively sized second look, and a final look at the cap M. Interim
//! rejection needs the GLR statistic n I(theta_hat, u0) to clear b with
//! theta_hat above u0; interim futility needs n I(theta_hat, u1) to clear
//! b_tilde with theta_hat below u1; the final look compares against c. The
//! thresholds are calibrated so the type I error splits as (eps, 1 - eps)
//! between interim and final rejection, with futility capped at
//! eps_tilde * alpha_tilde. The four-stage variant allows a mid-course
//! raise of the cap from M to M_tilde, with futility measured against the
//! alternative u2 implied by M_tilde.

use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::expfam::Family;
use crate::sim::{calibrate_scalar, sub_rng};

fn phi_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn phi_bar(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

#[derive(Clone, Copy, Debug)]
pub struct DesignParams {
    pub family: Family,
    /// Null boundary: H0 is theta <= u0.
    pub u0: f64,
    /// Alternative implied by the cap M.
    pub u1: f64,
    pub alpha: f64,
    pub alpha_tilde: f64,
    /// First-stage size.
    pub m: u64,
    /// Maximum sample size.
    pub big_m: u64,
    /// Inflation factor on the estimated optimal size.
    pub rho_m: f64,
    /// Fraction of alpha spent on interim rejection.
    pub eps: f64,
    /// Fraction of alpha_tilde spent on interim futility.
    pub eps_tilde: f64,
}

impl DesignParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.u0 < self.u1) {
            return Err(Error::config(format!("need u0 < u1, got {} >= {}", self.u0, self.u1)));
        }
        for u in [self.u0, self.u1] {
            if !self.family.contains(u) {
                return Err(Error::domain(format!("boundary {u} outside the {} domain", self.family.name)));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("alpha_tilde", self.alpha_tilde), ("eps", self.eps), ("eps_tilde", self.eps_tilde)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name}={v} outside (0, 1)")));
            }
        }
        if self.m < 2 || self.m >= self.big_m {
            return Err(Error::config(format!("need 2 <= m < M, got m={}, M={}", self.m, self.big_m)));
        }
        if !(self.rho_m > 0.0) {
            return Err(Error::config(format!("inflation factor rho_m={} must be positive", self.rho_m)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FourStageDesign {
    /// Base design; `base.big_m` is the pre-raise cap M.
    pub base: DesignParams,
    /// Alternative implied by the raised cap M_tilde; u0 < u2 <= u1.
    pub u2: f64,
    /// Cap for the adaptive third look, M <= M' <= M_tilde.
    pub m_prime: u64,
    /// Raised maximum sample size.
    pub m_tilde: u64,
}

impl FourStageDesign {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.base.u0 < self.u2 && self.u2 <= self.base.u1) {
            return Err(Error::config(format!(
                "need u0 < u2 <= u1, got u0={}, u2={}, u1={}",
                self.base.u0, self.u2, self.base.u1
            )));
        }
        if self.m_prime < self.base.big_m || self.m_prime > self.m_tilde {
            return Err(Error::config(format!(
                "need M <= M' <= M_tilde, got M={}, M'={}, M_tilde={}",
                self.base.big_m, self.m_prime, self.m_tilde
            )));
        }
        Ok(())
    }

    /// True when the raise is vacuous and the design collapses to the
    /// three-stage test (third look pinned at M).
    fn collapsed(&self) -> bool {
        self.m_prime == self.base.big_m && self.m_tilde == self.base.big_m
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub b: f64,
    pub b_tilde: f64,
    pub c: f64,
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("b", self.b), ("b_tilde", self.b_tilde), ("c", self.c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("threshold {name}={v} must be finite and positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Reject,
    Accept,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trigger {
    /// Interim GLR crossing against u0.
    EarlyReject,
    /// Interim futility crossing against the reference alternative.
    EarlyFutility,
    /// Final-look crossing against u0.
    FinalReject,
    /// No crossing at the final look.
    FinalAccept,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: u8,
    pub n_total: u64,
    pub decision: Decision,
    pub trigger: Trigger,
}

/// Information-based lower bound on E_theta(T) for a test with error
/// probabilities (alpha, beta) at (theta0, theta1). Floored at zero;
/// +infinity when theta is indistinguishable from both hypotheses.
pub fn hoeffding_bound(
    family: Family,
    theta: f64,
    theta0: f64,
    theta1: f64,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    for t in [theta, theta0, theta1] {
        if !family.contains(t) {
            return Err(Error::domain(format!("theta {t} outside the {} domain", family.name)));
        }
    }
    if !(alpha > 0.0 && beta > 0.0 && alpha + beta < 1.0) {
        return Err(Error::config(format!(
            "need alpha, beta > 0 with alpha + beta < 1, got {alpha}, {beta}"
        )));
    }
    let zeta = family.kl(theta, theta0)?.max(family.kl(theta, theta1)?);
    if zeta == 0.0 {
        return Ok(f64::INFINITY);
    }
    let sigma2 = (theta1 - theta0).powi(2) * family.b2(theta);
    let sigma = sigma2.sqrt();
    let l = (alpha + beta).ln(); // negative
    let bound = -l / zeta - (sigma / (2.0 * zeta * zeta)) * ((sigma / 4.0).powi(2) - zeta * l).sqrt()
        + sigma2 / (8.0 * zeta * zeta);
    Ok(bound.max(0.0))
}

/// Approximately optimal sample size at theta:
/// min(|log alpha| / I(theta, u0), |log alpha_tilde| / I(theta, u1)).
pub fn n_opt(
    family: Family,
    theta: f64,
    u0: f64,
    u1: f64,
    alpha: f64,
    alpha_tilde: f64,
) -> Result<f64> {
    for (name, v) in [("alpha", alpha), ("alpha_tilde", alpha_tilde)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::config(format!("{name}={v} outside (0, 1)")));
        }
    }
    let branch = |target: f64, u: f64| -> Result<f64> {
        let info = family.kl(theta, u)?;
        Ok(if info > 0.0 { -target.ln() / info } else { f64::INFINITY })
    };
    Ok(branch(alpha, u0)?.min(branch(alpha_tilde, u1)?))
}

fn clamp_stage(n_opt_value: f64, lo: u64, hi: u64, rho: f64) -> u64 {
    let scaled = (1.0 + rho) * n_opt_value;
    let ceiled = if scaled >= hi as f64 { hi } else { scaled.ceil() as u64 };
    ceiled.clamp(lo, hi)
}

/// Second-look size m v {M ^ ceil((1 + rho_m) n_opt(theta_hat_m))}.
pub fn stage2_size(design: &DesignParams, theta_hat_m: f64) -> Result<u64> {
    let n = n_opt(design.family, theta_hat_m, design.u0, design.u1, design.alpha, design.alpha_tilde)?;
    Ok(clamp_stage(n, design.m, design.big_m, design.rho_m))
}

/// Signed-root transform sign(theta_hat - u_j) sqrt(2 n Lambda).
pub fn signed_root(llr: f64, n: u64, theta_hat: f64, u_j: f64) -> Result<f64> {
    if llr < 0.0 {
        return Err(Error::domain(format!("GLR statistic {llr} must be nonnegative")));
    }
    let root = (2.0 * n as f64 * llr).sqrt();
    Ok(if theta_hat >= u_j { root } else { -root })
}

/// Cumulative GLR statistic n I(theta_hat, u_j) from the sufficient sum.
fn glr_at(family: &Family, s: f64, n: u64, u_j: f64) -> Result<(f64, f64)> {
    let theta_hat = family.mle(s, n);
    Ok((theta_hat, n as f64 * family.kl(theta_hat, u_j)?))
}

/// Three-stage test driven by cumulative sums: `s_at(n)` returns S_n.
/// Futility is checked before rejection at interim looks.
pub fn run_three_stage_sums(
    design: &DesignParams,
    thresholds: &Thresholds,
    mut s_at: impl FnMut(u64) -> Result<f64>,
) -> Result<StageOutcome> {
    design.validate()?;
    thresholds.validate()?;
    let f = &design.family;
    let (m, cap) = (design.m, design.big_m);

    let s_m = s_at(m)?;
    let theta1_hat = f.mle(s_m, m);
    let (_, lam_fut) = glr_at(f, s_m, m, design.u1)?;
    if theta1_hat < design.u1 && lam_fut >= thresholds.b_tilde {
        return Ok(StageOutcome { stage: 1, n_total: m, decision: Decision::Accept, trigger: Trigger::EarlyFutility });
    }
    let (_, lam_rej) = glr_at(f, s_m, m, design.u0)?;
    if theta1_hat > design.u0 && lam_rej >= thresholds.b {
        return Ok(StageOutcome { stage: 1, n_total: m, decision: Decision::Reject, trigger: Trigger::EarlyReject });
    }

    let n2 = stage2_size(design, theta1_hat)?;
    let s2 = s_at(n2)?;
    let theta2_hat = f.mle(s2, n2);
    if n2 < cap {
        let (_, lam_fut) = glr_at(f, s2, n2, design.u1)?;
        if theta2_hat < design.u1 && lam_fut >= thresholds.b_tilde {
            return Ok(StageOutcome { stage: 2, n_total: n2, decision: Decision::Accept, trigger: Trigger::EarlyFutility });
        }
        let (_, lam_rej) = glr_at(f, s2, n2, design.u0)?;
        if theta2_hat > design.u0 && lam_rej >= thresholds.b {
            return Ok(StageOutcome { stage: 2, n_total: n2, decision: Decision::Reject, trigger: Trigger::EarlyReject });
        }
        let s_cap = s_at(cap)?;
        let (theta3_hat, lam_final) = glr_at(f, s_cap, cap, design.u0)?;
        if theta3_hat > design.u0 && lam_final >= thresholds.c {
            Ok(StageOutcome { stage: 3, n_total: cap, decision: Decision::Reject, trigger: Trigger::FinalReject })
        } else {
            Ok(StageOutcome { stage: 3, n_total: cap, decision: Decision::Accept, trigger: Trigger::FinalAccept })
        }
    } else {
        // second look lands on the cap: final analysis at stage 2
        let (_, lam_final) = glr_at(f, s2, n2, design.u0)?;
        if theta2_hat > design.u0 && lam_final >= thresholds.c {
            Ok(StageOutcome { stage: 2, n_total: n2, decision: Decision::Reject, trigger: Trigger::FinalReject })
        } else {
            Ok(StageOutcome { stage: 2, n_total: n2, decision: Decision::Accept, trigger: Trigger::FinalAccept })
        }
    }
}

fn sums_from_slice<'a>(data: &'a [f64], sums: &'a [f64]) -> impl FnMut(u64) -> Result<f64> + 'a {
    move |n: u64| {
        let n = n as usize;
        if n > data.len() {
            Err(Error::data(format!("stream has {} observations, stage needs {n}", data.len())))
        } else {
            Ok(sums[n])
        }
    }
}

fn prefix(data: &[f64]) -> Vec<f64> {
    let mut sums = Vec::with_capacity(data.len() + 1);
    sums.push(0.0);
    let mut acc = 0.0;
    for &x in data {
        acc += x;
        sums.push(acc);
    }
    sums
}

/// Three-stage test on a recorded stream.
pub fn run_three_stage(design: &DesignParams, thresholds: &Thresholds, data: &[f64]) -> Result<StageOutcome> {
    let sums = prefix(data);
    run_three_stage_sums(design, thresholds, sums_from_slice(data, &sums))
}

/// Optimal size for the four-stage design, with the futility branch aimed
/// at the raised-cap alternative u2.
fn n_opt_tilde(d4: &FourStageDesign, theta: f64) -> Result<f64> {
    n_opt(d4.base.family, theta, d4.base.u0, d4.u2, d4.base.alpha, d4.base.alpha_tilde)
}

/// Four-stage test with mid-course cap raise, driven by cumulative sums.
pub fn run_four_stage_sums(
    d4: &FourStageDesign,
    thresholds: &Thresholds,
    mut s_at: impl FnMut(u64) -> Result<f64>,
) -> Result<StageOutcome> {
    d4.validate()?;
    thresholds.validate()?;
    let d = &d4.base;
    let f = &d.family;
    let cap = d4.m_tilde;

    let interim = |s: f64, n: u64, stage: u8| -> Result<Option<StageOutcome>> {
        let theta_hat = f.mle(s, n);
        let (_, lam_fut) = glr_at(f, s, n, d4.u2)?;
        if theta_hat < d4.u2 && lam_fut >= thresholds.b_tilde {
            return Ok(Some(StageOutcome { stage, n_total: n, decision: Decision::Accept, trigger: Trigger::EarlyFutility }));
        }
        let (_, lam_rej) = glr_at(f, s, n, d.u0)?;
        if theta_hat > d.u0 && lam_rej >= thresholds.b {
            return Ok(Some(StageOutcome { stage, n_total: n, decision: Decision::Reject, trigger: Trigger::EarlyReject }));
        }
        Ok(None)
    };
    let final_look = |s: f64, n: u64, stage: u8| -> Result<StageOutcome> {
        let (theta_hat, lam) = glr_at(f, s, n, d.u0)?;
        if theta_hat > d.u0 && lam >= thresholds.c {
            Ok(StageOutcome { stage, n_total: n, decision: Decision::Reject, trigger: Trigger::FinalReject })
        } else {
            Ok(StageOutcome { stage, n_total: n, decision: Decision::Accept, trigger: Trigger::FinalAccept })
        }
    };

    let s_m = s_at(d.m)?;
    if let Some(out) = interim(s_m, d.m, 1)? {
        return Ok(out);
    }
    let theta1_hat = f.mle(s_m, d.m);
    let n2 = clamp_stage(n_opt_tilde(d4, theta1_hat)?, d.m, d.big_m, d.rho_m);

    let s2 = s_at(n2)?;
    if n2 == cap {
        return final_look(s2, n2, 2);
    }
    if let Some(out) = interim(s2, n2, 2)? {
        return Ok(out);
    }
    let theta2_hat = f.mle(s2, n2);
    // with no room to raise the cap the third look is pinned at M and the
    // test coincides with the three-stage design
    let n3 = if d4.collapsed() {
        d.big_m
    } else {
        n2.max(clamp_stage(n_opt_tilde(d4, theta2_hat)?, n2, d4.m_prime, d.rho_m))
    };

    let s3 = s_at(n3)?;
    if n3 == cap {
        return final_look(s3, n3, 3);
    }
    if let Some(out) = interim(s3, n3, 3)? {
        return Ok(out);
    }
    let s4 = s_at(cap)?;
    final_look(s4, cap, 4)
}

/// Four-stage test on a recorded stream.
pub fn run_four_stage(d4: &FourStageDesign, thresholds: &Thresholds, data: &[f64]) -> Result<StageOutcome> {
    let sums = prefix(data);
    run_four_stage_sums(d4, thresholds, sums_from_slice(data, &sums))
}

/// Group-sequential 2-SPRT: at each interim the fixed-theta log likelihood
/// ratios against theta0 and theta1 are compared to b and b_tilde; the final
/// group decides by the sign of the theta1-vs-theta0 log likelihood ratio,
/// accepting on ties.
pub fn run_group_2sprt(
    family: Family,
    theta: f64,
    theta0: f64,
    theta1: f64,
    b: f64,
    b_tilde: f64,
    group_sizes: &[u64],
    data: &[f64],
) -> Result<StageOutcome> {
    if group_sizes.is_empty() || group_sizes.windows(2).any(|w| w[0] >= w[1]) || group_sizes[0] < 1 {
        return Err(Error::config(format!("group sizes must be strictly increasing and positive: {group_sizes:?}")));
    }
    if !(theta0 < theta1) || !(theta0 < theta) || !(theta < theta1) {
        return Err(Error::config(format!("need theta0 < theta < theta1, got {theta0}, {theta}, {theta1}")));
    }
    for t in [theta, theta0, theta1] {
        if !family.contains(t) {
            return Err(Error::domain(format!("theta {t} outside the {} domain", family.name)));
        }
    }
    let sums = prefix(data);
    let k = group_sizes.len();
    for (i, &n) in group_sizes.iter().enumerate() {
        if n as usize > data.len() {
            return Err(Error::data(format!("stream has {} observations, group {} needs {n}", data.len(), i + 1)));
        }
        let s = sums[n as usize];
        let nf = n as f64;
        let stage = (i + 1) as u8;
        if i + 1 < k {
            let lr0 = (theta - theta0) * s - nf * (family.b(theta) - family.b(theta0));
            if lr0 >= b {
                return Ok(StageOutcome { stage, n_total: n, decision: Decision::Reject, trigger: Trigger::EarlyReject });
            }
            let lr1 = (theta - theta1) * s - nf * (family.b(theta) - family.b(theta1));
            if lr1 >= b_tilde {
                return Ok(StageOutcome { stage, n_total: n, decision: Decision::Accept, trigger: Trigger::EarlyFutility });
            }
        } else {
            let diff = (theta1 - theta0) * s - nf * (family.b(theta1) - family.b(theta0));
            return if diff > 0.0 {
                Ok(StageOutcome { stage, n_total: n, decision: Decision::Reject, trigger: Trigger::FinalReject })
            } else {
                Ok(StageOutcome { stage, n_total: n, decision: Decision::Accept, trigger: Trigger::FinalAccept })
            };
        }
    }
    unreachable!("final group always returns")
}

/// Reference quantities for group-sequential efficiency: the information
/// bound m_{alpha,beta}(theta) and the 1-based index of the smallest group
/// with n_j >= (1 - eps) m, falling back to the last group.
pub fn thma1_reference(
    group_sizes: &[u64],
    alpha: f64,
    beta: f64,
    eps: f64,
    family: Family,
    theta: f64,
    theta0: f64,
    theta1: f64,
) -> Result<(usize, f64)> {
    if group_sizes.is_empty() || group_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(format!("group sizes must be strictly increasing: {group_sizes:?}")));
    }
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::config(format!("{name}={v} outside (0, 1)")));
        }
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::config(format!("eps={eps} outside [0, 1)")));
    }
    let i0 = family.kl(theta, theta0)?;
    let i1 = family.kl(theta, theta1)?;
    let branch = |target: f64, info: f64| if info > 0.0 { -target.ln() / info } else { f64::INFINITY };
    let m_ab = branch(alpha, i0).min(branch(beta, i1));
    let cutoff = (1.0 - eps) * m_ab;
    let nu = group_sizes
        .iter()
        .position(|&n| n as f64 >= cutoff)
        .map_or(group_sizes.len(), |j| j + 1);
    Ok((nu, m_ab))
}

// ---------------------------------------------------------------------------
// Threshold calibration

/// Per-replication GLR path summary at the three looks. Entries are set to
/// -infinity when the corresponding crossing is ineligible.
#[derive(Clone, Copy, Debug)]
struct PathStats {
    lam1_fut: f64,
    lam1_rej: f64,
    lam2_fut: f64,
    lam2_rej: f64,
    /// Final-look statistic; at the second look when n2 lands on M.
    lam_final: f64,
}

fn simulate_paths(
    design: &DesignParams,
    theta: f64,
    reps: u64,
    seed: u64,
    stream: u64,
) -> Result<Vec<PathStats>> {
    let results: Vec<Result<PathStats>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = sub_rng(seed, rep, stream);
            let f = &design.family;
            let mut s = 0.0;
            let mut n: u64 = 0;
            let draw_to = |target: u64, s: &mut f64, n: &mut u64, rng: &mut rand_chacha::ChaCha8Rng| {
                while *n < target {
                    *s += f.sample(theta, rng);
                    *n += 1;
                }
            };
            draw_to(design.m, &mut s, &mut n, &mut rng);
            let th1 = f.mle(s, design.m);
            let (_, l1f) = glr_at(f, s, design.m, design.u1)?;
            let (_, l1r) = glr_at(f, s, design.m, design.u0)?;
            let lam1_fut = if th1 < design.u1 { l1f } else { f64::NEG_INFINITY };
            let lam1_rej = if th1 > design.u0 { l1r } else { f64::NEG_INFINITY };
            let n2 = stage2_size(design, th1)?;
            draw_to(n2, &mut s, &mut n, &mut rng);
            let th2 = f.mle(s, n2);
            let (mut lam2_fut, mut lam2_rej) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            let lam_final;
            if n2 < design.big_m {
                let (_, l2f) = glr_at(f, s, n2, design.u1)?;
                let (_, l2r) = glr_at(f, s, n2, design.u0)?;
                if th2 < design.u1 {
                    lam2_fut = l2f;
                }
                if th2 > design.u0 {
                    lam2_rej = l2r;
                }
                draw_to(design.big_m, &mut s, &mut n, &mut rng);
                let (th3, l3) = glr_at(f, s, design.big_m, design.u0)?;
                lam_final = if th3 > design.u0 { l3 } else { f64::NEG_INFINITY };
            } else {
                let (_, l2) = glr_at(f, s, n2, design.u0)?;
                lam_final = if th2 > design.u0 { l2 } else { f64::NEG_INFINITY };
            }
            Ok(PathStats { lam1_fut, lam1_rej, lam2_fut, lam2_rej, lam_final })
        })
        .collect();
    results.into_iter().collect()
}

/// Bisection on the empirical survival function of per-replication
/// statistics V: finds x with P(V >= x) = target.
fn solve_level(values: &[f64], target: f64, label: &str) -> Result<f64> {
    let reps = values.len() as f64;
    let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if vmax == f64::NEG_INFINITY {
        return Err(Error::calibration(format!(
            "{label}: crossing never eligible in simulation; target {target} unattainable"
        )));
    }
    let eval = |x: f64| -> Result<(f64, f64)> {
        let hits = values.iter().filter(|&&v| v >= x).count() as f64;
        let p = hits / reps;
        Ok((p, (p * (1.0 - p) / reps).sqrt()))
    };
    let hi = vmax.max(1e-6) * (1.0 + 1e-9) + 1e-12;
    let cal = calibrate_scalar(eval, target, (1e-12, hi), 1e-10 * (1.0 + hi), 200)
        .map_err(|e| Error::calibration(format!("{label}: {e}")))?;
    Ok(cal.threshold)
}

/// Monte Carlo calibration with common random numbers: solves the futility
/// level at u1 for b_tilde, then the interim and final rejection levels at
/// u0 for b and c.
pub fn calibrate_monte_carlo(design: &DesignParams, reps: u64, seed: u64) -> Result<Thresholds> {
    design.validate()?;
    if reps < 100 {
        return Err(Error::config(format!("need reps >= 100 for calibration, got {reps}")));
    }
    let alt = simulate_paths(design, design.u1, reps, seed, 0)?;
    let fut_target = design.eps_tilde * design.alpha_tilde;
    let v_fut: Vec<f64> = alt.iter().map(|p| p.lam1_fut.max(p.lam2_fut)).collect();
    let b_tilde = solve_level(&v_fut, fut_target, "futility level")?;

    let null = simulate_paths(design, design.u0, reps, seed, 1)?;
    let fut1 = |p: &PathStats| p.lam1_fut >= b_tilde;
    let fut2 = |p: &PathStats| p.lam2_fut >= b_tilde;
    let v_rej: Vec<f64> = null
        .iter()
        .map(|p| {
            if fut1(p) {
                f64::NEG_INFINITY
            } else if fut2(p) {
                p.lam1_rej
            } else {
                p.lam1_rej.max(p.lam2_rej)
            }
        })
        .collect();
    let b = solve_level(&v_rej, design.eps * design.alpha, "interim rejection level")?;

    let v_final: Vec<f64> = null
        .iter()
        .map(|p| {
            if fut1(p) || p.lam1_rej >= b || fut2(p) || p.lam2_rej >= b {
                f64::NEG_INFINITY
            } else {
                p.lam_final
            }
        })
        .collect();
    let c = solve_level(&v_final, (1.0 - design.eps) * design.alpha, "final rejection level")?;
    Ok(Thresholds { b, b_tilde, c })
}

/// Smallest sufficient sum at which a GLR rejection of u_j fires with
/// threshold x at sample size n, or +infinity when unattainable.
fn s_reject_bound(family: &Family, n: u64, u_j: f64, x: f64) -> f64 {
    let (_, hi) = family.numeric_bounds();
    let width = hi - family.numeric_bounds().0;
    let top = (u_j + width).min(hi - 1e-9 * width.abs());
    let nf = n as f64;
    let kl_at = |t: f64| family.kl(t, u_j).unwrap_or(f64::INFINITY);
    if nf * kl_at(top) < x {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (u_j, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if nf * kl_at(mid) >= x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    nf * family.b1(hi)
}

/// Largest sufficient sum at which a GLR futility crossing of u_j fires
/// with threshold x at sample size n, or -infinity when unattainable.
fn s_futility_bound(family: &Family, n: u64, u_j: f64, x: f64) -> f64 {
    let (lo_b, hi_b) = family.numeric_bounds();
    let width = hi_b - lo_b;
    let bottom = (u_j - width).max(lo_b + 1e-9 * width.abs());
    let nf = n as f64;
    let kl_at = |t: f64| family.kl(t, u_j).unwrap_or(f64::INFINITY);
    if nf * kl_at(bottom) < x {
        return f64::NEG_INFINITY;
    }
    let (mut lo, mut hi) = (bottom, u_j);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if nf * kl_at(mid) >= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    nf * family.b1(lo)
}

/// Approximate the three calibration probabilities by treating the
/// sufficient-statistic path beyond the first look as a Gaussian process
/// with the family's local mean and variance at the boundary parameter;
/// the first look is handled by outer Monte Carlo because the second-look
/// size depends on it.
struct NormalApprox<'a> {
    design: &'a DesignParams,
    /// First-look sufficient sums S_m under the boundary parameter.
    s_m: Vec<f64>,
}

const SIMPSON_POINTS: usize = 512;

impl NormalApprox<'_> {
    fn new(design: &DesignParams, theta: f64, reps: u64, seed: u64, stream: u64) -> NormalApprox<'_> {
        let f = &design.family;
        let drift = f.b1(theta);
        let sd = f.b2(theta).sqrt();
        let s_m: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut rng = sub_rng(seed, rep, stream);
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                design.m as f64 * drift + (design.m as f64).sqrt() * sd * z
            })
            .collect();
        NormalApprox { design, s_m }
    }

    fn moments(&self, theta: f64, from: u64, to: u64) -> (f64, f64) {
        let f = &self.design.family;
        let dn = (to - from) as f64;
        (dn * f.b1(theta), (dn * f.b2(theta)).sqrt())
    }

    /// Mean and outer-MC standard error of per-replication probabilities.
    fn average(&self, per_rep: impl Fn(f64) -> Result<f64> + Sync) -> Result<(f64, f64)> {
        let vals: Vec<Result<f64>> = self.s_m.par_iter().map(|&s| per_rep(s)).collect();
        let mut w = crate::sim::Welford::new();
        for v in vals {
            w.push(v?);
        }
        Ok((w.mean(), w.std_error()))
    }

    /// P_{u1}(futility crossing at look 1 or 2), free of the rejection
    /// threshold.
    fn prob_futility(&self, b_tilde: f64) -> Result<(f64, f64)> {
        let d = self.design;
        let f = &d.family;
        let theta = d.u1;
        self.average(|s_m| {
            let th1 = f.mle(s_m, d.m);
            if th1 < d.u1 && d.m as f64 * f.kl(th1, d.u1)? >= b_tilde {
                return Ok(1.0);
            }
            let n2 = stage2_size(d, th1)?;
            if n2 >= d.big_m {
                return Ok(0.0);
            }
            let s_f = s_futility_bound(f, n2, d.u1, b_tilde);
            if s_f == f64::NEG_INFINITY {
                return Ok(0.0);
            }
            let (mu, sd) = self.moments(theta, d.m, n2);
            Ok(phi_cdf((s_f - s_m - mu) / sd))
        })
    }

    /// P_{u0}(no futility, interim rejection at look 1 or 2).
    fn prob_early_reject(&self, b_tilde: f64, b: f64) -> Result<(f64, f64)> {
        let d = self.design;
        let f = &d.family;
        let theta = d.u0;
        self.average(|s_m| {
            let th1 = f.mle(s_m, d.m);
            if th1 < d.u1 && d.m as f64 * f.kl(th1, d.u1)? >= b_tilde {
                return Ok(0.0);
            }
            if th1 > d.u0 && d.m as f64 * f.kl(th1, d.u0)? >= b {
                return Ok(1.0);
            }
            let n2 = stage2_size(d, th1)?;
            if n2 >= d.big_m {
                return Ok(0.0);
            }
            let s_r = s_reject_bound(f, n2, d.u0, b);
            if s_r == f64::INFINITY {
                return Ok(0.0);
            }
            let s_f = s_futility_bound(f, n2, d.u1, b_tilde);
            let (mu, sd) = self.moments(theta, d.m, n2);
            Ok(phi_bar((s_r.max(s_f) - s_m - mu) / sd))
        })
    }

    /// P_{u0}(continue through both interim looks, final rejection).
    fn prob_final_reject(&self, b_tilde: f64, b: f64, c: f64) -> Result<(f64, f64)> {
        let d = self.design;
        let f = &d.family;
        let theta = d.u0;
        self.average(|s_m| {
            let th1 = f.mle(s_m, d.m);
            if th1 < d.u1 && d.m as f64 * f.kl(th1, d.u1)? >= b_tilde {
                return Ok(0.0);
            }
            if th1 > d.u0 && d.m as f64 * f.kl(th1, d.u0)? >= b {
                return Ok(0.0);
            }
            let n2 = stage2_size(d, th1)?;
            if n2 >= d.big_m {
                let s_c = s_reject_bound(f, n2, d.u0, c);
                if s_c == f64::INFINITY {
                    return Ok(0.0);
                }
                let (mu, sd) = self.moments(theta, d.m, n2);
                return Ok(phi_bar((s_c - s_m - mu) / sd));
            }
            let s_r = s_reject_bound(f, n2, d.u0, b);
            let s_f = s_futility_bound(f, n2, d.u1, b_tilde);
            let s_c = s_reject_bound(f, d.big_m, d.u0, c);
            if s_c == f64::INFINITY {
                return Ok(0.0);
            }
            let (mu2, sd2) = self.moments(theta, d.m, n2);
            let center = s_m + mu2;
            let lo = s_f.max(center - 8.0 * sd2);
            let hi = s_r.min(center + 8.0 * sd2);
            if !(lo < hi) {
                return Ok(0.0);
            }
            let (mu3, sd3) = self.moments(theta, n2, d.big_m);
            // Simpson rule over the continuation interval of the second look
            let steps = SIMPSON_POINTS;
            let h = (hi - lo) / steps as f64;
            let integrand = |x: f64| {
                let z = (x - center) / sd2;
                let dens = (-0.5 * z * z).exp() / (sd2 * (2.0 * std::f64::consts::PI).sqrt());
                dens * phi_bar((s_c - x - mu3) / sd3)
            };
            let mut acc = integrand(lo) + integrand(hi);
            for i in 1..steps {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * integrand(lo + i as f64 * h);
            }
            Ok(acc * h / 3.0)
        })
    }
}

/// Calibration via the Gaussian process approximation, with the first look
/// simulated by outer Monte Carlo.
pub fn calibrate_normal_approx(design: &DesignParams, reps: u64, seed: u64) -> Result<Thresholds> {
    design.validate()?;
    if reps < 100 {
        return Err(Error::config(format!("need reps >= 100 for calibration, got {reps}")));
    }
    let hi = 4.0 * (design.eps * design.alpha).ln().abs().max((design.eps_tilde * design.alpha_tilde).ln().abs()) + 10.0;
    let tol = 1e-9 * hi;

    let alt = NormalApprox::new(design, design.u1, reps, seed, 0);
    let b_tilde = calibrate_scalar(
        |x| alt.prob_futility(x),
        design.eps_tilde * design.alpha_tilde,
        (1e-9, hi),
        tol,
        200,
    )
    .map_err(|e| Error::calibration(format!("futility level: {e}")))?
    .threshold;

    let null = NormalApprox::new(design, design.u0, reps, seed, 1);
    let b = calibrate_scalar(
        |x| null.prob_early_reject(b_tilde, x),
        design.eps * design.alpha,
        (1e-9, hi),
        tol,
        200,
    )
    .map_err(|e| Error::calibration(format!("interim rejection level: {e}")))?
    .threshold;
    let c = calibrate_scalar(
        |x| null.prob_final_reject(b_tilde, b, x),
        (1.0 - design.eps) * design.alpha,
        (1e-9, hi),
        tol,
        200,
    )
    .map_err(|e| Error::calibration(format!("final rejection level: {e}")))?
    .threshold;
    Ok(Thresholds { b, b_tilde, c })
}

#[derive(Clone, Copy, Debug)]
pub enum CalibrationMethod {
    MonteCarlo { reps: u64, seed: u64 },
    NormalApprox { reps: u64, seed: u64 },
}

pub fn calibrate_thresholds(design: &DesignParams, method: CalibrationMethod) -> Result<Thresholds> {
    match method {
        CalibrationMethod::MonteCarlo { reps, seed } => calibrate_monte_carlo(design, reps, seed),
        CalibrationMethod::NormalApprox { reps, seed } => calibrate_normal_approx(design, reps, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gaussian_design() -> DesignParams {
        DesignParams {
            family: Family::gaussian(),
            u0: 0.0,
            u1: 0.5,
            alpha: 0.05,
            alpha_tilde: 0.05,
            m: 20,
            big_m: 100,
            rho_m: 0.1,
            eps: 0.5,
            eps_tilde: 0.5,
        }
    }

    #[test]
    fn hoeffding_bound_two_implementations() {
        let f = Family::gaussian();
        let got = hoeffding_bound(f, 0.25, 0.0, 0.5, 0.05, 0.05).unwrap();
        // independent re-evaluation from scratch
        let zeta: f64 = 0.03125;
        let sigma2: f64 = 0.25;
        let sigma = sigma2.sqrt();
        let l = (0.1f64).ln();
        let expect = -l / zeta - sigma / (2.0 * zeta * zeta) * ((sigma / 4.0).powi(2) - zeta * l).sqrt()
            + sigma2 / (8.0 * zeta * zeta);
        assert_abs_diff_eq!(got, expect, epsilon = 1e-10);
        assert!((got - 29.92).abs() < 0.05, "{got}");
    }

    #[test]
    fn hoeffding_bound_edges() {
        let f = Family::gaussian();
        // theta equal to both hypotheses only if theta0 = theta1 = theta
        assert_eq!(hoeffding_bound(f, 0.3, 0.3, 0.3, 0.05, 0.05).unwrap(), f64::INFINITY);
        // continuity as alpha + beta -> 1 along a grid
        let mut prev = f64::INFINITY;
        for ab in [0.2, 0.4, 0.6, 0.8, 0.9] {
            let v = hoeffding_bound(f, 0.25, 0.0, 0.5, ab / 2.0, ab / 2.0).unwrap();
            assert!(v.is_finite() && v >= 0.0);
            assert!(v <= prev + 1e-12, "bound not decreasing in error budget");
            prev = v;
        }
        // easy alternatives need fewer samples than the midpoint
        let mid = hoeffding_bound(f, 0.25, 0.0, 0.5, 0.05, 0.05).unwrap();
        let edge = hoeffding_bound(f, 0.5, 0.0, 0.5, 0.05, 0.05).unwrap();
        assert!(edge < mid, "{edge} vs {mid}");
        assert!(hoeffding_bound(f, 0.25, 0.0, 0.5, 0.6, 0.5).is_err());
    }

    #[test]
    fn n_opt_values() {
        let f = Family::gaussian();
        // at theta = u1 the second branch is infinite
        let v = n_opt(f, 0.5, 0.0, 0.5, 0.05, 0.05).unwrap();
        assert_abs_diff_eq!(v, -(0.05f64).ln() / 0.125, epsilon = 1e-10);
        // symmetric midpoint: both branches equal
        let v = n_opt(f, 0.25, 0.0, 0.5, 0.05, 0.05).unwrap();
        assert_abs_diff_eq!(v, -(0.05f64).ln() / 0.03125, epsilon = 1e-10);
        // at theta = u0 the result is driven by the second branch
        let v = n_opt(f, 0.0, 0.0, 0.5, 0.05, 0.05).unwrap();
        assert_abs_diff_eq!(v, -(0.05f64).ln() / 0.125, epsilon = 1e-10);
    }

    #[test]
    fn stage2_size_clamps() {
        let mut d = gaussian_design();
        d.m = 10;
        d.big_m = 50;
        // contrived n_opt: use theta giving a mid-range value
        // I(theta, 0) = theta^2/2; pick theta so (1.1) n_opt = 26.4 -> 27
        // n_opt = 24 -> |log a|/I = 24 with both branches; emulate via direct clamp check
        assert_eq!(super::clamp_stage(24.0, 10, 50, 0.1), 27);
        assert_eq!(super::clamp_stage(1e12, 10, 50, 0.1), 50);
        assert_eq!(super::clamp_stage(0.3, 10, 50, 0.1), 10);
        // through the public API: theta far out -> m; theta at u0 takes the
        // finite futility branch -log(0.05)/0.125 = 23.97 -> ceil(1.1 x) = 27;
        // the midpoint needs -log(0.05)/0.03125 = 95.9 -> capped at M
        let far = stage2_size(&d, 5.0).unwrap();
        assert_eq!(far, 10);
        let at_null = stage2_size(&d, 0.0).unwrap();
        assert_eq!(at_null, 27);
        let midpoint = stage2_size(&d, 0.25).unwrap();
        assert_eq!(midpoint, 50);
    }

    #[test]
    fn signed_root_cases() {
        assert_eq!(signed_root(0.0, 5, 1.0, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(signed_root(2.0, 1, 1.0, 0.5).unwrap(), 2.0, epsilon = 1e-12);
        assert!(signed_root(-0.1, 1, 0.0, 0.0).is_err());
        // Gaussian identity: l = sqrt(n) (xbar - u_j)
        let f = Family::gaussian();
        let (n, xbar, u) = (16u64, 0.8, 0.3);
        let lam = f.kl(xbar, u).unwrap();
        let l = signed_root(lam, n, xbar, u).unwrap();
        assert_abs_diff_eq!(l, (n as f64).sqrt() * (xbar - u), epsilon = 1e-10);
    }

    #[test]
    fn three_stage_rule_traces() {
        let d = gaussian_design();
        let th = Thresholds { b: 2.0, b_tilde: 2.0, c: 1.5 };
        // stage-1 rejection: mean far above u1
        let data = vec![2.0; 100];
        let out = run_three_stage(&d, &th, &data).unwrap();
        assert_eq!(out.stage, 1);
        assert_eq!(out.n_total, 20);
        assert_eq!(out.decision, Decision::Reject);
        assert_eq!(out.trigger, Trigger::EarlyReject);
        // stage-1 futility: mean far below u0
        let data = vec![-2.0; 100];
        let out = run_three_stage(&d, &th, &data).unwrap();
        assert_eq!(out.stage, 1);
        assert_eq!(out.decision, Decision::Accept);
        assert_eq!(out.trigger, Trigger::EarlyFutility);
        // hand check of the stage-1 rejection boundary: need
        // 20 (xbar)^2 / 2 >= b = 2 -> xbar >= sqrt(0.2)
        let xbar = (0.2f64).sqrt() + 1e-9;
        let mut data = vec![xbar; 20];
        data.extend(vec![0.0; 80]);
        let out = run_three_stage(&d, &th, &data).unwrap();
        assert_eq!((out.stage, out.decision), (1, Decision::Reject));
        let xbar = (0.2f64).sqrt() - 1e-6;
        let mut data = vec![xbar; 20];
        data.extend(vec![0.0; 80]);
        let out = run_three_stage(&d, &th, &data).unwrap();
        assert!(out.stage > 1);
    }

    #[test]
    fn three_stage_admissible_sizes_and_short_stream() {
        let d = gaussian_design();
        let th = Thresholds { b: 3.0, b_tilde: 3.0, c: 2.0 };
        let mut rng = sub_rng(3, 0, 0);
        for _ in 0..50 {
            let data: Vec<f64> = (0..100).map(|_| d.family.sample(0.2, &mut rng)).collect();
            let out = run_three_stage(&d, &th, &data).unwrap();
            assert!(out.n_total >= d.m && out.n_total <= d.big_m);
            match out.stage {
                1 => assert_eq!(out.n_total, d.m),
                2 | 3 => {}
                s => panic!("stage {s}"),
            }
        }
        assert!(run_three_stage(&d, &th, &[0.0; 10]).is_err());
    }

    #[test]
    fn stage2_monotone_in_distance_from_null() {
        let d = gaussian_design();
        let mut prev = u64::MAX;
        for k in 0..8 {
            let theta_hat = 0.5 + 0.25 * k as f64;
            let n2 = stage2_size(&d, theta_hat).unwrap();
            assert!(n2 <= prev, "n2 not nonincreasing at {theta_hat}");
            prev = n2;
        }
    }

    #[test]
    fn calibrated_monte_carlo_self_consistent() {
        let d = gaussian_design();
        let th = calibrate_monte_carlo(&d, 4000, 11).unwrap();
        assert!(th.b > 0.0 && th.b_tilde > 0.0 && th.c > 0.0);
        // verification with a fresh seed: type I error near alpha
        let mut rejects = 0u32;
        let reps = 4000u64;
        for rep in 0..reps {
            let mut rng = sub_rng(99, rep, 0);
            let data: Vec<f64> = (0..d.big_m).map(|_| d.family.sample(d.u0, &mut rng)).collect();
            let out = run_three_stage(&d, &th, &data).unwrap();
            if out.decision == Decision::Reject {
                rejects += 1;
            }
        }
        let rate = f64::from(rejects) / reps as f64;
        let se = (d.alpha * (1.0 - d.alpha) / reps as f64).sqrt();
        assert!(rate <= d.alpha + 4.0 * se, "type I {rate} vs alpha {}", d.alpha);
        assert!(rate >= d.alpha - 5.0 * se, "type I {rate} far below alpha");
    }

    #[test]
    fn calibration_methods_agree_roughly() {
        let d = gaussian_design();
        let mc = calibrate_monte_carlo(&d, 20_000, 7).unwrap();
        let na = calibrate_normal_approx(&d, 20_000, 7).unwrap();
        for (a, b, name) in [(mc.b, na.b, "b"), (mc.b_tilde, na.b_tilde, "b_tilde"), (mc.c, na.c, "c")] {
            let rel = (a - b).abs() / a.abs().max(1e-9);
            assert!(rel <= 0.10, "{name}: monte-carlo {a} vs normal-approx {b}");
        }
    }

    #[test]
    fn calibration_rejects_bad_eps() {
        let mut d = gaussian_design();
        d.eps = 1.0;
        assert!(calibrate_monte_carlo(&d, 1000, 1).is_err());
        d.eps = 0.0;
        assert!(calibrate_normal_approx(&d, 1000, 1).is_err());
    }

    #[test]
    fn four_stage_traces_and_reduction() {
        let d = gaussian_design();
        let d4 = FourStageDesign { base: d, u2: d.u1, m_prime: d.big_m, m_tilde: d.big_m };
        d4.validate().unwrap();
        let th = Thresholds { b: 3.0, b_tilde: 3.0, c: 2.0 };
        let mut rng = sub_rng(17, 0, 0);
        for rep in 0..300 {
            let theta = match rep % 3 {
                0 => 0.0,
                1 => 0.25,
                _ => 0.5,
            };
            let data: Vec<f64> = (0..100).map(|_| d.family.sample(theta, &mut rng)).collect();
            let three = run_three_stage(&d, &th, &data).unwrap();
            let four = run_four_stage(&d4, &th, &data).unwrap();
            assert_eq!(three.decision, four.decision, "rep {rep}");
            assert_eq!(three.n_total, four.n_total, "rep {rep}");
        }
    }

    #[test]
    fn four_stage_futility_and_raise() {
        let d = gaussian_design();
        let d4 = FourStageDesign { base: d, u2: 0.3, m_prime: 150, m_tilde: 200 };
        let th = Thresholds { b: 3.0, b_tilde: 3.0, c: 2.0 };
        // persistently negative mean: futility against u2 at stage 1
        let out = run_four_stage(&d4, &th, &vec![-2.0; 200]).unwrap();
        assert_eq!((out.stage, out.trigger), (1, Trigger::EarlyFutility));
        assert_eq!(out.decision, Decision::Accept);
        // borderline mean near u2: the design may extend past M
        let mut rng = sub_rng(23, 0, 0);
        let mut seen_past_m = false;
        for _ in 0..200 {
            let data: Vec<f64> = (0..200).map(|_| d.family.sample(0.3, &mut rng)).collect();
            let out = run_four_stage(&d4, &th, &data).unwrap();
            assert!(out.n_total >= d.m && out.n_total <= d4.m_tilde);
            if out.n_total > d.big_m {
                seen_past_m = true;
            }
        }
        assert!(seen_past_m, "cap raise never exercised");
        // invalid geometry rejected
        let bad = FourStageDesign { base: d, u2: 0.7, m_prime: 150, m_tilde: 200 };
        assert!(bad.validate().is_err());
        let bad = FourStageDesign { base: d, u2: 0.3, m_prime: 50, m_tilde: 200 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn group_2sprt_traces() {
        let f = Family::gaussian();
        // symmetric case: theta = 1, theta0 = 0, theta1 = 2
        // reject crossing: S_n - n/2 >= b; accept crossing: -S_n + 3n/2 >= bt
        let groups = [5u64, 10, 15];
        let data = vec![1.5; 15];
        // S_5 = 7.5, 7.5 - 2.5 = 5 >= 4 -> reject at first interim
        let out = run_group_2sprt(f, 1.0, 0.0, 2.0, 4.0, 4.0, &groups, &data).unwrap();
        assert_eq!((out.stage, out.decision), (1, Decision::Reject));
        // infinite interim thresholds: runs to the last group; terminal sign
        // of (theta1 - theta0) S - n (b(theta1) - b(theta0)) = 2 S_15 - 30
        let out = run_group_2sprt(f, 1.0, 0.0, 2.0, f64::INFINITY, f64::INFINITY, &groups, &data).unwrap();
        assert_eq!((out.stage, out.n_total), (3, 15));
        assert_eq!(out.decision, Decision::Reject);
        // tie at the terminal analysis accepts
        let data = vec![1.0; 15];
        let out = run_group_2sprt(f, 1.0, 0.0, 2.0, f64::INFINITY, f64::INFINITY, &groups, &data).unwrap();
        assert_eq!(out.decision, Decision::Accept);
        assert_eq!(out.trigger, Trigger::FinalAccept);
        // futility crossing
        let data = vec![-1.0; 15];
        let out = run_group_2sprt(f, 1.0, 0.0, 2.0, 4.0, 4.0, &groups, &data).unwrap();
        assert_eq!((out.stage, out.decision), (1, Decision::Accept));
    }

    #[test]
    fn group_2sprt_mean_sample_size_bracketing() {
        // with small error targets the stopping group should bracket the
        // information bound m_{a,b}(theta)
        let f = Family::gaussian();
        let (theta, theta0, theta1) = (1.0, 0.0, 2.0);
        let alpha = 0.001f64;
        let b = alpha.ln().abs();
        let groups: Vec<u64> = (1..=40).map(|i| i * 5).collect();
        let (nu, m_ab) = thma1_reference(&groups, alpha, alpha, 0.1, f, theta, theta0, theta1).unwrap();
        let mut w = crate::sim::Welford::new();
        for rep in 0..2000 {
            let mut rng = sub_rng(31, rep, 0);
            let data: Vec<f64> = (0..200).map(|_| f.sample(theta, &mut rng)).collect();
            let out = run_group_2sprt(f, theta, theta0, theta1, b, b, &groups, &data).unwrap();
            w.push(out.n_total as f64);
        }
        let lo = groups[nu.saturating_sub(2)] as f64;
        let hi = groups[(nu + 1).min(groups.len() - 1)] as f64;
        assert!(w.mean() >= lo - 3.0 * w.std_error() && w.mean() <= hi + 3.0 * w.std_error(),
            "mean {} not within [{lo}, {hi}] around m_ab {m_ab}", w.mean());
    }

    #[test]
    fn thma1_reference_cases() {
        let f = Family::gaussian();
        // symmetric: m = |log alpha| / I with I = 0.5
        let groups = [5u64, 10, 15, 20];
        let (nu, m) = thma1_reference(&groups, 0.05, 0.05, 0.0, f, 1.0, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(m, -(0.05f64).ln() / 0.5, epsilon = 1e-10);
        assert_eq!(nu, 2); // m ~ 5.99, first group >= 5.99 is 10
        // no qualifying group: falls back to the last index
        let groups = [1u64, 2, 3];
        let (nu, _) = thma1_reference(&groups, 0.05, 0.05, 0.0, f, 1.0, 0.0, 2.0).unwrap();
        assert_eq!(nu, 3);
    }
}
