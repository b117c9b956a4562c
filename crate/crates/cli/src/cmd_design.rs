//! Multi-stage designs: `design-3stage`, `design-4stage`, `groupseq-2sprt`,
//! `calibrate`.
//!
//! Threshold records are written as `key = value` text. When an `oc_grid`
//! of parameter values is configured, an operating-characteristic table
//! (power, expected sample size, stage distribution per theta) is written as
//! CSV to the `oc_out` path.

use seqlab_core::error::{Error, Result};
use seqlab_core::expfam::Family;
use seqlab_core::groupseq::{
    calibrate_thresholds, run_four_stage_sums, run_group_2sprt, run_three_stage_sums,
    CalibrationMethod, Decision, DesignParams, FourStageDesign, StageOutcome, Thresholds, Trigger,
};
use seqlab_core::io::fmt_g;
use seqlab_core::sim::replicate;

use crate::ctx::{kv_line, render_reports, report_format, Ctx};

const DEFAULT_CALIB_REPS: u64 = 20_000;
const DEFAULT_OC_REPS: u64 = 10_000;

fn design_params(ctx: &Ctx) -> Result<DesignParams> {
    let d = DesignParams {
        family: ctx.family()?,
        u0: ctx.cfg.req_f64("u0")?,
        u1: ctx.cfg.req_f64("u1")?,
        alpha: ctx.cfg.req_f64("alpha")?,
        alpha_tilde: ctx.cfg.req_f64("alpha_tilde")?,
        m: ctx.cfg.req_u64("m")?,
        big_m: ctx.cfg.req_u64("big_m")?,
        rho_m: ctx.cfg.get_f64("rho_m")?.unwrap_or(0.1),
        eps: ctx.cfg.get_f64("eps")?.unwrap_or(0.5),
        eps_tilde: ctx.cfg.get_f64("eps_tilde")?.unwrap_or(0.5),
    };
    d.validate()?;
    Ok(d)
}

fn method(ctx: &Ctx) -> Result<CalibrationMethod> {
    let reps = ctx.cfg.get_u64("calib_reps")?.unwrap_or(DEFAULT_CALIB_REPS);
    let seed = ctx.seed()?;
    match ctx
        .cfg
        .get_str("method")
        .unwrap_or_else(|| "mc".to_string())
        .as_str()
    {
        "mc" => Ok(CalibrationMethod::MonteCarlo { reps, seed }),
        "normal" => Ok(CalibrationMethod::NormalApprox { reps, seed }),
        other => Err(Error::config(format!("unknown calibration method '{other}'"))),
    }
}

/// Explicit `b`, `b_tilde`, `c` keys when present, calibration otherwise.
fn thresholds(ctx: &Ctx, design: &DesignParams) -> Result<(Thresholds, bool)> {
    let b = ctx.cfg.get_f64("b")?;
    let bt = ctx.cfg.get_f64("b_tilde")?;
    let c = ctx.cfg.get_f64("c")?;
    match (b, bt, c) {
        (Some(b), Some(b_tilde), Some(c)) => {
            let t = Thresholds { b, b_tilde, c };
            t.validate()?;
            Ok((t, false))
        }
        (None, None, None) => Ok((calibrate_thresholds(design, method(ctx)?)?, true)),
        _ => Err(Error::config(
            "thresholds b, b_tilde, c must be given together or all omitted".to_string(),
        )),
    }
}

fn design_kv(design: &DesignParams, thr: &Thresholds, calibrated: bool) -> String {
    let mut out = String::new();
    out.push_str(&format!("family = {}\n", design.family.name));
    out.push_str(&kv_line("u0", design.u0));
    out.push_str(&kv_line("u1", design.u1));
    out.push_str(&kv_line("alpha", design.alpha));
    out.push_str(&kv_line("alpha_tilde", design.alpha_tilde));
    out.push_str(&format!("m = {}\n", design.m));
    out.push_str(&format!("big_m = {}\n", design.big_m));
    out.push_str(&kv_line("rho_m", design.rho_m));
    out.push_str(&kv_line("eps", design.eps));
    out.push_str(&kv_line("eps_tilde", design.eps_tilde));
    out.push_str(&format!("calibrated = {}\n", u8::from(calibrated)));
    out.push_str(&kv_line("b", thr.b));
    out.push_str(&kv_line("b_tilde", thr.b_tilde));
    out.push_str(&kv_line("c", thr.c));
    out
}

fn outcome_metrics(out: &StageOutcome, stages: u8) -> Vec<(String, f64)> {
    let mut row = vec![
        (
            "power".to_string(),
            f64::from(out.decision == Decision::Reject),
        ),
        ("expected_n".to_string(), out.n_total as f64),
    ];
    for s in 1..=stages {
        row.push((format!("p_stage{s}"), f64::from(out.stage == s)));
    }
    row
}

/// Monte Carlo operating characteristics on a theta grid, one CSV row per
/// grid point.
fn oc_table<F>(ctx: &Ctx, stages: u8, run_at: F) -> Result<String>
where
    F: Fn(f64, u64, u64) -> Result<Vec<seqlab_core::sim::SimReport>>,
{
    let grid = ctx
        .cfg
        .get_f64_list("oc_grid")?
        .expect("caller checked oc_grid presence");
    let reps = ctx.reps(DEFAULT_OC_REPS)?;
    let seed = ctx.seed()?;
    let mut header = String::from("theta,power,expected_n");
    for s in 1..=stages {
        header.push_str(&format!(",p_stage{s}"));
    }
    header.push('\n');
    let mut out = header;
    for (gi, &theta) in grid.iter().enumerate() {
        let reports = run_at(theta, reps, seed.wrapping_add(gi as u64))?;
        let field = |name: &str| -> f64 {
            reports
                .iter()
                .find(|r| r.name == name)
                .map(|r| r.estimate)
                .unwrap_or(0.0)
        };
        out.push_str(&fmt_g(theta));
        out.push_str(&format!(",{},{}", fmt_g(field("power")), fmt_g(field("expected_n"))));
        for s in 1..=stages {
            out.push_str(&format!(",{}", fmt_g(field(&format!("p_stage{s}")))));
        }
        out.push('\n');
    }
    Ok(out)
}

fn write_side_file(ctx: &Ctx, key: &str, body: &str) -> Result<()> {
    let path = ctx.cfg.req_str(key)?;
    std::fs::write(&path, body).map_err(|e| Error::data(format!("cannot write {path}: {e}")))
}

/// Incremental sufficient-statistic closure: draws observations lazily so a
/// replication only samples as far as the design actually looks.
fn sum_sampler<'a>(
    family: Family,
    theta: f64,
    rng: &'a mut rand_chacha::ChaCha8Rng,
) -> impl FnMut(u64) -> Result<f64> + 'a {
    let mut sum = 0.0;
    let mut drawn = 0u64;
    move |n: u64| {
        while drawn < n {
            sum += family.sample(theta, rng);
            drawn += 1;
        }
        Ok(sum)
    }
}

pub fn design_three_stage(ctx: &Ctx) -> Result<String> {
    let design = design_params(ctx)?;
    let (thr, calibrated) = thresholds(ctx, &design)?;
    if ctx.cfg.get_str("oc_grid").is_some() {
        let table = oc_table(ctx, 3, |theta, reps, seed| {
            if !design.family.contains(theta) {
                return Err(Error::domain(format!(
                    "oc_grid value {theta} outside the {} domain",
                    design.family.name
                )));
            }
            replicate(reps, seed, |_rep, rng| {
                let out =
                    run_three_stage_sums(&design, &thr, sum_sampler(design.family, theta, rng))?;
                Ok(outcome_metrics(&out, 3))
            })
        })?;
        write_side_file(ctx, "oc_out", &table)?;
    }
    Ok(design_kv(&design, &thr, calibrated))
}

pub fn design_four_stage(ctx: &Ctx) -> Result<String> {
    let base = design_params(ctx)?;
    let d4 = FourStageDesign {
        base,
        u2: ctx.cfg.get_f64("u2")?.unwrap_or(base.u1),
        m_prime: ctx.cfg.get_u64("m_prime")?.unwrap_or(base.big_m),
        m_tilde: ctx.cfg.get_u64("m_tilde")?.unwrap_or(base.big_m),
    };
    d4.validate()?;
    // thresholds come from the three-stage reduction of the design
    let (thr, calibrated) = thresholds(ctx, &base)?;
    if ctx.cfg.get_str("oc_grid").is_some() {
        let table = oc_table(ctx, 4, |theta, reps, seed| {
            if !base.family.contains(theta) {
                return Err(Error::domain(format!(
                    "oc_grid value {theta} outside the {} domain",
                    base.family.name
                )));
            }
            replicate(reps, seed, |_rep, rng| {
                let out = run_four_stage_sums(&d4, &thr, sum_sampler(base.family, theta, rng))?;
                Ok(outcome_metrics(&out, 4))
            })
        })?;
        write_side_file(ctx, "oc_out", &table)?;
    }
    let mut out = design_kv(&base, &thr, calibrated);
    out.push_str(&kv_line("u2", d4.u2));
    out.push_str(&format!("m_prime = {}\n", d4.m_prime));
    out.push_str(&format!("m_tilde = {}\n", d4.m_tilde));
    Ok(out)
}

pub fn calibrate(ctx: &Ctx) -> Result<String> {
    let design = design_params(ctx)?;
    let thr = calibrate_thresholds(&design, method(ctx)?)?;
    Ok(design_kv(&design, &thr, true))
}

fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::Reject => "reject",
        Decision::Accept => "accept",
    }
}

fn trigger_name(t: Trigger) -> &'static str {
    match t {
        Trigger::EarlyReject => "early_reject",
        Trigger::EarlyFutility => "early_futility",
        Trigger::FinalReject => "final_reject",
        Trigger::FinalAccept => "final_accept",
    }
}

pub fn group_2sprt(ctx: &Ctx) -> Result<String> {
    let family = ctx.family()?;
    let theta = ctx.cfg.req_f64("theta")?;
    let theta0 = ctx.cfg.req_f64("theta0")?;
    let theta1 = ctx.cfg.req_f64("theta1")?;
    let b = ctx.cfg.req_f64("b")?;
    let b_tilde = ctx.cfg.req_f64("b_tilde")?;
    let groups = ctx
        .cfg
        .get_u64_list("group_sizes")?
        .ok_or_else(|| Error::config("missing required config key 'group_sizes'".to_string()))?;
    if ctx.has_input() {
        let data = ctx.series()?;
        let out = run_group_2sprt(family, theta, theta0, theta1, b, b_tilde, &groups, &data)?;
        let mut s = String::new();
        s.push_str(&format!("stage = {}\n", out.stage));
        s.push_str(&format!("n_total = {}\n", out.n_total));
        s.push_str(&format!("decision = {}\n", decision_name(out.decision)));
        s.push_str(&format!("trigger = {}\n", trigger_name(out.trigger)));
        return Ok(s);
    }
    let theta_sim = ctx.cfg.get_f64("theta_sim")?.unwrap_or(theta);
    let reps = ctx.reps(DEFAULT_OC_REPS)?;
    let n_max = *groups.last().expect("validated nonempty") as usize;
    let reports = replicate(reps, ctx.seed()?, |_rep, rng| {
        let data: Vec<f64> = (0..n_max).map(|_| family.sample(theta_sim, rng)).collect();
        let out = run_group_2sprt(family, theta, theta0, theta1, b, b_tilde, &groups, &data)?;
        Ok(vec![
            (
                "reject_rate".to_string(),
                f64::from(out.decision == Decision::Reject),
            ),
            ("mean_n".to_string(), out.n_total as f64),
            ("mean_stage".to_string(), f64::from(out.stage)),
        ])
    })?;
    render_reports(&reports, report_format(&ctx.cfg)?)
}
