//! First-passage simulation: `renewal`.
//!
//! Boundary kinds:
//!  - `linear`: S_n - n u > c, simulated over the `b_grid` of intercepts,
//!    with an overshoot-corrected expectation per intercept and the fitted
//!    sqrt-term coefficient when the grid has at least two points;
//!  - `power`: S_n > lambda n^alpha over the `b_grid` of scale factors;
//!  - `general`: one crossing of S_n - H(W_n + n eps) > b on a CSV stream
//!    whose first column is the increment and remaining columns the W row.

use seqlab_core::error::{Error, Result};
use seqlab_core::renewal::{
    corrected_expectation, cross_general, cross_power, estimate_rho, fit_c0, linear_passage_stats,
    BoundaryH, DEFAULT_MAX_N,
};
use seqlab_core::sim::{replicate, SimReport};

use crate::ctx::{kv_line, render_reports, report_format, Ctx};

const DEFAULT_REPS: u64 = 10_000;

pub fn renewal(ctx: &Ctx) -> Result<String> {
    let boundary = ctx
        .cfg
        .get_str("boundary")
        .unwrap_or_else(|| "linear".to_string());
    match boundary.as_str() {
        "linear" => linear(ctx),
        "power" => power(ctx),
        "general" => general(ctx),
        other => Err(Error::config(format!("unknown boundary kind '{other}'"))),
    }
}

fn linear(ctx: &Ctx) -> Result<String> {
    let family = ctx.family()?;
    let theta = ctx.cfg.req_f64("theta")?;
    let u = ctx.cfg.get_f64("u")?.unwrap_or(0.0);
    let grid = ctx
        .cfg
        .get_f64_list("b_grid")?
        .ok_or_else(|| Error::config("missing required config key 'b_grid'".to_string()))?;
    let max_n = ctx.cfg.get_u64("max_n")?.unwrap_or(DEFAULT_MAX_N);
    let reps = ctx.reps(DEFAULT_REPS)?;
    let seed = ctx.seed()?;
    let rho_reps = ctx.cfg.get_u64("rho_reps")?.unwrap_or(reps);
    let mu = family.b1(theta) - u;
    if !(mu > 0.0) {
        return Err(Error::config(format!(
            "drift {mu} above the slope must be positive"
        )));
    }
    let rho = estimate_rho(family, theta, u, rho_reps, seed, max_n)?;
    let mut reports: Vec<SimReport> = Vec::new();
    let mut passages: Vec<(f64, f64)> = Vec::new();
    for (bi, &b) in grid.iter().enumerate() {
        if !(b >= 0.0) {
            return Err(Error::config(format!("intercept b={b} must be nonnegative")));
        }
        let stats = linear_passage_stats(family, theta, u, b, reps, seed.wrapping_add(bi as u64), max_n)?;
        let mean_tau = stats
            .iter()
            .find(|r| r.name == "mean_tau")
            .map(|r| r.estimate)
            .unwrap_or(f64::NAN);
        passages.push((b, mean_tau));
        for r in &stats {
            reports.push(SimReport {
                name: format!("{}_b{}", r.name, b),
                ..r.clone()
            });
        }
        reports.push(SimReport {
            name: format!("corrected_e_tau_b{b}"),
            estimate: corrected_expectation(b, mu, rho.rho_plus, None)?,
            std_error: 0.0,
            reps,
            seed,
            wall_time: 0.0,
        });
    }
    reports.push(SimReport {
        name: "rho_plus".to_string(),
        estimate: rho.rho_plus,
        std_error: rho.rho_se,
        reps: rho.reps,
        seed,
        wall_time: 0.0,
    });
    reports.push(SimReport {
        name: "mean_ladder_overshoot".to_string(),
        estimate: rho.mean_overshoot,
        std_error: rho.overshoot_se,
        reps: rho.reps,
        seed,
        wall_time: 0.0,
    });
    let distinct = {
        let mut bs: Vec<f64> = passages.iter().map(|p| p.0).collect();
        bs.sort_by(f64::total_cmp);
        bs.dedup();
        bs.len()
    };
    if distinct >= 2 {
        reports.push(SimReport {
            name: "c0_hat".to_string(),
            estimate: fit_c0(&passages, mu, rho.rho_plus)?,
            std_error: 0.0,
            reps,
            seed,
            wall_time: 0.0,
        });
    }
    render_reports(&reports, report_format(&ctx.cfg)?)
}

fn power(ctx: &Ctx) -> Result<String> {
    let family = ctx.family()?;
    let theta = ctx.cfg.req_f64("theta")?;
    let alpha = ctx.cfg.get_f64("alpha")?.unwrap_or(0.0);
    let grid = ctx
        .cfg
        .get_f64_list("b_grid")?
        .ok_or_else(|| Error::config("missing required config key 'b_grid'".to_string()))?;
    let max_n = ctx.cfg.get_u64("max_n")?.unwrap_or(DEFAULT_MAX_N);
    let reps = ctx.reps(DEFAULT_REPS)?;
    let seed = ctx.seed()?;
    let mut reports: Vec<SimReport> = Vec::new();
    for (li, &lambda) in grid.iter().enumerate() {
        let stats = replicate(reps, seed.wrapping_add(li as u64), |_rep, rng| {
            let stream = std::iter::repeat_with(|| family.sample(theta, rng));
            let crossing = cross_power(stream, lambda, alpha, max_n)?;
            if crossing.truncated {
                return Err(Error::numeric(format!(
                    "no boundary crossing within {max_n} steps at lambda={lambda}"
                )));
            }
            Ok(vec![
                ("mean_tau".to_string(), crossing.tau as f64),
                ("mean_s_tau".to_string(), crossing.s_tau),
                ("mean_overshoot".to_string(), crossing.overshoot),
            ])
        })?;
        for r in &stats {
            reports.push(SimReport {
                name: format!("{}_lambda{}", r.name, lambda),
                ..r.clone()
            });
        }
    }
    render_reports(&reports, report_format(&ctx.cfg)?)
}

fn general(ctx: &Ctx) -> Result<String> {
    let h = match ctx
        .cfg
        .get_str("h")
        .unwrap_or_else(|| "zero".to_string())
        .as_str()
    {
        "zero" => BoundaryH::Zero,
        "min" => BoundaryH::Min,
        other => return Err(Error::config(format!("unknown boundary transform '{other}'"))),
    };
    let b = ctx.cfg.req_f64("b")?;
    let eps = ctx.cfg.get_f64("eps")?.unwrap_or(0.0);
    let max_n = ctx.cfg.get_u64("max_n")?.unwrap_or(DEFAULT_MAX_N);
    let rows = ctx.matrix()?;
    let stream = rows.iter().map(|row| {
        let (x, w) = row.split_first().expect("validated nonempty row");
        (*x, w.to_vec())
    });
    let crossing = cross_general(stream, h, |_| eps, b, max_n)?;
    let mut out = String::new();
    out.push_str(&format!("tau = {}\n", crossing.crossing.tau));
    out.push_str(&kv_line("s_tau", crossing.crossing.s_tau));
    out.push_str(&kv_line("overshoot", crossing.crossing.overshoot));
    out.push_str(&kv_line("boundary_value", crossing.crossing.boundary_value));
    out.push_str(&format!(
        "truncated = {}\n",
        u8::from(crossing.crossing.truncated)
    ));
    for (i, w) in crossing.w_tau.iter().enumerate() {
        out.push_str(&kv_line(&format!("w_tau_{}", i + 1), *w));
    }
    Ok(out)
}
