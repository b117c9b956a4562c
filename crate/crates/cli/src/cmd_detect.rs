//! Changepoint detectors: `cusum`, `sr`, `shiryaev`, `wl-cusum`, `wl-mix`,
//! `isolate`.
//!
//! Data mode emits one `n,statistic,decision` row per observation, stopping
//! at the first alarm. Simulation mode (single detectors) estimates
//! run-length and delay metrics by Monte Carlo.

use seqlab_core::changepoint::{
    cusum_update, detect_isolate, estimate_metrics, sr_update, CusumState, DetectorKind,
    DetectorSpec, MetricsConfig, MixtureWindow, ModelSpec, SrState, WindowState,
};
use seqlab_core::error::{Error, Result};
use seqlab_core::io::fmt_g;

use crate::ctx::{render_reports, report_format, Ctx};

const DEFAULT_MAX_N: u64 = 100_000;
const DEFAULT_REPS: u64 = 10_000;

fn alarm_row(out: &mut String, n: u64, stat: f64, alarmed: bool) {
    out.push_str(&format!("{n},{},{}\n", fmt_g(stat), u8::from(alarmed)));
}

fn detector_kind(name: &str, ctx: &Ctx) -> Result<DetectorKind> {
    Ok(match name {
        "cusum" => DetectorKind::Cusum,
        "sr" => DetectorKind::Sr,
        "shiryaev" => DetectorKind::Shiryaev {
            p: ctx.cfg.req_f64("p")?,
        },
        "wl-cusum" => DetectorKind::WlCusum {
            m: ctx.cfg.req_u64("m")? as usize,
        },
        other => return Err(Error::config(format!("unknown detector '{other}'"))),
    })
}

pub fn single_detector(ctx: &Ctx, name: &str) -> Result<String> {
    let family = ctx.family()?;
    let theta_pre = ctx.cfg.req_f64("theta_pre")?;
    let theta_post = ctx.cfg.req_f64("theta_post")?;
    let kind = detector_kind(name, ctx)?;
    let threshold = ctx.cfg.req_f64("threshold")?;
    let r0 = ctx.cfg.get_f64("r0")?.unwrap_or(0.0);
    let model = ModelSpec {
        family,
        theta_pre,
        theta_post,
    };
    if ctx.has_input() {
        let data = ctx.series()?;
        let mut out = String::from("n,statistic,decision\n");
        let mut cusum = CusumState::new();
        let mut sr = match kind {
            DetectorKind::Shiryaev { p } => SrState::new(p, r0)?,
            _ => SrState::new(0.0, r0)?,
        };
        let mut window = match kind {
            DetectorKind::WlCusum { m } => Some(WindowState::new(m)?),
            _ => None,
        };
        for (idx, &x) in data.iter().enumerate() {
            let n = (idx + 1) as u64;
            let z = family.log_density_ratio(theta_post, theta_pre, x)?;
            let stat = match kind {
                DetectorKind::Cusum => {
                    cusum = cusum_update(cusum, z);
                    Some(cusum.w)
                }
                DetectorKind::Sr | DetectorKind::Shiryaev { .. } => {
                    sr = sr_update(sr, z);
                    Some(sr.r)
                }
                DetectorKind::WlCusum { .. } => window.as_mut().unwrap().push(z),
            };
            match stat {
                None => alarm_row(&mut out, n, f64::NAN, false),
                Some(s) => {
                    let alarmed = s >= threshold;
                    alarm_row(&mut out, n, s, alarmed);
                    if alarmed {
                        break;
                    }
                }
            }
        }
        return Ok(out);
    }
    let det = DetectorSpec {
        kind,
        threshold,
        r0,
    };
    let cfg = MetricsConfig {
        nu_list: ctx.cfg.get_u64_list("nu_list")?.unwrap_or_default(),
        k_list: ctx.cfg.get_u64_list("k_list")?.unwrap_or_default(),
        max_n: ctx.cfg.get_u64("max_n")?.unwrap_or(DEFAULT_MAX_N),
    };
    let reports = estimate_metrics(&det, &model, &cfg, ctx.reps(DEFAULT_REPS)?, ctx.seed()?)?;
    render_reports(&reports, report_format(&ctx.cfg)?)
}

pub fn wl_mix(ctx: &Ctx) -> Result<String> {
    let family = ctx.family()?;
    let theta_pre = ctx.cfg.req_f64("theta_pre")?;
    let thetas = ctx
        .cfg
        .get_f64_list("thetas")?
        .ok_or_else(|| Error::config("missing required config key 'thetas'".to_string()))?;
    let weights = match ctx.cfg.get_f64_list("weights")? {
        Some(w) => w,
        None => vec![1.0 / thetas.len() as f64; thetas.len()],
    };
    if weights.len() != thetas.len() {
        return Err(Error::config(format!(
            "{} mixture weights for {} parameter atoms",
            weights.len(),
            thetas.len()
        )));
    }
    let m = ctx.cfg.req_u64("m")? as usize;
    let threshold = ctx.cfg.req_f64("threshold")?;
    let mut mixture = MixtureWindow::new(m, &weights)?;
    let data = ctx.series()?;
    let mut out = String::from("n,statistic,decision\n");
    for (idx, &x) in data.iter().enumerate() {
        let n = (idx + 1) as u64;
        let zs: Vec<f64> = thetas
            .iter()
            .map(|&t| family.log_density_ratio(t, theta_pre, x))
            .collect::<Result<_>>()?;
        match mixture.push(&zs)? {
            None => alarm_row(&mut out, n, f64::NAN, false),
            Some(s) => {
                let alarmed = s >= threshold;
                alarm_row(&mut out, n, s, alarmed);
                if alarmed {
                    break;
                }
            }
        }
    }
    Ok(out)
}

pub fn isolate(ctx: &Ctx) -> Result<String> {
    let m = ctx.cfg.req_u64("m")? as usize;
    let a = ctx.cfg.req_f64("a")?;
    let rows = ctx.matrix()?;
    let n_hyp = match ctx.cfg.get_u64("n_hyp")? {
        Some(n) => n as usize,
        None => rows.first().map(Vec::len).unwrap_or(0),
    };
    let max_n = ctx.cfg.get_u64("max_n")?.unwrap_or(rows.len() as u64);
    let alarm = detect_isolate(n_hyp, m, a, rows.iter().cloned(), max_n)?;
    let mut out = String::from("n,statistic,decision,isolated\n");
    match alarm {
        Some(al) => out.push_str(&format!(
            "{},{},1,{}\n",
            al.time,
            fmt_g(al.statistic),
            al.isolated.unwrap_or(0)
        )),
        None => out.push_str(&format!("{},{},0,0\n", rows.len(), fmt_g(f64::NAN))),
    }
    Ok(out)
}
