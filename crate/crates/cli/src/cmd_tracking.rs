//! Multiple-changepoint tracking: `bcmix-filter`, `bcmix-smooth`, `surveil`,
//! `exshiryaev`, `fit-hyper`.

use std::io::BufReader;

use seqlab_core::bcmix::{
    extended_shiryaev, fit_hyperparams, mcp_surveil, smooth_all, FitOptions, ForwardFilter,
    HyperParams,
};
use seqlab_core::changepoint::Alarm;
use seqlab_core::error::{Error, Result};
use seqlab_core::io::fmt_g;

use crate::ctx::{kv_line, Ctx};

/// Pruning schedule from the `prune_m` / `prune_cap` keys; `prune_m = 0`
/// disables pruning (exact mixture).
fn prune_spec(ctx: &Ctx) -> Result<Option<(usize, usize)>> {
    let m = ctx.cfg.get_u64("prune_m")?.unwrap_or(10) as usize;
    if m == 0 {
        // consume the cap key too so exact runs can keep it in the file
        let _ = ctx.cfg.get_u64("prune_cap")?;
        return Ok(None);
    }
    let cap = ctx.cfg.get_u64("prune_cap")?.unwrap_or(20) as usize;
    Ok(Some((m, cap)))
}

fn hyper(ctx: &Ctx) -> Result<HyperParams> {
    HyperParams::new(
        ctx.family()?,
        ctx.cfg.req_f64("p")?,
        ctx.cfg.get_f64("a0")?.unwrap_or(1.0),
        ctx.cfg.req_f64("mu0")?,
    )
}

const TRACK_HEADER: &str = "t,change_prob,posterior_mean\n";

fn track_row(out: &mut String, t: usize, change: f64, mean: f64) {
    out.push_str(&format!("{t},{},{}\n", fmt_g(change), fmt_g(mean)));
}

pub fn filter(ctx: &Ctx) -> Result<String> {
    let prune = prune_spec(ctx)?;
    let mut filter = match ctx.cfg.get_str("snapshot_in") {
        Some(path) => {
            let file = std::fs::File::open(&path)
                .map_err(|e| Error::data(format!("cannot read snapshot {path}: {e}")))?;
            ForwardFilter::read_snapshot(BufReader::new(file), prune)?
        }
        None => ForwardFilter::new(hyper(ctx)?, prune)?,
    };
    let data = ctx.series()?;
    let mut out = String::from(TRACK_HEADER);
    for &x in &data {
        filter.step(x)?;
        let (change, mean) = filter.estimates();
        track_row(&mut out, filter.t, change, mean);
    }
    if let Some(path) = ctx.cfg.get_str("snapshot_out") {
        let mut buf = Vec::new();
        filter.write_snapshot(&mut buf)?;
        std::fs::write(&path, buf)
            .map_err(|e| Error::data(format!("cannot write snapshot {path}: {e}")))?;
    }
    Ok(out)
}

pub fn smooth(ctx: &Ctx) -> Result<String> {
    let hp = hyper(ctx)?;
    let prune = prune_spec(ctx)?;
    let data = ctx.series()?;
    let weights = smooth_all(&hp, prune, &data)?;
    let mut out = String::from(TRACK_HEADER);
    for w in &weights {
        track_row(&mut out, w.t, w.change_prob, w.posterior_mean);
    }
    Ok(out)
}

fn alarm_body(alarm: Option<Alarm>, n_obs: usize) -> String {
    let mut out = String::from("n,statistic,decision\n");
    match alarm {
        Some(al) => out.push_str(&format!("{},{},1\n", al.time, fmt_g(al.statistic))),
        None => out.push_str(&format!("{},{},0\n", n_obs, fmt_g(f64::NAN))),
    }
    out
}

pub fn surveil(ctx: &Ctx) -> Result<String> {
    let hp = hyper(ctx)?;
    let prune = prune_spec(ctx)?;
    let k = ctx.cfg.req_u64("k")?;
    let gamma = ctx.cfg.req_f64("gamma")?;
    let n0 = ctx.cfg.get_u64("n0")?.unwrap_or(0);
    let data = ctx.series()?;
    Ok(alarm_body(mcp_surveil(&hp, prune, k, gamma, n0, &data)?, data.len()))
}

pub fn exshiryaev(ctx: &Ctx) -> Result<String> {
    let hp = hyper(ctx)?;
    let k = ctx.cfg.req_u64("k")?;
    let gamma = ctx.cfg.req_f64("gamma")?;
    let n0 = ctx.cfg.get_u64("n0")?.unwrap_or(1);
    let data = ctx.series()?;
    Ok(alarm_body(extended_shiryaev(&hp, n0, k, gamma, &data)?, data.len()))
}

pub fn fit_hyper(ctx: &Ctx) -> Result<String> {
    let family = ctx.family()?;
    let mut opts = FitOptions {
        prune: prune_spec(ctx)?,
        ..FitOptions::default()
    };
    if let Some(a0) = ctx.cfg.get_f64("a0")? {
        opts.a0 = a0;
    }
    if let Some(j0) = ctx.cfg.get_u64("j0")? {
        opts.j0 = j0 as u32;
    }
    if let Some(j1) = ctx.cfg.get_u64("j1")? {
        opts.j1 = Some(j1 as u32);
    }
    let data = ctx.series()?;
    let (hp, profile) = fit_hyperparams(family, &data, &opts)?;
    let mut out = String::new();
    out.push_str(&format!("family = {}\n", hp.family.name));
    out.push_str(&kv_line("p_hat", hp.p));
    out.push_str(&kv_line("a0", hp.a0));
    out.push_str(&kv_line("mu0", hp.mu0));
    out.push_str(&format!("grid_size = {}\n", profile.len()));
    for (i, (p, ll)) in profile.iter().enumerate() {
        out.push_str(&kv_line(&format!("p_{}", i + 1), *p));
        out.push_str(&kv_line(&format!("loglik_{}", i + 1), *ll));
    }
    Ok(out)
}
