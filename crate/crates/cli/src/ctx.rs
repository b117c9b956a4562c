//! Shared run context: resolved configuration, seed/reps overrides, input
//! streams, and deterministic output.

use std::path::PathBuf;

use seqlab_core::error::{Error, Result};
use seqlab_core::expfam::Family;
use seqlab_core::io::{emit_report, fmt_g, read_matrix, read_series, ReportFormat};
use seqlab_core::sim::SimReport;

use crate::config::Cfg;
use crate::Common;

pub struct Ctx {
    pub cfg: Cfg,
    seed: Option<u64>,
    reps: Option<u64>,
    out: Option<PathBuf>,
    input: Option<PathBuf>,
}

impl Ctx {
    pub fn new(common: &Common) -> Result<Ctx> {
        Ok(Ctx {
            cfg: Cfg::load(&common.config)?,
            seed: common.seed,
            reps: common.reps,
            out: common.out.clone(),
            input: common.input.clone(),
        })
    }

    /// Command-line flag, then config key, then 0.
    pub fn seed(&self) -> Result<u64> {
        let from_cfg = self.cfg.get_u64("seed")?;
        Ok(self.seed.or(from_cfg).unwrap_or(0))
    }

    /// Command-line flag, then config key, then the command default.
    pub fn reps(&self, default: u64) -> Result<u64> {
        let from_cfg = self.cfg.get_u64("reps")?;
        Ok(self.reps.or(from_cfg).unwrap_or(default))
    }

    pub fn family(&self) -> Result<Family> {
        Family::by_name(&self.cfg.req_str("family")?)
    }

    pub fn has_input(&self) -> bool {
        self.input.is_some()
    }

    fn input_path(&self) -> Result<&PathBuf> {
        self.input
            .as_ref()
            .ok_or_else(|| Error::config("this run needs an input stream (--in)".to_string()))
    }

    pub fn series(&self) -> Result<Vec<f64>> {
        read_series(self.input_path()?)
    }

    pub fn matrix(&self) -> Result<Vec<Vec<f64>>> {
        read_matrix(self.input_path()?)
    }

    pub fn write_output(&self, body: &str) -> Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, body)
                .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display()))),
            None => {
                use std::io::Write;
                std::io::stdout()
                    .write_all(body.as_bytes())
                    .map_err(|e| Error::data(format!("stdout write failure: {e}")))
            }
        }
    }
}

/// Render simulation reports with the wall time zeroed so identical seeds
/// give byte-identical files; real timing goes to stderr from main.
pub fn render_reports(reports: &[SimReport], format: ReportFormat) -> Result<String> {
    let frozen: Vec<SimReport> = reports
        .iter()
        .map(|r| SimReport {
            wall_time: 0.0,
            ..r.clone()
        })
        .collect();
    let mut buf = Vec::new();
    emit_report(&frozen, format, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::numeric(format!("non-UTF8 report: {e}")))
}

/// Output format selector shared by the report-producing commands.
pub fn report_format(cfg: &Cfg) -> Result<ReportFormat> {
    match cfg.get_str("format") {
        None => Ok(ReportFormat::Csv),
        Some(s) => s.parse(),
    }
}

/// One `key = value` line with 10-significant-digit reals.
pub fn kv_line(key: &str, value: f64) -> String {
    format!("{key} = {}\n", fmt_g(value))
}
