//! `seqlab`: command-line front end for the sequential-analysis toolkit.
//!
//! Every subcommand reads a `key = value` configuration file, optionally a
//! CSV input stream, and writes a deterministic report to stdout or `--out`.
//! Exit codes: 0 success, 2 configuration/calibration error, 3 data error,
//! 4 domain/numeric error.

mod cmd_design;
mod cmd_detect;
mod cmd_renewal;
mod cmd_tracking;
mod config;
mod ctx;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use ctx::Ctx;

#[derive(Parser)]
#[command(
    name = "seqlab",
    version,
    about = "Sequential tests, changepoint detectors, and multi-stage designs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (`key = value` lines, `#` comments)
    #[arg(long)]
    config: PathBuf,
    /// RNG seed; overrides the `seed` config key
    #[arg(long)]
    seed: Option<u64>,
    /// Replication count; overrides the `reps` config key
    #[arg(long)]
    reps: Option<u64>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input CSV stream (`t,x` or `t,x1,...,xN` with header)
    #[arg(long = "in")]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Wald sequential probability ratio test
    Sprt(Common),
    /// Lorden 2-SPRT with an intermediate reference parameter
    #[command(name = "2sprt")]
    TwoSprt(Common),
    /// Generalized likelihood ratio test (Schwarz or adaptive boundary)
    Glr(Common),
    /// Page CUSUM detector
    Cusum(Common),
    /// Shiryaev-Roberts detector
    Sr(Common),
    /// Shiryaev Bayes detector with geometric prior
    Shiryaev(Common),
    /// Window-limited CUSUM
    WlCusum(Common),
    /// Window-limited mixture CUSUM over a parameter grid
    WlMix(Common),
    /// Multihypothesis detection-isolation
    Isolate(Common),
    /// Forward filter for multiple changepoints (pruned mixture)
    BcmixFilter(Common),
    /// Forward-backward smoother for multiple changepoints
    BcmixSmooth(Common),
    /// Surveillance alarm on the forward filter's recent-change mass
    Surveil(Common),
    /// Extended Shiryaev surveillance statistic
    Exshiryaev(Common),
    /// Empirical-Bayes hyperparameter fit
    FitHyper(Common),
    /// First-passage simulation and overshoot correction
    Renewal(Common),
    /// Three-stage adaptive design: thresholds and operating characteristics
    #[command(name = "design-3stage")]
    Design3Stage(Common),
    /// Four-stage adaptive design: thresholds and operating characteristics
    #[command(name = "design-4stage")]
    Design4Stage(Common),
    /// Group-sequential 2-SPRT
    #[command(name = "groupseq-2sprt")]
    Groupseq2Sprt(Common),
    /// Calibrate multi-stage design thresholds
    Calibrate(Common),
}

fn main() {
    let cli = Cli::parse();
    let (name, common) = match &cli.cmd {
        Cmd::Sprt(c) => ("sprt", c),
        Cmd::TwoSprt(c) => ("2sprt", c),
        Cmd::Glr(c) => ("glr", c),
        Cmd::Cusum(c) => ("cusum", c),
        Cmd::Sr(c) => ("sr", c),
        Cmd::Shiryaev(c) => ("shiryaev", c),
        Cmd::WlCusum(c) => ("wl-cusum", c),
        Cmd::WlMix(c) => ("wl-mix", c),
        Cmd::Isolate(c) => ("isolate", c),
        Cmd::BcmixFilter(c) => ("bcmix-filter", c),
        Cmd::BcmixSmooth(c) => ("bcmix-smooth", c),
        Cmd::Surveil(c) => ("surveil", c),
        Cmd::Exshiryaev(c) => ("exshiryaev", c),
        Cmd::FitHyper(c) => ("fit-hyper", c),
        Cmd::Renewal(c) => ("renewal", c),
        Cmd::Design3Stage(c) => ("design-3stage", c),
        Cmd::Design4Stage(c) => ("design-4stage", c),
        Cmd::Groupseq2Sprt(c) => ("groupseq-2sprt", c),
        Cmd::Calibrate(c) => ("calibrate", c),
    };
    let started = std::time::Instant::now();
    let result = Ctx::new(common).and_then(|ctx| {
        let body = run(name, &ctx)?;
        ctx.cfg.finish()?;
        ctx.write_output(&body)
    });
    match result {
        Ok(()) => {
            eprintln!("{name}: done in {:.3}s", started.elapsed().as_secs_f64());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(name: &str, ctx: &Ctx) -> seqlab_core::Result<String> {
    match name {
        "sprt" => cmd_tests::sprt(ctx),
        "2sprt" => cmd_tests::two_sprt(ctx),
        "glr" => cmd_tests::glr(ctx),
        "cusum" | "sr" | "shiryaev" | "wl-cusum" => cmd_detect::single_detector(ctx, name),
        "wl-mix" => cmd_detect::wl_mix(ctx),
        "isolate" => cmd_detect::isolate(ctx),
        "bcmix-filter" => cmd_tracking::filter(ctx),
        "bcmix-smooth" => cmd_tracking::smooth(ctx),
        "surveil" => cmd_tracking::surveil(ctx),
        "exshiryaev" => cmd_tracking::exshiryaev(ctx),
        "fit-hyper" => cmd_tracking::fit_hyper(ctx),
        "renewal" => cmd_renewal::renewal(ctx),
        "design-3stage" => cmd_design::design_three_stage(ctx),
        "design-4stage" => cmd_design::design_four_stage(ctx),
        "groupseq-2sprt" => cmd_design::group_2sprt(ctx),
        "calibrate" => cmd_design::calibrate(ctx),
        other => unreachable!("unmapped subcommand {other}"),
    }
}
