//! Command-line interface.
//!
//! Exit codes: 0 success, 1 a check or command failed, 2 configuration or
//! usage errors.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::envs::{env_step, render_pgm};
use crate::error::Error;
use crate::rng::RngStream;

use super::ablation::ablation_suite;
use super::campaign::{build_plan, generate_episode, run_campaign, run_episode};
use super::config::ConfigFile;
use super::gradcheck::run_gradcheck;
use super::oracle_lq::run_lq_oracle;
use super::report::{emit_episode_logs, emit_report, episode_log_lines, ReportFormat};
use super::{EpisodeRow, EvalReport};

#[derive(Parser)]
#[command(name = "gvplab", version, about = "Guidance-grounded planning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports, logs and frames.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results are identical for any
    /// value.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an evaluation campaign from a config file.
    Campaign { config: PathBuf },
    /// Run the ablation matrix from a config file.
    Ablate { config: PathBuf },
    /// Verify model Jacobians and solver gradients against finite
    /// differences.
    Gradcheck,
    /// Solve one episode and write its diagnostics (and optionally frames).
    Plan {
        config: PathBuf,
        /// Episode index within the generated suite.
        #[arg(long, default_value_t = 0)]
        episode: usize,
        /// Dump one PGM frame per executed step.
        #[arg(long)]
        dump_frames: bool,
    },
    /// Check the solver against direct KKT solutions of random
    /// linear-quadratic instances.
    OracleLq,
}

/// Entry point; takes arguments (including argv[0]) and returns the exit
/// code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Error::InvalidConfig(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_spec(
    path: &PathBuf,
    seed: Option<u64>,
) -> crate::error::Result<super::config::CampaignSpec> {
    let file = ConfigFile::load(path)?;
    let mut spec = file.resolve()?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn write_outputs(report: &EvalReport, out: &PathBuf) -> crate::error::Result<()> {
    std::fs::create_dir_all(out)?;
    emit_report(report, ReportFormat::Csv, out.join("report.csv"))?;
    emit_report(report, ReportFormat::Markdown, out.join("report.md"))?;
    emit_episode_logs(report, out)?;
    Ok(())
}

fn print_cells(report: &EvalReport) {
    println!("env,horizon,source,method,episodes,successes,success_rate,mean_dist,mean_seconds");
    for c in &report.cells {
        println!(
            "{},{},{},{},{},{},{},{},{}",
            c.env,
            c.horizon,
            c.source,
            c.method,
            c.episodes,
            c.successes,
            c.success_rate,
            c.mean_dist,
            c.mean_seconds
        );
    }
}

fn run(cli: Cli) -> crate::error::Result<i32> {
    match cli.command {
        Command::Campaign { config } => {
            let spec = load_spec(&config, cli.seed)?;
            let report = run_campaign(&spec, cli.jobs)?;
            write_outputs(&report, &cli.out)?;
            print_cells(&report);
            println!("report written to {}", cli.out.join("report.csv").display());
            Ok(0)
        }
        Command::Ablate { config } => {
            let spec = load_spec(&config, cli.seed)?;
            let report = ablation_suite(&spec, cli.jobs)?;
            write_outputs(&report, &cli.out)?;
            print_cells(&report);
            println!("report written to {}", cli.out.join("report.csv").display());
            Ok(0)
        }
        Command::Gradcheck => {
            let report = run_gradcheck(cli.seed.unwrap_or(7))?;
            println!(
                "dynamics wallnav: max rel err {:.3e} ({})",
                report.dynamics_wallnav.max_rel_err,
                verdict(report.dynamics_wallnav.pass)
            );
            println!(
                "dynamics pushtoy: max rel err {:.3e} ({})",
                report.dynamics_pushtoy.max_rel_err,
                verdict(report.dynamics_pushtoy.pass)
            );
            println!(
                "dynamics mlp:     max rel err {:.3e} ({})",
                report.dynamics_mlp.max_rel_err,
                verdict(report.dynamics_mlp.pass)
            );
            println!(
                "solver gradients: max rel err {:.3e} over {} points ({})",
                report.alm_max_rel_err,
                report.alm_points,
                verdict(report.alm_pass)
            );
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::OracleLq => {
            let report = run_lq_oracle(10, 1e-3, &RngStream::new(cli.seed.unwrap_or(7)))?;
            println!(
                "lq oracle: {} instances, max per-variable deviation {:.3e} ({})",
                report.instances,
                report.max_abs_dev,
                verdict(report.pass)
            );
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::Plan {
            config,
            episode,
            dump_frames,
        } => {
            let spec = load_spec(&config, cli.seed)?;
            let horizon = spec.horizons[0];
            let source = spec.sources[0];
            let method = spec.methods[0];
            let master = RngStream::new(spec.seed);
            let model = crate::worldmodel::WorldModel::analytic_default(
                &spec.env,
                &master.fork(1),
            )?;
            let episodes_stream = master.fork(2).fork(horizon as u64);
            let setup = generate_episode(&spec.env, horizon, episode, &episodes_stream)?;
            let episode_stream = episodes_stream.fork(episode as u64);
            let result = run_episode(
                &spec,
                &model,
                &setup,
                horizon,
                source,
                method,
                &episode_stream,
            );
            println!(
                "episode {episode} ({method} on {source}, T = {horizon}): success = {}, final distance = {:.4}{}",
                result.success,
                result.final_distance,
                if result.aborted { " [aborted]" } else { "" }
            );
            std::fs::create_dir_all(&cli.out)?;
            let row = EpisodeRow {
                env: spec.env_name.clone(),
                horizon,
                source: source.to_string(),
                method: method.to_string(),
                episode,
                success: result.success,
                final_distance: result.final_distance,
                aborted: result.aborted,
                final_max_residual: result.final_solve_residual(),
                wall_seconds: result.wall_seconds,
                replans: result.replans.clone(),
            };
            let log_path = cli.out.join(format!("episode_{episode:03}.jsonl"));
            std::fs::write(&log_path, episode_log_lines(&row))?;
            println!("log written to {}", log_path.display());

            if dump_frames {
                let dir = cli.out.join("frames").join(format!("{episode:03}"));
                std::fs::create_dir_all(&dir)?;
                let mut state = setup.s0;
                std::fs::write(
                    dir.join("000.pgm"),
                    render_pgm(&spec.env, &state, &setup.goal),
                )?;
                for (i, action) in result.executed_actions.iter().enumerate() {
                    state = env_step(&spec.env, &state, action);
                    std::fs::write(
                        dir.join(format!("{:03}.pgm", i + 1)),
                        render_pgm(&spec.env, &state, &setup.goal),
                    )?;
                }
                // also drop the plan the episode followed
                let plan = build_plan(&spec, &setup, horizon, source, &episode_stream)?;
                crate::videoplan::save_plan_csv(&plan, dir.join("plan.csv"))?;
                println!("frames written to {}", dir.display());
            }
            Ok(if result.success { 0 } else { 1 })
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}
