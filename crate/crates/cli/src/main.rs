use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use p2p_shapley::experiment::report::render_rows;
use p2p_shapley::experiment::run::write_sweep;
use p2p_shapley::experiment::{
    estimation_error, load_config, read_report, run_experiment, sweep_adoption, write_report, ReportFormat,
    RunReport, SweepSpec,
};
use p2p_shapley::{Error, Mode};

#[derive(Parser)]
#[command(name = "p2p-shapley", version, about = "Shapley payoffs for peer-to-peer energy sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute payoffs for one scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// exact, permutation, stratified or coalitional-stratified.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        samples_per_player: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; without it (and without `run.output`) the CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv or json-lines.
        #[arg(long)]
        format: Option<ReportFormat>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run one report per adoption-rate point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimated report against an exact one.
    Compare {
        #[arg(long)]
        exact: PathBuf,
        #[arg(long)]
        estimated: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config_error() || matches!(e, Error::MismatchedGames(_)) {
        2
    } else {
        3
    }
}

fn summarize(report: &RunReport) {
    let s = &report.summary;
    eprintln!(
        "{} players, mode {}, v(N) = {:.6}, residual {:.3e}, {} LP solves, cache hit rate {:.3}, {:.3} s",
        s.players, s.mode, s.grand_value, s.efficiency_residual, s.lp_solves, s.cache_hit_rate, s.elapsed_seconds
    );
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            mode,
            samples_per_player,
            seed,
            out,
            format,
            threads,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(m) = mode {
                cfg.run.mode = m;
            }
            if let Some(h) = samples_per_player {
                cfg.run.samples_per_player = h;
            }
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(f) = format {
                cfg.run.format = f;
            }
            if threads.is_some() {
                cfg.run.threads = threads;
            }
            cfg.validate()?;
            let report = run_experiment(&cfg)?;
            summarize(&report);
            let target = out.or_else(|| cfg.run.output.as_ref().map(|p| cfg.base_dir.join(p)));
            match target {
                Some(path) => {
                    write_report(&report, &path, cfg.run.format)?;
                    eprintln!("wrote {}", path.display());
                }
                None => std::io::stdout().write_all(render_rows(&report.rows, cfg.run.format)?.as_bytes())?,
            }
        }
        Command::Sweep { config, sweep, out } => {
            let cfg = load_config(&config)?;
            let spec = SweepSpec::load(&sweep)?;
            let results = sweep_adoption(&cfg, &spec)?;
            let index = write_sweep(&results, &out, cfg.run.format)?;
            eprintln!("{} points, index at {}", results.len(), index.display());
        }
        Command::Compare { exact, estimated } => {
            let exact = read_report(&exact)?;
            let estimated = read_report(&estimated)?;
            let metrics = estimation_error(&exact, &estimated)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", serde_json::to_string_pretty(&metrics)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A reader such as `head` closed stdout early; nothing left to report.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::BudgetTooSmall { given: 1, required: 2 }), 2);
        assert_eq!(exit_code(&Error::MismatchedGames("x".into())), 2);
        assert_eq!(exit_code(&Error::CapExceeded { what: "players", value: 30, cap: 20 }), 3);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("disk"))), 3);
    }

    #[test]
    fn arguments_parse() {
        let cli = Cli::try_parse_from(["p2p-shapley", "run", "--config", "c.toml", "--mode", "exact", "--threads", "2"]).unwrap();
        match cli.command {
            Command::Run { mode, threads, .. } => {
                assert_eq!(mode, Some(Mode::Exact));
                assert_eq!(threads, Some(2));
            }
            _ => panic!("expected run"),
        }
        assert!(Cli::try_parse_from(["p2p-shapley", "run", "--config", "c", "--format", "xml"]).is_err());
    }
}
