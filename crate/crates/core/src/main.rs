use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tee_ledger::harness::bench::{batch_sweep, compression, render_batch_rows, BATCH_SIZES};
use tee_ledger::harness::report::{audit_transcript, write_transcript};
use tee_ledger::harness::{run, Scenario};
use tee_ledger::pop::{
    analytic_false_reject, estimate_rates_crn, sweep_csv, PopParams, ProverStrategy,
    PUBLISHED_TABLE,
};

#[derive(Parser)]
#[command(
    name = "tee-ledger",
    version,
    about = "Drive and audit simulated confidential-contract runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and audit the result.
    Run {
        config: PathBuf,
        /// Write the delimited report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the ledger transcript for a later `audit`.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Ledger writes per request for batch sizes 1, 10 and 100, and on-chain
    /// bytes with and without the write-ahead log.
    Bench { config: PathBuf },
    /// Proof-of-publication rates over the scenario's `[pop]` section.
    PopSweep { config: PathBuf },
    /// Re-audit every contract chain in a transcript.
    Audit { transcript: PathBuf },
}

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(2)
    })?;
    Scenario::parse(&text).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(2)
    })
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), ExitCode> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| {
            eprintln!("{}: {e}", p.display());
            ExitCode::from(2)
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) | Err(code) => code,
    }
}

fn dispatch(command: Command) -> Result<ExitCode, ExitCode> {
    match command {
        Command::Run {
            config,
            report,
            transcript,
        } => {
            let scenario = load(&config)?;
            let outcome = run(&scenario).map_err(|e| {
                eprintln!("run failed: {e}");
                ExitCode::from(2)
            })?;
            write_or_print(report.as_deref(), &outcome.report.render())?;
            if let Some(t) = transcript {
                write_or_print(Some(&t), &write_transcript(&outcome.system.ledger))?;
            }
            eprint!("{}", outcome.report.summary());
            Ok(verdict(outcome.report.passed()))
        }
        Command::Bench { config } => {
            let scenario = load(&config)?;
            let fail = |e: tee_ledger::harness::run::RunError| {
                eprintln!("bench failed: {e}");
                ExitCode::from(2)
            };
            let rows = batch_sweep(&scenario, &BATCH_SIZES).map_err(fail)?;
            print!("{}", render_batch_rows(&rows));
            let largest = *BATCH_SIZES.last().expect("non-empty");
            let c = compression(&scenario, largest).map_err(fail)?;
            println!(
                "\nstorage\twal_batch{largest}_bytes={}\tfull_state_bytes={}\tratio={:.2}\ttotal_ratio={:.2}",
                c.wal_batched.workload_bytes(),
                c.full_state.workload_bytes(),
                c.ratio(),
                c.total_ratio()
            );
            let ok = rows.iter().all(|r| r.exact() && r.audits_pass)
                && c.wal_batched.passed()
                && c.full_state.passed();
            Ok(verdict(ok))
        }
        Command::PopSweep { config } => {
            let scenario = load(&config)?;
            let Some(p) = scenario.pop else {
                eprintln!("{}: no [pop] section", config.display());
                return Err(ExitCode::from(2));
            };
            let base = PopParams::new(p.n_c, p.tau, p.epsilons[0]);
            let strategy = ProverStrategy::Adaptive { max_extra: p.n_c };
            let rows = estimate_rates_crn(
                base,
                &p.epsilons,
                p.p,
                p.trials,
                scenario.seed,
                strategy,
                p.difficulty,
            );
            print!("{}", sweep_csv(&rows));
            println!("# analytic false-reject bound at n_c={}:", p.n_c);
            for e in &p.epsilons {
                println!("#   eps={e}: {:.3e}", analytic_false_reject(p.n_c, *e));
            }
            println!("# published parameter table (metadata):");
            for r in PUBLISHED_TABLE {
                println!(
                    "#   p={} n_c={} eps={} forge=2^{} false_reject=2^{}",
                    r.p, r.n_c, r.epsilon, r.log2_hashes_to_forge, r.log2_false_reject
                );
            }
            Ok(verdict(rows.iter().all(|r| r.forged_accepts == 0)))
        }
        Command::Audit { transcript } => {
            let text = fs::read_to_string(&transcript).map_err(|e| {
                eprintln!("{}: {e}", transcript.display());
                ExitCode::from(2)
            })?;
            let chains = audit_transcript(&text).map_err(|e| {
                eprintln!("{}: {e}", transcript.display());
                ExitCode::from(2)
            })?;
            println!("chain\titems\ttransitions\tforks\tstale_accepted\tbad_attestations\tmalformed\tverdict");
            for c in &chains {
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    &c.id.to_hex()[..16],
                    c.items,
                    c.transitions,
                    c.forks,
                    c.stale_accepted,
                    c.bad_attestations,
                    c.malformed,
                    if c.ok() { "pass" } else { "FAIL" }
                );
            }
            Ok(verdict(chains.iter().all(|c| c.ok())))
        }
    }
}
