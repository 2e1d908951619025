use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use modal_strength::output;
use modal_strength::random::check_random;
use modal_strength::run::{load_scenario, run, Command, RunOptions, RunReport};
use modal_strength::scenario::{builtin, SideSelection};
use modal_strength::Error;

#[derive(Parser)]
#[command(name = "modal-strength", version, about = "Modal frequency and voltage strength of power systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Modal decomposition and strength metrics.
    Analyze(RunArgs),
    /// Time-domain response to the scenario's disturbances.
    Simulate(RunArgs),
    /// Modal springs over the scenario's sweep and their sign changes.
    Sweep(RunArgs),
    /// Names of the bundled scenarios.
    ListScenarios,
    /// Structural checks on seeded random networks.
    CheckRandom {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 12)]
        max_buses: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    #[value(alias = "frequency")]
    Freq,
    #[value(alias = "voltage")]
    Volt,
    Both,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or `builtin:<name>`.
    #[arg(long)]
    scenario: String,
    /// Output directory; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated output formats (csv, svg). Empty writes only the manifest.
    #[arg(long, value_delimiter = ',', default_value = "csv")]
    format: Vec<String>,
    #[arg(long, value_enum)]
    side: Option<SideArg>,
    /// Time-response engine (modal, direct).
    #[arg(long)]
    engine: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<u8, Error> {
    match cmd {
        Cmd::Analyze(a) => execute(Command::Analyze, a),
        Cmd::Simulate(a) => execute(Command::Simulate, a),
        Cmd::Sweep(a) => execute(Command::Sweep, a),
        Cmd::ListScenarios => {
            for n in builtin::names() {
                println!("{}{n}", builtin::PREFIX);
            }
            Ok(0)
        }
        Cmd::CheckRandom { seed, count, max_buses } => {
            let checks = check_random(seed, count, max_buses)?;
            let failed = checks.iter().filter(|c| !c.pass).count();
            println!("n,row_sum,zero_eigenvalues,cm_vector_gap,biorthogonality,nodal_inertia_gap,resolvent_gap,pass");
            for c in &checks {
                println!(
                    "{},{:e},{},{:e},{:e},{:e},{:e},{}",
                    c.n, c.row_sum, c.zero_eigenvalues, c.cm_vector_gap, c.biorthogonality, c.nodal_inertia_gap, c.resolvent_gap, c.pass
                );
            }
            eprintln!("{} of {} networks passed (seed {seed})", checks.len() - failed, checks.len());
            Ok(if failed == 0 { 0 } else { 2 })
        }
    }
}

fn execute(command: Command, a: RunArgs) -> Result<u8, Error> {
    let formats: Vec<String> = a.format.into_iter().map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect();
    let reg = output::default_registry();
    for f in &formats {
        reg.get(f)?;
    }
    let (scenario, text) = load_scenario(&a.scenario)?;
    let opts = RunOptions {
        side: a.side.map(|s| match s {
            SideArg::Freq => SideSelection::Frequency,
            SideArg::Volt => SideSelection::Voltage,
            SideArg::Both => SideSelection::Both,
        }),
        engine: a.engine,
    };
    let report = run(&scenario, &text, command, &opts)?;
    print_summary(&report);
    if let Some(dir) = a.out {
        let manifest = output::emit(&report, &dir, &formats)?;
        println!("wrote {} files and manifest.json to {}", manifest.files.len(), dir.display());
    }
    Ok(0)
}

fn fmt(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.6}")
    }
}

fn print_summary(r: &RunReport) {
    println!("scenario {} (sha256 {})", r.provenance.scenario, &r.provenance.scenario_sha256[..12]);
    for w in &r.warnings {
        println!("warning {}: {}", w.code, w.message);
    }
    println!("power-flow residual {:e}", r.flow_residual);
    if !r.strength.modes.is_empty() {
        println!("{:<10} {:>4} {:>14} {:>14} {:>14} {:>14}", "mode", "no.", "lambda", "J", "D", "K");
        for m in &r.strength.modes {
            let j = m.j.map(fmt).unwrap_or_else(|| "-".into());
            let flag = if m.collapse { "  collapse" } else { "" };
            println!(
                "{:<10} {:>4} {:>14} {:>14} {:>14} {:>14}{flag}",
                m.label,
                m.number,
                fmt(m.lambda),
                j,
                fmt(m.d),
                fmt(m.k)
            );
        }
    }
    if let Some(v) = r.strength.cm_v_spring_estimate {
        println!("common-mode voltage spring estimate {}", fmt(v));
    }
    if let Some(g) = r.strength.gscr {
        println!("gSCR {}", fmt(g));
    }
    if let Some(b) = &r.strength.bridge {
        println!("bridge mode {}: K = {} (gSCR form {})", b.mode, fmt(b.k_mv), fmt(b.gscr_form));
    }
    for f in &r.final_values {
        if let Some(t) = &f.total {
            let vals: Vec<String> = f.buses.iter().zip(t).map(|(b, v)| format!("{b}:{}", fmt(*v))).collect();
            println!("final {} deviation {}", f.side, vals.join(" "));
        }
    }
    for t in &r.traces {
        let end = t.t.last().copied().unwrap_or(0.0);
        match t.truncated_at {
            Some(at) => println!("trace {} ({}) truncated at t = {}", t.side, t.engine, fmt(at)),
            None => println!("trace {} ({}) to t = {}", t.side, t.engine, fmt(end)),
        }
    }
    for g in &r.gaps {
        println!("engine gap {} {} vs {}: {:e}", g.side, g.engine, g.oracle, g.max_gap);
    }
    if let Some(s) = &r.sweep {
        println!("sweep {} over {} values", s.path, s.points.len());
        if s.crossings.is_empty() {
            println!("no modal spring changes sign");
        }
        for c in &s.crossings {
            println!("{} crosses zero at {} (between {} and {})", c.label, fmt(c.at), fmt(c.lower), fmt(c.upper));
        }
    }
}
