//! `caflow`: run density-flow experiments, entropy identity checks, the
//! oracle differential suite, and stability classification.

mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use caflow_core::catalog;
use caflow_core::flow::{density_flow, verify_theorem1, verify_theorem2, DensityFlow, Theorem, TheoremReport};
use caflow_core::oracle::{differential_suite, SuiteConfig};
use caflow_core::perturbation::classify;
use caflow_core::VelocitySpec;
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Experiment, ExperimentConfig, Overrides};
use crate::error::CliError;
use crate::output::Writer;

#[derive(Parser)]
#[command(name = "caflow", version, about = "Density-flow experiments on one-dimensional cellular automata")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit timestamps so identical inputs give byte-identical outputs.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Live-state budget of the exact DP.
    #[arg(long, global = true, value_name = "STATES")]
    budget: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List built-in rules and measure presets.
    Catalog {
        #[arg(long)]
        json: bool,
    },
    /// Run the grid of an experiment and write results, curves and reports.
    Run { config: PathBuf },
    /// Check one entropy identity; exit code 4 when it fails.
    Verify {
        config: PathBuf,
        #[arg(long, value_enum)]
        theorem: TheoremArg,
    },
    /// Compare exact counts and measures against brute-force enumeration.
    OracleSuite {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 4000)]
        mc_samples: u64,
    },
    /// Label a rule as mu-equicontinuous or mu-expansive from finite evidence.
    Classify { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremArg {
    T1,
    T2i,
    T2ii,
    T2iii,
}

impl From<TheoremArg> for Theorem {
    fn from(t: TheoremArg) -> Self {
        match t {
            TheoremArg::T1 => Theorem::T1,
            TheoremArg::T2i => Theorem::T2i,
            TheoremArg::T2ii => Theorem::T2ii,
            TheoremArg::T2iii => Theorem::T2iii,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("caflow: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        budget: cli.budget,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Catalog { json } => cmd_catalog(*json),
        Command::Run { config } => {
            let exp = load(config, &overrides)?;
            cmd_run(&exp, &Writer::new(&exp.out, cli.reproducible)?)
        }
        Command::Verify { config, theorem } => {
            let exp = load(config, &overrides)?;
            cmd_verify(&exp, (*theorem).into(), &Writer::new(&exp.out, cli.reproducible)?)
        }
        Command::OracleSuite { instances, mc_samples } => {
            let writer = match &cli.out {
                Some(dir) => Some(Writer::new(dir, cli.reproducible)?),
                None => None,
            };
            cmd_oracle_suite(*instances, *mc_samples, cli.seed, writer.as_ref())
        }
        Command::Classify { config } => {
            let exp = load(config, &overrides)?;
            cmd_classify(&exp, &Writer::new(&exp.out, cli.reproducible)?)
        }
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<Experiment, CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::load(path)?.resolve(base, overrides)
}

fn cmd_catalog(json: bool) -> Result<(), CliError> {
    let entries = catalog::entries();
    if json {
        let doc = serde_json::json!({ "rules": entries, "measures": catalog::measure_names() });
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(());
    }
    println!("{:<14} {:>2} {:>2} {:<13} {:<20} description", "rule", "k", "r", "bipermutative", "measure");
    for e in &entries {
        println!(
            "{:<14} {:>2} {:>2} {:<13} {:<20} {}",
            e.name,
            e.k,
            e.r,
            if e.bipermutative { "yes" } else { "no" },
            e.measure,
            e.description
        );
    }
    println!();
    println!("measure presets: {}", catalog::measure_names().join(", "));
    Ok(())
}

fn print_flow(flow: &DensityFlow) {
    for c in &flow.curves {
        let fit = c.extrapolated().map_or("-".to_string(), |v| format!("{v:.6}"));
        println!("p={} delta={} tail={:.6} fit={fit}", c.p, c.delta, c.tail);
    }
    println!(
        "M tail={:.6} (p={}) extrapolated={}{}",
        flow.m_tail,
        flow.tail_p,
        flow.m_extrapolated.map_or("-".to_string(), |v| format!("{v:.6}")),
        if flow.exact { "" } else { " [mc]" }
    );
}

fn print_report(rep: &TheoremReport) {
    let rel = serde_json::to_value(rep.relation).unwrap_or_default();
    println!(
        "{:?}: lhs={:.6} {} rhs={:.6} margin={:.6} tol={:.6} {}",
        rep.theorem,
        rep.lhs,
        rel.as_str().unwrap_or("?"),
        rep.rhs,
        rep.margin,
        rep.tolerance,
        if rep.pass { "PASS" } else { "FAIL" }
    );
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
}

fn theorem_report(exp: &Experiment, theorem: Theorem) -> Result<TheoremReport, CliError> {
    let rep = match theorem {
        Theorem::T1 => verify_theorem1(
            &exp.rule,
            &exp.measure,
            &exp.n,
            *exp.p.iter().max().expect("non-empty"),
            exp.exponent_n,
            &exp.params,
        )?,
        t => verify_theorem2(&exp.rule, &exp.measure, t, &exp.velocity, &exp.p, &exp.n, &exp.delta, &exp.params)?,
    };
    Ok(rep)
}

fn cmd_run(exp: &Experiment, out: &Writer) -> Result<(), CliError> {
    let mut reports = vec![theorem_report(exp, Theorem::T1)?];
    let flow = match &exp.velocity {
        VelocitySpec::Linear { .. } | VelocitySpec::Pointwise => {
            let t = if exp.velocity.is_linear() { Theorem::T2i } else { Theorem::T2iii };
            let rep = theorem_report(exp, t)?;
            let flow = rep.flow.clone().expect("theorem 2 carries its flow");
            reports.push(rep);
            flow
        }
        VelocitySpec::Sublinear(_) => density_flow(
            &exp.rule,
            &exp.measure,
            &exp.p,
            &exp.n,
            &exp.delta,
            &exp.velocity,
            &exp.params,
        )?,
    };
    check_mode(exp, &flow)?;
    out.results_csv(&exp.id, &flow)?;
    out.convergence_csv(&exp.id, &flow)?;
    out.json("theorems.json", &exp.id, &reports)?;
    print_flow(&flow);
    for rep in &reports {
        print_report(rep);
    }
    Ok(())
}

/// `mode = "exact-only"` already forbids fallback inside the estimators; this
/// guards against curves that mixed modes without the caller allowing it.
fn check_mode(exp: &Experiment, flow: &DensityFlow) -> Result<(), CliError> {
    if exp.mode == config::Mode::ExactOnly && !flow.exact {
        return Err(CliError::Budget("exact-only run produced Monte Carlo cells".into()));
    }
    Ok(())
}

fn cmd_verify(exp: &Experiment, theorem: Theorem, out: &Writer) -> Result<(), CliError> {
    let rep = theorem_report(exp, theorem)?;
    let name = format!("theorem_{}.json", format!("{theorem:?}").to_lowercase());
    out.json(&name, &exp.id, &rep)?;
    print_report(&rep);
    if rep.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "{:?}: lhs {:.6} vs rhs {:.6} outside tolerance {:.6}",
            rep.theorem, rep.lhs, rep.rhs, rep.tolerance
        )))
    }
}

fn cmd_oracle_suite(
    instances: usize,
    mc_samples: u64,
    seed: Option<u64>,
    out: Option<&Writer>,
) -> Result<(), CliError> {
    let defaults = SuiteConfig::default();
    let cfg = SuiteConfig {
        instances,
        mc_samples,
        seed: seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let rep = differential_suite(&cfg)?;
    if let Some(w) = out {
        w.json("oracle_suite.json", "oracle-suite", &rep)?;
    }
    println!(
        "{} instances, {} skipped, {} exact mismatches, MC within 4 sigma on {:.1}%",
        rep.cases.len(),
        rep.skipped,
        rep.exact_mismatches,
        100.0 * rep.mc_within_fraction
    );
    if rep.exact_mismatches > 0 || rep.mc_within_fraction < 0.95 {
        return Err(CliError::Check("oracle differential suite failed".into()));
    }
    Ok(())
}

fn cmd_classify(exp: &Experiment, out: &Writer) -> Result<(), CliError> {
    let rep = classify(&exp.rule, &exp.measure, &exp.classify)?;
    out.json("classify.json", &exp.id, &rep)?;
    println!("{} under {}: {}", rep.rule, rep.measure, rep.label);
    Ok(())
}
