//! Command-line front end for splitnet. File formats are described in
//! FORMATS.md at the repository root.

use std::io::Read;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use splitnet::balancers;
use splitnet::discrete::{self, ActivitySchedule, Scenario};
use splitnet::lp;
use splitnet::priority::{self, Cnf, PriorityAssignment, PriorityMode};
use splitnet::steady_state::{self, check_rules, CheckMode, SteadyState};
use splitnet::SplitterNetwork;

/// Steady-states, balancers and belt simulation for splitter networks.
///
/// Every FILE argument accepts `-` for standard input. Exit status is 0 on
/// success, 1 when a checked property fails and 2 on usage or input errors.
#[derive(Parser)]
#[command(name = "splitnet", version, after_help = "File formats: see FORMATS.md.")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the steady-state of a network.
    Solve {
        net: String,
        #[arg(long, value_enum, default_value = "residual")]
        solver: Solver,
        /// Seed for the uniform solver.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a state against the steady-state rules.
    Check {
        net: String,
        state: String,
        #[arg(long, value_enum, default_value = "r8")]
        mode: Mode,
    },
    /// Print the reversed network.
    Reverse { net: String },
    /// Print a generated network.
    Generate {
        #[command(subcommand)]
        what: Gen,
    },
    /// Print node and arc counts.
    Count { net: String },
    /// Lower bound on the splitters of a balancer with N inputs and P outputs.
    Lowerbound {
        n: u64,
        p: u64,
        /// Bound for balancers without saturated arcs at unit input capacities.
        #[arg(long)]
        weak: bool,
    },
    /// Choose splitter priorities.
    Priorities {
        #[command(subcommand)]
        what: Prio,
    },
    /// Run the discrete belt simulator.
    Simulate {
        net: String,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Compare discrete averages with continuous throughputs, as TSV.
    Compare {
        net: String,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
}

#[derive(Subcommand)]
enum Gen {
    Simple { k: u32 },
    Benes { k: u32 },
    HalfUniversal { k: u32 },
    Universal { k: u32 },
    Saturating { k: u32 },
    /// Gadget with throughput P/Q at unit capacities.
    Capacity {
        ratio: String,
        /// Build from the binary expansion instead of the arborescence.
        #[arg(long)]
        binary: bool,
    },
    /// Network of the reduction from a DIMACS CNF instance.
    SatReduction { cnf: String },
}

#[derive(Subcommand)]
enum Prio {
    /// Priorities maximizing the total throughput (unit capacities).
    Maxflow {
        #[command(flatten)]
        fix: Fix,
        net: String,
    },
}

#[derive(clap::Args)]
#[group(multiple = false)]
struct Fix {
    /// Keep the in-priorities of the file, choose out-priorities.
    #[arg(long)]
    fix_in: bool,
    /// Keep the out-priorities of the file, choose in-priorities.
    #[arg(long)]
    fix_out: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Residual,
    Lp,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    R8,
    R8s,
    Priority,
}

const DEFAULT_STEPS: usize = 1_000_000;

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).context("reading standard input")?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

fn load(path: &str) -> Result<SplitterNetwork> {
    let net = SplitterNetwork::parse(&read_input(path)?).with_context(|| format!("parsing {path}"))?;
    let net = net.normalize()?;
    if let Some(v) = net.validate().first() {
        bail!("{path}: {v}");
    }
    Ok(net)
}

fn has_priorities(net: &SplitterNetwork) -> bool {
    net.nodes().iter().any(|n| n.in_prio.is_some() || n.out_prio.is_some())
}

fn solve(net: &SplitterNetwork, solver: Solver, seed: u64) -> Result<SteadyState> {
    if has_priorities(net) {
        return Ok(priority::priority_solve(net, &PriorityAssignment::from_network(net))?);
    }
    Ok(match solver {
        Solver::Residual => steady_state::solve(net)?.0,
        Solver::Lp => lp::pre_steady_solve(net)?.0,
        Solver::Uniform => steady_state::uniform_solve(net, seed)?.0,
    })
}

fn parse_ratio(s: &str) -> Result<(u64, u64)> {
    let (p, q) = s.split_once('/').context("expected P/Q")?;
    Ok((p.trim().parse().context("bad numerator")?, q.trim().parse().context("bad denominator")?))
}

fn scenario(net: &SplitterNetwork, path: Option<&str>) -> Result<Scenario> {
    let text = match path {
        Some(p) => read_input(p)?,
        None => String::new(),
    };
    Ok(Scenario::parse(net, &text)?)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Solve { net, solver, seed } => {
            let net = load(&net)?;
            print!("{}", solve(&net, solver, seed)?.to_text(&net));
        }
        Cmd::Check { net, state, mode } => {
            if net == "-" && state == "-" {
                bail!("only one argument may read standard input");
            }
            let net = load(&net)?;
            let st = SteadyState::parse(&net, &read_input(&state)?).context("parsing state")?;
            let bad = match mode {
                Mode::R8 => check_rules(&net, &st, CheckMode::R8),
                Mode::R8s => check_rules(&net, &st, CheckMode::R8S),
                Mode::Priority => priority::check_priority_rules(&net, &PriorityAssignment::from_network(&net), &st),
            };
            if bad.is_empty() {
                println!("ok");
            } else {
                for v in &bad {
                    println!("{v}");
                }
                return Ok(1);
            }
        }
        Cmd::Reverse { net } => {
            let net = SplitterNetwork::parse(&read_input(&net)?)?;
            print!("{}", net.reverse().serialize());
        }
        Cmd::Generate { what } => {
            let net = match what {
                Gen::Simple { k } => balancers::gen_simple(k)?,
                Gen::Benes { k } => balancers::gen_benes(k)?,
                Gen::HalfUniversal { k } => balancers::gen_half_universal(k)?,
                Gen::Universal { k } => balancers::gen_universal(k)?,
                Gen::Saturating { k } => priority::gen_saturating_balancer(k)?.0,
                Gen::Capacity { ratio, binary } => {
                    let (p, q) = parse_ratio(&ratio)?;
                    if binary {
                        balancers::gen_capacity_binary(p, q)?
                    } else {
                        balancers::gen_capacity(p, q)?
                    }
                }
                Gen::SatReduction { cnf } => {
                    let cnf = Cnf::parse_dimacs(&read_input(&cnf)?)?;
                    let red = priority::gen_sat_reduction(&cnf)?;
                    println!("# target={}", red.target);
                    red.net
                }
            };
            print!("{}", net.serialize_with(true));
        }
        Cmd::Count { net } => {
            let net = SplitterNetwork::parse(&read_input(&net)?)?;
            println!("splitters={}", net.splitters().len());
            println!("inputs={}", net.inputs().len());
            println!("outputs={}", net.outputs().len());
            println!("arcs={}", net.num_arcs());
        }
        Cmd::Lowerbound { n, p, weak } => {
            let b = balancers::lower_bound(n, p, weak)?;
            println!("lowerbound={b}");
        }
        Cmd::Priorities { what: Prio::Maxflow { fix, net } } => {
            let mut net = load(&net)?;
            let given = PriorityAssignment::from_network(&net);
            let mode = if fix.fix_in {
                PriorityMode::OutOnly
            } else if fix.fix_out {
                PriorityMode::InOnly
            } else {
                PriorityMode::All
            };
            let (prio, _, total) = priority::optimize_priorities(&net, &given, mode)?;
            prio.store(&mut net);
            println!("# total={total}");
            print!("{}", net.serialize_with(true));
        }
        Cmd::Simulate { net, scenario: sc, max_steps } => {
            let net = load(&net)?;
            let sc = scenario(&net, sc.as_deref())?;
            let budget = max_steps.or(sc.max_steps).unwrap_or(DEFAULT_STEPS);
            let mut code = 0;
            for trial in &sc.trials {
                let (tnet, init) = trial.instantiate(&net)?;
                let rep = discrete::simulate(&tnet, &sc.schedule, &init, budget);
                match rep.period {
                    None => {
                        println!("# trial {} timeout after {} steps", trial.label, rep.steps);
                        code = 1;
                    }
                    Some(p) => {
                        println!("# trial {} transient={} period={}", trial.label, rep.transient, p);
                        println!("arc\tdiscrete_avg");
                        for (e, a) in rep.arc_avg.iter().enumerate() {
                            println!("{}\t{}", net.arc(e).name, a);
                        }
                    }
                }
            }
            return Ok(code);
        }
        Cmd::Compare { net, scenario: sc, max_steps } => {
            let net = load(&net)?;
            let (trials, steps) = match sc.as_deref() {
                Some(p) => {
                    let sc = scenario(&net, Some(p))?;
                    if sc.schedule != ActivitySchedule::from_capacities(&net) {
                        eprintln!("warning: `active` lines are ignored; compare uses capacity schedules");
                    }
                    (sc.trials, sc.max_steps)
                }
                None => (discrete::default_trials(&net), None),
            };
            let budget = max_steps.or(steps).unwrap_or(DEFAULT_STEPS);
            let res = discrete::compare(&net, &trials, budget)?;
            print!("{}", discrete::comparison_tsv(&net, &res));
            if res.iter().any(|r| r.report.timed_out()) {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
