//! `gacm` subcommands. Exit codes: 0 ok, 1 validation failure or oracle
//! mismatch, 2 runtime failure.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gacm_core::authz::{axiom_par, check_equivalence_with, project, resolve_conflicts, BaseRelations};
use gacm_core::config::{load_policy_with, CustomFactRequest, LoadOptions, PolicyConfig};
use gacm_core::engine::{Engine, Evaluation};
use gacm_core::graph::{build_graph, export_graph, GraphFormat};
use gacm_core::model::*;
use gacm_core::random::{random_policy, Limits};
use gacm_service::ServiceConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "gacm", version, about = "Category-based access control: evaluate policies and serve results")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a policy directory and report every configuration error.
    Validate(PolicyArgs),
    /// Evaluate a policy and print the resulting Pars.
    Eval {
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = EvalFormat::Table)]
        format: EvalFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Export the policy graph as node-link JSON or DOT.
    Graph {
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "node-link", value_parser = parse_graph_format)]
        format: GraphFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare the engine against the reference semantics, on the policy and
    /// on a suite of random policies.
    Check {
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        facts: FactArgs,
        /// Number of random policies, 0 to skip.
        #[arg(long, default_value_t = 500)]
        random: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the HTTP API. Falls back to GACM_POLICY_DIR and GACM_ADDR.
    Serve {
        policy_dir: Option<PathBuf>,
        #[arg(long)]
        addr: Option<SocketAddr>,
    },
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    pub policy_dir: PathBuf,
    /// Ignore unknown fields in configuration records.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct FactArgs {
    /// Custom fact as `FACT_ID=v1,v2`, values in rank order. Repeatable.
    #[arg(long = "fact", value_name = "FACT_ID=VALUES")]
    pub facts: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub facts: FactArgs,
    #[arg(long, default_value = "permissions")]
    pub priority: Priority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalFormat {
    Table,
    Json,
}

fn parse_graph_format(s: &str) -> Result<GraphFormat, String> {
    s.parse()
}

/// `FACT=a,b` into a request entry; no `=` means no parameters.
pub fn parse_fact(spec: &str) -> CustomFactRequest {
    let (fact, values) = match spec.split_once('=') {
        Some((f, v)) => (f, v.split(',').map(|s| serde_json::Value::String(s.trim().to_string())).collect()),
        None => (spec, Vec::new()),
    };
    CustomFactRequest { fact: fact.trim().to_string(), parameters: values }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INVALID, message: message.into() }
    }

    fn runtime(message: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.to_string() }
    }
}

type Outcome = Result<(), Failure>;

fn load(args: &PolicyArgs) -> Result<PolicyConfig, Failure> {
    load_policy_with(&args.policy_dir, LoadOptions { lenient: args.lenient }).map_err(|e| Failure::invalid(e.to_string()))
}

fn custom_facts(policy: &PolicyConfig, args: &FactArgs) -> Result<Vec<CustomFactInstance>, Failure> {
    let requests: Vec<_> = args.facts.iter().map(|f| parse_fact(f)).collect();
    policy.validate_custom_facts(&requests).map_err(|errors| {
        let lines: Vec<_> = errors.iter().map(|(i, e)| format!("--fact {}: {e}", args.facts[*i])).collect();
        Failure::invalid(lines.join("\n"))
    })
}

fn evaluate(policy: &PolicyConfig, scenario: &ScenarioArgs) -> Result<Evaluation, Failure> {
    let facts = custom_facts(policy, &scenario.facts)?;
    let engine = Engine::new(policy).map_err(Failure::runtime)?;
    engine.evaluate(policy, &facts, scenario.priority).map_err(Failure::runtime)
}

fn emit(out: &mut dyn Write, path: Option<&PathBuf>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::runtime(format!("{}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(Failure::runtime),
    }
}

/// Pars as aligned columns, in Par order: principal, resource, action, sign.
pub fn pars_table(pars: &[Par], registry: &Registry) -> String {
    let header = ["PRINCIPAL", "NAME", "SIGN", "ACTION", "RESOURCE", "CHAIN"].map(String::from);
    let mut rows = vec![header];
    for p in pars {
        let chain: Vec<_> = p.chain.iter().map(EntityId::as_str).collect();
        rows.push([
            p.principal.to_string(),
            registry.name(EntityKind::Principal, &p.principal).unwrap_or("").to_string(),
            p.sign.to_string(),
            p.permission.action.to_string(),
            p.permission.resource.to_string(),
            chain.join(" > "),
        ]);
    }
    let widths: Vec<usize> = (0..6).map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i == 5 {
                line.push_str(cell);
            } else {
                line.push_str(&format!("{cell:<w$}  ", w = widths[i]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn validate(args: &PolicyArgs, out: &mut dyn Write) -> Outcome {
    let policy = load(args)?;
    let r = &policy.registry;
    writeln!(
        out,
        "ok: {} principals, {} categories, {} actions, {} resources, {} sites, {} pcas, {} arcas, {} barcas, {} custom facts",
        r.len(EntityKind::Principal),
        r.len(EntityKind::Category),
        r.len(EntityKind::Action),
        r.len(EntityKind::Resource),
        r.len(EntityKind::Site),
        policy.pcas.len(),
        policy.arcas.len(),
        policy.barcas.len(),
        policy.custom_facts.len()
    )
    .map_err(Failure::runtime)
}

fn check(policy_args: &PolicyArgs, facts: &FactArgs, random: u64, seed: u64, out: &mut dyn Write) -> Outcome {
    let policy = load(policy_args)?;
    let facts = custom_facts(&policy, facts)?;
    let engine = Engine::new(&policy).map_err(Failure::runtime)?;
    let mut failed = false;
    for priority in [Priority::Permissions, Priority::Prohibitions] {
        let report = check_equivalence_with(&engine, &policy, &facts, priority).map_err(Failure::runtime)?;
        let status = if report.is_ok() { "ok" } else { "MISMATCH" };
        writeln!(out, "policy, priority {}: {status}", format!("{priority:?}").to_lowercase()).map_err(Failure::runtime)?;
        if !report.is_ok() {
            write!(out, "{report}").map_err(Failure::runtime)?;
            failed = true;
        }
    }
    if random > 0 {
        let mut mismatches = 0;
        for s in seed..seed + random {
            let p = random_policy(s, Limits::default(), false);
            let engine = Engine::new(&p).map_err(Failure::runtime)?;
            for priority in [Priority::Permissions, Priority::Prohibitions] {
                let eval = engine.evaluate(&p, &[], priority).map_err(|e| Failure::runtime(format!("seed {s}: {e}")))?;
                let oracle = axiom_par(&resolve_conflicts(&BaseRelations::from_policy(&p), priority));
                if project(&eval.pars) != oracle {
                    mismatches += 1;
                    writeln!(out, "random seed {s}, priority {}: MISMATCH", format!("{priority:?}").to_lowercase()).map_err(Failure::runtime)?;
                }
            }
        }
        writeln!(out, "random policies: {random}, mismatches: {mismatches}").map_err(Failure::runtime)?;
        failed |= mismatches > 0;
    }
    if failed {
        Err(Failure::invalid("engine and reference semantics disagree"))
    } else {
        Ok(())
    }
}

fn serve(policy_dir: Option<PathBuf>, addr: Option<SocketAddr>) -> Outcome {
    let config = ServiceConfig::resolve(addr, policy_dir).map_err(Failure::runtime)?;
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::runtime)?;
    runtime.block_on(gacm_service::serve(config)).map_err(Failure::runtime)
}

/// Runs one invocation, writing results to `out` and diagnostics to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Validate(args) => validate(&args, out),
        Command::Eval { policy, scenario, format, output } => load(&policy).and_then(|p| {
            let eval = evaluate(&p, &scenario)?;
            let pars: Vec<Par> = eval.pars.into_iter().collect();
            let text = match format {
                EvalFormat::Table => pars_table(&pars, &p.registry),
                EvalFormat::Json => serde_json::to_string_pretty(&pars).map_err(Failure::runtime)? + "\n",
            };
            emit(out, output.as_ref(), &text)
        }),
        Command::Graph { policy, scenario, format, output } => load(&policy).and_then(|p| {
            let eval = evaluate(&p, &scenario)?;
            emit(out, output.as_ref(), &export_graph(&build_graph(&eval.pars, &p.registry), format))
        }),
        Command::Check { policy, facts, random, seed } => check(&policy, &facts, random, seed, out),
        Command::Serve { policy_dir, addr } => serve(policy_dir, addr),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "{}", f.message);
            f.code
        }
    }
}
