//! Command-line front end.
//!
//! Exit codes: 0 no leak (or agreement), 1 usage or input error, 2 oracle
//! failure or iteration-cap breach, 3 leak detected, 4 oracle-check
//! disagreement.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::audit::{AuditConfig, Auditor, ExclusionMode};
use crate::error::{AuditError, OracleError};
use crate::explain::{is_fully_open, minimal_explanation, DeletionOrder};
use crate::genbench::{from_qbf, parse_qbf, random_model, GenKind, ShapeParams};
use crate::interchange::{parse_model, serialize, Instance};
use crate::model::{Individual, LiteralSet};
use crate::oracle::{bf_leak_table, OracleBudget};
use crate::report::{
    to_json, to_text, AgreementRecord, ConfigEcho, Outcome, Redactor, Report, Stats, Verdict,
    Witnesses, REPORT_VERSION,
};
use crate::sat::{encode, CnfEncoding, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_ORACLE: i32 = 2;
pub const EXIT_LEAK: i32 = 3;
pub const EXIT_DISAGREE: i32 = 4;

pub const SEED_ENV: &str = "LEAKAUDIT_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "leakaudit",
    version,
    about = "Audit Boolean decision processes for sensitive-value leakage"
)]
pub struct Cli {
    /// How the sensitive feature may appear in protecting explanations.
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Theorem)]
    pub mode: ModeArg,
    /// Fixed solver seed and no wall-time in reports.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,
    /// Largest feature count the brute-force oracle accepts.
    #[arg(long, global = true, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..=62))]
    pub oracle_budget: u64,
    /// Conflicts allowed per SAT call.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub conflict_budget: Option<u64>,
    /// Write the report (or generated document) here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Print private-profile literals of audited individuals.
    #[arg(long, global = true)]
    pub reveal_private: bool,
    /// Also write the model's CNF encoding (DIMACS) and a variable map.
    #[arg(long, global = true, value_name = "PATH")]
    pub dump_cnf: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OrderArg::Ascending)]
    pub deletion_order: OrderArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Theorem,
    Strict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    #[value(alias = "structured")]
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Ascending,
    PrivateFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Formula,
    Tree,
    Threshold,
}

#[derive(Args, Debug)]
pub struct ModelArg {
    /// Interchange document (JSON).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Audit one individual, given as a full assignment.
    AuditIndividual {
        #[command(flatten)]
        model: ModelArg,
        /// Every feature, e.g. `E=1,D=0,S=1,H=1`.
        #[arg(long)]
        assign: String,
    },
    /// Audit the whole decision process.
    AuditModel {
        #[command(flatten)]
        model: ModelArg,
        /// Override the default iteration cap.
        #[arg(long)]
        iteration_cap: Option<u64>,
    },
    /// Minimal explanation of one individual's decision.
    Explain {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        assign: String,
    },
    /// Compare SAT-based verdicts with brute-force enumeration.
    OracleCheck {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Emit a random or QBF-derived interchange document.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        features: usize,
        #[arg(long, value_enum, default_value_t = KindArg::Formula)]
        kind: KindArg,
        /// Formula or tree depth.
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        max_weight: Option<i64>,
        /// Hidden threshold units.
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        labels: Option<usize>,
        /// Build the leakage instance of a QBF file instead.
        #[arg(long, value_name = "FILE")]
        from_qbf: Option<PathBuf>,
    },
    /// Write the model's CNF encoding (DIMACS) plus `PATH.map.json`.
    DumpCnf {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure that ends the command with a specific exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn oracle(e: OracleError) -> Self {
        Failure {
            code: EXIT_ORACLE,
            message: format!("oracle failure: {e}"),
        }
    }
}

impl From<AuditError> for Failure {
    fn from(e: AuditError) -> Self {
        match e {
            AuditError::Oracle(o) => Failure::oracle(o),
            other => Failure {
                code: EXIT_ORACLE,
                message: format!("internal error: {other}"),
            },
        }
    }
}

/// Runs the CLI with the solver seed taken from `LEAKAUDIT_SEED`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_seed(args, std::env::var(SEED_ENV).ok(), stdout, stderr)
}

/// As [`run`], with the seed override passed explicitly.
pub fn run_with_seed<I, T>(
    args: I,
    seed_env: Option<String>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, seed_env, stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

struct Context {
    seed: u64,
    solver: SolverConfig,
    audit: AuditConfig,
}

fn context(cli: &Cli, seed_env: Option<String>) -> Result<Context, Failure> {
    let seed = match seed_env {
        Some(s) => s.trim().parse::<u64>().map_err(|_| {
            Failure::input(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))
        })?,
        None if cli.deterministic => SolverConfig::default().seed,
        None => SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0),
    };
    let solver = SolverConfig {
        conflict_budget: cli.conflict_budget,
        seed,
        ..SolverConfig::default()
    };
    let audit = AuditConfig {
        mode: match cli.mode {
            ModeArg::Theorem => ExclusionMode::Theorem,
            ModeArg::Strict => ExclusionMode::Strict,
        },
        deletion_order: match cli.deletion_order {
            OrderArg::Ascending => DeletionOrder::Ascending,
            OrderArg::PrivateFirst => DeletionOrder::PrivateFirst,
        },
        ..AuditConfig::default()
    };
    Ok(Context {
        seed,
        solver,
        audit,
    })
}

fn load(path: &Path) -> Result<Instance, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Parses `NAME=VALUE,...` into a full assignment.
pub fn parse_assignment(
    text: &str,
    space: &crate::model::FeatureSpace,
) -> Result<Individual, String> {
    let mut values: Vec<Option<bool>> = vec![None; space.len()];
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| format!("expected NAME=VALUE, got `{item}`"))?;
        let (name, value) = (name.trim(), value.trim());
        let f = space
            .index_of(name)
            .ok_or_else(|| format!("unknown feature `{name}`"))?;
        let b = match value {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(format!("value of `{name}` must be 0 or 1, got `{value}`")),
        };
        if values[f].replace(b).is_some() {
            return Err(format!("feature `{name}` assigned twice"));
        }
    }
    let missing: Vec<&str> = (0..space.len())
        .filter(|&f| values[f].is_none())
        .map(|f| space.name(f))
        .collect();
    if !missing.is_empty() {
        return Err(format!(
            "partial assignment; missing {}",
            missing.join(", ")
        ));
    }
    Ok(Individual::new(
        values.into_iter().map(Option::unwrap).collect(),
    ))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn map_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".map.json");
    PathBuf::from(s)
}

fn dump_cnf(enc: &CnfEncoding, inst: &Instance, path: &Path) -> Result<(), Failure> {
    write_file(path, &enc.to_dimacs())?;
    let map = serde_json::to_string_pretty(&enc.variable_map(&inst.space))
        .expect("variable maps serialize");
    write_file(&map_path(path), &(map + "\n"))
}

fn emit(cli: &Cli, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match &cli.output {
        Some(p) => write_file(p, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::input(format!("stdout: {e}"))),
    }
}

fn emit_report(cli: &Cli, report: &Report, stdout: &mut dyn Write) -> Result<(), Failure> {
    let text = match cli.format {
        FormatArg::Text => to_text(report),
        FormatArg::Json => to_json(report),
    };
    emit(cli, &text, stdout)
}

fn elapsed_us(cli: &Cli, start: Instant) -> Option<u64> {
    (!cli.deterministic).then(|| start.elapsed().as_micros() as u64)
}

fn exit_for(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Leaks => EXIT_LEAK,
        Outcome::Disagree => EXIT_DISAGREE,
        _ => EXIT_OK,
    }
}

fn execute(
    cli: &Cli,
    seed_env: Option<String>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let ctx = context(cli, seed_env)?;
    let (command, model_path) = match &cli.command {
        Command::AuditIndividual { model, .. } => ("audit-individual", &model.model),
        Command::AuditModel { model, .. } => ("audit-model", &model.model),
        Command::Explain { model, .. } => ("explain", &model.model),
        Command::OracleCheck { model } => ("oracle-check", &model.model),
        Command::DumpCnf { model, out } => {
            let inst = load(&model.model)?;
            let enc = encode(&inst.model).map_err(|e| Failure::input(e.to_string()))?;
            dump_cnf(&enc, &inst, out)?;
            return Ok(EXIT_OK);
        }
        Command::Gen { .. } => return generate(cli, stdout, stderr),
    };
    let start = Instant::now();
    let inst = load(model_path)?;
    let budget = OracleBudget {
        max_features: cli.oracle_budget as usize,
    };
    if command == "oracle-check" {
        // Refuse before any solving.
        budget
            .check(inst.space.len())
            .map_err(|e| Failure::input(format!("refused: {e}")))?;
    }
    let enc = Arc::new(encode(&inst.model).map_err(|e| Failure::input(e.to_string()))?);
    if let Some(p) = &cli.dump_cnf {
        dump_cnf(&enc, &inst, p)?;
    }
    let red = Redactor {
        space: &inst.space,
        partition: &inst.partition,
        reveal_private: cli.reveal_private,
    };
    let mut stats = Stats {
        cnf_vars: enc.num_vars() as u64,
        cnf_clauses: enc.clauses().len() as u64,
        ..Stats::default()
    };
    let mut auditor = Auditor::new(
        &inst.model,
        &inst.partition,
        enc.clone(),
        ctx.solver,
        ctx.audit,
    );
    let (verdict, witnesses) = match &cli.command {
        Command::AuditIndividual { assign, .. } => {
            let x = parse_assignment(assign, &inst.space).map_err(Failure::input)?;
            let v = auditor.audit_individual(&x).map_err(Failure::oracle)?;
            stats.oracle_calls = v.stats.oracle_calls;
            red.individual_report(&v)
        }
        Command::AuditModel { iteration_cap, .. } => {
            if iteration_cap.is_some() {
                let audit = AuditConfig {
                    iteration_cap: *iteration_cap,
                    ..ctx.audit
                };
                auditor =
                    Auditor::new(&inst.model, &inst.partition, enc.clone(), ctx.solver, audit);
            }
            let v = auditor.audit_model()?;
            stats.oracle_calls = v.stats.oracle_calls;
            stats.iterations = Some(v.iterations);
            stats.iteration_cap = Some(v.iteration_cap);
            red.model_report(&v)
        }
        Command::Explain { assign, .. } => {
            let x = parse_assignment(assign, &inst.space).map_err(Failure::input)?;
            let d = inst.model.evaluate(&x);
            let oracle = auditor.oracle();
            let before = oracle.calls();
            let e = minimal_explanation(
                oracle,
                &x,
                d,
                &LiteralSet::new(),
                &inst.partition,
                ctx.audit.deletion_order,
            )
            .map_err(Failure::oracle)?;
            let open =
                is_fully_open(oracle, &inst.model, &x, &inst.partition).map_err(Failure::oracle)?;
            stats.oracle_calls = oracle.calls() - before;
            let verdict = Verdict {
                outcome: if e.is_some() {
                    Outcome::Explained
                } else {
                    Outcome::NoExplanation
                },
                scope: "the given individual".into(),
                decision: Some(d.to_string()),
                fully_open: Some(open.is_some()),
            };
            let w = Witnesses {
                subject: Some(red.individual(&x, d)),
                explanation: e.as_ref().map(|e| red.own_explanation(e)),
                ..Witnesses::default()
            };
            (verdict, w)
        }
        Command::OracleCheck { .. } => oracle_check(&inst, &mut auditor, budget, &mut stats)?,
        Command::DumpCnf { .. } | Command::Gen { .. } => unreachable!("handled above"),
    };
    stats.elapsed_us = elapsed_us(cli, start);
    let report = Report {
        report_version: REPORT_VERSION,
        command: command.into(),
        config_echo: ConfigEcho {
            model: model_path.display().to_string(),
            mode: ctx.audit.mode,
            deterministic: cli.deterministic,
            oracle_budget: cli.oracle_budget,
            conflict_budget: cli.conflict_budget,
            seed: ctx.seed,
            deletion_order: ctx.audit.deletion_order,
            reveal_private: cli.reveal_private,
        },
        verdict,
        witnesses,
        stats,
    };
    emit_report(cli, &report, stdout)?;
    Ok(exit_for(report.verdict.outcome))
}

fn oracle_check(
    inst: &Instance,
    auditor: &mut Auditor<'_>,
    budget: OracleBudget,
    stats: &mut Stats,
) -> Result<(Verdict, Witnesses), Failure> {
    let table = bf_leak_table(&inst.model, &inst.partition, budget)
        .map_err(|e| Failure::input(format!("refused: {e}")))?;
    let bf_model = table.iter().any(|(_, l)| *l);
    let mv = auditor.audit_model()?;
    stats.oracle_calls += mv.stats.oracle_calls;
    stats.iterations = Some(mv.iterations);
    let mut disagreements = Vec::new();
    if mv.leaks != bf_model {
        disagreements.push(format!(
            "model: sat says leaks={}, brute force says leaks={bf_model}",
            mv.leaks
        ));
    }
    // Enumerated individuals are synthetic, so they are printed in full.
    for (x, leaks) in &table {
        let v = auditor.audit_individual(x).map_err(Failure::oracle)?;
        stats.oracle_calls += v.stats.oracle_calls;
        if v.leaks != *leaks {
            disagreements.push(format!(
                "{}: sat says leaks={}, brute force says leaks={leaks}",
                x.literals().render(&inst.space),
                v.leaks
            ));
        }
    }
    let outcome = if disagreements.is_empty() {
        Outcome::Agree
    } else {
        Outcome::Disagree
    };
    let verdict = Verdict {
        outcome,
        scope: format!(
            "the model and every individual with {} = {}",
            inst.space.name(inst.partition.sensitive()),
            inst.partition.protected_value() as u8
        ),
        decision: None,
        fully_open: None,
    };
    let w = Witnesses {
        agreement: Some(AgreementRecord {
            model_sat: mv.leaks,
            model_brute_force: bf_model,
            individuals_checked: table.len() as u64,
            disagreements,
        }),
        ..Witnesses::default()
    };
    Ok((verdict, w))
}

fn generate(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let Command::Gen {
        seed,
        features,
        kind,
        depth,
        max_weight,
        hidden,
        labels,
        from_qbf: qbf_path,
    } = &cli.command
    else {
        unreachable!("generate is only called for gen")
    };
    let inst = if let Some(path) = qbf_path {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let q = parse_qbf(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let budget = OracleBudget {
            max_features: cli.oracle_budget as usize,
        };
        let (inst, truth) = from_qbf(&q, budget).map_err(|e| Failure::input(e.to_string()))?;
        match truth {
            Some(t) => {
                let _ = writeln!(
                    stderr,
                    "qbf is {}; expected audit-model verdict: {}",
                    t,
                    if t { "LEAKS" } else { "NO LEAK" }
                );
            }
            None => {
                let _ = writeln!(stderr, "qbf exceeds the oracle budget; truth not computed");
            }
        }
        inst
    } else {
        let mut shape = ShapeParams::default();
        let kind = match kind {
            KindArg::Formula => GenKind::Formula,
            KindArg::Tree => GenKind::Tree,
            KindArg::Threshold => GenKind::Threshold,
        };
        if let Some(d) = depth {
            shape.formula_depth = *d;
            shape.tree_depth = *d;
        }
        if let Some(w) = max_weight {
            shape.max_weight = *w;
        }
        if let Some(h) = hidden {
            shape.hidden_units = *h;
        }
        if let Some(l) = labels {
            shape.labels = *l;
        }
        random_model(*seed, *features, kind, shape).map_err(|e| Failure::input(e.to_string()))?
    };
    emit(cli, &serialize(&inst), stdout)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureSpace;

    #[test]
    fn assignment_parsing() {
        let space = FeatureSpace::new(["E", "D", "S", "H"]).unwrap();
        let x = parse_assignment("E=1, D=0,S=true,H=0", &space).unwrap();
        assert_eq!(x.values(), &[true, false, true, false]);
        assert_eq!(
            parse_assignment("E=1,D=0", &space).unwrap_err(),
            "partial assignment; missing S, H"
        );
        assert!(parse_assignment("E=1,E=0,D=0,S=1,H=1", &space).is_err());
        assert!(parse_assignment("E=2,D=0,S=1,H=1", &space).is_err());
        assert!(parse_assignment("Q=1,E=1,D=0,S=1,H=1", &space).is_err());
        assert!(parse_assignment("E1,D=0,S=1,H=1", &space).is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn help_exits_zero_and_bad_flag_exits_one() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(
            run_with_seed(["leakaudit", "--help"], None, &mut out, &mut err),
            EXIT_OK
        );
        assert!(String::from_utf8(out).unwrap().contains("audit-individual"));
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(
            run_with_seed(
                ["leakaudit", "audit-model", "--bogus"],
                None,
                &mut out,
                &mut err
            ),
            EXIT_INPUT
        );
    }

    #[test]
    fn bad_seed_env_is_input_error() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with_seed(
            ["leakaudit", "audit-model", "--model", "x.json"],
            Some("abc".into()),
            &mut out,
            &mut err,
        );
        assert_eq!(code, EXIT_INPUT);
        assert!(String::from_utf8(err).unwrap().contains(SEED_ENV));
    }
}
