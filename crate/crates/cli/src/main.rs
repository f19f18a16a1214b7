//! `rcm`: validate models, answer separation queries, run the bounded
//! verification sweeps and export graphs.
//!
//! Exit codes: 0 success or separated, 1 connected or violation, 2 usage or
//! I/O error, 3 mode mismatch, 4 resource limit.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rcm_core::oracle::{check_lemma1, reproduce_counterexample, verify_abstraction, Lemma1Options, VerifyOptions};
use rcm_core::{
    build_agg, fixtures, ground, relational_separated, terminal_set, validate_skeleton, AggMode, AttributeNode,
    Mode, RcmError, RelationalModel, RelationalVariable, Skeleton,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "rcm", version, about = "Relational causal models with cycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model (and optionally a skeleton) for violations.
    Validate {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        skeleton: SkeletonArg,
        /// Also require every entity instance to have degree at least 2.
        #[arg(long)]
        min_degree_2: bool,
    },
    /// Answer a separation query on the abstract ground graph, or on the
    /// ground graph of a skeleton from one base instance.
    Sep {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        skeleton: SkeletonArg,
        /// Base instance for a ground query.
        #[arg(long, requires = "skeleton_source")]
        base: Option<String>,
    },
    /// Compare abstract and ground verdicts over enumerated skeletons.
    Verify {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        perspective: Option<String>,
        #[arg(long)]
        hop: Option<usize>,
        #[arg(long, value_enum, default_value = "sigma")]
        mode: ModeArg,
        /// Largest number of instances per entity class.
        #[arg(long, default_value_t = 3)]
        max_entities: usize,
        /// Largest conditioning set in the query sweep.
        #[arg(long, default_value_t = 2)]
        max_z: usize,
        /// Worker threads; 0 picks one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Stop after this many skeletons (exit 4 with a partial report).
        #[arg(long)]
        max_skeletons: Option<usize>,
        /// Check every skeleton rather than only those with entity degrees of at least 2.
        #[arg(long)]
        no_degree_filter: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a ground graph or abstract ground graph as DOT or JSON.
    Export {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum)]
        what: What,
        #[arg(long, value_enum, default_value = "dot")]
        format: GraphFormat,
        #[command(flatten)]
        skeleton: SkeletonArg,
        #[arg(long)]
        perspective: Option<String>,
        #[arg(long)]
        hop: Option<usize>,
        /// `d` builds the acyclic abstract ground graph.
        #[arg(long, value_enum, default_value = "sigma")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(id = "model_source", required = true, multiple = false)]
struct ModelArg {
    /// Model JSON file.
    model: Option<PathBuf>,
    /// Built-in model: user-media-acyclic, user-media-cyclic or lee-counterexample.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Args)]
#[group(id = "skeleton_source", multiple = false)]
struct SkeletonArg {
    /// Skeleton JSON file.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Built-in skeleton: alice-bob.
    #[arg(long)]
    skeleton_builtin: Option<String>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    perspective: Option<String>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Relational variable such as "[USER, REACTS, POST].Engagement"; repeatable.
    #[arg(long, required = true)]
    x: Vec<String>,
    #[arg(long, required = true)]
    y: Vec<String>,
    #[arg(long)]
    z: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    D,
    Sigma,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::D => Mode::D,
            ModeArg::Sigma => Mode::Sigma,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Gg,
    Agg,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Dot,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

/// An error with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<RcmError> for Failure {
    fn from(e: RcmError) -> Self {
        let code = match e {
            RcmError::ModeMismatch(_) | RcmError::CyclicModel => 3,
            RcmError::StateLimitExceeded { .. } => 4,
            _ => 2,
        };
        let message = if code == 3 { format!("MODE_MISMATCH: {e}") } else { e.to_string() };
        Failure { code, message }
    }
}

type CmdResult = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_model(arg: &ModelArg) -> Result<(RelationalModel, String), Failure> {
    match (&arg.model, &arg.builtin) {
        (_, Some(name)) => fixtures::model(name)
            .map(|m| (m, name.clone()))
            .ok_or_else(|| Failure::usage(format!("unknown built-in model `{name}`"))),
        (Some(path), None) => {
            let model = RelationalModel::from_json(&read(path)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            Ok((model, path.display().to_string()))
        }
        (None, None) => Err(Failure::usage("a model file or --builtin is required")),
    }
}

fn load_skeleton(arg: &SkeletonArg) -> Result<Option<Skeleton>, Failure> {
    match (&arg.skeleton, &arg.skeleton_builtin) {
        (_, Some(name)) => fixtures::skeleton(name)
            .map(Some)
            .ok_or_else(|| Failure::usage(format!("unknown built-in skeleton `{name}`"))),
        (Some(path), None) => Skeleton::from_json(&read(path)?)
            .map(Some)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display()))),
        (None, None) => Ok(None),
    }
}

fn hop(model: &RelationalModel, flag: Option<usize>) -> Result<usize, Failure> {
    flag.or(model.hop_threshold_hint)
        .ok_or_else(|| Failure::usage("--hop is required when the model has no hop_threshold"))
}

fn parse_vars(items: &[String]) -> Result<BTreeSet<RelationalVariable>, Failure> {
    items.iter().map(|s| s.parse().map_err(|e: RcmError| Failure::usage(e.to_string()))).collect()
}

/// Perspective from the flag, else the first class shared by all variables.
fn perspective(flag: &Option<String>, vars: &[&BTreeSet<RelationalVariable>]) -> Result<String, Failure> {
    if let Some(p) = flag {
        return Ok(p.clone());
    }
    let firsts: BTreeSet<&str> = vars.iter().flat_map(|s| s.iter().map(|v| v.path.first())).collect();
    match firsts.len() {
        1 => Ok(firsts.into_iter().next().unwrap().to_string()),
        _ => Err(Failure::usage("variables start at different classes; pass --perspective")),
    }
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(model: &ModelArg, skeleton: &SkeletonArg, min_degree_2: bool) -> CmdResult {
    let (model, name) = load_model(model)?;
    let mut violations = model.validate();
    if let Some(sk) = load_skeleton(skeleton)? {
        violations.extend(validate_skeleton(&model.schema, &sk, min_degree_2));
    }
    for v in &violations {
        eprintln!("{}", json!({ "code": v.code, "message": v.message }));
    }
    if violations.is_empty() {
        println!("{name}: valid");
        Ok(0)
    } else {
        println!("{name}: {} violation(s)", violations.len());
        Ok(1)
    }
}

fn cmd_sep(model: &ModelArg, q: &QueryArgs, skeleton: &SkeletonArg, base: &Option<String>) -> CmdResult {
    let (model, _) = load_model(model)?;
    model.ensure_valid().map_err(|e| Failure::usage(e.to_string()))?;
    let mode: Mode = q.mode.into();
    if mode == Mode::D && model.is_cyclic() {
        return Err(RcmError::ModeMismatch("mode d needs an acyclic model; use --mode sigma".into()).into());
    }
    let (x, y, z) = (parse_vars(&q.x)?, parse_vars(&q.y)?, parse_vars(&q.z)?);
    let sk = load_skeleton(skeleton)?;

    let (separated, witness) = match sk {
        None => {
            let p = perspective(&q.perspective, &[&x, &y, &z])?;
            let agg_mode = if mode == Mode::D { AggMode::Acyclic } else { AggMode::Sigma };
            let agg = build_agg(&model, &p, hop(&model, q.hop)?, agg_mode)?;
            let r = relational_separated(&agg, &x, &y, &z, mode)?;
            (r.separated, r.witness.map(|w| agg.render_walk(&w)))
        }
        Some(sk) => {
            let base = base.as_ref().ok_or_else(|| Failure::usage("--base is required with a skeleton"))?;
            let gg = ground(&model, &sk)?;
            let nodes = |vars: &BTreeSet<RelationalVariable>| -> Result<BTreeSet<AttributeNode>, Failure> {
                let mut out = BTreeSet::new();
                for v in vars {
                    for i in terminal_set(&sk, &v.path, base)?.instances {
                        out.insert(AttributeNode { instance: i, attribute: v.attribute.clone() });
                    }
                }
                Ok(out)
            };
            let zs = nodes(&z)?;
            let xs: BTreeSet<_> = nodes(&x)?.difference(&zs).cloned().collect();
            let ys: BTreeSet<_> = nodes(&y)?.difference(&zs).cloned().collect();
            if xs.is_empty() || ys.is_empty() {
                (true, None)
            } else if let Some(shared) = xs.intersection(&ys).next() {
                (false, Some(shared.to_string()))
            } else {
                let r = gg.separated(&xs, &ys, &zs, mode)?;
                (r.separated, r.witness.map(|w| gg.render_walk(&w)))
            }
        }
    };
    if separated {
        println!("SEPARATED");
        Ok(0)
    } else {
        println!("CONNECTED");
        if let Some(w) = witness {
            println!("witness: {w}");
        }
        Ok(1)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    model_arg: &ModelArg,
    perspective: &Option<String>,
    hop_flag: Option<usize>,
    mode: Mode,
    max_entities: usize,
    max_z: usize,
    jobs: usize,
    max_skeletons: Option<usize>,
    no_degree_filter: bool,
    format: ReportFormat,
    out: &Option<PathBuf>,
) -> CmdResult {
    if max_entities == 0 {
        return Err(Failure::usage("--max-entities must be at least 1"));
    }
    if model_arg.builtin.as_deref() == Some("lee-counterexample") {
        let report = reproduce_counterexample(max_entities)?;
        let text = match format {
            ReportFormat::Json => report.to_json(),
            ReportFormat::Table => format!(
                "claim 1 (abstract connection)      {}\nclaim 2 (no ground connection)     {}\nwitness                            {}\nskeletons checked                  {}\nskeletons with entity degrees >= 2 {}\n",
                report.claim1,
                report.claim2,
                report.claim1_witness.as_deref().unwrap_or("-"),
                report.skeletons,
                report.filtered_skeletons
            ),
        };
        write_out(out, &text)?;
        return Ok(0);
    }
    let (model, name) = load_model(model_arg)?;
    model.ensure_valid().map_err(|e| Failure::usage(e.to_string()))?;
    let h = hop(&model, hop_flag)?;
    let p = match perspective {
        Some(p) => p.clone(),
        None => model
            .schema
            .entities
            .first()
            .map(|e| e.name.clone())
            .ok_or_else(|| Failure::usage("--perspective is required"))?,
    };
    let options = VerifyOptions {
        max_per_entity: max_entities,
        max_z,
        require_min_degree_2: !no_degree_filter,
        jobs,
        max_skeletons,
        ..Default::default()
    };
    let report = verify_abstraction(&model, &name, &p, h, mode, &options)?;
    let lemma1 = if model.is_cyclic() {
        None
    } else {
        let options = Lemma1Options {
            max_per_entity: max_entities,
            require_min_degree_2: !no_degree_filter,
            max_skeletons,
            ..Default::default()
        };
        Some(check_lemma1(&model, &name, &p, h, &options)?)
    };
    let text = match format {
        ReportFormat::Json => {
            let value = json!({ "abstraction": report, "lemma1": lemma1 });
            serde_json::to_string_pretty(&value).expect("report serializes") + "\n"
        }
        ReportFormat::Table => {
            let mut s = report.to_table();
            if let Some(l) = &lemma1 {
                s += &format!(
                    "realized nodes {} of {}{}\n",
                    l.nodes.len() - l.unrealized.len(),
                    l.nodes.len(),
                    if l.unrealized.is_empty() { String::new() } else { format!(" (missing: {})", l.unrealized.join("; ")) }
                );
            }
            s
        }
    };
    write_out(out, &text)?;
    let capped = !report.complete || lemma1.as_ref().is_some_and(|l| !l.complete);
    if capped {
        eprintln!("stopped at --max-skeletons; the report is partial");
        return Ok(4);
    }
    Ok(if report.soundness_disagreements.is_empty() { 0 } else { 1 })
}

#[allow(clippy::too_many_arguments)]
fn cmd_export(
    model: &ModelArg,
    what: What,
    format: GraphFormat,
    skeleton: &SkeletonArg,
    perspective: &Option<String>,
    hop_flag: Option<usize>,
    mode: Mode,
    out: &Option<PathBuf>,
) -> CmdResult {
    let (model, _) = load_model(model)?;
    model.ensure_valid().map_err(|e| Failure::usage(e.to_string()))?;
    let text = match what {
        What::Gg => {
            let sk = load_skeleton(skeleton)?
                .ok_or_else(|| Failure::usage("--what gg needs --skeleton or --skeleton-builtin"))?;
            let gg = ground(&model, &sk)?;
            match format {
                GraphFormat::Dot => gg.export_dot(),
                GraphFormat::Json => gg.to_json(),
            }
        }
        What::Agg => {
            let p = perspective.as_ref().ok_or_else(|| Failure::usage("--what agg needs --perspective"))?;
            let agg_mode = if mode == Mode::D { AggMode::Acyclic } else { AggMode::Sigma };
            let agg = build_agg(&model, p, hop(&model, hop_flag)?, agg_mode)?;
            match format {
                GraphFormat::Dot => agg.export_dot(),
                GraphFormat::Json => agg.to_json(),
            }
        }
    };
    write_out(out, &text)?;
    Ok(0)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Validate { model, skeleton, min_degree_2 } => cmd_validate(&model, &skeleton, min_degree_2),
        Command::Sep { model, query, skeleton, base } => cmd_sep(&model, &query, &skeleton, &base),
        Command::Verify {
            model,
            perspective,
            hop,
            mode,
            max_entities,
            max_z,
            jobs,
            max_skeletons,
            no_degree_filter,
            format,
            out,
        } => cmd_verify(
            &model,
            &perspective,
            hop,
            mode.into(),
            max_entities,
            max_z,
            jobs,
            max_skeletons,
            no_degree_filter,
            format,
            &out,
        ),
        Command::Export { model, what, format, skeleton, perspective, hop, mode, out } => {
            cmd_export(&model, what, format, &skeleton, &perspective, hop, mode.into(), &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
