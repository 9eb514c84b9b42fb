//! `falcon` command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use falcon_core::bundle::{read_mask, read_weights};
use falcon_core::ilp::brute_force_ilp;
use falcon_core::multistage::StageModel;
use falcon_core::{
    bso_dfo, eval_mask, falcon_pp, project, read_bundle, solve_ilp, write_result, BudgetSchedule,
    Budgets, DfoConfig, FalconError, GroupStructure, GroupedInstance, IlpOptions, LowRankQuadratic,
    Mask, ProblemBundle, Report, SelectionMode, StageProvider, StaticProvider, SubprocessProvider,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_PROVIDER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "falcon", version, about = "Prune weights under joint NNZ and FLOP budgets")]
struct Cli {
    /// Worker threads (default: FALCON_THREADS, else all cores). 1 is fully serial.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Magnitude pruning with FLOP awareness: keep the largest squared weights.
    PruneMp(SelectArgs),
    /// Single-stage solve of the quadratic model.
    Prune(PruneArgs),
    /// Multi-stage solve along a decreasing budget schedule.
    PruneMulti(MultiArgs),
    /// Euclidean projection of the bundle weights (or --weights) onto the budgets.
    Project {
        #[command(flatten)]
        select: SelectArgs,
        /// Project this weights file instead of the bundle weights.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Report counts, FLOPs and model value of a mask.
    Eval(EvalArgs),
    /// Compare the solver against exhaustive search (p <= 25).
    Verify(SelectArgs),
}

#[derive(Debug, Args)]
struct BudgetArgs {
    /// NNZ budget: a count, or a fraction of p such as 0.5x.
    #[arg(long)]
    nnz: Option<String>,
    /// FLOP budget: an absolute value, or a fraction of the dense FLOPs such as 0.2x.
    #[arg(long)]
    flops: Option<String>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    bundle: PathBuf,
    #[command(flatten)]
    budgets: BudgetArgs,
    /// Golden-section tolerance relative to the initial bracket.
    #[arg(long = "eps", default_value_t = 1e-10)]
    eps: f64,
    /// Result directory (default: BUNDLE.out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Ridge strength lambda; the model adds (n lambda / 2) ||w - wbar||^2.
    #[arg(long, default_value_t = 1e-4)]
    ridge: f64,
    /// Curvature scale rho.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Largest block size.
    #[arg(long, default_value_t = 2000)]
    bsize: usize,
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[command(flatten)]
    select: SelectArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Base step size.
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    /// Restricted steps per active-set round.
    #[arg(long = "T", default_value_t = 1)]
    inner_steps: usize,
    /// Active-set round cap.
    #[arg(long, default_value_t = 20)]
    max_rounds: usize,
}

#[derive(Debug, Args)]
struct MultiArgs {
    #[command(flatten)]
    prune: PruneArgs,
    #[arg(long, default_value_t = 20)]
    stages: usize,
    /// Schedule shape: S_t = S + (S_0 - S)(1 - t/T)^exponent.
    #[arg(long, default_value_t = 3.0)]
    exponent: f64,
    /// Shell command producing a fresh bundle per stage (default: reuse the input bundle).
    #[arg(long)]
    provider: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    bundle: PathBuf,
    mask: PathBuf,
    #[command(flatten)]
    budgets: BudgetArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Evaluate these weights (default: bundle weights under the mask).
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Solver(FalconError),
}

impl From<FalconError> for CliError {
    fn from(e: FalconError) -> Self {
        CliError::Solver(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn exit_code(e: &FalconError) -> i32 {
    match e {
        FalconError::Format { .. } | FalconError::Io(_) | FalconError::Dimension { .. } => {
            EXIT_FORMAT
        }
        FalconError::Provider(_) => EXIT_PROVIDER,
        FalconError::Stage { source, .. } => exit_code(source),
        FalconError::InvalidInstance(_)
        | FalconError::Domain(_)
        | FalconError::Certificate(_)
        | FalconError::Size { .. }
        | FalconError::Singular(_) => EXIT_INFEASIBLE,
    }
}

/// Parse `"12"` or `"0.25x"`; fractions scale `dense`.
fn parse_amount(text: &str, dense: f64, what: &str) -> CliResult<f64> {
    let t = text.trim();
    let (number, fraction) = match t.strip_suffix('x') {
        Some(head) => (head, true),
        None => (t, false),
    };
    let v: f64 = number
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid {what} budget {text:?}")))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(CliError::Usage(format!("{what} budget must be nonnegative, got {text:?}")));
    }
    Ok(if fraction { v * dense } else { v })
}

fn parse_budgets(args: &BudgetArgs, groups: &GroupStructure) -> CliResult<Budgets> {
    parse_budget_strings(args.nnz.as_deref(), args.flops.as_deref(), groups, true)
}

fn parse_budget_strings(
    nnz: Option<&str>,
    flops: Option<&str>,
    groups: &GroupStructure,
    required: bool,
) -> CliResult<Budgets> {
    if required && nnz.is_none() && flops.is_none() {
        return Err(CliError::Usage(
            "at least one of --nnz and --flops is required".into(),
        ));
    }
    let nnz = nnz
        .map(|s| {
            let v = parse_amount(s, groups.len() as f64, "NNZ")?;
            if s.trim().ends_with('x') {
                Ok(v.round() as usize)
            } else if v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Usage(format!("NNZ budget must be an integer, got {s:?}")))
            }
        })
        .transpose()?;
    let flops = flops
        .map(|s| parse_amount(s, groups.dense_flops(), "FLOP"))
        .transpose()?;
    Ok(Budgets::new(nnz, flops))
}

fn mode_of(b: &Budgets) -> SelectionMode {
    match (b.nnz, b.flops) {
        (Some(_), Some(_)) => SelectionMode::Joint,
        (None, Some(_)) => SelectionMode::FlopOnly,
        _ => SelectionMode::SparsityOnly,
    }
}

fn out_dir(args: &SelectArgs) -> PathBuf {
    args.out.clone().unwrap_or_else(|| {
        let mut s = args.bundle.clone().into_os_string();
        s.push(".out");
        PathBuf::from(s)
    })
}

fn ilp_options(eps: f64) -> CliResult<IlpOptions> {
    if !(eps > 0.0) {
        return Err(CliError::Usage(format!("--eps must be positive, got {eps}")));
    }
    Ok(IlpOptions {
        rel_tol: eps,
        ..IlpOptions::default()
    })
}

fn dfo_config(args: &PruneArgs) -> CliResult<DfoConfig> {
    Ok(DfoConfig {
        tau: args.tau,
        inner_steps: args.inner_steps,
        max_rounds: args.max_rounds,
        ilp: ilp_options(args.select.eps)?,
        ..DfoConfig::default()
    })
}

fn finish(dir: &Path, mask: &Mask, weights: &[f64], report: &Report) -> CliResult<()> {
    write_result(dir, mask, weights, report)?;
    print!("{}", report.render());
    println!("result={}", dir.display());
    Ok(())
}

fn squared(w: &[f64]) -> Vec<f64> {
    w.iter().map(|v| v * v).collect()
}

fn select_report(
    command: &str,
    bundle: &ProblemBundle,
    args: &SelectArgs,
    input: Vec<f64>,
) -> CliResult<()> {
    let groups = bundle.groups();
    let b = parse_budgets(&args.budgets, &groups)?;
    let pr = project(&input, &groups, &b, &ilp_options(args.eps)?)?;
    let report = Report::for_projection(command, &pr, &groups, &b);
    finish(&out_dir(args), &pr.mask, &pr.x, &report)
}

fn model_of(bundle: &ProblemBundle, args: &ModelArgs) -> CliResult<LowRankQuadratic> {
    Ok(LowRankQuadratic::from_bundle(
        bundle, args.ridge, args.rho, args.bsize,
    )?)
}

fn solve_report(
    command: &str,
    bundle: &ProblemBundle,
    select: &SelectArgs,
    model: &ModelArgs,
    b: &Budgets,
    w: &[f64],
    trace: Option<&falcon_core::SolveTrace>,
) -> CliResult<()> {
    let groups = bundle.groups();
    let mask = Mask::support_of(w);
    let m = model_of(bundle, model)?;
    let mut report = Report::new(command, &mask, &groups, b);
    report.mode = Some(mode_of(b).as_str());
    report.objective = Some(GroupedInstance::new(groups, squared(&bundle.weights_f64()))?.objective(&mask));
    report.q_l = Some(m.objective(w)?);
    if let Some(t) = trace {
        report.dual_value = Some(t.dual_value);
        report.gap_bound = Some(t.gap_bound);
    }
    finish(&out_dir(select), &mask, w, &report)
}

fn cmd_prune(args: &PruneArgs) -> CliResult<()> {
    let bundle = read_bundle(&args.select.bundle)?;
    let groups = bundle.groups();
    let b = parse_budgets(&args.select.budgets, &groups)?;
    let cfg = dfo_config(args)?;
    let m = model_of(&bundle, &args.model)?;
    let (w, trace) = bso_dfo(&m, m.w_bar(), &cfg, &groups, &b)?;
    solve_report("prune", &bundle, &args.select, &args.model, &b, &w, Some(&trace))
}

fn cmd_prune_multi(args: &MultiArgs) -> CliResult<()> {
    let p = &args.prune;
    let bundle = read_bundle(&p.select.bundle)?;
    let groups = bundle.groups();
    let b = parse_budgets(&p.select.budgets, &groups)?;
    let cfg = dfo_config(p)?;
    let dense_nnz = bundle.weights.iter().filter(|&&w| w != 0.0).count();
    let schedule =
        BudgetSchedule::toward(&b, dense_nnz, groups.dense_flops(), args.stages, args.exponent)?;
    let mut provider: Box<dyn StageProvider> = match &args.provider {
        Some(cmd) => Box::new(SubprocessProvider::new(cmd.clone())?),
        None => Box::new(StaticProvider::new(bundle.clone())),
    };
    let stage_model = StageModel {
        lambda: p.model.ridge,
        rho: p.model.rho,
        bsize: p.model.bsize,
    };
    let (w, traces) = falcon_pp(provider.as_mut(), &bundle, &schedule, &stage_model, &cfg)?;
    solve_report("prune-multi", &bundle, &p.select, &p.model, &b, &w, traces.last())
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let bundle = read_bundle(&args.bundle)?;
    let groups = bundle.groups();
    let mask = read_mask(&args.mask, bundle.p())?;
    let b = parse_budget_strings(
        args.budgets.nnz.as_deref(),
        args.budgets.flops.as_deref(),
        &groups,
        false,
    )?;
    let w: Vec<f64> = match &args.weights {
        Some(path) => read_weights(path, bundle.p())?
            .into_iter()
            .map(f64::from)
            .collect(),
        None => mask.apply(&bundle.weights_f64()),
    };
    let inst = GroupedInstance::new(groups.clone(), squared(&bundle.weights_f64()))?;
    let r = eval_mask(&mask, &inst, &b)?;
    let mut report = Report::new("eval", &mask, &groups, &b);
    report.objective = Some(r.objective);
    report.q_l = Some(model_of(&bundle, &args.model)?.objective(&w)?);
    print!("{}", report.render());
    Ok(())
}

fn cmd_verify(args: &SelectArgs) -> CliResult<()> {
    let bundle = read_bundle(&args.bundle)?;
    let groups = bundle.groups();
    let b = parse_budgets(&args.budgets, &groups)?;
    let inst = GroupedInstance::new(groups, squared(&bundle.weights_f64()))?;
    let exact = brute_force_ilp(&inst, &b)?;
    let solved = solve_ilp(&inst, &b, &ilp_options(args.eps)?)?;
    let gap = if exact.objective > 0.0 {
        (exact.objective - solved.objective) / exact.objective
    } else {
        0.0
    };
    let within = gap <= solved.gap_bound + 1e-9;
    println!("exact_objective={}", exact.objective);
    println!("solver_objective={}", solved.objective);
    println!("relative_gap={gap}");
    println!("gap_bound={}", solved.gap_bound);
    println!("exact={}", solved.objective == exact.objective);
    println!("within_bound={within}");
    if within {
        Ok(())
    } else {
        Err(CliError::Solver(FalconError::Certificate(format!(
            "relative gap {gap} exceeds the bound {}",
            solved.gap_bound
        ))))
    }
}

fn dispatch(cmd: &Cmd) -> CliResult<()> {
    match cmd {
        Cmd::PruneMp(args) => {
            let bundle = read_bundle(&args.bundle)?;
            let w = bundle.weights_f64();
            select_report("prune-mp", &bundle, args, w)
        }
        Cmd::Prune(args) => cmd_prune(args),
        Cmd::PruneMulti(args) => cmd_prune_multi(args),
        Cmd::Project { select, weights } => {
            let bundle = read_bundle(&select.bundle)?;
            let input = match weights {
                Some(path) => read_weights(path, bundle.p())?
                    .into_iter()
                    .map(f64::from)
                    .collect(),
                None => bundle.weights_f64(),
            };
            select_report("project", &bundle, select, input)
        }
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Verify(args) => cmd_verify(args),
    }
}

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("FALCON_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("FALCON_THREADS must be a count, got {v:?}"))),
        _ => Ok(None),
    }
}

fn run_parsed(cli: Cli) -> CliResult<()> {
    let threads = thread_count(cli.threads)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker threads: {e}")))?;
    pool.install(|| dispatch(&cli.command))
}

/// Run the CLI on `argv` (program name first) and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Solver(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
