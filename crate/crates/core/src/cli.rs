//! Command-line front end: `test`, `network`, `simulate` and `metrics`.
//!
//! Exit codes: 0 on success, 2 on a usage error, 3 when the data or the
//! computation fails. Diagnostics are a single line on standard error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dependence::{pairwise_scan, TestMethod};
use crate::error::Error;
use crate::experiment::{run, ExperimentKind, ExperimentSpec, DEFAULT_REPLICATES};
use crate::io::{
    adjacency_grid, edge_list, experiment_table, outcome_table, read_adjacency_grid, read_panel_csv, ResultDocument,
};
use crate::network::{group_consensus_network, identify_network, network_metrics, Adjacency};
use crate::panel::RegionLayout;
use crate::preprocess::{preprocess, PreprocessOptions};
use crate::simulate::Model;
use crate::sparse::Solver;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "netblock",
    version,
    about = "Tests for cross-region correlation and region network estimation"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "NETBLOCK_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test every pair of regions at the per-pair level.
    Test(DataArgs),
    /// Estimate the region network with family-wise error control.
    Network(DataArgs),
    /// Run a Monte Carlo size, power or network experiment.
    Simulate(SimulateArgs),
    /// Consensus network and accuracy metrics from saved 0/1 grids.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Doc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Lasso,
    Dantzig,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Solver {
        match s {
            SolverArg::Lasso => Solver::Lasso,
            SolverArg::Dantzig => Solver::Dantzig,
        }
    }
}

#[derive(Debug, Args)]
struct MethodArgs {
    /// Test number(s): 1 marginal, 2 residual, 3 principal component.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    method: Vec<u8>,
    /// Nodewise estimator for Test II.
    #[arg(long, value_enum, default_value = "lasso")]
    solver: SolverArg,
    /// Tuning constant for Test II (default 2.02 lasso, 2 dantzig).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Numeric CSV, scans as rows.
    #[arg(long)]
    data: PathBuf,
    /// `name,width` per region, in column order.
    #[arg(long)]
    layout: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    /// Remove a linear trend from every column.
    #[arg(long)]
    detrend: bool,
    /// AR(1)-whiten every column.
    #[arg(long)]
    whiten: bool,
    /// Replace each region by principal components reaching this variance
    /// fraction.
    #[arg(long)]
    pca_fraction: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value = "size")]
    kind: String,
    #[arg(long, default_value_t = 1)]
    model: u8,
    /// Region widths; a single width is repeated `--p` times.
    #[arg(long, value_delimiter = ',', default_value = "50,50")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 150)]
    n: usize,
    /// Number of regions for network experiments.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    edge_prob: f64,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Subject networks as 0/1 grids.
    #[arg(required = true)]
    grids: Vec<PathBuf>,
    /// True network as a 0/1 grid; enables NETTPR, FWER and FDR.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0.85)]
    quorum: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn check_unit(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--{name} must lie in (0, 1), got {v}")))
    }
}

impl MethodArgs {
    fn methods(&self) -> CliResult<Vec<TestMethod>> {
        check_unit("alpha", self.alpha)?;
        let solver: Solver = self.solver.into();
        let delta = self.delta.unwrap_or(solver.default_delta());
        if !(delta >= 0.0) {
            return Err(usage(format!("--delta must be non-negative, got {delta}")));
        }
        let mut out = Vec::new();
        for &m in &self.method {
            let method = match m {
                1 => TestMethod::Test1,
                2 => TestMethod::Test2 { solver, delta },
                3 => TestMethod::Test3,
                other => return Err(usage(format!("--method must be 1, 2 or 3, got {other}"))),
            };
            if !out.contains(&method) {
                out.push(method);
            }
        }
        Ok(out)
    }

    fn echo(&self, e: &mut BTreeMap<String, String>) {
        let methods: Vec<String> = self.method.iter().map(|m| m.to_string()).collect();
        e.insert("method".into(), methods.join(","));
        e.insert("solver".into(), Solver::from(self.solver).to_string());
        if let Some(d) = self.delta {
            e.insert("delta".into(), d.to_string());
        }
        e.insert("alpha".into(), self.alpha.to_string());
    }
}

fn emit(output: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::Data(Error::Io(format!("{}: {e}", path.display()))))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

struct Loaded {
    panels: Vec<crate::panel::ComponentPanel>,
    layout: RegionLayout,
    methods: Vec<TestMethod>,
    echo: BTreeMap<String, String>,
}

fn load(args: &DataArgs) -> CliResult<Loaded> {
    let methods = args.method.methods()?;
    if let Some(f) = args.pca_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(usage(format!("--pca-fraction must lie in (0, 1], got {f}")));
        }
    }
    let (panels, layout) = read_panel_csv(&args.data, &args.layout)?;
    let opts = PreprocessOptions {
        detrend: args.detrend,
        whiten: args.whiten,
        pca_fraction: args.pca_fraction,
    };
    let panels = preprocess(&panels, &opts)?;
    let layout = RegionLayout::new(layout.names().to_vec(), panels.iter().map(|p| p.q()).collect())?;
    let mut echo = BTreeMap::new();
    echo.insert("data".into(), args.data.display().to_string());
    echo.insert("layout".into(), args.layout.display().to_string());
    echo.insert("detrend".into(), args.detrend.to_string());
    echo.insert("whiten".into(), args.whiten.to_string());
    if let Some(f) = args.pca_fraction {
        echo.insert("pca_fraction".into(), f.to_string());
    }
    args.method.echo(&mut echo);
    Ok(Loaded {
        panels,
        layout,
        methods,
        echo,
    })
}

fn cmd_test(args: &DataArgs) -> CliResult<()> {
    let l = load(args)?;
    let mut outcomes = Vec::new();
    for &m in &l.methods {
        outcomes.extend(pairwise_scan(&l.layout, &l.panels, args.method.alpha, m)?);
    }
    let text = match args.output.format {
        Format::Table => outcome_table(&outcomes, l.layout.names()),
        Format::Doc => {
            let mut doc = ResultDocument::new(None, l.echo);
            doc.outcomes = outcomes;
            doc.to_json()? + "\n"
        }
    };
    emit(&args.output.out, &text)
}

fn cmd_network(args: &DataArgs) -> CliResult<()> {
    let l = load(args)?;
    if l.methods.len() != 1 {
        return Err(usage("network takes a single --method"));
    }
    let method = l.methods[0];
    if !method.is_extreme_value() {
        return Err(usage("network needs --method 1 or 2"));
    }
    if l.layout.p() < 2 {
        return Err(usage("network needs at least two regions"));
    }
    let outcomes = pairwise_scan(&l.layout, &l.panels, args.method.alpha, method)?;
    let net = identify_network(&outcomes, l.layout.p(), args.method.alpha)?;
    let text = match args.output.format {
        Format::Table => format!(
            "{}\n{}",
            adjacency_grid(&net.adjacency),
            edge_list(&net.adjacency, l.layout.names())
        ),
        Format::Doc => {
            let mut doc = ResultDocument::new(None, l.echo);
            doc.network = Some(net);
            doc.to_json()? + "\n"
        }
    };
    emit(&args.output.out, &text)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let kind: ExperimentKind = args.kind.parse().map_err(|e: Error| usage(e.to_string()))?;
    let model = Model::try_from(args.model).map_err(|e| usage(e.to_string()))?;
    let methods = args.method.methods()?;
    let dims = match (args.p, args.dims.as_slice()) {
        (Some(p), [q]) => vec![*q; p],
        (Some(p), d) if d.len() != p => {
            return Err(usage(format!("--p {p} disagrees with {} --dims entries", d.len())))
        }
        (_, d) => d.to_vec(),
    };
    if !(0.0..=1.0).contains(&args.edge_prob) {
        return Err(usage(format!("--edge-prob must lie in [0, 1], got {}", args.edge_prob)));
    }
    let mut spec = ExperimentSpec::new(kind, model, args.n, dims, args.seed);
    spec.replicates = args.replicates;
    spec.alpha = args.method.alpha;
    spec.methods = methods;
    spec.edge_prob = args.edge_prob;
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let result = run(&spec)?;
    let text = match args.output.format {
        Format::Table => experiment_table(&result),
        Format::Doc => {
            let mut echo = BTreeMap::new();
            echo.insert("kind".into(), args.kind.clone());
            echo.insert("model".into(), args.model.to_string());
            echo.insert("n".into(), args.n.to_string());
            echo.insert("replicates".into(), args.replicates.to_string());
            echo.insert("edge_prob".into(), args.edge_prob.to_string());
            let dims: Vec<String> = result.spec.dims.iter().map(|d| d.to_string()).collect();
            echo.insert("dims".into(), dims.join(","));
            args.method.echo(&mut echo);
            let mut doc = ResultDocument::new(Some(args.seed), echo);
            doc.experiment = Some(result);
            doc.to_json()? + "\n"
        }
    };
    emit(&args.output.out, &text)
}

fn cmd_metrics(args: &MetricsArgs) -> CliResult<()> {
    if !(args.quorum > 0.0 && args.quorum <= 1.0) {
        return Err(usage(format!("--quorum must lie in (0, 1], got {}", args.quorum)));
    }
    let nets: Vec<Adjacency> = args
        .grids
        .iter()
        .map(|p| read_adjacency_grid(p))
        .collect::<crate::error::Result<_>>()?;
    let consensus = group_consensus_network(&nets, args.quorum)?;
    let names: Vec<String> = (1..=consensus.p()).map(|k| format!("R{k}")).collect();
    let mut text = format!("{}\n{}", adjacency_grid(&consensus), edge_list(&consensus, &names));
    if let Some(t) = &args.truth {
        let truth = read_adjacency_grid(t)?;
        let m = network_metrics(&nets, &truth)?;
        text.push_str(&format!(
            "\nnettpr\tfwer\tfdr\n{:.6}\t{:.6}\t{:.6}\n",
            m.nettpr, m.fwer, m.fdr
        ));
    }
    emit(&args.out, &text)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Network(a) => cmd_network(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Metrics(a) => cmd_metrics(a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default();
            eprintln!("netblock: usage error: {}", first.trim_start_matches("error: "));
            return EXIT_USAGE;
        }
        Err(e) => {
            let _ = e.print();
            return EXIT_OK;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(usage(format!("cannot start {t} threads: {e}"))),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("netblock: usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("netblock: error: {}", one_line(&e.to_string()));
            EXIT_DATA
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
