use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::{compare_techniques, reactive_benefit_study, run_sequential, DriverError};
use crate::case::{
    build_instance, parse_case, serialize_case, write_reports, BilevelInstance, CaseError, LoadProfile,
    LowerLevelModel, Network, StorageSpec, DEFAULT_THRESHOLD,
};
use crate::data;
use crate::reduce::{parse_technique_list, ReduceError, TechniqueKind, TechniqueSpec};
use crate::solver::SolveOptions;

const EXIT_OK: i32 = 0;
const EXIT_SOLVER: i32 = 1;
const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "storage-bilevel", version, about = "Strategic bidding of energy storage in a conic market")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the sequential algorithm with one technique.
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        technique: TechniqueArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        outer_iters: usize,
    },
    /// Compare a list of techniques around one operating point.
    Compare {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Technique list, one spec per line; the bundled table by default.
        #[arg(long)]
        list: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Profit increase from reactive bids at every bus.
    StudyReactive {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        technique: TechniqueArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Parse a case file and check that it survives a write and re-read.
    ParseCheck {
        #[arg(long)]
        case: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Dc,
    Jabr,
}

#[derive(Args, Debug)]
struct InstanceArgs {
    /// Case file; the bundled 3-bus case by default.
    #[arg(long)]
    case: Option<PathBuf>,
    /// `winter`, `flat` or a file of 24 factors.
    #[arg(long, default_value = "winter")]
    profile: String,
    /// External bus number; the last bus by default.
    #[arg(long)]
    storage_bus: Option<usize>,
    /// `capacity,rating,eta` in p.u.·h, p.u. and per unit.
    #[arg(long)]
    storage: Option<String>,
    #[arg(long, value_enum, default_value_t = ModelArg::Jabr)]
    model: ModelArg,
}

#[derive(Args, Debug)]
struct TechniqueArgs {
    #[arg(long, default_value = "SM1")]
    technique: String,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    pi: Option<f64>,
    /// Discretization steps of the expansions.
    #[arg(long = "D")]
    d: Option<usize>,
    /// Forbid simultaneous charging and discharging with binaries.
    #[arg(long)]
    binaries: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multistart count for nonconvex reductions.
    #[arg(long, default_value_t = 16)]
    starts: usize,
    /// Seconds per reduced solve.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Output stem; `.json` and `.csv` are appended.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

/// Failures sorted by exit code.
enum Failure {
    Usage(String),
    Solver(String),
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Solve { .. } | DriverError::Opf(_) | DriverError::Bids(_) => Failure::Solver(e.to_string()),
            DriverError::Case(CaseError::Io(_) | CaseError::Csv(_) | CaseError::Json(_)) => {
                Failure::Solver(e.to_string())
            }
            DriverError::Reduce(ReduceError::Mismatch(_) | ReduceError::NotConic(_) | ReduceError::Conic(_)) => {
                Failure::Solver(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<CaseError> for Failure {
    fn from(e: CaseError) -> Self {
        DriverError::Case(e).into()
    }
}

impl From<ReduceError> for Failure {
    fn from(e: ReduceError) -> Self {
        DriverError::Reduce(e).into()
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn network(case: &Option<PathBuf>) -> Result<Network, Failure> {
    let text = match case {
        Some(p) => read(p)?,
        None => data::CASE3.to_string(),
    };
    Ok(parse_case(&text)?)
}

fn profile(arg: &str) -> Result<LoadProfile, Failure> {
    Ok(match arg {
        "winter" => LoadProfile::winter_weekday(),
        "flat" => LoadProfile::flat(24),
        path => LoadProfile::parse(&read(Path::new(path))?)?,
    })
}

fn storage(args: &InstanceArgs, net: &Network) -> Result<StorageSpec, Failure> {
    let bus = match args.storage_bus {
        Some(b) => b,
        None => net.buses.last().map(|b| b.id).ok_or_else(|| Failure::Usage("case has no buses".into()))?,
    };
    let mut s = StorageSpec::new(bus);
    if let Some(text) = &args.storage {
        let vals: Vec<f64> = text
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Failure::Usage(format!("bad --storage `{text}`")))?;
        let [capacity, rating, eta] = vals[..] else {
            return Err(Failure::Usage("--storage takes capacity,rating,eta".into()));
        };
        s.capacity = capacity;
        s.rating = rating;
        s.eta_ch = eta;
        s.eta_dis = eta;
    }
    Ok(s)
}

fn instance(args: &InstanceArgs) -> Result<BilevelInstance, Failure> {
    let net = network(&args.case)?;
    let model = match args.model {
        ModelArg::Dc => LowerLevelModel::Dc,
        ModelArg::Jabr => LowerLevelModel::Jabr,
    };
    let s = storage(args, &net)?;
    Ok(build_instance(net, &profile(&args.profile)?, s, model, DEFAULT_THRESHOLD)?)
}

fn technique(args: &TechniqueArgs) -> Result<TechniqueSpec, Failure> {
    let kind = TechniqueKind::from_name(&args.technique)
        .ok_or_else(|| Failure::from(ReduceError::UnknownTechnique(args.technique.clone())))?;
    let mut spec = TechniqueSpec::new(kind).with_binaries(args.binaries);
    if args.eps.is_some() {
        spec.eps = args.eps;
    }
    if args.pi.is_some() {
        spec.pi = args.pi;
    }
    if args.d.is_some() {
        spec.steps = args.d;
    }
    spec.validate()?;
    Ok(spec)
}

fn options(args: &RunArgs) -> Result<SolveOptions, Failure> {
    let opts =
        SolveOptions { seed: args.seed, starts: args.starts, time_limit: args.time_limit, ..SolveOptions::default() };
    opts.validate().map_err(Failure::Usage)?;
    Ok(opts)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(CaseError::from)?;
    std::fs::write(path, text + "\n").map_err(CaseError::from)?;
    Ok(())
}

fn stem_with(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(ext);
    PathBuf::from(p)
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Solve { instance: ia, technique: ta, run: ra, outer_iters } => {
            let inst = instance(&ia)?;
            let spec = technique(&ta)?;
            let opts = options(&ra)?;
            let out = run_sequential(&inst, &spec, &opts, outer_iters)?;
            let (json, csv) = write_reports(&out.reports, &ra.out)?;
            let r = out.last();
            println!(
                "{spec}: {} computed {:.4} actual {:.4} gap {:.2e}% ({}, {})",
                r.status,
                r.computed_profit,
                r.actual_profit,
                r.duality_gap_pct,
                json.display(),
                csv.display()
            );
            Ok(EXIT_OK)
        }
        Command::Compare { instance: ia, list, run: ra } => {
            let inst = instance(&ia)?;
            let specs = match &list {
                Some(p) => parse_technique_list(&read(p)?)?,
                None => parse_technique_list(data::TECHNIQUE_TABLE)?,
            };
            if specs.is_empty() {
                return Err(Failure::Usage("technique list is empty".into()));
            }
            let opts = options(&ra)?;
            let rows = compare_techniques(&inst, &specs, &opts)?;
            for r in &rows {
                println!("{:<6} {:<22} {}", r.technique, r.params, r.status);
            }
            write_reports(&rows, &ra.out)?;
            Ok(EXIT_OK)
        }
        Command::StudyReactive { instance: ia, technique: ta, run: ra } => {
            let inst = instance(&ia)?;
            if inst.model != LowerLevelModel::Jabr {
                return Err(Failure::Usage("study-reactive needs --model jabr".into()));
            }
            let spec = technique(&ta)?;
            let opts = options(&ra)?;
            let study = reactive_benefit_study(&inst, &spec, &opts)?;
            write_json(&study, &stem_with(&ra.out, ".json"))?;
            let mut w = csv::Writer::from_path(stem_with(&ra.out, ".csv")).map_err(CaseError::from)?;
            w.write_record(["bus", "increase_pct", "savings", "status"]).map_err(CaseError::from)?;
            for b in study.sorted() {
                let rec = [
                    b.bus.to_string(),
                    format!("{:.4}", b.increase_pct),
                    format!("{:.4}", b.savings),
                    b.status.clone(),
                ];
                w.write_record(&rec).map_err(CaseError::from)?;
            }
            w.flush().map_err(CaseError::from)?;
            println!("{}: savings/increase ratio {:.4}", study.network, study.ratio);
            Ok(EXIT_OK)
        }
        Command::ParseCheck { case } => {
            let net = network(&case)?;
            let again = parse_case(&serialize_case(&net))?;
            if again != net {
                println!("{}: round trip changed the network", net.name);
                return Ok(EXIT_SOLVER);
            }
            println!(
                "{}: {} buses, {} generators, {} branches, {} loads, round trip ok",
                net.name,
                net.buses.len(),
                net.generators.len(),
                net.branches.len(),
                net.loads.len()
            );
            Ok(EXIT_OK)
        }
    }
}

/// Runs the command line; returns the process exit code: 0 on success, 1
/// on a solver failure, 2 on a usage error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            EXIT_SOLVER
        }
    }
}
