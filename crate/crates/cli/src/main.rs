use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use archsmith::archive::{extract_sets, load_archive, write_archive, EliteSets};
use archsmith::experiments::{
    archive_from_individuals, derive_seed, gen_archive, guided_search, initialization, likelihood,
    run_search, sampling, traces_csv, ExperimentConfig, SearchAlgo,
};
use archsmith::genotype::{read_genotypes_file, write_genotypes, GenotypeConfig, Mode};
use archsmith::landscape::make_landscape;
use archsmith::metamodel::{Metamodel, MetamodelConfig};
use archsmith::stats::{dunn, kruskal_wallis, rank_sum};
use archsmith::Error;

#[derive(Parser)]
#[command(name = "archsmith", version, about = "Metamodels of NAS archives")]
struct Cli {
    /// Overrides the base seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML experiment configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or directory for `experiment`. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Joint,
    PerNetwork,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Joint => Mode::Joint,
            ModeArg::PerNetwork => Mode::PerNetwork,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    RandomHc,
    GuidedHc,
    GuidedUniform,
}

impl From<AlgoArg> for SearchAlgo {
    fn from(a: AlgoArg) -> SearchAlgo {
        match a {
            AlgoArg::RandomHc => SearchAlgo::RandomHc,
            AlgoArg::GuidedHc => SearchAlgo::GuidedHc,
            AlgoArg::GuidedUniform => SearchAlgo::GuidedUniform,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Likelihood,
    Sampling,
    Initialization,
    GuidedSearch,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestKind {
    Kw,
    Dunn,
    Ranksum,
}

#[derive(Args)]
struct ModeOpt {
    /// Metamodel mode; defaults to joint, per-network for guided search.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Extracts First/Second/Random sets from an archive.
    Ingest {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        mode: ModeOpt,
    },
    /// Learns a metamodel from the First set of a sets file.
    Learn {
        #[arg(long)]
        sets: PathBuf,
        #[command(flatten)]
        mode: ModeOpt,
    },
    /// Scores every genotype of a JSON-lines file.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gan: PathBuf,
    },
    /// Draws genotypes from a metamodel.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Runs hill climbing on one landscape of the configured family.
    Search {
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        landscape_seed: u64,
        #[arg(long)]
        budget: Option<usize>,
        /// Replicate seeds as `a..b` (inclusive) or a comma list.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Synthesizes an archive by running the EA on the training problems.
    GenArchive {
        #[command(flatten)]
        mode: ModeOpt,
    },
    /// Runs one experiment and writes its CSVs into the `--out` directory.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        /// Archive to learn from; synthesized from the configuration if absent.
        #[arg(long)]
        archive: Option<PathBuf>,
        #[command(flatten)]
        mode: ModeOpt,
    },
    /// Runs a nonparametric test over the groups of a result CSV.
    Analyze {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, value_enum)]
        test: TestKind,
        #[arg(long, default_value = "algo")]
        group: String,
        #[arg(long, default_value = "best")]
        value: String,
        /// Column used to pick one row per replicate.
        #[arg(long, default_value = "step")]
        step_column: String,
        /// Step to compare; defaults to the largest step in the file.
        #[arg(long)]
        step: Option<u64>,
    },
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Error> {
    let bad = || invalid(format!("bad seed list {spec:?}"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn gen_individuals(
    cfg: &ExperimentConfig,
    mode: Mode,
) -> Result<Vec<archsmith::archive::Individual>, Error> {
    log::info!(
        "synthesizing archive: {} problems x {} runs",
        cfg.problems.len(),
        cfg.runs_per_problem
    );
    gen_archive(&cfg.archive(mode))
}

fn run_experiment(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    archive: Option<&Path>,
    mode: Mode,
    dir: &Path,
) -> Result<(), Error> {
    let run_archive = match archive {
        Some(path) => {
            let (a, report) = load_archive(path, &GenotypeConfig::for_mode(mode), mode)?;
            for d in &report.diagnostics {
                log::warn!("{}:{}: {}", path.display(), d.line, d.message);
            }
            a
        }
        None => archive_from_individuals(
            &gen_individuals(cfg, mode)?,
            &GenotypeConfig::for_mode(mode),
            mode,
        )?,
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    match kind {
        ExperimentKind::Likelihood => {
            let r = likelihood(&run_archive, &cfg.likelihood(mode))?;
            write("likelihood_scores.csv", r.scores_csv())?;
            write("likelihood_tests.csv", r.tests_csv())?;
        }
        ExperimentKind::Sampling => {
            let r = sampling(&run_archive, &cfg.sampling(mode))?;
            write("sampling_fitness.csv", r.fitness_csv())?;
            write("sampling_tests.csv", r.tests_csv())?;
        }
        ExperimentKind::Initialization => {
            let r = initialization(&run_archive, &cfg.initialization(mode))?;
            write("initialization.csv", r.csv())?;
        }
        ExperimentKind::GuidedSearch => {
            let r = guided_search(&run_archive, &cfg.guided_search(mode))?;
            write("guided_search.csv", r.csv())?;
        }
    }
    Ok(())
}

/// Reads a header-first CSV of unquoted fields.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), Error> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| csv_error(path, e))
        })
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

fn analyze(
    path: &Path,
    test: TestKind,
    group: &str,
    value: &str,
    step_column: &str,
    step: Option<u64>,
) -> Result<String, Error> {
    let (header, rows) = read_csv(path)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: no column {name:?}", path.display())))
    };
    let (gi, vi) = (col(group)?, col(value)?);
    let si = header.iter().position(|h| h == step_column);
    let num = |s: &str| -> Result<f64, Error> {
        s.parse()
            .map_err(|_| Error::Format(format!("{}: bad number {s:?}", path.display())))
    };
    let target = match (si, step) {
        (Some(si), None) => Some(
            rows.iter()
                .map(|r| num(&r[si]).map(|x| x as u64))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .max()
                .unwrap_or(0),
        ),
        (_, s) => s,
    };
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &rows {
        if let (Some(si), Some(t)) = (si, target) {
            if num(&r[si])? as u64 != t {
                continue;
            }
        }
        groups.entry(r[gi].clone()).or_default().push(num(&r[vi])?);
    }
    let names: Vec<&String> = groups.keys().collect();
    let values: Vec<&[f64]> = groups.values().map(Vec::as_slice).collect();
    let mut out = String::new();
    match test {
        TestKind::Kw => {
            let r = kruskal_wallis(&values)?;
            out.push_str("test,groups,statistic,p_value\n");
            out.push_str(&format!(
                "kw,{},{},{}\n",
                names.len(),
                r.statistic,
                r.p_value
            ));
        }
        TestKind::Dunn => {
            let r = dunn(&values)?;
            out.push_str("a,b,z,p_raw,p_bonferroni\n");
            for i in 0..names.len() {
                for j in i + 1..names.len() {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        names[i], names[j], r.z[i][j], r.p_raw[i][j], r.p_bonferroni[i][j]
                    ));
                }
            }
        }
        TestKind::Ranksum => {
            out.push_str("a,b,statistic,p_value\n");
            for i in 0..names.len() {
                for j in i + 1..names.len() {
                    let r = rank_sum(values[i], values[j])?;
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        names[i], names[j], r.statistic, r.p_value
                    ));
                }
            }
        }
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_deref();
    let mode_of = |m: &ModeOpt, default: Mode| m.mode.map(Mode::from).unwrap_or(default);
    match &cli.command {
        Command::Ingest { archive, n, mode } => {
            let mode = mode_of(mode, Mode::Joint);
            let (a, report) = load_archive(archive, &GenotypeConfig::for_mode(mode), mode)?;
            for d in &report.diagnostics {
                log::warn!("{}:{}: {}", archive.display(), d.line, d.message);
            }
            let sets = extract_sets(&a, n.unwrap_or(cfg.n), cfg.seed)?;
            emit(out, serde_json::to_string_pretty(&sets)?.as_bytes())
        }
        Command::Learn { sets, mode } => {
            let mode = mode_of(mode, Mode::Joint);
            let sets = EliteSets::load(sets)?;
            let model =
                Metamodel::learn_from_individuals(&sets.first, &MetamodelConfig::new(mode), None)?;
            emit(out, model.to_json()?.as_bytes())
        }
        Command::Score { model, gan } => {
            let model = Metamodel::load(model)?;
            let mut text =
                String::from("index,log_prob,supermodel_term,submodel_term,normalized,lift\n");
            for (i, g) in read_genotypes_file(gan)?.iter().enumerate() {
                let s = model.score(g)?;
                text.push_str(&format!(
                    "{i},{},{},{},{},{}\n",
                    s.log_prob, s.supermodel_term, s.submodel_term, s.normalized, s.lift
                ));
            }
            emit(out, text.as_bytes())
        }
        Command::Sample { model, count } => {
            let model = Metamodel::load(model)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["sample"]));
            let gans: Vec<_> = (0..*count).map(|_| model.sample(&mut rng)).collect();
            let mut buf = Vec::new();
            write_genotypes(&mut buf, &gans)?;
            emit(out, &buf)
        }
        Command::Search {
            algo,
            model,
            landscape_seed,
            budget,
            seeds,
        } => {
            let model = Metamodel::load(model)?;
            let seeds = match seeds {
                Some(s) => parse_seeds(s)?,
                None => cfg.search_seeds.clone(),
            };
            let landscape = make_landscape(*landscape_seed, &cfg.landscape(model.mode()))?;
            let algo = SearchAlgo::from(*algo);
            let traces = run_search(
                algo,
                &landscape,
                &model,
                &seeds,
                budget.unwrap_or(cfg.budget),
            )?;
            emit(out, traces_csv(&[(algo, traces)]).as_bytes())
        }
        Command::GenArchive { mode } => {
            let individuals = gen_individuals(&cfg, mode_of(mode, Mode::Joint))?;
            let mut buf = Vec::new();
            write_archive(&mut buf, &individuals)?;
            emit(out, &buf)
        }
        Command::Experiment {
            kind,
            archive,
            mode,
        } => {
            let default = match kind {
                ExperimentKind::GuidedSearch => Mode::PerNetwork,
                _ => Mode::Joint,
            };
            let dir = out.ok_or_else(|| invalid("experiment needs --out DIR"))?;
            run_experiment(&cfg, *kind, archive.as_deref(), mode_of(mode, default), dir)
        }
        Command::Analyze {
            traces,
            test,
            group,
            value,
            step_column,
            step,
        } => {
            let text = analyze(traces, *test, group, value, step_column, *step)?;
            emit(out, text.as_bytes())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
