//! Seeded experiment drivers. Every driver is a pure function of its
//! configuration and inputs; replicates run in parallel and are collected
//! in replicate order, so the CSV output is byte-identical across runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive::{
    extract_sets, parse_archive, write_archive, Individual, RunArchive, SetLabel,
};
use crate::genotype::{DepthKey, GanSpec, Mode};
use crate::landscape::{make_landscape, LandscapeConfig};
use crate::metamodel::{Metamodel, MetamodelConfig, Score};
use crate::search::{
    guided_hc, init_population, minimal_start, random_hc, simple_ea, EaConfig, InitSource,
    InitStrategy, SearchTrace,
};
use crate::stats::{dunn, kruskal_wallis, mean, median, rank_sum, DunnResult, TestResult};
use crate::{Error, Result};

/// Derives an independent stream seed from a base seed and labels.
pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let d = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

fn rng_for(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSpec {
    pub landscape: LandscapeConfig,
    /// Landscape seeds, one problem each.
    pub problems: Vec<u64>,
    pub runs_per_problem: usize,
    pub ea: EaConfig,
    pub seed: u64,
}

pub fn problem_id(seed: u64) -> String {
    format!("p{seed}")
}

/// Runs the EA from random populations on every problem and logs every
/// evaluated individual, run by run.
pub fn gen_archive(spec: &ArchiveSpec) -> Result<Vec<Individual>> {
    if spec.problems.is_empty() || spec.runs_per_problem == 0 {
        return Err(Error::InvalidArgument(
            "archive needs at least one problem and one run".into(),
        ));
    }
    spec.ea.validate()?;
    let jobs: Vec<(u64, usize)> = spec
        .problems
        .iter()
        .flat_map(|&p| (0..spec.runs_per_problem).map(move |r| (p, r)))
        .collect();
    let runs: Vec<Vec<Individual>> = jobs
        .par_iter()
        .map(|&(problem, run)| {
            let landscape = make_landscape(problem, &spec.landscape)?;
            let run_id = format!("{}-r{run:02}", problem_id(problem));
            let mut rng = rng_for(spec.seed, &["archive", &run_id]);
            let init = init_population(
                InitStrategy::Random,
                spec.ea.population,
                InitSource::default(),
                &landscape,
                &mut rng,
            )?;
            let result = simple_ea(&landscape, init, &spec.ea, &mut rng)?;
            Ok(result
                .evaluated
                .into_iter()
                .map(|e| Individual {
                    run_id: run_id.clone(),
                    problem_id: problem_id(problem),
                    fitness: e.fitness,
                    gan: e.gan,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(runs.into_iter().flatten().collect())
}

/// Serializes individuals in the archive format and loads them back, so
/// in-memory archives go through the same path as files.
pub fn archive_from_individuals(
    individuals: &[Individual],
    genotype: &crate::genotype::GenotypeConfig,
    mode: Mode,
) -> Result<RunArchive> {
    let mut buf = Vec::new();
    write_archive(&mut buf, individuals)?;
    let text = String::from_utf8(buf).expect("archive writer emits UTF-8");
    let (archive, report) = parse_archive(&text, genotype, mode)?;
    if !report.diagnostics.is_empty() || report.rejected_depth > 0 {
        return Err(Error::Format(format!(
            "{} malformed and {} out-of-bounds records",
            report.diagnostics.len(),
            report.rejected_depth
        )));
    }
    Ok(archive)
}

fn csv_float(x: f64) -> String {
    format!("{x}")
}

// ---------------------------------------------------------------------
// Likelihood separation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    pub n: usize,
    pub seed: u64,
    pub metamodel: MetamodelConfig,
    /// Depth keys with fewer scored individuals are not tested.
    pub min_key_count: usize,
}

impl LikelihoodConfig {
    pub fn new(mode: Mode) -> Self {
        LikelihoodConfig {
            n: 5,
            seed: 0,
            metamodel: MetamodelConfig::new(mode),
            min_key_count: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRow {
    pub set: SetLabel,
    pub run_id: String,
    pub problem_id: String,
    pub depth: DepthKey,
    pub fitness: f64,
    pub score: Score,
}

/// Tests over one depth key; groups are First, Second, Random.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyTest {
    pub depth: DepthKey,
    pub counts: [usize; 3],
    pub kruskal: TestResult,
    pub dunn: DunnResult,
}

impl KeyTest {
    pub fn dunn_p(&self, a: SetLabel, b: SetLabel) -> f64 {
        self.dunn.p_raw[label_index(a)][label_index(b)]
    }
}

fn label_index(l: SetLabel) -> usize {
    match l {
        SetLabel::First => 0,
        SetLabel::Second => 1,
        SetLabel::Random => 2,
    }
}

#[derive(Clone, Debug)]
pub struct LikelihoodReport {
    pub rows: Vec<LikelihoodRow>,
    pub tests: Vec<KeyTest>,
    /// Keys with enough scored individuals but an empty set.
    pub skipped: Vec<DepthKey>,
    pub metamodel: Metamodel,
}

/// Learns on First, scores First, Second and Random, and tests the three
/// groups of log-probabilities per depth key.
pub fn likelihood(archive: &RunArchive, config: &LikelihoodConfig) -> Result<LikelihoodReport> {
    let sets = extract_sets(archive, config.n, config.seed)?;
    let metamodel =
        Metamodel::learn_from_individuals(&sets.first, &config.metamodel, Some(&archive.metadata))?;
    let mut rows = Vec::new();
    for label in SetLabel::ALL {
        for ind in sets.get(label) {
            rows.push(LikelihoodRow {
                set: label,
                run_id: ind.run_id.clone(),
                problem_id: ind.problem_id.clone(),
                depth: ind.gan.depth_key(),
                fitness: ind.fitness,
                score: metamodel.score(&ind.gan)?,
            });
        }
    }
    let mut by_key: BTreeMap<DepthKey, [Vec<f64>; 3]> = BTreeMap::new();
    for r in &rows {
        by_key.entry(r.depth).or_default()[label_index(r.set)].push(r.score.log_prob);
    }
    let mut tests = Vec::new();
    let mut skipped = Vec::new();
    for (depth, groups) in by_key {
        let total: usize = groups.iter().map(Vec::len).sum();
        if total < config.min_key_count {
            continue;
        }
        if groups.iter().any(Vec::is_empty) {
            skipped.push(depth);
            continue;
        }
        let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
        tests.push(KeyTest {
            depth,
            counts: [groups[0].len(), groups[1].len(), groups[2].len()],
            kruskal: kruskal_wallis(&refs)?,
            dunn: dunn(&refs)?,
        });
    }
    Ok(LikelihoodReport {
        rows,
        tests,
        skipped,
        metamodel,
    })
}

impl LikelihoodReport {
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("set,run_id,problem_id,d_g,d_d,fitness,log_prob,supermodel_term,submodel_term,normalized,lift\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.set.as_str(),
                r.run_id,
                r.problem_id,
                r.depth.d_g,
                r.depth.d_d,
                csv_float(r.fitness),
                csv_float(r.score.log_prob),
                csv_float(r.score.supermodel_term),
                csv_float(r.score.submodel_term),
                csv_float(r.score.normalized),
                csv_float(r.score.lift)
            );
        }
        out
    }

    pub fn tests_csv(&self) -> String {
        let mut out = String::from(
            "d_g,d_d,n_first,n_second,n_random,h,p_kw,p_first_second,p_first_random,p_second_random,\
             p_first_second_bonf,p_first_random_bonf,p_second_random_bonf\n",
        );
        for t in &self.tests {
            let d = &t.dunn;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                t.depth.d_g,
                t.depth.d_d,
                t.counts[0],
                t.counts[1],
                t.counts[2],
                csv_float(t.kruskal.statistic),
                csv_float(t.kruskal.p_value),
                csv_float(d.p_raw[0][1]),
                csv_float(d.p_raw[0][2]),
                csv_float(d.p_raw[1][2]),
                csv_float(d.p_bonferroni[0][1]),
                csv_float(d.p_bonferroni[0][2]),
                csv_float(d.p_bonferroni[1][2])
            );
        }
        out
    }
}

// ---------------------------------------------------------------------
// Sampling quality

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n: usize,
    pub seed: u64,
    pub samples: usize,
    pub landscape: LandscapeConfig,
    /// Landscape seeds to evaluate on. Runs of these problems in the
    /// archive are excluded from training.
    pub holdout: Vec<u64>,
    pub metamodel: MetamodelConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSet {
    Sampled,
    First,
    Random,
}

impl SampleSet {
    pub const ALL: [SampleSet; 3] = [SampleSet::Sampled, SampleSet::First, SampleSet::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            SampleSet::Sampled => "sampled",
            SampleSet::First => "first",
            SampleSet::Random => "random",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub holdout: u64,
    /// Fitness per set in `SampleSet::ALL` order.
    pub fitness: [Vec<f64>; 3],
    pub sampled_vs_random: TestResult,
    pub sampled_vs_first: TestResult,
}

impl HoldoutResult {
    pub fn mean(&self, set: SampleSet) -> f64 {
        mean(&self.fitness[set as usize])
    }
}

#[derive(Clone, Debug)]
pub struct SamplingReport {
    pub holdouts: Vec<HoldoutResult>,
    pub train_problems: Vec<String>,
    pub metamodel: Metamodel,
}

pub fn sampling(archive: &RunArchive, config: &SamplingConfig) -> Result<SamplingReport> {
    if config.holdout.is_empty() || config.samples == 0 {
        return Err(Error::InvalidArgument(
            "sampling needs holdout seeds and samples >= 1".into(),
        ));
    }
    let holdout_ids: BTreeSet<String> = config.holdout.iter().map(|&s| problem_id(s)).collect();
    let train: BTreeSet<String> = archive
        .individuals()
        .map(|i| i.problem_id.clone())
        .filter(|p| !holdout_ids.contains(p))
        .collect();
    let train_archive = archive.restrict_problems(&train)?;
    let sets = extract_sets(&train_archive, config.n, config.seed)?;
    let metamodel =
        Metamodel::learn_from_individuals(&sets.first, &config.metamodel, Some(&archive.metadata))?;

    let genotype = &config.landscape.genotype;
    let mut rng = rng_for(config.seed, &["sampling"]);
    let sampled: Vec<GanSpec> = (0..config.samples)
        .map(|_| metamodel.sample(&mut rng))
        .collect();
    let first: Vec<GanSpec> = (0..config.samples)
        .map(|_| sets.first[rng.gen_range(0..sets.first.len())].gan.clone())
        .collect();
    let random: Vec<GanSpec> = (0..config.samples)
        .map(|_| genotype.random_gan(&mut rng))
        .collect();

    let holdouts = config
        .holdout
        .par_iter()
        .map(|&seed| {
            let landscape = make_landscape(seed, &config.landscape)?;
            let eval = |gans: &[GanSpec]| {
                gans.iter()
                    .map(|g| landscape.evaluate(g))
                    .collect::<Result<Vec<f64>>>()
            };
            let fitness = [eval(&sampled)?, eval(&first)?, eval(&random)?];
            Ok(HoldoutResult {
                holdout: seed,
                sampled_vs_random: rank_sum(&fitness[0], &fitness[2])?,
                sampled_vs_first: rank_sum(&fitness[0], &fitness[1])?,
                fitness,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SamplingReport {
        holdouts,
        train_problems: train.into_iter().collect(),
        metamodel,
    })
}

impl SamplingReport {
    pub fn fitness_csv(&self) -> String {
        let mut out = String::from("holdout,set,index,fitness\n");
        for h in &self.holdouts {
            for set in SampleSet::ALL {
                for (i, f) in h.fitness[set as usize].iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        h.holdout,
                        set.as_str(),
                        i,
                        csv_float(*f)
                    );
                }
            }
        }
        out
    }

    pub fn tests_csv(&self) -> String {
        let mut out = String::from(
            "holdout,mean_sampled,mean_first,mean_random,u_sampled_random,p_sampled_random,u_sampled_first,p_sampled_first\n",
        );
        for h in &self.holdouts {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                h.holdout,
                csv_float(h.mean(SampleSet::Sampled)),
                csv_float(h.mean(SampleSet::First)),
                csv_float(h.mean(SampleSet::Random)),
                csv_float(h.sampled_vs_random.statistic),
                csv_float(h.sampled_vs_random.p_value),
                csv_float(h.sampled_vs_first.statistic),
                csv_float(h.sampled_vs_first.p_value)
            );
        }
        out
    }
}

// ---------------------------------------------------------------------
// Initialization

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitializationConfig {
    pub n: usize,
    pub seed: u64,
    pub replicates: usize,
    pub landscape: LandscapeConfig,
    pub landscape_seed: u64,
    pub ea: EaConfig,
    pub metamodel: MetamodelConfig,
}

#[derive(Clone, Debug)]
pub struct InitializationReport {
    /// `best[strategy][replicate][generation]`, strategies in
    /// `InitStrategy::ALL` order.
    pub best: Vec<Vec<Vec<f64>>>,
    pub metamodel: Metamodel,
}

pub fn initialization(
    archive: &RunArchive,
    config: &InitializationConfig,
) -> Result<InitializationReport> {
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be >= 1".into()));
    }
    config.ea.validate()?;
    let sets = extract_sets(archive, config.n, config.seed)?;
    let metamodel =
        Metamodel::learn_from_individuals(&sets.first, &config.metamodel, Some(&archive.metadata))?;
    let first: Vec<GanSpec> = sets.first.iter().map(|i| i.gan.clone()).collect();
    let landscape = make_landscape(config.landscape_seed, &config.landscape)?;
    let source = InitSource {
        first: &first,
        metamodel: Some(&metamodel),
    };
    let best = InitStrategy::ALL
        .iter()
        .map(|&strategy| {
            (0..config.replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = rng_for(
                        config.seed,
                        &["initialization", strategy.as_str(), &r.to_string()],
                    );
                    let init = init_population(
                        strategy,
                        config.ea.population,
                        source,
                        &landscape,
                        &mut rng,
                    )?;
                    Ok(simple_ea(&landscape, init, &config.ea, &mut rng)?.best_per_generation)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InitializationReport { best, metamodel })
}

impl InitializationReport {
    /// Best fitness of every replicate at `generation`.
    pub fn at_generation(&self, strategy: InitStrategy, generation: usize) -> Vec<f64> {
        self.best[strategy as usize]
            .iter()
            .map(|r| r[generation])
            .collect()
    }

    pub fn generations(&self) -> usize {
        self.best[0].first().map_or(0, Vec::len)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("replicate,strategy,generation,best\n");
        for strategy in InitStrategy::ALL {
            for (r, trace) in self.best[strategy as usize].iter().enumerate() {
                for (g, b) in trace.iter().enumerate() {
                    let _ = writeln!(out, "{r},{},{g},{}", strategy.as_str(), csv_float(*b));
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------
// Guided search

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchAlgo {
    RandomHc,
    GuidedHc,
    /// Guided search under an uninformative metamodel.
    GuidedUniform,
}

impl SearchAlgo {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchAlgo::RandomHc => "random-hc",
            SearchAlgo::GuidedHc => "guided-hc",
            SearchAlgo::GuidedUniform => "guided-uniform",
        }
    }
}

impl std::str::FromStr for SearchAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-hc" => Ok(SearchAlgo::RandomHc),
            "guided-hc" => Ok(SearchAlgo::GuidedHc),
            "guided-uniform" => Ok(SearchAlgo::GuidedUniform),
            _ => Err(Error::InvalidArgument(format!(
                "unknown search algorithm {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidedSearchConfig {
    pub n: usize,
    pub seed: u64,
    /// Replicate seeds.
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub landscape: LandscapeConfig,
    pub landscape_seed: u64,
    pub algorithms: Vec<SearchAlgo>,
    pub metamodel: MetamodelConfig,
}

#[derive(Clone, Debug)]
pub struct GuidedSearchReport {
    /// One trace per replicate seed for each algorithm.
    pub traces: Vec<(SearchAlgo, Vec<(u64, SearchTrace)>)>,
    pub metamodel: Metamodel,
}

/// Runs `algo` from the minimal start of every seed. The start depends on
/// the seed only, so all algorithms share it.
pub fn run_search(
    algo: SearchAlgo,
    landscape: &crate::landscape::SurrogateLandscape,
    metamodel: &Metamodel,
    seeds: &[u64],
    budget: usize,
) -> Result<Vec<(u64, SearchTrace)>> {
    let uniform = match algo {
        SearchAlgo::GuidedUniform => Some(Metamodel::uniform(&metamodel.config)?),
        _ => None,
    };
    seeds
        .par_iter()
        .map(|&seed| {
            let start = minimal_start(landscape.genotype(), &mut rng_for(seed, &["start"]));
            let mut rng = rng_for(seed, &["search", algo.as_str()]);
            let trace = match algo {
                SearchAlgo::RandomHc => random_hc(landscape, start, budget, &mut rng)?,
                SearchAlgo::GuidedHc => guided_hc(landscape, metamodel, start, budget, &mut rng)?,
                SearchAlgo::GuidedUniform => guided_hc(
                    landscape,
                    uniform.as_ref().expect("built above"),
                    start,
                    budget,
                    &mut rng,
                )?,
            };
            Ok((seed, trace))
        })
        .collect()
}

pub fn guided_search(
    archive: &RunArchive,
    config: &GuidedSearchConfig,
) -> Result<GuidedSearchReport> {
    if config.seeds.is_empty() {
        return Err(Error::InvalidArgument("no replicate seeds".into()));
    }
    let sets = extract_sets(archive, config.n, config.seed)?;
    let metamodel =
        Metamodel::learn_from_individuals(&sets.first, &config.metamodel, Some(&archive.metadata))?;
    let landscape = make_landscape(config.landscape_seed, &config.landscape)?;
    let traces = config
        .algorithms
        .iter()
        .map(|&algo| {
            Ok((
                algo,
                run_search(algo, &landscape, &metamodel, &config.seeds, config.budget)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GuidedSearchReport { traces, metamodel })
}

pub fn traces_csv(traces: &[(SearchAlgo, Vec<(u64, SearchTrace)>)]) -> String {
    let mut out = String::from("algo,seed,step,fitness,best,accepted,exhausted\n");
    for (algo, runs) in traces {
        for (seed, trace) in runs {
            for s in &trace.steps {
                let _ = writeln!(
                    out,
                    "{},{seed},{},{},{},{},{}",
                    algo.as_str(),
                    s.step,
                    csv_float(s.fitness),
                    csv_float(s.best),
                    s.accepted as u8,
                    s.exhausted as u8
                );
            }
        }
    }
    out
}

impl GuidedSearchReport {
    pub fn runs(&self, algo: SearchAlgo) -> Option<&[(u64, SearchTrace)]> {
        self.traces
            .iter()
            .find(|(a, _)| *a == algo)
            .map(|(_, r)| r.as_slice())
    }

    /// Best-so-far of every replicate after `step` evaluations.
    pub fn best_at(&self, algo: SearchAlgo, step: usize) -> Vec<f64> {
        self.runs(algo)
            .map(|runs| runs.iter().map(|(_, t)| t.best_at(step)).collect())
            .unwrap_or_default()
    }

    /// Median over replicates of `best@from - best@to`.
    pub fn median_improvement(&self, algo: SearchAlgo, from: usize, to: usize) -> f64 {
        let diffs: Vec<f64> = self
            .runs(algo)
            .unwrap_or_default()
            .iter()
            .map(|(_, t)| t.best_at(from) - t.best_at(to))
            .collect();
        median(&diffs)
    }

    pub fn csv(&self) -> String {
        traces_csv(&self.traces)
    }
}

// ---------------------------------------------------------------------
// Pinned experiment plan

/// One configuration for the whole experiment suite: the landscape family,
/// the archive synthesis and the parameters of every experiment. Derived
/// configs take their genotype bounds from the metamodel mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub family_seed: u64,
    pub noise: f64,
    pub problem_weight: f64,
    pub depth_spread: f64,
    pub depth_trend: f64,
    pub pairs_per_layer: usize,
    /// Training landscape seeds of the synthetic archive.
    pub problems: Vec<u64>,
    pub runs_per_problem: usize,
    pub ea: EaConfig,
    /// Elite set size for likelihood, sampling and initialization.
    pub n: usize,
    pub samples: usize,
    pub holdout: Vec<u64>,
    pub replicates: usize,
    pub init_landscape_seed: u64,
    /// Elite set size for guided search.
    pub search_n: usize,
    pub search_seeds: Vec<u64>,
    pub budget: usize,
    pub search_landscape_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            family_seed: 10,
            noise: 0.02,
            problem_weight: 0.5,
            depth_spread: 0.15,
            depth_trend: 0.0,
            pairs_per_layer: 2,
            problems: (1..=5).collect(),
            runs_per_problem: 6,
            ea: EaConfig::default(),
            n: 5,
            samples: 100,
            holdout: vec![101, 102, 103],
            replicates: 30,
            init_landscape_seed: 200,
            search_n: 20,
            search_seeds: (0..30).collect(),
            budget: 100,
            search_landscape_seed: 300,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() || self.runs_per_problem == 0 {
            return Err(Error::InvalidArgument(
                "archive needs at least one problem and one run".into(),
            ));
        }
        if self.replicates == 0 || self.search_seeds.is_empty() || self.holdout.is_empty() {
            return Err(Error::InvalidArgument(
                "replicates, search seeds and holdouts must be non-empty".into(),
            ));
        }
        if self.n == 0 || self.search_n == 0 || self.samples == 0 || self.budget == 0 {
            return Err(Error::InvalidArgument(
                "n, search_n, samples and budget must be >= 1".into(),
            ));
        }
        if let Some(h) = self.holdout.iter().find(|h| self.problems.contains(h)) {
            return Err(Error::InvalidArgument(format!(
                "holdout landscape {h} is also a training problem"
            )));
        }
        self.ea.validate()
    }

    pub fn landscape(&self, mode: Mode) -> LandscapeConfig {
        LandscapeConfig {
            genotype: crate::genotype::GenotypeConfig::for_mode(mode),
            family_seed: self.family_seed,
            noise: self.noise,
            problem_weight: self.problem_weight,
            depth_spread: self.depth_spread,
            depth_trend: self.depth_trend,
            pairs_per_layer: self.pairs_per_layer,
        }
    }

    pub fn archive(&self, mode: Mode) -> ArchiveSpec {
        ArchiveSpec {
            landscape: self.landscape(mode),
            problems: self.problems.clone(),
            runs_per_problem: self.runs_per_problem,
            ea: self.ea.clone(),
            seed: self.seed,
        }
    }

    pub fn likelihood(&self, mode: Mode) -> LikelihoodConfig {
        LikelihoodConfig {
            n: self.n,
            seed: self.seed,
            ..LikelihoodConfig::new(mode)
        }
    }

    pub fn sampling(&self, mode: Mode) -> SamplingConfig {
        SamplingConfig {
            n: self.n,
            seed: self.seed,
            samples: self.samples,
            landscape: self.landscape(mode),
            holdout: self.holdout.clone(),
            metamodel: MetamodelConfig::new(mode),
        }
    }

    pub fn initialization(&self, mode: Mode) -> InitializationConfig {
        InitializationConfig {
            n: self.n,
            seed: self.seed,
            replicates: self.replicates,
            landscape: self.landscape(mode),
            landscape_seed: self.init_landscape_seed,
            ea: self.ea.clone(),
            metamodel: MetamodelConfig::new(mode),
        }
    }

    pub fn guided_search(&self, mode: Mode) -> GuidedSearchConfig {
        GuidedSearchConfig {
            n: self.search_n,
            seed: self.seed,
            seeds: self.search_seeds.clone(),
            budget: self.budget,
            landscape: self.landscape(mode),
            landscape_seed: self.search_landscape_seed,
            algorithms: vec![
                SearchAlgo::RandomHc,
                SearchAlgo::GuidedHc,
                SearchAlgo::GuidedUniform,
            ],
            metamodel: MetamodelConfig::new(mode),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::GenotypeConfig;

    fn small_spec() -> ArchiveSpec {
        ArchiveSpec {
            landscape: LandscapeConfig::new(GenotypeConfig::joint(), 7),
            problems: vec![1, 2],
            runs_per_problem: 2,
            ea: EaConfig {
                population: 10,
                generations: 5,
                ..EaConfig::default()
            },
            seed: 3,
        }
    }

    #[test]
    fn archive_counts_and_determinism() {
        let spec = small_spec();
        let a = gen_archive(&spec).unwrap();
        assert_eq!(a.len(), 2 * 2 * 10 * 5);
        assert_eq!(a, gen_archive(&spec).unwrap());
        let runs: BTreeSet<&str> = a.iter().map(|i| i.run_id.as_str()).collect();
        assert_eq!(runs.len(), 4);
        let archive = archive_from_individuals(&a, &spec.landscape.genotype, Mode::Joint).unwrap();
        assert_eq!(archive.len(), a.len());
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, &["a", "b"]), derive_seed(1, &["ab"]));
        assert_ne!(derive_seed(1, &["a"]), derive_seed(2, &["a"]));
        assert_eq!(derive_seed(5, &["x"]), derive_seed(5, &["x"]));
    }

    #[test]
    fn likelihood_rows_cover_all_sets() {
        let spec = small_spec();
        let ind = gen_archive(&spec).unwrap();
        let archive =
            archive_from_individuals(&ind, &spec.landscape.genotype, Mode::Joint).unwrap();
        let report = likelihood(&archive, &LikelihoodConfig::new(Mode::Joint)).unwrap();
        assert_eq!(report.rows.len(), 3 * 4 * 5);
        assert_eq!(report.scores_csv().lines().count(), 1 + 60);
    }

    #[test]
    fn experiment_config_rejects_overlapping_holdout() {
        let mut cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        cfg.holdout.push(cfg.problems[0]);
        assert!(cfg.validate().is_err());
    }
}
