//! Offline archives of past search runs and the First/Second/Random elite
//! partitions extracted from them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::genotype::{
    fit_discretization, DepthKey, DiscretizationScheme, DnnSpec, GanSpec, GenotypeConfig,
    LayerKind, LayerSpec, Mode, Role, GENOTYPE_FORMAT,
};
use crate::{Error, Result};

/// One evaluated architecture. Lower fitness is better.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub run_id: String,
    pub problem_id: String,
    pub fitness: f64,
    pub gan: GanSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    pub mode: Mode,
    pub genotype: GenotypeConfig,
    /// Fitted when records carried raw unit counts instead of bins.
    pub size_scheme: Option<DiscretizationScheme>,
    pub train_freq_scheme: Option<DiscretizationScheme>,
    /// SHA-256 of the source file, hex.
    pub source_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArchive {
    pub runs: BTreeMap<String, Vec<Individual>>,
    pub metadata: ArchiveMetadata,
}

impl RunArchive {
    pub fn from_individuals(
        individuals: Vec<Individual>,
        metadata: ArchiveMetadata,
    ) -> Result<Self> {
        let mut runs: BTreeMap<String, Vec<Individual>> = BTreeMap::new();
        for ind in individuals {
            runs.entry(ind.run_id.clone()).or_default().push(ind);
        }
        if runs.is_empty() {
            return Err(Error::NoRuns);
        }
        Ok(RunArchive { runs, metadata })
    }

    pub fn len(&self) -> usize {
        self.runs.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn individuals(&self) -> impl Iterator<Item = &Individual> {
        self.runs.values().flatten()
    }

    /// Runs whose problem id is in `problems`, e.g. a train split.
    pub fn restrict_problems(&self, problems: &BTreeSet<String>) -> Result<RunArchive> {
        let runs: BTreeMap<_, _> = self
            .runs
            .iter()
            .filter(|(_, inds)| {
                inds.first()
                    .is_some_and(|i| problems.contains(&i.problem_id))
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if runs.is_empty() {
            return Err(Error::NoRuns);
        }
        Ok(RunArchive {
            runs,
            metadata: self.metadata.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub diagnostics: Vec<Diagnostic>,
    /// Records dropped because a network depth was outside the bounds.
    pub rejected_depth: usize,
}

#[derive(Clone, Debug, Deserialize)]
struct RawLayer {
    kind: LayerKind,
    activation: u8,
    weight_init: u8,
    #[serde(default)]
    size_bin: Option<u8>,
    #[serde(default)]
    units: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
struct RawGan {
    #[serde(default)]
    v: Option<String>,
    #[serde(default)]
    train_freq_bin: Option<u8>,
    #[serde(default)]
    train_freq: Option<f64>,
    generator: Vec<RawLayer>,
    discriminator: Vec<RawLayer>,
}

#[derive(Clone, Debug, Deserialize)]
struct RawRecord {
    run_id: String,
    problem_id: String,
    fitness: f64,
    gan: RawGan,
}

fn check_raw(raw: &RawRecord) -> std::result::Result<(), String> {
    if !raw.fitness.is_finite() {
        return Err("fitness is not finite".into());
    }
    if let Some(v) = &raw.gan.v {
        if v != GENOTYPE_FORMAT {
            return Err(format!("unsupported genotype format {v:?}"));
        }
    }
    if raw.gan.train_freq_bin.is_none() == raw.gan.train_freq.is_none() {
        return Err("exactly one of train_freq_bin and train_freq required".into());
    }
    for l in raw.gan.generator.iter().chain(&raw.gan.discriminator) {
        if l.size_bin.is_none() == l.units.is_none() {
            return Err("each layer needs exactly one of size_bin and units".into());
        }
        if l.units.is_some_and(|u| !u.is_finite())
            || raw.gan.train_freq.is_some_and(|t| !t.is_finite())
        {
            return Err("raw continuous value is not finite".into());
        }
    }
    Ok(())
}

/// Parses an archive: one JSON record per line with fields `run_id`,
/// `problem_id`, `fitness` and `gan`. Layers may carry raw `units` and the
/// GAN a raw `train_freq`; these are discretized with equal-frequency cut
/// points fitted over the whole file. Malformed lines become diagnostics,
/// out-of-bounds depths are counted and dropped.
pub fn parse_archive(
    text: &str,
    config: &GenotypeConfig,
    mode: Mode,
) -> Result<(RunArchive, LoadReport)> {
    config.validate()?;
    let mut report = LoadReport::default();
    let mut raws: Vec<(usize, RawRecord)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(line) {
            Ok(raw) => match check_raw(&raw) {
                Ok(()) => raws.push((i + 1, raw)),
                Err(message) => report.diagnostics.push(Diagnostic {
                    line: i + 1,
                    message,
                }),
            },
            Err(e) => report.diagnostics.push(Diagnostic {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }

    let units: Vec<f64> = raws
        .iter()
        .flat_map(|(_, r)| r.gan.generator.iter().chain(&r.gan.discriminator))
        .filter_map(|l| l.units)
        .collect();
    let freqs: Vec<f64> = raws.iter().filter_map(|(_, r)| r.gan.train_freq).collect();
    let size_scheme = if units.is_empty() {
        None
    } else {
        Some(fit_discretization(&units, config.size_bins.max(2))?)
    };
    let train_freq_scheme = if freqs.is_empty() {
        None
    } else {
        Some(fit_discretization(&freqs, config.train_freq_bins.max(2))?)
    };

    let mut individuals = Vec::with_capacity(raws.len());
    for (line, raw) in raws {
        let layers = |role: Role, ls: &[RawLayer]| {
            DnnSpec::new(
                role,
                ls.iter()
                    .map(|l| LayerSpec {
                        kind: l.kind,
                        activation: l.activation,
                        weight_init: l.weight_init,
                        size_bin: match (l.size_bin, l.units, &size_scheme) {
                            (Some(b), _, _) => b,
                            (None, Some(u), Some(s)) => s.bin(u) as u8,
                            _ => unreachable!("checked by check_raw"),
                        },
                    })
                    .collect(),
            )
        };
        let gan = GanSpec {
            generator: layers(Role::Generator, &raw.gan.generator),
            discriminator: layers(Role::Discriminator, &raw.gan.discriminator),
            train_freq_bin: match (
                raw.gan.train_freq_bin,
                raw.gan.train_freq,
                &train_freq_scheme,
            ) {
                (Some(b), _, _) => b,
                (None, Some(t), Some(s)) => s.bin(t) as u8,
                _ => unreachable!("checked by check_raw"),
            },
        };
        match config.validate_gan(&gan) {
            Ok(()) => individuals.push(Individual {
                run_id: raw.run_id,
                problem_id: raw.problem_id,
                fitness: raw.fitness,
                gan,
            }),
            Err(Error::UnsupportedDepth { .. }) => report.rejected_depth += 1,
            Err(e) => report.diagnostics.push(Diagnostic {
                line,
                message: e.to_string(),
            }),
        }
    }
    report.loaded = individuals.len();
    let metadata = ArchiveMetadata {
        mode,
        genotype: config.clone(),
        size_scheme,
        train_freq_scheme,
        source_hash: sha256_hex(text.as_bytes()),
    };
    Ok((RunArchive::from_individuals(individuals, metadata)?, report))
}

pub fn load_archive(
    path: &Path,
    config: &GenotypeConfig,
    mode: Mode,
) -> Result<(RunArchive, LoadReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_archive(&text, config, mode)
}

pub fn write_archive<W: Write>(mut out: W, individuals: &[Individual]) -> Result<()> {
    for ind in individuals {
        let line = serde_json::to_string(ind)?;
        writeln!(out, "{line}").map_err(|e| Error::io("<archive stream>", e))?;
    }
    Ok(())
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn run_seed(seed: u64, run_id: &str) -> u64 {
    let digest = Sha256::digest(run_id.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(b)
}

/// Per-run partitions: `first` holds ranks `1..=n`, `second` ranks
/// `n+1..=2n`, `random` `n` uniform draws without replacement from the
/// whole run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliteSets {
    pub n: usize,
    pub seed: u64,
    pub first: Vec<Individual>,
    pub second: Vec<Individual>,
    pub random: Vec<Individual>,
    /// Random-set members that also sit in First or Second of their run.
    pub random_overlap: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetLabel {
    First,
    Second,
    Random,
}

impl SetLabel {
    pub const ALL: [SetLabel; 3] = [SetLabel::First, SetLabel::Second, SetLabel::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            SetLabel::First => "first",
            SetLabel::Second => "second",
            SetLabel::Random => "random",
        }
    }
}

impl EliteSets {
    pub fn get(&self, label: SetLabel) -> &[Individual] {
        match label {
            SetLabel::First => &self.first,
            SetLabel::Second => &self.second,
            SetLabel::Random => &self.random,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Ascending fitness, ties broken by genotype hash and then genotype order,
/// so the ranking does not depend on input order.
pub fn rank_run(run: &[Individual]) -> Vec<&Individual> {
    let mut ranked: Vec<&Individual> = run.iter().collect();
    ranked.sort_by(|a, b| {
        a.fitness
            .total_cmp(&b.fitness)
            .then_with(|| a.gan.canonical_hash().cmp(&b.gan.canonical_hash()))
            .then_with(|| a.gan.cmp(&b.gan))
    });
    ranked
}

pub fn extract_sets(archive: &RunArchive, n: usize, seed: u64) -> Result<EliteSets> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut sets = EliteSets {
        n,
        seed,
        first: Vec::new(),
        second: Vec::new(),
        random: Vec::new(),
        random_overlap: 0,
    };
    for (run_id, run) in &archive.runs {
        if run.len() < 2 * n {
            return Err(Error::InsufficientRun {
                run_id: run_id.clone(),
                count: run.len(),
                needed: 2 * n,
            });
        }
        let ranked = rank_run(run);
        sets.first.extend(ranked[..n].iter().map(|&i| i.clone()));
        sets.second
            .extend(ranked[n..2 * n].iter().map(|&i| i.clone()));
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(seed, run_id));
        let mut picks = rand::seq::index::sample(&mut rng, ranked.len(), n).into_vec();
        picks.sort_unstable();
        sets.random_overlap += picks.iter().filter(|&&p| p < 2 * n).count();
        sets.random
            .extend(picks.into_iter().map(|p| ranked[p].clone()));
    }
    Ok(sets)
}

/// Keeps individuals whose depth key is allowed; also returns the retained
/// fraction (1 for an empty input).
pub fn filter_depths(set: &[Individual], allowed: &BTreeSet<DepthKey>) -> (Vec<Individual>, f64) {
    let kept: Vec<Individual> = set
        .iter()
        .filter(|i| allowed.contains(&i.gan.depth_key()))
        .cloned()
        .collect();
    let fraction = if set.is_empty() {
        1.0
    } else {
        kept.len() as f64 / set.len() as f64
    };
    (kept, fraction)
}
