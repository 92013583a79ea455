//! Two-level metamodel: a smoothed categorical supermodel over network
//! depths and one Bayesian-network submodel per depth (joint mode: per
//! generator/discriminator depth pair; per-network mode: per role and
//! depth).

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{sha256_hex, ArchiveMetadata, Individual};
use crate::bayesnet::{
    draw_categorical, fit_cpts, learn_network, BayesNet, BnDocument, Dag, Dataset,
    StructureLearner, Variable,
};
use crate::genotype::{
    unflatten_joint, unflatten_pair, DepthKey, GanSpec, GenotypeConfig, Mode, Role, Schema,
    SubmodelKey,
};
use crate::{Error, Result};

pub const METAMODEL_FORMAT: &str = "mm-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetamodelConfig {
    pub mode: Mode,
    pub genotype: GenotypeConfig,
    /// CPT smoothing pseudocount.
    pub alpha: f64,
    /// Pseudocount added to every supported depth in the supermodel.
    pub supermodel_alpha: f64,
    /// Groups smaller than this get independent marginals instead of a
    /// learned structure.
    pub min_samples: usize,
    pub learner: StructureLearner,
}

impl MetamodelConfig {
    pub fn new(mode: Mode) -> Self {
        MetamodelConfig {
            mode,
            genotype: GenotypeConfig::for_mode(mode),
            alpha: 1.0,
            supermodel_alpha: 1.0,
            min_samples: 10,
            learner: StructureLearner::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.genotype.validate()?;
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(
                "metamodel CPT pseudocount must be > 0".into(),
            ));
        }
        if !(self.supermodel_alpha > 0.0) || !self.supermodel_alpha.is_finite() {
            return Err(Error::InvalidArgument(
                "supermodel pseudocount must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }
}

impl Default for MetamodelConfig {
    fn default() -> Self {
        Self::new(Mode::Joint)
    }
}

/// Smoothed distribution over depths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Supermodel {
    Joint {
        keys: Vec<DepthKey>,
        probs: Vec<f64>,
    },
    /// `generator[d - 1]` is the probability of generator depth `d`.
    PerNetwork {
        generator: Vec<f64>,
        discriminator: Vec<f64>,
    },
}

fn smoothed(counts: &[usize], alpha: f64) -> Vec<f64> {
    let total = counts.iter().sum::<usize>() as f64 + alpha * counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + alpha) / total).collect()
}

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    let sum: f64 = probs.iter().sum();
    if probs.is_empty()
        || probs.iter().any(|p| !(0.0..=1.0).contains(p))
        || (sum - 1.0).abs() > 1e-9
    {
        return Err(Error::Format(format!("{what} is not a distribution")));
    }
    Ok(())
}

impl Supermodel {
    pub fn log_prob(&self, key: DepthKey) -> f64 {
        match self {
            Supermodel::Joint { keys, probs } => keys
                .iter()
                .position(|&k| k == key)
                .map_or(f64::NEG_INFINITY, |i| probs[i].ln()),
            Supermodel::PerNetwork {
                generator,
                discriminator,
            } => {
                let p = |probs: &[f64], d: usize| {
                    d.checked_sub(1)
                        .and_then(|i| probs.get(i))
                        .copied()
                        .unwrap_or(0.0)
                };
                p(generator, key.d_g).ln() + p(discriminator, key.d_d).ln()
            }
        }
    }

    /// Probability of every supported depth key.
    pub fn key_probabilities(&self) -> Vec<(DepthKey, f64)> {
        match self {
            Supermodel::Joint { keys, probs } => {
                keys.iter().copied().zip(probs.iter().copied()).collect()
            }
            Supermodel::PerNetwork {
                generator,
                discriminator,
            } => generator
                .iter()
                .enumerate()
                .flat_map(|(g, pg)| {
                    discriminator
                        .iter()
                        .enumerate()
                        .map(move |(d, pd)| (DepthKey::new(g + 1, d + 1), pg * pd))
                })
                .collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DepthKey {
        match self {
            Supermodel::Joint { keys, probs } => keys[draw_categorical(probs, rng)],
            Supermodel::PerNetwork {
                generator,
                discriminator,
            } => {
                let d_g = draw_categorical(generator, rng) + 1;
                let d_d = draw_categorical(discriminator, rng) + 1;
                DepthKey::new(d_g, d_d)
            }
        }
    }

    fn validate(&self, mode: Mode, genotype: &GenotypeConfig) -> Result<()> {
        match (self, mode) {
            (Supermodel::Joint { keys, probs }, Mode::Joint) => {
                if *keys != genotype.depth_keys() || probs.len() != keys.len() {
                    return Err(Error::Format(
                        "supermodel keys do not match depth bounds".into(),
                    ));
                }
                check_distribution(probs, "supermodel")
            }
            (
                Supermodel::PerNetwork {
                    generator,
                    discriminator,
                },
                Mode::PerNetwork,
            ) => {
                if generator.len() != genotype.max_generator_depth
                    || discriminator.len() != genotype.max_discriminator_depth
                {
                    return Err(Error::Format(
                        "supermodel support does not match depth bounds".into(),
                    ));
                }
                check_distribution(generator, "generator depth distribution")?;
                check_distribution(discriminator, "discriminator depth distribution")
            }
            _ => Err(Error::Format(
                "supermodel does not match metamodel mode".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmodelKind {
    /// Structure learned from data.
    Network,
    /// Independent smoothed marginals (too few samples for structure).
    Marginals,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Submodel {
    pub key: SubmodelKey,
    pub schema: Schema,
    pub kind: SubmodelKind,
    pub samples: usize,
    pub bn: BayesNet,
}

fn schema_variables(schema: &Schema) -> Vec<Variable> {
    schema
        .slots
        .iter()
        .map(|s| Variable::new(s.name.clone(), s.cardinality))
        .collect()
}

fn learn_submodel(
    key: SubmodelKey,
    schema: Schema,
    rows: Vec<Vec<usize>>,
    config: &MetamodelConfig,
) -> Result<Submodel> {
    let samples = rows.len();
    let variables = schema_variables(&schema);
    let data = Dataset::new(variables.clone(), rows)?;
    let order: Vec<usize> = (0..variables.len()).collect();
    let (kind, bn) = if samples >= config.min_samples.max(1)
        && !matches!(config.learner, StructureLearner::Independent)
    {
        (
            SubmodelKind::Network,
            learn_network(&data, config.learner, &order, config.alpha)?,
        )
    } else {
        (
            SubmodelKind::Marginals,
            fit_cpts(Dag::empty(variables)?, &data, config.alpha)?,
        )
    };
    Ok(Submodel {
        key,
        schema,
        kind,
        samples,
        bn,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub archive_hash: Option<String>,
    pub config_hash: String,
    pub training_individuals: usize,
    /// Submodels learned from zero rows (uniform).
    pub empty_submodels: Vec<SubmodelKey>,
    pub size_scheme: Option<crate::genotype::DiscretizationScheme>,
    pub train_freq_scheme: Option<crate::genotype::DiscretizationScheme>,
}

/// Log-probability of a genotype and its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub log_prob: f64,
    pub supermodel_term: f64,
    pub submodel_term: f64,
    /// `log_prob` divided by the number of modelled variables (depth
    /// variables plus slots).
    pub normalized: f64,
    /// Per-variable log-likelihood ratio against the uniform distribution
    /// over the same genotype space; zero everywhere under an
    /// uninformative metamodel.
    pub lift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metamodel {
    pub config: MetamodelConfig,
    pub supermodel: Supermodel,
    pub submodels: BTreeMap<SubmodelKey, Submodel>,
    pub provenance: Provenance,
}

impl Metamodel {
    pub fn learn(first: &[GanSpec], config: &MetamodelConfig) -> Result<Metamodel> {
        Self::learn_with_provenance(first, config, None, None)
    }

    /// Learns from elite individuals, recording the archive they came from.
    pub fn learn_from_individuals(
        first: &[Individual],
        config: &MetamodelConfig,
        archive: Option<&ArchiveMetadata>,
    ) -> Result<Metamodel> {
        let gans: Vec<GanSpec> = first.iter().map(|i| i.gan.clone()).collect();
        Self::learn_with_provenance(
            &gans,
            config,
            archive.map(|a| a.source_hash.clone()),
            archive,
        )
    }

    fn learn_with_provenance(
        first: &[GanSpec],
        config: &MetamodelConfig,
        archive_hash: Option<String>,
        archive: Option<&ArchiveMetadata>,
    ) -> Result<Metamodel> {
        config.validate()?;
        if first.is_empty() {
            return Err(Error::NoData);
        }
        let genotype = &config.genotype;
        let mut groups: BTreeMap<SubmodelKey, Vec<Vec<usize>>> = genotype
            .submodel_keys(config.mode)
            .into_iter()
            .map(|k| (k, Vec::new()))
            .collect();
        for gan in first {
            genotype.validate_gan(gan)?;
            match config.mode {
                Mode::Joint => groups
                    .get_mut(&SubmodelKey::joint(gan.depth_key()))
                    .expect("validated depth")
                    .push(gan.joint_values()),
                Mode::PerNetwork => {
                    for role in Role::ALL {
                        let key = SubmodelKey::Network {
                            role,
                            depth: gan.network(role).depth(),
                        };
                        groups
                            .get_mut(&key)
                            .expect("validated depth")
                            .push(gan.network_values(role));
                    }
                }
            }
        }

        let supermodel = match config.mode {
            Mode::Joint => {
                let keys = genotype.depth_keys();
                let counts: Vec<usize> = keys
                    .iter()
                    .map(|&k| groups[&SubmodelKey::joint(k)].len())
                    .collect();
                Supermodel::Joint {
                    keys,
                    probs: smoothed(&counts, config.supermodel_alpha),
                }
            }
            Mode::PerNetwork => {
                let counts = |role: Role| -> Vec<usize> {
                    (1..=genotype.max_depth(role))
                        .map(|depth| groups[&SubmodelKey::Network { role, depth }].len())
                        .collect()
                };
                Supermodel::PerNetwork {
                    generator: smoothed(&counts(Role::Generator), config.supermodel_alpha),
                    discriminator: smoothed(&counts(Role::Discriminator), config.supermodel_alpha),
                }
            }
        };

        let empty_submodels = groups
            .iter()
            .filter(|(_, r)| r.is_empty())
            .map(|(&k, _)| k)
            .collect();
        let submodels = groups
            .into_par_iter()
            .map(|(key, rows)| {
                learn_submodel(key, genotype.schema(key), rows, config).map(|s| (key, s))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect();

        Ok(Metamodel {
            config: config.clone(),
            supermodel,
            submodels,
            provenance: Provenance {
                archive_hash,
                config_hash: config.digest(),
                training_individuals: first.len(),
                empty_submodels,
                size_scheme: archive.and_then(|a| a.size_scheme.clone()),
                train_freq_scheme: archive.and_then(|a| a.train_freq_scheme.clone()),
            },
        })
    }

    /// Uniform supermodel and uniform marginal submodels.
    pub fn uniform(config: &MetamodelConfig) -> Result<Metamodel> {
        config.validate()?;
        let genotype = &config.genotype;
        let supermodel = match config.mode {
            Mode::Joint => {
                let keys = genotype.depth_keys();
                let counts = vec![0; keys.len()];
                Supermodel::Joint {
                    keys,
                    probs: smoothed(&counts, 1.0),
                }
            }
            Mode::PerNetwork => Supermodel::PerNetwork {
                generator: smoothed(&vec![0; genotype.max_generator_depth], 1.0),
                discriminator: smoothed(&vec![0; genotype.max_discriminator_depth], 1.0),
            },
        };
        let mut marginal = config.clone();
        marginal.learner = StructureLearner::Independent;
        let keys = genotype.submodel_keys(config.mode);
        let submodels = keys
            .iter()
            .map(|&key| {
                learn_submodel(key, genotype.schema(key), Vec::new(), &marginal).map(|s| (key, s))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Metamodel {
            config: config.clone(),
            supermodel,
            submodels,
            provenance: Provenance {
                archive_hash: None,
                config_hash: config.digest(),
                training_individuals: 0,
                empty_submodels: keys,
                size_scheme: None,
                train_freq_scheme: None,
            },
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn genotype(&self) -> &GenotypeConfig {
        &self.config.genotype
    }

    fn submodel(&self, key: SubmodelKey) -> &Submodel {
        &self.submodels[&key]
    }

    pub fn score(&self, gan: &GanSpec) -> Result<Score> {
        self.genotype().validate_gan(gan)?;
        Ok(self.score_valid(gan))
    }

    /// Scores a genotype already known to satisfy the genotype invariants.
    pub fn score_valid(&self, gan: &GanSpec) -> Score {
        let key = gan.depth_key();
        let supermodel_term = self.supermodel.log_prob(key);
        let genotype = self.genotype();
        let depth_vars = match self.mode() {
            Mode::Joint => 1.0,
            Mode::PerNetwork => 2.0,
        };
        let uniform_depth = match self.mode() {
            Mode::Joint => {
                -((genotype.max_generator_depth * genotype.max_discriminator_depth) as f64).ln()
            }
            Mode::PerNetwork => {
                -(genotype.max_generator_depth as f64).ln()
                    - (genotype.max_discriminator_depth as f64).ln()
            }
        };
        let mut submodel_term = 0.0;
        let mut uniform_slots = 0.0;
        let mut slots = 0usize;
        let mut add = |sub: &Submodel, values: &[usize]| {
            submodel_term += sub.bn.log_likelihood_unchecked(values);
            uniform_slots -= sub
                .schema
                .slots
                .iter()
                .map(|s| (s.cardinality as f64).ln())
                .sum::<f64>();
            slots += values.len();
        };
        match self.mode() {
            Mode::Joint => add(self.submodel(SubmodelKey::joint(key)), &gan.joint_values()),
            Mode::PerNetwork => {
                for role in Role::ALL {
                    let sub = self.submodel(SubmodelKey::Network {
                        role,
                        depth: gan.network(role).depth(),
                    });
                    add(sub, &gan.network_values(role));
                }
            }
        }
        let log_prob = supermodel_term + submodel_term;
        let vars = depth_vars + slots as f64;
        Score {
            log_prob,
            supermodel_term,
            submodel_term,
            normalized: log_prob / vars,
            lift: (log_prob - uniform_depth - uniform_slots) / vars,
        }
    }

    /// Draws a depth key from the supermodel, then the slot values by
    /// ancestral sampling of the matching submodel(s).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GanSpec {
        let key = self.supermodel.sample(rng);
        let genotype = self.genotype();
        let gan = match self.mode() {
            Mode::Joint => {
                let values = self.submodel(SubmodelKey::joint(key)).bn.sample(rng);
                unflatten_joint(key, &values, genotype)
            }
            Mode::PerNetwork => {
                let g = self
                    .submodel(SubmodelKey::Network {
                        role: Role::Generator,
                        depth: key.d_g,
                    })
                    .bn
                    .sample(rng);
                let d = self
                    .submodel(SubmodelKey::Network {
                        role: Role::Discriminator,
                        depth: key.d_d,
                    })
                    .bn
                    .sample(rng);
                unflatten_pair(&g, &d, genotype)
            }
        };
        gan.expect("submodel schemas decode to valid genotypes")
    }

    /// Warning text when `archive` was produced under a different genotype
    /// configuration, mode or discretization than this model.
    pub fn provenance_warning(&self, archive: &ArchiveMetadata) -> Option<String> {
        let mut issues = Vec::new();
        if archive.mode != self.mode() {
            issues.push(format!("mode {} vs model {}", archive.mode, self.mode()));
        }
        if archive.genotype != *self.genotype() {
            issues.push("genotype configuration differs".to_string());
        }
        if archive.size_scheme != self.provenance.size_scheme
            || archive.train_freq_scheme != self.provenance.train_freq_scheme
        {
            issues.push("discretization differs".to_string());
        }
        if issues.is_empty() {
            None
        } else {
            Some(format!(
                "archive/model provenance mismatch: {}",
                issues.join("; ")
            ))
        }
    }

    pub fn to_document(&self) -> MetamodelDocument {
        MetamodelDocument {
            format: METAMODEL_FORMAT.to_string(),
            config: self.config.clone(),
            provenance: self.provenance.clone(),
            supermodel: self.supermodel.clone(),
            submodels: self
                .submodels
                .values()
                .map(|s| SubmodelDocument {
                    key: s.key,
                    kind: s.kind,
                    samples: s.samples,
                    network: s.bn.to_document(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: MetamodelDocument) -> Result<Metamodel> {
        if doc.format != METAMODEL_FORMAT {
            return Err(Error::Format(format!(
                "expected {METAMODEL_FORMAT}, found {:?}",
                doc.format
            )));
        }
        doc.config.validate()?;
        let genotype = &doc.config.genotype;
        doc.supermodel.validate(doc.config.mode, genotype)?;
        let mut submodels = BTreeMap::new();
        for s in doc.submodels {
            let schema = genotype.schema(s.key);
            let bn = BayesNet::from_document(s.network)?;
            if bn.variables() != schema_variables(&schema).as_slice() {
                return Err(Error::Format(format!(
                    "submodel {} does not match its schema",
                    s.key
                )));
            }
            submodels.insert(
                s.key,
                Submodel {
                    key: s.key,
                    schema,
                    kind: s.kind,
                    samples: s.samples,
                    bn,
                },
            );
        }
        let expected = genotype.submodel_keys(doc.config.mode);
        if submodels.len() != expected.len() || expected.iter().any(|k| !submodels.contains_key(k))
        {
            return Err(Error::Format("metamodel is missing submodels".into()));
        }
        Ok(Metamodel {
            config: doc.config,
            supermodel: doc.supermodel,
            submodels,
            provenance: doc.provenance,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Metamodel> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Metamodel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmodelDocument {
    pub key: SubmodelKey,
    pub kind: SubmodelKind,
    pub samples: usize,
    pub network: BnDocument,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetamodelDocument {
    pub format: String,
    pub config: MetamodelConfig,
    pub provenance: Provenance,
    pub supermodel: Supermodel,
    pub submodels: Vec<SubmodelDocument>,
}
