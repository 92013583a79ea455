//! Seeded synthetic fitness landscapes over the genotype space.
//!
//! A landscape has two layers of tables. The family layer, drawn from
//! `LandscapeConfig::family_seed`, fixes a planted layer sequence per network
//! role, unary preference tables for every layer slot and pairwise
//! interaction tables over seeded slot pairs. A network of depth `d` is
//! judged against the first `d` planted layers, so the planted pattern of a
//! depth key is the matching prefix of each role's sequence. The problem
//! layer, drawn from the landscape's own seed, adds non-negative unary
//! perturbations and depth offsets that vanish on the planted pattern.
//! Landscapes of one family therefore share their optimum and dependency
//! structure while differing elsewhere.
//!
//! Fitness is minimized and non-negative:
//!
//! ```text
//! fitness = base(d_g, d_d) + mean(unary + pairwise terms) + noise
//! ```
//!
//! where the noise is `noise * u`, `u` in `[0, 1)` derived from a hash of
//! the genotype, so re-evaluating a genotype returns the same value.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::genotype::{DepthKey, GanSpec, GenotypeConfig, Role};
use crate::{Error, Result};

pub const LANDSCAPE_FORMAT: &str = "land-v1";

/// Smallest gap between the planted entry and any other entry of a table.
pub const PLANTED_MARGIN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConfig {
    pub genotype: GenotypeConfig,
    pub family_seed: u64,
    /// Amplitude of the genotype-hash noise term.
    pub noise: f64,
    /// Scale of the per-problem unary perturbation.
    pub problem_weight: f64,
    /// Range of the family depth penalty.
    pub depth_spread: f64,
    /// Extra penalty of the shallowest key over the deepest one, linear in
    /// total depth.
    #[serde(default)]
    pub depth_trend: f64,
    /// Interaction pairs per network layer.
    pub pairs_per_layer: usize,
}

impl LandscapeConfig {
    pub fn new(genotype: GenotypeConfig, family_seed: u64) -> Self {
        LandscapeConfig {
            genotype,
            family_seed,
            noise: 0.02,
            problem_weight: 0.5,
            depth_spread: 0.15,
            depth_trend: 0.0,
            pairs_per_layer: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub a: usize,
    pub b: usize,
    /// `card_a * card_b` entries, row-major in `a`.
    pub table: Vec<f64>,
}

/// Tables for one network role over its deepest layout; slots use the
/// per-network layer layout (`4 * depth` values, no global slot). A shallower
/// network reads the leading slots and the pairs that lie inside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub role: Role,
    pub depth: usize,
    pub planted: Vec<usize>,
    pub unary: Vec<Vec<f64>>,
    pub pairs: Vec<PairTerm>,
    /// Problem-specific unary perturbation, zero on the planted values.
    pub problem_unary: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateLandscape {
    pub format: String,
    pub seed: u64,
    pub config: LandscapeConfig,
    pub planted_train_freq: usize,
    pub train_freq_unary: Vec<f64>,
    pub train_freq_problem: Vec<f64>,
    pub generator: NetworkPlan,
    pub discriminator: NetworkPlan,
    /// Depth penalty, generator-depth major.
    pub base: Vec<f64>,
}

/// Planted value 0; every other entry in `[lo, 1]`, `lo >= PLANTED_MARGIN`.
fn unary_table<R: Rng>(card: usize, planted: usize, lo: f64, rng: &mut R) -> Vec<f64> {
    (0..card)
        .map(|v| {
            if v == planted {
                0.0
            } else {
                lo + (1.0 - lo) * rng.gen::<f64>()
            }
        })
        .collect()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn plan_rng(seed: u64, salt: u64, role: Role) -> ChaCha8Rng {
    let role_tag = match role {
        Role::Generator => 1u64,
        Role::Discriminator => 2,
    };
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(salt ^ (role_tag << 32))))
}

fn family_plan(config: &LandscapeConfig, role: Role) -> NetworkPlan {
    let depth = config.genotype.max_depth(role);
    let cards = config.genotype.layer_cardinalities();
    let slot_cards: Vec<usize> = (0..depth).flat_map(|_| cards).collect();
    let mut rng = plan_rng(config.family_seed, 0xFA, role);
    let planted: Vec<usize> = slot_cards.iter().map(|&c| rng.gen_range(0..c)).collect();
    let unary = slot_cards
        .iter()
        .zip(&planted)
        .map(|(&c, &p)| unary_table(c, p, 0.5, &mut rng))
        .collect();

    let mut candidates: Vec<(usize, usize)> = (0..slot_cards.len())
        .flat_map(|a| ((a + 1)..slot_cards.len()).map(move |b| (a, b)))
        // Interactions stay within a layer or between neighboring layers.
        .filter(|&(a, b)| slot_cards[a] > 1 && slot_cards[b] > 1 && b / 4 - a / 4 <= 1)
        .collect();
    candidates.shuffle(&mut rng);
    candidates.truncate(config.pairs_per_layer * depth);
    candidates.sort_unstable();
    let pairs = candidates
        .into_iter()
        .map(|(a, b)| {
            let (ca, cb) = (slot_cards[a], slot_cards[b]);
            // Each value of `a` has one compatible partner in `b`; the planted
            // values are partners of each other.
            let partner: Vec<usize> = (0..ca)
                .map(|x| {
                    if x == planted[a] {
                        planted[b]
                    } else {
                        rng.gen_range(0..cb)
                    }
                })
                .collect();
            let mut table = vec![0.0; ca * cb];
            for x in 0..ca {
                for y in 0..cb {
                    table[x * cb + y] = if x == planted[a] && y == planted[b] {
                        0.0
                    } else if y == partner[x] {
                        PLANTED_MARGIN + 0.25 * rng.gen::<f64>()
                    } else {
                        0.6 + 0.4 * rng.gen::<f64>()
                    };
                }
            }
            PairTerm { a, b, table }
        })
        .collect();
    NetworkPlan {
        role,
        depth,
        planted,
        unary,
        pairs,
        problem_unary: Vec::new(),
    }
}

/// Builds the landscape of problem `seed` within `config`'s family.
pub fn make_landscape(seed: u64, config: &LandscapeConfig) -> Result<SurrogateLandscape> {
    config.genotype.validate()?;
    if !(config.noise >= 0.0)
        || !(config.problem_weight >= 0.0)
        || !(config.depth_spread >= 0.0)
        || !(config.depth_trend >= 0.0)
    {
        return Err(Error::InvalidArgument(
            "landscape amplitudes must be >= 0".into(),
        ));
    }
    let genotype = &config.genotype;
    let mut family = ChaCha8Rng::seed_from_u64(splitmix64(config.family_seed));
    let planted_train_freq = family.gen_range(0..genotype.train_freq_bins);
    let train_freq_unary = unary_table(
        genotype.train_freq_bins,
        planted_train_freq,
        0.5,
        &mut family,
    );
    let keys = genotype.depth_keys();
    let span = (genotype.max_generator_depth + genotype.max_discriminator_depth - 2).max(1) as f64;
    let family_base: Vec<f64> = keys
        .iter()
        .map(|k| {
            let shallowness = 1.0 - (k.d_g + k.d_d - 2) as f64 / span;
            config.depth_spread * family.gen::<f64>() + config.depth_trend * shallowness
        })
        .collect();

    let mut problem = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5EED_0F9B_0B1E));
    let train_freq_problem = unary_table(
        genotype.train_freq_bins,
        planted_train_freq,
        0.0,
        &mut problem,
    );
    let base = family_base
        .iter()
        .map(|b| b + config.problem_weight * config.depth_spread * problem.gen::<f64>())
        .collect();

    let plan = |role: Role| -> NetworkPlan {
        let mut plan = family_plan(config, role);
        let mut rng = plan_rng(seed, 0xB0, role);
        let cards = genotype.layer_cardinalities();
        plan.problem_unary = plan
            .planted
            .iter()
            .enumerate()
            .map(|(s, &p)| unary_table(cards[s % 4], p, 0.0, &mut rng))
            .collect();
        plan
    };
    Ok(SurrogateLandscape {
        format: LANDSCAPE_FORMAT.to_string(),
        seed,
        config: config.clone(),
        planted_train_freq,
        train_freq_unary,
        train_freq_problem,
        generator: plan(Role::Generator),
        discriminator: plan(Role::Discriminator),
        base,
    })
}

impl NetworkPlan {
    fn contributions(&self, values: &[usize], problem_weight: f64) -> (f64, usize) {
        let mut total = 0.0;
        for (s, &v) in values.iter().enumerate() {
            total += self.unary[s][v] + problem_weight * self.problem_unary[s][v];
        }
        for pair in self.pairs.iter().filter(|p| p.b < values.len()) {
            let cb = self.unary[pair.b].len();
            total += pair.table[values[pair.a] * cb + values[pair.b]];
        }
        let active = self.pairs.iter().filter(|p| p.b < values.len()).count();
        (total, values.len() + active)
    }
}

impl SurrogateLandscape {
    pub fn genotype(&self) -> &GenotypeConfig {
        &self.config.genotype
    }

    fn plan(&self, role: Role) -> &NetworkPlan {
        match role {
            Role::Generator => &self.generator,
            Role::Discriminator => &self.discriminator,
        }
    }

    fn key_index(&self, key: DepthKey) -> usize {
        (key.d_g - 1) * self.genotype().max_discriminator_depth + (key.d_d - 1)
    }

    pub fn base(&self, key: DepthKey) -> f64 {
        self.base[self.key_index(key)]
    }

    /// Noise-free fitness.
    pub fn deterministic_fitness(&self, gan: &GanSpec) -> Result<f64> {
        self.genotype().validate_gan(gan)?;
        Ok(self.deterministic_unchecked(gan))
    }

    fn deterministic_unchecked(&self, gan: &GanSpec) -> f64 {
        let w = self.config.problem_weight;
        let t = gan.train_freq_bin as usize;
        let mut total = self.train_freq_unary[t] + w * self.train_freq_problem[t];
        let mut terms = 1;
        for role in Role::ALL {
            let values = gan.network_values(role);
            let layer_values = if role == Role::Generator {
                &values[1..]
            } else {
                &values[..]
            };
            let (c, n) = self.plan(role).contributions(layer_values, w);
            total += c;
            terms += n;
        }
        self.base(gan.depth_key()) + total / terms as f64
    }

    pub fn noise_term(&self, gan: &GanSpec) -> f64 {
        let h = splitmix64(self.seed ^ splitmix64(gan.canonical_hash()));
        self.config.noise * ((h >> 11) as f64 / (1u64 << 53) as f64)
    }

    pub fn evaluate(&self, gan: &GanSpec) -> Result<f64> {
        Ok(self.deterministic_fitness(gan)? + self.noise_term(gan))
    }

    /// The planted pattern of a depth key.
    pub fn planted(&self, key: DepthKey) -> Result<GanSpec> {
        let genotype = self.genotype();
        if !genotype.supports(key) {
            return Err(Error::UnsupportedDepth {
                generator: key.d_g,
                discriminator: key.d_d,
            });
        }
        let mut g = vec![self.planted_train_freq];
        g.extend(&self.plan(Role::Generator).planted[..4 * key.d_g]);
        let d = &self.plan(Role::Discriminator).planted[..4 * key.d_d];
        crate::genotype::unflatten_pair(&g, d, genotype)
    }

    /// Fitness of the planted pattern at zero noise.
    pub fn analytic_minimum(&self, key: DepthKey) -> f64 {
        self.base(key)
    }

    /// Planted pattern of the depth key with the smallest base penalty.
    pub fn global_optimum(&self) -> GanSpec {
        let keys = self.genotype().depth_keys();
        let best = keys
            .iter()
            .copied()
            .min_by(|&a, &b| self.base(a).total_cmp(&self.base(b)))
            .expect("at least one depth key");
        self.planted(best).expect("supported key")
    }

    /// Slots of `gan` differing from the planted pattern of its own depth
    /// key.
    pub fn hamming_to_planted(&self, gan: &GanSpec) -> Result<usize> {
        let planted = self.planted(gan.depth_key())?;
        Ok(gan
            .joint_values()
            .iter()
            .zip(planted.joint_values())
            .filter(|(a, b)| **a != *b)
            .count())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let l: SurrogateLandscape = serde_json::from_str(text)?;
        if l.format != LANDSCAPE_FORMAT {
            return Err(Error::Format(format!(
                "expected {LANDSCAPE_FORMAT}, found {:?}",
                l.format
            )));
        }
        Ok(l)
    }
}
