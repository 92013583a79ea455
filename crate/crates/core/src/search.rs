//! Mutation operators, neighborhoods, hill climbing and a small
//! generational EA over surrogate landscapes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::genotype::{DepthKey, DnnSpec, GanSpec, GenotypeConfig, LayerKind, LayerSpec, Role};
use crate::landscape::SurrogateLandscape;
use crate::metamodel::Metamodel;
use crate::{Error, Result};

/// Mutable per-layer attribute. The layer kind is fixed once a layer exists;
/// changing it takes a delete and an add.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSlot {
    Activation,
    WeightInit,
    SizeBin,
}

impl LayerSlot {
    pub const ALL: [LayerSlot; 3] = [
        LayerSlot::Activation,
        LayerSlot::WeightInit,
        LayerSlot::SizeBin,
    ];

    fn cardinality(self, cfg: &GenotypeConfig) -> usize {
        match self {
            LayerSlot::Activation => cfg.activations.len(),
            LayerSlot::WeightInit => cfg.weight_inits.len(),
            LayerSlot::SizeBin => cfg.size_bins,
        }
    }

    fn get(self, layer: &LayerSpec) -> u8 {
        match self {
            LayerSlot::Activation => layer.activation,
            LayerSlot::WeightInit => layer.weight_init,
            LayerSlot::SizeBin => layer.size_bin,
        }
    }

    fn set(self, layer: &mut LayerSpec, value: u8) {
        match self {
            LayerSlot::Activation => layer.activation = value,
            LayerSlot::WeightInit => layer.weight_init = value,
            LayerSlot::SizeBin => layer.size_bin = value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MutationOp {
    AddLayer {
        role: Role,
        position: usize,
        layer: LayerSpec,
    },
    DeleteLayer {
        role: Role,
        position: usize,
    },
    ChangeLayer {
        role: Role,
        position: usize,
        slot: LayerSlot,
        value: u8,
    },
    ChangeTrainFreq {
        value: u8,
    },
}

impl MutationOp {
    /// Applies the operator, rejecting results outside the genotype
    /// invariants.
    pub fn apply(&self, gan: &GanSpec, cfg: &GenotypeConfig) -> Result<GanSpec> {
        let mut out = gan.clone();
        match *self {
            MutationOp::AddLayer {
                role,
                position,
                layer,
            } => {
                let net = out.network_mut(role);
                if net.depth() >= cfg.max_depth(role) || position > net.depth() {
                    return Err(Error::InvalidArgument(format!(
                        "cannot add {role} layer at {position}"
                    )));
                }
                net.layers.insert(position, layer);
            }
            MutationOp::DeleteLayer { role, position } => {
                let net = out.network_mut(role);
                if net.depth() <= 1 || position >= net.depth() {
                    return Err(Error::InvalidArgument(format!(
                        "cannot delete {role} layer {position}"
                    )));
                }
                net.layers.remove(position);
            }
            MutationOp::ChangeLayer {
                role,
                position,
                slot,
                value,
            } => {
                let layer = out
                    .network_mut(role)
                    .layers
                    .get_mut(position)
                    .ok_or_else(|| Error::InvalidArgument(format!("no {role} layer {position}")))?;
                slot.set(layer, value);
            }
            MutationOp::ChangeTrainFreq { value } => out.train_freq_bin = value,
        }
        cfg.validate_gan(&out)?;
        Ok(out)
    }
}

fn all_layers(cfg: &GenotypeConfig, role: Role) -> Vec<LayerSpec> {
    let mut out = Vec::new();
    for kind in LayerKind::legal(role) {
        for activation in 0..cfg.activations.len() as u8 {
            for weight_init in 0..cfg.weight_inits.len() as u8 {
                for size_bin in 0..cfg.size_bins as u8 {
                    out.push(LayerSpec {
                        kind,
                        activation,
                        weight_init,
                        size_bin,
                    });
                }
            }
        }
    }
    out
}

/// One operator per distinct neighbor of `gan`, in a fixed order: changes,
/// then adds, then deletes.
pub fn applicable_ops(gan: &GanSpec, cfg: &GenotypeConfig) -> Vec<MutationOp> {
    let mut ops = Vec::new();
    for v in 0..cfg.train_freq_bins as u8 {
        if v != gan.train_freq_bin {
            ops.push(MutationOp::ChangeTrainFreq { value: v });
        }
    }
    for role in Role::ALL {
        for (position, layer) in gan.network(role).layers.iter().enumerate() {
            for slot in LayerSlot::ALL {
                for value in 0..slot.cardinality(cfg) as u8 {
                    if value != slot.get(layer) {
                        ops.push(MutationOp::ChangeLayer {
                            role,
                            position,
                            slot,
                            value,
                        });
                    }
                }
            }
        }
    }
    for role in Role::ALL {
        let depth = gan.network(role).depth();
        if depth < cfg.max_depth(role) {
            let layers = &gan.network(role).layers;
            for layer in all_layers(cfg, role) {
                // Inserting next to an equal layer gives the same network
                // from either side; keep the leftmost position.
                for position in 0..=depth {
                    if position == 0 || layers[position - 1] != layer {
                        ops.push(MutationOp::AddLayer {
                            role,
                            position,
                            layer,
                        });
                    }
                }
            }
        }
    }
    for role in Role::ALL {
        let depth = gan.network(role).depth();
        if depth > 1 {
            let layers = &gan.network(role).layers;
            for position in 0..depth {
                if position == 0 || layers[position - 1] != layers[position] {
                    ops.push(MutationOp::DeleteLayer { role, position });
                }
            }
        }
    }
    ops
}

/// Distinct genotypes one operator away from `gan`, in the order of
/// [`applicable_ops`].
pub fn neighbors(gan: &GanSpec, cfg: &GenotypeConfig) -> Vec<GanSpec> {
    applicable_ops(gan, cfg)
        .iter()
        .map(|op| {
            op.apply(gan, cfg)
                .expect("applicable op yields a valid genotype")
        })
        .collect()
}

/// A uniform draw from [`neighbors`]. Panics if `gan` has no neighbor,
/// which cannot happen while any slot has two values.
pub fn random_neighbor<R: Rng + ?Sized>(
    gan: &GanSpec,
    cfg: &GenotypeConfig,
    rng: &mut R,
) -> GanSpec {
    let ops = applicable_ops(gan, cfg);
    assert!(!ops.is_empty(), "genotype without neighbors");
    ops[rng.gen_range(0..ops.len())]
        .apply(gan, cfg)
        .expect("applicable op yields a valid genotype")
}

/// The EA mutation: an operator class (add, delete or change) is drawn
/// uniformly among the applicable ones, then an operator of that class.
/// Uniform neighbor draws would almost always add a layer, since there are
/// far more insertion neighbors than any other kind.
pub fn random_mutation<R: Rng + ?Sized>(
    gan: &GanSpec,
    cfg: &GenotypeConfig,
    rng: &mut R,
) -> GanSpec {
    let mut classes: [Vec<MutationOp>; 3] = Default::default();
    for op in applicable_ops(gan, cfg) {
        let class = match op {
            MutationOp::AddLayer { .. } => 0,
            MutationOp::DeleteLayer { .. } => 1,
            MutationOp::ChangeLayer { .. } | MutationOp::ChangeTrainFreq { .. } => 2,
        };
        classes[class].push(op);
    }
    let available: Vec<&Vec<MutationOp>> = classes.iter().filter(|c| !c.is_empty()).collect();
    assert!(!available.is_empty(), "genotype without neighbors");
    let class = available[rng.gen_range(0..available.len())];
    class[rng.gen_range(0..class.len())]
        .apply(gan, cfg)
        .expect("applicable op yields a valid genotype")
}

/// The 1-layer/1-layer starting genotype of hill climbing.
pub fn minimal_start<R: Rng + ?Sized>(cfg: &GenotypeConfig, rng: &mut R) -> GanSpec {
    cfg.random_gan_at(DepthKey::new(1, 1), rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1-based evaluation index.
    pub step: usize,
    pub candidate_hash: u64,
    pub fitness: f64,
    pub accepted: bool,
    pub best: f64,
    /// Padding after the guided search ran out of unvisited neighbors.
    pub exhausted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub start_fitness: f64,
    pub steps: Vec<TraceStep>,
    pub best: GanSpec,
}

impl SearchTrace {
    pub fn final_best(&self) -> f64 {
        self.steps.last().map_or(self.start_fitness, |s| s.best)
    }

    /// Best-so-far after `step` evaluations (0 gives the start).
    pub fn best_at(&self, step: usize) -> f64 {
        if step == 0 {
            self.start_fitness
        } else {
            self.steps[step.min(self.steps.len()) - 1].best
        }
    }
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be >= 1".into()));
    }
    Ok(())
}

struct Climber {
    current: GanSpec,
    current_fitness: f64,
    steps: Vec<TraceStep>,
}

impl Climber {
    fn new(landscape: &SurrogateLandscape, start: GanSpec) -> Result<Self> {
        let current_fitness = landscape.evaluate(&start)?;
        Ok(Climber {
            current: start,
            current_fitness,
            steps: Vec::new(),
        })
    }

    fn offer(&mut self, candidate: GanSpec, fitness: f64) -> bool {
        let accepted = fitness < self.current_fitness;
        self.steps.push(TraceStep {
            step: self.steps.len() + 1,
            candidate_hash: candidate.canonical_hash(),
            fitness,
            accepted,
            best: if accepted {
                fitness
            } else {
                self.current_fitness
            },
            exhausted: false,
        });
        if accepted {
            self.current = candidate;
            self.current_fitness = fitness;
        }
        accepted
    }

    fn finish(mut self, start_fitness: f64, budget: usize) -> SearchTrace {
        while self.steps.len() < budget {
            self.steps.push(TraceStep {
                step: self.steps.len() + 1,
                candidate_hash: 0,
                fitness: self.current_fitness,
                accepted: false,
                best: self.current_fitness,
                exhausted: true,
            });
        }
        SearchTrace {
            start_fitness,
            steps: self.steps,
            best: self.current,
        }
    }
}

/// Hill climbing with uniform random neighbors and strict acceptance. The
/// start evaluation is not counted in `budget`.
pub fn random_hc<R: Rng + ?Sized>(
    landscape: &SurrogateLandscape,
    start: GanSpec,
    budget: usize,
    rng: &mut R,
) -> Result<SearchTrace> {
    check_budget(budget)?;
    let cfg = landscape.genotype();
    let mut climber = Climber::new(landscape, start)?;
    let start_fitness = climber.current_fitness;
    for _ in 0..budget {
        let candidate = random_neighbor(&climber.current, cfg, rng);
        let f = landscape.evaluate(&candidate)?;
        climber.offer(candidate, f);
    }
    Ok(climber.finish(start_fitness, budget))
}

const LIFT_RESOLUTION: f64 = 1e9;

/// Neighbors of `gan` ordered from most to least promising under
/// `metamodel`. Ranking uses the per-variable lift so that an
/// uninformative model ranks uniformly at random; ties are broken by a
/// shuffle drawn from `rng`.
pub fn rank_neighbors<R: Rng + ?Sized>(
    gan: &GanSpec,
    cfg: &GenotypeConfig,
    metamodel: &Metamodel,
    rng: &mut R,
) -> Result<Vec<GanSpec>> {
    let mut scored = Vec::new();
    for n in neighbors(gan, cfg) {
        // Lifts equal up to rounding count as ties.
        let lift = (metamodel.score(&n)?.lift * LIFT_RESOLUTION).round() as i64;
        scored.push((lift, n));
    }
    scored.shuffle(rng);
    scored.sort_by_key(|s| std::cmp::Reverse(s.0));
    Ok(scored.into_iter().map(|(_, n)| n).collect())
}

/// Metamodel-guided hill climbing: each step evaluates the best-ranked
/// neighbor of the incumbent not yet tried from it. When every neighbor of
/// the incumbent has been rejected the search stops and the remaining
/// budget is padded with exhausted steps.
pub fn guided_hc<R: Rng + ?Sized>(
    landscape: &SurrogateLandscape,
    metamodel: &Metamodel,
    start: GanSpec,
    budget: usize,
    rng: &mut R,
) -> Result<SearchTrace> {
    check_budget(budget)?;
    let cfg = landscape.genotype();
    let mut climber = Climber::new(landscape, start)?;
    let start_fitness = climber.current_fitness;
    let mut ranked = rank_neighbors(&climber.current, cfg, metamodel, rng)?.into_iter();
    while climber.steps.len() < budget {
        let Some(candidate) = ranked.next() else {
            break;
        };
        let f = landscape.evaluate(&candidate)?;
        if climber.offer(candidate, f) {
            ranked = rank_neighbors(&climber.current, cfg, metamodel, rng)?.into_iter();
        }
    }
    Ok(climber.finish(start_fitness, budget))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    Random,
    FromFirst,
    FromMetamodel,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 3] = [
        InitStrategy::Random,
        InitStrategy::FromFirst,
        InitStrategy::FromMetamodel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InitStrategy::Random => "random",
            InitStrategy::FromFirst => "from_first",
            InitStrategy::FromMetamodel => "from_metamodel",
        }
    }
}

/// Material for the non-random initialization strategies.
#[derive(Clone, Copy, Debug, Default)]
pub struct InitSource<'a> {
    pub first: &'a [GanSpec],
    pub metamodel: Option<&'a Metamodel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<(GanSpec, f64)>,
}

impl Population {
    pub fn evaluate(landscape: &SurrogateLandscape, gans: Vec<GanSpec>) -> Result<Self> {
        let members = gans
            .into_iter()
            .map(|g| {
                let f = landscape.evaluate(&g)?;
                Ok((g, f))
            })
            .collect::<Result<_>>()?;
        Ok(Population { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&(GanSpec, f64)> {
        self.members.iter().min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn best_fitness(&self) -> f64 {
        self.best().map_or(f64::INFINITY, |b| b.1)
    }
}

pub fn init_population<R: Rng + ?Sized>(
    strategy: InitStrategy,
    size: usize,
    source: InitSource<'_>,
    landscape: &SurrogateLandscape,
    rng: &mut R,
) -> Result<Population> {
    if size == 0 {
        return Err(Error::InvalidArgument(
            "population size must be >= 1".into(),
        ));
    }
    let cfg = landscape.genotype();
    let gans: Vec<GanSpec> = match strategy {
        InitStrategy::Random => (0..size).map(|_| cfg.random_gan(rng)).collect(),
        InitStrategy::FromFirst => {
            if source.first.is_empty() {
                return Err(Error::NoData);
            }
            (0..size)
                .map(|_| source.first[rng.gen_range(0..source.first.len())].clone())
                .collect()
        }
        InitStrategy::FromMetamodel => {
            let mm = source.metamodel.ok_or_else(|| {
                Error::InvalidArgument("metamodel initialization needs a metamodel".into())
            })?;
            (0..size).map(|_| mm.sample(rng)).collect()
        }
    };
    Population::evaluate(landscape, gans)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament: usize,
    pub elitism: usize,
}

impl Default for EaConfig {
    fn default() -> Self {
        EaConfig {
            population: 20,
            generations: 20,
            crossover_rate: 0.5,
            mutation_rate: 0.8,
            tournament: 2,
            elitism: 1,
        }
    }
}

impl EaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.generations == 0 || self.tournament == 0 {
            return Err(Error::InvalidArgument(
                "population, generations and tournament size must be >= 1".into(),
            ));
        }
        if self.elitism > self.population {
            return Err(Error::InvalidArgument("elitism exceeds population".into()));
        }
        for (name, r) in [
            ("crossover", self.crossover_rate),
            ("mutation", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!(
                    "{name} rate {r} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Offspring pair of swapping the discriminators of two parents.
pub fn crossover(a: &GanSpec, b: &GanSpec) -> (GanSpec, GanSpec) {
    let swap = |g: &DnnSpec, d: &DnnSpec, t: u8| GanSpec {
        generator: g.clone(),
        discriminator: d.clone(),
        train_freq_bin: t,
    };
    (
        swap(&a.generator, &b.discriminator, a.train_freq_bin),
        swap(&b.generator, &a.discriminator, b.train_freq_bin),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub generation: usize,
    pub gan: GanSpec,
    pub fitness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EaResult {
    /// Best fitness of each generation's population; entry 0 is the
    /// initial population.
    pub best_per_generation: Vec<f64>,
    /// Every evaluation in order, the initial population included.
    pub evaluated: Vec<Evaluated>,
    pub final_population: Population,
}

fn tournament<'p, R: Rng + ?Sized>(pop: &'p Population, k: usize, rng: &mut R) -> &'p GanSpec {
    let mut best = &pop.members[rng.gen_range(0..pop.len())];
    for _ in 1..k {
        let c = &pop.members[rng.gen_range(0..pop.len())];
        if c.1 < best.1 {
            best = c;
        }
    }
    &best.0
}

fn sorted_by_fitness(members: &mut [(GanSpec, f64)]) {
    members.sort_by(|a, b| a.1.total_cmp(&b.1));
}

/// Generational EA. Each generation after the first breeds a full
/// population by binary tournament, discriminator-swap crossover and one
/// [`random_mutation`], all offspring are evaluated, and the worst
/// `elitism` offspring give way to the best members of the previous
/// generation.
pub fn simple_ea<R: Rng + ?Sized>(
    landscape: &SurrogateLandscape,
    init: Population,
    config: &EaConfig,
    rng: &mut R,
) -> Result<EaResult> {
    config.validate()?;
    if init.is_empty() {
        return Err(Error::NoData);
    }
    let cfg = landscape.genotype();
    let size = init.len();
    let mut evaluated: Vec<Evaluated> = init
        .members
        .iter()
        .map(|(g, f)| Evaluated {
            generation: 0,
            gan: g.clone(),
            fitness: *f,
        })
        .collect();
    let mut pop = init;
    let mut best = vec![pop.best_fitness()];
    for generation in 1..config.generations {
        let mut children = Vec::with_capacity(size + 1);
        while children.len() < size {
            let a = tournament(&pop, config.tournament, rng);
            let b = tournament(&pop, config.tournament, rng);
            let (c1, c2) = if rng.gen::<f64>() < config.crossover_rate {
                crossover(a, b)
            } else {
                (a.clone(), b.clone())
            };
            children.push(c1);
            children.push(c2);
        }
        children.truncate(size);
        let mut next = Vec::with_capacity(size);
        for child in children {
            let child = if rng.gen::<f64>() < config.mutation_rate {
                random_mutation(&child, cfg, rng)
            } else {
                child
            };
            let f = landscape.evaluate(&child)?;
            evaluated.push(Evaluated {
                generation,
                gan: child.clone(),
                fitness: f,
            });
            next.push((child, f));
        }
        let mut elders = pop.members;
        sorted_by_fitness(&mut elders);
        sorted_by_fitness(&mut next);
        let keep = size - config.elitism.min(size);
        next.truncate(keep);
        next.extend(elders.into_iter().take(size - keep));
        pop = Population { members: next };
        best.push(pop.best_fitness());
    }
    Ok(EaResult {
        best_per_generation: best,
        evaluated,
        final_population: pop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::Mode;
    use crate::landscape::{make_landscape, LandscapeConfig};
    use crate::metamodel::MetamodelConfig;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn layer(kind: LayerKind) -> LayerSpec {
        LayerSpec {
            kind,
            activation: 0,
            weight_init: 0,
            size_bin: 0,
        }
    }

    fn single(cfg: &GenotypeConfig) -> GanSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        cfg.random_gan_at(DepthKey::new(1, 1), &mut rng)
    }

    fn is_change(a: &GanSpec, b: &GanSpec) -> bool {
        a.depth_key() == b.depth_key()
            && a.generator
                .layers
                .iter()
                .chain(&a.discriminator.layers)
                .zip(b.generator.layers.iter().chain(&b.discriminator.layers))
                .all(|(x, y)| x.kind == y.kind)
            && a.joint_values()
                .iter()
                .zip(b.joint_values())
                .filter(|(x, y)| **x != *y)
                .count()
                == 1
    }

    #[test]
    fn change_neighbors_of_single_layer_gan() {
        let cfg = GenotypeConfig::per_network();
        let g = single(&cfg);
        let n = neighbors(&g, &cfg);
        assert_eq!(n.iter().filter(|x| is_change(&g, x)).count(), 24);
    }

    // Counts by direct construction rather than through the operators.
    fn oracle_neighbor_set(g: &GanSpec, cfg: &GenotypeConfig) -> BTreeSet<GanSpec> {
        let mut out = BTreeSet::new();
        for role in Role::ALL {
            let net = g.network(role);
            if net.depth() < cfg.max_depth(role) {
                for pos in 0..=net.depth() {
                    for l in all_layers(cfg, role) {
                        let mut h = g.clone();
                        h.network_mut(role).layers.insert(pos, l);
                        out.insert(h);
                    }
                }
            }
            if net.depth() > 1 {
                for pos in 0..net.depth() {
                    let mut h = g.clone();
                    h.network_mut(role).layers.remove(pos);
                    out.insert(h);
                }
            }
        }
        let values = g.joint_values();
        let key = g.depth_key();
        let cards = cfg
            .schema(crate::genotype::SubmodelKey::joint(key))
            .cardinalities();
        for s in 0..values.len() {
            // Kind slots sit at offsets 1, 5, 9, ...
            if s > 0 && (s - 1) % 4 == 0 {
                continue;
            }
            for v in 0..cards[s] {
                if v != values[s] {
                    let mut w = values.clone();
                    w[s] = v;
                    out.insert(crate::genotype::unflatten_joint(key, &w, cfg).unwrap());
                }
            }
        }
        out.remove(g);
        out
    }

    #[test]
    fn neighbors_match_brute_force_oracle() {
        let cfg = GenotypeConfig::per_network();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut gans = vec![single(&cfg)];
        for _ in 0..20 {
            gans.push(cfg.random_gan(&mut rng));
        }
        let mut top = cfg.random_gan_at(DepthKey::new(6, 6), &mut rng);
        top.generator.layers[2] = top.generator.layers[3];
        gans.push(top);
        for g in gans {
            let n = neighbors(&g, &cfg);
            let set: BTreeSet<GanSpec> = n.iter().cloned().collect();
            assert_eq!(set.len(), n.len(), "duplicates");
            assert_eq!(set, oracle_neighbor_set(&g, &cfg));
        }
        // 1x1: each role adds 150 layers at two positions, minus the one
        // duplicate from inserting a copy of the existing layer.
        let g = single(&cfg);
        assert_eq!(neighbors(&g, &cfg).len(), 24 + 2 * 299);
    }

    #[test]
    fn bounds_remove_add_and_delete() {
        let cfg = GenotypeConfig::joint();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = cfg.random_gan_at(DepthKey::new(3, 4), &mut rng);
        assert!(applicable_ops(&full, &cfg)
            .iter()
            .all(|op| !matches!(op, MutationOp::AddLayer { .. })));
        let one = cfg.random_gan_at(DepthKey::new(1, 2), &mut rng);
        assert!(!applicable_ops(&one, &cfg).iter().any(|op| matches!(
            op,
            MutationOp::DeleteLayer {
                role: Role::Generator,
                ..
            }
        )));
        let bad = MutationOp::DeleteLayer {
            role: Role::Generator,
            position: 0,
        };
        assert!(bad.apply(&one, &cfg).is_err());
    }

    #[test]
    fn change_moves_are_symmetric() {
        let cfg = GenotypeConfig::joint();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let g = cfg.random_gan(&mut rng);
            for h in neighbors(&g, &cfg).into_iter().filter(|h| is_change(&g, h)) {
                assert!(neighbors(&h, &cfg).contains(&g));
            }
        }
    }

    proptest! {
        #[test]
        fn operators_preserve_validity(seed in any::<u64>()) {
            let cfg = GenotypeConfig::per_network();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = cfg.random_gan(&mut rng);
            for _ in 0..40 {
                let ops = applicable_ops(&g, &cfg);
                let op = &ops[rng.gen_range(0..ops.len())];
                g = op.apply(&g, &cfg).unwrap();
                prop_assert!(cfg.validate_gan(&g).is_ok());
            }
        }
    }

    #[test]
    fn ten_thousand_random_mutations_stay_valid() {
        let cfg = GenotypeConfig::joint();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut g = cfg.random_gan(&mut rng);
        for _ in 0..10_000 {
            let ops = applicable_ops(&g, &cfg);
            g = ops[rng.gen_range(0..ops.len())].apply(&g, &cfg).unwrap();
            cfg.validate_gan(&g).unwrap();
        }
    }

    fn landscape(noise: f64) -> SurrogateLandscape {
        let mut cfg = LandscapeConfig::new(GenotypeConfig::joint(), 3);
        cfg.noise = noise;
        make_landscape(1, &cfg).unwrap()
    }

    fn assert_monotone(trace: &SearchTrace) {
        let mut prev = trace.start_fitness;
        for s in &trace.steps {
            assert!(s.best <= prev);
            prev = s.best;
        }
    }

    #[test]
    fn random_hc_trace_shape() {
        let l = landscape(0.02);
        let cfg = l.genotype().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = minimal_start(&cfg, &mut rng);
        let t = random_hc(&l, start.clone(), 1, &mut rng).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.final_best(), t.start_fitness.min(t.steps[0].fitness));

        let a = random_hc(&l, start.clone(), 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_hc(&l, start, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 100);
        assert_monotone(&a);
        assert!(random_hc(&l, a.best.clone(), 0, &mut rng).is_err());
    }

    #[test]
    fn planted_start_is_never_left() {
        let l = landscape(0.0);
        let planted = l.planted(DepthKey::new(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_hc(&l, planted.clone(), 50, &mut rng).unwrap();
        assert!(t.steps.iter().all(|s| !s.accepted));
        assert_eq!(t.best, planted);
    }

    #[test]
    fn guided_hc_evaluates_most_likely_neighbor_first() {
        let l = landscape(0.02);
        let cfg = l.genotype().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let start = minimal_start(&cfg, &mut rng);
        let target = neighbors(&start, &cfg)[7].clone();
        let mm = Metamodel::learn(
            &vec![target.clone(); 50],
            &MetamodelConfig::new(Mode::Joint),
        )
        .unwrap();
        let t = guided_hc(&l, &mm, start, 5, &mut rng).unwrap();
        assert_eq!(t.steps[0].candidate_hash, target.canonical_hash());
        assert_monotone(&t);
    }

    #[test]
    fn guided_hc_pads_when_exhausted() {
        let mut cfg = LandscapeConfig::new(
            GenotypeConfig {
                activations: vec!["a".into(), "b".into()],
                weight_inits: vec!["x".into()],
                size_bins: 1,
                train_freq_bins: 1,
                max_generator_depth: 1,
                max_discriminator_depth: 1,
            },
            0,
        );
        cfg.noise = 0.0;
        let l = make_landscape(0, &cfg).unwrap();
        let planted = l.planted(DepthKey::new(1, 1)).unwrap();
        let mut mc = MetamodelConfig::new(Mode::Joint);
        mc.genotype = cfg.genotype.clone();
        let mm = Metamodel::uniform(&mc).unwrap();
        let t = guided_hc(&l, &mm, planted, 10, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.steps.len(), 10);
        // Two activation changes, nothing else is mutable.
        assert!(t.steps[..2].iter().all(|s| !s.exhausted && !s.accepted));
        assert!(t.steps[2..].iter().all(|s| s.exhausted));
    }

    #[test]
    fn crossover_swaps_discriminators() {
        let cfg = GenotypeConfig::joint();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = cfg.random_gan(&mut rng);
        let b = cfg.random_gan(&mut rng);
        let (x, y) = crossover(&a, &b);
        assert_eq!(
            (&x.generator, &x.discriminator),
            (&a.generator, &b.discriminator)
        );
        assert_eq!(
            (&y.generator, &y.discriminator),
            (&b.generator, &a.discriminator)
        );
    }

    #[test]
    fn ea_without_variation_keeps_best() {
        let l = landscape(0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pop = init_population(
            InitStrategy::Random,
            20,
            InitSource::default(),
            &l,
            &mut rng,
        )
        .unwrap();
        let start = pop.best_fitness();
        let config = EaConfig {
            generations: 5,
            crossover_rate: 0.0,
            mutation_rate: 0.0,
            ..EaConfig::default()
        };
        let r = simple_ea(&l, pop, &config, &mut rng).unwrap();
        assert!(r.best_per_generation.iter().all(|&b| b == start));
    }

    #[test]
    fn ea_counts_and_monotone_best() {
        let l = landscape(0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pop = init_population(
            InitStrategy::Random,
            20,
            InitSource::default(),
            &l,
            &mut rng,
        )
        .unwrap();
        let r = simple_ea(&l, pop, &EaConfig::default(), &mut rng).unwrap();
        assert_eq!(r.best_per_generation.len(), 20);
        assert_eq!(r.evaluated.len(), 400);
        assert_eq!(r.final_population.len(), 20);
        assert!(r.best_per_generation.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.best_per_generation[19] < r.best_per_generation[0]);
    }

    #[test]
    fn init_strategies() {
        let l = landscape(0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        assert!(matches!(
            init_population(
                InitStrategy::FromFirst,
                20,
                InitSource::default(),
                &l,
                &mut rng
            ),
            Err(Error::NoData)
        ));
        assert!(init_population(
            InitStrategy::FromMetamodel,
            20,
            InitSource::default(),
            &l,
            &mut rng
        )
        .is_err());
        let elite = l.planted(DepthKey::new(1, 2)).unwrap();
        let first = vec![elite.clone(); 3];
        let src = InitSource {
            first: &first,
            metamodel: None,
        };
        let p = init_population(InitStrategy::FromFirst, 20, src, &l, &mut rng).unwrap();
        assert_eq!(p.len(), 20);
        assert!(p.members.iter().all(|(g, _)| *g == elite));

        let mm = Metamodel::learn(
            &vec![elite.clone(); 200],
            &MetamodelConfig::new(Mode::Joint),
        )
        .unwrap();
        let src = InitSource {
            first: &[],
            metamodel: Some(&mm),
        };
        let p = init_population(InitStrategy::FromMetamodel, 20, src, &l, &mut rng).unwrap();
        let same = p.members.iter().filter(|(g, _)| *g == elite).count();
        assert!(same >= 10, "{same} of 20 match the only training genotype");
    }

    #[test]
    fn guided_search_is_deterministic() {
        let l = landscape(0.02);
        let cfg = l.genotype().clone();
        let mm = Metamodel::uniform(&MetamodelConfig::new(Mode::Joint)).unwrap();
        let start = minimal_start(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let a = guided_hc(
            &l,
            &mm,
            start.clone(),
            30,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let b = guided_hc(&l, &mm, start, 30, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn add_layer_inserts_at_position() {
        let cfg = GenotypeConfig::joint();
        let g = GanSpec {
            generator: DnnSpec::new(Role::Generator, vec![layer(LayerKind::Dense)]),
            discriminator: DnnSpec::new(Role::Discriminator, vec![layer(LayerKind::Conv)]),
            train_freq_bin: 0,
        };
        let op = MutationOp::AddLayer {
            role: Role::Generator,
            position: 0,
            layer: layer(LayerKind::TransposedConv),
        };
        let h = op.apply(&g, &cfg).unwrap();
        assert_eq!(h.generator.layers[0].kind, LayerKind::TransposedConv);
        assert_eq!(h.generator.layers[1].kind, LayerKind::Dense);
    }
}
