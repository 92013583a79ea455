//! Architecture genotypes and their flattening into categorical attribute
//! vectors.
//!
//! A [`GanSpec`] holds two layered networks plus a global training-frequency
//! bin. Every categorical attribute becomes one slot of an
//! [`AttributeVector`]; the slot order is fixed: the global slot first, then
//! the generator layers, then the discriminator layers, each layer
//! contributing `kind`, `activation`, `weight_init` and `size_bin`.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const GENOTYPE_FORMAT: &str = "v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Discriminator,
}

impl Role {
    pub const ALL: [Role; 2] = [Role::Generator, Role::Discriminator];

    pub fn prefix(self) -> &'static str {
        match self {
            Role::Generator => "g",
            Role::Discriminator => "d",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Generator => f.write_str("generator"),
            Role::Discriminator => f.write_str("discriminator"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv,
    TransposedConv,
}

impl LayerKind {
    /// Kinds a network of `role` may contain, in slot-value order.
    pub fn legal(role: Role) -> [LayerKind; 2] {
        match role {
            Role::Generator => [LayerKind::Dense, LayerKind::TransposedConv],
            Role::Discriminator => [LayerKind::Dense, LayerKind::Conv],
        }
    }

    /// Slot value of this kind within `role`'s vocabulary.
    pub fn slot_value(self, role: Role) -> Option<usize> {
        Self::legal(role).iter().position(|&k| k == self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: u8,
    pub weight_init: u8,
    pub size_bin: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DnnSpec {
    pub role: Role,
    pub layers: Vec<LayerSpec>,
}

impl DnnSpec {
    pub fn new(role: Role, layers: Vec<LayerSpec>) -> Self {
        DnnSpec { role, layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "GanRecord", into = "GanRecord")]
pub struct GanSpec {
    pub generator: DnnSpec,
    pub discriminator: DnnSpec,
    pub train_freq_bin: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DepthKey {
    pub d_g: usize,
    pub d_d: usize,
}

impl DepthKey {
    pub fn new(d_g: usize, d_d: usize) -> Self {
        DepthKey { d_g, d_d }
    }
}

impl fmt::Display for DepthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.d_g, self.d_d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One submodel per (generator depth, discriminator depth) pair.
    Joint,
    /// One submodel per network role and depth.
    PerNetwork,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Joint => f.write_str("joint"),
            Mode::PerNetwork => f.write_str("per_network"),
        }
    }
}

/// Index of a submodel inside a metamodel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum SubmodelKey {
    Joint { d_g: usize, d_d: usize },
    Network { role: Role, depth: usize },
}

impl SubmodelKey {
    pub fn joint(key: DepthKey) -> Self {
        SubmodelKey::Joint {
            d_g: key.d_g,
            d_d: key.d_d,
        }
    }
}

impl fmt::Display for SubmodelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubmodelKey::Joint { d_g, d_d } => write!(f, "{d_g}x{d_d}"),
            SubmodelKey::Network { role, depth } => write!(f, "{}{depth}", role.prefix()),
        }
    }
}

/// Vocabularies, bin arities and depth bounds of the genotype space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenotypeConfig {
    pub activations: Vec<String>,
    pub weight_inits: Vec<String>,
    pub size_bins: usize,
    pub train_freq_bins: usize,
    pub max_generator_depth: usize,
    pub max_discriminator_depth: usize,
}

impl Default for GenotypeConfig {
    fn default() -> Self {
        Self::joint()
    }
}

impl GenotypeConfig {
    fn with_bounds(max_generator_depth: usize, max_discriminator_depth: usize) -> Self {
        GenotypeConfig {
            activations: ["relu", "leaky_relu", "tanh", "sigmoid", "elu"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            weight_inits: ["xavier", "normal", "uniform"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            size_bins: 5,
            train_freq_bins: 5,
            max_generator_depth,
            max_discriminator_depth,
        }
    }

    /// Joint GAN mode: generators up to 3 layers, discriminators up to 4.
    pub fn joint() -> Self {
        Self::with_bounds(3, 4)
    }

    /// Separately evolved networks of up to 6 layers each.
    pub fn per_network() -> Self {
        Self::with_bounds(6, 6)
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Joint => Self::joint(),
            Mode::PerNetwork => Self::per_network(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("genotype config: {what}")));
        if self.activations.is_empty() || self.activations.len() > 255 {
            return bad("activation vocabulary must have 1..=255 entries");
        }
        if self.weight_inits.is_empty() || self.weight_inits.len() > 255 {
            return bad("weight-init vocabulary must have 1..=255 entries");
        }
        if !(1..=255).contains(&self.size_bins) || !(1..=255).contains(&self.train_freq_bins) {
            return bad("bin arities must be in 1..=255");
        }
        if self.max_generator_depth == 0 || self.max_discriminator_depth == 0 {
            return bad("depth bounds must be at least 1");
        }
        Ok(())
    }

    pub fn max_depth(&self, role: Role) -> usize {
        match role {
            Role::Generator => self.max_generator_depth,
            Role::Discriminator => self.max_discriminator_depth,
        }
    }

    /// All supported depth keys, generator depth major.
    pub fn depth_keys(&self) -> Vec<DepthKey> {
        let mut keys = Vec::with_capacity(self.max_generator_depth * self.max_discriminator_depth);
        for d_g in 1..=self.max_generator_depth {
            for d_d in 1..=self.max_discriminator_depth {
                keys.push(DepthKey::new(d_g, d_d));
            }
        }
        keys
    }

    pub fn supports(&self, key: DepthKey) -> bool {
        (1..=self.max_generator_depth).contains(&key.d_g)
            && (1..=self.max_discriminator_depth).contains(&key.d_d)
    }

    /// Cardinalities of the four per-layer slots.
    pub fn layer_cardinalities(&self) -> [usize; 4] {
        [
            2,
            self.activations.len(),
            self.weight_inits.len(),
            self.size_bins,
        ]
    }

    pub fn check_layer(&self, role: Role, layer: &LayerSpec) -> Result<()> {
        if layer.kind.slot_value(role).is_none() {
            return Err(Error::InvalidGenotype(format!(
                "{:?} layer not allowed in {role}",
                layer.kind
            )));
        }
        if layer.activation as usize >= self.activations.len() {
            return Err(Error::InvalidGenotype(format!(
                "activation {} out of range",
                layer.activation
            )));
        }
        if layer.weight_init as usize >= self.weight_inits.len() {
            return Err(Error::InvalidGenotype(format!(
                "weight init {} out of range",
                layer.weight_init
            )));
        }
        if layer.size_bin as usize >= self.size_bins {
            return Err(Error::InvalidGenotype(format!(
                "size bin {} out of range",
                layer.size_bin
            )));
        }
        Ok(())
    }

    /// Checks every genotype invariant, depth bounds included.
    pub fn validate_gan(&self, gan: &GanSpec) -> Result<()> {
        if gan.generator.role != Role::Generator || gan.discriminator.role != Role::Discriminator {
            return Err(Error::InvalidGenotype("network roles swapped".into()));
        }
        if !self.supports(gan.depth_key()) {
            return Err(gan.depth_error());
        }
        if gan.train_freq_bin as usize >= self.train_freq_bins {
            return Err(Error::InvalidGenotype(format!(
                "train frequency bin {} out of range",
                gan.train_freq_bin
            )));
        }
        for net in [&gan.generator, &gan.discriminator] {
            for layer in &net.layers {
                self.check_layer(net.role, layer)?;
            }
        }
        Ok(())
    }

    pub fn random_layer<R: Rng + ?Sized>(&self, role: Role, rng: &mut R) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::legal(role)[rng.gen_range(0..2)],
            activation: rng.gen_range(0..self.activations.len()) as u8,
            weight_init: rng.gen_range(0..self.weight_inits.len()) as u8,
            size_bin: rng.gen_range(0..self.size_bins) as u8,
        }
    }

    pub fn random_network<R: Rng + ?Sized>(
        &self,
        role: Role,
        depth: usize,
        rng: &mut R,
    ) -> DnnSpec {
        DnnSpec::new(
            role,
            (0..depth).map(|_| self.random_layer(role, rng)).collect(),
        )
    }

    /// Uniform depths within bounds and uniform slot values.
    pub fn random_gan<R: Rng + ?Sized>(&self, rng: &mut R) -> GanSpec {
        let d_g = rng.gen_range(1..=self.max_generator_depth);
        let d_d = rng.gen_range(1..=self.max_discriminator_depth);
        self.random_gan_at(DepthKey::new(d_g, d_d), rng)
    }

    pub fn random_gan_at<R: Rng + ?Sized>(&self, key: DepthKey, rng: &mut R) -> GanSpec {
        GanSpec {
            generator: self.random_network(Role::Generator, key.d_g, rng),
            discriminator: self.random_network(Role::Discriminator, key.d_d, rng),
            train_freq_bin: rng.gen_range(0..self.train_freq_bins) as u8,
        }
    }

    /// Submodel keys of `mode`: 12 in both default configurations.
    pub fn submodel_keys(&self, mode: Mode) -> Vec<SubmodelKey> {
        match mode {
            Mode::Joint => self
                .depth_keys()
                .into_iter()
                .map(SubmodelKey::joint)
                .collect(),
            Mode::PerNetwork => Role::ALL
                .iter()
                .flat_map(|&role| {
                    (1..=self.max_depth(role))
                        .map(move |depth| SubmodelKey::Network { role, depth })
                })
                .collect(),
        }
    }

    pub fn schema(&self, key: SubmodelKey) -> Schema {
        let mut slots = Vec::new();
        let (gen_depth, disc_depth, global) = match key {
            SubmodelKey::Joint { d_g, d_d } => (d_g, d_d, true),
            SubmodelKey::Network {
                role: Role::Generator,
                depth,
            } => (depth, 0, true),
            SubmodelKey::Network {
                role: Role::Discriminator,
                depth,
            } => (0, depth, false),
        };
        if global {
            slots.push(Slot::new("train_freq", self.train_freq_bins));
        }
        let cards = self.layer_cardinalities();
        for (role, depth) in [
            (Role::Generator, gen_depth),
            (Role::Discriminator, disc_depth),
        ] {
            for i in 0..depth {
                for (field, &card) in LAYER_FIELDS.iter().zip(cards.iter()) {
                    slots.push(Slot::new(format!("{}{i}.{field}", role.prefix()), card));
                }
            }
        }
        Schema { key, slots }
    }
}

pub const LAYER_FIELDS: [&str; 4] = ["kind", "activation", "weight_init", "size_bin"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub cardinality: usize,
}

impl Slot {
    fn new(name: impl Into<String>, cardinality: usize) -> Self {
        Slot {
            name: name.into(),
            cardinality,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub key: SubmodelKey,
    pub slots: Vec<Slot>,
}

impl Schema {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.cardinality).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeVector {
    pub depth_key: DepthKey,
    pub schema: Schema,
    pub values: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Flattened {
    Joint(AttributeVector),
    PerNetwork {
        generator: AttributeVector,
        discriminator: AttributeVector,
    },
}

fn push_layers(out: &mut Vec<usize>, net: &DnnSpec) {
    for layer in &net.layers {
        out.push(layer.kind.slot_value(net.role).unwrap_or(0));
        out.push(layer.activation as usize);
        out.push(layer.weight_init as usize);
        out.push(layer.size_bin as usize);
    }
}

impl GanSpec {
    pub fn depth_key(&self) -> DepthKey {
        DepthKey::new(self.generator.depth(), self.discriminator.depth())
    }

    pub fn network(&self, role: Role) -> &DnnSpec {
        match role {
            Role::Generator => &self.generator,
            Role::Discriminator => &self.discriminator,
        }
    }

    pub fn network_mut(&mut self, role: Role) -> &mut DnnSpec {
        match role {
            Role::Generator => &mut self.generator,
            Role::Discriminator => &mut self.discriminator,
        }
    }

    fn depth_error(&self) -> Error {
        Error::UnsupportedDepth {
            generator: self.generator.depth(),
            discriminator: self.discriminator.depth(),
        }
    }

    /// Slot values in joint schema order. Does not validate.
    pub fn joint_values(&self) -> Vec<usize> {
        let key = self.depth_key();
        let mut out = Vec::with_capacity(1 + 4 * (key.d_g + key.d_d));
        out.push(self.train_freq_bin as usize);
        push_layers(&mut out, &self.generator);
        push_layers(&mut out, &self.discriminator);
        out
    }

    /// Slot values of one network's per-network schema. The global slot
    /// travels with the generator.
    pub fn network_values(&self, role: Role) -> Vec<usize> {
        let net = self.network(role);
        let mut out = Vec::with_capacity(1 + 4 * net.depth());
        if role == Role::Generator {
            out.push(self.train_freq_bin as usize);
        }
        push_layers(&mut out, net);
        out
    }

    /// Stable 64-bit digest of the genotype, independent of process and
    /// platform.
    pub fn canonical_hash(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update([self.train_freq_bin]);
        for net in [&self.generator, &self.discriminator] {
            hasher.update((net.depth() as u32).to_le_bytes());
            for l in &net.layers {
                let kind = match l.kind {
                    LayerKind::Dense => 0u8,
                    LayerKind::Conv => 1,
                    LayerKind::TransposedConv => 2,
                };
                hasher.update([kind, l.activation, l.weight_init, l.size_bin]);
            }
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}

/// Flattens a validated genotype into one (joint) or two (per-network)
/// attribute vectors.
pub fn flatten(gan: &GanSpec, mode: Mode, config: &GenotypeConfig) -> Result<Flattened> {
    config.validate_gan(gan)?;
    let depth_key = gan.depth_key();
    Ok(match mode {
        Mode::Joint => Flattened::Joint(AttributeVector {
            depth_key,
            schema: config.schema(SubmodelKey::joint(depth_key)),
            values: gan.joint_values(),
        }),
        Mode::PerNetwork => {
            let vector = |role: Role| AttributeVector {
                depth_key,
                schema: config.schema(SubmodelKey::Network {
                    role,
                    depth: gan.network(role).depth(),
                }),
                values: gan.network_values(role),
            };
            Flattened::PerNetwork {
                generator: vector(Role::Generator),
                discriminator: vector(Role::Discriminator),
            }
        }
    })
}

fn decode_layers(role: Role, values: &[usize], config: &GenotypeConfig) -> Result<Vec<LayerSpec>> {
    if !values.len().is_multiple_of(4) {
        return Err(Error::InvalidGenotype(
            "layer slots not a multiple of 4".into(),
        ));
    }
    values
        .chunks(4)
        .map(|c| {
            let kind = *LayerKind::legal(role).get(c[0]).ok_or_else(|| {
                Error::InvalidGenotype(format!("kind value {} out of range", c[0]))
            })?;
            let layer = LayerSpec {
                kind,
                activation: u8::try_from(c[1])
                    .map_err(|_| Error::InvalidGenotype("activation".into()))?,
                weight_init: u8::try_from(c[2])
                    .map_err(|_| Error::InvalidGenotype("weight init".into()))?,
                size_bin: u8::try_from(c[3])
                    .map_err(|_| Error::InvalidGenotype("size bin".into()))?,
            };
            config.check_layer(role, &layer)?;
            Ok(layer)
        })
        .collect()
}

fn check_arity(schema_len: usize, values: &[usize]) -> Result<()> {
    if values.len() != schema_len {
        return Err(Error::InvalidGenotype(format!(
            "expected {schema_len} slot values, got {}",
            values.len()
        )));
    }
    Ok(())
}

/// Inverse of the joint flattening.
pub fn unflatten_joint(
    key: DepthKey,
    values: &[usize],
    config: &GenotypeConfig,
) -> Result<GanSpec> {
    if !config.supports(key) {
        return Err(Error::UnsupportedDepth {
            generator: key.d_g,
            discriminator: key.d_d,
        });
    }
    check_arity(1 + 4 * (key.d_g + key.d_d), values)?;
    let split = 1 + 4 * key.d_g;
    let gan = GanSpec {
        generator: DnnSpec::new(
            Role::Generator,
            decode_layers(Role::Generator, &values[1..split], config)?,
        ),
        discriminator: DnnSpec::new(
            Role::Discriminator,
            decode_layers(Role::Discriminator, &values[split..], config)?,
        ),
        train_freq_bin: u8::try_from(values[0])
            .map_err(|_| Error::InvalidGenotype("train bin".into()))?,
    };
    config.validate_gan(&gan)?;
    Ok(gan)
}

/// Inverse of the per-network flattening.
pub fn unflatten_pair(
    generator: &[usize],
    discriminator: &[usize],
    config: &GenotypeConfig,
) -> Result<GanSpec> {
    if generator.is_empty() {
        return Err(Error::InvalidGenotype(
            "generator vector lacks global slot".into(),
        ));
    }
    let gan = GanSpec {
        generator: DnnSpec::new(
            Role::Generator,
            decode_layers(Role::Generator, &generator[1..], config)?,
        ),
        discriminator: DnnSpec::new(
            Role::Discriminator,
            decode_layers(Role::Discriminator, discriminator, config)?,
        ),
        train_freq_bin: u8::try_from(generator[0])
            .map_err(|_| Error::InvalidGenotype("train bin".into()))?,
    };
    config.validate_gan(&gan)?;
    Ok(gan)
}

/// Inverse of [`flatten`].
pub fn unflatten(flat: &Flattened, config: &GenotypeConfig) -> Result<GanSpec> {
    match flat {
        Flattened::Joint(v) => unflatten_joint(v.depth_key, &v.values, config),
        Flattened::PerNetwork {
            generator,
            discriminator,
        } => unflatten_pair(&generator.values, &discriminator.values, config),
    }
}

/// Ascending cut points over a continuous attribute; bin `i` holds values
/// with exactly `i` cuts strictly below them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationScheme {
    pub cuts: Vec<f64>,
}

impl DiscretizationScheme {
    pub fn new(cuts: Vec<f64>) -> Result<Self> {
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "cut points must be finite and strictly ascending".into(),
            ));
        }
        Ok(DiscretizationScheme { cuts })
    }

    pub fn arity(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c < x)
    }
}

/// Equal-frequency cut points. Each boundary sits at the midpoint of the
/// two order statistics straddling the `i/k` quantile; boundaries that fall
/// between equal values are dropped, lowering the arity.
pub fn fit_discretization(values: &[f64], k: usize) -> Result<DiscretizationScheme> {
    if values.is_empty() {
        return Err(Error::NoData);
    }
    if k < 2 {
        return Err(Error::InvalidArgument(
            "discretization arity must be at least 2".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(k - 1);
    for i in 1..k {
        let b = (i * n).div_ceil(k).clamp(1, n.max(2) - 1);
        if b >= n {
            continue;
        }
        let (lo, hi) = (sorted[b - 1], sorted[b]);
        if lo == hi {
            continue;
        }
        let cut = lo + (hi - lo) / 2.0;
        if cuts.last().is_none_or(|&last| cut > last) {
            cuts.push(cut);
        }
    }
    Ok(DiscretizationScheme { cuts })
}

pub fn discretize(x: f64, scheme: &DiscretizationScheme) -> usize {
    scheme.bin(x)
}

/// On-disk form of one genotype.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GanRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    pub train_freq_bin: u8,
    pub generator: Vec<LayerSpec>,
    pub discriminator: Vec<LayerSpec>,
}

impl TryFrom<GanRecord> for GanSpec {
    type Error = Error;

    fn try_from(r: GanRecord) -> Result<Self> {
        if let Some(v) = &r.v {
            if v != GENOTYPE_FORMAT {
                return Err(Error::Format(format!("unsupported genotype format {v:?}")));
            }
        }
        for (role, layers) in [
            (Role::Generator, &r.generator),
            (Role::Discriminator, &r.discriminator),
        ] {
            if let Some(l) = layers.iter().find(|l| l.kind.slot_value(role).is_none()) {
                return Err(Error::InvalidGenotype(format!(
                    "{:?} layer not allowed in {role}",
                    l.kind
                )));
            }
        }
        Ok(GanSpec {
            generator: DnnSpec::new(Role::Generator, r.generator),
            discriminator: DnnSpec::new(Role::Discriminator, r.discriminator),
            train_freq_bin: r.train_freq_bin,
        })
    }
}

impl From<GanSpec> for GanRecord {
    fn from(g: GanSpec) -> Self {
        GanRecord {
            v: Some(GENOTYPE_FORMAT.to_string()),
            train_freq_bin: g.train_freq_bin,
            generator: g.generator.layers,
            discriminator: g.discriminator.layers,
        }
    }
}

pub fn write_genotypes<W: Write>(mut out: W, gans: &[GanSpec]) -> Result<()> {
    for g in gans {
        let line = serde_json::to_string(g)?;
        writeln!(out, "{line}").map_err(|e| Error::io("<genotype stream>", e))?;
    }
    Ok(())
}

/// Reads one genotype per non-blank line.
pub fn read_genotypes<R: BufRead>(input: R) -> Result<Vec<GanSpec>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<genotype stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let gan: GanSpec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        out.push(gan);
    }
    Ok(out)
}

pub fn read_genotypes_file(path: &Path) -> Result<Vec<GanSpec>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_genotypes(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(kind: LayerKind) -> LayerSpec {
        LayerSpec {
            kind,
            activation: 1,
            weight_init: 2,
            size_bin: 3,
        }
    }

    fn gan_at(d_g: usize, d_d: usize) -> GanSpec {
        GanSpec {
            generator: DnnSpec::new(Role::Generator, vec![layer(LayerKind::TransposedConv); d_g]),
            discriminator: DnnSpec::new(Role::Discriminator, vec![layer(LayerKind::Conv); d_d]),
            train_freq_bin: 4,
        }
    }

    #[test]
    fn quantile_cuts_on_uniform_ranks() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let scheme = fit_discretization(&values, 5).unwrap();
        assert_eq!(scheme.cuts, vec![20.5, 40.5, 60.5, 80.5]);
    }

    #[test]
    fn constant_data_is_one_bin() {
        let scheme = fit_discretization(&[7.0; 4], 5).unwrap();
        assert_eq!(scheme.arity(), 1);
        assert_eq!(scheme.bin(7.0), 0);
    }

    #[test]
    fn two_points_split_at_midpoint() {
        let scheme = fit_discretization(&[0.0, 10.0], 2).unwrap();
        assert_eq!(scheme.cuts, vec![5.0]);
    }

    #[test]
    fn fit_rejects_empty_and_tiny_arity() {
        assert!(matches!(fit_discretization(&[], 5), Err(Error::NoData)));
        assert!(fit_discretization(&[1.0], 1).is_err());
    }

    #[test]
    fn discretize_counts_cuts_below() {
        let scheme = DiscretizationScheme::new(vec![20.5, 40.5, 60.5, 80.5]).unwrap();
        assert_eq!(discretize(3.0, &scheme), 0);
        assert_eq!(discretize(50.0, &scheme), 2);
        assert_eq!(discretize(1e9, &scheme), 4);
        assert_eq!(discretize(20.5, &scheme), 0);
    }

    #[test]
    fn schema_lengths() {
        let cfg = GenotypeConfig::joint();
        let Flattened::Joint(v) = flatten(&gan_at(1, 1), Mode::Joint, &cfg).unwrap() else {
            panic!("joint mode");
        };
        assert_eq!(v.values.len(), 9);
        let Flattened::Joint(v) = flatten(&gan_at(3, 4), Mode::Joint, &cfg).unwrap() else {
            panic!("joint mode");
        };
        assert_eq!(v.values.len(), 29);
        assert_eq!(v.schema.slots[0].name, "train_freq");
        assert_eq!(v.schema.slots[1].name, "g0.kind");
        assert_eq!(v.schema.slots[13].name, "d0.kind");
    }

    #[test]
    fn depth_out_of_bounds() {
        let cfg = GenotypeConfig::joint();
        let err = flatten(&gan_at(4, 1), Mode::Joint, &cfg).unwrap_err();
        assert!(err.to_string().starts_with("unsupported depth"));
        assert!(flatten(&gan_at(1, 0), Mode::Joint, &cfg).is_err());
    }

    #[test]
    fn default_key_counts() {
        assert_eq!(GenotypeConfig::joint().depth_keys().len(), 12);
        assert_eq!(GenotypeConfig::joint().submodel_keys(Mode::Joint).len(), 12);
        assert_eq!(
            GenotypeConfig::per_network()
                .submodel_keys(Mode::PerNetwork)
                .len(),
            12
        );
    }

    #[test]
    fn role_illegal_kinds_rejected() {
        let cfg = GenotypeConfig::joint();
        let mut g = gan_at(1, 1);
        g.generator.layers[0].kind = LayerKind::Conv;
        assert!(cfg.validate_gan(&g).is_err());
        let json = serde_json::to_string(&g).unwrap();
        assert!(serde_json::from_str::<GanSpec>(&json).is_err());
    }

    #[test]
    fn genotype_lines_round_trip() {
        let gans = vec![gan_at(1, 2), gan_at(3, 4)];
        let mut buf = Vec::new();
        write_genotypes(&mut buf, &gans).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().all(|l| l.contains("\"v\":\"v1\"")));
        assert_eq!(read_genotypes(&buf[..]).unwrap(), gans);
    }

    #[test]
    fn canonical_hash_distinguishes() {
        let a = gan_at(1, 1);
        let mut b = a.clone();
        b.discriminator.layers[0].size_bin = 0;
        assert_eq!(a.canonical_hash(), gan_at(1, 1).canonical_hash());
        assert_ne!(a.canonical_hash(), b.canonical_hash());
    }

    proptest! {
        #[test]
        fn flatten_round_trips(seed in any::<u64>(), per_network in any::<bool>()) {
            let mode = if per_network { Mode::PerNetwork } else { Mode::Joint };
            let cfg = GenotypeConfig::for_mode(mode);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = cfg.random_gan(&mut rng);
            let flat = flatten(&g, mode, &cfg).unwrap();
            prop_assert_eq!(unflatten(&flat, &cfg).unwrap(), g);
        }

        #[test]
        fn discretize_is_monotone(
            values in proptest::collection::vec(-1e3f64..1e3, 1..60),
            k in 2usize..8,
            x in -2e3f64..2e3,
            y in -2e3f64..2e3,
        ) {
            let scheme = fit_discretization(&values, k).unwrap();
            prop_assert!(scheme.arity() <= k);
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(scheme.bin(lo) <= scheme.bin(hi));
        }

        #[test]
        fn distinct_values_fill_bins_evenly(n in 2usize..200, k in 2usize..8) {
            let values: Vec<f64> = (0..n).rev().map(|i| i as f64).collect();
            let scheme = fit_discretization(&values, k).unwrap();
            let mut counts = vec![0usize; scheme.arity()];
            for &v in &values {
                counts[scheme.bin(v)] += 1;
            }
            let max = *counts.iter().max().unwrap();
            let min = *counts.iter().min().unwrap();
            prop_assert!(max - min <= n.div_ceil(k) - n / k, "{counts:?}");
        }
    }
}
