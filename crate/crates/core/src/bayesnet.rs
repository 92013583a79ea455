//! Discrete Bayesian networks.
//!
//! Structure comes from pairwise mutual information, either as a Chow-Liu
//! maximum spanning tree or as an ARACNE skeleton (thresholding followed by
//! data-processing-inequality pruning of triangles). Skeletons are oriented
//! along a caller-supplied variable order, then conditional probability
//! tables are fitted with additive smoothing.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const BN_FORMAT: &str = "bn-v1";

/// Default cap on the state space [`BayesNet::enumerate_joint`] will walk.
pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub cardinality: usize,
}

impl Variable {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        Variable {
            name: name.into(),
            cardinality,
        }
    }
}

/// Row-major categorical data with one column per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    variables: Vec<Variable>,
    rows: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(variables: Vec<Variable>, rows: Vec<Vec<usize>>) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            check_assignment(&variables, row)
                .map_err(|e| Error::InvalidArgument(format!("row {r}: {e}")))?;
        }
        Ok(Dataset { variables, rows })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }
}

fn check_assignment(variables: &[Variable], values: &[usize]) -> Result<()> {
    if values.len() != variables.len() {
        return Err(Error::InvalidAssignment(format!(
            "expected {} values, got {}",
            variables.len(),
            values.len()
        )));
    }
    for (v, (&x, var)) in values.iter().zip(variables).enumerate() {
        if x >= var.cardinality {
            return Err(Error::InvalidAssignment(format!(
                "variable {v} ({}) value {x} >= cardinality {}",
                var.name, var.cardinality
            )));
        }
    }
    Ok(())
}

/// Plug-in entropy of column `i`, in nats.
pub fn entropy(data: &Dataset, i: usize) -> f64 {
    let n = data.len() as f64;
    let mut counts = vec![0usize; data.variables[i].cardinality];
    for row in &data.rows {
        counts[row[i]] += 1;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Maximum-likelihood plug-in mutual information between two columns, in
/// nats, clamped at zero.
pub fn mutual_information(data: &Dataset, i: usize, j: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::NoData);
    }
    let nv = data.num_variables();
    if i >= nv || j >= nv {
        return Err(Error::InvalidArgument(format!(
            "column index out of range ({i}, {j})"
        )));
    }
    if i == j {
        return Err(Error::InvalidArgument(
            "mutual information needs two distinct columns".into(),
        ));
    }
    Ok(pairwise_mi(data, i, j))
}

fn pairwise_mi(data: &Dataset, i: usize, j: usize) -> f64 {
    // Accumulate in a fixed (i < j) orientation so MI(i, j) and MI(j, i)
    // are bit-identical.
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    let (ci, cj) = (data.variables[i].cardinality, data.variables[j].cardinality);
    let mut joint = vec![0usize; ci * cj];
    let mut mi_counts = vec![0usize; ci];
    let mut mj_counts = vec![0usize; cj];
    for row in &data.rows {
        joint[row[i] * cj + row[j]] += 1;
        mi_counts[row[i]] += 1;
        mj_counts[row[j]] += 1;
    }
    let n = data.len() as f64;
    let mut mi = 0.0;
    for a in 0..ci {
        for b in 0..cj {
            let c = joint[a * cj + b];
            if c == 0 {
                continue;
            }
            let pab = c as f64 / n;
            let pa = mi_counts[a] as f64 / n;
            let pb = mj_counts[b] as f64 / n;
            mi += pab * (pab / (pa * pb)).ln();
        }
    }
    mi.max(0.0)
}

/// Symmetric pairwise mutual information; the diagonal is zero and unused.
#[derive(Clone, Debug, PartialEq)]
pub struct MiMatrix {
    size: usize,
    values: Vec<f64>,
    cardinalities: Vec<usize>,
    samples: usize,
}

impl MiMatrix {
    pub fn from_data(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::NoData);
        }
        let size = data.num_variables();
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            for j in (i + 1)..size {
                let mi = pairwise_mi(data, i, j);
                values[i * size + j] = mi;
                values[j * size + i] = mi;
            }
        }
        Ok(MiMatrix {
            size,
            values,
            cardinalities: data.variables.iter().map(|v| v.cardinality).collect(),
            samples: data.len(),
        })
    }

    /// Builds a matrix from explicit weights; entries below -1e-12 are
    /// rejected, the rest clamped at zero.
    pub fn from_values(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::InvalidArgument(
                "MI matrix must be size x size".into(),
            ));
        }
        for i in 0..size {
            for j in 0..size {
                let v = values[i * size + j];
                if i != j && (!v.is_finite() || v < -1e-12 || v != values[j * size + i]) {
                    return Err(Error::InvalidArgument(format!(
                        "MI entry ({i}, {j}) invalid"
                    )));
                }
            }
        }
        let values = values.into_iter().map(|v| v.max(0.0)).collect();
        Ok(MiMatrix {
            size,
            values,
            cardinalities: vec![0; size],
            samples: 0,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.values[i * self.size + j]
        }
    }

    /// Subtracts `ln(card_i * card_j) / (2N)` from every entry, clamping at
    /// zero. Plug-in MI is biased upwards on small samples.
    pub fn bias_corrected(&self) -> MiMatrix {
        let mut out = self.clone();
        if self.samples == 0 {
            return out;
        }
        let n = self.samples as f64;
        for i in 0..self.size {
            for j in 0..self.size {
                if i == j {
                    continue;
                }
                let cells = (self.cardinalities[i] * self.cardinalities[j]).max(1) as f64;
                let v = &mut out.values[i * self.size + j];
                *v = (*v - cells.ln() / (2.0 * n)).max(0.0);
            }
        }
        out
    }
}

/// Undirected edge stored with `.0 < .1`.
pub type Edge = (usize, usize);

/// Maximum-weight spanning tree over MI (Kruskal). Among equal weights the
/// lexicographically smaller edge wins.
pub fn chow_liu(mi: &MiMatrix) -> Vec<Edge> {
    let n = mi.size();
    let mut candidates: Vec<Edge> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    candidates.sort_by(|&a, &b| {
        mi.get(b.0, b.1)
            .total_cmp(&mi.get(a.0, a.1))
            .then(a.cmp(&b))
    });
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for (a, b) in candidates {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
            tree.push((a, b));
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    tree.sort_unstable();
    tree
}

/// ARACNE skeleton: keep edges with MI above `threshold`, then, for every
/// triangle of kept edges, drop its weakest edge when that edge's MI is
/// below `(1 - dpi_tolerance)` times the smaller of the other two. All
/// removals are decided against the unpruned graph.
pub fn aracne_skeleton(mi: &MiMatrix, threshold: f64, dpi_tolerance: f64) -> Result<Vec<Edge>> {
    if !(0.0..=1.0).contains(&dpi_tolerance) {
        return Err(Error::InvalidArgument(format!(
            "DPI tolerance {dpi_tolerance} not in [0, 1]"
        )));
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "MI threshold {threshold} must be >= 0"
        )));
    }
    let n = mi.size();
    let kept = |i: usize, j: usize| mi.get(i, j) > threshold;
    let mut removed = BTreeSet::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if !kept(i, j) {
                continue;
            }
            for k in (j + 1)..n {
                if !kept(i, k) || !kept(j, k) {
                    continue;
                }
                let mut sides = [(i, j), (i, k), (j, k)];
                sides.sort_by(|&a, &b| {
                    mi.get(a.0, a.1)
                        .total_cmp(&mi.get(b.0, b.1))
                        .then(a.cmp(&b))
                });
                let weakest = mi.get(sides[0].0, sides[0].1);
                let other = mi
                    .get(sides[1].0, sides[1].1)
                    .min(mi.get(sides[2].0, sides[2].1));
                if weakest < (1.0 - dpi_tolerance) * other {
                    removed.insert(sides[0]);
                }
            }
        }
    }
    Ok((0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| kept(i, j) && !removed.contains(&(i, j)))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dag {
    variables: Vec<Variable>,
    parents: Vec<Vec<usize>>,
    topological: Vec<usize>,
}

impl Dag {
    /// Validates parent lists (in range, no self-loops, no duplicates, no
    /// cycles). Parent lists are kept sorted ascending.
    pub fn new(variables: Vec<Variable>, mut parents: Vec<Vec<usize>>) -> Result<Self> {
        let n = variables.len();
        if parents.len() != n {
            return Err(Error::InvalidNetwork(
                "one parent list per variable required".into(),
            ));
        }
        if let Some(v) = variables.iter().find(|v| v.cardinality == 0) {
            return Err(Error::InvalidNetwork(format!(
                "variable {} has cardinality 0",
                v.name
            )));
        }
        for (v, ps) in parents.iter_mut().enumerate() {
            ps.sort_unstable();
            if ps.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate parent of variable {v}"
                )));
            }
            if ps.iter().any(|&p| p >= n || p == v) {
                return Err(Error::InvalidNetwork(format!(
                    "invalid parent of variable {v}"
                )));
            }
        }
        // Kahn's algorithm, smallest ready index first.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (v, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(v);
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut topological = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            topological.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if topological.len() != n {
            return Err(Error::InvalidNetwork("graph has a cycle".into()));
        }
        Ok(Dag {
            variables,
            parents,
            topological,
        })
    }

    pub fn empty(variables: Vec<Variable>) -> Result<Self> {
        let n = variables.len();
        Dag::new(variables, vec![Vec::new(); n])
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topological
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Directed edges (parent, child), sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(v, ps)| ps.iter().map(move |&p| (p, v)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Number of parent configurations of `v`, saturating at `u128::MAX`.
    pub fn parent_configurations(&self, v: usize) -> u128 {
        self.parents[v]
            .iter()
            .try_fold(1u128, |acc, &p| {
                acc.checked_mul(self.variables[p].cardinality as u128)
            })
            .unwrap_or(u128::MAX)
    }

    /// Mixed-radix index of the parent values of `v`; the first parent is
    /// the most significant digit.
    fn parent_index(&self, v: usize, assignment: &[usize]) -> u128 {
        self.parents[v].iter().fold(0u128, |acc, &p| {
            acc.wrapping_mul(self.variables[p].cardinality as u128)
                .wrapping_add(assignment[p] as u128)
        })
    }
}

/// Directs every skeleton edge from the earlier to the later variable of
/// `order`.
pub fn orient(variables: Vec<Variable>, skeleton: &[Edge], order: &[usize]) -> Result<Dag> {
    let n = variables.len();
    let mut rank = vec![usize::MAX; n];
    for (pos, &v) in order.iter().enumerate() {
        if v >= n || rank[v] != usize::MAX {
            return Err(Error::InvalidArgument(
                "order is not a permutation of the variables".into(),
            ));
        }
        rank[v] = pos;
    }
    if order.len() != n {
        return Err(Error::InvalidArgument(
            "order is not a permutation of the variables".into(),
        ));
    }
    let mut parents = vec![Vec::new(); n];
    for &(a, b) in skeleton {
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidArgument(format!(
                "invalid skeleton edge ({a}, {b})"
            )));
        }
        let (from, to) = if rank[a] < rank[b] { (a, b) } else { (b, a) };
        if !parents[to].contains(&from) {
            parents[to].push(from);
        }
    }
    Dag::new(variables, parents)
}

/// Conditional table of one variable. Rows are stored for the parent
/// configurations seen in the data; every other configuration reads the
/// default row, so tables stay small however many parents a variable has.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    /// Row for configurations without an explicit row; `None` when every
    /// configuration is listed.
    pub default: Option<Vec<f64>>,
    /// `(configuration index, row)`, ascending by index.
    pub rows: Vec<(u128, Vec<f64>)>,
}

impl Cpt {
    fn row(&self, config: u128) -> &[f64] {
        match self.rows.binary_search_by(|(c, _)| c.cmp(&config)) {
            Ok(i) => &self.rows[i].1,
            Err(_) => self
                .default
                .as_deref()
                .expect("validated table covers every configuration"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BayesNet {
    dag: Dag,
    tables: Vec<Cpt>,
    alpha: f64,
}

/// Fits smoothed CPTs: `P(x = v | pa = c) = (n(v, c) + alpha) / (n(c) + alpha * |x|)`.
/// With `alpha == 0`, rows of unseen parent configurations are all zero and
/// score as `-inf`.
pub fn fit_cpts(dag: Dag, data: &Dataset, alpha: f64) -> Result<BayesNet> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "smoothing pseudocount {alpha} must be finite and >= 0"
        )));
    }
    if data.variables() != dag.variables() {
        return Err(Error::InvalidArgument(
            "data columns do not match network variables".into(),
        ));
    }
    let mut tables = Vec::with_capacity(dag.len());
    for v in 0..dag.len() {
        let card = dag.variables[v].cardinality;
        let mut counts: BTreeMap<u128, Vec<usize>> = BTreeMap::new();
        for row in data.rows() {
            counts
                .entry(dag.parent_index(v, row))
                .or_insert_with(|| vec![0; card])[row[v]] += 1;
        }
        let rows = counts
            .into_iter()
            .map(|(c, k)| {
                let denom = k.iter().sum::<usize>() as f64 + alpha * card as f64;
                (c, k.iter().map(|&x| (x as f64 + alpha) / denom).collect())
            })
            .collect();
        // An unseen configuration has zero counts: uniform for alpha > 0,
        // all zero otherwise.
        let fill = if alpha > 0.0 { 1.0 / card as f64 } else { 0.0 };
        tables.push(Cpt {
            default: Some(vec![fill; card]),
            rows,
        });
    }
    Ok(BayesNet { dag, tables, alpha })
}

impl BayesNet {
    /// Assembles a network from explicit CPT rows (`rows[v][config]`).
    pub fn from_rows(dag: Dag, rows: Vec<Vec<Vec<f64>>>, alpha: f64) -> Result<Self> {
        let tables = rows
            .into_iter()
            .map(|r| Cpt {
                default: None,
                rows: r
                    .into_iter()
                    .enumerate()
                    .map(|(c, row)| (c as u128, row))
                    .collect(),
            })
            .collect();
        Self::from_tables(dag, tables, alpha)
    }

    pub fn from_tables(dag: Dag, tables: Vec<Cpt>, alpha: f64) -> Result<Self> {
        if tables.len() != dag.len() {
            return Err(Error::InvalidNetwork(
                "one CPT per variable required".into(),
            ));
        }
        for (v, cpt) in tables.iter().enumerate() {
            let card = dag.variables[v].cardinality;
            let configs = dag.parent_configurations(v);
            let check = |row: &[f64]| -> Result<()> {
                if row.len() != card || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidNetwork(format!(
                        "variable {v}: malformed CPT row"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if sum != 0.0 && (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidNetwork(format!(
                        "variable {v}: CPT row sums to {sum}"
                    )));
                }
                Ok(())
            };
            if let Some(d) = &cpt.default {
                check(d)?;
            }
            for (i, (c, row)) in cpt.rows.iter().enumerate() {
                if *c >= configs || (i > 0 && cpt.rows[i - 1].0 >= *c) {
                    return Err(Error::InvalidNetwork(format!(
                        "variable {v}: CPT configurations must be ascending and below {configs}"
                    )));
                }
                check(row)?;
            }
            if cpt.default.is_none() && cpt.rows.len() as u128 != configs {
                return Err(Error::InvalidNetwork(format!(
                    "variable {v}: wrong number of CPT rows"
                )));
            }
        }
        Ok(BayesNet { dag, tables, alpha })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variables(&self) -> &[Variable] {
        self.dag.variables()
    }

    pub fn table(&self, v: usize) -> &Cpt {
        &self.tables[v]
    }

    /// Dense CPT rows of variable `v`, one per parent configuration. Meant
    /// for small networks.
    pub fn rows(&self, v: usize) -> Vec<&[f64]> {
        (0..self.dag.parent_configurations(v))
            .map(|c| self.tables[v].row(c))
            .collect()
    }

    pub fn conditional(&self, v: usize, assignment: &[usize]) -> &[f64] {
        self.tables[v].row(self.dag.parent_index(v, assignment))
    }

    /// `sum_v ln P(x_v | pa_v)` for a full assignment.
    pub fn log_likelihood(&self, assignment: &[usize]) -> Result<f64> {
        check_assignment(self.dag.variables(), assignment)?;
        Ok(self.log_likelihood_unchecked(assignment))
    }

    pub(crate) fn log_likelihood_unchecked(&self, assignment: &[usize]) -> f64 {
        (0..self.dag.len())
            .map(|v| self.conditional(v, assignment)[assignment[v]].ln())
            .sum()
    }

    /// Probabilistic logic sampling: draw each variable in topological
    /// order from its CPT row given the already-drawn parents.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut out = vec![0usize; self.dag.len()];
        for &v in self.dag.topological_order() {
            let row = self.conditional(v, &out);
            out[v] = draw_categorical(row, rng);
        }
        out
    }

    pub fn state_space(&self) -> u128 {
        self.dag
            .variables
            .iter()
            .map(|v| v.cardinality as u128)
            .try_fold(1u128, |acc, c| acc.checked_mul(c))
            .unwrap_or(u128::MAX)
    }

    /// Every full assignment with its probability, last variable fastest.
    pub fn enumerate_joint(&self, cap: u128) -> Result<Vec<(Vec<usize>, f64)>> {
        let size = self.state_space();
        if size > cap {
            return Err(Error::StateSpaceTooLarge { size, cap });
        }
        let n = self.dag.len();
        let mut out = Vec::with_capacity(size as usize);
        let mut assignment = vec![0usize; n];
        loop {
            out.push((
                assignment.clone(),
                self.log_likelihood_unchecked(&assignment).exp(),
            ));
            let mut v = n;
            loop {
                if v == 0 {
                    return Ok(out);
                }
                v -= 1;
                assignment[v] += 1;
                if assignment[v] < self.dag.variables[v].cardinality {
                    break;
                }
                assignment[v] = 0;
            }
        }
    }

    pub fn to_document(&self) -> BnDocument {
        BnDocument {
            format: BN_FORMAT.to_string(),
            variables: self.dag.variables.clone(),
            edges: self.dag.edges().into_iter().map(|(p, c)| [p, c]).collect(),
            cpts: self.tables.clone(),
            alpha: self.alpha,
        }
    }

    pub fn from_document(doc: BnDocument) -> Result<Self> {
        if doc.format != BN_FORMAT {
            return Err(Error::Format(format!(
                "expected {BN_FORMAT}, found {:?}",
                doc.format
            )));
        }
        let mut parents = vec![Vec::new(); doc.variables.len()];
        for [p, c] in doc.edges {
            if c >= parents.len() {
                return Err(Error::Format(format!("edge target {c} out of range")));
            }
            parents[c].push(p);
        }
        let dag = Dag::new(doc.variables, parents)?;
        BayesNet::from_tables(dag, doc.cpts, doc.alpha)
    }
}

/// Inverse-CDF draw from a probability row; an all-zero row draws
/// uniformly.
pub(crate) fn draw_categorical<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return rng.gen_range(0..row.len());
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

pub fn pls_sample<R: Rng + ?Sized>(bn: &BayesNet, rng: &mut R) -> Vec<usize> {
    bn.sample(rng)
}

/// Serialized network: variables, directed edges, full-precision CPT rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnDocument {
    pub format: String,
    pub variables: Vec<Variable>,
    pub edges: Vec<[usize; 2]>,
    pub cpts: Vec<Cpt>,
    pub alpha: f64,
}

/// Structure learner used by [`learn_network`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum StructureLearner {
    Aracne {
        mi_threshold: f64,
        dpi_tolerance: f64,
        bias_correction: bool,
    },
    ChowLiu,
    /// No edges: independent smoothed marginals.
    Independent,
}

impl Default for StructureLearner {
    fn default() -> Self {
        StructureLearner::Aracne {
            mi_threshold: 0.0,
            dpi_tolerance: 0.1,
            bias_correction: true,
        }
    }
}

/// Skeleton, orientation along `order` and CPT fitting in one call.
pub fn learn_network(
    data: &Dataset,
    learner: StructureLearner,
    order: &[usize],
    alpha: f64,
) -> Result<BayesNet> {
    let variables = data.variables().to_vec();
    let skeleton = match learner {
        StructureLearner::Independent => Vec::new(),
        _ if data.is_empty() => Vec::new(),
        StructureLearner::ChowLiu => chow_liu(&MiMatrix::from_data(data)?),
        StructureLearner::Aracne {
            mi_threshold,
            dpi_tolerance,
            bias_correction,
        } => {
            let mut mi = MiMatrix::from_data(data)?;
            if bias_correction {
                mi = mi.bias_corrected();
            }
            aracne_skeleton(&mi, mi_threshold, dpi_tolerance)?
        }
    };
    let dag = orient(variables, &skeleton, order)?;
    fit_cpts(dag, data, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn edge(a: usize, b: usize) -> Edge {
        if a < b {
            (a, b)
        } else {
            (b, a)
        }
    }

    fn vars(cards: &[usize]) -> Vec<Variable> {
        cards
            .iter()
            .enumerate()
            .map(|(i, &c)| Variable::new(format!("x{i}"), c))
            .collect()
    }

    #[test]
    fn mi_of_copied_fair_bit_is_ln2() {
        let rows = (0..1000).map(|i| vec![i % 2, i % 2]).collect();
        let d = Dataset::new(vars(&[2, 2]), rows).unwrap();
        assert!((mutual_information(&d, 0, 1).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mi_of_deterministic_three_level_map_is_ln3() {
        // Uniform X over {0,1,2}; Y = (X + 1) mod 3. The contingency table
        // has three cells of mass 1/3 with marginals 1/3, so MI = ln 3.
        let rows = (0..300).map(|i| vec![i % 3, (i + 1) % 3]).collect();
        let d = Dataset::new(vars(&[3, 3]), rows).unwrap();
        assert!((mutual_information(&d, 0, 1).unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mi_of_independent_columns_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows = (0..50_000)
            .map(|_| vec![rng.gen_range(0..3), rng.gen_range(0..4)])
            .collect();
        let d = Dataset::new(vars(&[3, 4]), rows).unwrap();
        assert!(mutual_information(&d, 0, 1).unwrap() < 0.01);
    }

    #[test]
    fn mi_with_constant_column_is_zero() {
        let rows = (0..10).map(|i| vec![i % 2, 0]).collect();
        let d = Dataset::new(vars(&[2, 3]), rows).unwrap();
        assert_eq!(mutual_information(&d, 0, 1).unwrap(), 0.0);
        assert!(mutual_information(&d, 0, 0).is_err());
    }

    #[test]
    fn mi_with_copy_equals_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = (0..2000)
            .map(|_| {
                let x = if rng.gen::<f64>() < 0.6 {
                    0
                } else {
                    rng.gen_range(1..4)
                };
                vec![x, x]
            })
            .collect();
        let d = Dataset::new(vars(&[4, 4]), rows).unwrap();
        assert!((mutual_information(&d, 0, 1).unwrap() - entropy(&d, 0)).abs() < 1e-12);
    }

    #[test]
    fn chow_liu_two_variables() {
        let mi = MiMatrix::from_values(2, vec![0.0, 0.3, 0.3, 0.0]).unwrap();
        assert_eq!(chow_liu(&mi), vec![(0, 1)]);
    }

    #[test]
    fn chow_liu_equal_weights_takes_lexicographic_star() {
        let n = 4;
        let mut v = vec![0.5; n * n];
        for i in 0..n {
            v[i * n + i] = 0.0;
        }
        let mi = MiMatrix::from_values(n, v).unwrap();
        assert_eq!(chow_liu(&mi), vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn aracne_two_variables_only_thresholds() {
        let mi = MiMatrix::from_values(2, vec![0.0, 0.3, 0.3, 0.0]).unwrap();
        assert_eq!(aracne_skeleton(&mi, 0.0, 0.1).unwrap(), vec![(0, 1)]);
        assert!(aracne_skeleton(&mi, 0.3, 0.1).unwrap().is_empty());
    }

    #[test]
    fn aracne_tolerance_one_never_prunes() {
        let mi =
            MiMatrix::from_values(3, vec![0.0, 0.5, 0.01, 0.5, 0.0, 0.5, 0.01, 0.5, 0.0]).unwrap();
        assert_eq!(aracne_skeleton(&mi, 0.0, 1.0).unwrap().len(), 3);
        assert_eq!(
            aracne_skeleton(&mi, 0.0, 0.1).unwrap(),
            vec![(0, 1), (1, 2)]
        );
        assert!(aracne_skeleton(&mi, 0.0, 1.5).is_err());
    }

    #[test]
    fn orient_follows_order() {
        let dag = orient(vars(&[2, 2]), &[(0, 1)], &[0, 1]).unwrap();
        assert_eq!(dag.edges(), vec![(0, 1)]);
        let dag = orient(vars(&[2, 2]), &[(0, 1)], &[1, 0]).unwrap();
        assert_eq!(dag.edges(), vec![(1, 0)]);
        assert!(orient(vars(&[2, 2]), &[(0, 1)], &[0, 0]).is_err());
    }

    #[test]
    fn orient_first_node_has_no_parents() {
        let skeleton = [(0, 1), (1, 2), (2, 3), (3, 4)];
        let order = [2, 4, 0, 3, 1];
        let dag = orient(vars(&[2; 5]), &skeleton, &order).unwrap();
        assert!(dag.parents(2).is_empty());
    }

    #[test]
    fn dag_rejects_cycles_and_bad_parents() {
        assert!(Dag::new(vars(&[2, 2]), vec![vec![1], vec![0]]).is_err());
        assert!(Dag::new(vars(&[2, 2]), vec![vec![0], vec![]]).is_err());
        assert!(Dag::new(vars(&[2, 2]), vec![vec![], vec![0, 0]]).is_err());
        assert!(Dag::new(vars(&[2, 2]), vec![vec![], vec![5]]).is_err());
    }

    #[test]
    fn laplace_smoothing_single_binary() {
        let d = Dataset::new(vars(&[2]), vec![vec![1], vec![1], vec![1], vec![0]]).unwrap();
        let bn = fit_cpts(Dag::empty(vars(&[2])).unwrap(), &d, 1.0).unwrap();
        assert!((bn.rows(0)[0][1] - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn unseen_parent_configuration_is_uniform() {
        let d = Dataset::new(vars(&[2, 5]), vec![vec![0, 3]; 4]).unwrap();
        let dag = Dag::new(vars(&[2, 5]), vec![vec![], vec![0]]).unwrap();
        let bn = fit_cpts(dag, &d, 1.0).unwrap();
        assert!(bn.rows(1)[1].iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn large_alpha_tends_to_uniform() {
        let d = Dataset::new(vars(&[3]), vec![vec![0]; 50]).unwrap();
        let bn = fit_cpts(Dag::empty(vars(&[3])).unwrap(), &d, 1e9).unwrap();
        assert!(bn.rows(0)[0].iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-6));
    }

    #[test]
    fn zero_alpha_unseen_scores_negative_infinity() {
        let d = Dataset::new(vars(&[2, 2]), vec![vec![0, 1]; 3]).unwrap();
        let dag = Dag::new(vars(&[2, 2]), vec![vec![], vec![0]]).unwrap();
        let bn = fit_cpts(dag, &d, 0.0).unwrap();
        assert_eq!(bn.log_likelihood(&[1, 0]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(bn.log_likelihood(&[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_pair_log_likelihood() {
        let bn = BayesNet::from_rows(
            Dag::empty(vars(&[5, 5])).unwrap(),
            vec![vec![vec![0.2; 5]], vec![vec![0.2; 5]]],
            1.0,
        )
        .unwrap();
        assert!((bn.log_likelihood(&[3, 1]).unwrap() - (1.0f64 / 25.0).ln()).abs() < 1e-12);
        assert!(bn.log_likelihood(&[5, 0]).is_err());
        assert!(bn.log_likelihood(&[0]).is_err());
    }

    #[test]
    fn two_factor_chain() {
        let dag = Dag::new(vars(&[2, 2]), vec![vec![], vec![0]]).unwrap();
        let bn = BayesNet::from_rows(
            dag,
            vec![vec![vec![0.5, 0.5]], vec![vec![0.3, 0.7], vec![0.6, 0.4]]],
            0.0,
        )
        .unwrap();
        assert!((bn.log_likelihood(&[0, 1]).unwrap() - 0.35f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn enumeration_of_fair_pair_and_single_node() {
        let bn = BayesNet::from_rows(
            Dag::empty(vars(&[2, 2])).unwrap(),
            vec![vec![vec![0.5; 2]], vec![vec![0.5; 2]]],
            0.0,
        )
        .unwrap();
        let joint = bn.enumerate_joint(ENUMERATION_CAP).unwrap();
        assert_eq!(joint.len(), 4);
        assert!(joint.iter().all(|(_, p)| (p - 0.25).abs() < 1e-15));

        let marginal = vec![0.1, 0.2, 0.3, 0.15, 0.25];
        let bn = BayesNet::from_rows(
            Dag::empty(vars(&[5])).unwrap(),
            vec![vec![marginal.clone()]],
            0.0,
        )
        .unwrap();
        let joint = bn.enumerate_joint(ENUMERATION_CAP).unwrap();
        for ((a, p), m) in joint.iter().zip(&marginal) {
            assert!((p - m).abs() < 1e-15, "{a:?}");
        }
        assert!(matches!(
            bn.enumerate_joint(4),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn bernoulli_sampling_frequency() {
        let bn = BayesNet::from_rows(
            Dag::empty(vars(&[2])).unwrap(),
            vec![vec![vec![0.3, 0.7]]],
            0.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ones = (0..100_000)
            .filter(|_| pls_sample(&bn, &mut rng)[0] == 1)
            .count();
        assert!((ones as f64 / 1e5 - 0.7).abs() < 0.01);
    }

    #[test]
    fn one_hot_cpts_sample_deterministically() {
        let dag = Dag::new(vars(&[3, 2]), vec![vec![], vec![0]]).unwrap();
        let bn = BayesNet::from_rows(
            dag,
            vec![
                vec![vec![0.0, 0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            0.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(bn.sample(&mut rng), vec![2, 1]);
        }
    }

    #[test]
    fn document_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<usize>> = (0..200)
            .map(|_| {
                let a = rng.gen_range(0..3);
                vec![a, (a + rng.gen_range(0..2)) % 3, rng.gen_range(0..2)]
            })
            .collect();
        let d = Dataset::new(vars(&[3, 3, 2]), rows.clone()).unwrap();
        let bn = learn_network(&d, StructureLearner::ChowLiu, &[0, 1, 2], 0.7).unwrap();
        let text = serde_json::to_string(&bn.to_document()).unwrap();
        let back = BayesNet::from_document(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, bn);
        for r in &rows {
            assert_eq!(
                back.log_likelihood(r).unwrap().to_bits(),
                bn.log_likelihood(r).unwrap().to_bits()
            );
        }
    }

    fn random_data(seed: u64, n_vars: usize, rows: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cards: Vec<usize> = (0..n_vars).map(|_| rng.gen_range(1..5)).collect();
        let data = (0..rows)
            .map(|_| {
                let mut r: Vec<usize> = cards.iter().map(|&c| rng.gen_range(0..c)).collect();
                // Couple neighbouring columns so MI is not uniformly tiny.
                for v in 1..n_vars {
                    if rng.gen::<f64>() < 0.5 {
                        r[v] = r[v - 1] % cards[v];
                    }
                }
                r
            })
            .collect();
        Dataset::new(vars(&cards), data).unwrap()
    }

    proptest! {
        #[test]
        fn mi_is_exactly_symmetric(seed in any::<u64>()) {
            let d = random_data(seed, 4, 60);
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        prop_assert_eq!(
                            mutual_information(&d, i, j).unwrap().to_bits(),
                            mutual_information(&d, j, i).unwrap().to_bits()
                        );
                    }
                }
            }
        }

        #[test]
        fn chow_liu_is_a_spanning_tree(seed in any::<u64>(), n in 2usize..8) {
            let d = random_data(seed, n, 80);
            let tree = chow_liu(&MiMatrix::from_data(&d).unwrap());
            prop_assert_eq!(tree.len(), n - 1);
            let dag = orient(d.variables().to_vec(), &tree, &(0..n).collect::<Vec<_>>());
            prop_assert!(dag.is_ok());
        }

        #[test]
        fn aracne_subset_of_threshold_and_monotone(seed in any::<u64>(), n in 2usize..8, t in 0.0f64..0.05) {
            let d = random_data(seed, n, 80);
            let mi = MiMatrix::from_data(&d).unwrap();
            let mut previous: Option<Vec<Edge>> = None;
            for eps in [0.0, 0.1, 0.3, 0.7, 1.0] {
                let s = aracne_skeleton(&mi, t, eps).unwrap();
                prop_assert!(s.iter().all(|&(i, j)| mi.get(i, j) > t));
                if let Some(prev) = &previous {
                    prop_assert!(prev.iter().all(|e| s.contains(e)));
                }
                previous = Some(s);
            }
        }

        #[test]
        fn orient_is_acyclic_for_any_graph(seed in any::<u64>(), n in 1usize..10, density in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut skeleton = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < density {
                        skeleton.push(edge(i, j));
                    }
                }
            }
            let mut order: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
            let dag = orient(vars(&vec![2; n]), &skeleton, &order).unwrap();
            prop_assert_eq!(dag.edges().len(), skeleton.len());
            for (p, c) in dag.edges() {
                let pos = |v| order.iter().position(|&x| x == v).unwrap();
                prop_assert!(pos(p) < pos(c));
            }
        }

        #[test]
        fn fitted_rows_are_distributions(seed in any::<u64>(), alpha in 0.01f64..5.0) {
            let d = random_data(seed, 4, 40);
            let bn = learn_network(&d, StructureLearner::ChowLiu, &[0, 1, 2, 3], alpha).unwrap();
            for v in 0..4 {
                for row in bn.rows(v) {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    prop_assert!(row.iter().all(|&p| p > 0.0));
                }
            }
        }
    }
}
