//! Python bindings: archive synthesis, metamodel learning, scoring and
//! sampling, the experiment drivers and the rank tests.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use archsmith::archive::{extract_sets, parse_archive, write_archive};
use archsmith::experiments::{
    archive_from_individuals, derive_seed, gen_archive as gen_individuals, guided_search,
    initialization, likelihood, sampling, ExperimentConfig,
};
use archsmith::genotype::{GanSpec, GenotypeConfig, Mode};
use archsmith::metamodel::{Metamodel, MetamodelConfig};
use archsmith::stats;

fn to_py(e: archsmith::Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "joint" => Ok(Mode::Joint),
        "per_network" | "per-network" => Ok(Mode::PerNetwork),
        _ => Err(PyValueError::new_err(format!("unknown mode {mode:?}"))),
    }
}

fn parse_config(config: Option<&str>) -> PyResult<ExperimentConfig> {
    let cfg: ExperimentConfig = match config {
        Some(text) => toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

fn parse_gan(json: &str) -> PyResult<GanSpec> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Synthesizes an archive from a TOML experiment configuration and returns
/// it as JSON lines.
#[pyfunction]
#[pyo3(signature = (config=None, mode="joint"))]
fn gen_archive(config: Option<&str>, mode: &str) -> PyResult<String> {
    let cfg = parse_config(config)?;
    let individuals = gen_individuals(&cfg.archive(parse_mode(mode)?)).map_err(to_py)?;
    let mut buf = Vec::new();
    write_archive(&mut buf, &individuals).map_err(to_py)?;
    Ok(String::from_utf8(buf).expect("archive writer emits UTF-8"))
}

/// Runs one experiment and returns its CSVs keyed by file name.
#[pyfunction]
#[pyo3(signature = (kind, config=None, mode=None))]
fn run_experiment(
    kind: &str,
    config: Option<&str>,
    mode: Option<&str>,
) -> PyResult<BTreeMap<String, String>> {
    let cfg = parse_config(config)?;
    let mode = match (mode, kind) {
        (Some(m), _) => parse_mode(m)?,
        (None, "guided-search") => Mode::PerNetwork,
        (None, _) => Mode::Joint,
    };
    let spec = cfg.archive(mode);
    let archive = gen_individuals(&spec)
        .and_then(|ind| archive_from_individuals(&ind, &spec.landscape.genotype, mode))
        .map_err(to_py)?;
    let mut out = BTreeMap::new();
    match kind {
        "likelihood" => {
            let r = likelihood(&archive, &cfg.likelihood(mode)).map_err(to_py)?;
            out.insert("likelihood_scores.csv".into(), r.scores_csv());
            out.insert("likelihood_tests.csv".into(), r.tests_csv());
        }
        "sampling" => {
            let r = sampling(&archive, &cfg.sampling(mode)).map_err(to_py)?;
            out.insert("sampling_fitness.csv".into(), r.fitness_csv());
            out.insert("sampling_tests.csv".into(), r.tests_csv());
        }
        "initialization" => {
            let r = initialization(&archive, &cfg.initialization(mode)).map_err(to_py)?;
            out.insert("initialization.csv".into(), r.csv());
        }
        "guided-search" => {
            let r = guided_search(&archive, &cfg.guided_search(mode)).map_err(to_py)?;
            out.insert("guided_search.csv".into(), r.csv());
        }
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown experiment {kind:?}"
            )))
        }
    }
    Ok(out)
}

#[pyclass(name = "Metamodel", frozen)]
struct PyMetamodel {
    inner: Metamodel,
}

#[pymethods]
impl PyMetamodel {
    /// Learns from the First set (the `n` best of every run) of a JSON-lines
    /// archive.
    #[staticmethod]
    #[pyo3(signature = (archive, n=5, seed=0, mode="joint"))]
    fn learn(archive: &str, n: usize, seed: u64, mode: &str) -> PyResult<Self> {
        let mode = parse_mode(mode)?;
        let (archive, _) =
            parse_archive(archive, &GenotypeConfig::for_mode(mode), mode).map_err(to_py)?;
        let sets = extract_sets(&archive, n, seed).map_err(to_py)?;
        let inner = Metamodel::learn_from_individuals(
            &sets.first,
            &MetamodelConfig::new(mode),
            Some(&archive.metadata),
        )
        .map_err(to_py)?;
        Ok(PyMetamodel { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyMetamodel {
            inner: Metamodel::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode().to_string()
    }

    /// Score terms of one genotype given as JSON.
    fn score(&self, gan: &str) -> PyResult<BTreeMap<&'static str, f64>> {
        let s = self.inner.score(&parse_gan(gan)?).map_err(to_py)?;
        Ok(BTreeMap::from([
            ("log_prob", s.log_prob),
            ("supermodel_term", s.supermodel_term),
            ("submodel_term", s.submodel_term),
            ("normalized", s.normalized),
            ("lift", s.lift),
        ]))
    }

    /// Draws `count` genotypes as JSON strings.
    #[pyo3(signature = (count, seed=0))]
    fn sample(&self, count: usize, seed: u64) -> PyResult<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["sample"]));
        (0..count)
            .map(|_| {
                serde_json::to_string(&self.inner.sample(&mut rng))
                    .map_err(|e| PyValueError::new_err(e.to_string()))
            })
            .collect()
    }
}

/// `(H, p)` of the Kruskal-Wallis test with the chi-square approximation.
#[pyfunction]
fn kruskal_wallis(groups: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
    let r = stats::kruskal_wallis(&refs).map_err(to_py)?;
    Ok((r.statistic, r.p_value))
}

/// `(U, p)` of the two-sided Mann-Whitney rank-sum test.
#[pyfunction]
fn rank_sum(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = stats::rank_sum(&a, &b).map_err(to_py)?;
    Ok((r.statistic, r.p_value))
}

#[pymodule]
fn pyarchsmith(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMetamodel>()?;
    m.add_function(wrap_pyfunction!(gen_archive, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add_function(wrap_pyfunction!(rank_sum, m)?)?;
    Ok(())
}
