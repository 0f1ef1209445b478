//! Python bindings for the progression-space pipeline primitives: NMF,
//! Gaussian-mixture subtyping with BIC selection, the random forest, the
//! evaluation metrics, and the synthetic cohort generator.
//!
//! Matrices cross the boundary as nested lists and 2-D points as pairs,
//! which keeps the module free of a numpy build dependency; convert with
//! `numpy.asarray(...)` on the Python side when needed.

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use progspace::cohort::FeatureGroup;
use progspace::error::Error;
use progspace::{cohort, forest, gmm, metrics, nmf, synth};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("matrix rows have unequal lengths"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn from_matrix(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_points(points: &[(f64, f64)]) -> Vec<[f64; 2]> {
    points.iter().map(|&(x, y)| [x, y]).collect()
}

/// Rank-k non-negative factorization of a sample matrix.
#[pyclass]
struct Factorization {
    inner: nmf::Factorization,
    opts: nmf::NmfOptions,
}

#[pymethods]
impl Factorization {
    #[getter]
    fn w(&self) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.w)
    }

    #[getter]
    fn h(&self) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.h)
    }

    #[getter]
    fn residual_history(&self) -> Vec<f64> {
        self.inner.residual_history.clone()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    fn final_residual(&self) -> f64 {
        self.inner.final_residual()
    }

    /// Place new rows into the trained space with H frozen.
    fn transform(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let v = to_matrix(rows)?;
        let w = nmf::nmf_transform(&v, &self.inner.h, &self.opts).map_err(py_err)?;
        Ok(from_matrix(&w))
    }

    fn __repr__(&self) -> String {
        format!(
            "Factorization(rank={}, iterations={}, residual={:.6})",
            self.inner.rank,
            self.inner.iterations,
            self.inner.final_residual()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (v, rank=2, seed=0, tol=1e-6, max_iter=2000))]
fn nmf_fit(v: Vec<Vec<f64>>, rank: usize, seed: u64, tol: f64, max_iter: usize) -> PyResult<Factorization> {
    let matrix = to_matrix(v)?;
    let opts = nmf::NmfOptions { rank, seed, tol, max_iter };
    let inner = nmf::nmf_fit(&matrix, &opts).map_err(py_err)?;
    Ok(Factorization { inner, opts })
}

#[pyfunction]
fn frobenius_residual(v: Vec<Vec<f64>>, w: Vec<Vec<f64>>, h: Vec<Vec<f64>>) -> PyResult<f64> {
    nmf::frobenius_residual(&to_matrix(v)?, &to_matrix(w)?, &to_matrix(h)?).map_err(py_err)
}

/// Sum coefficient mass per feature group and name the two axes.
/// Groups are `memory`, `cognition`, `function`, or `other`, one per column.
/// Returns (axis_labels, group_loadings, (memory_axis, cognition_axis,
/// memory_sign, cognition_sign)).
#[pyfunction]
fn interpret_axes(
    h: Vec<Vec<f64>>,
    groups: Vec<String>,
) -> PyResult<(Vec<String>, Vec<Vec<f64>>, (usize, usize, f64, f64))> {
    let matrix = to_matrix(h)?;
    let col_meta: Vec<cohort::ColMeta> = groups
        .iter()
        .enumerate()
        .map(|(j, g)| {
            FeatureGroup::from_token(g)
                .map(|group| cohort::ColMeta {
                    name: format!("c{j}"),
                    source: format!("c{j}"),
                    group,
                    visit_month: 0,
                })
                .ok_or_else(|| PyValueError::new_err(format!("unknown feature group `{g}`")))
        })
        .collect::<PyResult<_>>()?;
    let interp = nmf::interpret_axes(&matrix, &col_meta).map_err(py_err)?;
    let labels = interp.axis_labels.iter().map(|l| l.token().to_string()).collect();
    let loadings = interp.group_loadings.iter().map(|l| l.to_vec()).collect();
    let o = interp.orientation;
    Ok((labels, loadings, (o.memory_axis, o.cognition_axis, o.memory_sign, o.cognition_sign)))
}

/// Full-covariance Gaussian mixture over 2-D points.
#[pyclass]
struct GaussianMixture {
    inner: gmm::GmmModel,
}

#[pymethods]
impl GaussianMixture {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn means(&self) -> Vec<(f64, f64)> {
        self.inner.means.iter().map(|m| (m[0], m[1])).collect()
    }

    /// Covariances as (xx, xy, yy) triples.
    #[getter]
    fn covariances(&self) -> Vec<(f64, f64, f64)> {
        self.inner.covariances.iter().map(|c| (c.xx, c.xy, c.yy)).collect()
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    #[getter]
    fn log_likelihood_history(&self) -> Vec<f64> {
        self.inner.log_likelihood_history.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn zones(&self) -> Vec<String> {
        self.inner.zone_labels.iter().map(|z| z.token().to_string()).collect()
    }

    fn responsibilities(&self, points: Vec<(f64, f64)>) -> PyResult<Vec<Vec<f64>>> {
        let resp = gmm::responsibilities(&self.inner, &to_points(&points)).map_err(py_err)?;
        Ok(from_matrix(&resp))
    }

    fn assign(&self, points: Vec<(f64, f64)>) -> PyResult<Vec<usize>> {
        gmm::assign(&self.inner, &to_points(&points)).map_err(py_err)
    }

    fn bic(&self, points: Vec<(f64, f64)>) -> PyResult<f64> {
        gmm::bic(&self.inner, &to_points(&points)).map_err(py_err)
    }

    /// Name the three components low/moderate/high along the progression
    /// direction given the axis orientation.
    #[pyo3(signature = (memory_axis=1, cognition_axis=0, memory_sign=1.0, cognition_sign=1.0))]
    fn label_zones(
        &self,
        memory_axis: usize,
        cognition_axis: usize,
        memory_sign: f64,
        cognition_sign: f64,
    ) -> PyResult<GaussianMixture> {
        let orientation = nmf::Orientation { memory_axis, cognition_axis, memory_sign, cognition_sign };
        let labeled = gmm::label_zones(&self.inner, &orientation).map_err(py_err)?;
        Ok(GaussianMixture { inner: labeled })
    }

    fn __repr__(&self) -> String {
        format!(
            "GaussianMixture(k={}, log_likelihood={:.4}, converged={})",
            self.inner.k, self.inner.log_likelihood, self.inner.converged
        )
    }
}

#[pyfunction]
#[pyo3(signature = (points, k, seed=0, reg=1e-6, tol=1e-6, max_iter=500))]
fn gmm_fit(
    points: Vec<(f64, f64)>,
    k: usize,
    seed: u64,
    reg: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<GaussianMixture> {
    let opts = gmm::GmmOptions { seed, reg, tol, max_iter };
    let inner = gmm::gmm_fit(&to_points(&points), k, &opts).map_err(py_err)?;
    Ok(GaussianMixture { inner })
}

/// Scan k by BIC; returns (selected_k, [(k, bic, converged), ...]).
#[pyfunction]
#[pyo3(signature = (points, k_min=1, k_max=6, seed=0, restarts=5))]
fn select_k(
    points: Vec<(f64, f64)>,
    k_min: usize,
    k_max: usize,
    seed: u64,
    restarts: usize,
) -> PyResult<(usize, Vec<(usize, f64, bool)>)> {
    let opts = gmm::GmmOptions { seed, ..Default::default() };
    let scan = gmm::select_k(&to_points(&points), k_min..=k_max, &opts, restarts).map_err(py_err)?;
    let candidates = scan.candidates.iter().map(|c| (c.k, c.bic, c.converged)).collect();
    Ok((scan.selected_k, candidates))
}

/// Bagged CART forest.
#[pyclass]
struct RandomForest {
    inner: forest::ForestModel,
}

#[pymethods]
impl RandomForest {
    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes.clone()
    }

    #[getter]
    fn oob_accuracy(&self) -> Option<f64> {
        self.inner.oob_accuracy
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees.len()
    }

    /// Vote fractions per class; rows sum to 1.
    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let proba = forest::forest_predict_proba(&self.inner, &to_matrix(x)?).map_err(py_err)?;
        Ok(from_matrix(&proba))
    }

    /// Predicted class names.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<String>> {
        let pred = forest::forest_predict(&self.inner, &to_matrix(x)?).map_err(py_err)?;
        Ok(pred.into_iter().map(|c| self.inner.classes[c].clone()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "RandomForest(n_trees={}, mtry={}, oob_accuracy={:?})",
            self.inner.trees.len(),
            self.inner.params.mtry,
            self.inner.oob_accuracy
        )
    }
}

#[pyfunction]
#[pyo3(signature = (x, y, classes, n_trees=100, max_depth=None, mtry=None, min_samples_leaf=1, seed=0))]
#[allow(clippy::too_many_arguments)]
fn forest_fit(
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    classes: Vec<String>,
    n_trees: usize,
    max_depth: Option<usize>,
    mtry: Option<usize>,
    min_samples_leaf: usize,
    seed: u64,
) -> PyResult<RandomForest> {
    let matrix = to_matrix(x)?;
    let d = matrix.ncols();
    let params = forest::ForestParams {
        n_trees,
        max_depth,
        mtry: mtry.unwrap_or_else(|| ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1))),
        min_samples_leaf,
    };
    let inner = forest::forest_fit(&matrix, &y, &classes, &params, seed).map_err(py_err)?;
    Ok(RandomForest { inner })
}

#[pyfunction]
fn stratified_kfold(y: Vec<usize>, k: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    forest::stratified_kfold(&y, k, seed).map_err(py_err)
}

#[pyfunction]
fn accuracy(y_true: Vec<usize>, y_pred: Vec<usize>) -> PyResult<f64> {
    metrics::accuracy(&y_true, &y_pred).map_err(py_err)
}

#[pyfunction]
fn roc_curve(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Vec<(f64, f64)>> {
    metrics::roc_curve(&scores, &labels).map_err(py_err)
}

#[pyfunction]
fn auc(points: Vec<(f64, f64)>) -> PyResult<f64> {
    metrics::auc(&points).map_err(py_err)
}

/// One-vs-rest AUC per class; None marks a class absent from the labels.
#[pyfunction]
fn one_vs_rest_auc(proba: Vec<Vec<f64>>, y_true: Vec<usize>) -> PyResult<Vec<Option<f64>>> {
    metrics::one_vs_rest_auc(&to_matrix(proba)?, &y_true).map_err(py_err)
}

/// Generate the default synthetic cohort for a horizon and write the cohort
/// CSV, schema sidecar, and ground-truth sidecar into `out_dir`. Returns the
/// three file paths.
#[pyfunction]
#[pyo3(signature = (out_dir, horizon=24, subjects=None, seed=42))]
fn generate_cohort_files(
    out_dir: &str,
    horizon: u32,
    subjects: Option<usize>,
    seed: u64,
) -> PyResult<(String, String, String)> {
    if horizon != 24 && horizon != 48 {
        return Err(PyValueError::new_err("horizon must be 24 or 48"));
    }
    let mut spec = if horizon == 48 {
        synth::CohortSpec::default_m48(seed)
    } else {
        synth::CohortSpec::default_m24(seed)
    };
    if let Some(n) = subjects {
        spec.n_subjects = n;
    }
    let (cohort, truth) = synth::generate_cohort(&spec).map_err(py_err)?;
    let dir = std::path::Path::new(out_dir);
    std::fs::create_dir_all(dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let cohort_path = dir.join("cohort.csv");
    let schema_path = dir.join("schema.txt");
    let truth_path = dir.join("ground_truth.csv");
    cohort::write_cohort_csv(&cohort, &cohort_path).map_err(py_err)?;
    cohort::write_schema(&cohort.schema, &schema_path).map_err(py_err)?;
    synth::write_ground_truth(&truth, &truth_path).map_err(py_err)?;
    Ok((
        cohort_path.display().to_string(),
        schema_path.display().to_string(),
        truth_path.display().to_string(),
    ))
}

#[pymodule]
fn progspace_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Factorization>()?;
    m.add_class::<GaussianMixture>()?;
    m.add_class::<RandomForest>()?;
    m.add_function(wrap_pyfunction!(nmf_fit, m)?)?;
    m.add_function(wrap_pyfunction!(frobenius_residual, m)?)?;
    m.add_function(wrap_pyfunction!(interpret_axes, m)?)?;
    m.add_function(wrap_pyfunction!(gmm_fit, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(forest_fit, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_kfold, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(one_vs_rest_auc, m)?)?;
    m.add_function(wrap_pyfunction!(generate_cohort_files, m)?)?;
    Ok(())
}
