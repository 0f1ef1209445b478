//! Rank-k non-negative matrix factorization with multiplicative Frobenius
//! updates, plus the axis interpretation that names the two progression-space
//! directions.
//!
//! The update rules are the classic pair
//!
//! ```text
//! H <- H .* (W'V) ./ (W'WH + eps)
//! W <- W .* (VH') ./ (WHH' + eps)
//! ```
//!
//! which keep both factors non-negative and never increase the Frobenius
//! residual. `eps = 1e-12` guards the divisions.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cohort::{ColMeta, FeatureGroup};
use crate::error::{Error, Result};

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct NmfOptions {
    pub rank: usize,
    pub seed: u64,
    /// Stop when the relative residual improvement drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NmfOptions {
    fn default() -> Self {
        NmfOptions { rank: 2, seed: 0, tol: 1e-6, max_iter: 2000 }
    }
}

/// NMF output. `w` holds the sample coordinates (the progression space when
/// rank = 2), `h` the coefficient matrix used to interpret the axes.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// Frobenius residual before any update, then after each iteration.
    pub residual_history: Vec<f64>,
    pub rank: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl Factorization {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }
}

/// `||V - WH||_F`.
pub fn frobenius_residual(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> Result<f64> {
    if w.nrows() != v.nrows() || h.ncols() != v.ncols() || w.ncols() != h.nrows() {
        return Err(Error::Shape(format!(
            "residual of {}x{} vs {}x{} * {}x{}",
            v.nrows(),
            v.ncols(),
            w.nrows(),
            w.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    let diff = v - &w.dot(h);
    Ok(diff.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn check_non_negative(v: &Array2<f64>) -> Result<()> {
    for ((i, j), x) in v.indexed_iter() {
        if !x.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
        if *x < 0.0 {
            return Err(Error::Domain(format!("negative entry {x} at ({i}, {j})")));
        }
    }
    Ok(())
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
}

/// Factor a non-negative matrix as `V ~ WH` by seeded multiplicative updates.
pub fn nmf_fit(v: &Array2<f64>, opts: &NmfOptions) -> Result<Factorization> {
    check_non_negative(v)?;
    let (n, d) = v.dim();
    let k = opts.rank;
    if k == 0 || k > n.min(d) {
        return Err(Error::Rank(format!("rank {k} outside [1, min({n}, {d})]")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w = uniform_matrix(&mut rng, n, k);
    let mut h = uniform_matrix(&mut rng, k, d);

    let mut history = vec![frobenius_residual(v, &w, &h)?];
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        // H <- H .* (W'V) ./ (W'WH + eps)
        let wt_v = w.t().dot(v);
        let wt_w_h = w.t().dot(&w).dot(&h);
        ndarray::Zip::from(&mut h).and(&wt_v).and(&wt_w_h).for_each(|hv, &num, &den| {
            *hv *= num / (den + EPS);
        });

        // W <- W .* (VH') ./ (WHH' + eps)
        let v_ht = v.dot(&h.t());
        let h_ht = h.dot(&h.t());
        let w_h_ht = w.dot(&h_ht);
        ndarray::Zip::from(&mut w).and(&v_ht).and(&w_h_ht).for_each(|wv, &num, &den| {
            *wv *= num / (den + EPS);
        });

        let prev = *history.last().unwrap();
        let res = frobenius_residual(v, &w, &h)?;
        history.push(res);
        iterations = it + 1;

        let rel = if prev > 0.0 { (prev - res) / prev } else { 0.0 };
        if rel < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(Factorization { w, h, residual_history: history, rank: k, converged, iterations })
}

/// Solve `x A = b` for a small symmetric positive-definite `A` by Gaussian
/// elimination with partial pivoting; None when `A` is singular.
fn solve_small(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let k = b.len();
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..k {
        let pivot = (col..k).max_by(|&p, &q| m[[p, col]].abs().partial_cmp(&m[[q, col]].abs()).unwrap())?;
        if m[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..k {
                m.swap([pivot, j], [col, j]);
            }
            x.swap(pivot, col);
        }
        for row in col + 1..k {
            let f = m[[row, col]] / m[[col, col]];
            for j in col..k {
                m[[row, j]] -= f * m[[col, j]];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..k).rev() {
        for row in 0..col {
            let f = m[[row, col]] / m[[col, col]];
            x[row] -= f * x[col];
        }
        x[col] /= m[[col, col]];
    }
    Some(x)
}

/// Place new rows into a trained space: minimize `||v - wH||_F` over `w >= 0`
/// per row with `H` frozen, using the W-update rule only.
///
/// Each row warm-starts at its unconstrained least-squares solution clamped
/// to a small positive floor (the multiplicative rule alone crawls from a
/// cold start), so the result depends only on the row's content: duplicated
/// rows map to identical coordinates and rows may be solved in any order.
pub fn nmf_transform(v_new: &Array2<f64>, h: &Array2<f64>, opts: &NmfOptions) -> Result<Array2<f64>> {
    check_non_negative(v_new)?;
    if v_new.ncols() != h.ncols() {
        return Err(Error::Shape(format!(
            "new rows have {} columns, H has {}",
            v_new.ncols(),
            h.ncols()
        )));
    }
    let k = h.nrows();
    let h_ht = h.dot(&h.t());

    let mut out = Array2::zeros((v_new.nrows(), k));
    for (i, row) in v_new.rows().into_iter().enumerate() {
        let numer = row.dot(&h.t());
        let ls = solve_small(&h_ht, &numer).unwrap_or_else(|| {
            // near-singular HH': fall back to per-axis projections
            Array1::from_shape_fn(k, |j| numer[j] / (h_ht[[j, j]] + EPS))
        });
        let scale = ls.iter().cloned().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let floor = 1e-3 * scale;
        let mut w: Array1<f64> = ls.mapv(|v| if v > 0.0 { v } else { floor });

        let mut prev = {
            let recon = w.dot(h);
            (&row - &recon).iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        for _ in 0..opts.max_iter {
            let denom = w.dot(&h_ht);
            ndarray::Zip::from(&mut w).and(&numer).and(&denom).for_each(|wv, &num, &den| {
                *wv *= num / (den + EPS);
            });
            let recon = w.dot(h);
            let res = (&row - &recon).iter().map(|x| x * x).sum::<f64>().sqrt();
            let rel = if prev > 0.0 { (prev - res) / prev } else { 0.0 };
            prev = res;
            if rel < opts.tol {
                break;
            }
        }
        out.row_mut(i).assign(&w);
    }
    Ok(out)
}

/// Which latent direction an axis represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisLabel {
    MemoryDecline,
    CognitionDecline,
    Unlabeled,
}

impl AxisLabel {
    pub fn token(self) -> &'static str {
        match self {
            AxisLabel::MemoryDecline => "memory_decline",
            AxisLabel::CognitionDecline => "cognition_decline",
            AxisLabel::Unlabeled => "unlabeled",
        }
    }
}

/// Sign convention of the progression space: which axis carries memory
/// decline, which carries cognition decline, and the direction in which each
/// decline grows (+1 means decline increases with the coordinate).
///
/// The progression score of a point is
/// `memory_sign * p[memory_axis] + cognition_sign * p[cognition_axis]`,
/// which reduces to the `y - x` rule when memory sits on +y and cognition
/// decline on -x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    pub memory_axis: usize,
    pub cognition_axis: usize,
    pub memory_sign: f64,
    pub cognition_sign: f64,
}

impl Orientation {
    pub fn progression_score(&self, point: [f64; 2]) -> f64 {
        self.memory_sign * point[self.memory_axis] + self.cognition_sign * point[self.cognition_axis]
    }
}

impl Default for Orientation {
    /// Memory on axis 1, cognition on axis 0, decline increasing with both
    /// coordinates (the convention NMF coordinates naturally satisfy).
    fn default() -> Self {
        Orientation { memory_axis: 1, cognition_axis: 0, memory_sign: 1.0, cognition_sign: 1.0 }
    }
}

/// Axis labels, per-axis per-group coefficient mass, and the resulting
/// orientation record.
#[derive(Debug, Clone)]
pub struct AxisInterpretation {
    pub axis_labels: [AxisLabel; 2],
    /// `group_loadings[axis][g]` is the summed H mass of group `g`
    /// (indexed by `FeatureGroup::ALL` order) on that axis.
    pub group_loadings: [[f64; 4]; 2],
    pub orientation: Orientation,
}

fn group_index(group: FeatureGroup) -> usize {
    FeatureGroup::ALL.iter().position(|g| *g == group).unwrap()
}

/// Interpret the two rows of the coefficient matrix by summing mass per
/// feature group. An axis is MemoryDecline when the memory group holds the
/// strictly largest mass on it, CognitionDecline when cognition does; when
/// both axes claim the same label the larger margin wins and the other axis
/// stays unlabeled.
pub fn interpret_axes(h: &Array2<f64>, col_meta: &[ColMeta]) -> Result<AxisInterpretation> {
    if h.nrows() != 2 {
        return Err(Error::Interpretation(format!(
            "axis interpretation needs rank 2, got {}",
            h.nrows()
        )));
    }
    if h.ncols() != col_meta.len() {
        return Err(Error::Shape(format!(
            "H has {} columns, col_meta has {}",
            h.ncols(),
            col_meta.len()
        )));
    }

    let mut loadings = [[0.0f64; 4]; 2];
    for axis in 0..2 {
        for (j, meta) in col_meta.iter().enumerate() {
            loadings[axis][group_index(meta.group)] += h[[axis, j]];
        }
    }

    // Strict-max claim per axis, with the margin over the runner-up group.
    let claim = |axis: usize| -> (AxisLabel, f64) {
        let masses = loadings[axis];
        let mut best = 0;
        for g in 1..4 {
            if masses[g] > masses[best] {
                best = g;
            }
        }
        let runner_up = (0..4)
            .filter(|&g| g != best)
            .map(|g| masses[g])
            .fold(f64::NEG_INFINITY, f64::max);
        if masses[best] <= runner_up {
            return (AxisLabel::Unlabeled, 0.0);
        }
        let margin = masses[best] - runner_up;
        match FeatureGroup::ALL[best] {
            FeatureGroup::Memory => (AxisLabel::MemoryDecline, margin),
            FeatureGroup::Cognition => (AxisLabel::CognitionDecline, margin),
            _ => (AxisLabel::Unlabeled, 0.0),
        }
    };

    let (mut label0, margin0) = claim(0);
    let (mut label1, margin1) = claim(1);
    if label0 == label1 && label0 != AxisLabel::Unlabeled {
        if margin0 >= margin1 {
            label1 = AxisLabel::Unlabeled;
        } else {
            label0 = AxisLabel::Unlabeled;
        }
    }

    // NMF coordinates are non-negative with decline growing along each axis,
    // so signs are +1; fall back to the default axis assignment when the
    // labels do not pin it down.
    let orientation = match (label0, label1) {
        (AxisLabel::MemoryDecline, _) => Orientation { memory_axis: 0, cognition_axis: 1, memory_sign: 1.0, cognition_sign: 1.0 },
        (_, AxisLabel::MemoryDecline) => Orientation::default(),
        (AxisLabel::CognitionDecline, _) => Orientation::default(),
        (_, AxisLabel::CognitionDecline) => Orientation { memory_axis: 0, cognition_axis: 1, memory_sign: 1.0, cognition_sign: 1.0 },
        _ => Orientation::default(),
    };

    Ok(AxisInterpretation { axis_labels: [label0, label1], group_loadings: loadings, orientation })
}

fn write_matrix_csv(m: &Array2<f64>, header: &str, path: &Path) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
        rows.push(row.map_err(|e| Error::Parse { line: i + 1, msg: format!("{e}") })?);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 0, msg: "matrix file has no data rows".into() });
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged matrix file".into()));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| Error::Shape(e.to_string()))
}

/// Persist a factorization as a `W.csv`/`H.csv` pair plus a metadata file.
pub fn save_factorization(fact: &Factorization, opts: &NmfOptions, dir: &Path) -> Result<()> {
    let axes: Vec<String> = (0..fact.rank).map(|a| format!("axis{a}")).collect();
    write_matrix_csv(&fact.w, &axes.join(","), &dir.join("W.csv"))?;
    let cols: Vec<String> = (0..fact.h.ncols()).map(|j| format!("c{j}")).collect();
    write_matrix_csv(&fact.h, &cols.join(","), &dir.join("H.csv"))?;
    let meta = format!(
        "rank,{}\nseed,{}\ntol,{}\nmax_iter,{}\niterations,{}\nconverged,{}\nfinal_residual,{}\n",
        fact.rank,
        opts.seed,
        opts.tol,
        opts.max_iter,
        fact.iterations,
        fact.converged,
        fact.final_residual()
    );
    std::fs::write(dir.join("nmf_meta.txt"), meta)?;
    Ok(())
}

/// Load the `W.csv`/`H.csv` pair written by [`save_factorization`].
pub fn load_factorization(dir: &Path) -> Result<(Array2<f64>, Array2<f64>)> {
    let w = read_matrix_csv(&dir.join("W.csv"))?;
    let h = read_matrix_csv(&dir.join("H.csv"))?;
    Ok((w, h))
}
