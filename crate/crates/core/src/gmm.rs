//! Gaussian mixtures over the 2-D progression space: seeded EM with full
//! covariances, BIC model selection over a k range, and the zone labeling
//! that orders the three components along the progression direction.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nmf::Orientation;

/// Full symmetric 2x2 covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Smaller eigenvalue of the symmetric matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let tr = self.xx + self.yy;
        let disc = ((self.xx - self.yy).powi(2) + 4.0 * self.xy * self.xy).sqrt();
        0.5 * (tr - disc)
    }

    fn log_pdf(&self, mean: [f64; 2], x: [f64; 2]) -> f64 {
        let det = self.det();
        let dx = x[0] - mean[0];
        let dy = x[1] - mean[1];
        let quad = (dx * dx * self.yy - 2.0 * dx * dy * self.xy + dy * dy * self.xx) / det;
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad
    }
}

/// Progression-rate zone of a mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Zone {
    Low,
    Moderate,
    High,
    Unassigned,
}

impl Zone {
    pub fn token(self) -> &'static str {
        match self {
            Zone::Low => "low",
            Zone::Moderate => "moderate",
            Zone::High => "high",
            Zone::Unassigned => "unassigned",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "low" => Some(Zone::Low),
            "moderate" => Some(Zone::Moderate),
            "high" => Some(Zone::High),
            "unassigned" => Some(Zone::Unassigned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmmOptions {
    pub seed: u64,
    /// Diagonal loading added to every covariance update.
    pub reg: f64,
    /// Stop when the log-likelihood improvement drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions { seed: 0, reg: 1e-6, tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<Cov2>,
    /// Final training log-likelihood.
    pub log_likelihood: f64,
    /// Log-likelihood recorded at every EM iteration.
    pub log_likelihood_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub zone_labels: Vec<Zone>,
}

fn check_points(points: &[[f64; 2]]) -> Result<()> {
    for (i, p) in points.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::Domain(format!("non-finite point at index {i}")));
        }
    }
    Ok(())
}

/// Convert an n×2 coordinate matrix into point rows.
pub fn points_from_matrix(m: &Array2<f64>) -> Result<Vec<[f64; 2]>> {
    if m.ncols() != 2 {
        return Err(Error::Shape(format!("expected 2 columns, got {}", m.ncols())));
    }
    Ok(m.rows().into_iter().map(|r| [r[0], r[1]]).collect())
}

fn squared_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// k-means++ seeding of the component means.
fn kmeanspp_means(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut means = Vec::with_capacity(k);
    means.push(points[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = points.iter().map(|p| squared_dist(*p, means[0])).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            points[chosen]
        } else {
            points[rng.random_range(0..n)]
        };
        means.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_dist(*p, next));
        }
    }
    means
}

fn pooled_covariance(points: &[[f64; 2]], reg: f64) -> Cov2 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut xx = 0.0;
    let mut xy = 0.0;
    let mut yy = 0.0;
    for p in points {
        let dx = p[0] - mx;
        let dy = p[1] - my;
        xx += dx * dx;
        xy += dx * dy;
        yy += dy * dy;
    }
    Cov2 { xx: xx / n + reg, xy: xy / n, yy: yy / n + reg }
}

/// One E-step: responsibilities (rows sum to 1) and the data log-likelihood.
fn e_step(
    points: &[[f64; 2]],
    weights: &[f64],
    means: &[[f64; 2]],
    covs: &[Cov2],
) -> (Array2<f64>, f64) {
    let n = points.len();
    let k = weights.len();
    let mut resp = Array2::zeros((n, k));
    let mut ll = 0.0;
    let mut logs = vec![0.0f64; k];
    for (i, p) in points.iter().enumerate() {
        for j in 0..k {
            logs[j] = weights[j].max(1e-300).ln() + covs[j].log_pdf(means[j], *p);
        }
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..k {
            let e = (logs[j] - m).exp();
            resp[[i, j]] = e;
            sum += e;
        }
        for j in 0..k {
            resp[[i, j]] /= sum;
        }
        ll += m + sum.ln();
    }
    (resp, ll)
}

/// Fit a full-covariance mixture by EM with k-means++ seeded means, uniform
/// initial weights, and a pooled initial covariance.
pub fn gmm_fit(points: &[[f64; 2]], k: usize, opts: &GmmOptions) -> Result<GmmModel> {
    check_points(points)?;
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Fit(format!("component count {k} outside [1, {n}]")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut means = kmeanspp_means(points, k, &mut rng);
    let mut weights = vec![1.0 / k as f64; k];
    let mut covs = vec![pooled_covariance(points, opts.reg); k];

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut prev = f64::NEG_INFINITY;

    for it in 0..opts.max_iter {
        let (resp, ll) = e_step(points, &weights, &means, &covs);
        history.push(ll);
        iterations = it + 1;
        if it > 0 && ll - prev < opts.tol {
            converged = true;
            break;
        }
        prev = ll;

        // M-step: closed-form updates with diagonal loading.
        for j in 0..k {
            let nj: f64 = (0..n).map(|i| resp[[i, j]]).sum();
            let nj_safe = nj.max(1e-12);
            let mut mx = 0.0;
            let mut my = 0.0;
            for (i, p) in points.iter().enumerate() {
                mx += resp[[i, j]] * p[0];
                my += resp[[i, j]] * p[1];
            }
            mx /= nj_safe;
            my /= nj_safe;
            let mut xx = 0.0;
            let mut xy = 0.0;
            let mut yy = 0.0;
            for (i, p) in points.iter().enumerate() {
                let dx = p[0] - mx;
                let dy = p[1] - my;
                xx += resp[[i, j]] * dx * dx;
                xy += resp[[i, j]] * dx * dy;
                yy += resp[[i, j]] * dy * dy;
            }
            weights[j] = nj / n as f64;
            means[j] = [mx, my];
            covs[j] = Cov2 {
                xx: xx / nj_safe + opts.reg,
                xy: xy / nj_safe,
                yy: yy / nj_safe + opts.reg,
            };
        }
    }

    let log_likelihood = *history.last().unwrap();
    Ok(GmmModel {
        k,
        weights,
        means,
        covariances: covs,
        log_likelihood,
        log_likelihood_history: history,
        converged,
        iterations,
        zone_labels: vec![Zone::Unassigned; k],
    })
}

/// Posterior component probabilities for each point; rows sum to 1.
pub fn responsibilities(model: &GmmModel, points: &[[f64; 2]]) -> Result<Array2<f64>> {
    check_points(points)?;
    if points.is_empty() {
        return Err(Error::Domain("no points".into()));
    }
    Ok(e_step(points, &model.weights, &model.means, &model.covariances).0)
}

/// Hard assignment: argmax responsibility, ties to the lower component index.
pub fn assign(model: &GmmModel, points: &[[f64; 2]]) -> Result<Vec<usize>> {
    let resp = responsibilities(model, points)?;
    Ok(resp
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Log-likelihood of a dataset under a fitted model.
pub fn log_likelihood(model: &GmmModel, points: &[[f64; 2]]) -> Result<f64> {
    check_points(points)?;
    Ok(e_step(points, &model.weights, &model.means, &model.covariances).1)
}

/// Free parameters of a k-component full-covariance 2-D mixture:
/// (k - 1) weights + 2k means + 3k covariance entries.
pub fn param_count(k: usize) -> usize {
    (k - 1) + 2 * k + 3 * k
}

/// `p ln(n) - 2 L` from the raw ingredients.
pub fn bic_from(p: usize, n: usize, log_lik: f64) -> f64 {
    p as f64 * (n as f64).ln() - 2.0 * log_lik
}

/// Bayesian Information Criterion of a model on a dataset; lower is better.
pub fn bic(model: &GmmModel, points: &[[f64; 2]]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Domain("BIC of an empty dataset".into()));
    }
    let ll = log_likelihood(model, points)?;
    Ok(bic_from(param_count(model.k), points.len(), ll))
}

#[derive(Debug, Clone, Copy)]
pub struct BicCandidate {
    pub k: usize,
    pub bic: f64,
    pub converged: bool,
}

/// BIC scores over a k range with the argmin among converged fits.
#[derive(Debug, Clone)]
pub struct BicScan {
    pub candidates: Vec<BicCandidate>,
    pub selected_k: usize,
}

/// Derive an independent stream for (seed, k, restart).
pub fn restart_seed(seed: u64, k: usize, restart: usize) -> u64 {
    crate::seeding::derive(seed, &[k as u64, restart as u64])
}

/// Fit the best-of-`restarts` model for one k.
pub fn gmm_fit_restarts(points: &[[f64; 2]], k: usize, opts: &GmmOptions, restarts: usize) -> Result<GmmModel> {
    let mut best: Option<GmmModel> = None;
    for r in 0..restarts.max(1) {
        let run = GmmOptions { seed: restart_seed(opts.seed, k, r), ..*opts };
        let model = gmm_fit(points, k, &run)?;
        let better = match &best {
            None => true,
            Some(b) => model.log_likelihood > b.log_likelihood,
        };
        if better {
            best = Some(model);
        }
    }
    Ok(best.unwrap())
}

/// Score every k in the range by BIC (best log-likelihood over restarts) and
/// select the argmin among converged candidates, ties toward smaller k.
pub fn select_k(
    points: &[[f64; 2]],
    k_range: std::ops::RangeInclusive<usize>,
    opts: &GmmOptions,
    restarts: usize,
) -> Result<BicScan> {
    if k_range.is_empty() {
        return Err(Error::Selection("empty k range".into()));
    }
    if *k_range.end() > points.len() {
        return Err(Error::Selection(format!(
            "max k {} exceeds the number of points {}",
            k_range.end(),
            points.len()
        )));
    }

    let mut candidates = Vec::new();
    for k in k_range {
        match gmm_fit_restarts(points, k, opts, restarts) {
            Ok(model) => {
                let score = bic(&model, points)?;
                candidates.push(BicCandidate { k, bic: score, converged: model.converged });
            }
            Err(_) => candidates.push(BicCandidate { k, bic: f64::INFINITY, converged: false }),
        }
    }

    let selected = candidates
        .iter()
        .filter(|c| c.converged)
        .fold(None::<BicCandidate>, |best, c| match best {
            None => Some(*c),
            Some(b) if c.bic < b.bic => Some(*c),
            Some(b) => Some(b),
        });
    match selected {
        Some(c) => Ok(BicScan { candidates, selected_k: c.k }),
        None => Err(Error::Selection("no candidate fit converged".into())),
    }
}

/// Name the three components low/moderate/high by their progression score
/// under the given axis orientation. Exact score ties leave the tied
/// components unassigned.
pub fn label_zones(model: &GmmModel, orientation: &Orientation) -> Result<GmmModel> {
    if model.k != 3 {
        return Err(Error::Labeling(format!("zone labeling needs k = 3, got {}", model.k)));
    }
    let scores: Vec<f64> = model.means.iter().map(|m| orientation.progression_score(*m)).collect();

    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut labels = vec![Zone::Unassigned; 3];
    let rank_zone = [Zone::Low, Zone::Moderate, Zone::High];
    for (rank, &comp) in order.iter().enumerate() {
        let tied = (0..3).any(|other| other != comp && scores[other] == scores[comp]);
        if !tied {
            labels[comp] = rank_zone[rank];
        }
    }

    let mut out = model.clone();
    out.zone_labels = labels;
    Ok(out)
}

/// Persist one component per line:
/// `weight,mean_x,mean_y,cov_xx,cov_xy,cov_yy,zone`.
pub fn save_gmm(model: &GmmModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    for j in 0..model.k {
        let c = model.covariances[j];
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            model.weights[j],
            model.means[j][0],
            model.means[j][1],
            c.xx,
            c.xy,
            c.yy,
            model.zone_labels[j].token()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a model persisted by [`save_gmm`]. Likelihood fields are not stored
/// and come back empty.
pub fn load_gmm(path: &Path) -> Result<GmmModel> {
    let text = std::fs::read_to_string(path)?;
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut covs = Vec::new();
    let mut zones = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(Error::Parse { line: i + 1, msg: "expected 7 fields per component".into() });
        }
        let nums: std::result::Result<Vec<f64>, _> = parts[..6].iter().map(|s| s.parse()).collect();
        let nums = nums.map_err(|e| Error::Parse { line: i + 1, msg: format!("{e}") })?;
        weights.push(nums[0]);
        means.push([nums[1], nums[2]]);
        covs.push(Cov2 { xx: nums[3], xy: nums[4], yy: nums[5] });
        zones.push(Zone::from_token(parts[6]).ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("unknown zone `{}`", parts[6]),
        })?);
    }
    if weights.is_empty() {
        return Err(Error::Parse { line: 0, msg: "empty mixture file".into() });
    }
    Ok(GmmModel {
        k: weights.len(),
        weights,
        means,
        covariances: covs,
        log_likelihood: f64::NAN,
        log_likelihood_history: Vec::new(),
        converged: true,
        iterations: 0,
        zone_labels: zones,
    })
}
