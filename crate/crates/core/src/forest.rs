//! From-scratch random forest: CART trees grown on Gini impurity decrease,
//! bootstrap aggregation with out-of-bag accuracy, stratified k-fold CV,
//! and grid search over the forest hyperparameters.
//!
//! Determinism contract: every tree draws from a ChaCha stream selected by
//! its index, and all reductions run in task order, so training is
//! bit-identical at any parallelism level.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeding;

/// Gini impurity `1 - sum((c_i / n)^2)` of a class-count vector.
pub fn gini(class_counts: &[u32]) -> Result<f64> {
    let total: u64 = class_counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(Error::Domain("gini of all-zero counts".into()));
    }
    Ok(gini_unchecked(class_counts, total as f64))
}

fn gini_unchecked(class_counts: &[u32], total: f64) -> f64 {
    1.0 - class_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { counts: Vec<u32> },
}

/// Tree-level training constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// None = unlimited. The root sits at depth 0, so `Some(0)` forces a
    /// single leaf.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features sampled (without replacement) per split.
    pub mtry: usize,
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
    pub params: TreeParams,
}

impl DecisionTree {
    pub fn leaf_counts(&self, row: ArrayView1<'_, f64>) -> &[u32] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the reached leaf, ties to the lower class index.
    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> usize {
        argmax_u32(self.leaf_counts(row))
    }
}

fn argmax_u32(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct TreeBuilder<'a> {
    /// Feature-major copy of the design (d x n) so split sweeps run on
    /// contiguous memory.
    xt: &'a Array2<f64>,
    y: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    nodes: Vec<Node>,
    /// (value, label) scratch reused across nodes.
    scratch: Vec<(f64, u32)>,
}

impl<'a> TreeBuilder<'a> {
    fn class_counts(&self, indices: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes];
        for &i in indices {
            counts[self.y[i]] += 1;
        }
        counts
    }

    /// Best (feature, threshold) among the candidate features, or None when
    /// no split strictly reduces impurity.
    fn best_split(&mut self, indices: &[usize], features: &[usize], parent_gini: f64) -> Option<(usize, f64)> {
        let n = indices.len() as f64;
        let msl = self.params.min_samples_leaf;
        let mut best: Option<(usize, f64, f64)> = None;

        let mut scratch = std::mem::take(&mut self.scratch);
        for &f in features {
            let column = self.xt.row(f);
            scratch.clear();
            scratch.extend(indices.iter().map(|&i| (column[i], self.y[i] as u32)));
            scratch.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let mut left = vec![0u32; self.n_classes];
            let mut right = vec![0u32; self.n_classes];
            for &(_, label) in scratch.iter() {
                right[label as usize] += 1;
            }
            for pos in 0..scratch.len() - 1 {
                let (v, label) = scratch[pos];
                left[label as usize] += 1;
                right[label as usize] -= 1;
                let v_next = scratch[pos + 1].0;
                if v == v_next {
                    continue;
                }
                let nl = pos + 1;
                let nr = scratch.len() - nl;
                if nl < msl || nr < msl {
                    continue;
                }
                let weighted = (nl as f64 / n) * gini_unchecked(&left, nl as f64)
                    + (nr as f64 / n) * gini_unchecked(&right, nr as f64);
                let decrease = parent_gini - weighted;
                if decrease > 1e-12 && best.map_or(true, |(_, _, d)| decrease > d) {
                    best = Some((f, 0.5 * (v + v_next), decrease));
                }
            }
        }
        self.scratch = scratch;
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&mut self, indices: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.class_counts(&indices);
        let total = indices.len() as f64;
        let parent_gini = gini_unchecked(&counts, total);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|m| depth >= m);
        let too_small = indices.len() < 2 * self.params.min_samples_leaf.max(1);

        if pure || depth_capped || too_small {
            self.nodes.push(Node::Leaf { counts });
            return self.nodes.len() - 1;
        }

        let d = self.xt.nrows();
        // Evaluate candidates in ascending index order; when mtry covers all
        // features no randomness is consumed, so appending columns that admit
        // no split leaves the tree unchanged.
        let features: Vec<usize> = if self.params.mtry >= d {
            (0..d).collect()
        } else {
            let mut sample = rand::seq::index::sample(rng, d, self.params.mtry).into_vec();
            sample.sort_unstable();
            sample
        };

        match self.best_split(&indices, &features, parent_gini) {
            None => {
                self.nodes.push(Node::Leaf { counts });
                self.nodes.len() - 1
            }
            Some((feature, threshold)) => {
                let column = self.xt.row(feature);
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                    indices.into_iter().partition(|&i| column[i] <= threshold);
                let slot = self.nodes.len();
                self.nodes.push(Node::Leaf { counts: vec![] }); // placeholder
                let left = self.grow(left_idx, depth + 1, rng);
                let right = self.grow(right_idx, depth + 1, rng);
                self.nodes[slot] = Node::Split { feature, threshold, left, right };
                slot
            }
        }
    }
}

fn tree_fit_transposed(
    xt: &Array2<f64>,
    y: &[usize],
    indices: &[usize],
    n_classes: usize,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let mut builder = TreeBuilder {
        xt,
        y,
        n_classes,
        params: *params,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(indices.len()),
    };
    builder.grow(indices.to_vec(), 0, rng);
    DecisionTree { nodes: builder.nodes, n_classes, params: *params }
}

fn check_tree_inputs(x: &Array2<f64>, y: &[usize], n_classes: usize, params: &TreeParams) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Domain(format!("label {bad} outside the {n_classes}-class set")));
    }
    if params.mtry == 0 || params.mtry > x.ncols() {
        return Err(Error::Domain(format!(
            "mtry {} outside [1, {}]",
            params.mtry,
            x.ncols()
        )));
    }
    Ok(())
}

/// Grow one CART tree on the rows selected by `indices` (repeats allowed).
pub fn tree_fit_on(
    x: &Array2<f64>,
    y: &[usize],
    indices: &[usize],
    n_classes: usize,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Result<DecisionTree> {
    if indices.is_empty() {
        return Err(Error::Fit("cannot grow a tree on zero samples".into()));
    }
    check_tree_inputs(x, y, n_classes, params)?;
    let xt = x.t().as_standard_layout().to_owned();
    Ok(tree_fit_transposed(&xt, y, indices, n_classes, params, rng))
}

/// Grow one CART tree on all rows.
pub fn tree_fit(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Result<DecisionTree> {
    let all: Vec<usize> = (0..x.nrows()).collect();
    tree_fit_on(x, y, &all, n_classes, params, rng)
}

/// Forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub mtry: usize,
    pub min_samples_leaf: usize,
}

impl ForestParams {
    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            mtry: self.mtry,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub params: ForestParams,
    pub classes: Vec<String>,
    pub n_features: usize,
    pub oob_accuracy: Option<f64>,
    pub seed: u64,
}

/// Train `n_trees` CART trees, each on an n-sample bootstrap drawn from its
/// own (seed, tree index) stream, and estimate out-of-bag accuracy.
pub fn forest_fit(
    x: &Array2<f64>,
    y: &[usize],
    classes: &[String],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Fit(format!("need at least 2 samples, got {n}")));
    }
    if x.ncols() == 0 {
        return Err(Error::Fit("design matrix has no columns".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Domain("n_trees must be at least 1".into()));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("{n} rows vs {} labels", y.len())));
    }
    let n_classes = classes.len();
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Domain(format!("label {bad} outside the {n_classes}-class set")));
    }
    let mut present = vec![false; n_classes];
    for &c in y {
        present[c] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::DegenerateTarget(
            "training labels contain a single class".into(),
        ));
    }

    check_tree_inputs(x, y, n_classes, &params.tree_params())?;
    let xt = x.t().as_standard_layout().to_owned();
    let fits: Vec<(DecisionTree, Vec<bool>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            for &i in &bootstrap {
                in_bag[i] = true;
            }
            let tree = tree_fit_transposed(&xt, y, &bootstrap, n_classes, &params.tree_params(), &mut rng);
            (tree, in_bag)
        })
        .collect();

    // Out-of-bag vote per sample over the trees that never saw it.
    let mut votes = vec![vec![0u32; n_classes]; n];
    for (tree, in_bag) in &fits {
        for i in 0..n {
            if !in_bag[i] {
                votes[i][tree.predict_row(x.row(i))] += 1;
            }
        }
    }
    let mut scored = 0usize;
    let mut correct = 0usize;
    for (i, vote) in votes.iter().enumerate() {
        if vote.iter().any(|&v| v > 0) {
            scored += 1;
            if argmax_u32(vote) == y[i] {
                correct += 1;
            }
        }
    }
    let oob_accuracy = (scored > 0).then(|| correct as f64 / scored as f64);

    Ok(ForestModel {
        trees: fits.into_iter().map(|(t, _)| t).collect(),
        params: *params,
        classes: classes.to_vec(),
        n_features: x.ncols(),
        oob_accuracy,
        seed,
    })
}

fn check_predict_shape(model: &ForestModel, x: &Array2<f64>) -> Result<()> {
    if x.ncols() != model.n_features {
        return Err(Error::Shape(format!(
            "probe has {} features, model was trained on {}",
            x.ncols(),
            model.n_features
        )));
    }
    Ok(())
}

/// Per-row tree-vote counts.
pub fn forest_vote_counts(model: &ForestModel, x: &Array2<f64>) -> Result<Array2<u32>> {
    check_predict_shape(model, x)?;
    let mut counts = Array2::zeros((x.nrows(), model.classes.len()));
    for tree in &model.trees {
        for (i, row) in x.rows().into_iter().enumerate() {
            counts[[i, tree.predict_row(row)]] += 1;
        }
    }
    Ok(counts)
}

/// Vote fractions per class; each row sums to 1.
pub fn forest_predict_proba(model: &ForestModel, x: &Array2<f64>) -> Result<Array2<f64>> {
    let counts = forest_vote_counts(model, x)?;
    let n_trees = model.trees.len() as f64;
    Ok(counts.mapv(|c| c as f64 / n_trees))
}

/// Hard predictions: argmax vote count, ties to the lower class index.
pub fn forest_predict(model: &ForestModel, x: &Array2<f64>) -> Result<Vec<usize>> {
    let counts = forest_vote_counts(model, x)?;
    Ok(counts
        .rows()
        .into_iter()
        .map(|row| argmax_u32(row.as_slice().unwrap()))
        .collect())
}

/// Anything that scores class membership; lets the evaluation harness swap
/// the forest for a baseline.
pub trait Classifier: Send + Sync {
    fn classes(&self) -> &[String];
    fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>>;

    fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        let proba = self.predict_proba(x)?;
        Ok(proba
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
}

impl Classifier for ForestModel {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        forest_predict_proba(self, x)
    }
}

/// Baseline that always scores classes by their training frequency.
#[derive(Debug, Clone)]
pub struct MajorityClass {
    pub frequencies: Vec<f64>,
    pub classes: Vec<String>,
}

pub fn majority_fit(y: &[usize], classes: &[String]) -> Result<MajorityClass> {
    if y.is_empty() {
        return Err(Error::Fit("cannot fit a baseline on zero samples".into()));
    }
    let mut counts = vec![0usize; classes.len()];
    for &c in y {
        if c >= classes.len() {
            return Err(Error::Domain(format!("label {c} outside the class set")));
        }
        counts[c] += 1;
    }
    let n = y.len() as f64;
    Ok(MajorityClass {
        frequencies: counts.into_iter().map(|c| c as f64 / n).collect(),
        classes: classes.to_vec(),
    })
}

impl Classifier for MajorityClass {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.frequencies.len()));
        for mut row in out.rows_mut() {
            for (j, &f) in self.frequencies.iter().enumerate() {
                row[j] = f;
            }
        }
        Ok(out)
    }
}

/// Split indices into k folds with per-class counts differing by at most one:
/// a seeded shuffle within each class followed by round-robin assignment.
/// Depends only on the labels and the seed.
pub fn stratified_kfold(y: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Domain(format!("need at least 2 folds, got {k}")));
    }
    let n_classes = y.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (c, indices) in by_class.iter_mut().enumerate() {
        if indices.is_empty() {
            continue;
        }
        if indices.len() < k {
            return Err(Error::Stratification(format!(
                "class {c} has {} members, fewer than {k} folds",
                indices.len()
            )));
        }
        use rand::seq::SliceRandom;
        indices.shuffle(&mut rng);
        for (i, &idx) in indices.iter().enumerate() {
            folds[i % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Hyperparameter grid; every option list must be non-empty.
#[derive(Debug, Clone)]
pub struct HyperGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub mtry: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
}

impl HyperGrid {
    /// Default grid; `mtry` options are ceil(sqrt(d)) and ceil(d/3).
    pub fn default_for(d: usize) -> Self {
        let sqrt = (d as f64).sqrt().ceil() as usize;
        let third = (d as f64 / 3.0).ceil() as usize;
        let mut mtry = vec![sqrt.max(1).min(d), third.max(1).min(d)];
        mtry.dedup();
        HyperGrid {
            n_trees: vec![100, 300],
            max_depth: vec![Some(8), Some(16), None],
            mtry,
            min_samples_leaf: vec![1, 5],
        }
    }

    pub fn expand(&self) -> Result<Vec<ForestParams>> {
        if self.n_trees.is_empty()
            || self.max_depth.is_empty()
            || self.mtry.is_empty()
            || self.min_samples_leaf.is_empty()
        {
            return Err(Error::Domain("hyperparameter grid has an empty option list".into()));
        }
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &mtry in &self.mtry {
                    for &min_samples_leaf in &self.min_samples_leaf {
                        out.push(ForestParams { n_trees, max_depth, mtry, min_samples_leaf });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: ForestParams,
    /// Mean CV accuracy per grid point, in expansion order.
    pub scores: Vec<(ForestParams, f64)>,
}

/// Seed for the forest trained with fold `fold` held out (shared across grid
/// points so every config sees the same training randomness).
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seeding::derive(seed, &[0xF0_1D, fold as u64])
}

fn train_rows(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut out_mask = vec![false; n];
    for &i in held_out {
        out_mask[i] = true;
    }
    (0..n).filter(|&i| !out_mask[i]).collect()
}

fn take_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (r, &i) in rows.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

/// Mean k-fold CV accuracy for every grid point over the same folds,
/// returning the argmax config; ties break toward smaller n_trees, then
/// smaller max_depth, then smaller mtry and min_samples_leaf.
pub fn grid_search_cv(
    x: &Array2<f64>,
    y: &[usize],
    classes: &[String],
    grid: &HyperGrid,
    k: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    let configs = grid.expand()?;
    let folds = stratified_kfold(y, k, seed)?;
    let n = x.nrows();

    let mut scores = Vec::with_capacity(configs.len());
    for params in &configs {
        let mut acc_sum = 0.0;
        for (f, held_out) in folds.iter().enumerate() {
            let train = train_rows(n, held_out);
            let x_train = take_rows(x, &train);
            let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let model = forest_fit(&x_train, &y_train, classes, params, fold_seed(seed, f))?;
            let x_test = take_rows(x, held_out);
            let pred = forest_predict(&model, &x_test)?;
            let correct = held_out
                .iter()
                .zip(&pred)
                .filter(|(&i, &p)| y[i] == p)
                .count();
            acc_sum += correct as f64 / held_out.len() as f64;
        }
        scores.push((*params, acc_sum / folds.len() as f64));
    }

    let depth_key = |d: Option<usize>| d.unwrap_or(usize::MAX);
    let mut best = 0;
    for i in 1..scores.len() {
        let (pi, ai) = &scores[i];
        let (pb, ab) = &scores[best];
        let better = ai > ab
            || (ai == ab
                && (pi.n_trees, depth_key(pi.max_depth), pi.mtry, pi.min_samples_leaf)
                    < (pb.n_trees, depth_key(pb.max_depth), pb.mtry, pb.min_samples_leaf));
        if better {
            best = i;
        }
    }
    Ok(GridSearchResult { best: scores[best].0, scores })
}

fn depth_token(d: Option<usize>) -> String {
    d.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
}

fn parse_depth(tok: &str) -> Result<Option<usize>> {
    if tok == "none" {
        Ok(None)
    } else {
        tok.parse()
            .map(Some)
            .map_err(|_| Error::Parse { line: 0, msg: format!("bad max_depth `{tok}`") })
    }
}

/// Persist a forest as structured text: a header with seed, params and class
/// order, then per-tree node lists.
pub fn save_forest(model: &ForestModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("seed,{}\n", model.seed));
    out.push_str(&format!("n_trees,{}\n", model.params.n_trees));
    out.push_str(&format!("max_depth,{}\n", depth_token(model.params.max_depth)));
    out.push_str(&format!("mtry,{}\n", model.params.mtry));
    out.push_str(&format!("min_samples_leaf,{}\n", model.params.min_samples_leaf));
    out.push_str(&format!("n_features,{}\n", model.n_features));
    out.push_str(&format!("classes,{}\n", model.classes.join(",")));
    out.push_str(&format!(
        "oob_accuracy,{}\n",
        model.oob_accuracy.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
    ));
    for (t, tree) in model.trees.iter().enumerate() {
        out.push_str(&format!("tree,{t},{}\n", tree.nodes.len()));
        for (i, node) in tree.nodes.iter().enumerate() {
            match node {
                Node::Split { feature, threshold, left, right } => {
                    out.push_str(&format!("node,{i},split,{feature},{threshold},{left},{right}\n"));
                }
                Node::Leaf { counts } => {
                    let cells: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
                    out.push_str(&format!("node,{i},leaf,{}\n", cells.join(",")));
                }
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_forest(path: &Path) -> Result<ForestModel> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().peekable();

    let mut header = std::collections::HashMap::new();
    while let Some(&(_, line)) = lines.peek() {
        if line.starts_with("tree,") {
            break;
        }
        let (ln, line) = lines.next().unwrap();
        let (key, value) = line.split_once(',').ok_or(Error::Parse {
            line: ln + 1,
            msg: "expected `key,value`".into(),
        })?;
        header.insert(key.to_string(), value.to_string());
    }

    let get = |key: &str| -> Result<String> {
        header
            .get(key)
            .cloned()
            .ok_or_else(|| Error::Parse { line: 0, msg: format!("missing header `{key}`") })
    };
    let parse_num = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Parse { line: 0, msg: format!("bad header `{key}`") })
    };

    let seed: u64 = get("seed")?
        .parse()
        .map_err(|_| Error::Parse { line: 0, msg: "bad header `seed`".into() })?;
    let params = ForestParams {
        n_trees: parse_num("n_trees")?,
        max_depth: parse_depth(&get("max_depth")?)?,
        mtry: parse_num("mtry")?,
        min_samples_leaf: parse_num("min_samples_leaf")?,
    };
    let n_features = parse_num("n_features")?;
    let classes: Vec<String> = get("classes")?.split(',').map(str::to_string).collect();
    let oob_tok = get("oob_accuracy")?;
    let oob_accuracy = if oob_tok == "none" {
        None
    } else {
        Some(oob_tok.parse().map_err(|_| Error::Parse { line: 0, msg: "bad oob_accuracy".into() })?)
    };

    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        mtry: params.mtry,
    };
    let mut trees = Vec::new();
    let mut current: Option<Vec<Node>> = None;
    for (ln, line) in lines {
        let line_no = ln + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("tree,") {
            if let Some(nodes) = current.take() {
                trees.push(DecisionTree { nodes, n_classes: classes.len(), params: tree_params });
            }
            let _ = rest;
            current = Some(Vec::new());
        } else if let Some(rest) = line.strip_prefix("node,") {
            let parts: Vec<&str> = rest.split(',').collect();
            let nodes = current
                .as_mut()
                .ok_or(Error::Parse { line: line_no, msg: "node before tree header".into() })?;
            match parts.get(1) {
                Some(&"split") if parts.len() == 6 => {
                    nodes.push(Node::Split {
                        feature: parts[2].parse().map_err(|_| bad_node(line_no))?,
                        threshold: parts[3].parse().map_err(|_| bad_node(line_no))?,
                        left: parts[4].parse().map_err(|_| bad_node(line_no))?,
                        right: parts[5].parse().map_err(|_| bad_node(line_no))?,
                    });
                }
                Some(&"leaf") if parts.len() >= 3 => {
                    let counts: std::result::Result<Vec<u32>, _> =
                        parts[2..].iter().map(|s| s.parse()).collect();
                    nodes.push(Node::Leaf { counts: counts.map_err(|_| bad_node(line_no))? });
                }
                _ => return Err(bad_node(line_no)),
            }
        } else {
            return Err(Error::Parse { line: line_no, msg: format!("unexpected line `{line}`") });
        }
    }
    if let Some(nodes) = current.take() {
        trees.push(DecisionTree { nodes, n_classes: classes.len(), params: tree_params });
    }
    if trees.is_empty() {
        return Err(Error::Parse { line: 0, msg: "forest file has no trees".into() });
    }
    Ok(ForestModel { trees, params, classes, n_features, oob_accuracy, seed })
}

fn bad_node(line: usize) -> Error {
    Error::Parse { line, msg: "malformed node line".into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn classes2() -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5, 0, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[1, 1]).unwrap(), 0.5);
        let expected = 1.0 - 3.0 * (1.0f64 / 3.0).powi(2);
        assert!((gini(&[2, 2, 2]).unwrap() - expected).abs() < 1e-15);
        assert!(gini(&[0, 0]).is_err());
    }

    #[test]
    fn single_class_data_yields_single_leaf() {
        let x = arr2(&[[0.0], [1.0], [2.0]]);
        let y = vec![1, 1, 1];
        let tree = tree_fit(&x, &y, 2, &TreeParams { max_depth: None, min_samples_leaf: 1, mtry: 1 }, &mut rng(0)).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert!(matches!(tree.nodes[0], Node::Leaf { .. }));
    }

    #[test]
    fn one_dimensional_split_lands_at_midpoint() {
        let x = arr2(&[[0.0], [1.0], [2.0], [3.0]]);
        let y = vec![0, 0, 1, 1];
        let tree = tree_fit(&x, &y, 2, &TreeParams { max_depth: None, min_samples_leaf: 1, mtry: 1 }, &mut rng(0)).unwrap();
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 1.5);
            }
            other => panic!("expected a root split, got {other:?}"),
        }
        for (i, &label) in y.iter().enumerate() {
            assert_eq!(tree.predict_row(x.row(i)), label);
        }
    }

    #[test]
    fn zero_depth_gives_majority_leaf() {
        let x = arr2(&[[0.0], [1.0], [2.0]]);
        let y = vec![0, 1, 1];
        let tree = tree_fit(&x, &y, 2, &TreeParams { max_depth: Some(0), min_samples_leaf: 1, mtry: 1 }, &mut rng(0)).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict_row(x.row(0)), 1);
    }

    fn separable_data(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut r = rng(seed);
        let mut x = Array2::zeros((n, 1));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % 2;
            // classes live on opposite sides of 0 with a clean margin
            let v = if label == 0 { -1.0 - r.random::<f64>() } else { 1.0 + r.random::<f64>() };
            x[[i, 0]] = v;
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separable_data_scores_high_oob() {
        let (x, y) = separable_data(200, 1);
        let params = ForestParams { n_trees: 50, max_depth: None, mtry: 1, min_samples_leaf: 1 };
        let model = forest_fit(&x, &y, &classes2(), &params, 7).unwrap();
        assert!(model.oob_accuracy.unwrap() >= 0.95, "oob {:?}", model.oob_accuracy);
    }

    #[test]
    fn same_seed_gives_identical_predictions() {
        let (x, y) = separable_data(80, 2);
        let params = ForestParams { n_trees: 20, max_depth: Some(8), mtry: 1, min_samples_leaf: 1 };
        let a = forest_fit(&x, &y, &classes2(), &params, 11).unwrap();
        let b = forest_fit(&x, &y, &classes2(), &params, 11).unwrap();
        let probe = arr2(&[[-0.5], [0.5], [2.0], [-3.0]]);
        assert_eq!(
            forest_predict(&a, &probe).unwrap(),
            forest_predict(&b, &probe).unwrap()
        );
        assert_eq!(a.oob_accuracy, b.oob_accuracy);
    }

    #[test]
    fn single_tree_forest_matches_its_tree() {
        let (x, y) = separable_data(60, 3);
        let params = ForestParams { n_trees: 1, max_depth: None, mtry: 1, min_samples_leaf: 1 };
        let model = forest_fit(&x, &y, &classes2(), &params, 5).unwrap();
        let probe = arr2(&[[-2.0], [2.0]]);
        let forest_pred = forest_predict(&model, &probe).unwrap();
        let tree_pred: Vec<usize> = probe.rows().into_iter().map(|r| model.trees[0].predict_row(r)).collect();
        assert_eq!(forest_pred, tree_pred);
    }

    #[test]
    fn vote_fractions_sum_to_one_and_split_evenly() {
        // Hand-build a 2-tree forest that disagrees on everything.
        let leaf_a = DecisionTree {
            nodes: vec![Node::Leaf { counts: vec![3, 0, 0, 0] }],
            n_classes: 4,
            params: TreeParams { max_depth: None, min_samples_leaf: 1, mtry: 1 },
        };
        let leaf_b = DecisionTree {
            nodes: vec![Node::Leaf { counts: vec![0, 3, 0, 0] }],
            n_classes: 4,
            params: TreeParams { max_depth: None, min_samples_leaf: 1, mtry: 1 },
        };
        let model = ForestModel {
            trees: vec![leaf_a, leaf_b],
            params: ForestParams { n_trees: 2, max_depth: None, mtry: 1, min_samples_leaf: 1 },
            classes: vec!["Control".into(), "Low".into(), "Moderate".into(), "High".into()],
            n_features: 1,
            oob_accuracy: None,
            seed: 0,
        };
        let proba = forest_predict_proba(&model, &arr2(&[[0.0]])).unwrap();
        assert_eq!(proba.row(0).to_vec(), vec![0.5, 0.5, 0.0, 0.0]);
        assert!((proba.row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unanimous_trees_give_one_hot_rows() {
        let (x, y) = separable_data(100, 4);
        let params = ForestParams { n_trees: 30, max_depth: None, mtry: 1, min_samples_leaf: 1 };
        let model = forest_fit(&x, &y, &classes2(), &params, 13).unwrap();
        let proba = forest_predict_proba(&model, &arr2(&[[-5.0], [5.0]])).unwrap();
        assert_eq!(proba.row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(proba.row(1).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn training_points_of_a_deep_forest_recover_their_labels() {
        let (x, y) = separable_data(120, 5);
        let params = ForestParams { n_trees: 40, max_depth: None, mtry: 1, min_samples_leaf: 1 };
        let model = forest_fit(&x, &y, &classes2(), &params, 3).unwrap();
        let pred = forest_predict(&model, &x).unwrap();
        let agree = pred.iter().zip(&y).filter(|(a, b)| a == b).count();
        assert!(agree as f64 / y.len() as f64 > 0.99);
    }

    #[test]
    fn degenerate_single_class_target_is_rejected() {
        let x = arr2(&[[0.0], [1.0]]);
        let y = vec![0, 0];
        let params = ForestParams { n_trees: 5, max_depth: None, mtry: 1, min_samples_leaf: 1 };
        assert!(matches!(
            forest_fit(&x, &y, &classes2(), &params, 0).unwrap_err(),
            Error::DegenerateTarget(_)
        ));
    }

    #[test]
    fn constant_features_change_nothing_when_all_features_are_seen() {
        let (x, y) = separable_data(60, 6);
        let mut extended = Array2::zeros((x.nrows(), 2));
        for i in 0..x.nrows() {
            extended[[i, 0]] = x[[i, 0]];
            extended[[i, 1]] = 7.5; // constant: admits no midpoint threshold
        }
        let base = forest_fit(
            &x,
            &y,
            &classes2(),
            &ForestParams { n_trees: 15, max_depth: None, mtry: 1, min_samples_leaf: 1 },
            9,
        )
        .unwrap();
        let wide = forest_fit(
            &extended,
            &y,
            &classes2(),
            &ForestParams { n_trees: 15, max_depth: None, mtry: 2, min_samples_leaf: 1 },
            9,
        )
        .unwrap();
        let probe = arr2(&[[-1.5], [1.5], [0.1], [-0.1]]);
        let probe_wide = arr2(&[[-1.5, 7.5], [1.5, 7.5], [0.1, 7.5], [-0.1, 7.5]]);
        assert_eq!(
            forest_predict(&base, &probe).unwrap(),
            forest_predict(&wide, &probe_wide).unwrap()
        );
    }

    #[test]
    fn bootstrap_inclusion_rate_is_near_632() {
        let n = 100;
        let mut freq = vec![0u32; n];
        for t in 0..1000u64 {
            let mut r = ChaCha8Rng::seed_from_u64(77);
            r.set_stream(t);
            let mut in_bag = vec![false; n];
            for _ in 0..n {
                in_bag[r.random_range(0..n)] = true;
            }
            for (i, &b) in in_bag.iter().enumerate() {
                if b {
                    freq[i] += 1;
                }
            }
        }
        for (i, &f) in freq.iter().enumerate() {
            let rate = f as f64 / 1000.0;
            assert!((0.58..=0.68).contains(&rate), "index {i} rate {rate}");
        }
    }

    #[test]
    fn stratified_folds_balance_classes() {
        // 5/5 split over 5 folds: exactly one of each class per fold.
        let y = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let folds = stratified_kfold(&y, 5, 1).unwrap();
        for fold in &folds {
            assert_eq!(fold.len(), 2);
            assert_eq!(fold.iter().filter(|&&i| y[i] == 0).count(), 1);
            assert_eq!(fold.iter().filter(|&&i| y[i] == 1).count(), 1);
        }

        // 7/3 split over 3 folds: the 3-member class lands once per fold.
        let y = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let folds = stratified_kfold(&y, 3, 2).unwrap();
        for fold in &folds {
            assert_eq!(fold.iter().filter(|&&i| y[i] == 1).count(), 1);
        }
    }

    #[test]
    fn folds_partition_all_indices() {
        let y: Vec<usize> = (0..57).map(|i| i % 3).collect();
        let folds = stratified_kfold(&y, 5, 9).unwrap();
        let mut seen = vec![false; y.len()];
        for fold in &folds {
            for &i in fold {
                assert!(!seen[i], "index {i} appears twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn folds_depend_only_on_labels_and_seed() {
        let y = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        assert_eq!(stratified_kfold(&y, 2, 3).unwrap(), stratified_kfold(&y, 2, 3).unwrap());
    }

    #[test]
    fn small_class_fails_stratification() {
        let y = vec![0, 0, 0, 0, 1];
        assert!(matches!(
            stratified_kfold(&y, 3, 0).unwrap_err(),
            Error::Stratification(_)
        ));
    }

    #[test]
    fn grid_search_single_point_returns_it() {
        let (x, y) = separable_data(40, 7);
        let grid = HyperGrid {
            n_trees: vec![10],
            max_depth: vec![Some(4)],
            mtry: vec![1],
            min_samples_leaf: vec![1],
        };
        let result = grid_search_cv(&x, &y, &classes2(), &grid, 4, 21).unwrap();
        assert_eq!(result.best, grid.expand().unwrap()[0]);
        assert_eq!(result.scores.len(), 1);
    }

    #[test]
    fn grid_search_prefers_the_strong_config() {
        let (x, y) = separable_data(80, 8);
        let grid = HyperGrid {
            n_trees: vec![20],
            max_depth: vec![Some(0), None],
            mtry: vec![1],
            min_samples_leaf: vec![1],
        };
        let result = grid_search_cv(&x, &y, &classes2(), &grid, 4, 31).unwrap();
        assert_eq!(result.best.max_depth, None);
        let degenerate = result.scores.iter().find(|(p, _)| p.max_depth == Some(0)).unwrap();
        let strong = result.scores.iter().find(|(p, _)| p.max_depth.is_none()).unwrap();
        assert!(strong.1 > degenerate.1);
    }

    #[test]
    fn grid_search_is_deterministic() {
        let (x, y) = separable_data(50, 9);
        let grid = HyperGrid {
            n_trees: vec![5, 10],
            max_depth: vec![Some(4), None],
            mtry: vec![1],
            min_samples_leaf: vec![1, 2],
        };
        let a = grid_search_cv(&x, &y, &classes2(), &grid, 5, 17).unwrap();
        let b = grid_search_cv(&x, &y, &classes2(), &grid, 5, 17).unwrap();
        assert_eq!(a.best, b.best);
        let sa: Vec<f64> = a.scores.iter().map(|(_, s)| *s).collect();
        let sb: Vec<f64> = b.scores.iter().map(|(_, s)| *s).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn majority_baseline_scores_training_frequencies() {
        let y = vec![0, 0, 0, 1];
        let model = majority_fit(&y, &classes2()).unwrap();
        let proba = model.predict_proba(&arr2(&[[1.0], [2.0]])).unwrap();
        assert_eq!(proba.row(0).to_vec(), vec![0.75, 0.25]);
        assert_eq!(model.predict(&arr2(&[[9.0]])).unwrap(), vec![0]);
    }

    #[test]
    fn forest_round_trips_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.txt");
        let (x, y) = separable_data(60, 10);
        let params = ForestParams { n_trees: 8, max_depth: Some(6), mtry: 1, min_samples_leaf: 1 };
        let model = forest_fit(&x, &y, &classes2(), &params, 23).unwrap();
        save_forest(&model, &path).unwrap();
        let loaded = load_forest(&path).unwrap();
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.classes, model.classes);
        let probe = arr2(&[[-2.0], [-0.2], [0.2], [2.0]]);
        assert_eq!(
            forest_predict(&loaded, &probe).unwrap(),
            forest_predict(&model, &probe).unwrap()
        );
    }
}
