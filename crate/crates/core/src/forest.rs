//! Random forest classifier (Gini CART trees on bootstrap samples with
//! per-node feature subsampling), plus exhaustive grid search over tree
//! count and depth scored by k-fold cross-validation.
//!
//! Every node draws its feature subset from a seed derived from its
//! parent's seed and its side, so a tree's shape above depth `L` does not
//! depend on the depth limit and the first `n` trees of a forest do not
//! depend on the tree count. A forest fit with `(n, L)` is therefore
//! identical to the first `n` trees of a larger forest pruned at depth `L`
//! ([`ForestModel::truncated`]); grid search relies on this to score every
//! configuration of a fold from one grown ensemble.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::eval::{log_loss, micro_metrics, ConfusionMatrix};
use crate::dataset::TrainingSet;
use crate::fusion::Label;
use crate::rng::{derive, mix64, rng_from};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeOptions {
    /// Features examined per node; `None` examines all of them in order.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl TreeOptions {
    /// `⌈√d⌉` features per node on bootstrap samples.
    pub fn for_dim(dim: usize) -> Self {
        TreeOptions {
            max_features: Some((dim as f64).sqrt().ceil() as usize),
            bootstrap: true,
        }
    }

    /// Exhaustive deterministic CART: every feature, every sample.
    pub fn exhaustive() -> Self {
        TreeOptions {
            max_features: None,
            bootstrap: false,
        }
    }
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions::for_dim(crate::features::FEATURE_LEN)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        counts: [u32; 3],
    },
    Leaf {
        counts: [u32; 3],
    },
}

impl Node {
    pub fn counts(&self) -> &[u32; 3] {
        match self {
            Node::Split { counts, .. } | Node::Leaf { counts } => counts,
        }
    }
}

/// Majority class of a histogram, lower `X` on ties.
fn majority(counts: &[u32; 3]) -> Label {
    let mut best = 0;
    for c in 1..3 {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    Label::ALL[best]
}

/// A decision tree stored as a preorder node list; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Class histogram of the node reached by `x`, stopping at `depth_limit`.
    pub fn leaf_counts(&self, x: &[f64], depth_limit: usize) -> &[u32; 3] {
        let mut i = 0;
        let mut depth = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    counts,
                } => {
                    if depth >= depth_limit {
                        return counts;
                    }
                    i = if x[*feature] <= *threshold { *left } else { *right };
                    depth += 1;
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        majority(self.leaf_counts(x, usize::MAX))
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            deepest = deepest.max(d);
            if let Node::Split { left, right, .. } = &self.nodes[i] {
                stack.push((*left, d + 1));
                stack.push((*right, d + 1));
            }
        }
        deepest
    }

    /// The same tree with every node at `max_depth` turned into a leaf.
    pub fn truncated(&self, max_depth: usize) -> Tree {
        fn copy(src: &[Node], i: usize, depth: usize, max_depth: usize, out: &mut Vec<Node>) -> usize {
            let id = out.len();
            match &src[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    counts,
                } if depth < max_depth => {
                    out.push(Node::Leaf { counts: *counts });
                    let l = copy(src, *left, depth + 1, max_depth, out);
                    let r = copy(src, *right, depth + 1, max_depth, out);
                    out[id] = Node::Split {
                        feature: *feature,
                        threshold: *threshold,
                        left: l,
                        right: r,
                        counts: *counts,
                    };
                }
                node => out.push(Node::Leaf { counts: *node.counts() }),
            }
            id
        }
        let mut nodes = Vec::new();
        copy(&self.nodes, 0, 0, max_depth, &mut nodes);
        Tree { nodes }
    }

    /// Structural checks used when loading a model from disk.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::DataCorruption("empty tree".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::DataCorruption(format!("tree node {i} is missing or shared")));
            }
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if *feature >= dim || !threshold.is_finite() {
                        return Err(Error::DataCorruption(format!("tree node {i} has an invalid split")));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf { counts } => {
                    if counts.iter().all(|&c| c == 0) {
                        return Err(Error::DataCorruption(format!("leaf {i} has an empty histogram")));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::DataCorruption("tree has unreachable nodes".into()));
        }
        Ok(())
    }
}

fn child_seed(seed: u64, side: u64) -> u64 {
    mix64(seed ^ side.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [u8],
    max_depth: usize,
    options: TreeOptions,
    nodes: Vec<Node>,
    buf: Vec<(f64, u8)>,
    order: Vec<usize>,
}

impl Grower<'_> {
    fn counts(&self, idx: &[u32]) -> [u32; 3] {
        let mut c = [0u32; 3];
        for &i in idx {
            c[self.labels[i as usize] as usize] += 1;
        }
        c
    }

    /// Best `(score, threshold)` for one feature, where score is
    /// `Σ cL²/nL + Σ cR²/nR` (higher means lower weighted Gini impurity).
    /// `None` when the feature is constant on `idx`.
    fn best_threshold(&mut self, idx: &[u32], feature: usize, total: &[u32; 3]) -> Option<(f64, f64)> {
        let col = &self.columns[feature];
        self.buf.clear();
        self.buf.extend(idx.iter().map(|&i| (col[i as usize], self.labels[i as usize])));
        self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let n = self.buf.len();
        if self.buf[0].0 == self.buf[n - 1].0 {
            return None;
        }
        let mut left = [0f64; 3];
        let tot = total.map(f64::from);
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            left[self.buf[i].1 as usize] += 1.0;
            let (a, b) = (self.buf[i].0, self.buf[i + 1].0);
            if a == b {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = n as f64 - nl;
            let sl = left[0] * left[0] + left[1] * left[1] + left[2] * left[2];
            let r = [tot[0] - left[0], tot[1] - left[1], tot[2] - left[2]];
            let sr = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
            let score = sl / nl + sr / nr;
            if best.is_none_or(|(s, _)| score > s) {
                let mut t = 0.5 * (a + b);
                if t >= b {
                    t = a;
                }
                best = Some((score, t));
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [u32], depth: usize, seed: u64) -> usize {
        let counts = self.counts(idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.max_depth || pure || idx.len() < 2 {
            return id;
        }

        let dim = self.columns.len();
        self.order.clear();
        self.order.extend(0..dim);
        let wanted = match self.options.max_features {
            Some(k) => {
                self.order.shuffle(&mut rng_from(seed));
                k.clamp(1, dim)
            }
            None => dim,
        };
        let mut best: Option<(f64, usize, f64)> = None;
        let mut examined = 0;
        for pos in 0..dim {
            let f = self.order[pos];
            if let Some((score, t)) = self.best_threshold(idx, f, &counts) {
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, f, t));
                }
                examined += 1;
                if examined >= wanted {
                    break;
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };

        let col = &self.columns[feature];
        let mut split = 0;
        for i in 0..idx.len() {
            if col[idx[i] as usize] <= threshold {
                idx.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1, child_seed(seed, 1));
        let right = self.grow(r, depth + 1, child_seed(seed, 2));
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
            counts,
        };
        id
    }
}

struct Prepared {
    columns: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl Prepared {
    fn new(data: &TrainingSet) -> Self {
        Prepared {
            columns: data.columns(),
            labels: data.labels().iter().map(|l| l.value()).collect(),
        }
    }

    /// Grow one tree on rows drawn from `pool`.
    fn grow_tree(&self, pool: &[u32], max_depth: usize, options: TreeOptions, seed: u64) -> Tree {
        let mut idx: Vec<u32> = if options.bootstrap {
            let mut rng = rng_from(seed);
            (0..pool.len()).map(|_| pool[rng.random_range(0..pool.len())]).collect()
        } else {
            pool.to_vec()
        };
        let mut g = Grower {
            columns: &self.columns,
            labels: &self.labels,
            max_depth,
            options,
            nodes: Vec::new(),
            buf: Vec::with_capacity(idx.len()),
            order: Vec::with_capacity(self.columns.len()),
        };
        g.grow(&mut idx, 0, mix64(seed ^ 0x5EED));
        Tree { nodes: g.nodes }
    }
}

/// Grow a single tree with a seed drawn from `rng`.
pub fn fit_tree<R: RngCore + ?Sized>(
    data: &TrainingSet,
    max_depth: usize,
    options: TreeOptions,
    rng: &mut R,
) -> Result<Tree> {
    if data.is_empty() {
        return Err(Error::Contract("cannot fit a tree on an empty data set".into()));
    }
    let pool: Vec<u32> = (0..data.len() as u32).collect();
    Ok(Prepared::new(data).grow_tree(&pool, max_depth, options, rng.next_u64()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub options: TreeOptions,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Per-class vote counts.
    pub fn votes(&self, x: &[f64]) -> [usize; 3] {
        let mut v = [0usize; 3];
        for t in &self.trees {
            v[t.predict(x).index()] += 1;
        }
        v
    }

    /// Mode of the tree votes (lower `X` on ties) and the winning vote share.
    pub fn predict(&self, x: &[f64]) -> (Label, f64) {
        let v = self.votes(x);
        let mut best = 0;
        for c in 1..3 {
            if v[c] > v[best] {
                best = c;
            }
        }
        (Label::ALL[best], v[best] as f64 / self.trees.len().max(1) as f64)
    }

    /// Average of the normalized leaf histograms.
    pub fn predict_proba(&self, x: &[f64]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for t in &self.trees {
            let c = t.leaf_counts(x, usize::MAX);
            let n = f64::from(c[0] + c[1] + c[2]);
            for k in 0..3 {
                p[k] += f64::from(c[k]) / n;
            }
        }
        let n = self.trees.len() as f64;
        p.map(|v| v / n)
    }

    /// First `n_trees` trees, each pruned at `max_depth`.
    pub fn truncated(&self, n_trees: usize, max_depth: usize) -> ForestModel {
        ForestModel {
            params: ForestParams { n_trees, max_depth },
            options: self.options,
            seed: self.seed,
            trees: self.trees.iter().take(n_trees).map(|t| t.truncated(max_depth)).collect(),
        }
    }

    pub fn max_path_len(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }
}

fn grow_forest(prep: &Prepared, pool: &[u32], params: ForestParams, options: TreeOptions, seed: u64) -> ForestModel {
    let trees = (0..params.n_trees)
        .map(|t| prep.grow_tree(pool, params.max_depth, options, derive(seed, t as u64)))
        .collect();
    ForestModel {
        params,
        options,
        seed,
        trees,
    }
}

/// Fit a forest; tree `t` is seeded with `derive(seed, t)`.
pub fn fit_forest(data: &TrainingSet, params: ForestParams, options: TreeOptions, seed: u64) -> Result<ForestModel> {
    if data.is_empty() {
        return Err(Error::Contract("cannot fit a forest on an empty data set".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Contract("a forest needs at least one tree".into()));
    }
    let pool: Vec<u32> = (0..data.len() as u32).collect();
    Ok(grow_forest(&Prepared::new(data), &pool, params, options, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub tree_counts: Vec<usize>,
    pub depths: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            tree_counts: vec![20, 30, 40, 50],
            depths: vec![30, 40, 50, 60, 70, 80],
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.tree_counts.is_empty() || self.depths.is_empty() {
            return Err(Error::Config("grid needs at least one tree count and one depth".into()));
        }
        if self.tree_counts.contains(&0) {
            return Err(Error::Config("tree counts must be positive".into()));
        }
        Ok(())
    }

    pub fn configs(&self) -> Vec<ForestParams> {
        let mut out = Vec::new();
        for &n_trees in &self.tree_counts {
            for &max_depth in &self.depths {
                out.push(ForestParams { n_trees, max_depth });
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub params: ForestParams,
    pub fold_log_loss: Vec<f64>,
    pub fold_f1: Vec<f64>,
    pub mean_log_loss: f64,
    pub mean_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub fold_sizes: Vec<usize>,
    pub entries: Vec<CvEntry>,
    pub selected: ForestParams,
    /// (configuration, fold) models trained and scored.
    pub fits: usize,
    pub refits: usize,
}

/// Seeded shuffle split into `k` folds whose sizes differ by at most one
/// (the first `n mod k` folds get the extra row).
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::Contract(format!("{k}-fold cross-validation needs at least {k} rows, got {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

const FOLD_STREAM: u64 = 0xF01D;
const REFIT_STREAM: u64 = 0x8EF1;
const PARTITION_STREAM: u64 = 0x9A87;

/// Seed used for the ensemble grown on the training part of fold `fold`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    derive(derive(seed, FOLD_STREAM), fold as u64)
}

/// Seed of the fold partition.
pub fn partition_seed(seed: u64) -> u64 {
    derive(seed, PARTITION_STREAM)
}

/// Exhaustive grid search with `k`-fold cross-validation.
///
/// Every configuration is trained on `k-1` folds and scored on the held-out
/// fold by micro-F1 and log-loss. The winner has the highest mean F1, then
/// the lowest mean log-loss, then the fewest trees, then the smallest depth.
/// It is refit on all of `data`.
pub fn grid_search_cv(
    data: &TrainingSet,
    grid: &Grid,
    k: usize,
    options: TreeOptions,
    seed: u64,
) -> Result<(ForestModel, CvReport)> {
    grid.validate()?;
    let folds = kfold_partition(data.len(), k, partition_seed(seed))?;
    let prep = Prepared::new(data);

    let mut counts = grid.tree_counts.clone();
    counts.sort_unstable();
    counts.dedup();
    let mut depths = grid.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    let max_trees = *counts.last().expect("validated");
    let max_depth = *depths.last().expect("validated");
    let configs = grid.configs();

    // scores[config][fold] = (log_loss, f1)
    let mut scores = vec![vec![(0.0, 0.0); k]; configs.len()];
    let mut in_fold = vec![usize::MAX; data.len()];
    for (f, rows) in folds.iter().enumerate() {
        for &r in rows {
            in_fold[r] = f;
        }
    }
    for (f, held_out) in folds.iter().enumerate() {
        let pool: Vec<u32> = (0..data.len()).filter(|&i| in_fold[i] != f).map(|i| i as u32).collect();
        let big = grow_forest(
            &prep,
            &pool,
            ForestParams {
                n_trees: max_trees,
                max_depth,
            },
            options,
            fold_seed(seed, f),
        );
        let truth: Vec<Label> = held_out.iter().map(|&i| data.label(i)).collect();
        // per (depth, tree count): predictions and probabilities
        let mut preds = vec![vec![Vec::with_capacity(held_out.len()); counts.len()]; depths.len()];
        let mut probs = vec![vec![Vec::with_capacity(held_out.len()); counts.len()]; depths.len()];
        let mut path: Vec<[u32; 3]> = Vec::with_capacity(max_depth + 1);
        for &i in held_out {
            let x = data.row(i);
            let mut votes = vec![[0usize; 3]; depths.len()];
            let mut psum = vec![[0f64; 3]; depths.len()];
            let mut next_count = 0;
            for (t, tree) in big.trees.iter().enumerate() {
                path.clear();
                let mut node = 0;
                loop {
                    match &tree.nodes[node] {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            counts,
                        } => {
                            path.push(*counts);
                            node = if x[*feature] <= *threshold { *left } else { *right };
                        }
                        Node::Leaf { counts } => {
                            path.push(*counts);
                            break;
                        }
                    }
                }
                for (d, &limit) in depths.iter().enumerate() {
                    let c = &path[limit.min(path.len() - 1)];
                    votes[d][majority(c).index()] += 1;
                    let n = f64::from(c[0] + c[1] + c[2]);
                    for cls in 0..3 {
                        psum[d][cls] += f64::from(c[cls]) / n;
                    }
                }
                while next_count < counts.len() && counts[next_count] == t + 1 {
                    for d in 0..depths.len() {
                        let v = votes[d];
                        let mut best = 0;
                        for c in 1..3 {
                            if v[c] > v[best] {
                                best = c;
                            }
                        }
                        preds[d][next_count].push(Label::ALL[best]);
                        let n = (t + 1) as f64;
                        probs[d][next_count].push(psum[d].map(|p| p / n));
                    }
                    next_count += 1;
                }
            }
        }
        for (ci, cfg) in configs.iter().enumerate() {
            let d = depths.binary_search(&cfg.max_depth).expect("depth in grid");
            let n = counts.binary_search(&cfg.n_trees).expect("count in grid");
            let mut cm = ConfusionMatrix::default();
            for (t, p) in truth.iter().zip(&preds[d][n]) {
                cm.add(*t, *p);
            }
            let f1 = micro_metrics(&cm)?.f1;
            let ll = log_loss(&probs[d][n], &truth)?;
            scores[ci][f] = (ll, f1);
        }
    }

    let entries: Vec<CvEntry> = configs
        .iter()
        .zip(&scores)
        .map(|(cfg, s)| {
            let fold_log_loss: Vec<f64> = s.iter().map(|x| x.0).collect();
            let fold_f1: Vec<f64> = s.iter().map(|x| x.1).collect();
            CvEntry {
                params: *cfg,
                mean_log_loss: fold_log_loss.iter().sum::<f64>() / k as f64,
                mean_f1: fold_f1.iter().sum::<f64>() / k as f64,
                fold_log_loss,
                fold_f1,
            }
        })
        .collect();
    let winner = entries
        .iter()
        .min_by(|a, b| {
            b.mean_f1
                .total_cmp(&a.mean_f1)
                .then(a.mean_log_loss.total_cmp(&b.mean_log_loss))
                .then(a.params.n_trees.cmp(&b.params.n_trees))
                .then(a.params.max_depth.cmp(&b.params.max_depth))
        })
        .expect("grid is nonempty")
        .params;

    let pool: Vec<u32> = (0..data.len() as u32).collect();
    let model = grow_forest(&prep, &pool, winner, options, derive(seed, REFIT_STREAM));
    let report = CvReport {
        folds: k,
        fold_sizes: folds.iter().map(Vec::len).collect(),
        fits: entries.len() * k,
        refits: 1,
        entries,
        selected: winner,
    };
    Ok((model, report))
}
