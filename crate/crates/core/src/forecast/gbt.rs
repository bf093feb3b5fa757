//! Gradient-boosted regression trees under absolute loss.
//!
//! Each round fits a depth-limited tree to the sign of the current
//! residuals (squared-error split gain on the pseudo-residuals), then
//! replaces every leaf value with the median residual of the rows it holds.
//! With median leaves the line search for absolute loss is already solved,
//! so every round multiplier is 1. Split search works on per-feature
//! quantile bins computed once per training matrix.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Row-major feature matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    names: Vec<String>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>) -> Self {
        FeatureMatrix { names, data: Vec::new() }
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = FeatureMatrix::new(names);
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(contract(format!("row has {} features, expected {}", row.len(), self.names.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.data.len() / self.names.len()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols().max(1))
    }

    /// Copies the listed rows into a new matrix.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.names.clone());
        for &r in rows {
            out.data.extend_from_slice(self.row(r));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_bins: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 4, min_leaf: 20, max_bins: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    /// Learning rate.
    pub nu: f64,
    pub max_rounds: usize,
    /// Rounds without validation improvement before stopping.
    pub patience: usize,
    pub tree: TreeParams,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams { nu: 0.1, max_rounds: 300, patience: 10, tree: TreeParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    pub fn max_abs_leaf(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf(v) => Some(v.abs()),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// `F(x) = f0 + sum_m nu * rho_m * h_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub f0: f64,
    pub trees: Vec<RegressionTree>,
    pub nu: f64,
    pub rho: Vec<f64>,
    pub n_rounds: usize,
}

impl GbtModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.f0
            + self
                .trees
                .iter()
                .zip(&self.rho)
                .map(|(t, r)| self.nu * r * t.predict(x))
                .sum::<f64>()
    }

    /// Prediction using only the first `rounds` trees.
    pub fn predict_rounds(&self, x: &[f64], rounds: usize) -> f64 {
        self.f0
            + self.trees[..rounds.min(self.trees.len())]
                .iter()
                .zip(&self.rho)
                .map(|(t, r)| self.nu * r * t.predict(x))
                .sum::<f64>()
    }
}

/// Column-major bin indices plus the upper edge of each bin but the last.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n_rows: usize,
    bins: Vec<Vec<u8>>,
    edges: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    pub fn new(x: &FeatureMatrix, max_bins: usize) -> Result<Self> {
        if !(2..=256).contains(&max_bins) {
            return Err(contract("max_bins must be in 2..=256"));
        }
        let n = x.n_rows();
        let mut bins = Vec::with_capacity(x.n_cols());
        let mut edges = Vec::with_capacity(x.n_cols());
        for c in 0..x.n_cols() {
            let column: Vec<f64> = (0..n).map(|r| x.row(r)[c]).collect();
            let mut sorted = column.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let e: Vec<f64> = if sorted.len() <= max_bins {
                sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut e: Vec<f64> = (1..max_bins)
                    .map(|i| {
                        let pos = i * (sorted.len() - 1) / max_bins;
                        0.5 * (sorted[pos] + sorted[pos + 1])
                    })
                    .collect();
                e.dedup();
                e
            };
            bins.push(column.iter().map(|&v| e.partition_point(|&t| t < v) as u8).collect());
            edges.push(e);
        }
        Ok(BinnedMatrix { n_rows: n, bins, edges })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn n_bins(&self, c: usize) -> usize {
        self.edges[c].len() + 1
    }
}

/// Fits a boosted model on every row of `x`, with optional early stopping
/// against `validation`.
pub fn fit_gbt(
    x: &FeatureMatrix,
    y: &[f64],
    validation: Option<(&FeatureMatrix, &[f64])>,
    params: &GbtParams,
) -> Result<GbtModel> {
    let binned = BinnedMatrix::new(x, params.tree.max_bins)?;
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    fit_gbt_rows(&binned, y, &rows, validation, params)
}

/// Fits on a multiset of row indices into a pre-binned matrix. Used for
/// bootstrap estimators that share one binning.
pub fn fit_gbt_rows(
    binned: &BinnedMatrix,
    y: &[f64],
    rows: &[usize],
    validation: Option<(&FeatureMatrix, &[f64])>,
    params: &GbtParams,
) -> Result<GbtModel> {
    if rows.is_empty() {
        return Err(contract("cannot fit on an empty training set"));
    }
    if y.len() != binned.n_rows() {
        return Err(contract(format!("{} targets for {} rows", y.len(), binned.n_rows())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite training target".into()));
    }
    if !(params.nu > 0.0) || params.tree.min_leaf == 0 {
        return Err(contract("learning rate and min_leaf must be positive"));
    }
    if let Some((xv, yv)) = validation {
        if xv.n_rows() != yv.len() || xv.n_rows() == 0 {
            return Err(contract("validation features and targets disagree or are empty"));
        }
        if yv.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite validation target".into()));
        }
    }

    let targets: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let f0 = median(&mut targets.clone());
    let mut fitted = vec![f0; rows.len()];

    let mut val_pred = validation.map(|(xv, _)| vec![f0; xv.n_rows()]);
    let val_mae = |pred: &[f64]| -> f64 {
        let (_, yv) = validation.expect("validation present");
        pred.iter().zip(yv).map(|(p, t)| (p - t).abs()).sum::<f64>() / yv.len() as f64
    };
    let mut best = val_pred.as_deref().map(val_mae).unwrap_or(f64::INFINITY);
    let mut best_rounds = 0;

    let mut trees = Vec::new();
    let mut builder = TreeBuilder::new(binned, rows, params.tree);
    for round in 1..=params.max_rounds {
        let residual: Vec<f64> = targets.iter().zip(&fitted).map(|(t, f)| t - f).collect();
        if residual.iter().all(|&r| r == 0.0) {
            break;
        }
        let (tree, leaf_of) = builder.build(&residual);
        for (p, f) in fitted.iter_mut().enumerate() {
            if let Node::Leaf(v) = tree.nodes[leaf_of[p] as usize] {
                *f += params.nu * v;
            }
        }
        if let (Some(pred), Some((xv, _))) = (val_pred.as_mut(), validation) {
            for (i, p) in pred.iter_mut().enumerate() {
                *p += params.nu * tree.predict(xv.row(i));
            }
        }
        trees.push(tree);

        if let Some(pred) = val_pred.as_deref() {
            let mae = val_mae(pred);
            if mae < best {
                best = mae;
                best_rounds = round;
            } else if round - best_rounds >= params.patience {
                break;
            }
        } else {
            best_rounds = round;
        }
    }
    trees.truncate(best_rounds);
    Ok(GbtModel { f0, rho: vec![1.0; trees.len()], n_rounds: trees.len(), trees, nu: params.nu })
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    let n = values.len();
    let mid = n / 2;
    let m = *values.select_nth_unstable_by(mid, f64::total_cmp).1;
    if n % 2 == 1 {
        m
    } else {
        // After selection the lower half sits in front of `mid`.
        let lower_max = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + m)
    }
}

struct TreeBuilder<'a> {
    binned: &'a BinnedMatrix,
    rows: &'a [usize],
    params: TreeParams,
    sums: Vec<f64>,
    counts: Vec<u32>,
}

struct SplitChoice {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl<'a> TreeBuilder<'a> {
    fn new(binned: &'a BinnedMatrix, rows: &'a [usize], params: TreeParams) -> Self {
        TreeBuilder { binned, rows, params, sums: vec![0.0; 256], counts: vec![0; 256] }
    }

    /// Returns the tree and, for every position in `rows`, its leaf node.
    fn build(&mut self, residual: &[f64]) -> (RegressionTree, Vec<u32>) {
        let grad: Vec<f64> = residual.iter().map(|&r| sign(r)).collect();
        let mut nodes = Vec::new();
        let mut leaf_of = vec![0u32; self.rows.len()];
        let all: Vec<u32> = (0..self.rows.len() as u32).collect();
        self.grow(&mut nodes, &mut leaf_of, all, &grad, residual, 0);
        (RegressionTree { nodes }, leaf_of)
    }

    fn grow(
        &mut self,
        nodes: &mut Vec<Node>,
        leaf_of: &mut [u32],
        positions: Vec<u32>,
        grad: &[f64],
        residual: &[f64],
        depth: usize,
    ) -> u32 {
        let id = nodes.len() as u32;
        nodes.push(Node::Leaf(0.0));
        let split = if depth < self.params.max_depth && positions.len() >= 2 * self.params.min_leaf {
            self.best_split(&positions, grad)
        } else {
            None
        };
        match split {
            Some(s) => {
                let column = &self.binned.bins[s.feature];
                let (left, right): (Vec<u32>, Vec<u32>) = positions
                    .into_iter()
                    .partition(|&p| (column[self.rows[p as usize]] as usize) <= s.bin);
                let l = self.grow(nodes, leaf_of, left, grad, residual, depth + 1);
                let r = self.grow(nodes, leaf_of, right, grad, residual, depth + 1);
                nodes[id as usize] = Node::Split {
                    feature: s.feature as u32,
                    threshold: self.binned.edges[s.feature][s.bin],
                    left: l,
                    right: r,
                };
            }
            None => {
                let mut vals: Vec<f64> = positions.iter().map(|&p| residual[p as usize]).collect();
                nodes[id as usize] = Node::Leaf(median(&mut vals));
                for &p in &positions {
                    leaf_of[p as usize] = id;
                }
            }
        }
        id
    }

    fn best_split(&mut self, positions: &[u32], grad: &[f64]) -> Option<SplitChoice> {
        let n = positions.len() as f64;
        let total: f64 = positions.iter().map(|&p| grad[p as usize]).sum();
        let parent = total * total / n;
        let min_leaf = self.params.min_leaf as u32;
        let mut best: Option<SplitChoice> = None;
        for f in 0..self.binned.bins.len() {
            let nb = self.binned.n_bins(f);
            if nb < 2 {
                continue;
            }
            let column = &self.binned.bins[f];
            self.sums[..nb].fill(0.0);
            self.counts[..nb].fill(0);
            for &p in positions {
                let b = column[self.rows[p as usize]] as usize;
                self.sums[b] += grad[p as usize];
                self.counts[b] += 1;
            }
            let (mut sl, mut cl) = (0.0, 0u32);
            for b in 0..nb - 1 {
                sl += self.sums[b];
                cl += self.counts[b];
                let cr = positions.len() as u32 - cl;
                if cl < min_leaf {
                    continue;
                }
                if cr < min_leaf {
                    break;
                }
                let sr = total - sl;
                let gain = sl * sl / cl as f64 + sr * sr / cr as f64 - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(SplitChoice { feature: f, bin: b, gain });
                }
            }
        }
        best
    }
}

fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [7.0]), 7.0);
    }

    #[test]
    fn zero_rounds_gives_median() {
        let x = FeatureMatrix::from_rows(names(1), &[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let params = GbtParams { max_rounds: 0, ..GbtParams::default() };
        let m = fit_gbt(&x, &[1.0, 2.0, 9.0], None, &params).unwrap();
        assert_eq!(m.f0, 2.0);
        assert_eq!(m.n_rounds, 0);
        assert_eq!(m.predict(&[5.0]), 2.0);
    }

    #[test]
    fn lookup_table_fit_to_zero_training_error() {
        // y is a function of a three-level feature plus an irrelevant one.
        let table = [3.0, -7.5, 12.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..300 {
            let level = i % 3;
            rows.push(vec![level as f64, rng.random::<f64>()]);
            y.push(table[level]);
        }
        let x = FeatureMatrix::from_rows(names(2), &rows).unwrap();
        let params = GbtParams { nu: 0.3, max_rounds: 50, patience: 50, ..GbtParams::default() };
        let m = fit_gbt(&x, &y, None, &params).unwrap();
        assert!(m.n_rounds <= 50);
        let mae: f64 = rows.iter().zip(&y).map(|(r, t)| (m.predict(r) - t).abs()).sum::<f64>() / 300.0;
        assert!(mae < 1e-4, "training MAE {mae}");
        for (level, &v) in table.iter().enumerate() {
            assert!((m.predict(&[level as f64, 0.5]) - v).abs() < 1e-4);
        }
    }

    #[test]
    fn pure_noise_stops_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut gen = |n: usize| {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            (FeatureMatrix::from_rows(names(2), &rows).unwrap(), y)
        };
        let (x, y) = gen(600);
        let (xv, yv) = gen(400);
        let params = GbtParams { patience: 5, max_rounds: 200, ..GbtParams::default() };
        let m = fit_gbt(&x, &y, Some((&xv, &yv)), &params).unwrap();
        assert!(m.n_rounds < 200, "early stopping never fired");
        // Whatever the kept rounds, the model stays near the constant F0.
        let spread = (0..50)
            .map(|i| (m.predict(xv.row(i)) - m.f0).abs())
            .fold(0.0, f64::max);
        assert!(spread < 2.0, "model strayed {spread} from F0");
    }

    #[test]
    fn structure_matches_additive_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>() * 4.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0] * 2.0).sin() * 3.0).collect();
        let x = FeatureMatrix::from_rows(names(1), &rows).unwrap();
        let params = GbtParams { max_rounds: 30, ..GbtParams::default() };
        let m = fit_gbt(&x, &y, None, &params).unwrap();
        assert!(m.rho.iter().all(|&r| r == 1.0));
        for r in rows.iter().take(20) {
            let manual = m.f0 + m.trees.iter().map(|t| m.nu * t.predict(r)).sum::<f64>();
            assert_eq!(m.predict(r), manual);
            // One more round moves the prediction by at most nu * max leaf.
            for k in 0..m.n_rounds {
                let step = (m.predict_rounds(r, k + 1) - m.predict_rounds(r, k)).abs();
                assert!(step <= m.nu * m.trees[k].max_abs_leaf() + 1e-12);
            }
        }
        assert!(m.trees.iter().all(|t| t.n_leaves() <= 16));
    }

    #[test]
    fn rejects_bad_input() {
        let x = FeatureMatrix::from_rows(names(1), &[vec![0.0]]).unwrap();
        assert!(fit_gbt(&x, &[f64::NAN], None, &GbtParams::default()).is_err());
        let empty = FeatureMatrix::new(names(1));
        assert!(fit_gbt(&empty, &[], None, &GbtParams::default()).is_err());
        let mut m = FeatureMatrix::new(names(2));
        assert!(m.push_row(&[1.0]).is_err());
    }
}
