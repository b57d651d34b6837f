//! Grouped observations and their second-moment statistics.

use std::collections::BTreeMap;

use crate::error::{FairGmError, Result};
use crate::linalg::Mat;

/// Rows of a data matrix partitioned into `K` non-empty groups.
///
/// Group indices are contiguous and zero-based internally; `labels` keeps the
/// original label of each group in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    data: Mat,
    group_of_row: Vec<usize>,
    group_sizes: Vec<usize>,
    labels: Vec<String>,
}

/// Builds a dataset from a raw matrix and one label per row.
///
/// Labels are sorted numerically when all of them parse as numbers and
/// lexicographically otherwise, then mapped to `0..K`.
pub fn validate_dataset<S: AsRef<str>>(
    raw: Mat,
    labels: &[S],
    binary: bool,
) -> Result<GroupedDataset> {
    let (n, p) = raw.shape();
    if n < 2 || p < 2 {
        return Err(FairGmError::InvalidDataset(format!(
            "need at least 2 rows and 2 columns, got {n}x{p}"
        )));
    }
    if labels.len() != n {
        return Err(FairGmError::InvalidDataset(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
        let (row, col) = (pos % n, pos / n);
        return Err(FairGmError::InvalidDataset(format!(
            "non-finite value at row {row}, column {col}"
        )));
    }
    if binary {
        if let Some(pos) = raw.iter().position(|&v| v != 0.0 && v != 1.0) {
            let (row, col) = (pos % n, pos / n);
            return Err(FairGmError::InvalidDataset(format!(
                "non-binary value at row {row}, column {col}"
            )));
        }
    }

    let trimmed: Vec<&str> = labels.iter().map(|l| l.as_ref().trim()).collect();
    if trimmed.iter().any(|l| l.is_empty()) {
        return Err(FairGmError::InvalidDataset("empty group label".into()));
    }
    let numeric: Option<Vec<f64>> = trimmed.iter().map(|l| l.parse::<f64>().ok()).collect();
    let mut distinct: Vec<&str> = trimmed.clone();
    match &numeric {
        Some(_) => distinct.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        }),
        None => distinct.sort(),
    }
    distinct.dedup();
    let index: BTreeMap<&str, usize> = distinct.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let group_of_row: Vec<usize> = trimmed.iter().map(|l| index[l]).collect();
    let mut group_sizes = vec![0usize; distinct.len()];
    for &g in &group_of_row {
        group_sizes[g] += 1;
    }
    Ok(GroupedDataset {
        data: raw,
        group_of_row,
        group_sizes,
        labels: distinct.iter().map(|s| s.to_string()).collect(),
    })
}

impl GroupedDataset {
    /// Stacks per-group blocks; group `k` gets label `k + 1`.
    pub fn from_groups(blocks: &[Mat]) -> Result<Self> {
        let p = blocks
            .first()
            .map(|b| b.ncols())
            .ok_or_else(|| FairGmError::InvalidDataset("no groups".into()))?;
        if blocks.iter().any(|b| b.ncols() != p || b.nrows() == 0) {
            return Err(FairGmError::InvalidDataset(
                "groups must be non-empty with equal column counts".into(),
            ));
        }
        let n: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut data = Mat::zeros(n, p);
        let mut labels = Vec::with_capacity(n);
        let mut row = 0;
        for (k, b) in blocks.iter().enumerate() {
            data.rows_mut(row, b.nrows()).copy_from(b);
            row += b.nrows();
            labels.extend(std::iter::repeat_n((k + 1).to_string(), b.nrows()));
        }
        let binary = data.iter().all(|&v| v == 0.0 || v == 1.0);
        validate_dataset(data, &labels, binary)
    }

    pub fn data(&self) -> &Mat {
        &self.data
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn group_of_row(&self) -> &[usize] {
        &self.group_of_row
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(FairGmError::InvalidDataset(
                "binary data required for the Ising model".into(),
            ))
        }
    }

    /// Rows belonging to group `k`, in their original order.
    pub fn group_rows(&self, k: usize) -> Mat {
        let idx: Vec<usize> = (0..self.n_rows())
            .filter(|&i| self.group_of_row[i] == k)
            .collect();
        self.data.select_rows(idx.iter())
    }
}

/// Second moments of one block of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub n: usize,
    /// `X^T X / n`
    pub cov: Mat,
    /// `X^T X`
    pub cross: Mat,
    pub rows: Mat,
}

impl Moments {
    pub fn new(rows: Mat) -> Self {
        let n = rows.nrows();
        let cross = rows.transpose() * &rows;
        let cross = (&cross + cross.transpose()) * 0.5;
        let cov = &cross / n.max(1) as f64;
        Self {
            n,
            cov,
            cross,
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub pooled: Moments,
    pub groups: Vec<Moments>,
}

impl GroupStats {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.pooled.dim()
    }

    /// Stats of a single block treated as one group.
    pub fn single(rows: Mat) -> Self {
        let m = Moments::new(rows);
        Self {
            pooled: m.clone(),
            groups: vec![m],
        }
    }
}

pub fn group_stats(ds: &GroupedDataset) -> GroupStats {
    let groups = (0..ds.n_groups())
        .map(|k| Moments::new(ds.group_rows(k)))
        .collect();
    GroupStats {
        pooled: Moments::new(ds.data.clone()),
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle_cov(x: &Mat) -> Mat {
        let (n, p) = x.shape();
        let mut s = Mat::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += x[(i, a)] * x[(i, b)];
                }
                s[(a, b)] = acc / n as f64;
            }
        }
        s
    }

    #[test]
    fn partitions_rows() {
        let x = Mat::from_row_slice(4, 2, &[1., 2., 3., 4., 5., 6., 7., 8.]);
        let ds = validate_dataset(x, &["1", "1", "2", "2"], false).unwrap();
        assert_eq!(ds.n_groups(), 2);
        assert_eq!(ds.group_sizes(), &[2, 2]);
    }

    #[test]
    fn relabels_contiguously() {
        let x = Mat::from_row_slice(3, 2, &[1., 2., 3., 4., 5., 6.]);
        let ds = validate_dataset(x.clone(), &["1", "1", "1"], false).unwrap();
        assert_eq!(ds.n_groups(), 1);
        let ds = validate_dataset(x, &["3", "1", "3"], false).unwrap();
        assert_eq!(ds.group_of_row(), &[1, 0, 1]);
        assert_eq!(ds.labels(), &["1".to_string(), "3".to_string()]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let x = Mat::zeros(3, 2);
        let ds = validate_dataset(x, &["10", "9", "10"], false).unwrap();
        assert_eq!(ds.labels(), &["9".to_string(), "10".to_string()]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut x = Mat::zeros(3, 2);
        assert!(validate_dataset(x.clone(), &["a", "b"], false).is_err());
        x[(1, 1)] = f64::NAN;
        assert!(validate_dataset(x.clone(), &["a", "b", "a"], false).is_err());
        x[(1, 1)] = 0.5;
        assert!(validate_dataset(x.clone(), &["a", "b", "a"], true).is_err());
        assert!(validate_dataset(x, &["a", "b", "a"], false).is_ok());
        assert!(validate_dataset(Mat::zeros(1, 2), &["a"], false).is_err());
    }

    #[test]
    fn unit_rows_give_half_identity() {
        let s = GroupStats::single(Mat::identity(2, 2));
        assert_eq!(s.pooled.cov, Mat::identity(2, 2) * 0.5);
    }

    #[test]
    fn equal_rows_give_rank_one() {
        let v = [1.5, -2.0, 0.5];
        let x = Mat::from_fn(4, 3, |_, j| v[j]);
        let s = GroupStats::single(x);
        let vv = Mat::from_fn(3, 3, |a, b| v[a] * v[b]);
        assert!((s.pooled.cov - vv).amax() < 1e-14);
    }

    #[test]
    fn matches_double_loop() {
        let x = Mat::from_fn(10, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 / 3.0 - 1.2);
        let s = GroupStats::single(x.clone());
        assert!((s.pooled.cov - oracle_cov(&x)).amax() < 1e-12);
    }

    #[test]
    fn pooled_is_weighted_combination() {
        let x = Mat::from_fn(9, 3, |i, j| ((i * 5 + j * 2) % 7) as f64 - 3.0);
        let labels = ["a", "b", "a", "c", "b", "a", "c", "c", "a"];
        let ds = validate_dataset(x, &labels, false).unwrap();
        let st = group_stats(&ds);
        let n = ds.n_rows() as f64;
        let mut combo = Mat::zeros(3, 3);
        for (k, g) in st.groups.iter().enumerate() {
            combo += &g.cov * (ds.group_sizes()[k] as f64 / n);
        }
        assert!((combo - &st.pooled.cov).amax() < 1e-10);
    }
}
