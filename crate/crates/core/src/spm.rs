//! Success probability matrices, outcome vectors, moments, and block
//! structure.
//!
//! An [`Spm`] is an `n x m` row-stochastic matrix: row `i` holds the category
//! probabilities of trial `i`. It fully determines a Poisson multinomial
//! distribution over count vectors that sum to `n`. The reduced coordinates
//! used throughout the crate drop the last category.

use std::fmt;
use std::io::Read;
use std::path::Path;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{PmdError, Result};

/// Default tolerance on `|sum(row) - 1|` accepted by [`Spm::new`].
pub const DEFAULT_ROW_TOL: f64 = 1e-6;

/// A validated success probability matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spm {
    n: usize,
    m: usize,
    entries: Vec<f64>,
}

impl Spm {
    /// Validates `rows` with the default row tolerance.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::validate(&rows, DEFAULT_ROW_TOL)
    }

    /// Validates a raw matrix and renormalizes each row to sum to one.
    ///
    /// Rows whose sum is further than `row_tol` from one are rejected, as are
    /// negative or non-finite entries.
    pub fn validate(rows: &[Vec<f64>], row_tol: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(PmdError::Dimension("an SPM needs at least one row".into()));
        }
        let m = rows[0].len();
        if m < 2 {
            return Err(PmdError::Dimension(format!(
                "an SPM needs at least two columns, got {m}"
            )));
        }
        let mut entries = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(PmdError::Dimension(format!(
                    "row {i} has {} columns, expected {m}",
                    row.len()
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                if !p.is_finite() || !(0.0..=1.0 + row_tol).contains(&p) {
                    return Err(PmdError::InvalidEntry {
                        row: i,
                        col: j,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > row_tol {
                return Err(PmdError::RowSum {
                    row: i,
                    sum,
                    tol: row_tol,
                });
            }
            let start = entries.len();
            entries.extend(row.iter().map(|p| p / sum));
            // Push the residual of the division into the largest entry so the
            // stored row adds up to exactly one in left-to-right order.
            let stored = &mut entries[start..];
            let total: f64 = stored.iter().sum();
            if total != 1.0 {
                let (k, _) = stored
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
                stored[k] += 1.0 - total;
                stored[k] = stored[k].clamp(0.0, 1.0);
            }
        }
        Ok(Self { n, m, entries })
    }

    /// Number of trials (rows).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of categories (columns).
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.m)
    }

    /// Column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Sub-matrix over the given rows and columns. The result is not
    /// validated: its rows only sum to one when the column set covers every
    /// nonzero entry of the selected rows.
    pub(crate) fn select(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&i| cols.iter().map(|&j| self.get(i, j)).collect())
            .collect()
    }

    /// Size of the support, `C(n + m - 1, m - 1)`.
    pub fn support_size(&self) -> u128 {
        support_size(self.n, self.m)
    }

    /// Number of cells in the dense `(n + 1)^(m - 1)` reduced grid, or
    /// `None` on overflow.
    pub fn grid_cells(&self) -> Option<u128> {
        grid_cells(self.n, self.m)
    }

    /// Reads an SPM from CSV, one row per trial.
    pub fn from_csv_reader<R: Read>(reader: R, has_header: bool, row_tol: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            let row = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|e| {
                        PmdError::Parse(format!("record {}: `{field}`: {e}", line + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::validate(&rows, row_tol)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, has_header: bool, row_tol: f64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, has_header, row_tol)
    }

    /// Writes the matrix as headerless CSV with 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|p| format!("{p:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// `C(n + m - 1, m - 1)`, the number of count vectors of length `m` summing
/// to `n`.
pub fn support_size(n: usize, m: usize) -> u128 {
    let k = (m - 1) as u128;
    let total = (n + m - 1) as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (total - i) / (i + 1);
    }
    acc
}

pub fn grid_cells(n: usize, m: usize) -> Option<u128> {
    (n as u128 + 1).checked_pow(u32::try_from(m - 1).ok()?)
}

/// A point of the support: category counts that sum to the trial count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeVector(Vec<usize>);

impl OutcomeVector {
    pub fn new(counts: Vec<usize>) -> Self {
        Self(counts)
    }

    /// Builds an outcome and checks it against `spm`.
    pub fn for_spm(counts: Vec<usize>, spm: &Spm) -> Result<Self> {
        let x = Self(counts);
        x.check_support(spm.n(), spm.m())?;
        Ok(x)
    }

    /// Completes a reduced vector `x*` with the last category `n - sum(x*)`.
    pub fn from_reduced(reduced: &[usize], n: usize) -> Result<Self> {
        let s: usize = reduced.iter().sum();
        if s > n {
            return Err(PmdError::NotInSupport(format!(
                "reduced counts {reduced:?} sum to {s} > n = {n}"
            )));
        }
        let mut counts = reduced.to_vec();
        counts.push(n - s);
        Ok(Self(counts))
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn reduced(&self) -> &[usize] {
        &self.0[..self.0.len() - 1]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_support(&self, n: usize, m: usize) -> Result<()> {
        if self.0.len() != m {
            return Err(PmdError::NotInSupport(format!(
                "outcome has {} entries, expected m = {m}",
                self.0.len()
            )));
        }
        if self.total() != n {
            return Err(PmdError::NotInSupport(format!(
                "outcome {:?} sums to {}, expected n = {n}",
                self.0,
                self.total()
            )));
        }
        Ok(())
    }

    /// Parses `"c1,c2,...,cm"`.
    pub fn parse(s: &str) -> Result<Self> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| PmdError::Parse(format!("count `{}`: {e}", t.trim())))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for OutcomeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "({})", parts.join(", "))
    }
}

impl From<Vec<usize>> for OutcomeVector {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Mean and covariance of the reduced count vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu_star: Vec<f64>,
    /// Row-major `(m - 1) x (m - 1)` covariance.
    pub sigma_star: Vec<f64>,
    pub dim: usize,
}

impl Moments {
    pub fn sigma(&self, j: usize, k: usize) -> f64 {
        self.sigma_star[j * self.dim + k]
    }
}

/// `mu*_j = sum_i p_ij` and `Sigma* = sum_i [Diag(p_i*) - p_i* p_i*']`.
pub fn moments(spm: &Spm) -> Moments {
    let d = spm.m() - 1;
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    for row in spm.rows() {
        for j in 0..d {
            mu[j] += row[j];
            sigma[j * d + j] += row[j];
            for k in 0..d {
                sigma[j * d + k] -= row[j] * row[k];
            }
        }
    }
    Moments {
        mu_star: mu,
        sigma_star: sigma,
        dim: d,
    }
}

/// One independent block: a set of trials that only ever land in a set of
/// categories. Indices are zero-based and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// A partition of rows and columns into independent blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Block>,
}

impl BlockPartition {
    /// The trivial partition with every row and column in one block.
    pub fn single(n: usize, m: usize) -> Self {
        Self {
            blocks: vec![Block {
                rows: (0..n).collect(),
                cols: (0..m).collect(),
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Checks that the blocks partition the rows and columns of `spm` and
    /// that every row's probability mass lies inside its block.
    pub fn check(&self, spm: &Spm, zero_tol: f64) -> Result<()> {
        let mut row_seen = vec![false; spm.n()];
        let mut col_block = vec![usize::MAX; spm.m()];
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in &block.rows {
                if i >= spm.n() || std::mem::replace(&mut row_seen[i], true) {
                    return Err(PmdError::Dimension(format!(
                        "block partition: row {i} is out of range or repeated"
                    )));
                }
            }
            for &j in &block.cols {
                if j >= spm.m() || col_block[j] != usize::MAX {
                    return Err(PmdError::Dimension(format!(
                        "block partition: column {j} is out of range or repeated"
                    )));
                }
                col_block[j] = b;
            }
        }
        if row_seen.iter().any(|s| !s) || col_block.iter().any(|&b| b == usize::MAX) {
            return Err(PmdError::Dimension(
                "block partition does not cover every row and column".into(),
            ));
        }
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in &block.rows {
                for (j, &p) in spm.row(i).iter().enumerate() {
                    if col_block[j] != b && p.abs() > zero_tol {
                        return Err(PmdError::Dimension(format!(
                            "block partition: entry ({i}, {j}) = {p} lies outside its block"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Finest block-diagonal structure of `spm`: connected components of the
/// bipartite graph joining row `i` and column `j` whenever `p_ij > zero_tol`.
///
/// Blocks are ordered by their smallest column index. A column that no row
/// reaches forms a block with no rows.
pub fn detect_blocks(spm: &Spm, zero_tol: f64) -> BlockPartition {
    let (n, m) = (spm.n(), spm.m());
    // Nodes 0..m are columns, m..m+n are rows.
    let mut uf = UnionFind::<usize>::new(n + m);
    for i in 0..n {
        for j in 0..m {
            if spm.get(i, j) > zero_tol {
                uf.union(m + i, j);
            }
        }
    }
    let mut index_of_root = vec![usize::MAX; n + m];
    let mut blocks: Vec<Block> = Vec::new();
    let mut orphan_rows = Vec::new();
    for j in 0..m {
        let r = uf.find(j);
        if index_of_root[r] == usize::MAX {
            index_of_root[r] = blocks.len();
            blocks.push(Block {
                rows: Vec::new(),
                cols: Vec::new(),
            });
        }
        blocks[index_of_root[r]].cols.push(j);
    }
    for i in 0..n {
        let r = uf.find(m + i);
        match index_of_root[r] {
            usize::MAX => orphan_rows.push(i),
            b => blocks[b].rows.push(i),
        }
    }
    // Only reachable with zero_tol >= max row entry; keep those rows whole.
    if !orphan_rows.is_empty() {
        return BlockPartition::single(n, m);
    }
    BlockPartition { blocks }
}
