//! Uncertainty in a soft classifier's confusion matrix.
//!
//! Given predicted class probabilities and true labels, the confusion
//! matrix `X` (rows predicted, columns true) is random: column `k` is a PMD
//! over the predicted probabilities of the units whose true class is `k`.
//! Labels are `1..=m` in files and output; function arguments are zero-based.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{PmdError, Result};
use crate::exact::{pmf_at, ExactOptions};
use crate::oracle::poisson_binomial_pmf;
use crate::spm::{Block, BlockPartition, OutcomeVector, Spm, DEFAULT_ROW_TOL};

/// Predicted probabilities (`n x m`) and true labels (zero-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    probs: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl ClassifierOutput {
    /// `labels` are zero-based class indices.
    pub fn new(probs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if probs.is_empty() || probs.len() != labels.len() {
            return Err(PmdError::Dimension(format!(
                "{} probability rows but {} labels",
                probs.len(),
                labels.len()
            )));
        }
        let m = probs[0].len();
        // Row checks are shared with SPM validation.
        Spm::validate(&probs, DEFAULT_ROW_TOL)?;
        if let Some((i, &k)) = labels.iter().enumerate().find(|(_, &k)| k >= m) {
            return Err(PmdError::InvalidArgument(format!(
                "unit {i} has label {} outside 1..={m}",
                k + 1
            )));
        }
        Ok(Self { probs, labels })
    }

    /// CSV with header `true_label, p_1..p_m` and labels `1..=m`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let label: usize = rec[0]
                .parse()
                .map_err(|_| PmdError::Parse(format!("line {line}: bad label `{}`", &rec[0])))?;
            if label == 0 {
                return Err(PmdError::Parse(format!("line {line}: labels start at 1")));
            }
            let row = (1..rec.len())
                .map(|c| {
                    rec[c].parse::<f64>().map_err(|_| {
                        PmdError::Parse(format!("line {line}: `{}` is not a number", &rec[c]))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            labels.push(label - 1);
            probs.push(row);
        }
        Self::new(probs, labels)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.m()).map(|j| format!("p_{j}")).collect();
        writeln!(w, "true_label,{}", header.join(","))?;
        for (row, k) in self.probs.iter().zip(&self.labels) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{},{}", k + 1, vals.join(","))?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn m(&self) -> usize {
        self.probs[0].len()
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Units per true class.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.m()];
        self.labels.iter().for_each(|&k| sizes[k] += 1);
        sizes
    }

    /// Probability rows of the units whose true class is `k`.
    pub fn class_rows(&self, k: usize) -> Vec<Vec<f64>> {
        self.probs
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == k)
            .map(|(r, _)| r.clone())
            .collect()
    }
}

/// The block-diagonal SPM of the flattened confusion matrix.
///
/// Category `k m + j` is "predicted `j`, true `k`".
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionPmd {
    pub spm: Spm,
    pub partition: BlockPartition,
    /// Classes with no units; their blocks have no rows.
    pub empty_classes: Vec<usize>,
}

pub fn build_confusion_pmd(out: &ClassifierOutput) -> Result<ConfusionPmd> {
    let m = out.m();
    let mut rows = Vec::with_capacity(out.n());
    let mut blocks = Vec::with_capacity(m);
    let mut empty_classes = Vec::new();
    for k in 0..m {
        let start = rows.len();
        for r in out.class_rows(k) {
            let mut wide = vec![0.0; m * m];
            wide[k * m..(k + 1) * m].copy_from_slice(&r);
            rows.push(wide);
        }
        if rows.len() == start {
            empty_classes.push(k);
        }
        blocks.push(Block {
            rows: (start..rows.len()).collect(),
            cols: (k * m..(k + 1) * m).collect(),
        });
    }
    Ok(ConfusionPmd {
        spm: Spm::validate(&rows, DEFAULT_ROW_TOL)?,
        partition: BlockPartition { blocks },
        empty_classes,
    })
}

/// Flattens `x[j][k]` (predicted `j`, true `k`) to the category order of
/// [`build_confusion_pmd`].
pub fn flatten_counts(x: &[Vec<usize>]) -> OutcomeVector {
    let m = x.len();
    OutcomeVector::new((0..m * m).map(|c| x[c % m][c / m]).collect())
}

fn check_matrix(out: &ClassifierOutput, x: &[Vec<usize>]) -> Result<()> {
    let m = out.m();
    if x.len() != m || x.iter().any(|r| r.len() != m) {
        return Err(PmdError::Dimension(format!("confusion matrix must be {m}x{m}")));
    }
    for (k, &nk) in out.class_sizes().iter().enumerate() {
        let col: usize = x.iter().map(|r| r[k]).sum();
        if col != nk {
            return Err(PmdError::NotInSupport(format!(
                "column {} sums to {col} but class {} has {nk} units",
                k + 1,
                k + 1
            )));
        }
    }
    Ok(())
}

/// `P(X = x)` as a product of per-class exact pmfs.
pub fn joint_pmf(out: &ClassifierOutput, x: &[Vec<usize>], opts: &ExactOptions) -> Result<f64> {
    check_matrix(out, x)?;
    let mut prob = 1.0;
    for k in 0..out.m() {
        let rows = out.class_rows(k);
        if rows.is_empty() {
            continue;
        }
        let col = OutcomeVector::new(x.iter().map(|r| r[k]).collect());
        prob *= pmf_at(&Spm::validate(&rows, DEFAULT_ROW_TOL)?, &col, opts)?;
        if prob == 0.0 {
            break;
        }
    }
    Ok(prob)
}

/// Pmf of cell `(j, k)` over `0..=n_k`: a Poisson binomial in the class-`k`
/// units' probabilities of class `j`.
pub fn cell_marginal_pmf(out: &ClassifierOutput, j: usize, k: usize) -> Result<Vec<f64>> {
    let m = out.m();
    if j >= m || k >= m {
        return Err(PmdError::InvalidArgument(format!("cell ({j}, {k}) is outside {m}x{m}")));
    }
    let p: Vec<f64> = out
        .probs
        .iter()
        .zip(&out.labels)
        .filter(|(_, &l)| l == k)
        .map(|(r, _)| r[j])
        .collect();
    if p.is_empty() {
        return Err(PmdError::InvalidArgument(format!("class {} has no units", k + 1)));
    }
    Ok(poisson_binomial_pmf(&p))
}

/// Quantile interval for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInterval {
    /// One-based predicted class.
    pub predicted: usize,
    /// One-based true class.
    pub actual: usize,
    pub mean: f64,
    pub lo: usize,
    pub hi: usize,
    pub level: f64,
}

/// Smallest `c` with `cdf(c) >= q`.
fn quantile(pmf: &[f64], q: f64) -> usize {
    let mut acc = 0.0;
    for (c, p) in pmf.iter().enumerate() {
        acc += p;
        if acc >= q {
            return c;
        }
    }
    pmf.len() - 1
}

pub fn interval_from_pmf(pmf: &[f64], level: f64) -> Result<(usize, usize)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PmdError::InvalidArgument(format!("level {level} is not in (0, 1)")));
    }
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(pmf, tail), quantile(pmf, 1.0 - tail)))
}

pub fn cell_interval(out: &ClassifierOutput, j: usize, k: usize, level: f64) -> Result<CellInterval> {
    let pmf = cell_marginal_pmf(out, j, k)?;
    let (lo, hi) = interval_from_pmf(&pmf, level)?;
    Ok(CellInterval {
        predicted: j + 1,
        actual: k + 1,
        mean: pmf.iter().enumerate().map(|(c, p)| c as f64 * p).sum(),
        lo,
        hi,
        level,
    })
}

/// Intervals for every cell of a nonempty class, plus optional marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub level: f64,
    pub class_sizes: Vec<usize>,
    /// One-based classes with no units; their cells are omitted.
    pub empty_classes: Vec<usize>,
    pub cells: Vec<CellInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<CellMarginal>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMarginal {
    pub predicted: usize,
    pub actual: usize,
    pub pmf: Vec<f64>,
}

pub fn confusion_report(out: &ClassifierOutput, level: f64, with_marginals: bool) -> Result<ConfusionReport> {
    let m = out.m();
    let sizes = out.class_sizes();
    let mut cells = Vec::new();
    let mut marginals = Vec::new();
    for k in (0..m).filter(|&k| sizes[k] > 0) {
        for j in 0..m {
            cells.push(cell_interval(out, j, k, level)?);
            if with_marginals {
                marginals.push(CellMarginal {
                    predicted: j + 1,
                    actual: k + 1,
                    pmf: cell_marginal_pmf(out, j, k)?,
                });
            }
        }
    }
    Ok(ConfusionReport {
        level,
        class_sizes: sizes.clone(),
        empty_classes: (0..m).filter(|&k| sizes[k] == 0).map(|k| k + 1).collect(),
        cells,
        marginals: with_marginals.then_some(marginals),
    })
}

/// `n` units with uniform true labels and probability rows that lean toward
/// the true class.
pub fn synthetic_classifier(n: usize, m: usize, seed: u64) -> ClassifierOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..m);
        let mut row: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        row[k] += 2.0;
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
        probs.push(row);
        labels.push(k);
    }
    ClassifierOutput::new(probs, labels).expect("valid by construction")
}
