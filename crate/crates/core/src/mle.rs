//! Regression on aggregated counts.
//!
//! Each group has one covariate row per unit but only the group's category
//! counts are observed. Unit probabilities follow a softmax link with the
//! last category as baseline; the likelihood of a group is the PMD pmf of
//! its counts.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PmdError, Result};
use crate::exact::{pmf_at, ExactOptions};
use crate::mvn::MvnOptions;
use crate::normal::na_pmf_at;
use crate::spm::{OutcomeVector, Spm};

/// Smallest likelihood a group may contribute.
pub const LIK_FLOOR: f64 = 1e-300;
/// Fitted probabilities closer than this to 0 or 1 mark a drifting fit.
pub const SEPARATION_EPS: f64 = 1e-6;

/// One group: a covariate row per unit (leading column of ones) and the
/// observed category counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedGroup {
    covariates: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl AggregatedGroup {
    pub fn new(covariates: Vec<Vec<f64>>, counts: Vec<usize>) -> Result<Self> {
        let p = covariates.first().map_or(0, Vec::len);
        if p == 0 {
            return Err(PmdError::Dimension("group has no covariate rows".into()));
        }
        if counts.len() < 2 {
            return Err(PmdError::Dimension("need at least two categories".into()));
        }
        for (i, row) in covariates.iter().enumerate() {
            if row.len() != p {
                return Err(PmdError::Dimension(format!(
                    "covariate row {i} has {} entries, expected {p}",
                    row.len()
                )));
            }
            if row[0] != 1.0 {
                return Err(PmdError::InvalidArgument(format!(
                    "covariate row {i} must start with the intercept 1"
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(PmdError::InvalidArgument(format!(
                    "covariate row {i} has non-finite value {v}"
                )));
            }
        }
        let total: usize = counts.iter().sum();
        if total != covariates.len() {
            return Err(PmdError::NotInSupport(format!(
                "counts sum to {total} but the group has {} units",
                covariates.len()
            )));
        }
        Ok(Self { covariates, counts })
    }

    /// Prepends the intercept to raw covariate rows.
    pub fn with_intercept(raw: Vec<Vec<f64>>, counts: Vec<usize>) -> Result<Self> {
        let covariates = raw
            .into_iter()
            .map(|r| std::iter::once(1.0).chain(r).collect())
            .collect();
        Self::new(covariates, counts)
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.covariates.len()
    }

    pub fn m(&self) -> usize {
        self.counts.len()
    }

    /// Covariate columns including the intercept.
    pub fn p(&self) -> usize {
        self.covariates[0].len()
    }
}

/// `(m - 1) x (v + 1)` coefficients; row `k` belongs to category `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(m: usize, p: usize) -> Self {
        Self {
            rows: m - 1,
            cols: p,
            values: vec![0.0; (m - 1) * p],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(PmdError::Dimension("coefficient rows are ragged or empty".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PmdError::InvalidArgument("coefficients must be finite".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values: rows.concat(),
        })
    }

    fn from_flat(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        Self { rows, cols, values }
    }

    /// Number of non-baseline categories.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, k: usize, c: usize) -> f64 {
        self.values[k * self.cols + c]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.cols..(k + 1) * self.cols]
    }

    /// Row-major view, the optimizer's parameter vector.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

/// Unit probabilities for one covariate row.
fn softmax_row(beta: &Coefficients, g: &[f64]) -> Vec<f64> {
    let mut eta: Vec<f64> = (0..beta.rows)
        .map(|k| beta.row(k).iter().zip(g).map(|(b, x)| b * x).sum())
        .collect();
    eta.push(0.0);
    let top = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    eta.iter_mut().for_each(|e| *e = (*e - top).exp());
    let total: f64 = eta.iter().sum();
    eta.iter_mut().for_each(|e| *e /= total);
    eta
}

/// The group's SPM under `beta`.
pub fn softmax_spm(beta: &Coefficients, group: &AggregatedGroup) -> Result<Spm> {
    if beta.cols != group.p() || beta.rows + 1 != group.m() {
        return Err(PmdError::Dimension(format!(
            "coefficients are {}x{} but the group needs {}x{}",
            beta.rows,
            beta.cols,
            group.m() - 1,
            group.p()
        )));
    }
    Spm::new(group.covariates.iter().map(|g| softmax_row(beta, g)).collect())
}

/// Which pmf backs the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodMethod {
    Exact,
    Na,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodOptions {
    pub method: LikelihoodMethod,
    pub exact: ExactOptions,
    pub mvn: MvnOptions,
}

impl Default for LikelihoodOptions {
    fn default() -> Self {
        Self {
            method: LikelihoodMethod::Exact,
            exact: ExactOptions::default(),
            mvn: MvnOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLik {
    pub value: f64,
    /// Groups whose likelihood fell below [`LIK_FLOOR`].
    pub floored: usize,
}

/// Probability of one group's counts.
pub fn group_prob(beta: &Coefficients, group: &AggregatedGroup, opts: &LikelihoodOptions) -> Result<f64> {
    let spm = softmax_spm(beta, group)?;
    let x = OutcomeVector::new(group.counts.clone());
    match opts.method {
        LikelihoodMethod::Exact => pmf_at(&spm, &x, &opts.exact),
        LikelihoodMethod::Na => Ok(na_pmf_at(&spm, &x, &opts.mvn)?.value),
    }
}

/// Sum over groups of the log pmf at the observed counts.
pub fn loglik(beta: &Coefficients, groups: &[AggregatedGroup], opts: &LikelihoodOptions) -> Result<LogLik> {
    let probs: Vec<f64> = groups
        .par_iter()
        .map(|g| group_prob(beta, g, opts))
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    let mut floored = 0;
    for p in probs {
        if p < LIK_FLOOR {
            floored += 1;
            value += LIK_FLOOR.ln();
        } else {
            value += p.ln();
        }
    }
    Ok(LogLik { value, floored })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub likelihood: LikelihoodOptions,
    pub init: Option<Coefficients>,
    pub max_params: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    /// Relative step of the central-difference gradient.
    pub grad_step: f64,
    /// Relative step of the central-difference Hessian.
    pub hess_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            likelihood: LikelihoodOptions::default(),
            init: None,
            max_params: 200,
            max_iter: 500,
            grad_tol: 1e-5,
            rel_tol: 1e-10,
            grad_step: 1e-5,
            hess_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: Coefficients,
    /// Absent when the Hessian could not be inverted.
    pub std_errors: Option<Coefficients>,
    pub ci_lower: Option<Coefficients>,
    pub ci_upper: Option<Coefficients>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub hessian_singular: bool,
    /// Some fitted probability is within [`SEPARATION_EPS`] of 0 or 1, so
    /// the estimates are likely heading off to infinity.
    pub diverging: bool,
    pub floored_groups: usize,
}

/// One line of the coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub category: usize,
    pub coefficient: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

impl FitResult {
    /// Rows per (category, coefficient). `names` labels the columns and
    /// defaults to `intercept, x1, x2, ...`.
    pub fn table(&self, names: Option<&[String]>) -> Vec<CoefficientRow> {
        let b = &self.beta_hat;
        let mut out = Vec::with_capacity(b.values.len());
        for k in 0..b.rows {
            for c in 0..b.cols {
                let coefficient = match names.and_then(|n| n.get(c)) {
                    Some(s) => s.clone(),
                    None if c == 0 => "intercept".to_string(),
                    None => format!("x{c}"),
                };
                out.push(CoefficientRow {
                    category: k + 1,
                    coefficient,
                    estimate: b.get(k, c),
                    se: self.std_errors.as_ref().map(|s| s.get(k, c)),
                    ci_lower: self.ci_lower.as_ref().map(|s| s.get(k, c)),
                    ci_upper: self.ci_upper.as_ref().map(|s| s.get(k, c)),
                });
            }
        }
        out
    }

    pub fn to_json(&self, names: Option<&[String]>) -> serde_json::Value {
        serde_json::json!({
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "hessian_singular": self.hessian_singular,
            "diverging": self.diverging,
            "floored_groups": self.floored_groups,
            "coefficients": self.table(names),
        })
    }
}

struct Objective<'a> {
    groups: &'a [AggregatedGroup],
    opts: &'a LikelihoodOptions,
    rows: usize,
    cols: usize,
}

impl Objective<'_> {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        let beta = Coefficients::from_flat(self.rows, self.cols, theta.to_vec());
        Ok(loglik(&beta, self.groups, self.opts)?.value)
    }

    fn gradient(&self, theta: &[f64], rel_step: f64) -> Result<Vec<f64>> {
        let mut t = theta.to_vec();
        (0..theta.len())
            .map(|c| {
                let h = rel_step * theta[c].abs().max(1.0);
                t[c] = theta[c] + h;
                let up = self.value(&t)?;
                t[c] = theta[c] - h;
                let down = self.value(&t)?;
                t[c] = theta[c];
                Ok((up - down) / (2.0 * h))
            })
            .collect()
    }

    fn hessian(&self, theta: &[f64], rel_step: f64, f0: f64) -> Result<DMatrix<f64>> {
        let q = theta.len();
        let h: Vec<f64> = theta.iter().map(|v| rel_step * v.abs().max(1.0)).collect();
        let mut t = theta.to_vec();
        let mut hess = DMatrix::zeros(q, q);
        for a in 0..q {
            t[a] = theta[a] + h[a];
            let up = self.value(&t)?;
            t[a] = theta[a] - h[a];
            let down = self.value(&t)?;
            t[a] = theta[a];
            hess[(a, a)] = (up - 2.0 * f0 + down) / (h[a] * h[a]);
            for b in 0..a {
                let mut corner = |sa: f64, sb: f64| {
                    t[a] = theta[a] + sa * h[a];
                    t[b] = theta[b] + sb * h[b];
                    let v = self.value(&t);
                    t[a] = theta[a];
                    t[b] = theta[b];
                    v
                };
                let v = corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?;
                hess[(a, b)] = v / (4.0 * h[a] * h[b]);
                hess[(b, a)] = hess[(a, b)];
            }
        }
        Ok(hess)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Maximum-likelihood fit by BFGS on numerical gradients.
pub fn fit(groups: &[AggregatedGroup], opts: &FitOptions) -> Result<FitResult> {
    let first = groups
        .first()
        .ok_or_else(|| PmdError::InvalidArgument("no groups to fit".into()))?;
    let (m, p) = (first.m(), first.p());
    if let Some(g) = groups.iter().find(|g| g.m() != m || g.p() != p) {
        return Err(PmdError::Dimension(format!(
            "groups disagree on shape: {}x{} categories/columns vs {m}x{p}",
            g.m(),
            g.p()
        )));
    }
    let q = (m - 1) * p;
    if q > opts.max_params {
        return Err(PmdError::InvalidArgument(format!(
            "{q} parameters exceed the limit of {}",
            opts.max_params
        )));
    }
    let obj = Objective {
        groups,
        opts: &opts.likelihood,
        rows: m - 1,
        cols: p,
    };
    let init = match &opts.init {
        Some(b) if b.rows != m - 1 || b.cols != p => {
            return Err(PmdError::Dimension("initial coefficients have the wrong shape".into()))
        }
        Some(b) => b.values.clone(),
        None => vec![0.0; q],
    };

    // Minimize the negative log-likelihood.
    let mut theta = DVector::from_vec(init);
    let mut fx = -obj.value(theta.as_slice())?;
    let mut grad = -DVector::from_vec(obj.gradient(theta.as_slice(), opts.grad_step)?);
    let mut hinv = DMatrix::<f64>::identity(q, q);
    let mut scaled = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if max_abs(grad.as_slice()) < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = -(&hinv * &grad);
        let mut slope = grad.dot(&dir);
        if slope >= 0.0 {
            hinv = DMatrix::identity(q, q);
            scaled = false;
            dir = -grad.clone();
            slope = grad.dot(&dir);
        }
        if !scaled {
            let big = max_abs(dir.as_slice());
            if big > 1.0 {
                dir /= big;
                slope /= big;
            }
        }
        let mut t = 1.0;
        let next = loop {
            let cand = &theta + &dir * t;
            let fc = -obj.value(cand.as_slice())?;
            if fc.is_finite() && fc <= fx + 1e-4 * t * slope {
                break Some((cand, fc));
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        let Some((cand, fc)) = next else {
            break;
        };
        let gc = -DVector::from_vec(obj.gradient(cand.as_slice(), opts.grad_step)?);
        let s = &cand - &theta;
        let y = &gc - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                hinv = DMatrix::identity(q, q) * (sy / y.dot(&y));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(q, q);
            let left = &eye - &s * y.transpose() * rho;
            let right = &eye - &y * s.transpose() * rho;
            hinv = &left * &hinv * &right + &s * s.transpose() * rho;
        }
        let rel = (fx - fc).abs() / fx.abs().max(f64::MIN_POSITIVE);
        theta = cand;
        fx = fc;
        grad = gc;
        // On flat objectives a tiny change can come with a sizeable
        // gradient, so the change test also needs a near-stationary point.
        if rel < opts.rel_tol && max_abs(grad.as_slice()) < 10.0 * opts.grad_tol {
            converged = true;
            break;
        }
    }
    if !converged && max_abs(grad.as_slice()) < opts.grad_tol {
        converged = true;
    }

    let beta_hat = Coefficients::from_flat(m - 1, p, theta.as_slice().to_vec());
    let final_ll = loglik(&beta_hat, groups, &opts.likelihood)?;
    let neg_hess = -obj.hessian(theta.as_slice(), opts.hess_step, final_ll.value)?;
    let cov = neg_hess.cholesky().map(|c| c.inverse());
    let (std_errors, ci_lower, ci_upper, hessian_singular) = match cov {
        Some(cov) if (0..q).all(|i| cov[(i, i)].is_finite() && cov[(i, i)] > 0.0) => {
            let se: Vec<f64> = (0..q).map(|i| cov[(i, i)].sqrt()).collect();
            let lo = theta.iter().zip(&se).map(|(b, s)| b - 1.96 * s).collect();
            let hi = theta.iter().zip(&se).map(|(b, s)| b + 1.96 * s).collect();
            (
                Some(Coefficients::from_flat(m - 1, p, se)),
                Some(Coefficients::from_flat(m - 1, p, lo)),
                Some(Coefficients::from_flat(m - 1, p, hi)),
                false,
            )
        }
        _ => (None, None, None, true),
    };
    let diverging = groups.iter().any(|g| {
        g.covariates.iter().any(|row| {
            softmax_row(&beta_hat, row)
                .iter()
                .any(|&pr| !(SEPARATION_EPS..=1.0 - SEPARATION_EPS).contains(&pr))
        })
    });
    Ok(FitResult {
        beta_hat,
        std_errors,
        ci_lower,
        ci_upper,
        loglik: final_ll.value,
        converged,
        iterations,
        hessian_singular,
        diverging,
        floored_groups: final_ll.floored,
    })
}

/// A fitted group's SPM and the probability of its observed counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub spm: Spm,
    pub prob: f64,
}

pub fn predict_spm(fit: &FitResult, group: &AggregatedGroup, opts: &LikelihoodOptions) -> Result<Prediction> {
    if !fit.converged {
        return Err(PmdError::InvalidArgument("the fit did not converge".into()));
    }
    Ok(Prediction {
        spm: softmax_spm(&fit.beta_hat, group)?,
        prob: group_prob(&fit.beta_hat, group, opts)?,
    })
}

/// Groups of `n_i` units with standard-normal covariates and categories
/// drawn from the softmax model at `beta`.
pub fn synthetic_groups(beta: &Coefficients, h: usize, n_i: usize, seed: u64) -> Vec<AggregatedGroup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = beta.cols - 1;
    (0..h)
        .map(|_| {
            let mut counts = vec![0usize; beta.rows + 1];
            let covariates: Vec<Vec<f64>> = (0..n_i)
                .map(|_| {
                    let row: Vec<f64> = std::iter::once(1.0)
                        .chain((0..v).map(|_| rng.sample::<f64, _>(StandardNormal)))
                        .collect();
                    let probs = softmax_row(beta, &row);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let k = probs
                        .iter()
                        .position(|&pr| {
                            acc += pr;
                            u < acc
                        })
                        .unwrap_or(probs.len() - 1);
                    counts[k] += 1;
                    row
                })
                .collect();
            AggregatedGroup::new(covariates, counts).expect("consistent by construction")
        })
        .collect()
}

/// Groups read from CSV together with the covariate column names.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupData {
    pub ids: Vec<String>,
    pub groups: Vec<AggregatedGroup>,
    /// `intercept` followed by the covariate headers.
    pub names: Vec<String>,
}

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| PmdError::Parse(format!("line {line}: `{field}` is not a number")))
}

fn parse_usize(field: &str, line: u64) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| PmdError::Parse(format!("line {line}: `{field}` is not a count")))
}

fn covariate_names(headers: &csv::StringRecord, range: std::ops::Range<usize>) -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(range.map(|c| headers[c].trim().to_string()))
        .collect()
}

/// Unit-level CSV `group_id, covariate_1..covariate_v, category` with
/// categories `1..=m`. `m` defaults to the largest category seen.
pub fn read_raw_groups<R: Read>(reader: R, m: Option<usize>) -> Result<GroupData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let width = headers.len();
    if width < 2 {
        return Err(PmdError::Parse("need group_id and category columns".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut units: HashMap<String, Vec<(Vec<f64>, usize)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[0].to_string();
        let cov = (1..width - 1)
            .map(|c| parse_f64(&rec[c], line))
            .collect::<Result<Vec<_>>>()?;
        let cat = parse_usize(&rec[width - 1], line)?;
        if cat == 0 {
            return Err(PmdError::Parse(format!("line {line}: categories start at 1")));
        }
        units
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push((cov, cat));
    }
    let seen = units.values().flatten().map(|u| u.1).max().unwrap_or(0);
    let m = m.unwrap_or(seen);
    if seen > m {
        return Err(PmdError::Parse(format!("category {seen} exceeds m = {m}")));
    }
    let mut groups = Vec::with_capacity(order.len());
    for id in &order {
        let mut counts = vec![0usize; m];
        let raw = units[id]
            .iter()
            .map(|(cov, cat)| {
                counts[cat - 1] += 1;
                cov.clone()
            })
            .collect();
        groups.push(AggregatedGroup::with_intercept(raw, counts)?);
    }
    Ok(GroupData {
        ids: order,
        groups,
        names: covariate_names(&headers, 1..width - 1),
    })
}

/// Pre-aggregated input: a unit-level covariates CSV
/// `group_id, covariate_1..covariate_v` and a counts CSV
/// `group_id, count_1..count_m` with one line per group.
pub fn read_aggregated_groups<R1: Read, R2: Read>(covariates: R1, counts: R2) -> Result<GroupData> {
    let mut crdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(counts);
    let mut order = Vec::new();
    let mut count_map = HashMap::new();
    for rec in crdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let c = (1..rec.len())
            .map(|k| parse_usize(&rec[k], line))
            .collect::<Result<Vec<_>>>()?;
        if count_map.insert(rec[0].to_string(), c).is_some() {
            return Err(PmdError::Parse(format!("line {line}: duplicate group `{}`", &rec[0])));
        }
        order.push(rec[0].to_string());
    }
    let mut vrdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(covariates);
    let headers = vrdr.headers()?.clone();
    let mut rows: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    for rec in vrdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let cov = (1..rec.len())
            .map(|c| parse_f64(&rec[c], line))
            .collect::<Result<Vec<_>>>()?;
        if !count_map.contains_key(&rec[0]) {
            return Err(PmdError::Parse(format!(
                "line {line}: group `{}` has no counts",
                &rec[0]
            )));
        }
        rows.entry(rec[0].to_string()).or_default().push(cov);
    }
    let groups = order
        .iter()
        .map(|id| {
            let raw = rows.remove(id).unwrap_or_default();
            AggregatedGroup::with_intercept(raw, count_map[id].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupData {
        ids: order,
        groups,
        names: covariate_names(&headers, 1..headers.len()),
    })
}

pub fn read_raw_groups_path(path: impl AsRef<Path>, m: Option<usize>) -> Result<GroupData> {
    read_raw_groups(std::fs::File::open(path)?, m)
}
