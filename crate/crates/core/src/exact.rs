//! Exact pmf and cdf by inverting the characteristic function on a grid.
//!
//! With `d = m - 1` reduced coordinates and `omega = 2 pi / (n + 1)`, the
//! characteristic function of the reduced count vector evaluated at
//! `t = omega * l` is
//!
//! ```text
//! q(l) = prod_i [ p_im + sum_{j<m} p_ij exp(i omega l_j) ]
//! ```
//!
//! Because every reduced coordinate lives in `0..=n`, the values `q(l)` for
//! `l` in `{0..=n}^d` are exactly the inverse DFT of the pmf array, so a
//! forward DFT of `q` divided by `(n + 1)^d` recovers the pmf. The transform
//! length is `n + 1` on every axis with no padding.

use std::io::{Read, Write};
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{PmdError, Result};
use crate::fft;
use crate::spm::{BlockPartition, OutcomeVector, Spm, DEFAULT_ROW_TOL};

/// Default cap on the number of grid cells, `2^28`.
pub const DEFAULT_MEM_CAP_CELLS: u128 = 1 << 28;
/// Negative values above `-DEFAULT_CLAMP_EPS` are treated as round-off.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-10;

const BINARY_MAGIC: &[u8; 4] = b"PMD1";
const CF_CHUNK: usize = 2048;

/// Knobs for the exact method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Grids must have strictly fewer cells than this.
    pub mem_cap_cells: u128,
    /// Clamp threshold for negative round-off.
    pub clamp_eps: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            mem_cap_cells: DEFAULT_MEM_CAP_CELLS,
            clamp_eps: DEFAULT_CLAMP_EPS,
        }
    }
}

impl ExactOptions {
    pub fn with_mem_cap(mut self, cells: u128) -> Self {
        self.mem_cap_cells = cells;
        self
    }

    fn check_cap(&self, n: usize, m: usize) -> Result<usize> {
        let required = crate::spm::grid_cells(n, m).unwrap_or(u128::MAX);
        if required >= self.mem_cap_cells || required > usize::MAX as u128 {
            return Err(PmdError::MemoryCap {
                required,
                cap: self.mem_cap_cells,
                n,
                m,
            });
        }
        Ok(required as usize)
    }
}

/// Characteristic function values on the full `(n + 1)^(m - 1)` grid.
#[derive(Debug, Clone)]
pub struct CfGrid {
    pub n: usize,
    pub m: usize,
    pub omega: f64,
    /// Row-major, first axis slowest.
    pub values: Vec<Complex64>,
}

impl CfGrid {
    pub fn get(&self, l: &[usize]) -> Complex64 {
        self.values[flat_index(l, self.n + 1)]
    }
}

/// Evaluates `q(l)` at every grid point.
pub fn cf_grid(spm: &Spm, opts: &ExactOptions) -> Result<CfGrid> {
    let (n, m) = (spm.n(), spm.m());
    let cells = opts.check_cap(n, m)?;
    let d = m - 1;
    let len = n + 1;
    let omega = 2.0 * std::f64::consts::PI / len as f64;
    let twiddle: Vec<Complex64> = (0..len)
        .map(|k| Complex64::from_polar(1.0, omega * k as f64))
        .collect();

    let mut values = vec![Complex64::new(1.0, 0.0); cells];
    values
        .par_chunks_mut(CF_CHUNK)
        .enumerate()
        .for_each(|(chunk_idx, out)| {
            let start = chunk_idx * CF_CHUNK;
            // Multi-indices of this chunk, laid out cell-major.
            let mut l = unflatten(start, len, d);
            let mut idx = Vec::with_capacity(out.len() * d);
            for _ in 0..out.len() {
                idx.extend_from_slice(&l);
                increment(&mut l, len);
            }
            for row in spm.rows() {
                let last = row[d];
                for (c, q) in out.iter_mut().enumerate() {
                    let mut factor = Complex64::new(last, 0.0);
                    for (j, &lj) in idx[c * d..(c + 1) * d].iter().enumerate() {
                        factor += twiddle[lj] * row[j];
                    }
                    *q *= factor;
                }
            }
        });
    Ok(CfGrid {
        n,
        m,
        omega,
        values,
    })
}

/// The full pmf over the reduced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfArray {
    n: usize,
    m: usize,
    values: Vec<f64>,
    /// Total negative round-off mass clamped to zero on feasible cells.
    pub clamped_mass: f64,
    /// Total absolute mass zeroed on cells with `sum(x*) > n`.
    pub infeasible_mass: f64,
}

impl PmfArray {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Raw grid values, row-major with the first axis slowest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dims(&self) -> usize {
        self.m - 1
    }

    /// Probability of the reduced vector `x*`; zero outside the grid.
    pub fn get(&self, reduced: &[usize]) -> f64 {
        if reduced.len() != self.dims() || reduced.iter().any(|&c| c > self.n) {
            return 0.0;
        }
        self.values[flat_index(reduced, self.n + 1)]
    }

    /// Probability of a full outcome vector.
    pub fn prob(&self, x: &OutcomeVector) -> Result<f64> {
        x.check_support(self.n, self.m)?;
        Ok(self.get(x.reduced()))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Reduced coordinates of a flat grid index.
    pub fn reduced_of(&self, flat: usize) -> Vec<usize> {
        unflatten(flat, self.n + 1, self.dims())
    }

    /// `(x*, p)` for every support point, in lexicographic order of `x*`.
    pub fn support(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let len = self.n + 1;
        let d = self.dims();
        let n = self.n;
        let mut l = vec![0usize; d];
        let mut first = true;
        (0..self.values.len()).filter_map(move |flat| {
            if first {
                first = false;
            } else {
                increment(&mut l, len);
            }
            (l.iter().sum::<usize>() <= n).then(|| (l.clone(), self.values[flat]))
        })
    }

    /// `P(X_j <= x_j for j < m)`, an orthant sum in reduced coordinates.
    /// Query coordinates above `n` saturate.
    pub fn cdf(&self, reduced: &[usize]) -> Result<f64> {
        if reduced.len() != self.dims() {
            return Err(PmdError::Dimension(format!(
                "cdf query has {} reduced coordinates, expected {}",
                reduced.len(),
                self.dims()
            )));
        }
        Ok(self
            .support()
            .filter(|(x, _)| x.iter().zip(reduced).all(|(a, b)| a <= b))
            .map(|(_, p)| p)
            .sum())
    }

    /// CSV with `m - 1` index columns and a probability column, support
    /// cells only.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..self.m).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},p", header.join(","))?;
        for (x, p) in self.support() {
            let idx: Vec<String> = x.iter().map(ToString::to_string).collect();
            writeln!(w, "{},{p:.16e}", idx.join(","))?;
        }
        Ok(())
    }

    /// Binary layout: `PMD1`, `u32 n`, `u32 m`, then every grid cell as a
    /// little-endian `f64`, first axis slowest.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.m as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(PmdError::Parse("bad magic bytes, expected PMD1".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let n = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let m = u32::from_le_bytes(word) as usize;
        if m < 2 {
            return Err(PmdError::Parse(format!("m = {m} in header")));
        }
        let cells = crate::spm::grid_cells(n, m)
            .and_then(|c| usize::try_from(c).ok())
            .ok_or_else(|| PmdError::Parse("grid size overflows".into()))?;
        let mut values = Vec::with_capacity(cells);
        let mut buf = [0u8; 8];
        for _ in 0..cells {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok(Self {
            n,
            m,
            values,
            clamped_mass: 0.0,
            infeasible_mass: 0.0,
        })
    }
}

/// Exact pmf over the whole reduced grid.
pub fn pmf_full(spm: &Spm, opts: &ExactOptions) -> Result<PmfArray> {
    let grid = cf_grid(spm, opts)?;
    let (n, m) = (grid.n, grid.m);
    let d = m - 1;
    let len = n + 1;
    let mut data = grid.values;
    fft::forward_nd(&mut data, len, d);
    let scale = 1.0 / data.len() as f64;

    let mut values = Vec::with_capacity(data.len());
    let mut clamped = 0.0;
    let mut infeasible = 0.0;
    let mut l = vec![0usize; d];
    for (flat, z) in data.iter().enumerate() {
        if flat > 0 {
            increment(&mut l, len);
        }
        let v = z.re * scale;
        if l.iter().sum::<usize>() > n {
            infeasible += v.abs();
            values.push(0.0);
        } else if v < 0.0 {
            if v <= -opts.clamp_eps {
                return Err(PmdError::Numerical(format!(
                    "pmf value {v:e} at x* = {l:?} is below -{:e}",
                    opts.clamp_eps
                )));
            }
            clamped -= v;
            values.push(0.0);
        } else {
            values.push(v.min(1.0));
        }
    }
    Ok(PmfArray {
        n,
        m,
        values,
        clamped_mass: clamped,
        infeasible_mass: infeasible,
    })
}

/// Exact pmf at one support point. Builds the whole grid; use [`ExactPmd`]
/// for repeated queries.
pub fn pmf_at(spm: &Spm, x: &OutcomeVector, opts: &ExactOptions) -> Result<f64> {
    x.check_support(spm.n(), spm.m())?;
    pmf_full(spm, opts)?.prob(x)
}

/// Exact cdf at `x`: the sum of the pmf over support points whose first
/// `m - 1` counts are all at most those of `x`. Only the reduced part of `x`
/// is used.
pub fn cdf_at(spm: &Spm, x: &OutcomeVector, opts: &ExactOptions) -> Result<f64> {
    check_cdf_query(spm, x)?;
    pmf_full(spm, opts)?.cdf(x.reduced())
}

fn check_cdf_query(spm: &Spm, x: &OutcomeVector) -> Result<()> {
    if x.len() != spm.m() {
        return Err(PmdError::Dimension(format!(
            "cdf query has {} entries, expected m = {}",
            x.len(),
            spm.m()
        )));
    }
    Ok(())
}

/// Joint pmf as a product of independent per-block pmfs.
pub fn pmf_blockwise(
    spm: &Spm,
    partition: &BlockPartition,
    x: &OutcomeVector,
    opts: &ExactOptions,
) -> Result<f64> {
    x.check_support(spm.n(), spm.m())?;
    partition.check(spm, DEFAULT_ROW_TOL)?;
    let mut prob = 1.0;
    for block in &partition.blocks {
        let xk: Vec<usize> = block.cols.iter().map(|&j| x.counts()[j]).collect();
        let factor = block_pmf(spm, &block.rows, &block.cols, &xk, opts)?;
        if factor == 0.0 {
            return Ok(0.0);
        }
        prob *= factor;
    }
    Ok(prob)
}

fn block_pmf(
    spm: &Spm,
    rows: &[usize],
    cols: &[usize],
    xk: &[usize],
    opts: &ExactOptions,
) -> Result<f64> {
    let total: usize = xk.iter().sum();
    if total != rows.len() {
        return Ok(0.0);
    }
    // A block with no rows or a single column is deterministic.
    if rows.is_empty() || cols.len() == 1 {
        return Ok(1.0);
    }
    let sub = Spm::validate(&spm.select(rows, cols), DEFAULT_ROW_TOL)?;
    pmf_at(&sub, &OutcomeVector::new(xk.to_vec()), opts)
}

/// An SPM paired with its lazily computed exact pmf.
#[derive(Debug)]
pub struct ExactPmd {
    spm: Spm,
    opts: ExactOptions,
    pmf: OnceLock<PmfArray>,
}

impl ExactPmd {
    pub fn new(spm: Spm, opts: ExactOptions) -> Self {
        Self {
            spm,
            opts,
            pmf: OnceLock::new(),
        }
    }

    pub fn spm(&self) -> &Spm {
        &self.spm
    }

    /// The full pmf, computed on first use.
    pub fn pmf(&self) -> Result<&PmfArray> {
        if let Some(p) = self.pmf.get() {
            return Ok(p);
        }
        let computed = pmf_full(&self.spm, &self.opts)?;
        Ok(self.pmf.get_or_init(|| computed))
    }

    pub fn pmf_at(&self, x: &OutcomeVector) -> Result<f64> {
        x.check_support(self.spm.n(), self.spm.m())?;
        self.pmf()?.prob(x)
    }

    pub fn cdf_at(&self, x: &OutcomeVector) -> Result<f64> {
        check_cdf_query(&self.spm, x)?;
        self.pmf()?.cdf(x.reduced())
    }
}

pub(crate) fn flat_index(l: &[usize], len: usize) -> usize {
    l.iter().fold(0, |acc, &v| acc * len + v)
}

pub(crate) fn unflatten(mut flat: usize, len: usize, d: usize) -> Vec<usize> {
    let mut l = vec![0; d];
    for slot in l.iter_mut().rev() {
        *slot = flat % len;
        flat /= len;
    }
    l
}

/// Odometer step, last axis fastest.
pub(crate) fn increment(l: &mut [usize], len: usize) {
    for slot in l.iter_mut().rev() {
        *slot += 1;
        if *slot < len {
            return;
        }
        *slot = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::four_voters;
    use approx::assert_abs_diff_eq;

    fn opts() -> ExactOptions {
        ExactOptions::default()
    }

    #[test]
    fn cf_at_origin_is_one() {
        let g = cf_grid(&four_voters(), &opts()).unwrap();
        assert_abs_diff_eq!(g.get(&[0, 0]).re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.get(&[0, 0]).im, 0.0, epsilon = 1e-14);
        assert!(g.values.iter().all(|q| q.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn cf_single_trial() {
        let spm = Spm::new(vec![vec![0.3, 0.7]]).unwrap();
        let g = cf_grid(&spm, &opts()).unwrap();
        let expect = Complex64::new(0.7, 0.0) + Complex64::from_polar(0.3, std::f64::consts::PI);
        assert!((g.get(&[1]) - expect).norm() < 1e-15);
    }

    #[test]
    fn cf_matches_direct_product() {
        let spm = four_voters();
        let g = cf_grid(&spm, &opts()).unwrap();
        let omega = 2.0 * std::f64::consts::PI / 5.0;
        let mut direct = Complex64::new(1.0, 0.0);
        for row in spm.rows() {
            direct *= Complex64::new(row[2], 0.0)
                + Complex64::from_polar(row[0], omega)
                + Complex64::new(row[1], 0.0);
        }
        assert!((g.get(&[1, 0]) - direct).norm() < 1e-15);
    }

    #[test]
    fn four_voter_values() {
        let pmf = pmf_full(&four_voters(), &opts()).unwrap();
        assert_abs_diff_eq!(pmf.get(&[4, 0]), 0.016, epsilon = 1e-12);
        assert_abs_diff_eq!(pmf.get(&[1, 3]), 0.0236, epsilon = 1e-12);
        assert_abs_diff_eq!(pmf.total(), 1.0, epsilon = 1e-12);
        assert_eq!(pmf.support().count(), 15);
        assert_eq!(pmf.get(&[4, 1]), 0.0);
    }

    #[test]
    fn identical_rows_are_multinomial() {
        let spm = Spm::new(vec![vec![0.2, 0.3, 0.5]; 3]).unwrap();
        let pmf = pmf_full(&spm, &opts()).unwrap();
        let fact = |k: usize| (1..=k).product::<usize>() as f64;
        for (x, p) in pmf.support() {
            let x3 = 3 - x[0] - x[1];
            let expect = fact(3) / (fact(x[0]) * fact(x[1]) * fact(x3))
                * 0.2f64.powi(x[0] as i32)
                * 0.3f64.powi(x[1] as i32)
                * 0.5f64.powi(x3 as i32);
            assert_abs_diff_eq!(p, expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn point_queries_check_support() {
        let spm = four_voters();
        let good = OutcomeVector::new(vec![4, 0, 0]);
        assert_abs_diff_eq!(pmf_at(&spm, &good, &opts()).unwrap(), 0.016, epsilon = 1e-12);
        let bad = OutcomeVector::new(vec![4, 0, 1]);
        assert!(matches!(
            pmf_at(&spm, &bad, &opts()),
            Err(PmdError::NotInSupport(_))
        ));
    }

    #[test]
    fn cdf_corners() {
        let spm = four_voters();
        let all = cdf_at(&spm, &OutcomeVector::new(vec![4, 4, 0]), &opts()).unwrap();
        assert_abs_diff_eq!(all, 1.0, epsilon = 1e-8);
        let none = cdf_at(&spm, &OutcomeVector::new(vec![0, 0, 4]), &opts()).unwrap();
        let prod_last: f64 = spm.rows().map(|r| r[2]).product();
        assert_abs_diff_eq!(none, prod_last, epsilon = 1e-14);
    }

    #[test]
    fn memory_cap_reports_advice() {
        let spm = Spm::new(vec![vec![0.125; 8]; 15]).unwrap();
        let err = pmf_full(&spm, &opts()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, PmdError::MemoryCap { .. }));
        assert!(msg.contains("use SIM (m moderate, n small)"), "{msg}");
    }

    #[test]
    fn binary_round_trip() {
        let pmf = pmf_full(&four_voters(), &opts()).unwrap();
        let mut buf = Vec::new();
        pmf.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"PMD1");
        assert_eq!(buf.len(), 12 + 25 * 8);
        let back = PmfArray::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.values(), pmf.values());
        assert!(PmfArray::read_binary(&b"NOPE"[..]).is_err());
    }

    #[test]
    fn csv_lists_support_only() {
        let pmf = pmf_full(&four_voters(), &opts()).unwrap();
        let mut buf = Vec::new();
        pmf.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,x2,p"));
        assert_eq!(lines.count(), 15);
    }

    #[test]
    fn blockwise_two_categorical_blocks() {
        let spm = Spm::new(vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.3, 0.7]]).unwrap();
        let part = crate::spm::detect_blocks(&spm, 0.0);
        let x = OutcomeVector::new(vec![0, 1, 0, 1]);
        let p = pmf_blockwise(&spm, &part, &x, &opts()).unwrap();
        assert_abs_diff_eq!(p, 0.5 * 0.7, epsilon = 1e-14);
        let direct = pmf_at(&spm, &x, &opts()).unwrap();
        assert_abs_diff_eq!(p, direct, epsilon = 1e-14);
        let cross = OutcomeVector::new(vec![1, 1, 0, 0]);
        assert_eq!(pmf_blockwise(&spm, &part, &cross, &opts()).unwrap(), 0.0);
    }

    #[test]
    fn blockwise_single_block_matches_pmf_at() {
        let spm = four_voters();
        let part = BlockPartition::single(4, 3);
        let x = OutcomeVector::new(vec![1, 3, 0]);
        assert_abs_diff_eq!(
            pmf_blockwise(&spm, &part, &x, &opts()).unwrap(),
            0.0236,
            epsilon = 1e-12
        );
    }

    #[test]
    fn blockwise_rejects_mismatched_partition() {
        let spm = four_voters();
        let part = BlockPartition::single(3, 3);
        let x = OutcomeVector::new(vec![1, 3, 0]);
        assert!(pmf_blockwise(&spm, &part, &x, &opts()).is_err());
    }

    #[test]
    fn cached_queries_agree() {
        let pmd = ExactPmd::new(four_voters(), opts());
        let x = OutcomeVector::new(vec![1, 3, 0]);
        assert_abs_diff_eq!(pmd.pmf_at(&x).unwrap(), 0.0236, epsilon = 1e-12);
        assert_abs_diff_eq!(
            pmd.cdf_at(&OutcomeVector::new(vec![4, 4, 4])).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }
}
