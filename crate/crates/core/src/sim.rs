//! Monte Carlo sampling from a PMD and pointwise pmf estimates.
//!
//! Each draw sums one categorical draw per row. Randomness is counter based:
//! draw `r` reads ChaCha8 stream `r` of the user seed, and row `i` consumes
//! word `i` of that stream. A draw therefore depends only on
//! `(seed, r, i)`, never on how draws are split across threads.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PmdError, Result};
use crate::spm::{OutcomeVector, Spm};

const DRAWS_PER_TASK: u64 = 1 << 14;
const U32_SCALE: f64 = 1.0 / 4_294_967_296.0;

/// Per-row cumulative probabilities for inverse-cdf lookup.
#[derive(Debug, Clone)]
struct RowSampler {
    m: usize,
    cum: Vec<f64>,
}

impl RowSampler {
    fn new(spm: &Spm) -> Self {
        let mut cum = Vec::with_capacity(spm.n() * spm.m());
        for row in spm.rows() {
            let mut acc = 0.0;
            for &p in row {
                acc += p;
                cum.push(acc);
            }
            // Anything past the last cut falls in the last category.
            *cum.last_mut().expect("m >= 2") = f64::INFINITY;
        }
        Self { m: spm.m(), cum }
    }

    /// Writes draw `r` into `counts`.
    /// `rng` must carry the seed's key; its stream and position are reset.
    fn draw(&self, r: u64, rng: &mut ChaCha8Rng, counts: &mut [usize]) {
        rng.set_stream(r);
        rng.set_word_pos(0);
        counts.iter_mut().for_each(|c| *c = 0);
        for row in self.cum.chunks_exact(self.m) {
            let u = (rng.next_u32() as f64 + 0.5) * U32_SCALE;
            let j = row.iter().position(|&c| u < c).unwrap_or(self.m - 1);
            counts[j] += 1;
        }
    }
}

/// Streams `b` draws and counts how many land in each of `bins` classes.
///
/// `classify` maps a count vector to a bin index below `bins`.
pub fn tally<F>(spm: &Spm, b: u64, seed: u64, bins: usize, classify: F) -> Result<Vec<u64>>
where
    F: Fn(&[usize]) -> usize + Sync,
{
    if b == 0 {
        return Err(PmdError::InvalidArgument("b must be at least 1".into()));
    }
    let sampler = RowSampler::new(spm);
    let base = ChaCha8Rng::seed_from_u64(seed);
    let tasks = b.div_ceil(DRAWS_PER_TASK);
    let partials: Vec<Vec<u64>> = (0..tasks)
        .into_par_iter()
        .map(|t| {
            let mut hist = vec![0u64; bins];
            let mut rng = base.clone();
            let mut counts = vec![0usize; spm.m()];
            let end = ((t + 1) * DRAWS_PER_TASK).min(b);
            for r in t * DRAWS_PER_TASK..end {
                sampler.draw(r, &mut rng, &mut counts);
                hist[classify(&counts)] += 1;
            }
            hist
        })
        .collect();
    let mut hist = vec![0u64; bins];
    for part in partials {
        for (h, p) in hist.iter_mut().zip(part) {
            *h += p;
        }
    }
    Ok(hist)
}

/// `b` stored draws from a PMD.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// Row-major `b x m`.
    pub draws: Vec<usize>,
}

impl SampleBatch {
    pub fn b(&self) -> usize {
        self.draws.len() / self.m
    }

    pub fn draw(&self, r: usize) -> &[usize] {
        &self.draws[r * self.m..(r + 1) * self.m]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.draws.chunks_exact(self.m)
    }

    /// Per-category sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.m];
        for d in self.iter() {
            for (acc, &c) in mean.iter_mut().zip(d) {
                *acc += c as f64;
            }
        }
        let b = self.b() as f64;
        mean.iter_mut().for_each(|v| *v /= b);
        mean
    }

    /// One draw per line, `m` columns, with an `x1..xm` header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.m).map(|j| format!("x{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for d in self.iter() {
            let line: Vec<String> = d.iter().map(ToString::to_string).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "b": self.b(),
            "n": self.n,
            "m": self.m,
        })
    }
}

/// Draws `b` count vectors.
pub fn sample(spm: &Spm, b: usize, seed: u64) -> Result<SampleBatch> {
    if b == 0 {
        return Err(PmdError::InvalidArgument("b must be at least 1".into()));
    }
    let m = spm.m();
    let sampler = RowSampler::new(spm);
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = vec![0usize; b * m];
    let per_task = DRAWS_PER_TASK as usize * m;
    draws
        .par_chunks_mut(per_task)
        .enumerate()
        .for_each(|(t, chunk)| {
            let mut rng = base.clone();
            for (k, counts) in chunk.chunks_exact_mut(m).enumerate() {
                let r = (t * DRAWS_PER_TASK as usize + k) as u64;
                sampler.draw(r, &mut rng, counts);
            }
        });
    Ok(SampleBatch {
        n: spm.n(),
        m,
        seed,
        draws,
    })
}

/// Simulated pmf value with its a-priori error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub value: f64,
    /// Draws equal to the query point.
    pub hits: u64,
    pub b: u64,
    /// `sqrt(1 / (2 pi b))`, an upper bound on the expected absolute error.
    pub bound: f64,
}

/// Fraction of `b` draws equal to `x`.
pub fn sim_pmf_at(spm: &Spm, x: &OutcomeVector, b: u64, seed: u64) -> Result<SimEstimate> {
    x.check_support(spm.n(), spm.m())?;
    let target = x.counts();
    let hist = tally(spm, b, seed, 2, |c| usize::from(c == target))?;
    Ok(SimEstimate {
        value: hist[1] as f64 / b as f64,
        hits: hist[1],
        b,
        bound: sim_error_bounds(b, 1).0,
    })
}

/// Expected-absolute-error bounds for `b` draws over a support of size `h`:
/// `sqrt(1 / (2 pi b))` at a single point and `sqrt(2 (h - 1) / (pi b))`
/// summed over the support.
pub fn sim_error_bounds(b: u64, h: u128) -> (f64, f64) {
    use std::f64::consts::PI;
    let b = b as f64;
    let single = (1.0 / (2.0 * PI * b)).sqrt();
    let total = (2.0 * (h.saturating_sub(1)) as f64 / (PI * b)).sqrt();
    (single, total)
}

/// Approximate expected absolute error at a point with true probability `p`.
pub fn sim_expected_error(p: f64, b: u64) -> f64 {
    (2.0 * p * (1.0 - p) / (std::f64::consts::PI * b as f64)).sqrt()
}
