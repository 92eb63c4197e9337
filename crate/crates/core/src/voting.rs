//! Election summaries: who wins with what probability, and the most likely
//! vote counts.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PmdError, Result};
use crate::exact::{pmf_full, ExactOptions, PmfArray};
use crate::mvn::MvnOptions;
use crate::normal::NormalApprox;
use crate::sim::tally;
use crate::spm::{OutcomeVector, Spm};

/// How pmf values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Na,
    Sim,
}

impl FromStr for Method {
    type Err = PmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" | "dft-cf" => Ok(Self::Exact),
            "na" => Ok(Self::Na),
            "sim" => Ok(Self::Sim),
            other => Err(PmdError::InvalidArgument(format!(
                "unknown method `{other}` (expected exact, na, or sim)"
            ))),
        }
    }
}

/// Settings for every method; each one reads only its own fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    pub exact: ExactOptions,
    pub mvn: MvnOptions,
    pub b: u64,
    pub seed: u64,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            exact: ExactOptions::default(),
            mvn: MvnOptions::default(),
            b: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerProbs {
    pub winner_probs: Vec<f64>,
    /// Probability that no candidate has a strict unique maximum.
    pub tie_prob: f64,
}

/// The candidate with strictly more votes than every other, if any.
pub fn unique_winner(counts: &[usize]) -> Option<usize> {
    let (best, &top) = counts.iter().enumerate().max_by_key(|&(j, c)| (c, std::cmp::Reverse(j)))?;
    (counts.iter().filter(|&&c| c == top).count() == 1).then_some(best)
}

/// Winning probability of each candidate.
pub fn winner_probabilities(spm: &Spm, method: Method, params: &MethodParams) -> Result<WinnerProbs> {
    let m = spm.m();
    let mut winner_probs = vec![0.0; m];
    match method {
        Method::Exact => {
            let pmf = pmf_full(spm, &params.exact)?;
            return Ok(winner_probs_from_pmf(&pmf));
        }
        Method::Na => {
            let approx = NormalApprox::new(spm)?;
            for x in support_points(spm.n(), m) {
                if let Some(w) = unique_winner(x.counts()) {
                    winner_probs[w] += approx.pmf_at(&x, &params.mvn)?.value;
                }
            }
        }
        Method::Sim => {
            let hist = tally(spm, params.b, params.seed, m + 1, |c| {
                unique_winner(c).unwrap_or(m)
            })?;
            for (w, &h) in winner_probs.iter_mut().zip(&hist) {
                *w = h as f64 / params.b as f64;
            }
        }
    }
    let tie_prob = 1.0 - winner_probs.iter().sum::<f64>();
    Ok(WinnerProbs {
        winner_probs,
        tie_prob,
    })
}

/// Winner probabilities read off a precomputed exact pmf.
pub fn winner_probs_from_pmf(pmf: &PmfArray) -> WinnerProbs {
    let n = pmf.n();
    let mut winner_probs = vec![0.0; pmf.m()];
    for (xr, p) in pmf.support() {
        let mut counts = xr;
        let rest = n - counts.iter().sum::<usize>();
        counts.push(rest);
        if let Some(w) = unique_winner(&counts) {
            winner_probs[w] += p;
        }
    }
    let tie_prob = 1.0 - winner_probs.iter().sum::<f64>();
    WinnerProbs {
        winner_probs,
        tie_prob,
    }
}

/// Every support point of an `n x m` PMD in lexicographic order of `x*`.
pub fn support_points(n: usize, m: usize) -> impl Iterator<Item = OutcomeVector> {
    let d = m - 1;
    let mut next = Some(vec![0usize; d]);
    std::iter::from_fn(move || {
        let cur = next.take()?;
        // Advance: bump the last coordinate that still has room, zero the tail.
        let mut succ = cur.clone();
        let mut k = d;
        while k > 0 {
            k -= 1;
            let head: usize = succ[..k].iter().sum();
            if head + succ[k] < n {
                succ[k] += 1;
                succ[k + 1..].iter_mut().for_each(|v| *v = 0);
                next = Some(succ);
                break;
            }
        }
        Some(OutcomeVector::from_reduced(&cur, n).expect("within support"))
    })
}

/// A support point together with its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointProb {
    pub x: OutcomeVector,
    pub p: f64,
}

/// The most likely outcome; ties go to the lexicographically smallest `x*`.
pub fn mode(spm: &Spm, opts: &ExactOptions) -> Result<PointProb> {
    Ok(mode_of(&pmf_full(spm, opts)?))
}

pub fn mode_of(pmf: &PmfArray) -> PointProb {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for (x, p) in pmf.support() {
        if best.as_ref().is_none_or(|(_, bp)| p > *bp) {
            best = Some((x, p));
        }
    }
    let (x, p) = best.expect("support is never empty");
    PointProb {
        x: OutcomeVector::from_reduced(&x, pmf.n()).expect("support point"),
        p,
    }
}

/// The `q`-mode: among points whose pmf value is at least the `q`-quantile
/// of all support pmf values, the one with the smallest value (ties go to
/// the lexicographically smallest `x*`).
///
/// The quantile is the `ceil(q h)`-th smallest of the `h` values.
pub fn q_mode(spm: &Spm, q: f64, opts: &ExactOptions) -> Result<PointProb> {
    q_mode_of(&pmf_full(spm, opts)?, q)
}

pub fn q_mode_of(pmf: &PmfArray, q: f64) -> Result<PointProb> {
    if !(q > 0.0 && q < 1.0) {
        return Err(PmdError::InvalidArgument(format!("q = {q} is not in (0, 1)")));
    }
    let mut values: Vec<f64> = pmf.support().map(|(_, p)| p).collect();
    values.sort_by(f64::total_cmp);
    let h = values.len();
    let k = ((q * h as f64).ceil() as usize).clamp(1, h);
    let threshold = values[k - 1];
    let (x, p) = pmf
        .support()
        .filter(|(_, p)| *p >= threshold)
        .fold(None::<(Vec<usize>, f64)>, |best, (x, p)| match best {
            Some((_, bp)) if p >= bp => best,
            _ => Some((x, p)),
        })
        .expect("threshold is attained");
    Ok(PointProb {
        x: OutcomeVector::from_reduced(&x, pmf.n())?,
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{four_voters, ten_voters};
    use crate::oracle::{enumerate_pmf, DEFAULT_ENUMERATION_CAP};
    use approx::assert_abs_diff_eq;

    #[test]
    fn ten_voter_election() {
        let spm = ten_voters();
        let w = winner_probabilities(&spm, Method::Exact, &MethodParams::default()).unwrap();
        let oracle = enumerate_pmf(&spm, DEFAULT_ENUMERATION_CAP).unwrap();
        let mut want = [0.0; 3];
        for (x, p) in &oracle {
            if let Some(k) = unique_winner(x.counts()) {
                want[k] += p;
            }
        }
        for (got, want) in w.winner_probs.iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        for (got, shown) in w.winner_probs.iter().zip([0.109, 0.345, 0.373]) {
            assert_abs_diff_eq!(*got, shown, epsilon = 1e-3);
        }
        assert_abs_diff_eq!(w.tie_prob, 0.17204, epsilon = 1e-5);
        let md = mode(&spm, &ExactOptions::default()).unwrap();
        assert_eq!(md.x.counts(), &[2, 4, 4]);
        assert_abs_diff_eq!(md.p, 0.0864, epsilon = 5e-5);
    }

    #[test]
    fn single_voter_always_elects() {
        let spm = Spm::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let w = winner_probabilities(&spm, Method::Exact, &MethodParams::default()).unwrap();
        for (got, want) in w.winner_probs.iter().zip([0.2, 0.3, 0.5]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(w.tie_prob, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn two_fair_voters() {
        let spm = Spm::new(vec![vec![0.5, 0.5]; 2]).unwrap();
        let w = winner_probabilities(&spm, Method::Exact, &MethodParams::default()).unwrap();
        assert_abs_diff_eq!(w.winner_probs[0], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(w.winner_probs[1], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(w.tie_prob, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn simulated_winners_converge() {
        let spm = ten_voters();
        let exact = winner_probabilities(&spm, Method::Exact, &MethodParams::default()).unwrap();
        let params = MethodParams {
            b: 200_000,
            seed: 4,
            ..MethodParams::default()
        };
        let sim = winner_probabilities(&spm, Method::Sim, &params).unwrap();
        let tol = 3.0 * (0.25 / params.b as f64).sqrt();
        for (s, e) in sim.winner_probs.iter().zip(&exact.winner_probs) {
            assert_abs_diff_eq!(*s, *e, epsilon = tol);
        }
    }

    #[test]
    fn normal_winners_are_close() {
        let spm = ten_voters();
        let exact = winner_probabilities(&spm, Method::Exact, &MethodParams::default()).unwrap();
        let na = winner_probabilities(&spm, Method::Na, &MethodParams::default()).unwrap();
        for (s, e) in na.winner_probs.iter().zip(&exact.winner_probs) {
            assert_abs_diff_eq!(*s, *e, epsilon = 0.05);
        }
    }

    #[test]
    fn column_permutation_permutes_winners() {
        let spm = ten_voters();
        let perm = [2, 0, 1];
        let permuted =
            Spm::new(spm.rows().map(|r| perm.iter().map(|&j| r[j]).collect()).collect()).unwrap();
        let a = winner_probabilities(&spm, Method::Exact, &MethodParams::default()).unwrap();
        let b = winner_probabilities(&permuted, Method::Exact, &MethodParams::default()).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            assert_abs_diff_eq!(b.winner_probs[k], a.winner_probs[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn four_voter_mode_matches_enumeration() {
        let spm = four_voters();
        let oracle = enumerate_pmf(&spm, DEFAULT_ENUMERATION_CAP).unwrap();
        let (bx, bp) = oracle
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(x, p)| (x.clone(), *p))
            .unwrap();
        let md = mode(&spm, &ExactOptions::default()).unwrap();
        assert_eq!(md.x, bx);
        assert_abs_diff_eq!(md.p, bp, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_mode_has_probability_one() {
        let spm = Spm::new(vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]])
            .unwrap();
        let md = mode(&spm, &ExactOptions::default()).unwrap();
        assert_eq!(md.x.counts(), &[1, 2, 0]);
        assert_abs_diff_eq!(md.p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn q_mode_rules() {
        let spm = ten_voters();
        let opts = ExactOptions::default();
        let pmf = pmf_full(&spm, &opts).unwrap();
        let near_one = q_mode_of(&pmf, 1.0 - 1e-9).unwrap();
        assert_eq!(near_one, mode_of(&pmf));

        let q9 = q_mode_of(&pmf, 0.9).unwrap();
        let mut sorted: Vec<f64> = pmf.support().map(|(_, p)| p).collect();
        assert_eq!(sorted.len(), 66);
        sorted.sort_by(f64::total_cmp);
        let below = sorted.iter().filter(|&&v| v <= q9.p).count();
        assert!(below as f64 >= 0.9 * 66.0);
        assert!(sorted.iter().filter(|&&v| v < q9.p).count() < 60);

        let uniform = Spm::new(vec![vec![1.0 / 3.0; 3]]).unwrap();
        let qm = q_mode(&uniform, 0.5, &opts).unwrap();
        assert_eq!(qm.x.counts(), &[0, 0, 1]);
        assert!(q_mode_of(&pmf, 1.0).is_err());
    }

    #[test]
    fn support_enumeration() {
        let pts: Vec<_> = support_points(2, 3).map(|x| x.counts().to_vec()).collect();
        assert_eq!(
            pts,
            vec![
                vec![0, 0, 2],
                vec![0, 1, 1],
                vec![0, 2, 0],
                vec![1, 0, 1],
                vec![1, 1, 0],
                vec![2, 0, 0]
            ]
        );
        assert_eq!(support_points(10, 3).count(), 66);
        assert_eq!(support_points(3, 2).count(), 4);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("exact".parse::<Method>().unwrap(), Method::Exact);
        assert_eq!("NA".parse::<Method>().unwrap(), Method::Na);
        assert!("bogus".parse::<Method>().is_err());
    }
}
