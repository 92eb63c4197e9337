//! Slow references that share no code with the transform path.

use std::collections::BTreeMap;

use crate::error::{PmdError, Result};
use crate::spm::{OutcomeVector, Spm};

/// Default cap on `m^n` assignments visited by [`enumerate_pmf`].
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Exact pmf by visiting all `m^n` category assignments.
pub fn enumerate_pmf(spm: &Spm, cap: u128) -> Result<BTreeMap<OutcomeVector, f64>> {
    let (n, m) = (spm.n(), spm.m());
    let required = (m as u128)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    if required > cap {
        return Err(PmdError::EnumerationCap { required, cap });
    }
    let mut out = BTreeMap::new();
    // Odometer over assignments: choice[i] is the category of trial i.
    let mut choice = vec![0usize; n];
    loop {
        let mut prob = 1.0;
        let mut counts = vec![0usize; m];
        for (i, &j) in choice.iter().enumerate() {
            prob *= spm.get(i, j);
            counts[j] += 1;
        }
        *out.entry(OutcomeVector::new(counts)).or_insert(0.0) += prob;

        let mut i = 0;
        loop {
            if i == n {
                return Ok(out);
            }
            choice[i] += 1;
            if choice[i] < m {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Poisson binomial pmf by sequential convolution with `(1 - p_i, p_i)`.
pub fn poisson_binomial_pmf(p: &[f64]) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(p.len() + 1);
    pmf.push(1.0);
    for &pi in p {
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * (1.0 - pi) + pmf[k - 1] * pi;
        }
        pmf[0] *= 1.0 - pi;
    }
    pmf
}

/// Cumulative sums of a pmf vector.
pub fn cumulative(pmf: &[f64]) -> Vec<f64> {
    pmf.iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::four_voters;
    use approx::assert_abs_diff_eq;

    #[test]
    fn four_voters_by_hand() {
        let pmf = enumerate_pmf(&four_voters(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(pmf.len(), 15);
        assert_abs_diff_eq!(pmf[&OutcomeVector::new(vec![4, 0, 0])], 0.016, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf[&OutcomeVector::new(vec![1, 3, 0])], 0.0236, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf.values().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_trial_is_the_row() {
        let spm = Spm::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let pmf = enumerate_pmf(&spm, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(pmf[&OutcomeVector::new(vec![1, 0, 0])], 0.2);
        assert_eq!(pmf[&OutcomeVector::new(vec![0, 1, 0])], 0.3);
        assert_eq!(pmf[&OutcomeVector::new(vec![0, 0, 1])], 0.5);
    }

    #[test]
    fn cap_is_enforced() {
        let spm = Spm::new(vec![vec![0.5, 0.5]; 30]).unwrap();
        assert!(matches!(
            enumerate_pmf(&spm, DEFAULT_ENUMERATION_CAP),
            Err(PmdError::EnumerationCap { .. })
        ));
    }

    #[test]
    fn convolution_small_cases() {
        assert_eq!(poisson_binomial_pmf(&[0.3]), vec![0.7, 0.3]);
        let two = poisson_binomial_pmf(&[0.1, 0.9]);
        for (a, b) in two.iter().zip([0.09, 0.82, 0.09]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(poisson_binomial_pmf(&[]), vec![1.0]);
    }

    #[test]
    fn identical_trials_are_binomial() {
        let n = 12;
        let p = 0.35;
        let pmf = poisson_binomial_pmf(&vec![p; n]);
        let mut binom = 1.0;
        for (k, v) in pmf.iter().enumerate() {
            if k > 0 {
                binom = binom * (n - k + 1) as f64 / k as f64;
            }
            let expect = binom * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn two_category_marginal_matches_convolution() {
        let p = [0.1, 0.45, 0.8, 0.33, 0.6];
        let spm = Spm::new(p.iter().map(|&q| vec![q, 1.0 - q]).collect()).unwrap();
        let joint = enumerate_pmf(&spm, DEFAULT_ENUMERATION_CAP).unwrap();
        let conv = poisson_binomial_pmf(&p);
        for (x, prob) in joint {
            assert_abs_diff_eq!(prob, conv[x.counts()[0]], epsilon = 1e-12);
        }
    }

    #[test]
    fn cumulative_ends_at_total() {
        let c = cumulative(&poisson_binomial_pmf(&[0.2, 0.7, 0.4]));
        assert_abs_diff_eq!(*c.last().unwrap(), 1.0, epsilon = 1e-15);
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
    }
}
