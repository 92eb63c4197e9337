//! Normal approximation with continuity correction.
//!
//! The reduced count vector is replaced by `Z ~ N(mu*, Sigma*)` and the pmf
//! at `x` by the mass `Z` puts on the unit cell centered at `x*`.

use crate::error::Result;
use crate::mvn::{MvnEstimate, MvnModel, MvnOptions, Rectangle};
use crate::spm::{moments, OutcomeVector, Spm};

/// A PMD's matched normal law, factored once for many queries.
#[derive(Debug, Clone)]
pub struct NormalApprox {
    n: usize,
    m: usize,
    model: MvnModel,
}

impl NormalApprox {
    pub fn new(spm: &Spm) -> Result<Self> {
        let mo = moments(spm);
        Ok(Self {
            n: spm.n(),
            m: spm.m(),
            model: MvnModel::new(&mo.mu_star, &mo.sigma_star)?,
        })
    }

    /// True when `Sigma*` has a zero-variance direction that was collapsed.
    pub fn is_degenerate(&self) -> bool {
        self.model.is_degenerate()
    }

    pub fn pmf_at(&self, x: &OutcomeVector, opts: &MvnOptions) -> Result<MvnEstimate> {
        x.check_support(self.n, self.m)?;
        self.model.rect_prob(&Rectangle::cell(x.reduced()), opts)
    }

    /// `P(Z_j <= x_j + 0.5 for j < m)`.
    pub fn cdf_at(&self, x: &OutcomeVector, opts: &MvnOptions) -> Result<MvnEstimate> {
        if x.len() != self.m {
            return Err(crate::PmdError::Dimension(format!(
                "cdf query has {} entries, expected m = {}",
                x.len(),
                self.m
            )));
        }
        self.model.rect_prob(&Rectangle::orthant(x.reduced()), opts)
    }
}

/// Normal-approximation pmf at `x`.
pub fn na_pmf_at(spm: &Spm, x: &OutcomeVector, opts: &MvnOptions) -> Result<MvnEstimate> {
    NormalApprox::new(spm)?.pmf_at(x, opts)
}

/// Normal-approximation cdf at `x` (reduced coordinates only).
pub fn na_cdf_at(spm: &Spm, x: &OutcomeVector, opts: &MvnOptions) -> Result<MvnEstimate> {
    NormalApprox::new(spm)?.cdf_at(x, opts)
}
