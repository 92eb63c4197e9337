//! Accuracy and timing studies over random SPMs.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::error::{PmdError, Result};
use crate::exact::{pmf_full, ExactOptions, PmfArray};
use crate::mvn::MvnOptions;
use crate::normal::NormalApprox;
use crate::oracle::{enumerate_pmf, poisson_binomial_pmf, DEFAULT_ENUMERATION_CAP};
use crate::sim::{sim_error_bounds, tally};
use crate::spm::{grid_cells, OutcomeVector, Spm};
use crate::voting::{mode_of, q_mode_of};

/// Rows drawn independently from the flat Dirichlet law.
pub fn random_spm(n: usize, m: usize, seed: u64) -> Spm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
            row
        })
        .collect();
    Spm::new(rows).expect("normalized rows")
}

/// Seed of replicate `r` at size `n`, decorrelated from its neighbors.
pub fn replicate_seed(seed: u64, n: usize, r: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        .wrapping_add((n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((r as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Binomial,
    PoissonBinomial,
    Enumeration,
    NaVsExact,
    SimVsExact,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Self::Binomial => "binomial",
            Self::PoissonBinomial => "poisson-binomial",
            Self::Enumeration => "enumeration",
            Self::NaVsExact => "na-vs-exact",
            Self::SimVsExact => "sim-vs-exact",
        }
    }
}

impl FromStr for Study {
    type Err = PmdError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::Binomial,
            Self::PoissonBinomial,
            Self::Enumeration,
            Self::NaVsExact,
            Self::SimVsExact,
        ]
        .into_iter()
        .find(|st| st.name() == s)
        .ok_or_else(|| PmdError::InvalidArgument(format!("unknown study `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub study: Study,
    pub ns: Vec<usize>,
    /// Ignored by the two-category studies.
    pub m: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Draws per simulated estimate.
    pub b: u64,
    pub exact: ExactOptions,
    pub mvn: MvnOptions,
    pub enumeration_cap: u128,
}

impl StudyConfig {
    pub fn new(study: Study, ns: Vec<usize>, m: usize) -> Self {
        Self {
            study,
            ns,
            m,
            replicates: 50,
            seed: 0,
            b: 100_000,
            exact: ExactOptions::default(),
            mvn: MvnOptions::default(),
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    fn categories(&self) -> usize {
        match self.study {
            Study::Binomial | Study::PoissonBinomial => 2,
            _ => self.m,
        }
    }

    /// Rejects sizes the study's reference method cannot handle.
    fn check(&self) -> Result<()> {
        let m = self.categories();
        if m < 2 || self.replicates == 0 || self.ns.is_empty() {
            return Err(PmdError::InvalidArgument(
                "a study needs m >= 2, at least one n, and at least one replicate".into(),
            ));
        }
        for &n in &self.ns {
            if n == 0 {
                return Err(PmdError::InvalidArgument("n must be at least 1".into()));
            }
            let cells = grid_cells(n, m).unwrap_or(u128::MAX);
            if cells >= self.exact.mem_cap_cells {
                return Err(PmdError::MemoryCap {
                    required: cells,
                    cap: self.exact.mem_cap_cells,
                    n,
                    m,
                });
            }
            if self.study == Study::Enumeration {
                let required = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
                if required > self.enumeration_cap {
                    return Err(PmdError::EnumerationCap {
                        required,
                        cap: self.enumeration_cap,
                    });
                }
            }
        }
        Ok(())
    }
}

/// One output line: `study, n, m, metric, value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub study: Study,
    pub n: usize,
    pub m: usize,
    pub metric: String,
    pub value: f64,
}

/// Per-replicate metrics, kept for inspection next to the summary rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub n: usize,
    pub replicate: usize,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub replicates: Vec<ReplicateMetrics>,
}

impl StudyReport {
    pub fn value(&self, n: usize, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "study,n,m,metric,value")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{:.16e}", r.study.name(), r.n, r.m, r.metric, r.value)?;
        }
        Ok(())
    }

    /// Aligned text table, one line per `(n, metric)`.
    pub fn summary(&self) -> String {
        let mut s = format!("{:<18} {:>6} {:>3}  {:<24} {:>12}\n", "study", "n", "m", "metric", "value");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<18} {:>6} {:>3}  {:<24} {:>12.4e}",
                r.study.name(),
                r.n,
                r.m,
                r.metric,
                r.value
            );
        }
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Max and total absolute error of an exact pmf against a reference.
fn errors_2cat(pmf: &PmfArray, reference: &[f64]) -> (f64, f64) {
    let mut mae: f64 = 0.0;
    let mut tae = 0.0;
    for (k, r) in reference.iter().enumerate() {
        let d = (pmf.get(&[k]) - r).abs();
        mae = mae.max(d);
        tae += d;
    }
    (mae, tae)
}

/// Quantile levels reported by the simulation study besides the mode.
pub const SIM_Q_LEVELS: [f64; 2] = [0.9, 0.5];

fn replicate(cfg: &StudyConfig, n: usize, r: usize) -> Result<Vec<(String, f64)>> {
    let m = cfg.categories();
    let seed = replicate_seed(cfg.seed, n, r);
    let metric = |name: &str, v: f64| (name.to_string(), v);
    match cfg.study {
        Study::Binomial => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: f64 = rng.random();
            let spm = Spm::new(vec![vec![p, 1.0 - p]; n])?;
            let pmf = pmf_full(&spm, &cfg.exact)?;
            let law = Binomial::new(p, n as u64)
                .map_err(|e| PmdError::InvalidArgument(e.to_string()))?;
            let reference: Vec<f64> = (0..=n as u64).map(|k| law.pmf(k)).collect();
            let (mae, tae) = errors_2cat(&pmf, &reference);
            Ok(vec![metric("mae", mae), metric("tae", tae)])
        }
        Study::PoissonBinomial => {
            let spm = random_spm(n, 2, seed);
            let pmf = pmf_full(&spm, &cfg.exact)?;
            let reference = poisson_binomial_pmf(&spm.column(0));
            let (mae, tae) = errors_2cat(&pmf, &reference);
            Ok(vec![
                metric("mae", mae),
                metric("tae", tae),
                metric("baseline", max(&reference)),
            ])
        }
        Study::Enumeration => {
            let spm = random_spm(n, m, seed);
            let pmf = pmf_full(&spm, &cfg.exact)?;
            let oracle = enumerate_pmf(&spm, cfg.enumeration_cap)?;
            let mut worst: f64 = 0.0;
            for (x, p) in &oracle {
                worst = worst.max((pmf.prob(x)? - p).abs());
            }
            Ok(vec![metric("max_abs_diff", worst)])
        }
        Study::NaVsExact => {
            let spm = random_spm(n, m, seed);
            let pmf = pmf_full(&spm, &cfg.exact)?;
            let approx = NormalApprox::new(&spm)?;
            let mut mae: f64 = 0.0;
            let mut tae = 0.0;
            let mut top: f64 = 0.0;
            for (xr, p) in pmf.support() {
                let x = OutcomeVector::from_reduced(&xr, n)?;
                let d = (approx.pmf_at(&x, &cfg.mvn)?.value - p).abs();
                mae = mae.max(d);
                tae += d;
                top = top.max(p);
            }
            Ok(vec![metric("mae", mae), metric("tae", tae), metric("baseline", top)])
        }
        Study::SimVsExact => {
            let spm = random_spm(n, m, seed);
            let pmf = pmf_full(&spm, &cfg.exact)?;
            let mut points = vec![mode_of(&pmf)];
            for q in SIM_Q_LEVELS {
                points.push(q_mode_of(&pmf, q)?);
            }
            let targets: Vec<Vec<usize>> = points.iter().map(|p| p.x.counts().to_vec()).collect();
            let hist = tally(&spm, cfg.b, seed ^ 0x5157, targets.len() + 1, |c| {
                targets.iter().position(|t| t == c).unwrap_or(targets.len())
            })?;
            let bound = sim_error_bounds(cfg.b, 1).0;
            let ae: Vec<f64> = points
                .iter()
                .zip(&hist)
                .map(|(pt, &h)| (h as f64 / cfg.b as f64 - pt.p).abs())
                .collect();
            let mut out = vec![metric("ae_mode", ae[0]), metric("ae_mode_over_bound", ae[0] / bound)];
            for (q, a) in SIM_Q_LEVELS.iter().zip(&ae[1..]) {
                out.push(metric(&format!("ae_q{}", (q * 100.0).round()), *a));
            }
            out.push(metric("baseline", points[0].p));
            Ok(out)
        }
    }
}

/// Runs every replicate at every `n` and summarizes per `n`.
///
/// Each metric `k` gets `k_mean`, `k_median`, and `k_max` rows; `baseline`
/// is averaged only.
pub fn accuracy_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.check()?;
    let m = cfg.categories();
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &n in &cfg.ns {
        let reps: Vec<Vec<(String, f64)>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| replicate(cfg, n, r))
            .collect::<Result<_>>()?;
        let names: Vec<String> = reps[0].iter().map(|(k, _)| k.clone()).collect();
        for (i, name) in names.iter().enumerate() {
            let vals: Vec<f64> = reps.iter().map(|rep| rep[i].1).collect();
            let mut push = |suffix: &str, value: f64| {
                rows.push(StudyRow {
                    study: cfg.study,
                    n,
                    m,
                    metric: format!("{name}{suffix}"),
                    value,
                })
            };
            if name == "baseline" {
                push("", mean(&vals));
            } else {
                push("_mean", mean(&vals));
                push("_median", median(&vals));
                push("_max", max(&vals));
            }
        }
        if cfg.study == Study::SimVsExact {
            rows.push(StudyRow {
                study: cfg.study,
                n,
                m,
                metric: "bound".into(),
                value: sim_error_bounds(cfg.b, 1).0,
            });
        }
        all.extend(reps.into_iter().enumerate().map(|(r, metrics)| ReplicateMetrics {
            n,
            replicate: r,
            metrics,
        }));
    }
    Ok(StudyReport {
        rows,
        replicates: all,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub exact: ExactOptions,
}

/// Wall-clock seconds for `pmf_full`, or `None` when over the memory cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub m: usize,
    pub mean_seconds: Option<f64>,
    pub median_seconds: Option<f64>,
}

/// Times each `(n, m)` sequentially so runs do not compete for cores.
pub fn timing_study(cfg: &TimingConfig) -> Result<Vec<TimingRow>> {
    if cfg.replicates == 0 {
        return Err(PmdError::InvalidArgument("need at least one replicate".into()));
    }
    let mut out = Vec::new();
    for &m in &cfg.ms {
        for &n in &cfg.ns {
            let cells = grid_cells(n, m).unwrap_or(u128::MAX);
            if cells >= cfg.exact.mem_cap_cells {
                out.push(TimingRow {
                    n,
                    m,
                    mean_seconds: None,
                    median_seconds: None,
                });
                continue;
            }
            let mut secs = Vec::with_capacity(cfg.replicates);
            for r in 0..cfg.replicates {
                let spm = random_spm(n, m, replicate_seed(cfg.seed, n, r));
                let start = Instant::now();
                let pmf = pmf_full(&spm, &cfg.exact)?;
                secs.push(start.elapsed().as_secs_f64());
                std::hint::black_box(pmf);
            }
            out.push(TimingRow {
                n,
                m,
                mean_seconds: Some(mean(&secs)),
                median_seconds: Some(median(&secs)),
            });
        }
    }
    Ok(out)
}

/// `n,m,seconds,median_seconds` with `infeasible` for capped rows.
pub fn write_timing_csv<W: Write>(rows: &[TimingRow], mut w: W) -> Result<()> {
    writeln!(w, "n,m,seconds,median_seconds")?;
    for r in rows {
        match (r.mean_seconds, r.median_seconds) {
            (Some(a), Some(b)) => writeln!(w, "{},{},{a:.16e},{b:.16e}", r.n, r.m)?,
            _ => writeln!(w, "{},{},infeasible,infeasible", r.n, r.m)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn random_spm_is_reproducible_and_valid() {
        assert_eq!(random_spm(7, 4, 3), random_spm(7, 4, 3));
        assert_ne!(random_spm(7, 4, 3), random_spm(7, 4, 4));
        let big = random_spm(1000, 2, 1);
        for row in big.rows() {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dirichlet_entries_average_one_over_m() {
        let m = 4;
        let total: f64 = (0..50)
            .map(|s| {
                let spm = random_spm(100, m, s);
                spm.rows().map(|r| r[0]).sum::<f64>() / 100.0
            })
            .sum();
        assert_abs_diff_eq!(total / 50.0, 1.0 / m as f64, epsilon = 0.01);
    }

    #[test]
    fn binomial_study_is_exact() {
        let mut cfg = StudyConfig::new(Study::Binomial, vec![10, 100, 1000], 2);
        cfg.replicates = 5;
        let rep = accuracy_study(&cfg).unwrap();
        for n in [10, 100, 1000] {
            assert!(rep.value(n, "mae_max").unwrap() < 1e-10);
            assert!(rep.value(n, "tae_max").unwrap() < 1e-8);
        }
    }

    #[test]
    fn enumeration_study_agrees() {
        let mut cfg = StudyConfig::new(Study::Enumeration, vec![2, 3, 4], 4);
        cfg.replicates = 4;
        let rep = accuracy_study(&cfg).unwrap();
        for n in [2, 3, 4] {
            assert!(rep.value(n, "max_abs_diff_max").unwrap() < 1e-12);
        }
    }

    #[test]
    fn baseline_is_the_average_pmf_maximum() {
        let mut cfg = StudyConfig::new(Study::PoissonBinomial, vec![30], 2);
        cfg.replicates = 6;
        cfg.seed = 9;
        let rep = accuracy_study(&cfg).unwrap();
        let direct: f64 = (0..6)
            .map(|r| {
                let spm = random_spm(30, 2, replicate_seed(9, 30, r));
                max(pmf_full(&spm, &ExactOptions::default()).unwrap().values())
            })
            .sum::<f64>()
            / 6.0;
        assert_abs_diff_eq!(rep.value(30, "baseline").unwrap(), direct, epsilon = 1e-12);
        assert_eq!(rep, accuracy_study(&cfg).unwrap());
    }

    #[test]
    fn sim_study_rows() {
        let mut cfg = StudyConfig::new(Study::SimVsExact, vec![10], 3);
        cfg.replicates = 3;
        cfg.b = 20_000;
        let rep = accuracy_study(&cfg).unwrap();
        let bound = rep.value(10, "bound").unwrap();
        assert!(rep.value(10, "ae_mode_mean").unwrap() < 5.0 * bound);
        assert!(rep.value(10, "ae_q90_mean").is_some());
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("study,n,m,metric,value\nsim-vs-exact,10,3,"));
    }

    #[test]
    fn infeasible_configs_carry_advice() {
        let cfg = StudyConfig::new(Study::NaVsExact, vec![15], 8);
        let err = accuracy_study(&cfg).unwrap_err();
        assert!(err.to_string().contains("use SIM (m moderate, n small)"));
        let cfg = StudyConfig::new(Study::Enumeration, vec![20], 3);
        assert!(matches!(accuracy_study(&cfg), Err(PmdError::EnumerationCap { .. })));
    }

    #[test]
    fn timing_marks_infeasible_rows() {
        let cfg = TimingConfig {
            ns: vec![5, 15],
            ms: vec![3, 8],
            replicates: 2,
            seed: 0,
            exact: ExactOptions::default(),
        };
        let rows = timing_study(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].mean_seconds.is_some());
        assert!(rows[3].mean_seconds.is_none());
        let mut csv = Vec::new();
        write_timing_csv(&rows, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains("15,8,infeasible"));
    }

    #[test]
    fn study_names_round_trip() {
        for s in ["binomial", "poisson-binomial", "enumeration", "na-vs-exact", "sim-vs-exact"] {
            assert_eq!(s.parse::<Study>().unwrap().name(), s);
        }
        assert!("nope".parse::<Study>().is_err());
    }
}
