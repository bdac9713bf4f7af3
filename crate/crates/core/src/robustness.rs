//! Critical white-noise visibilities.
//!
//! A [`NoiseFamily`] maps a visibility `nu` in `[0, 1]` to an assemblage; at
//! `nu = 0` every effect is proportional to the identity and the set is
//! compatible. [`bisect_threshold`] locates the visibility above which a
//! predicate (some incompatibility layer) switches on.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{
    classify_cg_with, classify_dcm, CgOptions, DcmScanOptions, LayerVerdict, WeightSearch,
};
use crate::error::{Error, Result};
use crate::measurement::{make_noisy_mub, make_noisy_pauli, Assemblage, MubBasis};

pub const BISECT_TOL: f64 = 5e-4;

type Builder = Arc<dyn Fn(f64) -> Result<Assemblage> + Send + Sync>;

#[derive(Clone)]
pub struct NoiseFamily {
    pub name: String,
    builder: Builder,
}

impl fmt::Debug for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseFamily").field("name", &self.name).finish()
    }
}

impl NoiseFamily {
    pub fn new(
        name: impl Into<String>,
        builder: impl Fn(f64) -> Result<Assemblage> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            builder: Arc::new(builder),
        }
    }

    pub fn noisy_mub(d: usize, bases: &[MubBasis]) -> Self {
        let bases = bases.to_vec();
        let names: Vec<String> = bases.iter().map(|b| format!("{b:?}")).collect();
        Self::new(format!("mub(d={d},{})", names.join("+")), move |nu| {
            make_noisy_mub(d, &bases, nu)
        })
    }

    /// Pauli triple with one common visibility.
    pub fn noisy_pauli() -> Self {
        Self::new("pauli", |nu| make_noisy_pauli([nu; 3]))
    }

    pub fn build(&self, nu: f64) -> Result<Assemblage> {
        (self.builder)(nu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub nu_star: f64,
    /// Predicate false at `bracket.0`, true at `bracket.1`.
    pub bracket: (f64, f64),
    pub evaluations: usize,
    pub predicate: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectOptions {
    pub tol: f64,
    /// Checks the discarded half at every step for a second sign change.
    pub monotonicity_guard: bool,
}

impl Default for BisectOptions {
    fn default() -> Self {
        Self {
            tol: BISECT_TOL,
            monotonicity_guard: true,
        }
    }
}

/// Bisection on a scalar predicate, false at 0 and true at 1.
pub fn bisect_scalar(
    name: &str,
    predicate: impl Fn(f64) -> Result<bool>,
    opts: &BisectOptions,
) -> Result<ThresholdResult> {
    if !(opts.tol >= 1e-5) {
        return Err(Error::BadRange(format!("bisection tolerance {} below 1e-5", opts.tol)));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut evaluations = 2;
    if predicate(lo)? || !predicate(hi)? {
        return Err(Error::NotBracketed(format!(
            "'{name}' does not switch from false at 0 to true at 1"
        )));
    }
    while hi - lo > 2.0 * opts.tol {
        let mid = 0.5 * (lo + hi);
        let p = predicate(mid)?;
        evaluations += 1;
        let (keep_lo, keep_hi, probe, expect) = if p {
            (lo, mid, 0.5 * (mid + hi), true)
        } else {
            (mid, hi, 0.5 * (lo + mid), false)
        };
        if opts.monotonicity_guard {
            evaluations += 1;
            if predicate(probe)? != expect {
                return Err(Error::NonMonotone(format!(
                    "'{name}' is {p} at {mid:.6} but {} at {probe:.6}",
                    !expect
                )));
            }
        }
        lo = keep_lo;
        hi = keep_hi;
    }
    Ok(ThresholdResult {
        nu_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        evaluations,
        predicate: name.to_string(),
    })
}

pub fn bisect_threshold(
    family: &NoiseFamily,
    name: &str,
    predicate: impl Fn(&Assemblage) -> Result<bool>,
    opts: &BisectOptions,
) -> Result<ThresholdResult> {
    let label = format!("{name} on {}", family.name);
    bisect_scalar(&label, |nu| predicate(&family.build(nu)?), opts)
}

/// Threshold above which a set is k-incompatible under coarse-graining.
pub fn cg_threshold(family: &NoiseFamily, k: usize, opts: &BisectOptions) -> Result<ThresholdResult> {
    cg_threshold_with(family, k, &CgOptions::default(), opts)
}

pub fn cg_threshold_with(
    family: &NoiseFamily,
    k: usize,
    cg: &CgOptions,
    opts: &BisectOptions,
) -> Result<ThresholdResult> {
    bisect_threshold(
        family,
        &format!("cg-{k}-incompatible"),
        |a| Ok(classify_cg_with(a, k, cg)?.verdict == LayerVerdict::Incompatible),
        opts,
    )
}

pub fn dcm_threshold(
    family: &NoiseFamily,
    k: usize,
    dcm: &DcmScanOptions,
    opts: &BisectOptions,
) -> Result<ThresholdResult> {
    bisect_threshold(
        family,
        &format!("dcm-{k}-incompatible"),
        |a| Ok(classify_dcm(a, k, dcm)?.verdict == LayerVerdict::Incompatible),
        opts,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowStatus {
    /// The layer does not exist (k above the outcome count).
    NotApplicable,
    Threshold(ThresholdResult),
    /// The predicate already fails at `nu = 1`.
    NeverIncompatible(String),
}

impl RowStatus {
    pub fn nu_star(&self) -> Option<f64> {
        match self {
            RowStatus::Threshold(t) => Some(t.nu_star),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub d: usize,
    pub k: usize,
    pub status: RowStatus,
}

/// MUB pairs in dimensions 3 and 4 under coarse-graining.
pub fn table1() -> Result<Vec<TableRow>> {
    table1_with(&CgOptions::default(), &BisectOptions::default())
}

pub fn table1_with(cg: &CgOptions, opts: &BisectOptions) -> Result<Vec<TableRow>> {
    let rows = [(3, 4), (3, 3), (3, 2), (4, 4), (4, 3), (4, 2)];
    let pair = [MubBasis::Computational, MubBasis::Fourier];
    rows.par_iter()
        .map(|&(d, k)| {
            let status = if k > d {
                RowStatus::NotApplicable
            } else {
                match cg_threshold_with(&NoiseFamily::noisy_mub(d, &pair), k, cg, opts) {
                    Ok(t) => RowStatus::Threshold(t),
                    Err(Error::NotBracketed(m)) => RowStatus::NeverIncompatible(m),
                    Err(e) => return Err(e),
                }
            };
            Ok(TableRow { d, k, status })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub d: usize,
    pub k: usize,
    pub with_permutations: ThresholdResult,
    pub without_permutations: ThresholdResult,
}

/// MUB triples in dimensions 3 and 4 under disjoint mixing, with and
/// without outcome permutations before mixing.
pub fn table2() -> Result<Vec<Table2Row>> {
    table2_with(
        &DcmScanOptions {
            search: WeightSearch::Joint,
            ..Default::default()
        },
        &BisectOptions::default(),
    )
}

pub fn table2_with(dcm: &DcmScanOptions, opts: &BisectOptions) -> Result<Vec<Table2Row>> {
    let rows = [(3, 3), (3, 2), (4, 3), (4, 2)];
    rows.par_iter()
        .map(|&(d, k)| {
            let fam = NoiseFamily::noisy_mub(d, &MubBasis::ALL);
            let on = DcmScanOptions {
                include_permutations: true,
                ..*dcm
            };
            let off = DcmScanOptions {
                include_permutations: false,
                ..*dcm
            };
            let with_permutations = dcm_threshold(&fam, k, &on, opts)?;
            // With k = n there is no mixing and permutations are irrelevant.
            let without_permutations = if k == 3 {
                with_permutations.clone()
            } else {
                dcm_threshold(&fam, k, &off, opts)?
            };
            Ok(Table2Row {
                d,
                k,
                with_permutations,
                without_permutations,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::noisy_pauli_full_dcm;

    #[test]
    fn closed_form_threshold() {
        let r = bisect_scalar("pauli", |nu| noisy_pauli_full_dcm([nu; 3]), &BisectOptions::default())
            .unwrap();
        assert!((r.nu_star - (2.0f64 / 3.0).sqrt()).abs() <= BISECT_TOL);
        assert!(r.bracket.1 - r.bracket.0 <= 2.0 * BISECT_TOL);
    }

    #[test]
    fn not_bracketed() {
        let e = bisect_scalar("const", |_| Ok(true), &BisectOptions::default());
        assert!(matches!(e, Err(Error::NotBracketed(_))));
    }

    #[test]
    fn non_monotone_detected() {
        // True at the midpoint 0.75 but false at the probe 0.875.
        let p = |nu: f64| Ok(nu > 0.9 || (0.7 < nu && nu < 0.8));
        let e = bisect_scalar("bumpy", p, &BisectOptions::default());
        assert!(matches!(e, Err(Error::NonMonotone(_))), "{e:?}");
    }

    #[test]
    fn tolerance_floor() {
        let e = bisect_scalar("x", |nu| Ok(nu > 0.5), &BisectOptions { tol: 1e-6, ..Default::default() });
        assert!(matches!(e, Err(Error::BadRange(_))));
    }

    #[test]
    fn balanced_clubbing_blocks_d4_pair() {
        let fam = NoiseFamily::noisy_mub(4, &[MubBasis::Computational, MubBasis::Fourier]);
        let e = cg_threshold(&fam, 2, &BisectOptions::default());
        assert!(matches!(e, Err(Error::NotBracketed(_))));
        let cg = CgOptions {
            family: crate::classify::PartitionFamily::SingletonsPlusRest,
            ..Default::default()
        };
        let t = cg_threshold_with(&fam, 2, &cg, &BisectOptions { tol: 2e-3, ..Default::default() })
            .unwrap();
        assert!((t.nu_star - 0.721).abs() < 4e-3, "{}", t.nu_star);
    }

    #[test]
    fn deterministic() {
        let fam = NoiseFamily::noisy_mub(3, &[MubBasis::Computational, MubBasis::Fourier]);
        let opts = BisectOptions {
            tol: 5e-3,
            ..Default::default()
        };
        let a = cg_threshold(&fam, 3, &opts).unwrap();
        let b = cg_threshold(&fam, 3, &opts).unwrap();
        assert_eq!(a, b);
        assert!((a.nu_star - 0.683).abs() < 0.01);
    }
}
