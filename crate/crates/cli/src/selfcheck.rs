//! Randomized cross-checks between closed-form criteria and the SDP
//! pipeline. Deterministic for a given seed.

use incompat_core::classify::{busch_incompatible, full_incompatible_cg, projective_full_cg_criterion, rank1_overlap_criterion};
use incompat_core::error::Result;
use incompat_core::jm::{solve_jm, JmVerdict};
use incompat_core::linalg::{braket, c, C64};
use incompat_core::measurement::{pad_assemblage, Assemblage, BlochMeasurement, Povm};
use incompat_core::witness::{chsh_max_qubit, witness_full_cg_rac};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Band around the Busch boundary excluded from the oracle comparison.
pub const BUSCH_BAND: f64 = 1e-4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CheckTally {
    pub cases: usize,
    pub agreements: usize,
    pub disagreements: usize,
    /// Cases inside an undecided band.
    pub skipped: usize,
}

impl CheckTally {
    fn record(&mut self, agree: Option<bool>) {
        self.cases += 1;
        match agree {
            Some(true) => self.agreements += 1,
            Some(false) => self.disagreements += 1,
            None => self.skipped += 1,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<C64> {
    (0..d).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

/// Orthonormal basis extending `seed_vectors` by Gram-Schmidt on random
/// vectors.
pub fn complete_basis(rng: &mut ChaCha8Rng, d: usize, seed_vectors: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(d);
    let mut pending: Vec<Vec<C64>> = seed_vectors.to_vec();
    pending.reverse();
    while basis.len() < d {
        let mut v = pending.pop().unwrap_or_else(|| random_vector(rng, d));
        for u in &basis {
            let p = braket(u, &v);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= p * ui;
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.iter().map(|z| z / n).collect());
        }
    }
    basis
}

/// Random pair of qutrit bases. One third generic, one third sharing a
/// vector, one third with a single vanishing overlap.
pub fn random_qutrit_pair(rng: &mut ChaCha8Rng) -> (Povm, Povm) {
    let p = complete_basis(rng, 3, &[]);
    let q = match rng.gen_range(0..3) {
        0 => complete_basis(rng, 3, &[]),
        1 => complete_basis(rng, 3, &[p[0].clone()]),
        _ => {
            let (a, b) = (c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), c(rng.gen_range(-1.0..1.0), 0.3));
            let v: Vec<C64> = (0..3).map(|i| a * p[1][i] + b * p[2][i]).collect();
            complete_basis(rng, 3, &[v])
        }
    };
    (
        Povm::from_vectors("P", &p).expect("orthonormal basis"),
        Povm::from_vectors("Q", &q).expect("orthonormal basis"),
    )
}

pub fn random_bloch_pair(rng: &mut ChaCha8Rng) -> (BlochMeasurement, BlochMeasurement) {
    let mut draw = || loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return BlochMeasurement::new(v).expect("inside the ball");
        }
    };
    (draw(), draw())
}

fn pair(p: Povm, q: Povm) -> Result<Assemblage> {
    pad_assemblage(vec![p, q])
}

pub fn busch_vs_sdp(rng: &mut ChaCha8Rng, cases: usize) -> Result<CheckTally> {
    let mut t = CheckTally::default();
    for _ in 0..cases {
        let (a, b) = random_bloch_pair(rng);
        let n = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let margin = n(a.add(&b)) + n(a.sub(&b)) - 2.0;
        let r = solve_jm(&pair(a.to_povm("a"), b.to_povm("b"))?)?;
        t.record(if margin.abs() <= BUSCH_BAND || r.verdict == JmVerdict::Borderline {
            None
        } else {
            Some((r.verdict == JmVerdict::Incompatible) == busch_incompatible(&a, &b))
        });
    }
    Ok(t)
}

pub fn chsh_vs_busch(rng: &mut ChaCha8Rng, cases: usize) -> CheckTally {
    let mut t = CheckTally::default();
    for _ in 0..cases {
        let (a, b) = random_bloch_pair(rng);
        let s = chsh_max_qubit(&a, &b);
        t.record(if (s - 2.0).abs() <= BUSCH_BAND {
            None
        } else {
            Some((s > 2.0) == busch_incompatible(&a, &b))
        });
    }
    t
}

/// Overlap criterion against the CG enumeration in dimension 3.
pub fn overlap_vs_cg(rng: &mut ChaCha8Rng, cases: usize) -> Result<CheckTally> {
    let mut t = CheckTally::default();
    for _ in 0..cases {
        let (p, q) = random_qutrit_pair(rng);
        let analytic = rank1_overlap_criterion(&p, &q)?.full_incompatible;
        let sdp = full_incompatible_cg(&pair(p, q)?)?;
        t.record(match analytic {
            Some(a) if sdp.agree && sdp.layer.borderline_cases.is_empty() => Some(a == sdp.fully_incompatible),
            _ => None,
        });
    }
    Ok(t)
}

/// Subset-commutator criterion for projective pairs against the CG
/// enumeration.
pub fn commutator_vs_cg(rng: &mut ChaCha8Rng, cases: usize) -> Result<CheckTally> {
    let mut t = CheckTally::default();
    for _ in 0..cases {
        let (p, q) = random_qutrit_pair(rng);
        let analytic = projective_full_cg_criterion(&p, &q)?;
        let sdp = full_incompatible_cg(&pair(p, q)?)?;
        t.record(if sdp.layer.borderline_cases.is_empty() {
            Some(analytic == sdp.fully_incompatible)
        } else {
            None
        });
    }
    Ok(t)
}

/// Overlap window against the brute-force RAC scan.
pub fn rac_analytic_vs_scan(rng: &mut ChaCha8Rng, cases: usize) -> Result<CheckTally> {
    let mut t = CheckTally::default();
    for _ in 0..cases {
        let (p, q) = random_qutrit_pair(rng);
        let r = witness_full_cg_rac(&p, &q)?;
        t.record(Some(!r.disagreement));
    }
    Ok(t)
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfcheckSummary {
    pub seed: u64,
    pub checks: Vec<(String, CheckTally)>,
}

pub fn run_all(seed: u64, cases: usize) -> Result<SelfcheckSummary> {
    let mut r = rng(seed);
    let checks = vec![
        ("busch_vs_sdp".to_string(), busch_vs_sdp(&mut r, cases)?),
        ("chsh_vs_busch".to_string(), chsh_vs_busch(&mut r, cases)),
        ("overlap_vs_cg".to_string(), overlap_vs_cg(&mut r, cases)?),
        ("commutator_vs_cg".to_string(), commutator_vs_cg(&mut r, cases.div_ceil(2))?),
        ("rac_analytic_vs_scan".to_string(), rac_analytic_vs_scan(&mut r, cases)?),
    ];
    Ok(SelfcheckSummary { seed, checks })
}
