//! Operational witnesses of incompatibility.
//!
//! Random access codes: with two measurements of `d̄` outcomes on `C^d`, the
//! average success probability of the 2-to-1 code is
//! `P = 1/(2 d̄²) Σ_{i,j} λmax(A_i + B_j)`, and compatible measurements obey
//! `P <= (1 + d/d̄²)/2`. Exceeding the bound certifies incompatibility.
//!
//! Bell tests: Alice's qutrit measurements are coarse-grained to two
//! outcomes and CH facets of the resulting 2-2-3 scenario are evaluated on
//! the entangled state. Any violation of the local bound `S <= 0` certifies
//! that Alice's clubbed measurements are incompatible.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::golden_section_min;
use crate::error::{Error, Result};
use crate::linalg::{braket, c, Hermitian, C64};
use crate::measurement::{
    coarse_grain, enumerate_partitions, make_cglmp, make_experiment_scenario, make_trine_xyz,
    mix_inputs, Assemblage, BlochMeasurement, DisjointMixPlan, OutcomePartition, Party, Povm,
};
use crate::tol::{ADVANTAGE_EPS, OVERLAP_TOL};

/// Largest `d̄^k` accepted by [`rac_success_k`].
pub const RAC_CAP: usize = 100_000;

/// Compatible-measurement bound of the 2-to-1 RAC.
pub fn p_cb(dbar: usize, d: usize) -> Result<f64> {
    if dbar < 2 || d < 2 {
        return Err(Error::BadRange(format!("need d̄, d >= 2, got ({dbar}, {d})")));
    }
    Ok(0.5 * (1.0 + d as f64 / (dbar * dbar) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RacResult {
    pub k: usize,
    pub dbar: usize,
    pub d: usize,
    pub success: f64,
    pub bound: f64,
    pub advantage: bool,
}

pub fn rac_success_pair(a: &Povm, b: &Povm) -> Result<RacResult> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(a.dim(), b.dim()));
    }
    if a.num_outcomes() != b.num_outcomes() {
        return Err(Error::WrongShape(format!(
            "outcome counts {} and {} differ",
            a.num_outcomes(),
            b.num_outcomes()
        )));
    }
    let dbar = a.num_outcomes();
    let mut total = 0.0;
    for ai in a.effects() {
        for bj in b.effects() {
            total += ai.add(bj).max_eig()?;
        }
    }
    let success = total / (2 * dbar * dbar) as f64;
    let bound = p_cb(dbar, a.dim())?;
    Ok(RacResult {
        k: 2,
        dbar,
        d: a.dim(),
        success,
        bound,
        advantage: success > bound + ADVANTAGE_EPS,
    })
}

/// `P = 1/(k d̄^k) Σ_x λmax(Σ_y M_{x_y|y})` for the `k` measurements of `a`.
pub fn rac_success_k(a: &Assemblage) -> Result<f64> {
    let k = a.len();
    let dbar = a.outcomes();
    let total = (dbar as f64).powi(k as i32);
    if total > RAC_CAP as f64 {
        return Err(Error::TooLarge(format!("{dbar}^{k} RAC inputs exceed {RAC_CAP}")));
    }
    let strings = crate::jm::enumerate_strategy_tuples(&vec![dbar; k]);
    let sum: f64 = strings
        .par_iter()
        .map(|x| {
            let mut s = Hermitian::zeros(a.dim());
            for (y, &xy) in x.iter().enumerate() {
                s.axpy(1.0, a.effect(y, xy));
            }
            s.max_eig()
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(sum / (k as f64 * total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgRacChoice {
    /// Outcome of the first measurement singled out.
    pub i: usize,
    /// Outcome of the second measurement singled out.
    pub j: usize,
    pub overlap: f64,
    pub success: f64,
    pub advantage: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgRacReport {
    pub choices: Vec<CgRacChoice>,
    pub bound: f64,
    /// Advantage for every binary coarse-graining.
    pub witnessed: bool,
    /// `0 < |<phi_i|psi_j>| < 4/5` for all `i, j`.
    pub analytic: bool,
    pub disagreement: bool,
}

/// Overlap below which a singled-out pair of rank-one qutrit projectors
/// gives a RAC advantage.
pub const OVERLAP_BOUND: f64 = 0.8;

/// Closed-form success of the clubbed qutrit pair with singled-out overlap `c`.
pub fn clubbed_pair_success(c: f64) -> f64 {
    (5.0 + c + 2.0 * (1.0 - c * c).max(0.0).sqrt()) / 8.0
}

/// RAC scan over every binary coarse-graining `{i}, rest` / `{j}, rest` of
/// two rank-one projective qutrit measurements.
pub fn witness_full_cg_rac(p: &Povm, q: &Povm) -> Result<CgRacReport> {
    if p.dim() != 3 || q.dim() != 3 || p.num_outcomes() != 3 || q.num_outcomes() != 3 {
        return Err(Error::WrongShape(
            "two three-outcome measurements on C^3 required".into(),
        ));
    }
    let u = p.rank_one_vectors()?;
    let v = q.rank_one_vectors()?;
    let bound = p_cb(2, 3)?;
    let mut choices = Vec::with_capacity(9);
    for i in 0..3 {
        let pa = coarse_grain(p, &OutcomePartition::single_out(3, i)?)?;
        for j in 0..3 {
            let qb = coarse_grain(q, &OutcomePartition::single_out(3, j)?)?;
            let r = rac_success_pair(&pa, &qb)?;
            choices.push(CgRacChoice {
                i,
                j,
                overlap: braket(&u[i], &v[j]).norm(),
                success: r.success,
                advantage: r.success > bound + ADVANTAGE_EPS,
            });
        }
    }
    let witnessed = choices.iter().all(|c| c.advantage);
    let analytic = choices
        .iter()
        .all(|c| c.overlap > OVERLAP_TOL && c.overlap < OVERLAP_BOUND - 1e-10);
    Ok(CgRacReport {
        choices,
        bound,
        witnessed,
        analytic,
        disagreement: witnessed != analytic,
    })
}

/// Closed-form RAC success for `p X + (1-p) Y` against `Z` with all three
/// Pauli measurements at visibility `nu`.
pub fn pauli_mix_success(nu: f64, p: f64) -> f64 {
    0.25 * (2.0 + (2.0 * nu * nu - 2.0 * p * nu * nu + 2.0 * p * p * nu * nu).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixPoint {
    /// Measurement kept apart; the other two are mixed.
    pub alone: usize,
    /// Outcome relabelling of the second mixed member (index into the
    /// permutation list of its outcomes).
    pub pairing: usize,
    pub p: f64,
    pub success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcmRacReport {
    pub bound: f64,
    pub witnessed: bool,
    pub minimum: MixPoint,
    /// Largest deviation from the closed form on the grid, for equal-noise
    /// Pauli input.
    pub closed_form_deviation: Option<f64>,
    pub evaluations: usize,
}

fn outcome_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Success of the mixed pair `p M_j + (1-p) M_k∘pi` against `M_alone`.
fn mixed_pair_success(a: &Assemblage, alone: usize, perm: &[usize], p: f64) -> Result<f64> {
    let (j, k) = ((alone + 1) % 3, (alone + 2) % 3);
    let id: Vec<usize> = (0..a.outcomes()).collect();
    let mut perms = vec![id.clone(); 3];
    perms[k] = perm.to_vec();
    let plan = DisjointMixPlan {
        groups: vec![vec![j, k], vec![alone]],
        weights: vec![vec![p, 1.0 - p], vec![1.0]],
        perms: Some(perms),
    };
    let m = mix_inputs(a, &plan)?;
    Ok(rac_success_pair(m.povm(0), m.povm(1))?.success)
}

/// Minimum RAC success over all mixtures of two measurements against the
/// third: every choice of the measurement kept apart, every outcome pairing
/// of the mixed members and the weight `p` on a grid with golden-section
/// refinement.
fn mixing_scan(a: &Assemblage, grid_points: usize) -> Result<(MixPoint, usize)> {
    if a.len() != 3 {
        return Err(Error::WrongShape("three measurements required".into()));
    }
    let perms = outcome_permutations(a.outcomes());
    let mut jobs = Vec::new();
    for alone in 0..3 {
        for pairing in 0..perms.len() {
            jobs.push((alone, pairing));
        }
    }
    let step = 1.0 / (grid_points - 1) as f64;
    let results: Vec<Result<(MixPoint, usize)>> = jobs
        .par_iter()
        .map(|&(alone, pairing)| {
            let perm = &perms[pairing];
            let mut best = MixPoint {
                alone,
                pairing,
                p: 0.0,
                success: f64::INFINITY,
            };
            let mut evals = 0;
            for t in 0..grid_points {
                let p = t as f64 * step;
                let s = mixed_pair_success(a, alone, perm, p)?;
                evals += 1;
                if s < best.success {
                    best.p = p;
                    best.success = s;
                }
            }
            let mut err = None;
            let (p, s) = golden_section_min(
                |p| {
                    evals += 1;
                    mixed_pair_success(a, alone, perm, p).unwrap_or_else(|e| {
                        err = Some(e);
                        f64::INFINITY
                    })
                },
                (best.p - step).max(0.0),
                (best.p + step).min(1.0),
                1e-9,
            );
            if let Some(e) = err {
                return Err(e);
            }
            if s < best.success {
                best.p = p;
                best.success = s;
            }
            Ok((best, evals))
        })
        .collect();
    let mut overall: Option<MixPoint> = None;
    let mut evaluations = 0;
    for r in results {
        let (m, e) = r?;
        evaluations += e;
        if overall.is_none_or(|o| m.success < o.success) {
            overall = Some(m);
        }
    }
    Ok((overall.expect("nonempty scan"), evaluations))
}

/// Full incompatibility of three unbiased binary qubit measurements under
/// disjoint mixing, witnessed through the 2-to-1 RAC.
pub fn witness_full_dcm_rac(a: &Assemblage, grid_points: usize) -> Result<DcmRacReport> {
    if a.len() != 3 || a.dim() != 2 || a.outcomes() != 2 {
        return Err(Error::WrongShape(
            "three binary qubit measurements required".into(),
        ));
    }
    if grid_points < 3 {
        return Err(Error::BadRange(format!("grid_points must be >= 3, got {grid_points}")));
    }
    let bloch = a
        .povms()
        .iter()
        .map(BlochMeasurement::from_povm)
        .collect::<Result<Vec<_>>>()?;
    let bound = p_cb(2, 2)?;
    let (minimum, evaluations) = mixing_scan(a, grid_points)?;

    // Equal-noise Pauli input: each vector along its own axis, equal norms.
    let nu = bloch[0].norm();
    let pauli = (0..3).all(|i| {
        (0..3).all(|j| if i == j { (bloch[i].n[j].abs() - nu).abs() < 1e-12 } else { bloch[i].n[j].abs() < 1e-12 })
    });
    let closed_form_deviation = if pauli {
        let id = [0usize, 1];
        let mut worst: f64 = 0.0;
        for t in 0..grid_points {
            let p = t as f64 / (grid_points - 1) as f64;
            let s = mixed_pair_success(a, 2, &id, p)?;
            worst = worst.max((s - pauli_mix_success(nu, p)).abs());
        }
        Some(worst)
    } else {
        None
    };
    Ok(DcmRacReport {
        bound,
        witnessed: minimum.success > bound + ADVANTAGE_EPS,
        minimum,
        closed_form_deviation,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrineReport {
    pub bound: f64,
    pub minimum: MixPoint,
    pub all_above: bool,
    pub evaluations: usize,
}

/// RAC scan of the qutrit X, Y, Z example over all mixtures of two against
/// the third.
pub fn trine_dcm_scan() -> Result<TrineReport> {
    trine_dcm_scan_with(101)
}

pub fn trine_dcm_scan_with(grid_points: usize) -> Result<TrineReport> {
    let a = make_trine_xyz()?;
    let bound = p_cb(3, 3)?;
    let (minimum, evaluations) = mixing_scan(&a, grid_points)?;
    Ok(TrineReport {
        bound,
        all_above: minimum.success > bound + ADVANTAGE_EPS,
        minimum,
        evaluations,
    })
}

/// Maximal CHSH value reachable with the binary qubit measurements `a`, `b`
/// on one side: `|a + b| + |a - b|`.
pub fn chsh_max_qubit(a: &BlochMeasurement, b: &BlochMeasurement) -> f64 {
    let s = a.add(b);
    let d = a.sub(b);
    let n = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    n(s) + n(d)
}

/// Two-party scenario with two measurements per party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellScenario {
    pub state: Vec<C64>,
    pub alice: [Povm; 2],
    pub bob: [Povm; 2],
}

impl BellScenario {
    pub fn new(state: Vec<C64>, alice: [Povm; 2], bob: [Povm; 2]) -> Result<Self> {
        let da = alice[0].dim();
        let db = bob[0].dim();
        if alice[1].dim() != da || bob[1].dim() != db {
            return Err(Error::DimMismatch(da, db));
        }
        if state.len() != da * db {
            return Err(Error::Shape(format!(
                "state of length {} for dimensions {da} x {db}",
                state.len()
            )));
        }
        let norm: f64 = state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Shape(format!("state norm {norm}")));
        }
        Ok(Self { state, alice, bob })
    }

    /// Maximally entangled qutrit pair with the CGLMP measurements.
    pub fn cglmp() -> Result<Self> {
        let s = 1.0 / 3f64.sqrt();
        let mut state = vec![c(0.0, 0.0); 9];
        for k in 0..3 {
            state[4 * k] = c(s, 0.0);
        }
        Self::new(
            state,
            [make_cglmp(Party::Alice, 1)?, make_cglmp(Party::Alice, 2)?],
            [make_cglmp(Party::Bob, 1)?, make_cglmp(Party::Bob, 2)?],
        )
    }

    pub fn experiment() -> Result<Self> {
        let e = make_experiment_scenario()?;
        Self::new(e.state, e.alice, e.bob)
    }
}

/// One CH functional of the scenario where Alice has two binary (clubbed)
/// measurements and Bob two ternary ones:
/// `S = P(00|A1B1) + P(00|A1B2) + P(00|A2B2) - P(00|A2B1) - P(0|A1) - P(0|B2)`,
/// where "0" is the distinguished block of each clubbing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChFacet {
    /// Bob's two-block clubbing per setting.
    pub bob_clubbing: [OutcomePartition; 2],
    /// Exchanges the roles of Alice's settings.
    pub swap_a: bool,
    /// Exchanges the roles of Bob's settings.
    pub swap_b: bool,
    /// Distinguished block index per Alice setting.
    pub alice_outcome: [usize; 2],
    /// Distinguished block index per Bob setting.
    pub bob_outcome: [usize; 2],
}

impl ChFacet {
    /// Value on a local deterministic point: Alice's block indices and Bob's
    /// raw outcomes.
    pub fn evaluate_deterministic(&self, a: [usize; 2], b: [usize; 2]) -> i32 {
        let bo = [
            self.bob_clubbing[0].block_of()[b[0]],
            self.bob_clubbing[1].block_of()[b[1]],
        ];
        let a0 = [(a[0] == self.alice_outcome[0]) as i32, (a[1] == self.alice_outcome[1]) as i32];
        let b0 = [(bo[0] == self.bob_outcome[0]) as i32, (bo[1] == self.bob_outcome[1]) as i32];
        let (a1, a2) = if self.swap_a { (a0[1], a0[0]) } else { (a0[0], a0[1]) };
        let (b1, b2) = if self.swap_b { (b0[1], b0[0]) } else { (b0[0], b0[1]) };
        a1 * b1 + a1 * b2 + a2 * b2 - a2 * b1 - a1 - b2
    }

    /// Values on all 36 local deterministic points.
    pub fn signature(&self) -> Vec<i32> {
        let mut out = Vec::with_capacity(36);
        for a1 in 0..2 {
            for a2 in 0..2 {
                for b1 in 0..3 {
                    for b2 in 0..3 {
                        out.push(self.evaluate_deterministic([a1, a2], [b1, b2]));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetEnumeration {
    pub raw_count: usize,
    /// One representative per distinct functional, first in enumeration order.
    pub facets: Vec<ChFacet>,
}

/// All CH functionals: Bob's 3 x 3 clubbings, 4 setting swaps and 16
/// distinguished-outcome choices, deduplicated by their values on the local
/// deterministic points.
pub fn enumerate_ch_facets() -> FacetEnumeration {
    let clubbings: Vec<OutcomePartition> = enumerate_partitions(3, 2)
        .expect("valid range")
        .into_iter()
        .filter(|p| p.num_blocks() == 2)
        .collect();
    let mut raw = Vec::new();
    for b1 in &clubbings {
        for b2 in &clubbings {
            for (swap_a, swap_b) in [(false, false), (true, false), (false, true), (true, true)] {
                for mask in 0..16usize {
                    raw.push(ChFacet {
                        bob_clubbing: [b1.clone(), b2.clone()],
                        swap_a,
                        swap_b,
                        alice_outcome: [mask & 1, mask >> 1 & 1],
                        bob_outcome: [mask >> 2 & 1, mask >> 3 & 1],
                    });
                }
            }
        }
    }
    let raw_count = raw.len();
    let mut seen: HashMap<Vec<i32>, ()> = HashMap::new();
    let facets = raw
        .into_iter()
        .filter(|f| seen.insert(f.signature(), ()).is_none())
        .collect();
    FacetEnumeration { raw_count, facets }
}

fn block_projector(p: &Povm, part: &OutcomePartition, block: usize) -> Result<Hermitian> {
    if part.num_blocks() != 2 {
        return Err(Error::PartitionMismatch(format!(
            "binary clubbing required, got {part}"
        )));
    }
    Ok(coarse_grain(p, part)?.effect(block).clone())
}

/// Hermitian operator `B` with `<psi|B|psi> = S` for the facet, given Alice's
/// clubbing per setting.
pub fn bell_operator(
    scenario: &BellScenario,
    facet: &ChFacet,
    alice_cg: &[OutcomePartition; 2],
) -> Result<Hermitian> {
    let pa = [
        block_projector(&scenario.alice[0], &alice_cg[0], facet.alice_outcome[0])?,
        block_projector(&scenario.alice[1], &alice_cg[1], facet.alice_outcome[1])?,
    ];
    let pb = [
        block_projector(&scenario.bob[0], &facet.bob_clubbing[0], facet.bob_outcome[0])?,
        block_projector(&scenario.bob[1], &facet.bob_clubbing[1], facet.bob_outcome[1])?,
    ];
    let (a1, a2) = if facet.swap_a { (&pa[1], &pa[0]) } else { (&pa[0], &pa[1]) };
    let (b1, b2) = if facet.swap_b { (&pb[1], &pb[0]) } else { (&pb[0], &pb[1]) };
    let ia = Hermitian::identity(a1.dim());
    let ib = Hermitian::identity(b1.dim());
    let mut op = a1.kron(b1);
    op.axpy(1.0, &a1.kron(b2));
    op.axpy(1.0, &a2.kron(b2));
    op.axpy(-1.0, &a2.kron(b1));
    op.axpy(-1.0, &a1.kron(&ib));
    op.axpy(-1.0, &ia.kron(b2));
    Ok(op)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellVerdict {
    pub best_facet: ChFacet,
    /// Largest `S` over the facets on the scenario's state.
    pub s: f64,
    pub delta_s: f64,
    /// Largest top eigenvalue of the facets' Bell operators.
    pub state_optimized_s: f64,
    pub facets_evaluated: usize,
}

/// Best CH violation over the enumerated facets for a given clubbing of
/// Alice's outcomes.
pub fn best_ch_violation(scenario: &BellScenario, alice_cg: &[OutcomePartition; 2]) -> Result<BellVerdict> {
    let facets = enumerate_ch_facets().facets;
    let values = facets
        .par_iter()
        .map(|f| {
            let op = bell_operator(scenario, f, alice_cg)?;
            Ok((op.expectation(&scenario.state), op.max_eig()?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.0 > values[best].0 {
            best = i;
        }
    }
    let s = values[best].0;
    Ok(BellVerdict {
        best_facet: facets[best].clone(),
        s,
        delta_s: s.max(0.0),
        state_optimized_s: values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max),
        facets_evaluated: facets.len(),
    })
}

/// Clubbing that merges outcomes `pair` of a three-outcome measurement.
pub fn club_pair(pair: (usize, usize)) -> Result<OutcomePartition> {
    let rest: Vec<usize> = (0..3).filter(|&z| z != pair.0 && z != pair.1).collect();
    if pair.0 == pair.1 || rest.len() != 1 {
        return Err(Error::PartitionMismatch(format!("invalid pair {pair:?}")));
    }
    OutcomePartition::new(3, vec![vec![pair.0, pair.1], rest])
}

/// CH violation for the CGLMP measurements on the maximally entangled state.
pub fn delta_s_theory(alice_cg: &[OutcomePartition; 2]) -> Result<BellVerdict> {
    best_ch_violation(&BellScenario::cglmp()?, alice_cg)
}

/// CH violation for the experimental state and measurements.
pub fn delta_s_experiment(alice_cg: &[OutcomePartition; 2]) -> Result<BellVerdict> {
    best_ch_violation(&BellScenario::experiment()?, alice_cg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub a1: (usize, usize),
    pub a2: (usize, usize),
    pub theory: BellVerdict,
    pub experiment: BellVerdict,
    /// A CH violation certifies incompatibility of Alice's clubbed pair.
    pub witnessed: bool,
}

pub const CLUBBED_PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];

pub fn table3() -> Result<Vec<Table3Row>> {
    let theory = BellScenario::cglmp()?;
    let experiment = BellScenario::experiment()?;
    let mut rows = Vec::with_capacity(9);
    for &a1 in &CLUBBED_PAIRS {
        for &a2 in &CLUBBED_PAIRS {
            let cg = [club_pair(a1)?, club_pair(a2)?];
            let t = best_ch_violation(&theory, &cg)?;
            let e = best_ch_violation(&experiment, &cg)?;
            rows.push(Table3Row {
                a1,
                a2,
                witnessed: t.delta_s > 0.0,
                theory: t,
                experiment: e,
            });
        }
    }
    Ok(rows)
}
