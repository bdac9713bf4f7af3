//! Layers of incompatibility.
//!
//! Under coarse-graining (CG) a set is k-incompatible when every plan that
//! leaves at least `k` outcomes per measurement is incompatible. Under
//! disjoint convex mixing (DCM) it is k-incompatible when every way of mixing
//! it down to `k` measurements is incompatible.
//!
//! The CG scan uses post-processing monotonicity: coarse-graining a
//! compatible set keeps it compatible, and every plan with at least `k`
//! blocks per partition coarsens to one with exactly `k`. If all
//! exactly-`k` plans are incompatible, so are all finer ones, and only the
//! exactly-`k` layer needs solving. [`CgOptions::exhaustive`] disables the
//! shortcut.
//!
//! The module also provides the closed-form criteria for special families:
//! subset commutators for projective pairs, overlaps for rank-one pairs, the
//! Busch criterion and its mixing extension for unbiased qubit measurements.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jm::{solve_jm_with, solve_mixture_with, JmOptions, JmResult, JmVerdict};
use crate::linalg::{braket, commutator, Hermitian};
use crate::measurement::{
    mix_inputs, partitions_into, Assemblage, BlochMeasurement, CoarseGrainPlan, DisjointMixPlan,
    OutcomePartition, Povm,
};
use crate::tol::{COMMUTATOR_TOL, OVERLAP_TOL, PLANARITY_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operation {
    CoarseGraining,
    DisjointMixing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerVerdict {
    Incompatible,
    CompatiblePlanFound,
    Borderline,
}

impl LayerVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerVerdict::Incompatible => "incompatible",
            LayerVerdict::CompatiblePlanFound => "compatible-plan-found",
            LayerVerdict::Borderline => "borderline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Plan {
    CoarseGrain(CoarseGrainPlan),
    Mix(DisjointMixPlan),
}

impl std::fmt::Display for Plan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Plan::CoarseGrain(p) => write!(f, "{p}"),
            Plan::Mix(p) => {
                let g: Vec<String> = p
                    .groups
                    .iter()
                    .zip(&p.weights)
                    .map(|(g, w)| {
                        let m: Vec<String> = g
                            .iter()
                            .zip(w)
                            .map(|(x, w)| format!("{x}:{w:.6}"))
                            .collect();
                        format!("[{}]", m.join(" "))
                    })
                    .collect();
                write!(f, "{}", g.join(" "))?;
                if let Some(perms) = &p.perms {
                    let s: Vec<String> = perms.iter().map(|q| format!("{q:?}")).collect();
                    write!(f, " perms {}", s.join(""))?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub k: usize,
    pub verdict: LayerVerdict,
    /// Plan whose output was confirmed compatible by a separate solve.
    pub witness: Option<Plan>,
    pub witness_mu: Option<f64>,
    pub borderline_cases: Vec<Plan>,
    /// Largest `mu*` seen over the scanned plans.
    pub best_mu: f64,
    pub solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub operation: Operation,
    pub entries: Vec<LayerEntry>,
}

/// Coarse-grainings admitted per measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PartitionFamily {
    /// Every partition with enough blocks.
    #[default]
    All,
    /// Partitions where all blocks but one are singletons, so a binary
    /// coarse-graining singles out one outcome.
    SingletonsPlusRest,
}

impl PartitionFamily {
    pub fn admits(&self, blocks: &[Vec<usize>]) -> bool {
        match self {
            PartitionFamily::All => true,
            PartitionFamily::SingletonsPlusRest => blocks.iter().filter(|b| b.len() > 1).count() <= 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CgOptions {
    pub exhaustive: bool,
    pub family: PartitionFamily,
    pub jm: JmOptions,
}

/// Solves `items` in chunks, stopping after the first chunk that contains a
/// compatible verdict. Results keep input order.
fn scan_until_compatible<T: Sync>(
    items: &[T],
    chunk: usize,
    f: impl Fn(&T) -> Result<JmResult> + Sync,
) -> Result<Vec<JmResult>> {
    let mut out = Vec::with_capacity(items.len());
    for c in items.chunks(chunk.max(1)) {
        let rs: Vec<Result<JmResult>> = c.par_iter().map(&f).collect();
        let mut hit = false;
        for r in rs {
            let r = r?;
            hit |= r.verdict.is_compatible();
            out.push(r);
        }
        if hit {
            break;
        }
    }
    Ok(out)
}

fn cartesian<T: Clone>(lists: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for l in lists {
        let mut next = Vec::with_capacity(out.len() * l.len());
        for prefix in &out {
            for v in l {
                let mut p = prefix.clone();
                p.push(v.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn check_k(k: usize, max: usize, what: &str) -> Result<()> {
    if k < 2 || k > max {
        return Err(Error::BadRange(format!("k must lie in 2..={max} ({what}), got {k}")));
    }
    Ok(())
}

pub fn classify_cg(a: &Assemblage, k: usize) -> Result<LayerEntry> {
    classify_cg_with(a, k, &CgOptions::default())
}

pub fn classify_cg_with(a: &Assemblage, k: usize, opts: &CgOptions) -> Result<LayerEntry> {
    let dbar = a.outcomes();
    check_k(k, dbar, "outcome count")?;
    let per_measurement = |exact: bool| -> Vec<OutcomePartition> {
        let blocks: Vec<Vec<Vec<usize>>> = if exact {
            partitions_into(dbar, k)
        } else {
            (k..=dbar).flat_map(|b| partitions_into(dbar, b)).collect()
        };
        blocks
            .into_iter()
            .filter(|b| opts.family.admits(b))
            .map(|b| OutcomePartition::new(dbar, b).expect("generated partition"))
            .collect()
    };
    let plans_for = |exact: bool| -> Vec<CoarseGrainPlan> {
        let parts = per_measurement(exact);
        cartesian(&vec![parts; a.len()])
            .into_iter()
            .map(|partitions| CoarseGrainPlan { partitions })
            .collect()
    };
    let solve = |p: &CoarseGrainPlan| solve_jm_with(&p.apply(a)?, &opts.jm);

    let plans = plans_for(!opts.exhaustive);
    let results = scan_until_compatible(&plans, 8, solve)?;
    let mut solves = results.len();
    let mut best_mu = results.iter().map(|r| r.mu_star).fold(f64::NEG_INFINITY, f64::max);
    let mut borderline: Vec<Plan> = results
        .iter()
        .zip(&plans)
        .filter(|(r, _)| r.verdict == JmVerdict::Borderline)
        .map(|(_, p)| Plan::CoarseGrain(p.clone()))
        .collect();
    let mut found = results
        .iter()
        .zip(&plans)
        .find(|(r, _)| r.verdict.is_compatible())
        .map(|(_, p)| p.clone());

    // Undecided coarsest plans leave the finer ones open.
    if found.is_none() && !borderline.is_empty() && !opts.exhaustive {
        let finer: Vec<CoarseGrainPlan> = plans_for(false)
            .into_iter()
            .filter(|p| p.partitions.iter().any(|q| q.num_blocks() > k))
            .collect();
        let more = scan_until_compatible(&finer, 8, solve)?;
        solves += more.len();
        best_mu = more.iter().map(|r| r.mu_star).fold(best_mu, f64::max);
        borderline.extend(
            more.iter()
                .zip(&finer)
                .filter(|(r, _)| r.verdict == JmVerdict::Borderline)
                .map(|(_, p)| Plan::CoarseGrain(p.clone())),
        );
        found = more
            .iter()
            .zip(&finer)
            .find(|(r, _)| r.verdict.is_compatible())
            .map(|(_, p)| p.clone());
    }

    if let Some(plan) = found {
        let confirm = solve(&plan)?;
        solves += 1;
        let verdict = if confirm.verdict.is_compatible() {
            LayerVerdict::CompatiblePlanFound
        } else {
            LayerVerdict::Borderline
        };
        return Ok(LayerEntry {
            k,
            verdict,
            witness: Some(Plan::CoarseGrain(plan)),
            witness_mu: Some(confirm.mu_star),
            borderline_cases: borderline,
            best_mu,
            solves,
        });
    }
    Ok(LayerEntry {
        k,
        verdict: if borderline.is_empty() {
            LayerVerdict::Incompatible
        } else {
            LayerVerdict::Borderline
        },
        witness: None,
        witness_mu: None,
        borderline_cases: borderline,
        best_mu,
        solves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullCgReport {
    pub fully_incompatible: bool,
    pub layer: LayerEntry,
    /// Direct scan over every nontrivial plan.
    pub direct_scan: LayerEntry,
    pub agree: bool,
}

/// Full incompatibility under coarse-graining, i.e. 2-incompatibility, cross
/// checked against the scan over all nontrivial plans.
pub fn full_incompatible_cg(a: &Assemblage) -> Result<FullCgReport> {
    full_incompatible_cg_with(a, &JmOptions::default())
}

pub fn full_incompatible_cg_with(a: &Assemblage, jm: &JmOptions) -> Result<FullCgReport> {
    if a.outcomes() < 2 {
        return Ok(trivial_full_cg(a));
    }
    let layer = classify_cg_with(a, 2, &CgOptions { exhaustive: false, jm: *jm, ..Default::default() })?;
    let direct_scan = classify_cg_with(a, 2, &CgOptions { exhaustive: true, jm: *jm, ..Default::default() })?;
    let agree = layer.verdict == direct_scan.verdict;
    Ok(FullCgReport {
        fully_incompatible: layer.verdict == LayerVerdict::Incompatible,
        layer,
        direct_scan,
        agree,
    })
}

fn trivial_full_cg(a: &Assemblage) -> FullCgReport {
    let entry = LayerEntry {
        k: 2,
        verdict: LayerVerdict::CompatiblePlanFound,
        witness: Some(Plan::CoarseGrain(CoarseGrainPlan::identity(a))),
        witness_mu: None,
        borderline_cases: Vec::new(),
        best_mu: f64::NAN,
        solves: 0,
    };
    FullCgReport {
        fully_incompatible: false,
        layer: entry.clone(),
        direct_scan: entry,
        agree: true,
    }
}

/// Nonempty proper subsets of `0..n` as sorted index lists.
fn proper_subsets(n: usize) -> Vec<Vec<usize>> {
    (1..(1usize << n) - 1)
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
        .collect()
}

fn subset_sum(p: &Povm, s: &[usize]) -> Hermitian {
    let mut out = Hermitian::zeros(p.dim());
    for &i in s {
        out.axpy(1.0, p.effect(i));
    }
    out
}

/// Projective pairs: fully incompatible under coarse-graining iff no subset
/// sum of one commutes with a subset sum of the other.
pub fn projective_full_cg_criterion(p: &Povm, q: &Povm) -> Result<bool> {
    for m in [p, q] {
        if !m.is_projective() {
            return Err(Error::NotProjective(m.label().to_string()));
        }
    }
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch(p.dim(), q.dim()));
    }
    let sp = proper_subsets(p.num_outcomes());
    let sq = proper_subsets(q.num_outcomes());
    if sp.is_empty() || sq.is_empty() {
        return Ok(false);
    }
    for s in &sp {
        let a = subset_sum(p, s);
        for t in &sq {
            let b = subset_sum(q, t);
            if commutator(&a, &b)?.max_abs() <= COMMUTATOR_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverlapVerdict {
    AllOverlapsNonzero,
    ZeroOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub verdict: OverlapVerdict,
    /// `|<psi_i|phi_j>|` indexed `[i][j]`.
    pub overlaps: Vec<Vec<f64>>,
    /// In dimension 3 the overlap condition decides full CG incompatibility.
    pub full_incompatible: Option<bool>,
}

/// Rank-one projective pairs: nonzero overlaps everywhere is necessary for
/// full incompatibility under coarse-graining, and sufficient in dimension 3.
pub fn rank1_overlap_criterion(p: &Povm, q: &Povm) -> Result<OverlapReport> {
    let u = p.rank_one_vectors()?;
    let v = q.rank_one_vectors()?;
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch(p.dim(), q.dim()));
    }
    let overlaps: Vec<Vec<f64>> = u
        .iter()
        .map(|a| v.iter().map(|b| braket(a, b).norm()).collect())
        .collect();
    let nonzero = overlaps.iter().flatten().all(|&o| o > OVERLAP_TOL);
    Ok(OverlapReport {
        verdict: if nonzero {
            OverlapVerdict::AllOverlapsNonzero
        } else {
            OverlapVerdict::ZeroOverlap
        },
        overlaps,
        full_incompatible: (p.dim() == 3).then_some(nonzero),
    })
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn busch_value(a: [f64; 3], b: [f64; 3]) -> f64 {
    let s = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    norm3(s) + norm3(d)
}

/// Two unbiased binary qubit measurements are incompatible iff
/// `|a + b| + |a - b| > 2`.
pub fn busch_incompatible(a: &BlochMeasurement, b: &BlochMeasurement) -> bool {
    busch_value(a.n, b.n) > 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingMinimum {
    /// Index of the measurement kept apart.
    pub alone: usize,
    pub q: f64,
    /// Sign applied to the second mixed vector (-1 for swapped outcomes).
    pub sign: f64,
    pub value: f64,
}

/// Minimizes the Busch functional of `(n_i, q n_j + s (1-q) n_k)` over q for
/// each cyclic choice of `i` and each allowed sign `s`.
fn qubit_mixing_minima(n: [&BlochMeasurement; 3], signs: &[f64]) -> Vec<MixingMinimum> {
    let mut out = Vec::new();
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        for &s in signs {
            let f = |q: f64| {
                let m = [
                    q * n[j].n[0] + s * (1.0 - q) * n[k].n[0],
                    q * n[j].n[1] + s * (1.0 - q) * n[k].n[1],
                    q * n[j].n[2] + s * (1.0 - q) * n[k].n[2],
                ];
                busch_value(n[i].n, m)
            };
            // The functional is convex in q: grid, then golden section.
            let grid = 101;
            let (mut best_q, mut best) = (0.0, f(0.0));
            for t in 1..grid {
                let q = t as f64 / (grid - 1) as f64;
                let v = f(q);
                if v < best {
                    best = v;
                    best_q = q;
                }
            }
            let step = 1.0 / (grid - 1) as f64;
            let (q, v) = golden_section_min(
                f,
                (best_q - step).max(0.0),
                (best_q + step).min(1.0),
                1e-9,
            );
            let (q, v) = if v < best { (q, v) } else { (best_q, best) };
            out.push(MixingMinimum {
                alone: i,
                q,
                sign: s,
                value: v,
            });
        }
    }
    out
}

/// Golden-section search for a minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section_min(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Three unbiased binary qubit measurements are fully incompatible under
/// disjoint mixing iff every mixture of two stays Busch-incompatible with
/// the third.
pub fn dcm_condition_qubit(n0: &BlochMeasurement, n1: &BlochMeasurement, n2: &BlochMeasurement) -> bool {
    qubit_mixing_minima([n0, n1, n2], &[1.0])
        .iter()
        .all(|m| m.value > 2.0)
}

/// As [`dcm_condition_qubit`], optionally admitting mixtures with the outcomes
/// of the second member swapped.
pub fn dcm_condition_qubit_with(
    n: [&BlochMeasurement; 3],
    include_permutations: bool,
) -> (bool, Vec<MixingMinimum>) {
    let signs: &[f64] = if include_permutations { &[1.0, -1.0] } else { &[1.0] };
    let minima = qubit_mixing_minima(n, signs);
    (minima.iter().all(|m| m.value > 2.0), minima)
}

/// Noisy Pauli triple `nu_i sigma_i`: fully incompatible under disjoint mixing
/// iff `nu_i^2 + nu_j^2 nu_k^2 / (nu_j^2 + nu_k^2) > 1` for all cyclic `i`.
pub fn noisy_pauli_full_dcm(nu: [f64; 3]) -> Result<bool> {
    Ok(noisy_pauli_margin(nu)? > 1.0)
}

/// Smallest cyclic term of the noisy Pauli criterion.
pub fn noisy_pauli_margin(nu: [f64; 3]) -> Result<f64> {
    for &v in &nu {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::BadVisibility(v));
        }
    }
    let mut m = f64::INFINITY;
    for i in 0..3 {
        let (a, b, c) = (nu[i] * nu[i], nu[(i + 1) % 3].powi(2), nu[(i + 2) % 3].powi(2));
        let ratio = if b + c == 0.0 { 0.0 } else { b * c / (b + c) };
        m = m.min(a + ratio);
    }
    Ok(m)
}

/// `|det[n0 n1 n2]| <= PLANARITY_TOL`.
pub fn planarity_check(n0: &BlochMeasurement, n1: &BlochMeasurement, n2: &BlochMeasurement) -> bool {
    let (a, b, c) = (n0.n, n1.n, n2.n);
    let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0]);
    det.abs() <= PLANARITY_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightSearch {
    /// Grid over the weights, golden-section refinement in the
    /// single-parameter case.
    Grid,
    /// Weights as SDP variables: exact maximum of `mu*` over all weights.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcmScanOptions {
    pub grid_points: usize,
    pub refine_tol: f64,
    pub include_permutations: bool,
    pub search: WeightSearch,
    /// Upper bound on the number of solves a scan may schedule.
    pub job_cap: usize,
    pub jm: JmOptions,
}

impl Default for DcmScanOptions {
    fn default() -> Self {
        Self {
            grid_points: 101,
            refine_tol: 1e-4,
            include_permutations: true,
            search: WeightSearch::Grid,
            job_cap: 2_000_000,
            jm: JmOptions::default(),
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
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
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Outcome permutations for every measurement: the first member of each
/// group keeps its labels, the others range over all permutations.
fn permutation_choices(groups: &[Vec<usize>], n: usize, outcomes: usize) -> Vec<Vec<Vec<usize>>> {
    let id: Vec<usize> = (0..outcomes).collect();
    let all = permutations(outcomes);
    let mut per_x: Vec<Vec<Vec<usize>>> = vec![vec![id.clone()]; n];
    for g in groups {
        for &x in &g[1..] {
            per_x[x] = all.clone();
        }
    }
    cartesian(&per_x)
}

/// Weight vectors on the simplex with the given number of grid points per
/// unit (`steps + 1` points on an edge).
fn simplex_grid(members: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(left - v, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(steps, members, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|v| v.into_iter().map(|c| c as f64 / steps as f64).collect())
        .collect()
}

pub fn classify_dcm(a: &Assemblage, k: usize, opts: &DcmScanOptions) -> Result<LayerEntry> {
    let n = a.len();
    check_k(k, n, "measurement count")?;
    if opts.grid_points < 3 {
        return Err(Error::BadRange(format!("grid_points must be >= 3, got {}", opts.grid_points)));
    }
    let groupings = partitions_into(n, k);
    // (grouping, perms) pairs in deterministic order.
    let mut configs: Vec<(Vec<Vec<usize>>, Option<Vec<Vec<usize>>>)> = Vec::new();
    for g in &groupings {
        if opts.include_permutations {
            for p in permutation_choices(g, n, a.outcomes()) {
                configs.push((g.clone(), Some(p)));
            }
        } else {
            configs.push((g.clone(), None));
        }
    }
    let mut solves = 0;
    let mut best_mu = f64::NEG_INFINITY;
    let mut borderline = Vec::new();
    for (groups, perms) in &configs {
        let outcome = match opts.search {
            WeightSearch::Joint => dcm_joint(a, groups, perms.as_deref(), opts)?,
            WeightSearch::Grid => dcm_grid(a, groups, perms.as_deref(), opts)?,
        };
        solves += outcome.solves;
        best_mu = best_mu.max(outcome.best_mu);
        borderline.extend(outcome.borderline);
        if let Some((plan, _)) = outcome.found {
            let confirm = solve_jm_with(&mix_inputs(a, &plan)?, &opts.jm)?;
            solves += 1;
            let verdict = if confirm.verdict.is_compatible() {
                LayerVerdict::CompatiblePlanFound
            } else {
                LayerVerdict::Borderline
            };
            return Ok(LayerEntry {
                k,
                verdict,
                witness: Some(Plan::Mix(plan)),
                witness_mu: Some(confirm.mu_star),
                borderline_cases: borderline,
                best_mu,
                solves,
            });
        }
        if solves > opts.job_cap {
            return Err(Error::TooLarge(format!("scan exceeded {} solves", opts.job_cap)));
        }
    }
    Ok(LayerEntry {
        k,
        verdict: if borderline.is_empty() {
            LayerVerdict::Incompatible
        } else {
            LayerVerdict::Borderline
        },
        witness: None,
        witness_mu: None,
        borderline_cases: borderline,
        best_mu,
        solves,
    })
}

struct ConfigOutcome {
    found: Option<(DisjointMixPlan, f64)>,
    borderline: Vec<Plan>,
    best_mu: f64,
    solves: usize,
}

fn dcm_joint(
    a: &Assemblage,
    groups: &[Vec<usize>],
    perms: Option<&[Vec<usize>]>,
    opts: &DcmScanOptions,
) -> Result<ConfigOutcome> {
    let r = solve_mixture_with(a, groups, perms, &opts.jm)?;
    let plan = DisjointMixPlan {
        groups: groups.to_vec(),
        weights: r.weights.clone(),
        perms: perms.map(<[Vec<usize>]>::to_vec),
    };
    let mu = r.jm.mu_star;
    Ok(match r.jm.verdict {
        JmVerdict::Compatible => ConfigOutcome {
            found: Some((plan, mu)),
            borderline: vec![],
            best_mu: mu,
            solves: 1,
        },
        JmVerdict::Borderline => ConfigOutcome {
            found: None,
            borderline: vec![Plan::Mix(plan)],
            best_mu: mu,
            solves: 1,
        },
        JmVerdict::Incompatible => ConfigOutcome {
            found: None,
            borderline: vec![],
            best_mu: mu,
            solves: 1,
        },
    })
}

fn dcm_grid(
    a: &Assemblage,
    groups: &[Vec<usize>],
    perms: Option<&[Vec<usize>]>,
    opts: &DcmScanOptions,
) -> Result<ConfigOutcome> {
    let per_group: Vec<Vec<Vec<f64>>> = groups
        .iter()
        .map(|g| match g.len() {
            1 => vec![vec![1.0]],
            2 => simplex_grid(2, opts.grid_points - 1),
            m => simplex_grid(m, 20),
        })
        .collect();
    let weight_sets = cartesian(&per_group);
    if weight_sets.len() > opts.job_cap {
        return Err(Error::TooLarge(format!(
            "{} weight choices exceed the cap {}",
            weight_sets.len(),
            opts.job_cap
        )));
    }
    let make = |w: &Vec<Vec<f64>>| DisjointMixPlan {
        groups: groups.to_vec(),
        weights: w.clone(),
        perms: perms.map(<[Vec<usize>]>::to_vec),
    };
    let solve = |w: &Vec<Vec<f64>>| solve_jm_with(&mix_inputs(a, &make(w))?, &opts.jm);
    let results = scan_until_compatible(&weight_sets, 8, solve)?;
    let mut solves = results.len();
    let mut best_mu = results.iter().map(|r| r.mu_star).fold(f64::NEG_INFINITY, f64::max);
    let mut borderline: Vec<Plan> = results
        .iter()
        .zip(&weight_sets)
        .filter(|(r, _)| r.verdict == JmVerdict::Borderline)
        .map(|(_, w)| Plan::Mix(make(w)))
        .collect();
    if let Some((r, w)) = results
        .iter()
        .zip(&weight_sets)
        .find(|(r, _)| r.verdict.is_compatible())
    {
        return Ok(ConfigOutcome {
            found: Some((make(w), r.mu_star)),
            borderline,
            best_mu,
            solves,
        });
    }

    // Single mixing parameter: refine around each local maximum of mu*(q).
    let pair_groups: Vec<usize> = (0..groups.len()).filter(|&g| groups[g].len() == 2).collect();
    let single = pair_groups.len() == 1 && groups.iter().all(|g| g.len() <= 2);
    if single {
        let gi = pair_groups[0];
        let qs: Vec<f64> = weight_sets.iter().map(|w| w[gi][0]).collect();
        let mus: Vec<f64> = results.iter().map(|r| r.mu_star).collect();
        let weights_at = |q: f64| {
            let mut w = weight_sets[0].clone();
            w[gi] = vec![q, 1.0 - q];
            w
        };
        let step = 1.0 / (opts.grid_points - 1) as f64;
        for t in 0..mus.len() {
            let left = if t == 0 { f64::NEG_INFINITY } else { mus[t - 1] };
            let right = if t + 1 == mus.len() { f64::NEG_INFINITY } else { mus[t + 1] };
            if mus[t] < left || mus[t] < right {
                continue;
            }
            let lo = (qs[t] - step).max(0.0);
            let hi = (qs[t] + step).min(1.0);
            let mut err = None;
            let mut evals: Vec<(f64, JmResult)> = Vec::new();
            let neg_mu = |q: f64| match solve(&weights_at(q)) {
                Ok(r) => {
                    let m = r.mu_star;
                    evals.push((q, r));
                    -m
                }
                Err(e) => {
                    err = Some(e);
                    f64::INFINITY
                }
            };
            golden_section_min(neg_mu, lo, hi, opts.refine_tol);
            if let Some(e) = err {
                return Err(e);
            }
            solves += evals.len();
            for (q, r) in evals {
                best_mu = best_mu.max(r.mu_star);
                if r.verdict.is_compatible() {
                    return Ok(ConfigOutcome {
                        found: Some((make(&weights_at(q)), r.mu_star)),
                        borderline,
                        best_mu,
                        solves,
                    });
                }
                if r.verdict == JmVerdict::Borderline {
                    borderline.push(Plan::Mix(make(&weights_at(q))));
                }
            }
        }
    }
    Ok(ConfigOutcome {
        found: None,
        borderline,
        best_mu,
        solves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullDcmReport {
    pub fully_incompatible: bool,
    pub report: LayerReport,
}

/// k-incompatibility under disjoint mixing for every k = 2..n.
pub fn full_incompatible_dcm(a: &Assemblage, opts: &DcmScanOptions) -> Result<FullDcmReport> {
    let n = a.len();
    if n < 2 {
        return Err(Error::BadRange("need at least two measurements".into()));
    }
    let mut entries = Vec::new();
    for k in 2..=n {
        let e = classify_dcm(a, k, opts)?;
        let stop = e.verdict != LayerVerdict::Incompatible;
        entries.push(e);
        if stop {
            break;
        }
    }
    let fully_incompatible = entries.len() == n - 1 && entries.iter().all(|e| e.verdict == LayerVerdict::Incompatible);
    Ok(FullDcmReport {
        fully_incompatible,
        report: LayerReport {
            operation: Operation::DisjointMixing,
            entries,
        },
    })
}

/// All CG layers `k = 2..=outcomes`.
pub fn cg_layers(a: &Assemblage) -> Result<LayerReport> {
    let entries = (2..=a.outcomes())
        .map(|k| classify_cg(a, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(LayerReport {
        operation: Operation::CoarseGraining,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::measurement::{make_noisy_mub, make_noisy_pauli, pad_assemblage, MubBasis};

    fn mub_pair(nu: f64) -> Assemblage {
        make_noisy_mub(3, &[MubBasis::Computational, MubBasis::Fourier], nu).unwrap()
    }

    #[test]
    fn mub_pair_layers() {
        let a = mub_pair(0.70);
        assert_eq!(classify_cg(&a, 3).unwrap().verdict, LayerVerdict::Incompatible);
        let e = classify_cg(&a, 2).unwrap();
        assert_eq!(e.verdict, LayerVerdict::CompatiblePlanFound);
        let Some(Plan::CoarseGrain(plan)) = e.witness else { panic!() };
        assert!(solve_jm_with(&plan.apply(&a).unwrap(), &JmOptions::default())
            .unwrap()
            .verdict
            .is_compatible());
        assert_eq!(
            classify_cg(&mub_pair(0.72), 2).unwrap().verdict,
            LayerVerdict::Incompatible
        );
    }

    #[test]
    fn pruned_scan_matches_exhaustive() {
        for nu in [0.70, 0.72] {
            let a = mub_pair(nu);
            let fast = classify_cg(&a, 2).unwrap();
            let slow = classify_cg_with(&a, 2, &CgOptions { exhaustive: true, ..Default::default() })
                .unwrap();
            assert_eq!(fast.verdict, slow.verdict);
        }
    }

    #[test]
    fn clubbing_example() {
        let s = 1.0 / 2f64.sqrt();
        let z = c(0.0, 0.0);
        let m = Povm::from_vectors(
            "M",
            &[
                vec![c(1.0, 0.0), z, z],
                vec![z, c(1.0, 0.0), z],
                vec![z, z, c(1.0, 0.0)],
            ],
        )
        .unwrap();
        let n = Povm::from_vectors(
            "N",
            &[
                vec![c(s, 0.0), c(s, 0.0), z],
                vec![c(s, 0.0), c(-s, 0.0), z],
                vec![z, z, c(1.0, 0.0)],
            ],
        )
        .unwrap();
        let a = pad_assemblage(vec![m, n]).unwrap();
        assert_eq!(classify_cg(&a, 3).unwrap().verdict, LayerVerdict::Incompatible);
        let r = full_incompatible_cg(&a).unwrap();
        assert!(!r.fully_incompatible);
        assert!(r.agree);
        let Some(Plan::CoarseGrain(plan)) = r.layer.witness else { panic!() };
        let club = OutcomePartition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        assert_eq!(plan.partitions, vec![club.clone(), club]);
    }

    #[test]
    fn criteria_on_mub_pair() {
        let a = mub_pair(1.0);
        assert!(projective_full_cg_criterion(a.povm(0), a.povm(1)).unwrap());
        assert!(!projective_full_cg_criterion(a.povm(0), a.povm(0)).unwrap());
        let r = rank1_overlap_criterion(a.povm(0), a.povm(1)).unwrap();
        assert_eq!(r.verdict, OverlapVerdict::AllOverlapsNonzero);
        assert_eq!(r.full_incompatible, Some(true));
        let noisy = mub_pair(0.9);
        assert!(matches!(
            projective_full_cg_criterion(noisy.povm(0), noisy.povm(1)),
            Err(Error::NotProjective(_))
        ));
    }

    #[test]
    fn busch_examples() {
        let x = BlochMeasurement::new([1.0, 0.0, 0.0]).unwrap();
        let y = BlochMeasurement::new([0.0, 1.0, 0.0]).unwrap();
        assert!(busch_incompatible(&x, &y));
        assert!(!busch_incompatible(&x, &x));
        let at = |nu: f64| {
            busch_incompatible(
                &BlochMeasurement::new([nu, 0.0, 0.0]).unwrap(),
                &BlochMeasurement::new([0.0, nu, 0.0]).unwrap(),
            )
        };
        assert!(!at(0.707));
        assert!(at(0.7072));
    }

    #[test]
    fn qubit_dcm_examples() {
        let b = |v: [f64; 3]| BlochMeasurement::new(v).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!(dcm_condition_qubit(&b([1.0, 0.0, 0.0]), &b([0.0, 1.0, 0.0]), &b([0.0, 0.0, 1.0])));
        assert!(!dcm_condition_qubit(&b([1.0, 0.0, 0.0]), &b([0.0, 1.0, 0.0]), &b([s, s, 0.0])));
        assert!(!dcm_condition_qubit(&b([0.8, 0.0, 0.0]), &b([0.0, 0.8, 0.0]), &b([0.0, 0.0, 0.8])));
    }

    #[test]
    fn noisy_pauli_closed_form() {
        assert!(noisy_pauli_full_dcm([0.82; 3]).unwrap());
        assert!((noisy_pauli_margin([0.82; 3]).unwrap() - 0.82f64.powi(2) * 1.5).abs() < 1e-15);
        assert!((noisy_pauli_margin([1.0; 3]).unwrap() - 1.5).abs() < 1e-15);
        assert!(!noisy_pauli_full_dcm([1.0, 0.0, 0.0]).unwrap());
        assert!(noisy_pauli_full_dcm([1.2, 0.0, 0.0]).is_err());
    }

    #[test]
    fn planarity() {
        let b = |v: [f64; 3]| BlochMeasurement::new(v).unwrap();
        assert!(!planarity_check(&b([1.0, 0.0, 0.0]), &b([0.0, 1.0, 0.0]), &b([0.0, 0.0, 1.0])));
        assert!(planarity_check(&b([0.5, 0.1, 0.0]), &b([0.0, 0.3, 0.2]), &b([0.25, 0.35, 0.2])));
        assert!(!planarity_check(&b([1.0, 0.0, 0.0]), &b([0.0, 1.0, 0.0]), &b([0.5, 0.5, 1e-3])));
    }

    #[test]
    fn pauli_dcm_layers() {
        let opts = DcmScanOptions {
            search: WeightSearch::Joint,
            ..Default::default()
        };
        let hi = make_noisy_pauli([0.9; 3]).unwrap();
        assert_eq!(classify_dcm(&hi, 2, &opts).unwrap().verdict, LayerVerdict::Incompatible);
        let lo = make_noisy_pauli([0.75; 3]).unwrap();
        let e = classify_dcm(&lo, 2, &opts).unwrap();
        assert_eq!(e.verdict, LayerVerdict::CompatiblePlanFound);
        let grid = classify_dcm(&lo, 2, &DcmScanOptions::default()).unwrap();
        assert_eq!(grid.verdict, LayerVerdict::CompatiblePlanFound);
        assert!(full_incompatible_dcm(&make_noisy_pauli([1.0; 3]).unwrap(), &opts)
            .unwrap()
            .fully_incompatible);
    }

    #[test]
    fn repeated_measurement_is_not_fully_incompatible() {
        let p = make_noisy_pauli([1.0; 3]).unwrap().povm(0).clone();
        let a = pad_assemblage(vec![p.clone(), p.clone(), p]).unwrap();
        let opts = DcmScanOptions {
            search: WeightSearch::Joint,
            ..Default::default()
        };
        assert!(!full_incompatible_dcm(&a, &opts).unwrap().fully_incompatible);
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 100).len(), 101);
        assert_eq!(simplex_grid(3, 20).len(), 231);
        for w in simplex_grid(3, 20) {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(permutations(3).len(), 6);
    }
}
