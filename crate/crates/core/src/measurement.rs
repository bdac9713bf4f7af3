//! POVMs, assemblages and the classical operations on their inputs and outputs.
//!
//! A [`Povm`] is an ordered list of effects on `C^d`. An [`Assemblage`] holds
//! several POVMs padded to a common outcome count with exact zero effects
//! (outcomes that never occur).
//!
//! Output operations are restricted to 0/1 coarse-grainings, represented as
//! set partitions of the outcome labels ([`OutcomePartition`]). Input
//! operations are disjoint convex mixtures ([`DisjointMixPlan`]): each original
//! measurement feeds exactly one new measurement, optionally after relabelling
//! its outcomes.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{braket, c, CMatrix, Hermitian, C64};
use crate::tol::{COMPLETENESS_TOL, PROJECTOR_TOL, PSD_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Povm {
    dim: usize,
    effects: Vec<Hermitian>,
    label: String,
}

/// One violated POVM invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NoEffects,
    EffectDimension { effect: usize, dim: usize },
    Positivity { effect: usize, min_eigenvalue: f64 },
    Completeness { residual: f64 },
    EigenFailure { effect: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoEffects => write!(f, "no effects"),
            Violation::EffectDimension { effect, dim } => {
                write!(f, "effect {effect} has dimension {dim}")
            }
            Violation::Positivity {
                effect,
                min_eigenvalue,
            } => write!(
                f,
                "positivity: effect {effect} has eigenvalue {min_eigenvalue:.3e}"
            ),
            Violation::Completeness { residual } => {
                write!(f, "completeness: effects sum to identity only within {residual:.3e}")
            }
            Violation::EigenFailure { effect } => {
                write!(f, "eigen-decomposition of effect {effect} failed")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Povm {
    /// Validated constructor.
    pub fn new(label: impl Into<String>, effects: Vec<Hermitian>) -> Result<Self> {
        let p = Self::new_unchecked(label, effects);
        let report = validate_povm(&p);
        if let Some(v) = report.violations.first() {
            return Err(Error::InvalidPovm {
                label: p.label.clone(),
                reason: v.to_string(),
            });
        }
        Ok(p)
    }

    /// Builds a POVM without checking positivity or completeness; pair with
    /// [`validate_povm`].
    pub fn new_unchecked(label: impl Into<String>, effects: Vec<Hermitian>) -> Self {
        let dim = effects.first().map_or(0, Hermitian::dim);
        Self {
            dim,
            effects,
            label: label.into(),
        }
    }

    /// Rank-one projective measurement onto the (normalized) vectors.
    pub fn from_vectors(label: impl Into<String>, vectors: &[Vec<C64>]) -> Result<Self> {
        Self::new(label, vectors.iter().map(|v| Hermitian::projector(v)).collect())
    }

    /// Trivial single-outcome measurement `{1}`.
    pub fn trivial(dim: usize) -> Self {
        Self::new_unchecked("trivial", vec![Hermitian::identity(dim)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn effects(&self) -> &[Hermitian] {
        &self.effects
    }

    pub fn effect(&self, z: usize) -> &Hermitian {
        &self.effects[z]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn sum(&self) -> Hermitian {
        let mut s = Hermitian::zeros(self.dim);
        for e in &self.effects {
            s.axpy(1.0, e);
        }
        s
    }

    /// Every effect idempotent within `PROJECTOR_TOL`.
    pub fn is_projective(&self) -> bool {
        self.effects.iter().all(|e| {
            let sq = e.matrix() * e.matrix();
            sq.max_abs_diff(e.matrix()) <= PROJECTOR_TOL
        })
    }

    /// Projective, with every effect of trace one.
    pub fn is_rank_one_projective(&self) -> bool {
        self.is_projective() && self.effects.iter().all(|e| (e.trace() - 1.0).abs() <= 1e-9)
    }

    /// Unit vectors spanning the ranges of a rank-one projective measurement.
    pub fn rank_one_vectors(&self) -> Result<Vec<Vec<C64>>> {
        if !self.is_rank_one_projective() {
            return Err(Error::NotRankOneProjective(self.label.clone()));
        }
        self.effects
            .iter()
            .map(|e| {
                let eig = crate::linalg::eigh(e)?;
                Ok(eig.vector(self.dim - 1))
            })
            .collect()
    }

    /// Effect-wise unitary conjugation.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self::new_unchecked(
            self.label.clone(),
            self.effects.iter().map(|e| e.conjugate_by(u)).collect(),
        )
    }

    /// Outcome relabelling: new effect `z` is old effect `perm[z]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_outcomes())?;
        Ok(Self::new_unchecked(
            self.label.clone(),
            perm.iter().map(|&z| self.effects[z].clone()).collect(),
        ))
    }

    fn padded(&self, outcomes: usize) -> Self {
        let mut effects = self.effects.clone();
        effects.resize(outcomes, Hermitian::zeros(self.dim));
        Self::new_unchecked(self.label.clone(), effects)
    }
}

pub fn validate_povm(p: &Povm) -> ValidationReport {
    validate_povm_with(p, PSD_TOL, COMPLETENESS_TOL)
}

pub fn validate_povm_with(p: &Povm, psd_tol: f64, completeness_tol: f64) -> ValidationReport {
    let mut violations = Vec::new();
    if p.effects.is_empty() {
        violations.push(Violation::NoEffects);
        return ValidationReport { violations };
    }
    let mut dims_ok = true;
    for (k, e) in p.effects.iter().enumerate() {
        if e.dim() != p.dim {
            violations.push(Violation::EffectDimension {
                effect: k,
                dim: e.dim(),
            });
            dims_ok = false;
        }
    }
    if !dims_ok {
        return ValidationReport { violations };
    }
    for (k, e) in p.effects.iter().enumerate() {
        if e.is_zero() {
            continue;
        }
        match e.eigvalsh() {
            Ok(vals) if vals[0] < -psd_tol => violations.push(Violation::Positivity {
                effect: k,
                min_eigenvalue: vals[0],
            }),
            Ok(_) => {}
            Err(_) => violations.push(Violation::EigenFailure { effect: k }),
        }
    }
    let residual = p.sum().matrix().max_abs_diff(&CMatrix::identity(p.dim));
    if !(residual <= completeness_tol) {
        violations.push(Violation::Completeness { residual });
    }
    ValidationReport { violations }
}

/// A list of POVMs on one Hilbert space with a common outcome count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assemblage {
    dim: usize,
    outcomes: usize,
    povms: Vec<Povm>,
}

impl Assemblage {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Common (padded) outcome count.
    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn len(&self) -> usize {
        self.povms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.povms.is_empty()
    }

    pub fn povms(&self) -> &[Povm] {
        &self.povms
    }

    pub fn povm(&self, x: usize) -> &Povm {
        &self.povms[x]
    }

    pub fn effect(&self, x: usize, z: usize) -> &Hermitian {
        self.povms[x].effect(z)
    }

    pub fn into_povms(self) -> Vec<Povm> {
        self.povms
    }

    /// Sub-assemblage with the listed measurements, in that order.
    pub fn select(&self, xs: &[usize]) -> Result<Self> {
        pad_assemblage(xs.iter().map(|&x| self.povms[x].clone()).collect())
    }

    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self {
            dim: self.dim,
            outcomes: self.outcomes,
            povms: self.povms.iter().map(|p| p.conjugate_by(u)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (x, p) in self.povms.iter().enumerate() {
            if let Some(v) = validate_povm(p).violations.first() {
                return Err(Error::InvalidPovm {
                    label: format!("{} (measurement {x})", p.label),
                    reason: v.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Pads every POVM with zero effects up to the largest outcome count.
pub fn pad_assemblage(povms: Vec<Povm>) -> Result<Assemblage> {
    let first = povms
        .first()
        .ok_or_else(|| Error::BadRange("empty measurement list".into()))?;
    let dim = first.dim;
    for p in &povms {
        if p.dim != dim {
            return Err(Error::DimMismatch(dim, p.dim));
        }
    }
    let outcomes = povms.iter().map(Povm::num_outcomes).max().unwrap_or(0);
    let povms = povms
        .into_iter()
        .map(|p| {
            if p.num_outcomes() == outcomes {
                p
            } else {
                p.padded(outcomes)
            }
        })
        .collect();
    Ok(Assemblage {
        dim,
        outcomes,
        povms,
    })
}

/// A set partition of the outcome labels `0..outcomes`. Block order defines
/// the outcome order of the coarse-grained measurement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomePartition {
    outcomes: usize,
    blocks: Vec<Vec<usize>>,
}

impl OutcomePartition {
    pub fn new(outcomes: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; outcomes];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::PartitionMismatch("empty block".into()));
            }
            for &z in b {
                if z >= outcomes {
                    return Err(Error::PartitionMismatch(format!(
                        "outcome {z} out of range for {outcomes} outcomes"
                    )));
                }
                if seen[z] {
                    return Err(Error::PartitionMismatch(format!("outcome {z} repeated")));
                }
                seen[z] = true;
            }
        }
        if let Some(z) = seen.iter().position(|s| !s) {
            return Err(Error::PartitionMismatch(format!("outcome {z} not covered")));
        }
        Ok(Self { outcomes, blocks })
    }

    /// All singletons; coarse-graining by it is the identity map.
    pub fn identity(outcomes: usize) -> Self {
        Self {
            outcomes,
            blocks: (0..outcomes).map(|z| vec![z]).collect(),
        }
    }

    /// Single block.
    pub fn trivial(outcomes: usize) -> Self {
        Self {
            outcomes,
            blocks: vec![(0..outcomes).collect()],
        }
    }

    /// Two blocks: `{z}` and everything else, in that order.
    pub fn single_out(outcomes: usize, z: usize) -> Result<Self> {
        let rest: Vec<usize> = (0..outcomes).filter(|&w| w != z).collect();
        Self::new(outcomes, vec![vec![z], rest])
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_nontrivial(&self) -> bool {
        self.blocks.len() >= 2
    }

    /// Block index of every outcome.
    pub fn block_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.outcomes];
        for (k, b) in self.blocks.iter().enumerate() {
            for &z in b {
                out[z] = k;
            }
        }
        out
    }

    /// True if every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &OutcomePartition) -> bool {
        if self.outcomes != coarser.outcomes {
            return false;
        }
        let of = coarser.block_of();
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&z| of[z] == of[b[0]]))
    }

    /// Partition of `self`'s blocks induced by a coarser partition: the map
    /// that takes `coarse_grain(P, self)` to `coarse_grain(P, coarser)`.
    pub fn quotient(&self, coarser: &OutcomePartition) -> Result<OutcomePartition> {
        if !self.refines(coarser) {
            return Err(Error::PartitionMismatch("not a refinement".into()));
        }
        let of = coarser.block_of();
        let blocks = coarser
            .blocks
            .iter()
            .enumerate()
            .map(|(k, _)| {
                self.blocks
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| of[b[0]] == k)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        OutcomePartition::new(self.blocks.len(), blocks)
    }
}

impl fmt::Display for OutcomePartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                let s: Vec<String> = b.iter().map(|z| z.to_string()).collect();
                format!("{{{}}}", s.join(","))
            })
            .collect();
        write!(f, "{}", parts.join(""))
    }
}

pub fn coarse_grain(p: &Povm, part: &OutcomePartition) -> Result<Povm> {
    if part.outcomes != p.num_outcomes() {
        return Err(Error::PartitionMismatch(format!(
            "partition of {} outcomes applied to a {}-outcome measurement",
            part.outcomes,
            p.num_outcomes()
        )));
    }
    let effects = part
        .blocks
        .iter()
        .map(|b| {
            let mut e = Hermitian::zeros(p.dim);
            for &z in b {
                e.axpy(1.0, &p.effects[z]);
            }
            e
        })
        .collect();
    Ok(Povm::new_unchecked(p.label.clone(), effects))
}

/// Restricted growth strings of length `n` in lexicographic order; each one
/// is a set partition (`rgs[i]` = block of element `i`).
pub fn restricted_growth_strings(n: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur.push(b);
            rec(n, max.max(b), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut cur = vec![0];
    rec(n, 0, &mut cur, &mut out);
    out
}

fn rgs_to_blocks(rgs: &[usize]) -> Vec<Vec<usize>> {
    let nb = rgs.iter().max().map_or(0, |m| m + 1);
    let mut blocks = vec![Vec::new(); nb];
    for (i, &b) in rgs.iter().enumerate() {
        blocks[b].push(i);
    }
    blocks
}

/// All set partitions of `0..outcomes` with at least `min_blocks` blocks,
/// in lexicographic order of their restricted growth strings.
pub fn enumerate_partitions(outcomes: usize, min_blocks: usize) -> Result<Vec<OutcomePartition>> {
    if min_blocks < 2 || min_blocks > outcomes {
        return Err(Error::BadRange(format!(
            "need 2 <= min_blocks <= {outcomes}, got {min_blocks}"
        )));
    }
    Ok(restricted_growth_strings(outcomes)
        .iter()
        .map(|r| rgs_to_blocks(r))
        .filter(|b| b.len() >= min_blocks)
        .map(|blocks| OutcomePartition { outcomes, blocks })
        .collect())
}

/// All partitions of `0..n` into exactly `k` nonempty groups.
pub fn partitions_into(n: usize, k: usize) -> Vec<Vec<Vec<usize>>> {
    restricted_growth_strings(n)
        .iter()
        .map(|r| rgs_to_blocks(r))
        .filter(|b| b.len() == k)
        .collect()
}

/// One outcome partition per measurement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoarseGrainPlan {
    pub partitions: Vec<OutcomePartition>,
}

impl CoarseGrainPlan {
    pub fn identity(a: &Assemblage) -> Self {
        Self {
            partitions: vec![OutcomePartition::identity(a.outcomes()); a.len()],
        }
    }

    pub fn min_blocks(&self) -> usize {
        self.partitions.iter().map(OutcomePartition::num_blocks).min().unwrap_or(0)
    }

    pub fn apply(&self, a: &Assemblage) -> Result<Assemblage> {
        if self.partitions.len() != a.len() {
            return Err(Error::PlanMismatch(format!(
                "{} partitions for {} measurements",
                self.partitions.len(),
                a.len()
            )));
        }
        let povms = a
            .povms
            .iter()
            .zip(&self.partitions)
            .map(|(p, part)| coarse_grain(p, part))
            .collect::<Result<Vec<_>>>()?;
        pad_assemblage(povms)
    }
}

impl fmt::Display for CoarseGrainPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.partitions.iter().map(|p| p.to_string()).collect();
        write!(f, "{}", s.join(" | "))
    }
}

/// Disjoint convex mixing of measurements.
///
/// `groups` partitions the measurement indices; group `g` becomes output
/// measurement `g` with effects `sum_{x in g} w_x M_{perm_x(z)|x}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointMixPlan {
    pub groups: Vec<Vec<usize>>,
    pub weights: Vec<Vec<f64>>,
    /// Optional outcome relabelling per original measurement.
    pub perms: Option<Vec<Vec<usize>>>,
}

impl DisjointMixPlan {
    /// Every measurement in its own group with weight one.
    pub fn singletons(n: usize) -> Self {
        Self {
            groups: (0..n).map(|x| vec![x]).collect(),
            weights: vec![vec![1.0]; n],
            perms: None,
        }
    }

    /// `q M_a + (1 - q) M_b` against the remaining measurements, in the order
    /// `[mixture, rest...]`.
    pub fn pair_mixture(n: usize, a: usize, b: usize, q: f64) -> Self {
        let mut groups = vec![vec![a, b]];
        let mut weights = vec![vec![q, 1.0 - q]];
        for x in (0..n).filter(|&x| x != a && x != b) {
            groups.push(vec![x]);
            weights.push(vec![1.0]);
        }
        Self {
            groups,
            weights,
            perms: None,
        }
    }

    pub fn with_perms(mut self, perms: Vec<Vec<usize>>) -> Self {
        self.perms = Some(perms);
        self
    }

    pub fn validate(&self, n: usize, outcomes: usize) -> Result<()> {
        let mut seen = vec![false; n];
        if self.groups.len() != self.weights.len() {
            return Err(Error::PlanMismatch("one weight vector per group required".into()));
        }
        for (g, w) in self.groups.iter().zip(&self.weights) {
            if g.is_empty() {
                return Err(Error::PlanMismatch("empty group".into()));
            }
            if g.len() != w.len() {
                return Err(Error::PlanMismatch(format!(
                    "group of {} members with {} weights",
                    g.len(),
                    w.len()
                )));
            }
            for &x in g {
                if x >= n || seen[x] {
                    return Err(Error::PlanMismatch(format!(
                        "measurement {x} missing, repeated or out of range"
                    )));
                }
                seen[x] = true;
            }
            if w.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::WeightError(format!("negative weight in {w:?}")));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::WeightError(format!("{w:?} sums to {s}")));
            }
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(Error::PlanMismatch(format!("measurement {x} not in any group")));
        }
        if let Some(perms) = &self.perms {
            if perms.len() != n {
                return Err(Error::PlanMismatch(format!(
                    "{} permutations for {n} measurements",
                    perms.len()
                )));
            }
            for p in perms {
                check_permutation(p, outcomes)?;
            }
        }
        Ok(())
    }

    pub fn apply(&self, a: &Assemblage) -> Result<Assemblage> {
        mix_inputs(a, self)
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::PlanMismatch(format!(
            "permutation of length {} for {n} outcomes",
            perm.len()
        )));
    }
    for &z in perm {
        if z >= n || seen[z] {
            return Err(Error::PlanMismatch(format!("{perm:?} is not a permutation")));
        }
        seen[z] = true;
    }
    Ok(())
}

pub fn mix_inputs(a: &Assemblage, plan: &DisjointMixPlan) -> Result<Assemblage> {
    plan.validate(a.len(), a.outcomes())?;
    let d = a.dim();
    let povms = plan
        .groups
        .iter()
        .zip(&plan.weights)
        .enumerate()
        .map(|(g, (members, w))| {
            let effects = (0..a.outcomes())
                .map(|z| {
                    let mut e = Hermitian::zeros(d);
                    for (&x, &wx) in members.iter().zip(w) {
                        let zz = plan.perms.as_ref().map_or(z, |p| p[x][z]);
                        e.axpy(wx, a.effect(x, zz));
                    }
                    e
                })
                .collect();
            let label = members
                .iter()
                .map(|&x| a.povm(x).label())
                .collect::<Vec<_>>()
                .join("+");
            Povm::new_unchecked(if members.len() == 1 { label } else { format!("mix[{label}]#{g}") }, effects)
        })
        .collect();
    pad_assemblage(povms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompositionOrder {
    InputsFirst,
    OutputsFirst,
}

/// Input mixing and output coarse-graining applied in the given order.
///
/// With `InputsFirst` the coarse-graining plan has one partition per mixed
/// measurement; with `OutputsFirst` it has one per original measurement.
pub fn compose_io(
    a: &Assemblage,
    in_plan: &DisjointMixPlan,
    cg_plan: &CoarseGrainPlan,
    order: CompositionOrder,
) -> Result<Assemblage> {
    match order {
        CompositionOrder::InputsFirst => cg_plan.apply(&mix_inputs(a, in_plan)?),
        CompositionOrder::OutputsFirst => mix_inputs(&cg_plan.apply(a)?, in_plan),
    }
}

/// Unbiased binary qubit measurement `{(1 ± n·σ)/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochMeasurement {
    pub n: [f64; 3],
}

impl BlochMeasurement {
    pub fn new(n: [f64; 3]) -> Result<Self> {
        let b = Self { n };
        if !(b.norm() <= 1.0 + 1e-12) {
            return Err(Error::BadRange(format!("Bloch vector norm {} > 1", b.norm())));
        }
        Ok(b)
    }

    pub fn norm(&self) -> f64 {
        self.n.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_povm(&self, label: impl Into<String>) -> Povm {
        let [sx, sy, sz] = crate::linalg::pauli();
        let mut ns = sx.scale(self.n[0]);
        ns.axpy(self.n[1], &sy);
        ns.axpy(self.n[2], &sz);
        let id = Hermitian::identity(2);
        Povm::new_unchecked(
            label,
            vec![id.add(&ns).scale(0.5), id.sub(&ns).scale(0.5)],
        )
    }

    /// Reads the Bloch vector of an unbiased binary qubit POVM.
    pub fn from_povm(p: &Povm) -> Result<Self> {
        if p.dim() != 2 || p.num_outcomes() != 2 {
            return Err(Error::WrongShape(format!(
                "'{}' is not a binary qubit measurement",
                p.label()
            )));
        }
        let m0 = p.effect(0);
        if (m0.trace() - 1.0).abs() > 1e-9 {
            return Err(Error::WrongShape(format!("'{}' is biased", p.label())));
        }
        let [sx, sy, sz] = crate::linalg::pauli();
        Self::new([m0.inner(&sx), m0.inner(&sy), m0.inner(&sz)])
    }

    pub fn sub(&self, o: &Self) -> [f64; 3] {
        [self.n[0] - o.n[0], self.n[1] - o.n[1], self.n[2] - o.n[2]]
    }

    pub fn add(&self, o: &Self) -> [f64; 3] {
        [self.n[0] + o.n[0], self.n[1] + o.n[1], self.n[2] + o.n[2]]
    }
}

/// `exp(2 pi i x / 3)` for real `x`.
fn omega_pow(x: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * x / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MubBasis {
    Computational,
    Fourier,
    Third,
}

impl MubBasis {
    pub const ALL: [MubBasis; 3] = [MubBasis::Computational, MubBasis::Fourier, MubBasis::Third];
}

/// Basis vectors for the noisy-MUB families in dimension 3 or 4.
pub fn mub_vectors(d: usize, basis: MubBasis) -> Result<Vec<Vec<C64>>> {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match (d, basis) {
        (3 | 4, MubBasis::Computational) => Ok((0..d)
            .map(|k| (0..d).map(|j| if j == k { one } else { z }).collect())
            .collect()),
        (3, MubBasis::Fourier) => {
            let s = 1.0 / 3f64.sqrt();
            Ok((0..3)
                .map(|k| (0..3).map(|j| omega_pow((j * k) as f64) * s).collect())
                .collect())
        }
        (3, MubBasis::Third) => {
            let s = 1.0 / 3f64.sqrt();
            let w = omega_pow(1.0);
            Ok((0..3)
                .map(|k| (0..3).map(|j| if j == k { w * s } else { one * s }).collect())
                .collect())
        }
        (4, MubBasis::Fourier) => {
            let signs = [
                [1.0, 1.0, 1.0, 1.0],
                [1.0, 1.0, -1.0, -1.0],
                [1.0, -1.0, -1.0, 1.0],
                [1.0, -1.0, 1.0, -1.0],
            ];
            Ok(signs
                .iter()
                .map(|r| r.iter().map(|&s| c(0.5 * s, 0.0)).collect())
                .collect())
        }
        (4, MubBasis::Third) => {
            let rows = [
                [one, -one, -i, -i],
                [one, -one, i, i],
                [one, one, i, -i],
                [one, one, -i, i],
            ];
            Ok(rows
                .iter()
                .map(|r| r.iter().map(|&v| v * 0.5).collect())
                .collect())
        }
        _ => Err(Error::BadRange(format!("noisy MUB families exist for d = 3, 4; got {d}"))),
    }
}

fn check_visibility(nu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::BadVisibility(nu));
    }
    Ok(())
}

/// White-noise mixture `nu P + (1 - nu) Tr(P)/d * 1` applied effect-wise.
pub fn add_white_noise(p: &Povm, nu: f64) -> Result<Povm> {
    check_visibility(nu)?;
    let d = p.dim() as f64;
    let effects = p
        .effects()
        .iter()
        .map(|e| {
            let mut out = e.scale(nu);
            out.axpy((1.0 - nu) * e.trace() / d, &Hermitian::identity(p.dim()));
            out
        })
        .collect();
    Ok(Povm::new_unchecked(p.label(), effects))
}

pub fn make_noisy_mub(d: usize, bases: &[MubBasis], nu: f64) -> Result<Assemblage> {
    check_visibility(nu)?;
    let povms = bases
        .iter()
        .map(|&b| {
            let label = format!("{b:?}");
            let sharp = Povm::from_vectors(label, &mub_vectors(d, b)?)?;
            add_white_noise(&sharp, nu)
        })
        .collect::<Result<Vec<_>>>()?;
    pad_assemblage(povms)
}

/// `{(1 ± nu_i sigma_i)/2}` for i = x, y, z.
pub fn make_noisy_pauli(nu: [f64; 3]) -> Result<Assemblage> {
    let labels = ["X", "Y", "Z"];
    let povms = (0..3)
        .map(|i| {
            check_visibility(nu[i])?;
            let mut n = [0.0; 3];
            n[i] = nu[i];
            Ok(BlochMeasurement::new(n)?.to_povm(labels[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    pad_assemblage(povms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// Qutrit measurements attaining the maximal CGLMP violation
/// (phases `alpha = (0, 1/2)` for Alice and `beta = (1/4, -1/4)` for Bob).
/// `setting` is 1 or 2.
pub fn make_cglmp(side: Party, setting: usize) -> Result<Povm> {
    if !(1..=2).contains(&setting) {
        return Err(Error::BadRange(format!("setting must be 1 or 2, got {setting}")));
    }
    let s = 1.0 / 3f64.sqrt();
    let (sign, shift, name) = match side {
        Party::Alice => (1.0, [0.0, 0.5][setting - 1], "A"),
        Party::Bob => (-1.0, [0.25, -0.25][setting - 1], "B"),
    };
    let vectors: Vec<Vec<C64>> = (0..3)
        .map(|outcome| {
            (0..3)
                .map(|j| omega_pow(j as f64 * (sign * outcome as f64 + shift)) * s)
                .collect()
        })
        .collect();
    Povm::from_vectors(format!("{name}{setting}"), &vectors)
}

/// State and measurements of the orbital-angular-momentum CGLMP experiment.
///
/// Basis order is `(+1, +2, -1)` for Alice and `(-1, -2, +1)` for Bob, so the
/// state is `sum_k c_k |k>|k>` with the printed coefficients renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentScenario {
    pub state: Vec<C64>,
    pub alice: [Povm; 2],
    pub bob: [Povm; 2],
}

/// Printed state coefficients, before renormalization.
pub const EXPERIMENT_COEFFS: [f64; 3] = [0.596, 0.529, 0.604];

pub fn make_experiment_scenario() -> Result<ExperimentScenario> {
    let norm = EXPERIMENT_COEFFS.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut state = vec![c(0.0, 0.0); 9];
    for (k, &v) in EXPERIMENT_COEFFS.iter().enumerate() {
        state[4 * k] = c(v / norm, 0.0);
    }
    let s = 1.0 / 3f64.sqrt();
    let sigma = [0.25, 0.75];
    let gamma = [0.5, 0.0];
    let alice = |i: usize| {
        let v: Vec<Vec<C64>> = (0..3)
            .map(|o| {
                let e = o as f64 + sigma[i];
                vec![c(s, 0.0), omega_pow(e) * s, omega_pow(2.0 * e) * s]
            })
            .collect();
        Povm::from_vectors(format!("A{}", i + 1), &v)
    };
    let bob = |j: usize| {
        let v: Vec<Vec<C64>> = (0..3)
            .map(|o| {
                let e = -(o as f64) - gamma[j];
                vec![c(s, 0.0), omega_pow(e) * s, omega_pow(2.0 * e) * s]
            })
            .collect();
        Povm::from_vectors(format!("B{}", j + 1), &v)
    };
    Ok(ExperimentScenario {
        state,
        alice: [alice(0)?, alice(1)?],
        bob: [bob(0)?, bob(1)?],
    })
}

/// Vectors of the three qutrit bases X, Y, Z of the trine mixing example.
pub fn trine_vectors() -> [Vec<Vec<C64>>; 3] {
    let h = 0.5;
    let r = 1.0 / 2f64.sqrt();
    let z = c(0.0, 0.0);
    let x = vec![
        vec![c(h, 0.0), c(r, 0.0), c(h, 0.0)],
        vec![c(-r, 0.0), z, c(r, 0.0)],
        vec![c(h, 0.0), c(-r, 0.0), c(h, 0.0)],
    ];
    let y = vec![
        vec![c(0.0, -h), c(r, 0.0), c(0.0, h)],
        vec![c(0.0, r), z, c(0.0, r)],
        vec![c(0.0, -h), c(-r, 0.0), c(0.0, h)],
    ];
    let zb = (0..3)
        .map(|k| (0..3).map(|j| if j == k { c(1.0, 0.0) } else { z }).collect())
        .collect();
    [x, y, zb]
}

pub fn make_trine_xyz() -> Result<Assemblage> {
    let [x, y, z] = trine_vectors();
    pad_assemblage(vec![
        Povm::from_vectors("X", &x)?,
        Povm::from_vectors("Y", &y)?,
        Povm::from_vectors("Z", &z)?,
    ])
}

/// Largest `|<a_i|b_j>|` deviation from `target`, over all pairs.
pub fn max_overlap_deviation(a: &[Vec<C64>], b: &[Vec<C64>], target: f64) -> f64 {
    a.iter()
        .flat_map(|u| b.iter().map(move |v| (braket(u, v).norm() - target).abs()))
        .fold(0.0, f64::max)
}
