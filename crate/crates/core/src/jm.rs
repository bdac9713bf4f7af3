//! Joint measurability through the parent-POVM SDP.
//!
//! For an assemblage `{M_{z|x}}` the solver maximizes `mu` subject to
//! `sum_{lambda: lambda(x) = z} G_lambda = M_{z|x}` and `G_lambda ⪰ mu 1`,
//! where `lambda` ranges over deterministic strategies assigning an outcome
//! to every measurement. The assemblage is jointly measurable iff `mu* >= 0`.
//!
//! Complex Hermitian blocks are embedded as real symmetric matrices of twice
//! the size. Outcomes whose effect is exactly zero (padding) are dropped
//! before the strategies are built, since a zero marginal would otherwise pin
//! `mu* <= 0`.
//!
//! Rank-deficient assemblages (projective measurements, for instance) sit at
//! `mu* = 0` exactly, inside the undecided band `|mu*| <= decide_eps`. There
//! the parent is clipped to the PSD cone and its marginals are checked
//! against the assemblage; a parent reproducing them within
//! [`MARGINAL_TOL`] certifies compatibility.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, Hermitian};
use crate::measurement::{mix_inputs, Assemblage, DisjointMixPlan};
use crate::sdp::{self, Constraint, SdpProblem, SdpSettings, SparseSym, Term};
use crate::tol::{Tolerances, MARGINAL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JmVerdict {
    Compatible,
    Incompatible,
    Borderline,
}

impl JmVerdict {
    pub fn is_compatible(self) -> bool {
        self == JmVerdict::Compatible
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JmVerdict::Compatible => "compatible",
            JmVerdict::Incompatible => "incompatible",
            JmVerdict::Borderline => "borderline",
        }
    }
}

/// Largest number of deterministic strategies the solver accepts.
pub const STRATEGY_CAP: usize = 100_000;

/// Deterministic post-processings `lambda: [n] -> [d̄]`; strategy `lambda`
/// answers `lambda[x]` to measurement `x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySet {
    pub n: usize,
    pub dbar: usize,
    pub strategies: Vec<Vec<usize>>,
}

impl StrategySet {
    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    /// `p(z|x, lambda)`.
    pub fn response(&self, lambda: usize, x: usize, z: usize) -> f64 {
        (self.strategies[lambda][x] == z) as u8 as f64
    }
}

fn check_cap(outcomes: &[usize]) -> Result<()> {
    let total = outcomes.iter().map(|&o| o as f64).product::<f64>();
    if total > STRATEGY_CAP as f64 {
        return Err(Error::TooLarge(format!(
            "{total} deterministic strategies exceed {STRATEGY_CAP}"
        )));
    }
    Ok(())
}

/// All `d̄^n` strategies in lexicographic order.
pub fn enumerate_strategies(n: usize, dbar: usize) -> Result<StrategySet> {
    let counts = vec![dbar; n];
    check_cap(&counts)?;
    Ok(StrategySet {
        n,
        dbar,
        strategies: enumerate_strategy_tuples(&counts),
    })
}

/// All deterministic strategies for the given outcome counts, in
/// lexicographic order (last measurement varies fastest).
pub fn enumerate_strategy_tuples(outcomes: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = outcomes.iter().product();
    let mut out = Vec::with_capacity(total);
    if outcomes.contains(&0) {
        return out;
    }
    let mut cur = vec![0; outcomes.len()];
    for _ in 0..total {
        out.push(cur.clone());
        for k in (0..cur.len()).rev() {
            cur[k] += 1;
            if cur[k] < outcomes[k] {
                break;
            }
            cur[k] = 0;
        }
    }
    out
}

/// `A + iB ↦ [[A, -B], [B, A]]`.
pub fn embed_real(h: &Hermitian) -> DMatrix<f64> {
    let d = h.dim();
    let m = h.matrix();
    DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let (bi, bj) = (i / d, j / d);
        let v = m[(i % d, j % d)];
        match (bi, bj) {
            (0, 0) | (1, 1) => v.re,
            (0, 1) => -v.im,
            _ => v.im,
        }
    })
}

/// Inverse of [`embed_real`] on its range; on a general symmetric matrix it
/// is the PSD-preserving projection `A = (X11 + X22)/2`, `B = (X21 - X12)/2`.
pub fn unembed_real(x: &DMatrix<f64>) -> Hermitian {
    let d = x.nrows() / 2;
    let m = CMatrix::from_fn(d, d, |i, j| {
        c(
            0.5 * (x[(i, j)] + x[(d + i, d + j)]),
            0.5 * (x[(d + i, j)] - x[(i, d + j)]),
        )
    });
    Hermitian::symmetrized(m)
}

/// Real coordinates of a `d x d` Hermitian matrix: `Re H_jj`, then
/// `Re H_jk` and `Im H_jk` for `j < k`.
fn coordinates(d: usize) -> Vec<(usize, usize, bool)> {
    let mut out: Vec<(usize, usize, bool)> = (0..d).map(|j| (j, j, false)).collect();
    for j in 0..d {
        for k in j + 1..d {
            out.push((j, k, false));
            out.push((j, k, true));
        }
    }
    out
}

/// Symmetric `2d x 2d` matrix whose inner product with `embed_real(H)` gives
/// the coordinate.
fn coordinate_basis(d: usize, (j, k, im): (usize, usize, bool)) -> SparseSym {
    let mut s = SparseSym::new(2 * d);
    if j == k {
        s.push(j, j, 0.5);
        s.push(d + j, d + j, 0.5);
    } else if !im {
        s.push(j, k, 0.25);
        s.push(d + j, d + k, 0.25);
    } else {
        s.push(d + j, k, 0.25);
        s.push(j, d + k, -0.25);
    }
    s
}

fn coordinate_value(h: &Hermitian, (j, k, im): (usize, usize, bool)) -> f64 {
    let v = h.matrix()[(j, k)];
    if im {
        v.im
    } else {
        v.re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JmOptions {
    pub tol: Tolerances,
    pub sdp: SdpSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JmResult {
    pub mu_star: f64,
    pub verdict: JmVerdict,
    /// Strategies in original outcome labels, aligned with `parent`.
    pub strategies: Vec<Vec<usize>>,
    /// Parent POVM `G_lambda` (after PSD clipping when certified at `mu* ≈ 0`).
    pub parent: Vec<Hermitian>,
    /// Largest marginal deviation of `parent` from the assemblage.
    pub marginal_residual: f64,
    /// True when the verdict rests on the clipped-parent certificate.
    pub certified: bool,
    pub iterations: usize,
}

pub fn solve_jm(a: &Assemblage) -> Result<JmResult> {
    solve_jm_with(a, &JmOptions::default())
}

pub fn solve_jm_with(a: &Assemblage, opts: &JmOptions) -> Result<JmResult> {
    let groups: Vec<Vec<usize>> = (0..a.len()).map(|x| vec![x]).collect();
    let r = solve_mixture_with(a, &groups, None, opts)?;
    Ok(r.jm)
}

/// Outcome of the joint weight search over one grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureResult {
    /// Optimal weights, aligned with the groups.
    pub weights: Vec<Vec<f64>>,
    pub jm: JmResult,
}

/// Maximizes `mu*` jointly over the mixing weights of a disjoint grouping.
///
/// Mixed measurement `g` has effects `sum_{x in g} w_x M_{perm_x(z)|x}`; the
/// weights are SDP variables, so the result is the maximum of `mu*` over all
/// weight choices. Singleton groups have weight one.
pub fn solve_mixture(
    a: &Assemblage,
    groups: &[Vec<usize>],
    perms: Option<&[Vec<usize>]>,
) -> Result<MixtureResult> {
    solve_mixture_with(a, groups, perms, &JmOptions::default())
}

pub fn solve_mixture_with(
    a: &Assemblage,
    groups: &[Vec<usize>],
    perms: Option<&[Vec<usize>]>,
    opts: &JmOptions,
) -> Result<MixtureResult> {
    let d = a.dim();
    let nout = a.outcomes();
    let dummy_weights: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| vec![1.0 / g.len() as f64; g.len()])
        .collect();
    DisjointMixPlan {
        groups: groups.to_vec(),
        weights: dummy_weights,
        perms: perms.map(<[Vec<usize>]>::to_vec),
    }
    .validate(a.len(), nout)?;
    let source = |x: usize, z: usize| perms.map_or(z, |p| p[x][z]);

    // Kept outcomes of every group: those fed by some nonzero effect.
    let kept: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            (0..nout)
                .filter(|&z| g.iter().any(|&x| !a.effect(x, source(x, z)).is_zero()))
                .collect()
        })
        .collect();
    let counts: Vec<usize> = kept.iter().map(Vec::len).collect();
    if counts.contains(&0) {
        return Err(Error::InvalidPovm {
            label: "assemblage".into(),
            reason: "measurement with no nonzero effect".into(),
        });
    }
    check_cap(&counts)?;
    let strategies = enumerate_strategy_tuples(&counts);
    let nl = strategies.len();

    // Weight variables for groups with several members.
    let mut weight_block: Vec<Vec<Option<usize>>> = Vec::new();
    let mut nw = 0;
    for g in groups {
        if g.len() == 1 {
            weight_block.push(vec![None]);
        } else {
            weight_block.push((0..g.len()).map(|k| Some(nl + nw + k)).collect());
            nw += g.len();
        }
    }
    let mut block_sizes = vec![2 * d; nl];
    block_sizes.extend(std::iter::repeat(1).take(nw));
    let mut p = SdpProblem::new(block_sizes, 1);
    p.free_objective[0] = -1.0;
    let coords = coordinates(d);
    let basis_ids: Vec<usize> = coords
        .iter()
        .map(|&e| p.add_basis(coordinate_basis(d, e)))
        .collect();
    let scalar = p.add_basis(SparseSym::identity(1));

    for (gi, g) in groups.iter().enumerate() {
        let count = counts[gi];
        let rows = if gi == 0 { count } else { count - 1 };
        let mu_coeff = (nl / count) as f64;
        for zi in 0..rows {
            let z = kept[gi][zi];
            let members: Vec<usize> = strategies
                .iter()
                .enumerate()
                .filter(|(_, s)| s[gi] == zi)
                .map(|(l, _)| l)
                .collect();
            for (ei, &e) in coords.iter().enumerate() {
                let mut terms: Vec<Term> = members
                    .iter()
                    .map(|&l| Term {
                        block: l,
                        basis_id: basis_ids[ei],
                        coeff: 1.0,
                    })
                    .collect();
                let mut rhs = 0.0;
                for (k, &x) in g.iter().enumerate() {
                    let v = coordinate_value(a.effect(x, source(x, z)), e);
                    match weight_block[gi][k] {
                        None => rhs += v,
                        Some(b) => {
                            if v != 0.0 {
                                terms.push(Term {
                                    block: b,
                                    basis_id: scalar,
                                    coeff: -v,
                                });
                            }
                        }
                    }
                }
                p.constraints.push(Constraint {
                    terms,
                    free: if e.0 == e.1 { vec![(0, mu_coeff)] } else { vec![] },
                    rhs,
                });
            }
        }
        if g.len() > 1 {
            p.constraints.push(Constraint {
                terms: weight_block[gi]
                    .iter()
                    .map(|b| Term {
                        block: b.expect("weight block"),
                        basis_id: scalar,
                        coeff: 1.0,
                    })
                    .collect(),
                free: vec![],
                rhs: 1.0,
            });
        }
    }

    let sol = sdp::solve_with(&p, &opts.sdp)?;
    let mu = sol.u[0];
    let weights: Vec<Vec<f64>> = weight_block
        .iter()
        .map(|wb| {
            let raw: Vec<f64> = wb
                .iter()
                .map(|b| b.map_or(1.0, |b| sol.x[b][(0, 0)].max(0.0)))
                .collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|w| w / s).collect()
        })
        .collect();
    let parent: Vec<Hermitian> = (0..nl)
        .map(|l| {
            let mut g = unembed_real(&sol.x[l]);
            g.axpy(mu, &Hermitian::identity(d));
            g
        })
        .collect();
    let labelled: Vec<Vec<usize>> = strategies
        .iter()
        .map(|s| s.iter().enumerate().map(|(g, &zi)| kept[g][zi]).collect())
        .collect();
    let mixed = mix_inputs(
        a,
        &DisjointMixPlan {
            groups: groups.to_vec(),
            weights: weights.clone(),
            perms: perms.map(<[Vec<usize>]>::to_vec),
        },
    )?;

    let eps = opts.tol.decide_eps;
    let (verdict, parent, certified) = if mu > eps {
        (JmVerdict::Compatible, parent, false)
    } else if mu < -eps {
        (JmVerdict::Incompatible, parent, false)
    } else {
        let clipped = parent.iter().map(clip_psd).collect::<Result<Vec<_>>>()?;
        let res = marginal_residual(&mixed, &labelled, &clipped);
        if res <= MARGINAL_TOL {
            (JmVerdict::Compatible, clipped, true)
        } else {
            (JmVerdict::Borderline, parent, false)
        }
    };
    let marginal_residual = marginal_residual(&mixed, &labelled, &parent);
    Ok(MixtureResult {
        weights,
        jm: JmResult {
            mu_star: mu,
            verdict,
            strategies: labelled,
            parent,
            marginal_residual,
            certified,
            iterations: sol.iterations,
        },
    })
}

/// Nearest PSD matrix in Frobenius norm.
pub fn clip_psd(h: &Hermitian) -> Result<Hermitian> {
    let e = crate::linalg::eigh(h)?;
    let d = h.dim();
    let mut out = Hermitian::zeros(d);
    for (k, &v) in e.values.iter().enumerate() {
        if v > 0.0 {
            out.axpy(v, &Hermitian::projector(&e.vector(k)));
        }
    }
    Ok(out)
}

/// `max_{x,z} |sum_{lambda(x)=z} G_lambda - M_{z|x}|`.
pub fn marginal_residual(a: &Assemblage, strategies: &[Vec<usize>], parent: &[Hermitian]) -> f64 {
    let d = a.dim();
    let mut worst: f64 = 0.0;
    for x in 0..a.len() {
        for z in 0..a.outcomes() {
            let mut s = Hermitian::zeros(d);
            for (st, g) in strategies.iter().zip(parent) {
                if st[x] == z {
                    s.axpy(1.0, g);
                }
            }
            worst = worst.max(s.matrix().max_abs_diff(a.effect(x, z).matrix()));
        }
    }
    worst
}

/// Smallest eigenvalue over the parent effects.
pub fn parent_min_eigenvalue(parent: &[Hermitian]) -> Result<f64> {
    let mut m = f64::INFINITY;
    for g in parent {
        m = m.min(g.eigvalsh()?[0]);
    }
    Ok(m)
}

/// Solves many independent instances in parallel, preserving order.
pub fn solve_many(items: &[Assemblage], opts: &JmOptions) -> Vec<Result<JmResult>> {
    items.par_iter().map(|a| solve_jm_with(a, opts)).collect()
}

/// Minimum eigenvalue of a real symmetric matrix.
pub fn min_eig_real(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{make_noisy_mub, make_noisy_pauli, pad_assemblage, MubBasis, Povm};

    #[test]
    fn strategy_enumeration() {
        let s = enumerate_strategy_tuples(&[2, 3]);
        assert_eq!(s.len(), 6);
        assert_eq!(s[0], vec![0, 0]);
        assert_eq!(s[1], vec![0, 1]);
        assert_eq!(s[5], vec![1, 2]);
        assert_eq!(enumerate_strategy_tuples(&[3, 3, 3]).len(), 27);
        assert_eq!(enumerate_strategies(2, 3).unwrap().len(), 9);
        assert_eq!(enumerate_strategies(3, 2).unwrap().len(), 8);
        let s = enumerate_strategies(2, 4).unwrap();
        assert_eq!(s.len(), 16);
        assert_eq!(s.response(5, 0, 1), 1.0);
        assert_eq!(s.response(5, 1, 1), 1.0);
        assert_eq!(s.response(5, 1, 0), 0.0);
        assert!(matches!(enumerate_strategies(17, 2), Err(Error::TooLarge(_))));
        assert!(enumerate_strategies(16, 2).is_ok());
    }

    #[test]
    fn embedding_round_trip() {
        let m = CMatrix::from_fn(3, 3, |i, j| c((i + j) as f64, i as f64 - j as f64));
        let h = Hermitian::symmetrized(m);
        let x = embed_real(&h);
        assert!((&x - x.transpose()).norm() < 1e-15);
        let back = unembed_real(&x);
        assert!(back.matrix().max_abs_diff(h.matrix()) < 1e-15);
        // Spectrum doubles.
        let mut ev: Vec<f64> = SymmetricEigen::new(x).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let hv = h.eigvalsh().unwrap();
        for k in 0..3 {
            assert!((ev[2 * k] - hv[k]).abs() < 1e-10);
            assert!((ev[2 * k + 1] - hv[k]).abs() < 1e-10);
        }
        // Coordinates read back through the basis.
        for e in coordinates(3) {
            let v = coordinate_basis(3, e).inner(&embed_real(&h));
            assert!((v - coordinate_value(&h, e)).abs() < 1e-14);
        }
    }

    #[test]
    fn single_povm_is_compatible() {
        let a = make_noisy_mub(3, &[MubBasis::Fourier], 1.0).unwrap();
        let r = solve_jm(&a).unwrap();
        assert_eq!(r.verdict, JmVerdict::Compatible);
        assert!(r.marginal_residual < 1e-7);
    }

    #[test]
    fn identical_bases_are_certified() {
        let p = make_noisy_mub(3, &[MubBasis::Computational], 1.0)
            .unwrap()
            .into_povms()
            .remove(0);
        let a = pad_assemblage(vec![p.clone(), p]).unwrap();
        let r = solve_jm(&a).unwrap();
        assert!(r.mu_star.abs() < 1e-6, "mu* = {}", r.mu_star);
        assert_eq!(r.verdict, JmVerdict::Compatible);
        assert!(r.certified);
    }

    #[test]
    fn sharp_pauli_pair_incompatible() {
        let a = make_noisy_pauli([1.0, 1.0, 1.0]).unwrap().select(&[0, 2]).unwrap();
        let r = solve_jm(&a).unwrap();
        assert_eq!(r.verdict, JmVerdict::Incompatible);
        // Busch: nu = 1/sqrt(2) is the threshold for the X, Z pair.
        let at = |nu: f64| {
            let b = make_noisy_pauli([nu, 1.0, nu]).unwrap().select(&[0, 2]).unwrap();
            solve_jm(&b).unwrap().mu_star
        };
        assert!(at(0.70) > 0.0);
        assert!(at(0.72) < 0.0);
    }

    #[test]
    fn zero_padding_is_ignored() {
        let p = make_noisy_pauli([0.5, 0.5, 0.5]).unwrap();
        let q = Povm::new_unchecked(
            "pad",
            vec![p.effect(0, 0).clone(), p.effect(0, 1).clone(), Hermitian::zeros(2)],
        );
        let a = pad_assemblage(vec![q, p.povm(1).clone()]).unwrap();
        let r = solve_jm(&a).unwrap();
        assert_eq!(r.verdict, JmVerdict::Compatible);
        assert!(r.mu_star > 1e-3);
    }

    #[test]
    fn joint_weights_match_best_fixed_weight() {
        // Mixing X and Z against Y: the best weight is reached on a grid too.
        let a = make_noisy_pauli([0.8, 0.8, 0.8]).unwrap();
        let groups = vec![vec![0, 2], vec![1]];
        let joint = solve_mixture(&a, &groups, None).unwrap();
        let mut best = f64::NEG_INFINITY;
        for k in 0..=20 {
            let q = k as f64 / 20.0;
            let m = mix_inputs(
                &a,
                &DisjointMixPlan {
                    groups: groups.clone(),
                    weights: vec![vec![q, 1.0 - q], vec![1.0]],
                    perms: None,
                },
            )
            .unwrap();
            best = best.max(solve_jm(&m).unwrap().mu_star);
        }
        assert!(joint.jm.mu_star >= best - 1e-7);
        assert!(joint.jm.mu_star <= best + 5e-3);
    }
}
