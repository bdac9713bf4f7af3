//! Property tests for the measurement algebra and the joint-measurability
//! solver.

use incompat_core::classify::busch_incompatible;
use incompat_core::jm::{embed_real, min_eig_real, solve_jm, JmVerdict};
use incompat_core::linalg::{c, eigh, CMatrix, Hermitian, C64};
use incompat_core::measurement::{
    coarse_grain, make_noisy_mub, mix_inputs, pad_assemblage, Assemblage, BlochMeasurement,
    DisjointMixPlan, MubBasis, OutcomePartition, Povm,
};
use incompat_core::tol::DECIDE_EPS;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<C64> {
    (0..d).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> Hermitian {
    let m = CMatrix::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    Hermitian::symmetrized(m)
}

/// Haar-ish unitary from Gram-Schmidt on random complex columns.
fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::new();
    while cols.len() < d {
        let mut v = random_vector(rng, d);
        for u in &cols {
            let p: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= p * ui;
            }
        }
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-6 {
            cols.push(v.iter().map(|z| z / n).collect());
        }
    }
    CMatrix::from_fn(d, d, |i, j| cols[j][i])
}

/// `M_i = S^{-1/2} B_i S^{-1/2}` with random PSD `B_i` summing to `S`.
fn random_povm(rng: &mut ChaCha8Rng, d: usize, outcomes: usize) -> Povm {
    let raw: Vec<Hermitian> = (0..outcomes)
        .map(|_| {
            let v = random_vector(rng, d);
            let w = random_vector(rng, d);
            let mut h = Hermitian::projector(&v);
            h.axpy(rng.gen_range(0.0..1.0), &Hermitian::projector(&w));
            h
        })
        .collect();
    let mut s = Hermitian::zeros(d);
    for b in &raw {
        s.axpy(1.0, b);
    }
    let e = eigh(&s).unwrap();
    let mut inv_sqrt = CMatrix::zeros(d, d);
    for k in 0..d {
        let v = e.vector(k);
        inv_sqrt.axpy(1.0 / e.values[k].sqrt(), &CMatrix::outer(&v));
    }
    let effects = raw.iter().map(|b| b.conjugate_by(&inv_sqrt)).collect();
    Povm::new("random", effects).unwrap()
}

fn random_assemblage(seed: u64, d: usize, outcomes: usize, n: usize) -> Assemblage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu = rng.gen_range(0.3..1.0);
    let povms = (0..n)
        .map(|_| {
            let u = random_unitary(&mut rng, d);
            let basis: Vec<Vec<C64>> = (0..d).map(|j| (0..d).map(|i| u.as_slice()[i * d + j]).collect()).collect();
            let p = Povm::from_vectors("basis", &basis[..outcomes.min(d)]);
            match p {
                Ok(p) if outcomes == d => incompat_core::measurement::add_white_noise(&p, nu).unwrap(),
                _ => random_povm(&mut rng, d, outcomes),
            }
        })
        .collect();
    pad_assemblage(povms).unwrap()
}

fn random_partition(rng: &mut ChaCha8Rng, outcomes: usize) -> OutcomePartition {
    let labels: Vec<usize> = (0..outcomes).map(|_| rng.gen_range(0..outcomes)).collect();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for (z, &l) in labels.iter().enumerate() {
        match seen.iter().position(|&s| s == l) {
            Some(b) => blocks[b].push(z),
            None => {
                seen.push(l);
                blocks.push(vec![z]);
            }
        }
    }
    OutcomePartition::new(outcomes, blocks).unwrap()
}

fn same_verdict(a: &Assemblage, b: &Assemblage) -> Result<(), TestCaseError> {
    let ra = solve_jm(a).unwrap();
    let rb = solve_jm(b).unwrap();
    prop_assert!((ra.mu_star - rb.mu_star).abs() < 1e-6, "{} vs {}", ra.mu_star, rb.mu_star);
    if ra.mu_star.abs() > 10.0 * DECIDE_EPS {
        prop_assert_eq!(ra.verdict, rb.verdict);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigh_reconstructs(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, d);
        let e = eigh(&h).unwrap();
        prop_assert!(e.reconstruction_residual(&h) < 1e-9);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn embedding_preserves_spectrum(seed in any::<u64>(), d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, d);
        let min = eigh(&h).unwrap().values[0];
        prop_assert!((min_eig_real(&embed_real(&h)) - min).abs() < 1e-9);
        let shifted = h.add(&Hermitian::identity(d).scale(-min + 1e-3));
        prop_assert!(shifted.is_psd(1e-12).unwrap());
        prop_assert!(min_eig_real(&embed_real(&shifted)) > 0.0);
    }

    #[test]
    fn kron_trace_multiplies(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_hermitian(&mut rng, da);
        let b = random_hermitian(&mut rng, db);
        prop_assert!((a.kron(&b).trace() - a.trace() * b.trace()).abs() < 1e-12);
    }

    #[test]
    fn coarse_grain_preserves_completeness(seed in any::<u64>(), d in 2usize..5, outcomes in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_povm(&mut rng, d, outcomes);
        let part = random_partition(&mut rng, outcomes);
        let q = coarse_grain(&p, &part).unwrap();
        prop_assert_eq!(q.num_outcomes(), part.num_blocks());
        prop_assert!(q.sum().matrix().max_abs_diff(Hermitian::identity(d).matrix()) < 1e-9);
        let same = coarse_grain(&p, &OutcomePartition::identity(outcomes)).unwrap();
        prop_assert_eq!(same.effects(), p.effects());
    }

    #[test]
    fn two_stage_coarse_graining(seed in any::<u64>(), outcomes in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_povm(&mut rng, 3, outcomes);
        let fine = random_partition(&mut rng, outcomes);
        let stage = random_partition(&mut rng, fine.num_blocks());
        let coarse_blocks: Vec<Vec<usize>> = stage
            .blocks()
            .iter()
            .map(|b| {
                let mut zs: Vec<usize> = b.iter().flat_map(|&i| fine.blocks()[i].clone()).collect();
                zs.sort_unstable();
                zs
            })
            .collect();
        let coarse = OutcomePartition::new(outcomes, coarse_blocks).unwrap();
        prop_assert!(fine.refines(&coarse));
        let direct = coarse_grain(&p, &coarse).unwrap();
        let staged = coarse_grain(&coarse_grain(&p, &fine).unwrap(), &fine.quotient(&coarse).unwrap()).unwrap();
        for (x, y) in direct.effects().iter().zip(staged.effects()) {
            let diff = x.matrix().max_abs_diff(y.matrix());
            prop_assert!(diff < 1e-12, "{}", diff);
        }
    }

    #[test]
    fn mixing_preserves_validity(seed in any::<u64>(), q in 0.0f64..=1.0) {
        let a = random_assemblage(seed, 3, 3, 3);
        let plan = DisjointMixPlan::pair_mixture(3, 0, 2, q).with_perms(vec![vec![0, 1, 2], vec![0, 1, 2], vec![2, 0, 1]]);
        let m = mix_inputs(&a, &plan).unwrap();
        prop_assert!(m.validate().is_ok());
        prop_assert_eq!(m.len(), 2);
    }

    #[test]
    fn noisy_mub_is_affine(nu in 0.0f64..=1.0, nu2 in 0.0f64..=1.0, lam in 0.0f64..=1.0) {
        let bases = MubBasis::ALL;
        let a = make_noisy_mub(3, &bases, nu).unwrap();
        let b = make_noisy_mub(3, &bases, nu2).unwrap();
        let m = make_noisy_mub(3, &bases, lam * nu + (1.0 - lam) * nu2).unwrap();
        for x in 0..3 {
            for z in 0..3 {
                let mut e = a.effect(x, z).scale(lam);
                e.axpy(1.0 - lam, b.effect(x, z));
                prop_assert!(e.matrix().max_abs_diff(m.effect(x, z).matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn bloch_round_trip(x in -0.57f64..0.57, y in -0.57f64..0.57, z in -0.57f64..0.57) {
        let b = BlochMeasurement::new([x, y, z]).unwrap();
        let back = BlochMeasurement::from_povm(&b.to_povm("b")).unwrap();
        for k in 0..3 {
            prop_assert!((back.n[k] - b.n[k]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn verdict_invariant_under_unitary(seed in any::<u64>()) {
        let a = random_assemblage(seed, 3, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let u = random_unitary(&mut rng, 3);
        same_verdict(&a, &a.conjugate_by(&u))?;
    }

    #[test]
    fn verdict_invariant_under_relabelling(seed in any::<u64>(), which in 0usize..2, perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
        let a = random_assemblage(seed, 3, 3, 2);
        let mut povms = a.povms().to_vec();
        povms[which] = povms[which].permute(&perm).unwrap();
        same_verdict(&a, &pad_assemblage(povms).unwrap())?;
    }

    #[test]
    fn verdict_invariant_under_reordering(seed in any::<u64>()) {
        let a = random_assemblage(seed, 2, 2, 3);
        same_verdict(&a, &a.select(&[2, 0, 1]).unwrap())?;
    }

    #[test]
    fn parent_reproduces_marginals(seed in any::<u64>()) {
        let a = random_assemblage(seed, 2, 2, 2);
        let r = solve_jm(&a).unwrap();
        if r.verdict == JmVerdict::Compatible {
            prop_assert!(r.marginal_residual <= 1e-7);
            let mut total = Hermitian::zeros(2);
            for g in &r.parent {
                total.axpy(1.0, g);
            }
            prop_assert!(total.matrix().max_abs_diff(Hermitian::identity(2).matrix()) <= 1e-7);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn busch_oracle(
        a in prop::array::uniform3(-1.0f64..1.0),
        b in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let clamp = |v: [f64; 3]| {
            let n = norm(v);
            if n > 1.0 { [v[0] / n, v[1] / n, v[2] / n] } else { v }
        };
        let (a, b) = (BlochMeasurement::new(clamp(a)).unwrap(), BlochMeasurement::new(clamp(b)).unwrap());
        let margin = norm(a.add(&b)) + norm(a.sub(&b)) - 2.0;
        prop_assume!(margin.abs() > 1e-4);
        let r = solve_jm(&pad_assemblage(vec![a.to_povm("a"), b.to_povm("b")]).unwrap()).unwrap();
        prop_assume!(r.verdict != JmVerdict::Borderline);
        prop_assert_eq!(r.verdict == JmVerdict::Incompatible, busch_incompatible(&a, &b), "margin {}", margin);
    }
}

#[test]
fn mu_star_monotone_in_visibility() {
    let pair = [MubBasis::Computational, MubBasis::Fourier];
    let mut prev = f64::INFINITY;
    for t in 0..=20 {
        let nu = t as f64 / 20.0;
        let mu = solve_jm(&make_noisy_mub(3, &pair, nu).unwrap()).unwrap().mu_star;
        assert!(mu <= prev + 1e-7, "mu* increased at nu = {nu}: {mu} > {prev}");
        prev = mu;
    }
}
