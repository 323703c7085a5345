use std::f64::consts::PI;

use agpsr::erroranalysis::GapApproximation;
use agpsr::numerics::{hermitian_eig, solve_linear, RealMatrix};
use agpsr::quantum::{evolve, random_hermitian, ExpectationProblem, QuantumState};
use agpsr::shiftrules::{RuleKind, ShiftRuleSpec, ShiftSchedule};
use agpsr::spectral::GapSet;
use agpsr::varianceopt::{g_objective, optimize_shifts, ShiftBounds};
use agpsr::quantum::ShotModel;
use proptest::prelude::*;

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn separated(v: &[f64], min: f64) -> bool {
    v.windows(2).all(|w| w[1] - w[0] >= min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eig_reconstructs(dim in 1usize..24, seed in any::<u64>(), spread in 0.0f64..10.0) {
        let op = random_hermitian(dim, spread, seed).unwrap();
        let eig = hermitian_eig(op.matrix()).unwrap();
        let scale = op.matrix().max_abs().max(f64::MIN_POSITIVE);
        prop_assert!(eig.reconstruction_residual(op.matrix()) <= 1e-10 * scale);
        prop_assert!(eig.orthonormality_defect() <= 1e-10);
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn solve_residual_is_small(n in 1usize..30, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = RealMatrix::from_fn(n, n, |i, j| rng.random_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 });
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = solve_linear(&a, &b).unwrap();
        let r = a.matvec(&x);
        let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, v) in r.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-10 * (a.norm_inf() * x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + bmax));
        }
    }

    #[test]
    fn evolution_is_a_norm_preserving_group(n in 1usize..4, seed in any::<u64>(), x in -6.0f64..6.0, y in -6.0f64..6.0) {
        let g = random_hermitian(1 << n, 3.0, seed).unwrap();
        let psi = QuantumState::random(n, seed ^ 1);
        let a = evolve(&g, x + y, &psi).unwrap();
        let b = evolve(&g, y, &evolve(&g, x, &psi).unwrap()).unwrap();
        prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        prop_assert!((a.inner(&b).norm() - 1.0).abs() < 1e-10);
        let back = evolve(&g, -x, &evolve(&g, x, &psi).unwrap()).unwrap();
        prop_assert!((back.inner(&psi).re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gpsr_matches_oracle(n in 1usize..3, seed in any::<u64>(), x in -PI..PI) {
        let g = random_hermitian(1 << n, 2.5, seed).unwrap();
        let c = random_hermitian(1 << n, 2.0, seed.wrapping_add(3)).unwrap();
        let p = ExpectationProblem::new(g, c, QuantumState::random(n, seed ^ 5)).unwrap();
        let gaps = GapSet::of(p.generator()).gaps;
        let spec = ShiftRuleSpec::with_schedule(RuleKind::Gpsr, gaps, &ShiftSchedule::default_for(RuleKind::Gpsr), ShotModel::exact()).unwrap();
        let est = spec.prepare().unwrap().estimate(&p, x).unwrap().estimate;
        prop_assert!((est - p.derivative(x)).abs() < 1e-8);
    }

    #[test]
    fn error_function_vanishes_at_pseudo_gaps(
        gammas in prop::collection::vec(0.2f64..6.0, 1..7),
        shifts in prop::collection::vec(0.05f64..1.5, 7),
    ) {
        let gammas = sorted(gammas);
        let shifts = sorted(shifts[..gammas.len()].to_vec());
        prop_assume!(separated(&gammas, 0.05) && separated(&shifts, 0.02));
        let approx = GapApproximation::new(&gammas, &shifts).unwrap();
        for &g in &gammas {
            prop_assert!(approx.q(g).abs() < 1e-9);
        }
        prop_assert!(approx.q(0.0).abs() < 1e-12);
    }

    #[test]
    fn g_objective_is_permutation_invariant(seed in any::<u64>(), k in 1usize..5) {
        use rand::{Rng, SeedableRng};
        use rand::seq::SliceRandom;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let gaps: Vec<f64> = (1..=k).map(|i| i as f64).collect();
        let mut shifts: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.4)).collect();
        let a = g_objective(&gaps, &shifts);
        shifts.shuffle(&mut rng);
        let b = g_objective(&gaps, &shifts);
        prop_assert!(a == b || (a - b).abs() <= 1e-9 * a.abs());
    }

    #[test]
    fn optimizer_never_worsens(k in 1usize..4, lo in 0.05f64..0.3, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let gaps: Vec<f64> = (1..=k).map(|i| i as f64 * 1.3).collect();
        let b = ShiftBounds::default_for(&gaps);
        let shifts = sorted((0..k).map(|_| rng.random_range(lo.max(b.lo)..b.hi)).collect());
        prop_assume!(separated(&shifts, 0.02));
        let rep = optimize_shifts(&gaps, &shifts, b).unwrap();
        prop_assert!(rep.optimal_g <= rep.initial_g);
        prop_assert!(rep.optimal_shifts.iter().all(|&s| s >= b.lo && s <= b.hi));
    }
}
