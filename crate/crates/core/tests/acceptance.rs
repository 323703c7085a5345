//! One line per acceptance criterion; exits nonzero if any fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

use agpsr::erroranalysis::{fit_slope, geomspace, linspace, verify_expansion_orders, GapApproximation};
use agpsr::experiments::{derivative_scan, relative_error, scaling_study, MethodSpec, ScalingConfig, ScanConfig};
use agpsr::numerics::{hermitian_eig, solve_linear, ComplexMatrix, RealMatrix};
use agpsr::quantum::{
    neutral_atom_generator, pauli_x, pauli_z, random_hermitian, CostConfig, ExpectationProblem, GeneratorConfig,
    HermitianOperator, InitialStateConfig, InteractionRegime, LatticeSpec, Layout, NeutralAtomConfig, QuantumState,
    ShotModel,
};
use agpsr::shiftrules::{RuleKind, ShiftRuleSpec, ShiftSchedule};
use agpsr::spectral::GapSet;
use agpsr::varianceopt::{estimate_sigma0_sq, monte_carlo_variance, optimize_shifts, predict_variance, ShiftBounds};
use agpsr::vqe::{run_vqe, AnsatzSpec, DiffMethod, VqeConfig, VqeProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: usize, budget: Duration, f: fn() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let dt = t.elapsed();
    let pass = out.pass && dt <= budget;
    println!(
        "criterion {id}: {} ({:.1}s / {}s) {}",
        if pass { "PASS" } else { "FAIL" },
        dt.as_secs_f64(),
        budget.as_secs(),
        out.detail
    );
    pass
}

fn random_problem(n: usize, seed: u64) -> ExpectationProblem {
    let dim = 1 << n;
    let g = random_hermitian(dim, 2.0 + n as f64, seed).unwrap();
    let c = random_hermitian(dim, 2.0, seed ^ 0xC0FFEE).unwrap();
    ExpectationProblem::new(g, c, QuantumState::random(n, seed.wrapping_add(7))).unwrap()
}

fn c1_gpsr_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut max_s = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..50u64 {
        let n = 1 + (i % 3) as usize;
        let p = random_problem(n, 100 + i);
        let gaps = GapSet::of(p.generator());
        max_s = max_s.max(gaps.len());
        let spec = ShiftRuleSpec::with_schedule(
            RuleKind::Gpsr,
            gaps.gaps.clone(),
            &ShiftSchedule::default_for(RuleKind::Gpsr),
            ShotModel::exact(),
        )
        .unwrap();
        let rule = spec.prepare().unwrap();
        for _ in 0..5 {
            let x: f64 = rng.random_range(-PI..PI);
            let est = rule.estimate(&p, x).unwrap().estimate;
            worst = worst.max((est - p.derivative(x)).abs());
        }
    }
    outcome(worst <= 1e-8 && max_s <= 28, format!("max |GPSR - oracle| = {worst:.2e}, max S = {max_s}"))
}

fn c2_agpsr_recovery() -> Outcome {
    let mut identical = 0;
    for i in 0..20u64 {
        let p = random_problem(1 + (i % 3) as usize, 500 + i);
        let gaps = GapSet::of(p.generator()).gaps;
        let shifts = ShiftSchedule::default_for(RuleKind::Gpsr).shifts(&gaps).unwrap();
        let g = ShiftRuleSpec::new(RuleKind::Gpsr, gaps.clone(), shifts.clone(), ShotModel::exact()).unwrap();
        let a = ShiftRuleSpec::new(RuleKind::Agpsr, gaps, shifts, ShotModel::exact()).unwrap();
        let x = 0.37 + i as f64 * 0.11;
        let (rg, ra) = (g.prepare().unwrap().estimate(&p, x).unwrap(), a.prepare().unwrap().estimate(&p, x).unwrap());
        if rg.estimate.to_bits() == ra.estimate.to_bits() && rg.r_values == ra.r_values {
            identical += 1;
        }
    }
    outcome(identical == 20, format!("{identical}/20 instances bit-identical"))
}

/// Derivative error of a truncated rule on a 2-qubit problem as the shift scale shrinks.
fn derivative_error_slope(k: usize) -> f64 {
    let p = random_problem(2, 77);
    let gammas: Vec<f64> = (1..=k).map(|j| j as f64 * 2.7 / k as f64 + 0.1).collect();
    let profile = linspace(1.0, 2.0, k);
    let alphas = geomspace(0.05, 0.4, 10);
    let x = 0.8;
    let exact = p.derivative(x);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &a in &alphas {
        let shifts: Vec<f64> = profile.iter().map(|d| a * d).collect();
        let spec = ShiftRuleSpec::new(RuleKind::Agpsr, gammas.clone(), shifts, ShotModel::exact()).unwrap();
        let err = (spec.prepare().unwrap().estimate(&p, x).unwrap().estimate - exact).abs();
        xs.push(a.ln());
        ys.push(err.ln());
    }
    fit_slope(&xs, &ys)
}

fn c3_convergence_order() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 1..=3 {
        let rep = verify_expansion_orders(k, 20, 3 + k as u64).unwrap();
        let slope_ok = rep.max_slope_deviation <= 0.3;
        pass &= slope_ok;
        let mut part = format!("K={k}: Q slope {:.3} (max dev {:.3})", rep.mean_slope, rep.max_slope_deviation);
        if k != 2 {
            pass &= rep.max_coefficient_rel_error <= 0.1;
            part += &format!(", coeff err {:.2e}", rep.max_coefficient_rel_error);
        }
        let s = derivative_error_slope(k);
        pass &= (s - 2.0 * k as f64).abs() <= 0.3;
        part += &format!(", f' slope {s:.3}");
        parts.push(part);
    }
    outcome(pass, parts.join("; "))
}

fn c4_error_zeros() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut configs = 0;
    while configs < 100 {
        let k = 1 + configs % 8;
        let mut gammas: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..6.0)).collect();
        gammas.sort_by(f64::total_cmp);
        let mut shifts: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.5)).collect();
        shifts.sort_by(f64::total_cmp);
        let Ok(approx) = GapApproximation::new(&gammas, &shifts) else { continue };
        for &g in &gammas {
            worst = worst.max(approx.q(g).abs());
        }
        configs += 1;
    }
    outcome(worst <= 1e-9, format!("max |Q_K(γ_k)| = {worst:.2e} over 100 configs, K = 1..8"))
}

fn grid_scan(regime: InteractionRegime, ks: &[usize]) -> Vec<f64> {
    let cfg = ScanConfig {
        generator: GeneratorConfig::NeutralAtom(NeutralAtomConfig {
            n_qubits: 6,
            omega: 1.0,
            j: None,
            lattice: Some(LatticeSpec::with_regime(Layout::Grid { rows: 2, cols: 3 }, regime)),
        }),
        initial_state: InitialStateConfig::Zero,
        cost: CostConfig::SumZ,
        methods: ks
            .iter()
            .map(|&k| MethodSpec::Agpsr { k, step_a: 4.0, schedule: Some(ShiftSchedule::Interval { lo: 0.25, hi: 0.5 }) })
            .collect(),
        x_min: 0.0,
        x_max: PI,
        points: 50,
        shots: None,
        seed: 0,
    };
    let res = derivative_scan(&cfg).unwrap();
    res.methods.iter().map(|m| relative_error(&m.values, &res.exact).r).collect()
}

fn c5_lattice_reproduction() -> Outcome {
    let weak = grid_scan(InteractionRegime::Weak, &[4]);
    let strong = grid_scan(InteractionRegime::Strong, &[4, 8]);
    let pass = weak[0] <= 0.01 && strong[0] > 0.01 && strong[1] <= 0.01;
    outcome(pass, format!("weak K=4 r={:.2e}; strong K=4 r={:.2e}, K=8 r={:.2e}", weak[0], strong[0], strong[1]))
}

fn c6_gap_scaling() -> Outcome {
    let rows = scaling_study(&ScalingConfig::default()).unwrap();
    let s: Vec<usize> = rows.iter().map(|r| r.total_gaps).collect();
    let ks: Vec<Option<usize>> = rows.iter().map(|r| r.min_k).collect();
    let found: Vec<usize> = ks.iter().flatten().copied().collect();
    let spread_ok = found.len() == ks.len() && found.iter().max().unwrap() - found.iter().min().unwrap() <= 4;
    outcome(s == [28, 120, 496, 2016] && spread_ok, format!("S = {s:?}, minimal K for r <= 0.2% = {ks:?}"))
}

fn c7_variance_formula() -> Outcome {
    let g = HermitianOperator::new(pauli_x()).unwrap();
    let c = HermitianOperator::new(pauli_z()).unwrap();
    let p = ExpectationProblem::new(g, c, QuantumState::zero(1)).unwrap();
    let x = FRAC_PI_2;
    let spec = ShiftRuleSpec::new(RuleKind::Psr, vec![2.0], vec![0.1], ShotModel::finite(1000, 0).unwrap()).unwrap();
    let predicted = predict_variance(&spec, estimate_sigma0_sq(&p, x)).unwrap().sigma_d_sq;
    let mc = monte_carlo_variance(&p, x, &spec, 2000, 2024).unwrap().variance;
    let rel = (mc / predicted - 1.0).abs();
    let opt = optimize_shifts(&[2.0], &[0.3], ShiftBounds::default_for(&[2.0])).unwrap();
    let dev = (opt.optimal_shifts[0] - FRAC_PI_2).abs();
    outcome(
        rel <= 0.15 && dev <= 1e-3,
        format!("MC {mc:.4e} vs predicted {predicted:.4e} (rel {rel:.3}); δ_opt - π/2 = {dev:.1e}"),
    )
}

fn c8_vqe_savings() -> Outcome {
    let mut pass = true;
    let mut factors = Vec::new();
    let mut energy_parts = Vec::new();
    for (n, expected) in [(3, 7.0), (4, 30.0), (5, 124.0), (6, 504.0)] {
        let gpsr = VqeProblem::new(VqeConfig::new(n, AnsatzSpec::analog(), DiffMethod::gpsr())).unwrap();
        let agpsr = VqeProblem::new(VqeConfig::new(n, AnsatzSpec::analog(), DiffMethod::agpsr(4, 4.0))).unwrap();
        let factor = gpsr.calls_per_gradient() as f64 / agpsr.calls_per_gradient() as f64;
        pass &= factor == expected;
        factors.push(factor);
        if n <= 4 {
            let mean = |m: DiffMethod| {
                let mut cfg = VqeConfig::new(n, AnsatzSpec::analog(), m);
                cfg.seed = 11;
                let traces = run_vqe(&cfg).unwrap();
                traces.iter().map(|t| t.final_energy).sum::<f64>() / traces.len() as f64
            };
            let diff = (mean(DiffMethod::agpsr(4, 4.0)) - mean(DiffMethod::gpsr())).abs();
            pass &= diff <= 1e-3 * n as f64;
            energy_parts.push(format!("N={n} |ΔE| = {diff:.2e}"));
        }
    }
    outcome(pass, format!("savings {factors:?}; {}", energy_parts.join(", ")))
}

fn c9_numerics_floor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_eig: f64 = 0.0;
    let mut worst_solve: f64 = 0.0;
    let mut check = |m: &ComplexMatrix| {
        let eig = hermitian_eig(m).unwrap();
        worst_eig = worst_eig.max(eig.reconstruction_residual(m) / m.max_abs());
    };
    for dim in [2usize, 3, 4, 7, 8, 16, 32, 64] {
        for s in 0..4u64 {
            check(random_hermitian(dim, 0.0, 1000 * dim as u64 + s).unwrap().matrix());
        }
    }
    for n in 2..=6 {
        for regime in [InteractionRegime::Weak, InteractionRegime::Strong] {
            let lat = LatticeSpec::with_regime(Layout::Chain, regime);
            check(neutral_atom_generator(n, 1.0, &lat.interactions(n, 1.0).unwrap()).unwrap().matrix());
        }
    }
    for _ in 0..200 {
        let n = rng.random_range(1..=40);
        let a = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let Ok(x) = solve_linear(&a, &b) else { continue };
        let r = a.matvec(&x);
        let res = r.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        let scale = a.norm_inf() * x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst_solve = worst_solve.max(res / scale);
    }
    outcome(
        worst_eig <= 1e-10 && worst_solve <= 1e-10,
        format!("eig reconstruction {worst_eig:.2e}·max|M|, solve residual {worst_solve:.2e} relative"),
    )
}

fn main() {
    let s = Duration::from_secs;
    let criteria: [(usize, Duration, fn() -> Outcome); 9] = [
        (1, s(30), c1_gpsr_oracle),
        (2, s(30), c2_agpsr_recovery),
        (3, s(60), c3_convergence_order),
        (4, s(60), c4_error_zeros),
        (5, s(300), c5_lattice_reproduction),
        (6, s(600), c6_gap_scaling),
        (7, s(120), c7_variance_formula),
        (8, s(900), c8_vqe_savings),
        (9, s(60), c9_numerics_floor),
    ];
    let failed = criteria.iter().filter(|(id, budget, f)| !run(*id, *budget, *f)).count();
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
