use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use nosam_core::linalg::SymTridiagonal;
use nosam_core::monolithic::run_monolithic;
use nosam_core::newmark::{initial_acceleration, mechanical_energy, newmark_step, KinematicState, NewmarkParams, TridiagonalNewmark};
use nosam_core::opinf::{infer_operators, ridge_solve, RomForm, TrainingSet};
use nosam_core::pod::{compute_basis, Truncation};
use nosam_core::schwarz::convergence_measure;
use nosam_core::sweep::{generate_grid, pareto_front, GridAxes, SweepRecord};
use nosam_core::transmission::relax_lambda;
use nosam_core::ProblemConfig;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn sized_matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = DMatrix<f64>> {
    (rows, cols).prop_flat_map(|(r, c)| matrix(r, c))
}

fn state(n: usize) -> impl Strategy<Value = KinematicState> {
    (matrix(n, 1), matrix(n, 1), matrix(n, 1)).prop_map(|(u, v, a)| {
        KinematicState::new(u.column(0).into_owned(), v.column(0).into_owned(), a.column(0).into_owned(), 0.0).unwrap()
    })
}

/// Diagonally dominant positive definite tridiagonal matrix.
fn spd_tridiagonal(n: usize) -> impl Strategy<Value = SymTridiagonal> {
    (prop::collection::vec(0.1..2.0f64, n), prop::collection::vec(-1.0..1.0f64, n - 1)).prop_map(move |(d, off)| {
        let diag = (0..n)
            .map(|i| {
                let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < n { off[i].abs() } else { 0.0 };
                d[i] + left + right
            })
            .collect();
        SymTridiagonal::from_parts(diag, off).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pod_basis_is_orthonormal(x in sized_matrix(8..40, 2..12), frac in 0.0..1.0f64) {
        let full = compute_basis(&x, Truncation::Modes(x.ncols().min(x.nrows()))).unwrap();
        let r = 1 + (frac * (full.rank - 1) as f64) as usize;
        let basis = compute_basis(&x, Truncation::Modes(r)).unwrap();
        let gram = basis.phi.transpose() * &basis.phi - DMatrix::identity(r, r);
        prop_assert!(gram.amax() <= 1e-12);
    }

    #[test]
    fn truncation_error_is_the_discarded_energy(x in sized_matrix(8..40, 2..12), frac in 0.0..1.0f64) {
        let full = compute_basis(&x, Truncation::Modes(x.ncols().min(x.nrows()))).unwrap();
        let r = 1 + (frac * (full.rank - 1) as f64) as usize;
        let basis = compute_basis(&x, Truncation::Modes(r)).unwrap();
        let resid = (&x - &basis.phi * (basis.phi.transpose() * &x)).norm_squared();
        let tail: f64 = full.singular_values[r..].iter().map(|s| s * s).sum();
        prop_assert!((resid - tail).abs() <= 1e-8 * x.norm_squared());
    }

    #[test]
    fn energy_truncation_reaches_target(x in sized_matrix(8..40, 2..12), target in 0.5..0.999f64) {
        let basis = compute_basis(&x, Truncation::Energy(target)).unwrap();
        prop_assert!(basis.captured_energy >= target);
        if basis.n_modes() > 1 {
            let fewer = compute_basis(&x, Truncation::Modes(basis.n_modes() - 1)).unwrap();
            prop_assert!(fewer.captured_energy < target);
        }
    }

    #[test]
    fn ridge_solution_is_stationary(d in matrix(30, 6), y in matrix(30, 3), lambda in 0.0..2.0f64) {
        let x = ridge_solve(&d, &y, lambda).unwrap();
        let grad = d.transpose() * (&d * &x - &y) + &x * (lambda * lambda);
        prop_assert!(grad.amax() <= 1e-10 * (1.0 + d.norm() * y.norm()));
    }

    #[test]
    fn ridge_is_linear_in_targets(d in matrix(20, 5), y in matrix(20, 2), c in -10.0..10.0f64, lambda in 0.0..1.0f64) {
        let x = ridge_solve(&d, &y, lambda).unwrap();
        let xc = ridge_solve(&d, &(&y * c), lambda).unwrap();
        prop_assert!((xc - x * c).amax() <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn dirichlet_operators_recovered_from_exact_data(k in matrix(4, 4), b in matrix(4, 2), u in matrix(4, 30), g in matrix(2, 30)) {
        let train = TrainingSet {
            form: RomForm::Dirichlet,
            a_hat: &b * &g - &k * &u,
            u_hat: u,
            traction: Vec::new(),
            dirichlet: g,
            robin: Vec::new(),
            alpha: 0.0,
            beta: 1.0,
            sigma_max: 1.0,
        };
        let ops = infer_operators(&train, 0.0).unwrap();
        prop_assert!((&ops.k - &k).amax() <= 1e-8 * (1.0 + k.amax()));
        prop_assert!((&ops.b - &b).amax() <= 1e-8 * (1.0 + b.amax()));
    }

    #[test]
    fn neumann_operators_recovered_from_exact_data(k in matrix(3, 3), h in matrix(3, 1), b in matrix(3, 1), u in matrix(3, 25), t in matrix(1, 25), g in matrix(1, 25)) {
        let train = TrainingSet {
            form: RomForm::Neumann,
            a_hat: &h * &t + &b * &g - &k * &u,
            u_hat: u,
            traction: t.iter().copied().collect(),
            dirichlet: g,
            robin: Vec::new(),
            alpha: 1.0,
            beta: 0.0,
            sigma_max: 1.0,
        };
        let ops = infer_operators(&train, 0.0).unwrap();
        prop_assert!((&ops.k - &k).amax() <= 1e-8 * (1.0 + k.amax()));
        prop_assert!((ops.h.as_ref().unwrap() - &h).amax() <= 1e-8 * (1.0 + h.amax()));
        prop_assert!((&ops.b - &b).amax() <= 1e-8 * (1.0 + b.amax()));
    }

    #[test]
    fn convergence_measure_is_scale_invariant(x in state(20), y in state(20), c in 1e-6..1e6f64, dt in 1e-8..1e-2f64) {
        let base = convergence_measure(&x, &y, dt);
        let scale = |s: &KinematicState| KinematicState::new(&s.u * c, &s.v * c, &s.a * c, 0.0).unwrap();
        let scaled = convergence_measure(&scale(&x), &scale(&y), dt);
        prop_assert!((scaled - base).abs() <= 1e-12 * base.max(1e-300));
        prop_assert_eq!(convergence_measure(&x, &x, dt), 0.0);
    }

    #[test]
    fn tridiagonal_solve_inverts_product(a in (2usize..30).prop_flat_map(spd_tridiagonal), seed in matrix(30, 1)) {
        let n = a.dim();
        let x: Vec<f64> = seed.iter().take(n).copied().collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x, &mut b);
        a.factor().unwrap().solve_in_place(&mut b);
        for (got, want) in b.iter().zip(&x) {
            prop_assert!((got - want).abs() <= 1e-10);
        }
    }

    #[test]
    fn free_vibration_conserves_energy(
        (m, k) in (2usize..12).prop_flat_map(|n| (spd_tridiagonal(n), spd_tridiagonal(n))),
        seed in matrix(12, 2),
        dt in 1e-3..1.0f64,
    ) {
        let n = m.dim();
        let u0 = DVector::from_iterator(n, seed.column(0).iter().take(n).copied());
        let v0 = DVector::from_iterator(n, seed.column(1).iter().take(n).copied());
        let a0 = initial_acceleration(&m, &k, &DVector::zeros(n), &u0).unwrap();
        let sys = TridiagonalNewmark::new(m.clone(), &k, NewmarkParams::average_acceleration(dt).unwrap()).unwrap();
        let mut s = KinematicState::new(u0, v0, a0, 0.0).unwrap();
        let e0 = mechanical_energy(&m, &k, &s);
        let f = vec![0.0; n];
        for _ in 0..200 {
            s = newmark_step(&sys, &f, &s).unwrap();
        }
        prop_assert!((mechanical_energy(&m, &k, &s) - e0).abs() <= 1e-10 * e0);
    }

    #[test]
    fn full_relaxation_ignores_previous_lambda(alpha in -5.0..5.0f64, beta in -5.0..5.0f64, t in -1e3..1e3f64, u in -1.0..1.0f64, prev in -1e3..1e3f64) {
        prop_assert_eq!(relax_lambda(1.0, alpha, beta, t, u, prev), alpha * t + beta * u);
        prop_assert_eq!(relax_lambda(0.0, alpha, beta, t, u, prev), prev);
    }

    #[test]
    fn grid_is_cartesian_product(sizes in prop::collection::vec(1usize..4, 4)) {
        let axis = |n: usize, base: f64| (0..n).map(|i| base + i as f64).collect::<Vec<_>>();
        let axes = GridAxes {
            alpha12_bar: axis(sizes[0], 0.0),
            alpha21_bar: axis(sizes[1], 10.0),
            beta12: axis(sizes[2], 20.0),
            beta21: axis(sizes[3], 30.0),
        };
        let grid = generate_grid(&axes);
        prop_assert_eq!(grid.len(), sizes.iter().product::<usize>());
        for w in grid.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn pareto_members_are_not_dominated(points in prop::collection::vec((0.0..1.0f64, 1.0..5.0f64, any::<bool>()), 1..40)) {
        let records: Vec<SweepRecord> = points
            .iter()
            .map(|&(e, i, ok)| SweepRecord {
                alpha12_bar: 0.0,
                alpha21_bar: 0.0,
                beta12: 0.0,
                beta21: 0.0,
                eps_avg: ok.then_some(e),
                mean_iterations: ok.then_some(i),
                wall_time_s: 0.0,
                converged: ok,
            })
            .collect();
        let front = pareto_front(&records);
        for f in &front {
            prop_assert!(f.converged);
            prop_assert!(!records.iter().any(|r| r.dominates(f)));
        }
        for r in records.iter().filter(|r| r.converged) {
            let on_front = front.iter().any(|f| f.eps_avg == r.eps_avg && f.mean_iterations == r.mean_iterations);
            prop_assert!(on_front || front.iter().any(|f| f.dominates(r)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn symmetric_bar_stays_symmetric(width in 0.01..0.1f64, amplitude in 1e-4..1e-2f64) {
        let cfg = ProblemConfig {
            h: 0.01,
            dt: 1e-6,
            tf: 2e-4,
            ic_width: width,
            ic_amplitude: amplitude,
            ..ProblemConfig::default()
        };
        let traj = run_monolithic(&cfg).unwrap();
        let n = traj.n_nodes();
        for k in [traj.n_states() / 2, traj.n_states() - 1] {
            let s = traj.state(k);
            let scale = s.u.amax().max(amplitude);
            for i in 0..n {
                prop_assert!((s.u[i] - s.u[n - 1 - i]).abs() <= 1e-9 * scale);
            }
        }
    }
}
