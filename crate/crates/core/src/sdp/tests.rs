use super::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssnb_oracles::psd2_barrier;

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    0.5 * (&a + a.transpose())
}

#[test]
fn projection_examples() {
    let id = DMatrix::<f64>::identity(3, 3);
    assert!((project_psd(&id).unwrap() - &id).amax() < 1e-14);
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
    let p = project_psd(&m).unwrap();
    assert!(
        (p - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]))).amax() < 1e-14
    );
    let bad = DMatrix::from_element(2, 2, f64::NAN);
    assert!(project_psd(&bad).is_err());
}

#[test]
fn projection_beats_sampled_psd_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let m = random_symmetric(&mut rng, 6);
        let p = project_psd(&m).unwrap();
        assert!(min_eig(&p) > -1e-12);
        let best = (&m - &p).norm();
        for _ in 0..400 {
            // perturb the projection and push back into the cone via a
            // Gram factor, which is PSD by construction
            let b = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-0.3..0.3));
            let q = &p + &b * b.transpose()
                - 0.5
                    * DMatrix::from_fn(6, 6, |i, j| {
                        if i == j {
                            rng.random_range(0.0..0.05)
                        } else {
                            0.0
                        }
                    });
            if min_eig(&q) < 0.0 {
                continue;
            }
            assert!((&m - &q).norm() >= best - 1e-12);
        }
    }
}

fn trace_expr(n: usize, weights: &[f64]) -> AffineExpr {
    let mut e = AffineExpr::new();
    for i in 0..n {
        e.add_psd(i, i, weights[i]);
    }
    e
}

#[test]
fn minimum_eigenvalue_problem() {
    let mut prob = SdpProblem::new(2, 0);
    prob.set_objective(trace_expr(2, &[1.0, 2.0])).unwrap();
    let mut tr = trace_expr(2, &[1.0, 1.0]);
    tr.add_constant(-1.0);
    prob.add_eq(tr).unwrap();
    let sol = solve_sdp(&prob, 1e-8, 50_000).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert!((sol.objective_value - 1.0).abs() < 1e-6);
    assert!((sol.psd_matrix[(0, 0)] - 1.0).abs() < 1e-5);
    assert!(sol.psd_matrix[(1, 1)].abs() < 1e-5);
}

#[test]
fn lp_with_empty_psd_block() {
    let mut prob = SdpProblem::new(0, 1);
    let mut obj = AffineExpr::new();
    obj.add_free(0, 1.0);
    prob.set_objective(obj).unwrap();
    let mut c = AffineExpr::constant(3.0);
    c.add_free(0, -1.0);
    prob.add_le(c).unwrap();
    let sol = solve_sdp(&prob, 1e-8, 50_000).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert!((sol.free_vars[0] - 3.0).abs() < 1e-6);
    assert!((sol.multipliers[0] - 1.0).abs() < 1e-5);
}

#[test]
fn unbounded_lp_is_reported() {
    let mut prob = SdpProblem::new(0, 1);
    let mut obj = AffineExpr::new();
    obj.add_free(0, 1.0);
    prob.set_objective(obj).unwrap();
    let mut c = AffineExpr::new();
    c.add_free(0, 1.0);
    prob.add_le(c).unwrap();
    let sol = solve_sdp(&prob, 1e-8, 1_000_000).unwrap();
    assert_ne!(sol.status, SdpStatus::Optimal);
}

#[test]
fn infeasible_problem_is_flagged() {
    // X_00 = -1 with X ⪰ 0
    let mut prob = SdpProblem::new(1, 0);
    let mut c = AffineExpr::constant(1.0);
    c.add_psd(0, 0, 1.0);
    prob.add_eq(c).unwrap();
    let sol = solve_sdp(&prob, 1e-8, 5_000).unwrap();
    assert_eq!(sol.status, SdpStatus::InfeasibleSuspect);
}

#[test]
fn rejects_out_of_range_indices() {
    let mut prob = SdpProblem::new(2, 1);
    let mut e = AffineExpr::new();
    e.add_psd(0, 2, 1.0);
    assert!(prob.add_le(e).is_err());
    let mut e = AffineExpr::new();
    e.add_free(1, 1.0);
    assert!(prob.set_objective(e).is_err());
}

/// Random 2×2 instance: `[[a,b],[b,d]] ⪰ 0` plus three inequalities,
/// strictly feasible at `X0` and bounded by a trace cap.
fn random_psd2(rng: &mut ChaCha8Rng) -> (SdpProblem, [f64; 3], Vec<([f64; 3], f64)>, [f64; 3]) {
    let x0 = [
        rng.random_range(0.3..1.0),
        rng.random_range(-0.2..0.2),
        rng.random_range(0.3..1.0),
    ];
    let c = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ];
    let mut cons = vec![(
        [1.0, 0.0, 1.0],
        -(x0[0] + x0[2]) - rng.random_range(0.2..1.0),
    )];
    for _ in 0..2 {
        let g = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let at = g[0] * x0[0] + g[1] * x0[1] + g[2] * x0[2];
        cons.push((g, -at - rng.random_range(0.05..0.5)));
    }
    let mut prob = SdpProblem::new(2, 0);
    let mut obj = AffineExpr::new();
    obj.add_psd(0, 0, c[0])
        .add_psd(0, 1, c[1])
        .add_psd(1, 1, c[2]);
    prob.set_objective(obj).unwrap();
    for (g, h) in &cons {
        let mut e = AffineExpr::constant(*h);
        e.add_psd(0, 0, g[0])
            .add_psd(0, 1, g[1])
            .add_psd(1, 1, g[2]);
        prob.add_le(e).unwrap();
    }
    (prob, c, cons, x0)
}

#[test]
fn random_2x2_problems_match_barrier_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let (prob, c, cons, x0) = random_psd2(&mut rng);
        let sol = solve_sdp(&prob, 1e-8, 100_000).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let (_, oracle) = psd2_barrier(c, &cons, x0);
        assert!(
            (sol.objective_value - oracle).abs() < 1e-4,
            "{} vs {oracle}",
            sol.objective_value
        );
        assert!(min_eig(&sol.psd_matrix) >= -1e-7);
        assert!(sol.primal_residual <= 1e-6);
    }
}

#[test]
fn reported_residuals_are_recomputable() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let (prob, ..) = random_psd2(&mut rng);
        let sol = solve_sdp(&prob, 1e-7, 100_000).unwrap();
        let primal = prob.max_violation(&sol.psd_matrix, &sol.free_vars);
        let dual = prob.dual_residual(&sol.multipliers, &sol.dual_psd, &sol.dual_free);
        assert!((primal - sol.primal_residual).abs() < 1e-9);
        assert!((dual - sol.dual_residual).abs() < 1e-9);
        assert!(sol.dual_residual < 1e-5, "{}", sol.dual_residual);
    }
}

#[test]
fn warm_start_reuses_factorization_and_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (prob, ..) = random_psd2(&mut rng);
    let ws = SdpWorkspace::new(&prob).unwrap();
    let settings = SdpSettings {
        tol: 1e-8,
        max_iter: 100_000,
        ..SdpSettings::default()
    };
    let (cold, warm) = ws.solve_default(&settings, None).unwrap();
    let (again, _) = ws.solve_default(&settings, None).unwrap();
    assert_eq!(cold.psd_matrix, again.psd_matrix);
    let (hot, _) = ws.solve_default(&settings, Some(&warm)).unwrap();
    assert!(hot.iterations <= settings.check_every);
    assert!((hot.objective_value - cold.objective_value).abs() < 1e-7);
}

#[test]
fn triplet_dump_lists_every_term() {
    let mut prob = SdpProblem::new(2, 1);
    let mut obj = AffineExpr::new();
    obj.add_psd(1, 0, 2.0).add_free(0, -1.0);
    prob.set_objective(obj).unwrap();
    prob.add_eq(AffineExpr::constant(0.0)).unwrap();
    let mut buf = Vec::new();
    prob.write_triplets(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains("obj 0 psd 0 1 2.0"));
    assert!(text.contains("obj 0 free 0 -1.0"));
    assert!(text.contains("eq 0 const 0.0"));
}

proptest! {
    #[test]
    fn projection_is_idempotent(entries in proptest::collection::vec(-5.0f64..5.0, 16)) {
        let m = DMatrix::from_vec(4, 4, entries);
        let p = project_psd(&m).unwrap();
        let pp = project_psd(&p).unwrap();
        prop_assert!((&p - &pp).amax() < 1e-10);
        prop_assert!(min_eig(&p) > -1e-10);
    }
}
