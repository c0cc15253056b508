//! Solver-level checks with closed-form references: heat flow, affine
//! systems, comparison, discrete duality, and density spreading rates.

use mfg_split::fp::{solve_fp_forward, solve_fp_signed_forward};
use mfg_split::grid::{GridDensity, GridFunction, TorusGrid};
use mfg_split::mesh::TimeMesh;
use mfg_split::parabolic::{
    bernstein_audit, solve_hj_backward, solve_linear_parabolic_system, DerivativeMode,
    LeaderCoupling,
};

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Backward heat flow from sin decays like e^{-(t1-t)} sin x.
#[test]
fn heat_semigroup_closed_form_and_refinement() {
    let run = |n: usize, steps: usize| -> f64 {
        let grid = TorusGrid::standard(n).unwrap();
        let g = GridFunction::sample(grid.clone(), f64::sin);
        let mesh = TimeMesh::new(0.0, 0.5, steps).unwrap();
        let traj =
            solve_hj_backward(&|_, _| 1.0, &|_, _, _| 0.0, &g, &mesh, DerivativeMode::Spectral)
                .unwrap();
        let mut worst = 0.0f64;
        for (k, snap) in traj.snapshots().iter().enumerate() {
            let t = mesh.time(k);
            let decay = (-(mesh.t1() - t)).exp();
            for (i, v) in snap.values().iter().enumerate() {
                worst = worst.max((v - decay * grid.node(i).sin()).abs());
            }
        }
        worst
    };
    let coarse = run(128, 200);
    let fine = run(256, 800);
    assert!(coarse <= 2e-3, "coarse error {coarse}");
    assert!(coarse / fine >= 2.5, "errors {coarse} vs {fine}");
}

/// Spatially constant affine equation integrates the source exactly.
#[test]
fn unit_source_gives_remaining_time() {
    let grid = TorusGrid::standard(32).unwrap();
    let g = GridFunction::zero(grid);
    let mesh = TimeMesh::new(0.0, 0.8, 64).unwrap();
    let trajs = solve_linear_parabolic_system(
        &|_, _| 1.0,
        &|_, _| 0.0,
        None,
        &[&|_, _| 1.0],
        &[g],
        &mesh,
    )
    .unwrap();
    for (k, snap) in trajs[0].snapshots().iter().enumerate() {
        let expected = mesh.t1() - mesh.time(k);
        for v in snap.values() {
            assert!((v - expected).abs() <= 1e-12);
        }
    }
}

#[test]
fn affine_solver_superposes_and_permutes() {
    let grid = TorusGrid::standard(48).unwrap();
    let g1 = GridFunction::sample(grid.clone(), |x| x.sin() + 0.3 * (2.0 * x).cos());
    let g2 = GridFunction::sample(grid.clone(), |x| 0.5 * (3.0 * x).sin());
    let g_sum = g1.zip_with(&g2, |a, b| a + b);
    let f1 = |t: f64, x: f64| (x + t).cos();
    let f2 = |t: f64, x: f64| 0.7 * (2.0 * x - t).sin();
    let f_sum = |t: f64, x: f64| f1(t, x) + f2(t, x);
    let a = |_: f64, x: f64| 1.0 + 0.3 * x.cos();
    let v = |_: f64, x: f64| 0.4 * x.sin();
    let mesh = TimeMesh::with_cfl(0.0, 0.4, grid.spacing(), 0.4).unwrap();

    let separate = solve_linear_parabolic_system(
        &a,
        &v,
        None,
        &[&f1, &f2],
        &[g1.clone(), g2.clone()],
        &mesh,
    )
    .unwrap();
    let combined =
        solve_linear_parabolic_system(&a, &v, None, &[&f_sum], &[g_sum], &mesh).unwrap();
    for k in 0..=mesh.steps() {
        let added = separate[0].snapshot(k).zip_with(separate[1].snapshot(k), |x, y| x + y);
        assert!(added.sup_distance(combined[0].snapshot(k)) <= 1e-12);
    }

    let swapped = solve_linear_parabolic_system(
        &a,
        &v,
        None,
        &[&f2, &f1],
        &[g2, g1],
        &mesh,
    )
    .unwrap();
    assert_eq!(separate[0].sup_distance(&swapped[1]), 0.0);
    assert_eq!(separate[1].sup_distance(&swapped[0]), 0.0);
}

/// A follower picking up the leader's drift term differs from an uncoupled
/// run, and the leader itself is untouched.
#[test]
fn leader_coupling_feeds_followers_only() {
    let grid = TorusGrid::standard(32).unwrap();
    let g_lead = GridFunction::sample(grid.clone(), f64::sin);
    let g_follow = GridFunction::sample(grid, f64::cos);
    let mesh = TimeMesh::new(0.0, 0.3, 60).unwrap();
    let zero = |_: f64, _: f64| 0.0;
    let coupling = LeaderCoupling {
        leader: 0,
        targets: &[1],
        coefficient: &|_, _| 0.8,
    };
    let coupled = solve_linear_parabolic_system(
        &|_, _| 1.0,
        &zero,
        Some(&coupling),
        &[&zero, &zero],
        &[g_lead.clone(), g_follow.clone()],
        &mesh,
    )
    .unwrap();
    let plain = solve_linear_parabolic_system(
        &|_, _| 1.0,
        &zero,
        None,
        &[&zero, &zero],
        &[g_lead, g_follow],
        &mesh,
    )
    .unwrap();
    assert_eq!(coupled[0].sup_distance(&plain[0]), 0.0);
    assert!(coupled[1].sup_distance(&plain[1]) > 1e-3);
}

/// Monotone mode preserves pointwise ordering of terminal data.
#[test]
fn comparison_principle_in_monotone_mode() {
    let grid = TorusGrid::standard(48).unwrap();
    let g1 = GridFunction::sample(grid.clone(), |x| x.sin() - 0.1);
    let g2 = GridFunction::sample(grid.clone(), |x| x.sin() + 0.05 * (1.0 + x.cos()));
    let a = |_: f64, x: f64| 0.6 + 0.2 * x.cos();
    let h = |_: f64, x: f64, p: f64| 0.5 * p * p + 0.3 * x.sin() * p;
    let mesh = TimeMesh::with_cfl(0.0, 0.5, grid.spacing(), 2.0).unwrap();
    let u1 = solve_hj_backward(&a, &h, &g1, &mesh, DerivativeMode::MonotoneUpwind).unwrap();
    let u2 = solve_hj_backward(&a, &h, &g2, &mesh, DerivativeMode::MonotoneUpwind).unwrap();
    for k in 0..=mesh.steps() {
        for (x, y) in u1.snapshot(k).values().iter().zip(u2.snapshot(k).values()) {
            assert!(*x <= *y + 1e-12);
        }
    }
}

/// Weak form of the forward equation: d/dt ∫φ m = ∫(a φ'' - b φ') m, checked
/// per step and under refinement.
#[test]
fn fp_discrete_duality() {
    let phi = |x: f64| (2.0 * x).sin() + 0.5 * x.cos();
    let phi_x = |x: f64| 2.0 * (2.0 * x).cos() - 0.5 * x.sin();
    let phi_xx = |x: f64| -4.0 * (2.0 * x).sin() - 0.5 * x.cos();
    let a = |_: f64, _: f64| 0.8;
    let b = |_: f64, x: f64| 0.6 * x.sin();

    let run = |n: usize, steps: usize| -> f64 {
        let grid = TorusGrid::standard(n).unwrap();
        let h = grid.spacing();
        let m0 = GridDensity::wrapped_gaussian(grid.clone(), 2.5, 0.6).unwrap();
        let mesh = TimeMesh::new(0.0, 0.3, steps).unwrap();
        let traj = solve_fp_forward(&a, &b, &m0, &mesh).unwrap();
        let integral = |values: &[f64], weight: &dyn Fn(f64) -> f64| -> f64 {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| v * weight(grid.node(i)) * h)
                .sum()
        };
        let mut worst = 0.0f64;
        for k in 0..mesh.steps() {
            let new = traj.snapshot(k + 1).values();
            let old = traj.snapshot(k).values();
            let lhs = (integral(new, &phi) - integral(old, &phi)) / mesh.dt();
            let rhs = integral(new, &|x| a(0.0, x) * phi_xx(x) - b(0.0, x) * phi_x(x));
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    };
    let coarse = run(32, 40);
    let fine = run(64, 160);
    assert!(coarse <= 0.05, "coarse duality gap {coarse}");
    assert!(fine <= coarse * 0.35 + 1e-13, "gaps {coarse} vs {fine}");
}

/// Heat flow of a wrapped Gaussian spreads its variance at rate 2t; the sup
/// error against the closed form decays at second order in the spacing.
#[test]
fn fp_gaussian_spreading_second_order() {
    let sigma0: f64 = 0.5;
    let t_end = 0.25;
    let run = |n: usize, steps: usize| -> f64 {
        let grid = TorusGrid::standard(n).unwrap();
        let m0 = GridDensity::wrapped_gaussian(grid.clone(), 3.0, sigma0).unwrap();
        let mesh = TimeMesh::new(0.0, t_end, steps).unwrap();
        let traj = solve_fp_forward(&|_, _| 1.0, &|_, _| 0.0, &m0, &mesh).unwrap();
        let sigma_end = (sigma0 * sigma0 + 2.0 * t_end).sqrt();
        let exact = GridDensity::wrapped_gaussian(grid, 3.0, sigma_end).unwrap();
        traj.terminal()
            .values()
            .iter()
            .zip(exact.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    // dt scaled with h^2 so the spatial order is visible
    let e64 = run(64, 64);
    let e128 = run(128, 256);
    let order = (e64 / e128).log2();
    assert!(order >= 1.8, "observed order {order} ({e64} vs {e128})");
}

/// Divergence-form sources never create mass, even when they drive a
/// nontrivial signed solution.
#[test]
fn signed_sources_preserve_zero_mass() {
    let grid = TorusGrid::standard(40).unwrap();
    let rho0 = mfg_split::grid::GridSignedMeasure::zero(grid.clone());
    let m = GridDensity::wrapped_gaussian(grid, 1.5, 0.5).unwrap();
    let m_values = GridFunction::new(m.grid().clone(), m.values().to_vec());
    let source = move |_t: f64, x: f64| 1.3 * m_values.sample_node(x);
    let mesh = TimeMesh::with_cfl(0.0, 0.4, m.grid().spacing(), 0.9).unwrap();
    let traj = solve_fp_signed_forward(
        &|_, _| 1.0,
        &|_, x| 0.9 * x.cos(),
        &rho0,
        &[&source],
        &mesh,
    )
    .unwrap();
    assert!(sup(traj.terminal().values()) > 1e-3);
    for snap in traj.snapshots() {
        assert!(snap.total_mass().abs() <= 1e-12);
    }
}

/// The fitted gradient-growth constant for a quadratic Hamiltonian with an
/// x-dependent source is stable within a factor two across grid refinement.
#[test]
fn gradient_growth_constant_stable_under_refinement() {
    let fitted = |n: usize, steps: usize| -> f64 {
        let grid = TorusGrid::standard(n).unwrap();
        let g = GridFunction::sample(grid, |x| 0.2 * x.sin());
        let mesh = TimeMesh::new(0.0, 0.5, steps).unwrap();
        let traj = solve_hj_backward(
            &|_, _| 1.0,
            &|_, x: f64, p: f64| 0.5 * p * p - 0.4 * x.sin(),
            &g,
            &mesh,
            DerivativeMode::Spectral,
        )
        .unwrap();
        bernstein_audit(&traj, traj.terminal(), 3).fitted_c_lip
    };
    let c48 = fitted(48, 100);
    let c96 = fitted(96, 200);
    assert!(c96 > 1e-3, "expected genuine gradient growth, got {c96}");
    let ratio = c48 / c96;
    assert!((0.5..=2.0).contains(&ratio), "fitted constants {c48} vs {c96}");
}
