//! Solver-level checks: Jacobian consistency against finite differences,
//! structure of the linearised operator, contact activation behaviour, and
//! time-marching properties.

use std::sync::Arc;

use elastid_core::elastic::{
    assemble_residual_and_jacobian, dirichlet_value, lame_from_engineering,
    max_boundary_penetration, solve_forward, solve_time_step, solve_time_step_from_guess,
    FEConfig, FEState, ParameterPoint,
};
use elastid_core::geometry::{build_mesh, BoundaryTag, DomainSpec, Mesh};
use elastid_core::linalg::{norm, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn small_mesh() -> Mesh {
    // 5 × 3 grid of vertices: 15 ≤ 25, with contact, clamped and driven edges.
    build_mesh(&DomainSpec::new(2.0, 1.0, 0.5).unwrap()).unwrap()
}

/// Tame material so FD steps are well-conditioned.
fn tame_params() -> ParameterPoint {
    ParameterPoint::new(10.0, 0.3).unwrap()
}

#[test]
fn jacobian_matches_finite_differences() {
    let mesh = small_mesh();
    let ndof = 2 * mesh.vertices().len();
    let lame = lame_from_engineering(&tame_params()).unwrap();
    let cfg = FEConfig { rho: 2.0, ..FEConfig::default() };
    let dt = 0.1;
    let mut rng = ChaCha20Rng::seed_from_u64(4242);

    let prev = FEState {
        u: (0..ndof).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        v: (0..ndof).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        t: 0.2,
    };
    let guess = FEState {
        u: (0..ndof).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        v: prev.v.clone(),
        t: prev.t + dt,
    };

    let (r0, jac) =
        assemble_residual_and_jacobian(&guess, &prev, dt, lame, &cfg, &mesh).unwrap();
    assert!(norm(&r0) > 0.0);

    // Central differences of the residual, column by column.
    let mut jac_max: f64 = 0.0;
    for i in 0..ndof {
        for j in 0..ndof {
            jac_max = jac_max.max(jac.get(i, j).abs());
        }
    }
    let mut worst = 0.0f64;
    for j in 0..ndof {
        let h = 1e-6 * guess.u[j].abs().max(1.0);
        let mut up = guess.clone();
        up.u[j] += h;
        let mut dn = guess.clone();
        dn.u[j] -= h;
        let (rp, _) = assemble_residual_and_jacobian(&up, &prev, dt, lame, &cfg, &mesh).unwrap();
        let (rm, _) = assemble_residual_and_jacobian(&dn, &prev, dt, lame, &cfg, &mesh).unwrap();
        for i in 0..ndof {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            worst = worst.max((fd - jac.get(i, j)).abs());
        }
    }
    assert!(
        worst <= 1e-6 * jac_max,
        "FD mismatch {worst:e} exceeds 1e-6 of max entry {jac_max:e}"
    );
}

#[test]
fn contact_free_jacobian_is_spd_on_free_dofs() {
    let mesh = build_mesh(&DomainSpec::new(1.0, 1.0, 0.5).unwrap()).unwrap();
    let ndof = 2 * mesh.vertices().len();
    let lame = lame_from_engineering(&tame_params()).unwrap();
    let cfg = FEConfig { contact_enabled: false, rho: 2.0, ..FEConfig::default() };
    let dt = 0.25;
    let prev = FEState::zero(&mesh, 0.0);
    let guess = FEState::zero(&mesh, dt);
    let (_, jac) = assemble_residual_and_jacobian(&guess, &prev, dt, lame, &cfg, &mesh).unwrap();

    let mut constrained = vec![false; ndof];
    for tag in [BoundaryTag::Left, BoundaryTag::Right] {
        for v in mesh.tagged_vertices(tag) {
            constrained[2 * v] = true;
            constrained[2 * v + 1] = true;
        }
    }
    let free: Vec<usize> = (0..ndof).filter(|&i| !constrained[i]).collect();
    let m = free.len();
    assert!(m > 0);
    let mut a = vec![vec![0.0f64; m]; m];
    for (ai, &gi) in free.iter().enumerate() {
        for (aj, &gj) in free.iter().enumerate() {
            a[ai][aj] = jac.get(gi, gj);
        }
    }
    // Symmetry…
    for i in 0..m {
        for j in 0..m {
            let denom = a[i][j].abs().max(a[j][i].abs()).max(1.0);
            assert!((a[i][j] - a[j][i]).abs() <= 1e-12 * denom);
        }
    }
    // …and positive definiteness via an in-place Cholesky.
    for k in 0..m {
        for j in 0..k {
            let ljk = a[k][j];
            for i in k..m {
                a[i][k] -= a[i][j] * ljk;
            }
        }
        assert!(a[k][k] > 0.0, "pivot {k} not positive: {}", a[k][k]);
        let root = a[k][k].sqrt();
        for i in k..m {
            a[i][k] /= root;
        }
    }
}

#[test]
fn inactive_contact_equals_pure_elasticity() {
    // Tension pull: the plate contracts away from the obstacle, so the
    // contact term never activates and both solvers walk the same path.
    let mesh = Arc::new(build_mesh(&DomainSpec::new(2.0, 1.0, 0.25).unwrap()).unwrap());
    let p = ParameterPoint::new(100.0, 0.3).unwrap();
    let with = FEConfig { n_steps: 4, rho: 1.0, ..FEConfig::default() };
    let without = FEConfig { contact_enabled: false, ..with };
    let a = solve_forward(&p, &with, &mesh).unwrap();
    let b = solve_forward(&p, &without, &mesh).unwrap();
    let ua = &a.final_state().u;
    let ub = &b.final_state().u;
    let diff: f64 = ua.iter().zip(ub).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    assert!(diff <= 1e-10, "contact-free mismatch {diff:e}");
    assert_eq!(max_boundary_penetration(a.final_state(), &mesh).unwrap(), 0.0);
}

#[test]
fn compression_engages_contact_and_stays_feasible() {
    // Pushing the plate leftward expands it vertically into the obstacle:
    // with the contact term off it bulges freely, with it on the bulge is
    // held at the obstacle (the consistency part of the Nitsche term keeps
    // the residual penetration far below the plain-penalty scale γ|σ_nn|).
    let mesh = Arc::new(build_mesh(&DomainSpec::new(1.0, 1.0, 0.5).unwrap()).unwrap());
    let p = ParameterPoint::new(100.0, 0.3).unwrap();
    let base = FEConfig { n_steps: 4, rho: 1.0, dirichlet_scale: -0.2, ..FEConfig::default() };
    let free = FEConfig { contact_enabled: false, ..base };
    let constrained = solve_forward(&p, &base, &mesh).unwrap();
    let unconstrained = solve_forward(&p, &free, &mesh).unwrap();

    let bulge = max_boundary_penetration(unconstrained.final_state(), &mesh).unwrap();
    assert!(bulge > 0.1, "free solution must bulge into the obstacle, got {bulge}");
    let pen = max_boundary_penetration(constrained.final_state(), &mesh).unwrap();
    assert!(pen <= 1e-6, "contact must hold the boundary at the obstacle, got {pen:e}");

    let diff: f64 = constrained
        .final_state()
        .u
        .iter()
        .zip(&unconstrained.final_state().u)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(diff > 0.1, "contact term had no effect: diff {diff:e}");

    // A 10× stiffer Nitsche weight keeps feasibility (non-strict decrease).
    let stiffer = FEConfig { gamma_ratio: 10.0 * base.gamma_ratio, ..base };
    let sol2 = solve_forward(&p, &stiffer, &mesh).unwrap();
    let pen2 = max_boundary_penetration(sol2.final_state(), &mesh).unwrap();
    assert!(pen2 <= 1e-6, "stiffer weight lost feasibility: {pen2:e}");
}

#[test]
fn newton_reaches_same_solution_from_different_guesses() {
    let mesh = build_mesh(&DomainSpec::new(1.0, 1.0, 0.5).unwrap()).unwrap();
    let lame = lame_from_engineering(&ParameterPoint::new(100.0, 0.3).unwrap()).unwrap();
    let cfg = FEConfig { rho: 1.0, dirichlet_scale: -0.2, ..FEConfig::default() };
    let dt = 0.25;
    let prev = FEState::zero(&mesh, 0.0);
    let a = solve_time_step(&prev, dt, lame, &cfg, &mesh).unwrap();

    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let wild: Vec<f64> = (0..prev.u.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = solve_time_step_from_guess(&wild, &prev, dt, lame, &cfg, &mesh).unwrap();
    let diff: f64 =
        a.u.iter().zip(&b.u).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    assert!(diff <= 1e-10, "Newton landed on different solutions: {diff:e}");
}

#[test]
fn first_step_displacement_scales_quadratically() {
    // The driving ramp 18t² − 12t³ starts flat, so the first-step response
    // must shrink by ≈ 4 when dt halves.
    let mesh = build_mesh(&DomainSpec::new(1.0, 1.0, 0.5).unwrap()).unwrap();
    let lame = lame_from_engineering(&tame_params()).unwrap();
    let cfg = FEConfig { rho: 1.0, ..FEConfig::default() };
    let prev = FEState::zero(&mesh, 0.0);
    let n1 = norm(&solve_time_step(&prev, 0.01, lame, &cfg, &mesh).unwrap().u);
    let n2 = norm(&solve_time_step(&prev, 0.005, lame, &cfg, &mesh).unwrap().u);
    let ratio = n1 / n2;
    assert!(
        (3.7..=4.3).contains(&ratio),
        "expected quadratic start, got ratio {ratio}"
    );
}

#[test]
fn halving_dt_reduces_the_time_discretisation_error() {
    let mesh = Arc::new(build_mesh(&DomainSpec::new(1.0, 1.0, 0.5).unwrap()).unwrap());
    let p = ParameterPoint::new(50.0, 0.35).unwrap();
    let solve_n = |n: usize| {
        let cfg = FEConfig { n_steps: n, rho: 1.0, dirichlet_scale: -0.1, ..FEConfig::default() };
        solve_forward(&p, &cfg, &mesh).unwrap().final_state().u.clone()
    };
    let u4 = solve_n(4);
    let u8 = solve_n(8);
    let u16 = solve_n(16);
    let d1: f64 = u4.iter().zip(&u8).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let d2: f64 = u8.iter().zip(&u16).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    assert!(d2 < d1, "refinement must contract: {d1:e} then {d2:e}");
}

#[test]
fn forward_bookkeeping_and_exact_dirichlet() {
    let mesh = Arc::new(build_mesh(&DomainSpec::new(2.0, 1.0, 0.5).unwrap()).unwrap());
    let p = ParameterPoint::new(200.0, 0.3).unwrap();
    let cfg = FEConfig { n_steps: 2, rho: 1.0, ..FEConfig::default() };
    let sol = solve_forward(&p, &cfg, &mesh).unwrap();
    assert!(sol.snapshot(0).is_some());
    assert!(sol.snapshot(1).is_some());
    assert_eq!(sol.mid_state().t, 0.5);
    assert_eq!(sol.final_state().t, 1.0);
    assert_eq!(sol.state_at_time(0.5).unwrap().t, 0.5);
    assert!(sol.state_at_time(0.3).is_err());

    // Dirichlet entries are carried bit-exactly at every stored level.
    for (_, state) in sol.snapshots() {
        for v in mesh.tagged_vertices(BoundaryTag::Right) {
            let g = dirichlet_value(state.t, BoundaryTag::Right).unwrap();
            assert_eq!(state.u[2 * v], g.x);
            assert_eq!(state.u[2 * v + 1], g.y);
        }
        for v in mesh.tagged_vertices(BoundaryTag::Left) {
            assert_eq!(state.u[2 * v], 0.0);
            assert_eq!(state.u[2 * v + 1], 0.0);
        }
    }
}

#[test]
fn physical_scale_forward_solve_stays_feasible() {
    let mesh = Arc::new(build_mesh(&DomainSpec::new(2.0, 1.0, 0.25).unwrap()).unwrap());
    let p = ParameterPoint::new(7.513e10, 0.3547).unwrap();
    let cfg = FEConfig { n_steps: 10, ..FEConfig::default() };
    let sol = solve_forward(&p, &cfg, &mesh).unwrap();
    let pen = max_boundary_penetration(sol.final_state(), &mesh).unwrap();
    assert!(pen <= 1e-2 * 1.0, "penetration {pen} too large");
    // Tension ramp: the right edge has moved by the full ramp value.
    let right = mesh.tagged_vertices(BoundaryTag::Right)[0];
    assert_eq!(sol.final_state().u[2 * right], 6.0);
    // Quasi-static regime: interior x-displacement is a smooth ramp between
    // 0 on the left and 6 on the right.
    let (_, mid) = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, v)| (i, *v))
        .find(|(_, v)| (v.x - 1.0).abs() < 1e-9 && (v.y - 0.5).abs() < 1e-9)
        .map(|(i, _)| ((), i))
        .unwrap();
    let ux = sol.final_state().u[2 * mid];
    assert!(ux > 1.0 && ux < 5.0, "interior displacement {ux} out of range");
}

#[test]
fn nonconvergence_is_reported_with_time_level() {
    let mesh = build_mesh(&DomainSpec::new(1.0, 1.0, 0.5).unwrap()).unwrap();
    let lame = lame_from_engineering(&tame_params()).unwrap();
    let cfg = FEConfig { newton_max_iter: 1, newton_tol: 1e-30, rho: 1.0, ..FEConfig::default() };
    let prev = FEState::zero(&mesh, 0.0);
    let err = solve_time_step(&prev, 0.25, lame, &cfg, &mesh).unwrap_err();
    assert!(matches!(err, elastid_core::Error::NewtonDiverged { .. }), "got {err:?}");
}

#[test]
fn body_force_enters_the_load() {
    // With gravity-like loading and fully clamped sides at zero ramp, the
    // plate sags: vertical displacement is negative in the interior.
    let mesh = Arc::new(build_mesh(&DomainSpec::new(1.0, 1.0, 0.25).unwrap()).unwrap());
    let p = ParameterPoint::new(500.0, 0.3).unwrap();
    let cfg = FEConfig {
        n_steps: 4,
        rho: 1.0,
        dirichlet_scale: 0.0,
        body_force: Vec2::new(0.0, -5.0),
        contact_enabled: false,
        ..FEConfig::default()
    };
    let sol = solve_forward(&p, &cfg, &mesh).unwrap();
    let (lo, hi) = mesh.bounds();
    let mid = mesh
        .vertices()
        .iter()
        .position(|v| {
            (v.x - 0.5 * (lo.x + hi.x)).abs() < 1e-9 && (v.y - 0.5 * (lo.y + hi.y)).abs() < 1e-9
        })
        .unwrap();
    assert!(sol.final_state().u[2 * mid + 1] < 0.0);
}
