//! Randomised checks of the structural invariants.

use std::sync::OnceLock;

use proptest::prelude::*;

use surfdiff::diagnostics::{d0_and_d, esp_check, peg_bound_check, q_function, QVariant};
use surfdiff::fd::{self, Stencil};
use surfdiff::mild::{reconstruct_U, solve_similarity_profile, CornerData, SolverConfig};
use surfdiff::oracle::{derivative_march, MarchConfig};
use surfdiff::semigroup::apply_semigroup;
use surfdiff::surface_calculus::{geometry_with, pei_residuals, AnalyticSurface};
use surfdiff::{FarField, GridFunction, KernelConfig, KernelTable, UniformGrid};

fn table() -> &'static KernelTable {
    static T: OnceLock<KernelTable> = OnceLock::new();
    T.get_or_init(|| KernelTable::build(KernelConfig::default()).unwrap())
}

fn sup_inner(a: &[f64], b: &[f64], grid: UniformGrid, fraction: f64) -> f64 {
    grid.inner_range(fraction).map(|j| (a[j] - b[j]).abs()).fold(0.0, f64::max)
}

fn graph(half: f64, n: usize, f: impl Fn(f64) -> f64) -> GridFunction {
    GridFunction::sample(UniformGrid::centered(half, n).unwrap(), FarField::linear(f64::NAN, f64::NAN), f).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn laplacian_of_half_radius_squared(a in -0.5f64..0.5, w in 0.3f64..1.5, c in -0.5f64..0.5) {
        let phi = graph(3.0, 2048, |x| a * (w * x).sin() + c * x + 0.1 * a * x * x);
        let geom = geometry_with(&phi, Stencil::Fourth).unwrap();
        let half_r2: Vec<f64> = geom.radius_sq().iter().map(|r| 0.5 * r).collect();
        let lap = geom.ds2(&half_r2);
        let s2: Vec<f64> = geom.arclength.iter().map(|s| s * s).collect();
        let d2s2 = geom.ds2(&s2);
        for i in geom.reliable(2) {
            let expected = 1.0 + geom.curvature[i] * geom.normal_coord[i];
            prop_assert!((lap[i] - expected).abs() < 1e-6, "node {i}: {} vs {expected}", lap[i]);
            prop_assert!((d2s2[i] - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_identities_are_exact(r in 0.1f64..10.0, d in 2usize..=4, seed in 0u64..1000) {
        let samples: Vec<Vec<f64>> = (0..8)
            .map(|k| (0..d).map(|c| ((seed + 7 * k + 3 * c as u64) as f64 * 0.7).sin() + 0.1).collect())
            .collect();
        let res = pei_residuals(&AnalyticSurface::Sphere { radius: r, dim: d }, &samples).unwrap();
        for m in res.sup() {
            prop_assert!(m <= 1e-12 * (1.0 + r * r), "{m}");
        }
    }

    #[test]
    fn corner_has_vanishing_d(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let phi = graph(20.0, 4096, |x| if x >= 0.0 { a * x } else { -b * x });
        let geom = geometry_with(&phi, Stencil::Fourth).unwrap();
        let d = d0_and_d(&geom).unwrap();
        let scale = 1.0 + 400.0 * (1.0 + a * a + b * b);
        prop_assert!(d.d.ys.iter().all(|v| v.abs() <= 1e-13 * scale));
    }

    #[test]
    fn growth_q_is_curvature_plus_d0(a in -0.5f64..0.5, w in 0.2f64..2.0, c in -1.0f64..1.0) {
        let phi = graph(6.0, 600, |x| a * (w * x).sin() + c);
        let geom = geometry_with(&phi, Stencil::Fourth).unwrap();
        let q = q_function(&geom, QVariant::Growth);
        let d = d0_and_d(&geom).unwrap();
        for i in 0..geom.len() {
            prop_assert!((q[i] - (geom.curvature[i].powi(2) + 0.25 * d.d0.ys[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn esp_passes_through_origin(a in -1.0f64..1.0, w in 0.2f64..2.0, c in -0.5f64..0.5) {
        let phi = graph(5.0, 512, |x| a * (w * x).sin() + c * x);
        let geom = geometry_with(&phi, Stencil::Fourth).unwrap();
        let e = esp_check(&geom, &phi.far, 0.0, 0.0, 1e-10).unwrap();
        prop_assert!(e.pass, "min margin {}", e.min_margin);
    }

    #[test]
    fn peg_bound_on_smooth_graphs(a in -1.0f64..1.0, w in 0.1f64..3.0, c in -0.2f64..0.2, d in -2.0f64..2.0) {
        let phi = graph(6.0, 2048, |x| a * (w * x).sin() + c * x * x + d);
        let geom = geometry_with(&phi, Stencil::Fourth).unwrap();
        prop_assert!(peg_bound_check(&geom).unwrap().ys.iter().all(|v| *v >= -1e-10));
    }
}

fn bump(grid: UniformGrid, amp: f64, center: f64, width: f64) -> GridFunction {
    GridFunction::sample(grid, FarField::constant(0.0, 0.0), |x| amp * (-((x - center) / width).powi(2)).exp()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn semigroup_property(amp in -1.0f64..1.0, c in -2.0f64..2.0, w in 0.5f64..2.0, t1 in 0.01f64..1.0, t2 in 0.01f64..1.0) {
        let grid = UniformGrid::centered(20.0, 2048).unwrap();
        let f = bump(grid, amp, c, w);
        let two = apply_semigroup(&apply_semigroup(&f, t1, 0, table()).unwrap(), t2, 0, table()).unwrap();
        let one = apply_semigroup(&f, t1 + t2, 0, table()).unwrap();
        prop_assert!(sup_inner(&two.ys, &one.ys, grid, 0.8) < 1e-7);
    }

    #[test]
    fn derivative_commutes(amp in -1.0f64..1.0, c in -2.0f64..2.0, w in 0.5f64..2.0, t in 0.01f64..2.0) {
        let grid = UniformGrid::centered(20.0, 2048).unwrap();
        let f = bump(grid, amp, c, w);
        let fx = GridFunction::sample(grid, FarField::constant(0.0, 0.0), |x| {
            let z = (x - c) / w;
            -2.0 * amp * z / w * (-z * z).exp()
        })
        .unwrap();
        let lhs = apply_semigroup(&f, t, 1, table()).unwrap();
        let rhs = apply_semigroup(&fx, t, 0, table()).unwrap();
        prop_assert!(sup_inner(&lhs.ys, &rhs.ys, grid, 0.8) < 1e-8);
    }

    #[test]
    fn initial_trace_estimate(amp in 0.1f64..1.0, w in 0.2f64..1.5, t in 1e-3f64..1.0) {
        let grid = UniformGrid::centered(20.0, 4096).unwrap();
        let u0 = GridFunction::sample(grid, FarField::constant(-amp, amp).with_tail_tol(1e-9), |x| amp * (x / w).tanh()).unwrap();
        let lip = amp / w;
        // ∫|η||g(η)| dη
        let etas: Vec<f64> = (0..=8000).map(|i| i as f64 * 0.005).collect();
        let weight: Vec<f64> = etas.iter().map(|&e| e * table().g(0, e).abs()).collect();
        let c = 2.0 * fd::simpson(&weight, 0.005);
        let u = apply_semigroup(&u0, t, 0, table()).unwrap();
        let dist = sup_inner(&u.ys, &u0.ys, grid, 0.8);
        prop_assert!(dist <= c * t.powf(0.25) * lip * (1.0 + 1e-6), "{dist} vs {}", c * t.powf(0.25) * lip);
    }

    #[test]
    fn parabolic_scaling(amp in -1.0f64..1.0, c in -1.0f64..1.0, w in 0.5f64..1.5, t in 0.05f64..1.0, double in any::<bool>()) {
        let sigma: f64 = if double { 2.0 } else { 0.5 };
        let grid = UniformGrid::centered(20.0, 4096).unwrap();
        let f = bump(grid, amp, c, w);
        let q = sigma.powf(0.25);
        let f_scaled = GridFunction::sample(grid, FarField::constant(0.0, 0.0), |x| amp * (-((q * x - c) / w).powi(2)).exp()).unwrap();
        let lhs = apply_semigroup(&f, t, 0, table()).unwrap();
        let rhs = apply_semigroup(&f_scaled, t / sigma, 0, table()).unwrap();
        for j in grid.inner_range(0.5) {
            let at = fd::interpolate(&lhs.ys, grid.x0, grid.h, q * grid.x(j)).unwrap();
            prop_assert!((at - rhs.ys[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn slope_march_conserves_mass(amp in -0.1f64..0.1, base in -0.1f64..0.1, w in 0.5f64..2.0) {
        let c = MarchConfig { half_width: 20.0, nodes: 1024, t_end: 0.1, ..MarchConfig::default() };
        let g = c.grid().unwrap();
        let v0 = GridFunction::sample(g, FarField::constant(base, base), |x| base + amp * (-(x / w).powi(2)).exp()).unwrap();
        let tr = derivative_march(&v0, &c).unwrap();
        let mass = |ys: &[f64]| ys.iter().map(|v| v - base).sum::<f64>() * g.h;
        prop_assert!((mass(&tr.last().state.ys) - mass(&v0.ys)).abs() < 1e-6);
        let s0 = v0.ys.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        prop_assert!(tr.last().state.ys.iter().all(|v| v.abs() <= 1.1 * s0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn picard_updates_contract(a in -0.1f64..0.1, b in -0.1f64..0.1) {
        prop_assume!((a + b).abs() > 1e-3);
        let cfg = SolverConfig { half_width: 30.0, nodes: 2048, ..SolverConfig::default() };
        let p = solve_similarity_profile(CornerData::new(a, b), cfg, table()).unwrap();
        let h = &p.residual_history;
        prop_assert!(h.windows(2).skip(1).all(|w| w[1] < w[0]), "{h:?}");
        let u = reconstruct_U(&p, 2.0, table()).unwrap();
        prop_assert!(u.slope_mismatch < 1e-6);
    }

    #[test]
    fn symmetric_corner_symmetries(a in 0.02f64..0.1) {
        let cfg = SolverConfig { half_width: 30.0, nodes: 2048, ..SolverConfig::default() };
        let p = solve_similarity_profile(CornerData::new(a, a), cfg, table()).unwrap();
        let n = p.psi.len();
        let o = p.psi.grid().origin_index().unwrap();
        for k in 1..n / 2 - 1 {
            prop_assert!((p.psi.ys[o + k] + p.psi.ys[o - k]).abs() < 1e-12);
        }
        let u1 = reconstruct_U(&p, 1.0, table()).unwrap();
        let u3 = reconstruct_U(&p, 3.0, table()).unwrap();
        prop_assert!(u1.u.ys[o].abs() > 1e-4);
        prop_assert!((u3.u.ys[o] - u1.u.ys[o] * 3f64.powf(0.25)).abs() < 1e-8);
        for k in 1..n / 4 {
            let even = (u1.u.ys[o + k] - u1.u.ys[o]) - (u1.u.ys[o - k] - u1.u.ys[o]);
            prop_assert!(even.abs() < 1e-10);
        }
    }
}
