//! Invariants checked over random parameters.

use asc_moment::cli::{casorati_error, identity_suite, psi_casorati_constant, residual_points, RunConfig, Preset};
use asc_moment::eigenfun::{apply_l, apply_l_at, l_coefficients, EigenFamily};
use asc_moment::lattice::{inner_product, Grid, GridFunction, Point, QParams};
use asc_moment::qcore::{phi21, qpoch, theta, QBase};
use asc_moment::spectral::{atom_phi_on, build_measure, discrete_spectrum, resolvent_apply, MeasureExport, ATOM_TOL_MOMENTS};
use asc_moment::transform::{phi_inner_direct, phi_inner_l, HFunction};
use asc_moment::{Error, C64};
use proptest::prelude::*;
use std::f64::consts::PI;

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1e-300)
}

fn annulus() -> impl Strategy<Value = C64> {
    (0.3f64..3.0, -PI..PI).prop_map(|(r, t)| C64::from_polar(r, t))
}

/// Generic admissible parameters with s on the circle, away from the
/// degenerate a² ∈ q^ℤ.
fn params() -> impl Strategy<Value = QParams> {
    (0.25f64..0.65, 0.25f64..0.9, any::<bool>(), 0.2f64..PI - 0.2)
        .prop_map(|(q, a, neg, t)| QParams::new(q, if neg { -a } else { a }, C64::from_polar(1.0, t), 1.0).unwrap())
        .prop_filter("colliding atoms", |p| {
            let k = (p.a * p.a).ln() / p.q.get().ln();
            (k - k.round()).abs() > 1e-3
        })
}

/// Up to five random values at interior points of `grid`.
fn sparse(grid: &Grid, picks: &[(bool, i64, f64, f64)]) -> GridFunction {
    let mut f = GridFunction::zeros(grid);
    let (k, l, m) = (grid.k_max() as i64, grid.l_max() as i64, grid.m_max() as i64);
    for &(neg, n, re, im) in picks {
        let pt = if neg { Point::neg(n.rem_euclid(k / 2)) } else { Point::pos(n.rem_euclid(l / 2 + m / 2) - l / 2) };
        f.set(pt, C64::new(re, im)).unwrap();
    }
    f
}

fn picks() -> impl Strategy<Value = Vec<(bool, i64, f64, f64)>> {
    prop::collection::vec((any::<bool>(), 0i64..1000, -1.0f64..1.0, -1.0f64..1.0), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theta_shifts_by_q(x in annulus(), q in 0.1f64..0.9) {
        let q = QBase::new(q).unwrap();
        let lhs = theta(x * q.get(), q).unwrap();
        let rhs = -theta(x, q).unwrap() / x;
        prop_assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn theta_reflects(x in annulus(), q in 0.1f64..0.9) {
        let q = QBase::new(q).unwrap();
        prop_assert!(close(theta(q.get() / x, q).unwrap(), theta(x, q).unwrap(), 1e-12));
    }

    #[test]
    fn qpoch_splits(x in annulus(), q in 0.1f64..0.9, n in 0i64..12, m in 0i64..12) {
        let q = QBase::new(q).unwrap();
        let whole = qpoch(x, q, n + m).unwrap();
        let parts = qpoch(x, q, n).unwrap() * qpoch(x * q.pow(n), q, m).unwrap();
        prop_assert!(close(whole, parts, 1e-12));
    }

    #[test]
    fn phi21_solves_its_difference_equation(
        q in 0.2f64..0.6,
        abc in [(0.1f64..0.9, -PI..PI), (0.1f64..0.9, -PI..PI), (0.1f64..0.9, -PI..PI)],
        xr in 0.05f64..0.9, xt in -PI..PI,
    ) {
        let qb = QBase::new(q).unwrap();
        let [a, b, c] = abc.map(|(r, t)| C64::from_polar(r, t));
        let x = C64::from_polar(xr * q, xt);
        let y = |t: C64| phi21(a, b, c, qb, t).unwrap();
        let (y0, y1, y2) = (y(x / q), y(x), y(x * q));
        let terms = [y0, -(1.0 + c / q) * y1, c / q * y2, -x / q * y0, x / q * (a + b) * y1, -x / q * a * b * y2];
        let scale: f64 = terms.iter().map(|t| t.norm()).sum();
        prop_assert!(terms.iter().sum::<C64>().norm() <= 1e-12 * scale);
    }

    #[test]
    fn l_is_symmetric(p in params(), f in picks(), g in picks()) {
        let grid = Grid::default_for(p);
        let (f, g) = (sparse(&grid, &f), sparse(&grid, &g));
        let (lf, lg) = (apply_l(&f), apply_l(&g));
        let lhs = inner_product(&lf.value, &g).unwrap();
        let rhs = inner_product(&f, &lg.value).unwrap();
        let scale = inner_product(&lf.value, &lf.value).unwrap().re.sqrt() * inner_product(&g, &g).unwrap().re.sqrt();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale.max(1e-300));
    }

    // Ψ at large x carries a few 1e-12 of roundoff for q near 0.65, so the
    // bound is the one used for eigen-residuals
    #[test]
    fn resolvent_inverts_l_minus_mu(p in params(), f in picks(), r in 0.3f64..0.9, t in 0.2f64..PI - 0.2) {
        let grid = Grid::default_for(p);
        let f = sparse(&grid, &f);
        let lam = C64::from_polar(r, t);
        let u = resolvent_apply(&f, lam).unwrap();
        let mu = lam + 1.0 / lam;
        for pt in residual_points(&grid) {
            let c = l_coefficients(pt, &p);
            let here = u.value(pt).unwrap();
            let up = pt.up().map_or(C64::new(0.0, 0.0), |v| u.value(v).unwrap());
            let terms = (c.up * up).norm() + ((c.mid - mu) * here).norm() + (c.down * u.value(pt.down()).unwrap()).norm();
            let scale = terms + f.value(pt).unwrap().norm();
            let lu = apply_l_at(&u, pt).unwrap();
            let err = (lu - mu * here - f.value(pt).unwrap()).norm();
            prop_assert!(err <= 1e-10 * scale, "at {pt:?}: {err:e} vs scale {scale:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn casorati_is_constant(p in params(), t in 0.05f64..PI - 0.05) {
        let grid = Grid::default_for(p);
        let lam = C64::from_polar(1.0, t);
        let fam = EigenFamily::new(lam, &grid).unwrap();
        let pts = residual_points(&grid);
        let (e, judged, _) = casorati_error(&fam.psi_s, &fam.psi_sinv, psi_casorati_constant(&p), &pts);
        prop_assert!(judged > 0 && e <= 1e-9, "psi pair: {e:e} over {judged} points");
        let want = p.k_z() * fam.coeffs.c_minus * (1.0 / lam - lam);
        let (e, judged, _) = casorati_error(&fam.phi, &fam.psi_plus, want, &pts);
        prop_assert!(judged > 0 && e <= 1e-9, "phi/Psi: {e:e} over {judged} points");
    }

    #[test]
    fn truncated_inner_matches_boundary_form(p in params(), t1 in 0.1f64..PI - 0.1, t2 in 0.1f64..PI - 0.1, l in 2usize..10) {
        prop_assume!((t1 - t2).abs() > 0.05);
        let grid = Grid::default_for(p);
        let (l1, l2) = (C64::from_polar(1.0, t1), C64::from_polar(1.0, t2));
        let boundary = phi_inner_l(l1, l2, l, &grid).unwrap();
        let direct = phi_inner_direct(l1, l2, l, &grid).unwrap();
        prop_assert!((boundary - direct).norm() <= 1e-8 * boundary.norm().max(1.0));
    }

    #[test]
    fn atoms_are_orthogonal_with_dual_norms(p in params()) {
        // atoms near ±1 decay slowly towards +∞
        let g = Grid::default_for(p);
        let ds = discrete_spectrum(&p, ATOM_TOL_MOMENTS).unwrap();
        let total: f64 = ds.atoms.iter().map(|a| a.mass).sum();
        let big: Vec<_> = ds.atoms.iter().filter(|a| a.mass > 1e-4 * total && a.lambda.abs() <= 0.95).take(4).collect();
        // |φ_λ|² m falls off like λ^{2n} there
        let depth = big.iter().map(|a| (-32.0 / (2.0 * a.lambda.abs().ln())).ceil() as usize).max().unwrap_or(0);
        let grid = Grid::new(p, g.k_max(), depth.max(g.l_max()), g.m_max());
        let phis: Vec<GridFunction> = big.iter().map(|a| atom_phi_on(&grid, a.lambda).unwrap()).collect();
        let q = p.q.get();
        for i in 0..big.len() {
            let nii = inner_product(&phis[i], &phis[i]).unwrap().re;
            // the atom's mass is the reciprocal of its norm in the H pairing
            prop_assert!((big[i].mass * nii / (1.0 - q) - 1.0).abs() <= 1e-8, "norm of atom {}", big[i].lambda);
            for j in 0..i {
                let njj = inner_product(&phis[j], &phis[j]).unwrap().re;
                let c = inner_product(&phis[i], &phis[j]).unwrap().norm() / (nii * njj).sqrt();
                prop_assert!(c <= 1e-8, "atoms {} and {}: {c:e}", big[i].lambda, big[j].lambda);
            }
        }
    }

    #[test]
    fn continuous_against_atom_decays(p in params(), t in 0.1f64..PI - 0.1) {
        let g = Grid::default_for(p);
        let grid = Grid::new(p, g.k_max(), 100, g.m_max());
        let ds = discrete_spectrum(&p, ATOM_TOL_MOMENTS).unwrap();
        let atom = ds.atoms.iter().map(|a| a.lambda).max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
        prop_assume!(atom.abs() <= 0.9);
        let lam = C64::from_polar(1.0, t);
        let at = |l: usize| phi_inner_l(lam, C64::new(atom, 0.0), l, &grid).unwrap().norm();
        let peak = (1..96).map(at).fold(0.0, f64::max);
        prop_assert!(at(96) <= 1e-2 * peak, "{:e} against peak {peak:e}", at(96));
    }

    #[test]
    fn grid_function_json_round_trip(p in params(), f in picks()) {
        let grid = Grid::default_for(p);
        let f = sparse(&grid, &f);
        let back = GridFunction::from_json(&grid, &f.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.values(), f.values());
    }

    #[test]
    fn measure_exports_round_trip(p in params(), n_quad in 8usize..64) {
        let m = build_measure(&p, n_quad, ATOM_TOL_MOMENTS).unwrap();
        let parsed: MeasureExport = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(parsed, MeasureExport::from(&m));
        let rows = m.to_csv().unwrap().lines().count() - 1;
        prop_assert_eq!(rows, m.nodes.len() + m.atoms.atoms.len());
        let h = HFunction::sample(&m, |l| l * l + 1.0);
        prop_assert_eq!(HFunction::from_json(&h.to_json().unwrap()).unwrap(), h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn suites_are_deterministic(q in 0.2f64..0.8, seed in any::<u64>()) {
        let q = QBase::new(q).unwrap();
        prop_assert_eq!(identity_suite(q, seed), identity_suite(q, seed));
    }

    #[test]
    fn bad_s_is_a_config_error(q in 0.1f64..0.9, a in 0.1f64..0.95, r in 0.1f64..0.99, t in 0.1f64..3.0) {
        let bad = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(q.sqrt() * r, 0.0), C64::from_polar(1.0 + r, t)];
        for s in bad {
            prop_assert!(matches!(QParams::new(q, a, s, 1.0), Err(Error::Config(_))), "s = {s}");
            prop_assert!(matches!(RunConfig::new(q, a, s, 1.0, Preset::Generic), Err(Error::Config(_))), "s = {s}");
        }
    }
}
