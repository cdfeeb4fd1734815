use sdym_core::frobenius::kappa_series;
use sdym_core::mapping::coefficient_diagnostics;
use sdym_core::profile::{write_profile_csv, PRECISION_R_MAX, PRECISION_TOL};
use sdym_core::properties::{classify_family, default_family_grid};
use sdym_core::{
    action_bracket, action_volume, charges, eval_mapped, eval_series, integrate_phi, mapping_coefficients, observe,
    ClassTag, PhiIntegrator,
};

fn precision_action(kappa: f64, m: f64) -> f64 {
    let prof = integrate_phi(m, kappa, 1e-6 * m, PRECISION_R_MAX * m, PRECISION_TOL).unwrap();
    observe(&prof).unwrap().action.unwrap()
}

#[test]
fn action_grows_monotonically_across_the_family() {
    let s: Vec<f64> = (0..=10).map(|j| precision_action(-3.0 + 0.1 * j as f64, 1.0)).collect();
    assert!(s.windows(2).all(|w| w[0] < w[1]), "{s:?}");
    assert!((s[0] - 1.0).abs() < 1e-6);
    assert!((s[10] - 2.0).abs() < 1e-6);
}

#[test]
fn action_does_not_depend_on_the_mass() {
    for kappa in [-2.8, -2.5, -2.2] {
        let a = precision_action(kappa, 1.0);
        let b = precision_action(kappa, 2.5);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn boundary_and_volume_actions_agree() {
    for j in 0..=10 {
        let kappa = -3.0 + 0.1 * j as f64;
        let prof = integrate_phi(1.0, kappa, 1e-6, PRECISION_R_MAX, PRECISION_TOL).unwrap();
        let boundary = observe(&prof).unwrap().action.unwrap();
        let volume = action_volume(&prof).unwrap();
        assert!((boundary - volume).abs() <= 1e-5, "kappa {kappa}: {boundary} vs {volume}");
    }
}

#[test]
fn nested_brackets() {
    let near = integrate_phi(1.0, -2.5, 1e-6, 1e4, 1e-12).unwrap();
    let (lo, hi) = action_bracket(&near, 1e4).unwrap();
    assert!((hi - lo - 4e-4).abs() < 1e-7);
    let far = precision_action(-2.5, 1.0);
    assert!(lo <= far && far <= hi);
}

#[test]
fn electric_charge_switches_off_at_the_monopole() {
    let q = |k: f64| charges(&integrate_phi(1.0, k, 1e-6, 1e4, 1e-12).unwrap()).unwrap();
    assert_eq!(q(-3.0), (1, 0.0));
    for k in [-2.999, -2.99, -2.9] {
        let (qm, qe) = q(k);
        assert_eq!(qm, 1);
        assert!((qe - 1.0).abs() < 1e-3, "kappa {k}: {qe}");
    }
}

#[test]
fn compactified_series_tracks_the_integrator() {
    for kappa in [-3.0, -2.75, -2.5, -2.25, -2.0] {
        let mapped = mapping_coefficients(1.0, kappa, 30000).unwrap();
        let prof = integrate_phi(1.0, kappa, 1e-6, 20.0, 1e-12).unwrap();
        let worst = (0..=360)
            .map(|j| 2.0 + 18.0 * j as f64 / 360.0)
            .map(|r| (eval_mapped(&mapped, r).unwrap().0 - prof.eval(r).unwrap().phi).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "kappa {kappa}: {worst:e}");
        assert!(!coefficient_diagnostics(&mapped).unwrap().unreliable);
    }
}

#[test]
fn compactified_series_matches_the_horizon_series() {
    for kappa in [-3.0, -2.7, -2.5, -2.2, -2.0] {
        let mapped = mapping_coefficients(1.0, kappa, 2000).unwrap();
        let series = kappa_series(1.0, kappa, 12).unwrap();
        for j in 0..=50 {
            let s = 0.05 * j as f64 / 50.0;
            let (a, da) = eval_mapped(&mapped, 2.0 + s).unwrap();
            let (b, db) = eval_series(&series, s);
            assert!((a - b).abs() <= 1e-10, "kappa {kappa} s {s}: {a} vs {b}");
            assert!((da - db).abs() <= 1e-8);
        }
    }
}

#[test]
fn p_minus_one_family_has_finite_action_on_the_window() {
    let integ = PhiIntegrator::new(1.0);
    let coeffs: Vec<f64> = (0..=10).map(|j| (-3.0 + 0.1 * j as f64) / 16.0).collect();
    let table = classify_family(&integ, -1, Some(&coeffs)).unwrap();
    assert_eq!(table.count(ClassTag::FiniteAction), 11);
}

#[test]
fn winding_zero_has_a_finite_action_band() {
    let integ = PhiIntegrator::new(1.0);
    let table = classify_family(&integ, 0, Some(&default_family_grid(1.0, 0, 25))).unwrap();
    assert!(table.count(ClassTag::FiniteAction) > 0);
    assert_eq!(table.errors(), 0);
}

#[test]
fn profile_csv_parses_back() {
    let prof = integrate_phi(1.0, -2.5, 1e-6, 100.0, 1e-12).unwrap();
    let mut buf = Vec::new();
    write_profile_csv(&mut buf, &prof, true).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,phi,dphi,alpha,lagrangian_density"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), prof.nodes().len());
    for (row, node) in rows.iter().zip(prof.nodes()) {
        assert_eq!(row[0], node.r);
        assert_eq!(row[1], node.phi);
        assert!(row[4] <= 0.0);
    }
}
