use transverse_nls::eigensolver::{spectrum_slice, ExteriorPolicy, SpectrumConfig};
use transverse_nls::operators::{build_grid, Scheme};
use transverse_nls::semiclassical::{
    asymptotic_growth_rate, compare_routes, epsilon_to_rho, golden_rule_im_default, lyapunov_schmidt_solve,
    match_mode, semiclassical_grid, CompareConfig, LsConfig, ModeSelector, Route, SemiclassicalSolution,
};

fn solve(epsilon: f64, mode: ModeSelector) -> SemiclassicalSolution {
    let g = semiclassical_grid(epsilon, &mode, 20.0, Scheme::FourierCollocation).unwrap();
    lyapunov_schmidt_solve(epsilon, &mode, &g, &LsConfig::default()).unwrap()
}

#[test]
fn lyapunov_schmidt_invariants_across_epsilon() {
    for eps in [0.5, 0.4, 0.3, 0.2, 0.1] {
        for mode in ModeSelector::both() {
            let s = solve(eps, mode);
            assert!(s.curly_e.im > 0.0, "eps {eps} {}", mode.name());
            assert!(s.omega.re > 0.0 && s.omega.im > 0.0);
            assert!(s.orthogonality < 1e-10);
            assert!(s.residual < 1e-12);
            assert!(s.psi_bound_constant < 0.5, "{}", s.psi_bound_constant);
            assert!(s.omega_bound_constant < 0.5, "{}", s.omega_bound_constant);
            assert_eq!(s.growth_rate(), s.omega.im / (eps * eps));
            let lambda = s.lambda();
            assert!((lambda.im - s.omega.re / (eps * eps)).abs() < 1e-9 * lambda.im);
        }
    }
}

/// The full eigenproblem at rho = sqrt(1 + 1/eps^2) is an independent
/// oracle for the growth rate the fixed point produces.
#[test]
fn lyapunov_schmidt_matches_dense_spectrum() {
    let grid = build_grid(40.0, 512, Scheme::FourierCollocation).unwrap();
    let cfg = SpectrumConfig { exterior: ExteriorPolicy::Absorbing, ..SpectrumConfig::default() };
    for eps in [0.5, 0.4] {
        let slice = spectrum_slice(&grid, epsilon_to_rho(eps).unwrap(), &cfg).unwrap();
        let unstable = slice.unstable(1e-8);
        for mode in ModeSelector::both() {
            let s = solve(eps, mode);
            let dense = match_mode(&unstable, eps, &mode).expect("matching eigenvalue");
            assert!((dense.re / s.growth_rate() - 1.0).abs() < 1e-6, "eps {eps} {}", mode.name());
            assert!((dense.im - s.lambda().im).abs() < 1e-6 * dense.im);
        }
    }
}

#[test]
fn asymptotic_estimates_are_positive() {
    for eps in [0.6, 0.5, 0.3, 0.1, 0.05] {
        for mode in ModeSelector::both() {
            let a = asymptotic_growth_rate(eps, &mode, 0.6).unwrap();
            assert!(a.growth_rate_formula > 0.0 && a.growth_rate_quadrature > 0.0 && a.im_omega > 0.0);
            assert_eq!(a.im_omega, eps * eps * a.growth_rate_formula);
        }
    }
    let a = asymptotic_growth_rate(0.5, &ModeSelector::mode0(), 0.6).unwrap();
    assert!(a.growth_rate_formula > 1e-3 && a.growth_rate_formula < 1e-1);
}

#[test]
fn quadrature_to_formula_ratio_approaches_one() {
    let ratio = |eps: f64, mode: &ModeSelector, rederived: bool| {
        let a = asymptotic_growth_rate(eps, mode, 0.6).unwrap();
        let f = if rederived { a.growth_rate_formula_rederived } else { a.growth_rate_formula };
        a.growth_rate_quadrature / f
    };
    for (mode, rederived) in [(ModeSelector::mode0(), false), (ModeSelector::mode1(), true)] {
        let r: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&e| ratio(e, &mode, rederived)).collect();
        let gaps: Vec<f64> = r.iter().map(|v| (v - 1.0).abs()).collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{}: {r:?}", mode.name());
    }
}

#[test]
fn golden_rule_is_positive_for_both_modes() {
    for eps in [0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05] {
        for mode in ModeSelector::both() {
            assert!(golden_rule_im_default(eps, &mode).unwrap() > 0.0);
        }
    }
}

#[test]
fn comparison_table_layout() {
    let grid = build_grid(40.0, 512, Scheme::FourierCollocation).unwrap();
    let rows = compare_routes(&[0.5, 0.1], &grid, &CompareConfig::default());
    assert_eq!(rows.len(), 16);
    assert_eq!(rows[0].epsilon, 0.5);
    assert_eq!(rows[8].epsilon, 0.1);
    let routes: Vec<Route> = rows[..4].iter().map(|r| r.route).collect();
    assert_eq!(routes, Route::ALL.to_vec());
    for r in &rows {
        if r.epsilon == 0.1 && r.route == Route::Dense {
            assert_eq!(r.status, "unresolvable");
        } else {
            assert_eq!(r.status, "ok", "{r:?}");
            assert!(r.growth_rate > 0.0);
        }
    }
    let ls = rows.iter().find(|r| r.epsilon == 0.5 && r.route == Route::LyapunovSchmidt).unwrap();
    let dense = rows.iter().find(|r| r.epsilon == 0.5 && r.route == Route::Dense).unwrap();
    assert!((dense.growth_rate / ls.growth_rate - 1.0).abs() < 1e-6);
}
