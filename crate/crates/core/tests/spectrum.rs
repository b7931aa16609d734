use transverse_nls::eigensolver::{spectrum_slice, unstable_eigenvalues, Label, SpectrumConfig, SpectrumSlice};
use transverse_nls::operators::{build_grid, Grid, Scheme};
use transverse_nls::specfun::ComplexValue;

fn grid(n: usize) -> Grid {
    build_grid(40.0, n, Scheme::FourierCollocation).unwrap()
}

fn localized(slice: &SpectrumSlice) -> Vec<ComplexValue> {
    slice.localized().collect()
}

fn contains(set: &[ComplexValue], z: ComplexValue, tol: f64) -> bool {
    set.iter().any(|w| (w - z).norm() < tol)
}

#[test]
fn stable_at_zero_transverse_wavenumber() {
    let u = unstable_eigenvalues(&grid(512), 0.0, &SpectrumConfig::default()).unwrap();
    assert!(u.is_empty(), "{u:?}");
}

#[test]
fn real_instability_at_small_rho() {
    let u = unstable_eigenvalues(&grid(512), 0.2, &SpectrumConfig::default()).unwrap();
    assert!(!u.is_empty());
    assert!(u[0].im.abs() < 1e-8 && u[0].re > 0.2, "{:?}", u[0]);
}

#[test]
fn complex_quartet_after_the_hopf_point() {
    let u = unstable_eigenvalues(&grid(512), 0.5, &SpectrumConfig::default()).unwrap();
    let complex: Vec<_> = u.iter().filter(|z| z.im.abs() > 1e-3).collect();
    assert_eq!(complex.len(), 2, "{u:?}");
    assert!((complex[0] - complex[1].conj()).norm() < 1e-8);
    // the real branch born at rho = 0 is still present and still dominant
    assert!(u[0].im.abs() < 1e-8 && u[0].re > complex[0].re);
}

#[test]
fn two_unstable_pairs_at_rho_three_with_quartet_closure() {
    let slice = spectrum_slice(&grid(512), 3.0, &SpectrumConfig::default()).unwrap();
    let unstable = slice.unstable(1e-6);
    assert_eq!(unstable.len(), 4, "{unstable:?}");
    for z in &unstable {
        assert!(contains(&unstable, z.conj(), 1e-6));
    }
    let all = localized(&slice);
    for &z in &all {
        for w in [-z, z.conj(), -z.conj()] {
            assert!(contains(&all, w, 1e-6), "{z} lacks partner {w}");
        }
    }
    for j in 0..slice.len() {
        if slice.labels[j] == Label::Localized {
            assert!(slice.residuals[j] <= 1e-8);
        }
    }
}

fn leading(slice: &SpectrumSlice) -> Vec<ComplexValue> {
    let mut u = slice.unstable(1e-6);
    u.retain(|z| z.im >= 0.0);
    u
}

/// Differences are fourth-order discretization error of the finite
/// difference scheme (h = 0.078); see the ledger for the measured values.
#[test]
fn schemes_agree_on_unstable_eigenvalues() {
    for (rho, tol) in [(0.2, 5e-5), (0.5, 5e-5), (2.0, 1e-5)] {
        let cfg = SpectrumConfig::default();
        let f = spectrum_slice(&grid(1024), rho, &cfg).unwrap();
        let d = spectrum_slice(&build_grid(40.0, 1024, Scheme::FiniteDifference4).unwrap(), rho, &cfg).unwrap();
        let (lf, ld) = (leading(&f), leading(&d));
        assert!(!lf.is_empty());
        for z in &lf {
            let nearest = ld.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < tol, "rho = {rho}: {z} off by {nearest:.2e}");
        }
    }
}

#[test]
fn localized_eigenvalues_ignore_the_box_size() {
    let cfg = SpectrumConfig::default();
    let a = spectrum_slice(&grid(512), 0.5, &cfg).unwrap();
    let b = spectrum_slice(&build_grid(50.0, 640, Scheme::FourierCollocation).unwrap(), 0.5, &cfg).unwrap();
    let (la, lb) = (localized(&a), localized(&b));
    assert!(!la.is_empty());
    for z in &la {
        assert!(contains(&lb, *z, 1e-6), "{z} moved");
    }
    let continuum = |s: &SpectrumSlice| -> Vec<ComplexValue> {
        (0..s.len()).filter(|&j| s.labels[j] == Label::ContinuumLike).map(|j| s.eigenvalues[j]).collect()
    };
    let (ca, cb) = (continuum(&a), continuum(&b));
    let moved = ca.iter().filter(|z| z.norm() < 5.0 && !contains(&cb, **z, 1e-6)).count();
    assert!(moved > 10, "only {moved} continuum-like eigenvalues moved");
}
