use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use vortexlab::evolution::{random_band_limited, random_band_limited_scalar};
use vortexlab::field::ops::{
    curl, dealias, derivative, divergence, gradient, hessian, laplacian, solve_poisson, volume_mean,
};
use vortexlab::field::snapshot::Snapshot;
use vortexlab::field::{Grid, ScalarField, VectorField};

#[test]
fn taylor_green_product_mean() {
    let g = Grid::periodic(16).unwrap();
    let f = ScalarField::from_fn(&g, |x, y, z| (x.sin() * y.cos() * z.cos()).powi(2));
    assert_abs_diff_eq!(volume_mean(&f), 0.125, epsilon = 1e-15);
    assert_abs_diff_eq!(f.to_spectral().mean(), 0.125, epsilon = 1e-15);
}

#[test]
fn hessian_is_symmetric_and_traces_to_laplacian() {
    let g = Grid::periodic(16).unwrap();
    let f = random_band_limited_scalar(&g, 6, 3);
    let h = hessian(&f).to_physical();
    assert!(h.is_symmetric());
    let lap = laplacian(&f).to_physical();
    assert!((&h.trace() - &lap).max_abs() < 1e-12 * lap.max_abs());
}

#[test]
fn poisson_inverts_laplacian_on_random_data() {
    let g = Grid::periodic(16).unwrap();
    let f = random_band_limited_scalar(&g, 8, 21);
    let back = solve_poisson(&laplacian(&f)).unwrap();
    assert!((&back.to_physical() - &f.to_physical()).max_abs() < 1e-12);
    assert!(solve_poisson(&ScalarField::constant(&g, 1.0)).is_err());
}

#[test]
fn derivative_in_a_scaled_box() {
    let g = Grid::new(16, 4.0).unwrap();
    let k = 2.0 * std::f64::consts::PI / 4.0;
    let f = ScalarField::from_fn(&g, |_, _, z| (2.0 * k * z).sin());
    let exact = ScalarField::from_fn(&g, |_, _, z| 2.0 * k * (2.0 * k * z).cos());
    assert!((&derivative(&f, 2).to_physical() - &exact).max_abs() < 1e-12);
}

#[test]
fn dealias_is_a_projection() {
    let g = Grid::periodic(16).unwrap();
    let f = random_band_limited_scalar(&g, 8, 4);
    let once = dealias(&f);
    let twice = dealias(&once);
    assert_eq!(once.coefficients().into_owned(), twice.coefficients().into_owned());
}

#[test]
fn snapshot_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(8, 3.0).unwrap();
    let u = random_band_limited(&g, 3, 0.5, 1).unwrap().to_physical();
    let path = dir.path().join("u.vxl");
    Snapshot::from_vector(&u, 1.25, 0.01).save(&path).unwrap();
    let back = Snapshot::load(&path).unwrap();
    assert_eq!(back.time, 1.25);
    assert_eq!(back.viscosity, 0.01);
    let v = back.to_vector().unwrap();
    assert_eq!(v.grid().box_length(), 3.0);
    assert_eq!(v.sub(&u).max_abs(), 0.0);
}

fn grid_size() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![8usize, 16])
}

fn any_vector(n: usize, seed: u64) -> VectorField {
    let g = Grid::periodic(n).unwrap();
    VectorField::new([0, 1, 2].map(|i| random_band_limited_scalar(&g, n as i64 / 2, seed * 3 + i))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn div_curl_vanishes(n in grid_size(), seed in 0u64..1000) {
        let v = any_vector(n, seed);
        let d = divergence(&curl(&v)).max_abs();
        prop_assert!(d < 1e-12 * v.max_abs() * (n * n) as f64, "{d}");
    }

    #[test]
    fn curl_grad_vanishes(n in grid_size(), seed in 0u64..1000) {
        let g = Grid::periodic(n).unwrap();
        let f = random_band_limited_scalar(&g, n as i64 / 2, seed);
        let c = curl(&gradient(&f)).max_abs();
        prop_assert!(c < 1e-12 * f.max_abs() * (n * n) as f64, "{c}");
    }

    #[test]
    fn divergence_has_zero_mean(n in grid_size(), seed in 0u64..1000) {
        let v = any_vector(n, seed);
        prop_assert!(volume_mean(&divergence(&v).to_physical()).abs() < 1e-12 * v.max_abs() * n as f64);
    }

    #[test]
    fn laplacian_is_div_grad(n in grid_size(), seed in 0u64..1000) {
        let g = Grid::periodic(n).unwrap();
        let f = random_band_limited_scalar(&g, n as i64 / 2 + 1, seed);
        let a = laplacian(&f).to_spectral().coefficients().into_owned();
        let b = divergence(&gradient(&f)).to_spectral().coefficients().into_owned();
        let scale = a.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        let gap = a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()));
        prop_assert!(gap <= 1e-14 * scale, "{gap}");
    }

    #[test]
    fn round_trip_and_parseval(n in grid_size(), seed in 0u64..1000, shift in -3.0f64..3.0) {
        let g = Grid::periodic(n).unwrap();
        let f = random_band_limited_scalar(&g, n as i64 / 2 + 1, seed).to_physical();
        let f = &f + &ScalarField::constant(&g, shift);
        let back = f.to_spectral().to_physical();
        prop_assert!((&back - &f).max_abs() < 1e-12 * f.max_abs());
        let physical = f.rms().powi(2);
        prop_assert!((f.to_spectral().spectral_energy() - physical).abs() < 1e-12 * physical);
    }

    #[test]
    fn solenoidal_fields_stay_solenoidal_under_curl(seed in 0u64..1000) {
        let g = Grid::periodic(16).unwrap();
        let u = random_band_limited(&g, 5, 0.5, seed).unwrap();
        prop_assert!(divergence(&u).max_abs() < 1e-12);
        prop_assert!(divergence(&curl(&u)).max_abs() < 1e-12 * curl(&u).max_abs());
    }
}
