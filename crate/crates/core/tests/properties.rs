use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use lattice_sisyphus::angular::clebsch_gordan_doubled;
use lattice_sisyphus::config::RunConfig;
use lattice_sisyphus::thermometry::{
    gaussian_fit, linear_scaling_fit, project_profile, Binning, Measurement,
};

/// Doubled `(j1, j2, J, J', M)` with `J, J'` in the coupling range and `M`
/// allowed for both.
fn coupling() -> impl Strategy<Value = (i64, i64, i64, i64, i64)> {
    (0i64..=8, 0i64..=8)
        .prop_flat_map(|(a, b)| {
            let lo = (a - b).abs();
            let n = (a + b - lo) / 2 + 1;
            (Just(a), Just(b), 0..n, 0..n)
                .prop_map(move |(a, b, i, k)| (a, b, lo + 2 * i, lo + 2 * k))
        })
        .prop_flat_map(|(a, b, j, k)| {
            let top = j.min(k);
            (Just(a), Just(b), Just(j), Just(k), 0..=top)
                .prop_map(move |(a, b, j, k, i)| (a, b, j, k, -top + 2 * i))
        })
}

proptest! {
    #[test]
    fn clebsch_gordan_columns_are_orthonormal((a, b, j, k, m) in coupling()) {
        let mut sum = 0.0;
        for m1 in (-a..=a).step_by(2) {
            let m2 = m - m1;
            if m2.abs() > b {
                continue;
            }
            sum += clebsch_gordan_doubled(a, m1, b, m2, j, m).unwrap()
                * clebsch_gordan_doubled(a, m1, b, m2, k, m).unwrap();
        }
        let expected = if j == k { 1.0 } else { 0.0 };
        prop_assert!((sum - expected).abs() < 1e-12, "{sum} vs {expected}");
    }

    #[test]
    fn config_survives_serialization(
        seed in 0..=i64::MAX as u64,
        workers in 0usize..8,
        detunings in prop::collection::vec(-50.0f64..-1.0, 1..4),
        depths in prop::collection::vec(100.0f64..4000.0, 1..7),
        n_atoms in 1usize..1000,
        snapshots in 1usize..40,
        bins in 8usize..256,
        tau1 in 1.0f64..20.0,
        gravity in any::<bool>(),
    ) {
        let text = format!(
            "seed = {seed}\nworkers = {workers}\n[lattice]\ndetunings_Gamma = {detunings:?}\n\
             depths_Er = {depths:?}\n[simulation]\nn_atoms = {n_atoms}\nsnapshots = {snapshots}\n\
             [thermometry]\nbins = {bins}\ntau1_ms = {tau1}\ntau2_ms = {}\ngravity = {gravity}\n",
            tau1 + 20.0
        );
        let cfg = RunConfig::from_toml(&text).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn scaling_fit_ignores_point_order(
        points in prop::collection::vec((100.0f64..4000.0, 1e-6f64..1e-4, 1e-7f64..1e-5), 3..10),
        seed in any::<u64>(),
    ) {
        let pts: Vec<(f64, Measurement)> = points
            .iter()
            .map(|&(u, t, e)| (u, Measurement { value: t, error: e }))
            .collect();
        prop_assume!(pts.iter().any(|p| (p.0 - pts[0].0).abs() > 1.0));
        let mut shuffled = pts.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = linear_scaling_fit(&pts).unwrap();
        let b = linear_scaling_fit(&shuffled).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (x.abs() + y.abs()).max(1e-30);
        prop_assert!(close(a.slope, b.slope) && close(a.intercept, b.intercept));
        prop_assert!(close(a.slope_err, b.slope_err) && close(a.intercept_err, b.intercept_err));
    }

    #[test]
    fn histogram_keeps_every_atom(
        xs in prop::collection::vec(-1e-3f64..1e-3, 2..400),
        bins in 1usize..100,
        fov in prop::option::of((-2e-3f64..0.0, 1e-5f64..2e-3)),
    ) {
        prop_assume!(xs.iter().any(|&x| x != xs[0]));
        let positions: Vec<Vector3<f64>> = xs.iter().map(|&x| Vector3::new(x, 0.0, 0.0)).collect();
        let binning = Binning { bins, span: 5.0, field_of_view: fov };
        if let Ok(p) = project_profile(&positions, 0, &binning) {
            prop_assert_eq!(p.counts.iter().sum::<f64>() as usize + p.clipped, xs.len());
            prop_assert_eq!(p.counts.len(), bins);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fitted_width_is_insensitive_to_bin_halving(seed in any::<u64>(), sigma in 1e-5f64..1e-3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let positions: Vec<Vector3<f64>> = (0..200_000)
            .map(|_| Vector3::new(normal.sample(&mut rng), 0.0, 0.0))
            .collect();
        let fit = |bins| {
            let binning = Binning { bins, ..Default::default() };
            gaussian_fit(&project_profile(&positions, 0, &binning).unwrap()).unwrap().sigma
        };
        let (coarse, fine) = (fit(64), fit(128));
        prop_assert!((fine / coarse - 1.0).abs() < 5e-3, "{coarse} vs {fine}");
    }
}
