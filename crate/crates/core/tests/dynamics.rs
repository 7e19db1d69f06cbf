use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lattice_sisyphus::adiabatic::{coefficients, diagonalize, Lattice};
use lattice_sisyphus::field::BeamConfig;
use lattice_sisyphus::langevin::{
    atom_rng, choose_timestep, jump_moments, run_ensemble, sample_kick, worker_pool, AtomState,
    Dynamics, Integrator, KickModel, SimParams, Trajectory,
};
use lattice_sisyphus::wells::{internal_lattice_constants, well_characterization};
use lattice_sisyphus::Transition;

fn lattice(depth: f64) -> Lattice {
    Lattice::new(BeamConfig::for_depth(Transition::cesium_d2(), -10.0, depth).unwrap()).unwrap()
}

/// Least-squares slope of `y` against its index.
fn slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        sxy += (i as f64 - xm) * (v - ym);
        sxx += (i as f64 - xm).powi(2);
    }
    sxy / sxx
}

#[test]
fn deterministic_motion_conserves_energy() {
    let l = lattice(1000.0);
    let dt = choose_timestep(&l, 1).unwrap().dt;
    let w = well_characterization(&l, 0.02).unwrap();
    let integrator = Integrator {
        lattice: &l,
        dt,
        dynamics: Dynamics::Deterministic,
        kicks: KickModel::default(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..5 {
        let dir = Vector3::from_fn(|_, _| rng.random::<f64>() - 0.5).normalize();
        let ke = 0.3 * w.barrier_z * rng.random::<f64>();
        let atom = AtomState {
            index: k,
            position: w.minimum,
            momentum: dir * ke.sqrt(),
            level: 0,
            rng: atom_rng(1, k),
        };
        let mut t = Trajectory::new(&l, atom);
        let e0 = t.energy();
        let s0 = t.shadow_energy(dt);
        let mut energies = Vec::with_capacity(10_000);
        let mut shadow_dev: f64 = 0.0;
        for _ in 0..10_000 {
            integrator.step(&mut t).unwrap();
            energies.push(t.energy());
            shadow_dev = shadow_dev.max((t.shadow_energy(dt) - s0).abs());
        }
        let drift = (slope(&energies) * 1e4 / e0).abs();
        assert!(drift < 1e-6, "secular drift {drift:.2e}");
        assert!(
            shadow_dev / s0.abs() < 1e-6,
            "shadow deviation {shadow_dev:.2e}"
        );
        assert_eq!(t.atom.level, 0);
    }
}

/// Draw `samples` kicks from level `n` with frozen coefficients and compare
/// the first two moments and the jump counts with their expectations.
fn check_frozen_moments(r: Vector3<f64>, n: usize, seed: u64) {
    let l = lattice(1000.0);
    let table = coefficients(&diagonalize(&l, &r), &l);
    let dt = choose_timestep(&l, 1).unwrap().dt;
    let model = KickModel::default();
    let limit = model.jump_limit.unwrap();
    let d = table.gamma.ncols();

    // mean kicks capped in norm; the rest of each channel's drift is applied
    // continuously, so the total drift is exactly Σ F dt
    let mut capped = vec![Vector3::zeros(); d];
    let mut leftover = Vector3::zeros();
    let mut diffusion = Matrix3::zeros();
    let mut p_jump = 0.0;
    let mut drift = Vector3::zeros();
    for m in (0..d).filter(|&m| m != n && table.gamma[(n, m)] > 0.0) {
        let g = table.gamma[(n, m)];
        let mu = table.force[n][m] / g;
        capped[m] = mu * (limit / mu.norm()).min(1.0);
        leftover += (table.force[n][m] - capped[m] * g) * dt;
        diffusion += table.diffusion[n][m];
        p_jump += g * dt;
        drift += table.force[n][m] * dt;
    }
    drift += table.force[n][n] * dt * (1.0 - p_jump);
    let mut mean = Vector3::zeros();
    let mut second = table.diffusion[n][n] * (2.0 * dt) * (1.0 - p_jump) + diffusion * (2.0 * dt);
    let stay = table.force[n][n] * dt + leftover;
    mean += stay * (1.0 - p_jump);
    second += stay * stay.transpose() * (1.0 - p_jump);
    for m in (0..d).filter(|&m| m != n && table.gamma[(n, m)] > 0.0) {
        let p = table.gamma[(n, m)] * dt;
        let k = capped[m] + leftover;
        mean += k * p;
        second += k * k.transpose() * p;
    }
    assert!((mean - drift).norm() < 1e-12 * (1.0 + drift.norm()));

    let samples = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s1 = Vector3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s4 = Matrix3::zeros();
    let mut counts = vec![0usize; d];
    for _ in 0..samples {
        let k = sample_kick(&table, n, dt, &model, &mut rng);
        let pp = k.momentum * k.momentum.transpose();
        s1 += k.momentum;
        s2 += pp;
        s4 += pp.component_mul(&pp);
        counts[k.level] += 1;
    }
    let ns = samples as f64;
    let m1 = s1 / ns;
    let m2 = s2 / ns;
    for i in 0..3 {
        let sd = ((m2[(i, i)] - m1[i] * m1[i]) / ns).sqrt();
        assert!(
            (m1[i] - mean[i]).abs() < 3.0 * sd,
            "mean {i}: {} vs {}",
            m1[i],
            mean[i]
        );
        for j in 0..3 {
            let sd = ((s4[(i, j)] / ns - m2[(i, j)].powi(2)) / ns).sqrt();
            assert!(
                (m2[(i, j)] - second[(i, j)]).abs() < 3.0 * sd,
                "second moment {i}{j}: {} vs {}",
                m2[(i, j)],
                second[(i, j)]
            );
        }
    }
    for m in (0..d).filter(|&m| m != n) {
        let p = table.gamma[(n, m)] * dt;
        let sd = (ns * p * (1.0 - p)).sqrt().max(1.0);
        assert!(
            (counts[m] as f64 - p * ns).abs() < 3.0 * sd,
            "jumps {n}->{m}: {} vs {:.1}",
            counts[m],
            p * ns
        );
    }
}

#[test]
fn frozen_coefficient_moments_near_a_site() {
    check_frozen_moments(Vector3::new(0.4, -0.3, 0.9), 0, 11);
}

#[test]
fn frozen_coefficient_moments_between_sites() {
    check_frozen_moments(Vector3::new(1.1, 0.3, 0.2), 1, 12);
}

/// Without a limit the jump kick carries the whole channel: `F/γ` and
/// `2D/γ`.
#[test]
fn unlimited_jumps_carry_the_full_channel_moments() {
    let l = lattice(1000.0);
    let table = coefficients(&diagonalize(&l, &Vector3::new(1.1, 0.3, 0.2)), &l);
    let (g, f, d) = (
        table.gamma[(0, 1)],
        table.force[0][1],
        table.diffusion[0][1],
    );
    let model = KickModel {
        jump_limit: None,
        ..KickModel::default()
    };
    let (mean, cov, f_left, d_left) = jump_moments(g, &f, &d, 1e-3, &model);
    assert!((mean - f / g).norm() < 1e-12 * mean.norm());
    assert!((cov - d * (2.0 / g)).norm() < 1e-12 * cov.norm());
    assert_eq!(f_left, Vector3::zeros());
    assert_eq!(d_left, Matrix3::zeros());
}

#[test]
fn potentials_are_lattice_periodic() {
    let l = lattice(800.0);
    let (a_z, a_xy) = internal_lattice_constants(l.config.theta);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let r = Vector3::from_fn(|_, _| 10.0 * rng.random::<f64>());
        let f = diagonalize(&l, &r);
        for shift in [
            Vector3::new(a_xy, 0.0, 0.0),
            Vector3::new(0.0, a_xy, 0.0),
            Vector3::new(0.0, 0.0, a_z),
            Vector3::new(a_xy, a_xy, 2.0 * a_z),
        ] {
            let g = diagonalize(&l, &(r + shift * 3.0));
            for m in 0..f.dim() {
                assert!((f.potentials[m] - g.potentials[m]).abs() < 1e-9 * f.potentials[0].abs());
            }
            let (gf, gg) = (f.gradient(0), g.gradient(0));
            assert!((gf - gg).norm() < 1e-7 * (1.0 + gf.norm()));
        }
    }
}

#[test]
fn ensemble_is_independent_of_worker_count() {
    let l = lattice(1000.0);
    let p = SimParams {
        n_atoms: 6,
        equilibration: 50.0,
        averaging: 50.0,
        snapshots: 2,
        seed: 3,
        ..Default::default()
    };
    let a = run_ensemble(&l, &p, &worker_pool(1).unwrap()).unwrap();
    let b = run_ensemble(&l, &p, &worker_pool(3).unwrap()).unwrap();
    assert_eq!(a.record, b.record);
    assert_eq!(a.snapshots, b.snapshots);
}

#[test]
fn steady_state_forgets_the_initial_temperature() {
    let l = lattice(1000.0);
    let pool = worker_pool(1).unwrap();
    let runs: Vec<_> = [1e-6, 10e-6]
        .iter()
        .map(|&t0| {
            let p = SimParams {
                n_atoms: 40,
                equilibration: 2000.0,
                averaging: 1000.0,
                snapshots: 1,
                initial_temperature: t0,
                seed: 8,
                ..Default::default()
            };
            run_ensemble(&l, &p, &pool).unwrap().record
        })
        .collect();
    let mean =
        |r: &lattice_sisyphus::langevin::TemperatureRecord| r.temperature.iter().sum::<f64>() / 3.0;
    let err = |r: &lattice_sisyphus::langevin::TemperatureRecord| {
        r.temperature_err.iter().map(|e| e * e).sum::<f64>().sqrt() / 3.0
    };
    let joint = (err(&runs[0]).powi(2) + err(&runs[1]).powi(2)).sqrt();
    assert!(
        (mean(&runs[0]) - mean(&runs[1])).abs() < 3.0 * joint,
        "{} vs {} (joint error {joint})",
        mean(&runs[0]),
        mean(&runs[1])
    );
}
