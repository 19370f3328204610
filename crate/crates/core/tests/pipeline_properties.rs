//! Properties that span several modules: data generation feeding the
//! projection, the LPV-NN feeding the simulatable model, and persistence.

use proptest::prelude::*;
use rand::Rng as _;

use rolpv::datagen::{msd_chain, multisine, rk4_discretize, simulate_nl, MsdParams, NoiseSpec};
use rolpv::lpvnn::{build_delta_dataset, init_params, lpv_loss, train_lpvnn, LpvConfig, LpvNnParams};
use rolpv::nncore::{seeded, OptimizerConfig};
use rolpv::projection::{
    compute_pca_basis, projection_residual, reduce_dataset, train_projection, DegeneratePolicy,
    ProjectionConfig, ReducedDataset, ReducedRecord,
};
use rolpv::rolpvm::{model_from_json, model_to_json, RolpvModel};

fn random_reduced(seed: u64, n_z: usize, n_u: usize, n_y: usize, n: usize) -> ReducedDataset {
    let mut rng = seeded(seed);
    let mut v = |len: usize, s: f64| (0..len).map(|_| s * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let records = (0..n)
        .map(|_| ReducedRecord {
            z: v(n_z, 3.0),
            z_next: v(n_z, 3.0),
            u: v(n_u, 0.5),
            y: v(n_y, 20.0),
        })
        .collect();
    ReducedDataset { records, n_z, n_u, n_y }
}

fn random_params(dz: &ReducedDataset, n_p: usize, seed: u64) -> LpvNnParams {
    let dd = build_delta_dataset(dz, DegeneratePolicy::Error).unwrap();
    let cfg = LpvConfig {
        n_p,
        hidden: vec![5],
        optimizer: OptimizerConfig { seed, ..OptimizerConfig::default() },
        ..LpvConfig::default()
    };
    let mut p = init_params(&dd, &cfg).unwrap();
    let mut rng = seeded(seed ^ 0x5eed);
    let theta: Vec<f64> = (0..p.params().len()).map(|_| rng.random_range(-0.6..0.6)).collect();
    p.set_params(&theta).unwrap();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn denormalized_model_reproduces_scaled_network(
        seed in any::<u64>(),
        n_z in 1usize..4,
        n_u in 1usize..3,
        n_y in 1usize..3,
        n_p in 1usize..4,
    ) {
        let dz = random_reduced(seed, n_z, n_u, n_y, 30);
        let params = random_params(&dz, n_p, seed);
        let model = RolpvModel::from_lpvnn(&params, None).unwrap();
        let s = &params.scaling;
        for r in &dz.records {
            let zn: Vec<f64> = r.z.iter().zip(&s.z).map(|(a, b)| a * b).collect();
            let un: Vec<f64> = r.u.iter().zip(&s.u).map(|(a, b)| a * b).collect();
            let out = params.forward(&zn, &un).unwrap();
            let (z_next, y) = model.step(&r.z, &r.u).unwrap();
            for i in 0..n_z {
                let want = r.z[i] + out.z_delta[i] / s.z_delta[i];
                prop_assert!((z_next[i] - want).abs() <= 1e-10 * want.abs().max(1.0));
            }
            for i in 0..n_y {
                let want = out.y[i] / s.y[i];
                prop_assert!((y[i] - want).abs() <= 1e-10 * want.abs().max(1.0));
            }
            let p_raw = model.scheduling(&r.z, &r.u).unwrap();
            for (a, b) in p_raw.iter().zip(&out.p) {
                prop_assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn simulation_prefixes_agree(seed in any::<u64>(), cut in 1usize..40) {
        let dz = random_reduced(seed, 2, 1, 1, 20);
        let model = RolpvModel::from_lpvnn(&random_params(&dz, 2, seed), None).unwrap();
        let u: Vec<Vec<f64>> = (0..40).map(|k| vec![0.3 * (k as f64 * 0.4).sin()]).collect();
        let (full, _) = model.simulate_partial(&u, &[0.1, -0.2]);
        let (part, _) = model.simulate_partial(&u[..cut], &[0.1, -0.2]);
        let n = part.y.len();
        prop_assert_eq!(&full.y[..n], &part.y[..]);
        prop_assert_eq!(&full.z[..=n], &part.z[..]);
        prop_assert_eq!(&full.p[..n], &part.p[..]);
    }

    #[test]
    fn persistence_is_lossless(seed in any::<u64>()) {
        let dz = random_reduced(seed, 3, 1, 2, 25);
        let model = RolpvModel::from_lpvnn(&random_params(&dz, 3, seed), None).unwrap();
        let text = model_to_json(&model).unwrap();
        let back = model_from_json(&text).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(model_to_json(&back).unwrap(), text);
    }

    #[test]
    fn noiseless_msd_data_is_contiguous(n_masses in 1usize..6, amp in 0.1f64..1.0, steps in 2usize..60) {
        let sys = rk4_discretize(msd_chain(n_masses, MsdParams::default()).unwrap(), 0.2).unwrap();
        let u: Vec<Vec<f64>> = multisine(&[amp], &[0.7], &[0.0], 0.1, 0.2, steps).unwrap().into_iter().map(|v| vec![v]).collect();
        let d = simulate_nl(&sys, &u, &vec![0.0; 2 * n_masses], &NoiseSpec::none(sys_dims(n_masses))).unwrap();
        prop_assert!(d.records.windows(2).all(|w| w[0].x_next == w[1].x));
        prop_assert_eq!(d.len(), steps);
    }
}

fn sys_dims(n_masses: usize) -> rolpv::datagen::Dims {
    rolpv::datagen::Dims { n_x: 2 * n_masses, n_u: 1, n_y: 1 }
}

fn msd_data(n_masses: usize, steps: usize) -> rolpv::datagen::Dataset {
    let sys = rk4_discretize(msd_chain(n_masses, MsdParams::default()).unwrap(), 0.5).unwrap();
    let u: Vec<Vec<f64>> = multisine(&[0.4, 0.3], &[0.05, 0.21], &[0.0, 1.0], 0.3, 0.5, steps)
        .unwrap()
        .into_iter()
        .map(|v| vec![v])
        .collect();
    simulate_nl(&sys, &u, &vec![0.0; 2 * n_masses], &NoiseSpec::none(sys_dims(n_masses))).unwrap()
}

#[test]
fn linear_projection_attains_eckart_young_bound() {
    let d = msd_data(5, 400);
    let states = d.states();
    for n_z in 1..5 {
        let cfg = ProjectionConfig { n_z, linear_only: true, ..ProjectionConfig::default() };
        let (p, _) = train_projection(&states, &cfg).unwrap();
        let (_, s) = compute_pca_basis(&states, n_z).unwrap();
        let bound: f64 = s[n_z..].iter().map(|v| v * v).sum();
        let direct: f64 = states
            .iter()
            .map(|x| {
                let r = p.reconstruct(x).unwrap();
                x.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum();
        assert!((direct - bound).abs() <= 1e-8 * bound, "n_z {n_z}: {direct} vs {bound}");
        assert!((projection_residual(p.basis(), &states).unwrap() - bound).abs() <= 1e-8 * bound);
    }
}

#[test]
fn trained_model_loss_survives_denormalization_and_persistence() {
    let d = msd_data(4, 300);
    let cfg = ProjectionConfig { n_z: 3, linear_only: true, ..ProjectionConfig::default() };
    let (proj, _) = train_projection(&d.states(), &cfg).unwrap();
    let dz = reduce_dataset(&proj, &d).unwrap();
    let dd = build_delta_dataset(&dz, DegeneratePolicy::Warn).unwrap();
    let lcfg = LpvConfig {
        n_p: 2,
        hidden: vec![6],
        optimizer: OptimizerConfig { epochs: 150, ..OptimizerConfig::default() },
        ..LpvConfig::default()
    };
    let (params, history) = train_lpvnn(&dd, &lcfg).unwrap();
    assert_eq!(lpv_loss(&params, &dd, None).unwrap(), history.best_loss);
    assert!(history.best_loss <= history.losses[0]);

    let model = RolpvModel::from_lpvnn(&params, Some(proj)).unwrap();
    let back = model_from_json(&model_to_json(&model).unwrap()).unwrap();
    let loss = back.normalized_delta_loss(&dz, None).unwrap();
    assert!((loss - history.best_loss).abs() <= 1e-10 * history.best_loss.max(1.0), "{loss}");

    // one-step prediction from full states equals the reduced-space step
    for r in d.records.iter().take(20) {
        let z = back.encode(&r.x).unwrap();
        let (z_next, y) = back.step(&z, &r.u).unwrap();
        let (x_next, y2) = back.predict_one_step(&r.x, &r.u).unwrap();
        assert_eq!(y, y2);
        assert_eq!(back.decode(&z_next).unwrap(), x_next);
    }
}
