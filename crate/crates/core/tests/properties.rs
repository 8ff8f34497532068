use feelsim_core::channel::ChannelSpec;
use feelsim_core::data::{dirichlet_partition, gen_synthetic, heterogeneity, LabeledDataset, MixtureSpec};
use feelsim_core::model::{Batch, ModelSpec};
use feelsim_core::numerics::{finite_diff_grad, relative_error, RngStream};
use feelsim_core::topology::{build_graph, contraction_check, metropolis_weights, TopologyKind};
use proptest::prelude::*;

fn instance(seed: u64, features: usize, classes: usize, hidden: usize) -> (ModelSpec, LabeledDataset, Vec<f64>) {
    let mut rng = RngStream::new(seed, 99);
    let spec = if hidden == 0 {
        ModelSpec::logistic(features, classes).unwrap()
    } else {
        ModelSpec::mlp(features, hidden, classes).unwrap()
    };
    let m = 6;
    let x: Vec<f64> = (0..m * features).map(|_| rng.normal()).collect();
    let y: Vec<usize> = (0..m).map(|_| rng.below(classes)).collect();
    let w: Vec<f64> = (0..spec.param_dim()).map(|_| 0.5 * rng.normal()).collect();
    (spec, LabeledDataset::new(features, classes, x, y).unwrap(), w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grad_matches_finite_differences(seed in any::<u64>(), f in 1usize..5, c in 2usize..5, h in 0usize..4) {
        let (spec, ds, w) = instance(seed, f, c, h);
        let b = Batch::full(&ds).unwrap();
        let fd = finite_diff_grad(|p| spec.loss(p, &b).unwrap(), &w, 1e-5).unwrap();
        prop_assert!(relative_error(&spec.grad(&w, &b).unwrap(), &fd) < 1e-6);
    }

    #[test]
    fn loss_is_non_negative_and_shift_invariant(seed in any::<u64>(), f in 1usize..5, c in 2usize..5, shift in -50.0f64..50.0) {
        // Adding a constant to every output bias leaves the softmax unchanged.
        let (spec, ds, w) = instance(seed, f, c, 0);
        let b = Batch::full(&ds).unwrap();
        let base = spec.loss(&w, &b).unwrap();
        prop_assert!(base >= 0.0);
        let mut moved = w.clone();
        let (_, bias) = spec.output_layer();
        for k in bias {
            moved[k] += shift;
        }
        prop_assert!((spec.loss(&moved, &b).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn gmir_at_prior_is_plain_loss(seed in any::<u64>(), f in 1usize..5, c in 2usize..5, beta in 0.0f64..10.0) {
        let (spec, ds, w) = instance(seed, f, c, 0);
        let b = Batch::full(&ds).unwrap();
        prop_assert_eq!(spec.gmir_value(&w, &w, &b, beta).unwrap(), spec.loss(&w, &b).unwrap());
    }

    #[test]
    fn metropolis_invariants_on_random_graphs(seed in any::<u64>(), n in 2usize..30, p in 0.0f64..0.6) {
        let g = build_graph(TopologyKind::ErdosRenyi, n, p, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert!(g.is_connected());
        let m = metropolis_weights(&g).unwrap();
        let theta = m.theta();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| theta[(i, j)]).sum();
            prop_assert!((row - 1.0).abs() < 1e-9);
            for j in 0..n {
                prop_assert!(theta[(i, j)] >= 0.0);
                prop_assert_eq!(theta[(i, j)], theta[(j, i)]);
                if i != j && !g.has_edge(i, j) {
                    prop_assert_eq!(theta[(i, j)], 0.0);
                }
            }
        }
        prop_assert!(m.lambda() < 1.0);
        for row in contraction_check(&m, 6).unwrap() {
            prop_assert!(row.holds(1e-8));
        }
    }

    #[test]
    fn partitions_have_exact_sizes(seed in any::<u64>(), devices in 1usize..8, per in 1usize..40, alpha in 0.01f64..20.0) {
        let mix = MixtureSpec::on_sphere(4, 3, 1.0, 1.0, &mut RngStream::new(seed, 1)).unwrap();
        let src = gen_synthetic(&mix, 2 * devices * per, &[0.25; 4], &mut RngStream::new(seed, 2)).unwrap();
        let p = dirichlet_partition(&src, devices, alpha, per, &mut RngStream::new(seed, 3)).unwrap();
        prop_assert!(p.clients().iter().all(|c| c.len() == per));
        for d in heterogeneity(&p) {
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn channel_noise_ignores_the_signal(seed in any::<u64>(), scale in -5.0f64..5.0, snr in -10.0f64..60.0) {
        let ch = ChannelSpec::snr_db(snr).unwrap();
        let w: Vec<f64> = (0..16).map(|k| scale * k as f64).collect();
        let zero = vec![0.0; 16];
        let a = ch.transmit(&w, &mut RngStream::new(seed, 5));
        let b = ch.transmit(&zero, &mut RngStream::new(seed, 5));
        for k in 0..16 {
            prop_assert!(((a[k] - w[k]) - b[k]).abs() <= 1e-12 * (1.0 + w[k].abs()));
        }
    }
}
