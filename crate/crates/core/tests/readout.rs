use fluxleak::readout::{
    assignment_error_probability, bootstrap_probabilities, correct_counts, correct_joint, fit_readout_gaussians,
    label_pairs, BootstrapOptions, ErrorMatrix, FitOptions, Iq, SyntheticReadout,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bernoulli g → e transitions at rate p, labels known exactly.
fn bernoulli_pairs(n: usize, p: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0, usize::from(rng.random::<f64>() < p))).collect()
}

#[test]
fn bootstrap_matches_binomial_statistics() {
    let p = 0.3;
    let pairs = bernoulli_pairs(100_000, p, 3);
    let opts = BootstrapOptions {
        n_samples: 400,
        sample_size: 20_000,
        seed: 9,
    };
    let id = ErrorMatrix::identity(2).unwrap();
    let r = bootstrap_probabilities(&pairs, opts, &id, &id).unwrap();
    assert!((r.mean[1][0] - p).abs() < 0.01, "{}", r.mean[1][0]);
    let binomial = (p * (1.0 - p) / opts.sample_size as f64).sqrt();
    assert!((r.sd[1][0] / binomial - 1.0).abs() < 0.15, "{} vs {binomial}", r.sd[1][0]);
}

#[test]
fn default_bootstrap_is_1000_samples_of_20000() {
    let pairs = bernoulli_pairs(100_000, 0.05, 4);
    let id = ErrorMatrix::identity(2).unwrap();
    let r = bootstrap_probabilities(&pairs, BootstrapOptions::default(), &id, &id).unwrap();
    assert_eq!(r.options.n_samples, 1000);
    assert_eq!(r.options.sample_size, 20_000);
}

#[test]
fn device_a_final_readout_errors_are_removed() {
    // Final readout: P(e|g) = 2e-6, P(o|g) = P(o|e) = 6e-3.
    let e_final = ErrorMatrix::from_off_diagonal(3, &[(1, 0, 2e-6), (2, 0, 6e-3), (2, 1, 6e-3)]).unwrap();
    let e_init = ErrorMatrix::identity(2).unwrap();
    let truth = [[0.97, 0.04], [0.02, 0.93], [0.01, 0.03]];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut pick = |w: &mut dyn Iterator<Item = f64>| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (k, p) in w.enumerate() {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
        last
    };
    let mut pairs = Vec::new();
    for n in 0..100_000 {
        let i = n % 2;
        let f = pick(&mut (0..3).map(|x| truth[x][i]));
        let measured = pick(&mut (0..3).map(|x| e_final.get(x, f)));
        pairs.push((i, measured));
    }
    let opts = BootstrapOptions {
        n_samples: 300,
        sample_size: 20_000,
        seed: 1,
    };
    let r = bootstrap_probabilities(&pairs, opts, &e_init, &e_final).unwrap();
    for f in 0..3 {
        for i in 0..2 {
            let err = (r.mean[f][i] - truth[f][i]).abs();
            assert!(err < 3.0 * r.sd[f][i].max(1e-4), "P({f}|{i}): {} vs {}", r.mean[f][i], truth[f][i]);
        }
    }
}

#[test]
fn synthetic_end_to_end_recovers_generator() {
    let gen = SyntheticReadout {
        centers: vec![Iq::new(1.0, 2.0), Iq::new(3.5, 0.5), Iq::new(1.5, -2.5)],
        sigma: 0.45,
        prior: vec![0.5, 0.5, 0.0],
        transitions: vec![vec![0.96, 0.05, 0.0], vec![0.03, 0.90, 0.0], vec![0.01, 0.05, 1.0]],
    };
    let shots = gen.generate(60_000, 17).unwrap();
    let init = fit_readout_gaussians(&shots.table.initial, 2, FitOptions::default()).unwrap();
    let fin = fit_readout_gaussians(&shots.table.final_, 3, FitOptions::default()).unwrap();
    let pairs = label_pairs(&shots.table, &init, &fin).unwrap();
    let opts = BootstrapOptions {
        n_samples: 200,
        sample_size: 20_000,
        seed: 2,
    };
    let r = bootstrap_probabilities(&pairs, opts, &init.error_matrix().unwrap(), &fin.error_matrix().unwrap()).unwrap();
    for f in 0..3 {
        for i in 0..2 {
            let err = (r.mean[f][i] - gen.transitions[f][i]).abs();
            assert!(err < 2.0 * r.sd[f][i].max(1e-3), "P({f}|{i}): {} ± {}", r.mean[f][i], r.sd[f][i]);
        }
    }
}

fn stochastic_matrix(d: usize) -> impl Strategy<Value = ErrorMatrix> {
    proptest::collection::vec(proptest::collection::vec(0.0..0.15f64, d - 1), d).prop_map(move |cols| {
        let mut e = vec![vec![0.0; d]; d];
        for (y, col) in cols.iter().enumerate() {
            let mut k = 0;
            for x in 0..d {
                if x != y {
                    e[x][y] = col[k] / (d - 1) as f64;
                    k += 1;
                }
            }
            e[y][y] = 1.0 - (0..d).filter(|&x| x != y).map(|x| e[x][y]).sum::<f64>();
        }
        ErrorMatrix::new(e).unwrap()
    })
}

proptest! {
    #[test]
    fn error_probability_decreases_with_snr(a in 0.0..200.0f64, b in 0.0..200.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(assignment_error_probability(hi).unwrap() <= assignment_error_probability(lo).unwrap());
    }

    #[test]
    fn correction_inverts_the_error_matrix(e in stochastic_matrix(3), c in proptest::collection::vec(1.0..1e4f64, 3)) {
        let measured = e.apply(&c);
        let back = correct_counts(&measured, &e).unwrap();
        prop_assert!(!back.clipped);
        for k in 0..3 {
            prop_assert!((back.values[k] - c[k]).abs() < 1e-9 * c.iter().sum::<f64>());
        }
    }

    #[test]
    fn corrected_probabilities_are_normalized(
        e_i in stochastic_matrix(2),
        e_f in stochastic_matrix(3),
        m in proptest::collection::vec(proptest::collection::vec(0.0..500.0f64, 2), 3),
    ) {
        prop_assume!((0..2).all(|i| m.iter().map(|r| r[i]).sum::<f64>() > 1.0));
        let (p, _) = correct_joint(&m, &e_i, &e_f).unwrap();
        for i in 0..2 {
            let s: f64 = (0..3).map(|f| p[f][i]).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!((0..3).all(|f| (0.0..=1.0).contains(&p[f][i])));
        }
    }
}

#[test]
fn label_order_does_not_follow_the_majority_state() {
    use rand_distr::{Distribution, Normal};
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for share_e in [0.3, 0.5, 0.7] {
        let shots: Vec<Iq> = (0..20_000)
            .map(|_| {
                let i0 = if rng.random::<f64>() < share_e { 3.0 } else { 0.0 };
                Iq::new(i0 + noise.sample(&mut rng), noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_readout_gaussians(&shots, 2, FitOptions::default()).unwrap();
        assert!(fit.centers[0].i.abs() < 0.05 && (fit.centers[1].i - 3.0).abs() < 0.05, "{share_e}: {:?}", fit.centers);
    }
}
