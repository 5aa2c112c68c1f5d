mod common;

use hhn_core::blocksel::{
    entropy_score, histogram_entropy, init_rng, knapsack_select, trial_rng, LayerScore,
    LayeredModel, MicroMlp, SelectionBudget,
};
use hhn_core::datagen::sample_rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::brute_force;

fn scores(entropies: &[f64], sizes: &[usize]) -> Vec<LayerScore> {
    entropies
        .iter()
        .zip(sizes)
        .enumerate()
        .map(|(layer, (&entropy, &size))| LayerScore {
            layer,
            entropy,
            size,
            loss_min: 0.0,
            loss_max: 0.0,
        })
        .collect()
}

fn total_entropy(entropies: &[f64], set: &[usize]) -> f64 {
    let mut v = 0.0;
    for &i in set {
        v += entropies[i];
    }
    v
}

#[test]
fn knapsack_matches_exhaustive_search() {
    let mut rng = sample_rng(11, 0);
    for instance in 0..500 {
        let n = rng.random_range(1..=20);
        // half the instances draw from a coarse grid to force ties
        let coarse = instance % 2 == 0;
        let entropies: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    rng.random_range(0..6) as f64 * 0.5
                } else {
                    rng.random_range(0.0..7.0)
                }
            })
            .collect();
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(1..=40)).collect();
        let total: usize = sizes.iter().sum();
        let cap = rng.random_range(0..=total + 5);
        let got = knapsack_select(&scores(&entropies, &sizes), Some(cap));
        let want = brute_force(&entropies, &sizes, cap);
        assert_eq!(
            got, want,
            "instance {instance}: H {entropies:?} sizes {sizes:?} Q {cap}"
        );
    }
}

#[test]
fn knapsack_worked_example() {
    let s = scores(&[10.0, 40.0, 30.0], &[5, 4, 3]);
    assert_eq!(knapsack_select(&s, Some(7)), vec![1, 2]);
    assert_eq!(brute_force(&[10.0, 40.0, 30.0], &[5, 4, 3], 7), vec![1, 2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn larger_budget_never_lowers_total(
        entropies in prop::collection::vec(0.0f64..5.0, 1..12),
        seed in any::<u64>(),
        cap in 0usize..200,
        extra in 0usize..100,
    ) {
        let mut rng = sample_rng(seed, 0);
        let sizes: Vec<usize> = entropies.iter().map(|_| rng.random_range(1..=30)).collect();
        let s = scores(&entropies, &sizes);
        let small = knapsack_select(&s, Some(cap));
        let large = knapsack_select(&s, Some(cap + extra));
        prop_assert!(total_entropy(&entropies, &large) >= total_entropy(&entropies, &small));
        let used: usize = small.iter().map(|&i| sizes[i]).sum();
        prop_assert!(used <= cap);
    }

    #[test]
    fn entropy_is_bounded(values in prop::collection::vec(-1e3f64..1e3, 1..400), bins in 1usize..300) {
        let h = histogram_entropy(&values, bins).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (bins as f64).ln() + 1e-12);
    }
}

/// Plain forward pass of the bias-free tanh MLP, written out directly.
fn oracle_loss(m: &MicroMlp, probe: &[usize]) -> f64 {
    let [d0, d1, d2] = m.dims;
    let mut total = 0.0;
    for &s in probe {
        let x = &m.inputs[s];
        let mut hidden = vec![0.0; d1];
        for (o, h) in hidden.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..d0 {
                acc += m.weights[0][o * d0 + i] * x[i];
            }
            *h = acc.tanh();
        }
        let mut err = 0.0;
        for o in 0..d2 {
            let mut acc = 0.0;
            for i in 0..d1 {
                acc += m.weights[1][o * d1 + i] * hidden[i];
            }
            err += (acc - m.targets[s][o]).powi(2);
        }
        total += err / d2 as f64;
    }
    total / probe.len() as f64
}

/// Entropy from sorted values and explicit bin edges.
fn oracle_entropy(values: &[f64], bins: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    if lo == hi {
        return 0.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0f64; bins];
    for x in v {
        let mut b = 0;
        while b + 1 < bins && x >= lo + (b + 1) as f64 * width {
            b += 1;
        }
        counts[b] += 1.0;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| -(c / n) * (c / n).ln())
        .sum()
}

#[test]
fn micro_mlp_entropy_matches_oracle() {
    let budget = SelectionBudget {
        trials: 100,
        bins: 10,
        ..SelectionBudget::default()
    };
    let probe: Vec<usize> = (0..16).collect();
    for j in 0..2 {
        let mut model = MicroMlp::new([4, 2, 4], 16, 21);
        assert_eq!(model.layer_size(j), 8);
        let score = entropy_score(&mut model, j, &probe, &budget, 5).unwrap();

        let mut replica = MicroMlp::new([4, 2, 4], 16, 21);
        replica.init(&mut init_rng(5, j));
        let losses: Vec<f64> = (0..100)
            .map(|t| {
                replica.redraw(j, &mut trial_rng(5, j, t));
                oracle_loss(&replica, &probe)
            })
            .collect();
        let want = oracle_entropy(&losses, 10);
        assert!(
            (score.entropy - want).abs() < 1e-12,
            "layer {j}: {} vs {want}",
            score.entropy
        );
        assert!(score.entropy > 0.0 && score.entropy <= 10f64.ln());
    }
}

#[test]
fn entropy_is_seeded_and_order_free() {
    let budget = SelectionBudget {
        trials: 60,
        bins: 12,
        ..SelectionBudget::default()
    };
    let mut probe: Vec<usize> = (0..20).collect();
    let mut model = MicroMlp::new([4, 2, 4], 20, 2);
    let a = entropy_score(&mut model, 1, &probe, &budget, 9).unwrap();
    let b = entropy_score(&mut model, 1, &probe, &budget, 9).unwrap();
    assert_eq!(a, b);
    probe.shuffle(&mut sample_rng(1, 1));
    let c = entropy_score(&mut model, 1, &probe, &budget, 9).unwrap();
    assert_eq!(a, c);
    let other_seed = entropy_score(&mut model, 1, &probe, &budget, 10).unwrap();
    assert_ne!(a.entropy, other_seed.entropy);
}

#[test]
fn redrawing_everything_per_trial_differs() {
    let fixed = SelectionBudget {
        trials: 50,
        bins: 10,
        ..SelectionBudget::default()
    };
    let redraw = SelectionBudget {
        redraw_others: true,
        ..fixed.clone()
    };
    let probe: Vec<usize> = (0..8).collect();
    let mut model = MicroMlp::new([4, 2, 4], 8, 3);
    let a = entropy_score(&mut model, 0, &probe, &fixed, 1).unwrap();
    let b = entropy_score(&mut model, 0, &probe, &redraw, 1).unwrap();
    assert_ne!((a.loss_min, a.loss_max), (b.loss_min, b.loss_max));
}
