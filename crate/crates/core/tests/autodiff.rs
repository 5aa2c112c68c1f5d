use hhn_core::autodiff::{AdamConfig, AdamState, ParamStore, Tape, Tensor};
use hhn_core::datagen::sample_rng;
use proptest::prelude::*;
use rand::Rng;

fn random(seed: u64, shape: &[usize]) -> Tensor {
    let mut rng = sample_rng(seed, 0);
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let s: f64 = a.iter().chain(b).map(|x| x * x).sum();
    (d / s).sqrt()
}

/// Central differences of a scalar function of one tensor.
fn finite_diff(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    let h = 1e-5;
    (0..x.numel())
        .map(|i| {
            let mut up = x.clone();
            up.data_mut()[i] += h;
            let mut down = x.clone();
            down.data_mut()[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn matmul_gradient_5x7_by_7x3() {
    let a = random(1, &[5, 7]);
    let b = random(2, &[7, 3]);
    let w = random(3, &[5, 3]);
    let loss = |a: &Tensor, b: &Tensor| {
        let mut t = Tape::new();
        let (va, vb, vw) = (
            t.param(a.clone()),
            t.param(b.clone()),
            t.constant(w.clone()),
        );
        let p = t.matmul(va, vb).unwrap();
        let m = t.mul(p, vw).unwrap();
        let l = t.sum(m);
        (t, l, va, vb)
    };
    let (t, l, va, vb) = loss(&a, &b);
    let g = t.backward(l).unwrap();
    let fd_a = finite_diff(&a, |x| {
        let (t, l, ..) = loss(x, &b);
        t.value(l).item()
    });
    let fd_b = finite_diff(&b, |x| {
        let (t, l, ..) = loss(&a, x);
        t.value(l).item()
    });
    assert!(rel_err(g.wrt(va).data(), &fd_a) < 1e-6);
    assert!(rel_err(g.wrt(vb).data(), &fd_b) < 1e-6);
}

#[test]
fn sum_of_sigmoid_gradient() {
    let w = random(4, &[6, 5]);
    let x = random(5, &[5, 1]);
    let loss = |w: &Tensor| {
        let mut t = Tape::new();
        let vw = t.param(w.clone());
        let vx = t.constant(x.clone());
        let p = t.matmul(vw, vx).unwrap();
        let s = t.sigmoid(p);
        let l = t.sum(s);
        (t, l, vw)
    };
    let (t, l, vw) = loss(&w);
    let g = t.backward(l).unwrap();
    let fd = finite_diff(&w, |w| {
        let (t, l, _) = loss(w);
        t.value(l).item()
    });
    assert!(rel_err(g.wrt(vw).data(), &fd) < 1e-6);
}

/// Six nested loops over output channel, row, column, input channel and taps.
fn naive_conv(x: &Tensor, k: &Tensor) -> Vec<f64> {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let co = k.shape()[0];
    let mut out = vec![0.0; co * h * w];
    for o in 0..co {
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for i in 0..ci {
                    for dr in 0..3 {
                        for dc in 0..3 {
                            let (rr, cc) =
                                (r as isize + dr as isize - 1, c as isize + dc as isize - 1);
                            if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                                continue;
                            }
                            acc += k.data()[((o * ci + i) * 3 + dr) * 3 + dc]
                                * x.data()[(i * h + rr as usize) * w + cc as usize];
                        }
                    }
                }
                out[(o * h + r) * w + c] = acc;
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_naive_loops() {
    for seed in 0..10 {
        let x = random(seed, &[3, 7, 5]);
        let k = random(seed + 100, &[4, 3, 3, 3]);
        let mut t = Tape::new();
        let (vx, vk) = (t.constant(x.clone()), t.constant(k.clone()));
        let y = t.conv2d(vx, vk).unwrap();
        let want = naive_conv(&x, &k);
        let diff = t
            .value(y)
            .data()
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "seed {seed}: {diff:e}");
    }
}

#[test]
fn every_trainable_leaf_gets_a_gradient_of_its_shape() {
    let mut t = Tape::new();
    let a = t.param(random(1, &[2, 3]));
    let b = t.param(random(2, &[3, 4]));
    let unused = t.param(random(3, &[5]));
    let c = t.constant(random(4, &[2, 4]));
    let p = t.matmul(a, b).unwrap();
    let q = t.mul(p, c).unwrap();
    let e = t.elu(q);
    let l = t.mean(e);
    let g = t.backward(l).unwrap();
    for v in [a, b, unused] {
        assert_eq!(g.wrt(v).shape(), t.shape(v));
    }
    assert!(g.wrt(unused).data().iter().all(|&x| x == 0.0));
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut store = ParamStore::new();
        let w = store.add("w", random(7, &[4, 4]));
        let x = random(8, &[4, 2]);
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        let mut losses = Vec::new();
        for epoch in 0..20 {
            let mut t = Tape::new();
            let bound = store.bind(&mut t, true);
            let vx = t.constant(x.clone());
            let p = t.matmul(bound.var(w), vx).unwrap();
            let s = t.softplus(p);
            let l = t.mean(s);
            losses.push(t.value(l).item());
            let mut g = t.backward(l).unwrap();
            adam.step(&mut store, &bound.collect(&mut g), epoch)
                .unwrap();
        }
        losses
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a[19] < a[0]);
}

proptest! {
    #[test]
    fn mean_times_count_is_sum(data in prop::collection::vec(-1e3f64..1e3, 1..200)) {
        let n = data.len();
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(data));
        let m = t.mean(x);
        let s = t.sum(x);
        let (m, s) = (t.value(m).item(), t.value(s).item());
        prop_assert!((m * n as f64 - s).abs() <= 1e-12 * s.abs().max(1.0));
    }

    #[test]
    fn tensor_length_is_shape_product(shape in prop::collection::vec(1usize..5, 1..4)) {
        let n: usize = shape.iter().product();
        prop_assert!(Tensor::new(shape.clone(), vec![0.0; n]).is_ok());
        prop_assert!(Tensor::new(shape, vec![0.0; n + 1]).is_err());
    }
}
