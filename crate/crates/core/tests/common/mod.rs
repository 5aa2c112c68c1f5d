//! Oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use std::f64::consts::PI;

use hhn_core::autodiff::{ParamStore, Tape, Tensor, Var};
use hhn_core::datagen::{generate_array, sample_rng, ArrayConfig, ArraySample, SingleConfig};
use hhn_core::em::{GridSpec, Placement, SphericalMap, VoxelDims, VoxelGrid};
use hhn_core::hyperinit::{InitScheme, InputStats};
use hhn_core::losses::{
    constraint_loss, constraint_loss_logits, ms_ssim, multiloss, obce, occupancy_ce,
    occupancy_ce_logits,
};
use hhn_core::nets::{array_terms, ArchConfig, ArrayModel, Head, HyperNet, Model, ModelSpec};
use hhn_core::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---- finite differences ----

const H: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub type Forward<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

/// Scalar objective: the op's output dotted with fixed random weights.
fn objective(
    f: &Forward<'_>,
    inputs: &[Tensor],
    weights: &mut Option<Tensor>,
    seed: u64,
) -> (Tape, Var, Vec<Var>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars).expect("forward");
    let shape = tape.shape(out).to_vec();
    let w = weights.get_or_insert_with(|| {
        let mut rng = sample_rng(seed, 99);
        let n = shape.iter().product();
        Tensor::new(
            shape.clone(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    });
    let wv = tape.constant(w.clone());
    let prod = tape.mul(out, wv).expect("weights");
    let loss = tape.sum(prod);
    (tape, loss, vars)
}

/// Relative error `‖g − g_fd‖ / √(‖g‖² + ‖g_fd‖²)` over every input.
pub fn gradient_error(f: &Forward<'_>, inputs: Vec<Tensor>, seed: u64) -> f64 {
    let mut weights = None;
    let (tape, loss, vars) = objective(f, &inputs, &mut weights, seed);
    let grads = tape.backward(loss).unwrap();
    let (mut diff, mut scale) = (0.0, 0.0);
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v);
        for i in 0..inputs[k].numel() {
            let eval = |delta: f64, weights: &mut Option<Tensor>| {
                let mut moved = inputs.clone();
                moved[k].data_mut()[i] += delta;
                let (tape, loss, _) = objective(f, &moved, weights, seed);
                tape.value(loss).item()
            };
            let fd = (eval(H, &mut weights) - eval(-H, &mut weights)) / (2.0 * H);
            let a = analytic.data()[i];
            diff += (a - fd) * (a - fd);
            scale += a * a + fd * fd;
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale.sqrt()
    }
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Values kept at least `gap` away from `kink`.
fn away_from(rng: &mut ChaCha8Rng, shape: &[usize], kink: f64, gap: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(gap..2.0);
            if rng.random_bool(0.5) {
                kink + m
            } else {
                kink - m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn dims(rng: &mut ChaCha8Rng, max: usize) -> usize {
    rng.random_range(1..=max)
}

fn binary(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_bool(0.5) as u8 as f64).collect()
}

/// Named gradient errors of one random instance.
pub type Errors = Vec<(&'static str, f64)>;

pub fn matmul(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let (m, k, n) = (dims(&mut rng, 4), dims(&mut rng, 4), dims(&mut rng, 4));
    let a = random(&mut rng, &[m, k], -1.0, 1.0);
    let b = random(&mut rng, &[k, n], -1.0, 1.0);
    vec![(
        "matmul",
        gradient_error(&|t, v| t.matmul(v[0], v[1]), vec![a, b], seed),
    )]
}

pub fn elementwise_binary(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let shape = [dims(&mut rng, 3), dims(&mut rng, 4)];
    let a = random(&mut rng, &shape, -1.0, 1.0);
    let b = random(&mut rng, &shape, 0.5, 2.0);
    let ab = || vec![a.clone(), b.clone()];
    vec![
        ("add", gradient_error(&|t, v| t.add(v[0], v[1]), ab(), seed)),
        ("sub", gradient_error(&|t, v| t.sub(v[0], v[1]), ab(), seed)),
        ("mul", gradient_error(&|t, v| t.mul(v[0], v[1]), ab(), seed)),
        ("div", gradient_error(&|t, v| t.div(v[0], v[1]), ab(), seed)),
    ]
}

pub fn broadcasts(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let (m, n) = (dims(&mut rng, 3), dims(&mut rng, 4));
    let x = random(&mut rng, &[m, n], -1.0, 1.0);
    let row = random(&mut rng, &[n], -1.0, 1.0);
    let s = random(&mut rng, &[1], -1.0, 1.0);
    let c = dims(&mut rng, 3);
    let img = random(&mut rng, &[c, m, n], -1.0, 1.0);
    let bias = random(&mut rng, &[c], -1.0, 1.0);
    vec![
        (
            "add_row",
            gradient_error(
                &|t, v| t.add_row(v[0], v[1]),
                vec![x.clone(), row.clone()],
                seed,
            ),
        ),
        (
            "mul_row",
            gradient_error(&|t, v| t.mul_row(v[0], v[1]), vec![x.clone(), row], seed),
        ),
        (
            "mul_scalar_var",
            gradient_error(&|t, v| t.mul_scalar_var(v[0], v[1]), vec![x, s], seed),
        ),
        (
            "add_channel",
            gradient_error(&|t, v| t.add_channel(v[0], v[1]), vec![img, bias], seed),
        ),
    ]
}

pub fn unary(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let shape = [dims(&mut rng, 3), dims(&mut rng, 4)];
    let x = random(&mut rng, &shape, -2.0, 2.0);
    let pos = random(&mut rng, &shape, 0.2, 3.0);
    let kinked = away_from(&mut rng, &shape, 0.0, 1e-3);
    let clamped = away_from(&mut rng, &shape, 0.5, 1e-3);
    let e = |f: &Forward<'_>, input: &Tensor| gradient_error(f, vec![input.clone()], seed);
    vec![
        ("scale", e(&|t, v| Ok(t.scale(v[0], -1.7)), &x)),
        ("neg", e(&|t, v| Ok(t.neg(v[0])), &x)),
        ("add_scalar", e(&|t, v| Ok(t.add_scalar(v[0], 0.3)), &x)),
        ("exp", e(&|t, v| Ok(t.exp(v[0])), &x)),
        ("sigmoid", e(&|t, v| Ok(t.sigmoid(v[0])), &x)),
        ("softplus", e(&|t, v| Ok(t.softplus(v[0])), &x)),
        ("sum", e(&|t, v| Ok(t.sum(v[0])), &x)),
        ("mean", e(&|t, v| Ok(t.mean(v[0])), &x)),
        ("log", e(&|t, v| t.log(v[0]), &pos)),
        ("elu", e(&|t, v| Ok(t.elu(v[0])), &kinked)),
        (
            "clamp",
            e(&|t, v| Ok(t.clamp(v[0], 0.5, f64::INFINITY)), &clamped),
        ),
    ]
}

pub fn max_unique(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let n = dims(&mut rng, 8) + 1;
    // distinct values spaced far beyond the finite-difference step
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
    for i in (1..n).rev() {
        data.swap(i, rng.random_range(0..=i));
    }
    vec![(
        "max",
        gradient_error(&|t, v| Ok(t.max(v[0])), vec![Tensor::vector(data)], seed),
    )]
}

pub fn conv_and_pool(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let (ci, co) = (dims(&mut rng, 2), dims(&mut rng, 2));
    let (h, w) = (dims(&mut rng, 3) + 2, dims(&mut rng, 3) + 2);
    let x = random(&mut rng, &[ci, h, w], -1.0, 1.0);
    let k = random(&mut rng, &[co, ci, 3, 3], -1.0, 1.0);
    vec![
        (
            "conv2d",
            gradient_error(&|t, v| t.conv2d(v[0], v[1]), vec![x.clone(), k], seed),
        ),
        (
            "avg_pool_2",
            gradient_error(&|t, v| t.avg_pool(v[0], 2, 2), vec![x.clone()], seed),
        ),
        (
            "avg_pool_3_1",
            gradient_error(&|t, v| t.avg_pool(v[0], 3, 1), vec![x], seed),
        ),
    ]
}

pub fn reshaping(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let (m, n) = (dims(&mut rng, 3), dims(&mut rng, 4));
    let x = random(&mut rng, &[m, n], -1.0, 1.0);
    let start = rng.random_range(0..m * n);
    let len = rng.random_range(1..=m * n - start);
    let rows = dims(&mut rng, 3);
    let y = random(&mut rng, &[rows, n], -1.0, 1.0);
    vec![
        (
            "reshape",
            gradient_error(&|t, v| t.reshape(v[0], &[n, m]), vec![x.clone()], seed),
        ),
        (
            "slice",
            gradient_error(
                &move |t, v| t.slice(v[0], start, len),
                vec![x.clone()],
                seed,
            ),
        ),
        (
            "concat",
            gradient_error(&|t, v| t.concat(&[v[0], v[1]]), vec![x, y], seed),
        ),
    ]
}

pub fn ms_ssim_both_arguments(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let side = 12 + rng.random_range(0..5);
    // pinned extremes in the reference keep the shared range fixed
    let mut reference = random(&mut rng, &[side, side], 0.1, 1.9);
    reference.data_mut()[0] = 0.0;
    reference.data_mut()[1] = 2.0;
    let free = random(&mut rng, &[side, side], 0.2, 1.8);
    let r1 = reference.clone();
    vec![
        (
            "ms_ssim_pred",
            gradient_error(
                &move |t, v| {
                    let r = t.constant(r1.clone());
                    ms_ssim(t, v[0], r)
                },
                vec![free.clone()],
                seed,
            ),
        ),
        (
            "ms_ssim_target",
            gradient_error(
                &move |t, v| {
                    let r = t.constant(reference.clone());
                    ms_ssim(t, r, v[0])
                },
                vec![free],
                seed,
            ),
        ),
    ]
}

pub fn multiloss_terms_and_weights(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let k = dims(&mut rng, 4);
    let losses = random(&mut rng, &[k], 0.0, 3.0);
    let alpha = random(&mut rng, &[k], -2.0, 2.0);
    let f = move |t: &mut Tape, v: &[Var]| {
        let terms: Vec<Var> = (0..k).map(|i| t.slice(v[0], i, 1)).collect::<Result<_>>()?;
        multiloss(t, &terms, v[1])
    };
    vec![("multiloss", gradient_error(&f, vec![losses, alpha], seed))]
}

pub fn occupancy_losses(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let n = dims(&mut rng, 12);
    let p = random(&mut rng, &[n], 0.05, 0.95);
    let z = random(&mut rng, &[n], -6.0, 6.0);
    let y = binary(&mut rng, n);
    let mut mask = binary(&mut rng, n);
    mask[0] = 1.0;
    let y1 = y.clone();
    vec![
        (
            "occupancy_ce",
            gradient_error(
                &move |t, v| occupancy_ce(t, v[0], &y1),
                vec![p.clone()],
                seed,
            ),
        ),
        (
            "occupancy_ce_logits",
            gradient_error(&move |t, v| occupancy_ce_logits(t, v[0], &y), vec![z], seed),
        ),
        (
            "obce",
            gradient_error(&move |t, v| obce(t, v[0], &mask), vec![p], seed),
        ),
    ]
}

pub fn constraint_losses(seed: u64) -> Errors {
    let mut rng = sample_rng(seed, 0);
    let (nz, ny, nx) = (dims(&mut rng, 3), dims(&mut rng, 3), dims(&mut rng, 3));
    let o = random(&mut rng, &[nz, ny, nx], 0.05, 0.95);
    let z = random(&mut rng, &[nz, ny, nx], -6.0, 6.0);
    let forbidden = binary(&mut rng, ny * nx);
    let f1 = forbidden.clone();
    vec![
        (
            "constraint",
            gradient_error(&move |t, v| constraint_loss(t, v[0], &f1), vec![o], seed),
        ),
        (
            "constraint_logits",
            gradient_error(
                &move |t, v| constraint_loss_logits(t, v[0], &forbidden),
                vec![z],
                seed,
            ),
        ),
    ]
}

/// Every op and loss group, for sweeping over seeds.
pub const GRADIENT_GROUPS: [fn(u64) -> Errors; 11] = [
    matmul,
    elementwise_binary,
    broadcasts,
    unary,
    max_unique,
    conv_and_pool,
    reshaping,
    ms_ssim_both_arguments,
    multiloss_terms_and_weights,
    occupancy_losses,
    constraint_losses,
];

// ---- micro networks ----

pub fn micro_arch() -> ArchConfig {
    ArchConfig {
        voxels: VoxelDims::new(8, 8, 2),
        sphere: GridSpec::new(8, 8),
        array: ArrayConfig::default(),
        primary_hidden: 4,
        primary_layers: 2,
        hyper_channels: 2,
        hyper_blocks: 2,
        hyper_hidden: 4,
        hyperhyper_channels: 2,
        hyperhyper_layers: 2,
        refine_channels: 2,
        refine_mix_channels: 4,
        refine_blocks: 1,
        sim_channels: 2,
        sim_blocks: 1,
    }
}

pub fn micro_data(n: usize) -> Vec<ArraySample> {
    let arch = micro_arch();
    let cfg = SingleConfig {
        voxels: arch.voxels,
        sphere: arch.sphere,
        ..SingleConfig::default()
    };
    generate_array(n, 5, &cfg, &arch.array).unwrap()
}

pub fn array_model(spec: &ModelSpec) -> (ArrayModel, ParamStore) {
    let (model, store) = spec.build().unwrap();
    let Model::Array(arr) = model else {
        panic!("not an array model")
    };
    (arr, store)
}

fn structure_loss(arr: &ArrayModel, store: &ParamStore, s: &ArraySample, idx: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false);
    let (loss_structure, _) = array_terms(arr, &mut tape, &bound, s, idx).unwrap();
    tape.value(loss_structure).item()
}

/// Relative error of ∂L_s/∂θ_q against central differences on sampled
/// coordinates of every q parameter, all layers of f generated.
pub fn hyperhyper_gradient_error(seed: u64) -> f64 {
    let arch = micro_arch();
    let data = micro_data(1);
    let n = HyperNet::new(
        &arch,
        Head::Array,
        InitScheme::Xavier,
        InputStats::default(),
    )
    .unwrap()
    .n_layers();
    let spec = ModelSpec::array(
        arch,
        InitScheme::HyperhyperFanin,
        InputStats::default(),
        (0..n).collect(),
        seed,
    );
    let (arr, store) = array_model(&spec);
    let idx: Vec<usize> = (0..arr.points.shape()[0]).step_by(7).collect();

    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, true);
    let (loss_structure, _) = array_terms(&arr, &mut tape, &bound, &data[0], &idx).unwrap();
    let mut grads = tape.backward(loss_structure).unwrap();
    let analytic = bound.collect(&mut grads);

    let hh = arr.hyperhyper.as_ref().unwrap();
    let mut hh_ids: Vec<_> = hh.trunk.iter().flat_map(|l| [l.weight, l.bias]).collect();
    hh_ids.extend([hh.last.weight, hh.last.bias]);
    let mut rng = sample_rng(seed, 1);
    let (mut diff, mut scale) = (0.0, 0.0);
    let h = 1e-5;
    for id in hh_ids {
        let len = store.get(id).numel();
        for _ in 0..6 {
            let i = rng.random_range(0..len);
            let mut moved = store.clone();
            moved.get_mut(id).data_mut()[i] += h;
            let up = structure_loss(&arr, &moved, &data[0], &idx);
            moved.get_mut(id).data_mut()[i] -= 2.0 * h;
            let down = structure_loss(&arr, &moved, &data[0], &idx);
            let fd = (up - down) / (2.0 * h);
            let a = analytic[id.0][i];
            diff += (a - fd) * (a - fd);
            scale += a * a + fd * fd;
        }
    }
    assert!(scale > 0.0, "no gradient reached the hyperhypernetwork");
    diff.sqrt() / scale.sqrt()
}

// ---- electromagnetics ----

pub fn quadrature(d: &SphericalMap) -> f64 {
    let g = d.grid();
    (0..g.n_theta)
        .map(|i| (0..g.n_phi).map(|j| d.get(i, j)).sum::<f64>() * g.cell_weight(i))
        .sum()
}

/// Per-cell phasor sum written with explicit cosines and sines.
pub fn naive_gain(patterns: &[SphericalMap], places: &[Placement]) -> Vec<f64> {
    let g = patterns[0].grid();
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.n_theta {
        for j in 0..g.n_phi {
            let (t, p) = (g.theta(i), g.phi(j));
            let (mut re, mut im) = (0.0, 0.0);
            for (u, place) in patterns.iter().zip(places) {
                let k = 2.0 * PI / place.wavelength;
                let r = place.position;
                let phase =
                    -k * (t.sin() * p.cos() * r[0] + t.sin() * p.sin() * r[1] + t.cos() * r[2]);
                re += u.get(i, j) * phase.cos();
                im += u.get(i, j) * phase.sin();
            }
            out.push((re * re + im * im).sqrt());
        }
    }
    out
}

/// `sin²θ · |Σ exp(−j k·r)|²` with each voxel center and phase written out.
pub fn naive_surrogate(v: &VoxelGrid, scale: [f64; 3], grid: GridSpec) -> Vec<f64> {
    let d = v.dims();
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            let (t, p) = (grid.theta(i), grid.phi(j));
            let k = [
                2.0 * PI * t.sin() * p.cos(),
                2.0 * PI * t.sin() * p.sin(),
                2.0 * PI * t.cos(),
            ];
            let (mut re, mut im) = (0.0, 0.0);
            for z in 0..d.nz {
                for y in 0..d.ny {
                    for x in 0..d.nx {
                        if v.get(x, y, z) < 0.5 {
                            continue;
                        }
                        let r = [
                            ((x as f64 + 0.5) / d.nx as f64 - 0.5) * scale[0],
                            ((y as f64 + 0.5) / d.ny as f64 - 0.5) * scale[1],
                            ((z as f64 + 0.5) / d.nz as f64 - 0.5) * scale[2],
                        ];
                        let phase = -(k[0] * r[0] + k[1] * r[1] + k[2] * r[2]);
                        re += phase.cos();
                        im += phase.sin();
                    }
                }
            }
            out.push(t.sin().powi(2) * (re * re + im * im));
        }
    }
    out
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ---- block selection ----

/// Exhaustive search with the same preference order: value, then smaller
/// total size, then the lexicographically first ascending layer list.
pub fn brute_force(entropies: &[f64], sizes: &[usize], cap: usize) -> Vec<usize> {
    let n = entropies.len();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for mask in 0u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let size: usize = set.iter().map(|&i| sizes[i]).sum();
        if size > cap {
            continue;
        }
        let mut value = 0.0;
        for &i in &set {
            value += entropies[i];
        }
        let better = match &best {
            None => true,
            Some((bv, bs, bset)) => {
                value > *bv || (value == *bv && (size < *bs || (size == *bs && set < *bset)))
            }
        };
        if better {
            best = Some((value, size, set));
        }
    }
    best.unwrap().2
}

// ---- metrics ----

fn box_mean(m: &[Vec<f64>], i: usize, j: usize, side: usize) -> f64 {
    let mut acc = 0.0;
    for r in &m[i..i + side] {
        for v in &r[j..j + side] {
            acc += v;
        }
    }
    acc / (side * side) as f64
}

fn halve(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (h, w) = (m.len() / 2, m[0].len() / 2);
    (0..h)
        .map(|i| (0..w).map(|j| box_mean(m, 2 * i, 2 * j, 2)).collect())
        .collect()
}

/// Three-scale SSIM with 3×3 box windows over valid positions, a dynamic
/// range shared by both maps, and per-scale floors of 1e-6.
pub fn naive_ms_ssim(a: &SphericalMap, b: &SphericalMap) -> f64 {
    let g = a.grid();
    let rows = |m: &SphericalMap| -> Vec<Vec<f64>> {
        (0..g.n_theta)
            .map(|i| (0..g.n_phi).map(|j| m.get(i, j)).collect())
            .collect()
    };
    let (mut x, mut y) = (rows(a), rows(b));
    let all = a.values().iter().chain(b.values());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
        (l.min(v), h.max(v))
    });
    let range = if hi > lo { hi - lo } else { 1.0 };
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let mut log_sum = 0.0;
    for scale in 0..3 {
        if scale > 0 {
            x = halve(&x);
            y = halve(&y);
        }
        let xx: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().map(|v| v * v).collect())
            .collect();
        let yy: Vec<Vec<f64>> = y
            .iter()
            .map(|r| r.iter().map(|v| v * v).collect())
            .collect();
        let xy: Vec<Vec<f64>> = x
            .iter()
            .zip(&y)
            .map(|(r, s)| r.iter().zip(s).map(|(u, v)| u * v).collect())
            .collect();
        let (h, w) = (x.len() - 2, x[0].len() - 2);
        let mut total = 0.0;
        for i in 0..h {
            for j in 0..w {
                let (mx, my) = (box_mean(&x, i, j, 3), box_mean(&y, i, j, 3));
                let vx = box_mean(&xx, i, j, 3) - mx * mx;
                let vy = box_mean(&yy, i, j, 3) - my * my;
                let cov = box_mean(&xy, i, j, 3) - mx * my;
                total += (2.0 * mx * my + c1) * (2.0 * cov + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
        log_sum += (total / (h * w) as f64).max(1e-6).ln();
    }
    (log_sum / 3.0).exp()
}

/// Exhaustive nearest-neighbor search: every index whose score is within
/// `tie` of the best.
pub fn best_matches(query: &SphericalMap, candidates: &[&SphericalMap], tie: f64) -> Vec<usize> {
    let scores: Vec<f64> = candidates.iter().map(|c| naive_ms_ssim(query, c)).collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..scores.len())
        .filter(|&i| scores[i] >= best - tie)
        .collect()
}
