mod common;

use hhn_core::datagen::{
    element_gain, gen_array, generate_array, generate_single, read_dataset, sample_rng, split,
    surrogate_radiation, write_dataset, ArrayConfig, Dataset, DatasetKind, Manifest, Samples,
    SingleConfig, FORMAT_VERSION, MAX_ELEMENTS,
};
use hhn_core::em::{GridSpec, VoxelDims, VoxelGrid};
use proptest::prelude::*;
use rand::Rng;

use common::naive_surrogate;

fn small_cfg() -> SingleConfig {
    SingleConfig {
        voxels: VoxelDims::new(8, 8, 2),
        sphere: GridSpec::new(8, 8),
        ..SingleConfig::default()
    }
}

fn tiny_cfg() -> SingleConfig {
    SingleConfig {
        voxels: VoxelDims::new(4, 4, 1),
        sphere: GridSpec::new(4, 4),
        ..SingleConfig::default()
    }
}

fn random_grid(seed: u64, dims: VoxelDims) -> VoxelGrid {
    let mut rng = sample_rng(seed, 0);
    let mut v = VoxelGrid::zeros(dims);
    for x in v.data_mut() {
        *x = if rng.random_bool(0.3) { 1.0 } else { 0.0 };
    }
    v.data_mut()[0] = 1.0;
    v
}

#[test]
fn single_samples_are_binary_masked_and_scaled() {
    let cfg = small_cfg();
    for s in generate_single(100, 4, &cfg).unwrap() {
        assert!(s.structure.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(s.structure.count_on() > 0);
        assert!(s.mask.count_on() > 0);
        for (m, v) in s.mask.data().iter().zip(s.structure.data()) {
            assert!(*m <= *v, "mask voxel outside structure");
        }
        assert!(s.scale.iter().all(|&e| (0.1..=0.25).contains(&e)));
        assert!(s
            .pattern
            .values()
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn surrogate_matches_per_voxel_sum(seed in any::<u64>(), sx in 0.05f64..1.0, sy in 0.05f64..1.0, sz in 0.01f64..0.3) {
        let v = random_grid(seed, VoxelDims::new(5, 4, 3));
        let grid = GridSpec::new(7, 9);
        let fast = surrogate_radiation(&v, [sx, sy, sz], grid).unwrap();
        let want = naive_surrogate(&v, [sx, sy, sz], grid);
        for (a, b) in fast.values().iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn surrogate_ignores_where_the_metal_sits(seed in any::<u64>(), dx in 0usize..3, dy in 0usize..3) {
        // a 3×3 blob moved inside a 6×6 plate only picks up a global phase
        let dims = VoxelDims::new(6, 6, 1);
        let mut rng = sample_rng(seed, 1);
        let blob: Vec<bool> = (0..9).map(|_| rng.random_bool(0.5)).chain([true]).collect();
        let place = |ox: usize, oy: usize| {
            let mut v = VoxelGrid::zeros(dims);
            for i in 0..9 {
                if blob[i] || i == 4 {
                    v.set(ox + i % 3, oy + i / 3, 0, 1.0);
                }
            }
            v
        };
        let grid = GridSpec::new(6, 8);
        let a = surrogate_radiation(&place(0, 0), [0.6, 0.6, 0.1], grid).unwrap();
        let b = surrogate_radiation(&place(dx, dy), [0.6, 0.6, 0.1], grid).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-10 * x.abs().max(1.0));
        }
    }
}

#[test]
fn array_elements_are_distinct_and_count_is_uniform() {
    let cfg = tiny_cfg();
    let layout = ArrayConfig::default();
    let pool = generate_single(layout.pool_size, 1, &cfg).unwrap();
    let mut counts = [0usize; MAX_ELEMENTS];
    let draws = 60_000;
    for i in 0..draws {
        let s = gen_array(&mut sample_rng(2, i as u64), &pool, &layout).unwrap();
        let n = s.elements.len();
        counts[n - 1] += 1;
        if i < 10_000 {
            for (a, ea) in s.elements.iter().enumerate() {
                for eb in &s.elements[a + 1..] {
                    assert_ne!(ea.source, eb.source);
                    assert_ne!(ea.slot, eb.slot);
                }
            }
        }
    }
    let expected = draws as f64 / MAX_ELEMENTS as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 99.9% quantile of χ² with 5 degrees of freedom
    assert!(chi2 < 20.515, "χ² {chi2} for counts {counts:?}");
}

#[test]
fn stored_elements_reproduce_the_gain() {
    let cfg = tiny_cfg();
    let layout = ArrayConfig::default();
    for s in generate_array(30, 6, &cfg, &layout).unwrap() {
        let again = element_gain(&s.elements, &layout).unwrap();
        for (a, b) in again.values().iter().zip(s.gain.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        // cells outside occupied slots are forbidden, the rest permitted
        let forbidden = s.constraint.forbidden_count();
        let cells = cfg.voxels.nx * cfg.voxels.ny;
        assert_eq!(forbidden, (MAX_ELEMENTS - s.elements.len()) * cells);
    }
}

#[test]
fn split_is_seeded_disjoint_and_ninety_ten() {
    let (train, test) = split(1000, 0.9, 3).unwrap();
    assert_eq!((train.len(), test.len()), (900, 100));
    assert_eq!(split(1000, 0.9, 3).unwrap(), (train.clone(), test.clone()));
    assert_ne!(split(1000, 0.9, 4).unwrap().0, train);
    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..1000).collect::<Vec<_>>());
}

#[test]
fn generation_is_reproducible() {
    let cfg = tiny_cfg();
    let layout = ArrayConfig::default();
    assert_eq!(
        generate_single(5, 9, &cfg).unwrap(),
        generate_single(5, 9, &cfg).unwrap()
    );
    assert_ne!(
        generate_single(5, 9, &cfg).unwrap(),
        generate_single(5, 10, &cfg).unwrap()
    );
    assert_eq!(
        generate_array(5, 9, &cfg, &layout).unwrap(),
        generate_array(5, 9, &cfg, &layout).unwrap()
    );
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let cfg = small_cfg();
    let layout = ArrayConfig::default();
    let dir = tempfile::tempdir().unwrap();

    let singles = generate_single(12, 1, &cfg).unwrap();
    let (train, test) = split(12, 0.9, 1).unwrap();
    let ds = Dataset {
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            kind: DatasetKind::Single,
            seed: 1,
            single: cfg.clone(),
            array: None,
            count: 12,
            train,
            test,
        },
        samples: Samples::Single(singles),
    };
    write_dataset(&dir.path().join("single"), &ds).unwrap();
    assert_eq!(read_dataset(&dir.path().join("single")).unwrap(), ds);

    let arrays = generate_array(12, 2, &cfg, &layout).unwrap();
    let (train, test) = split(12, 0.9, 2).unwrap();
    let ds = Dataset {
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            kind: DatasetKind::Array,
            seed: 2,
            single: cfg,
            array: Some(layout),
            count: 12,
            train,
            test,
        },
        samples: Samples::Array(arrays),
    };
    write_dataset(&dir.path().join("array"), &ds).unwrap();
    assert_eq!(read_dataset(&dir.path().join("array")).unwrap(), ds);
}
