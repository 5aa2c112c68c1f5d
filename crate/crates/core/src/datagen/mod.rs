//! Synthetic antenna data: random multi-layer polygon antennas, a
//! point-source surrogate for their radiation, and array samples with
//! constraint planes and array-gain targets.
//!
//! Every sample is drawn from its own ChaCha stream keyed by the run seed,
//! so datasets are reproducible and independent of generation order.

mod geometry;
mod store;
mod surrogate;

use std::collections::VecDeque;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::em::{
    array_gain, directivity, ConstraintPlane, GridSpec, Placement, SphericalMap, VoxelDims,
    VoxelGrid,
};
use crate::error::{Error, Result};

pub use geometry::{rasterize, star_polygon, Polygon, Shape};
pub use store::{
    read_dataset, write_dataset, Dataset, DatasetKind, Manifest, Samples, FORMAT_VERSION,
};
pub use surrogate::{metal_positions, surrogate_radiation};

/// Largest number of array elements, also the number of placement slots.
pub const MAX_ELEMENTS: usize = 6;

const POOL_STREAM: u64 = 1 << 40;
const ARRAY_STREAM: u64 = 1 << 41;

/// Generator for one sample: the run seed picks the key, `stream` the sequence.
pub fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ranges for single-antenna generation. Counts are inclusive `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleConfig {
    pub voxels: VoxelDims,
    pub sphere: GridSpec,
    /// Bounding-box extents, in wavelengths, drawn per axis from this range.
    pub scale_range: [f64; 2],
    pub polygons_per_layer: [usize; 2],
    pub vertices_per_polygon: [usize; 2],
    pub cavities_per_polygon: [usize; 2],
    /// Share of metal voxels forming the fixed-metal mask.
    pub mask_fraction: f64,
    pub max_retries: usize,
    /// Fixed feed location in box-normalized coordinates (metadata only).
    pub feed_point: [f64; 3],
    /// Fixed substrate permittivity (metadata only).
    pub dielectric_constant: f64,
}

impl Default for SingleConfig {
    fn default() -> Self {
        Self {
            voxels: VoxelDims::new(16, 16, 4),
            sphere: GridSpec::new(32, 32),
            scale_range: [0.1, 0.25],
            polygons_per_layer: [1, 3],
            vertices_per_polygon: [3, 7],
            cavities_per_polygon: [0, 2],
            mask_fraction: 0.1,
            max_retries: 64,
            feed_point: [0.5, 0.5, 0.0],
            dielectric_constant: 4.4,
        }
    }
}

impl SingleConfig {
    /// Full-size grids: 64×64×16 voxels and a 64×64 sphere.
    pub fn full_size() -> Self {
        Self {
            voxels: VoxelDims::new(64, 64, 16),
            sphere: GridSpec::new(64, 64),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("polygons per layer", self.polygons_per_layer),
            ("vertices per polygon", self.vertices_per_polygon),
            ("cavities per polygon", self.cavities_per_polygon),
        ];
        for (name, [lo, hi]) in ranges {
            if lo > hi {
                return Err(Error::Config(format!("{name}: empty range [{lo}, {hi}]")));
            }
        }
        if self.polygons_per_layer[0] == 0 || self.vertices_per_polygon[0] < 3 {
            return Err(Error::Config(
                "need at least one polygon of at least 3 vertices".into(),
            ));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!("scale range [{lo}, {hi}]")));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "mask fraction {}",
                self.mask_fraction
            )));
        }
        if self.voxels.is_empty() || self.sphere.is_empty() {
            return Err(Error::Config("grids must be non-empty".into()));
        }
        Ok(())
    }
}

/// Slot arrangement for arrays: a `slots_x × slots_y` grid of cells, each
/// cell the size of one element's voxel raster, with phase centers `pitch`
/// wavelengths apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub slots_x: usize,
    pub slots_y: usize,
    pub pitch: f64,
    /// Single antennas generated as the element pool.
    pub pool_size: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            slots_x: 3,
            slots_y: 2,
            pitch: 0.5,
            pool_size: 32,
        }
    }
}

impl ArrayConfig {
    pub fn n_slots(&self) -> usize {
        self.slots_x * self.slots_y
    }

    /// Phase center of `slot` (x-major), centered on the origin, z = 0.
    pub fn slot_center(&self, slot: usize) -> [f64; 3] {
        let (sx, sy) = (slot % self.slots_x, slot / self.slots_x);
        [
            (sx as f64 - (self.slots_x as f64 - 1.0) / 2.0) * self.pitch,
            (sy as f64 - (self.slots_y as f64 - 1.0) / 2.0) * self.pitch,
            0.0,
        ]
    }

    /// Voxel extents of the whole array given one element's extents.
    pub fn composite_dims(&self, element: VoxelDims) -> VoxelDims {
        VoxelDims::new(
            element.nx * self.slots_x,
            element.ny * self.slots_y,
            element.nz,
        )
    }

    /// Lower-left voxel of `slot`'s cell.
    pub fn slot_origin(&self, slot: usize, element: VoxelDims) -> (usize, usize) {
        (
            (slot % self.slots_x) * element.nx,
            (slot / self.slots_x) * element.ny,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slots() != MAX_ELEMENTS {
            return Err(Error::Config(format!(
                "array layout needs {MAX_ELEMENTS} slots, got {}x{}",
                self.slots_x, self.slots_y
            )));
        }
        if !(self.pitch > 0.0) {
            return Err(Error::Config(format!("slot pitch {}", self.pitch)));
        }
        if self.pool_size < MAX_ELEMENTS {
            return Err(Error::Config(format!(
                "element pool of {} is smaller than {MAX_ELEMENTS}",
                self.pool_size
            )));
        }
        Ok(())
    }
}

/// One generated antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct AntennaSample {
    pub structure: VoxelGrid,
    /// Fixed-metal constraint, a connected subset of `structure`.
    pub mask: VoxelGrid,
    /// Bounding-box extents in wavelengths.
    pub scale: [f64; 3],
    pub pattern: SphericalMap,
    pub directivity: SphericalMap,
}

/// One element of an [`ArraySample`]; carries everything needed to
/// recompute the array gain.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayElement {
    /// Index into the element pool the sample was drawn from.
    pub source: usize,
    pub slot: usize,
    pub structure: VoxelGrid,
    pub scale: [f64; 3],
    pub pattern: SphericalMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArraySample {
    pub elements: Vec<ArrayElement>,
    /// Elements placed into their slot cells on the composite raster.
    pub structure: VoxelGrid,
    pub constraint: ConstraintPlane,
    pub gain: SphericalMap,
    /// Extents of the whole array box in wavelengths.
    pub scale: [f64; 3],
}

fn uniform_count(rng: &mut impl Rng, [lo, hi]: [usize; 2]) -> usize {
    rng.random_range(lo..=hi)
}

fn random_shape(rng: &mut impl Rng, cfg: &SingleConfig) -> Shape {
    let center = [rng.random_range(0.25..0.75), rng.random_range(0.25..0.75)];
    let radius = rng.random_range(0.15..0.45);
    let n = uniform_count(rng, cfg.vertices_per_polygon);
    let outer = star_polygon(rng, center, radius, n);
    let n_cav = uniform_count(rng, cfg.cavities_per_polygon);
    // cavity extent stays below half the outer radius, inside the star's kernel
    let cavities = (0..n_cav)
        .map(|_| {
            let off = 0.1 * radius;
            let c = [
                center[0] + rng.random_range(-off..=off),
                center[1] + rng.random_range(-off..=off),
            ];
            let r = radius * rng.random_range(0.15..0.35);
            let n = uniform_count(rng, cfg.vertices_per_polygon);
            star_polygon(rng, c, r, n)
        })
        .collect();
    Shape { outer, cavities }
}

/// One metal layer with at least one cell; zero-area draws are redrawn.
fn random_layer(rng: &mut impl Rng, cfg: &SingleConfig) -> Result<Vec<bool>> {
    let (nx, ny) = (cfg.voxels.nx, cfg.voxels.ny);
    for _ in 0..cfg.max_retries.max(1) {
        let shapes: Vec<Shape> = (0..uniform_count(rng, cfg.polygons_per_layer))
            .map(|_| random_shape(rng, cfg))
            .filter(|s| s.outer.area() > 0.0)
            .collect();
        let raster = rasterize(&shapes, nx, ny);
        if raster.iter().any(|&b| b) {
            return Ok(raster);
        }
    }
    Err(Error::Degenerate(format!(
        "no non-empty layer after {} draws",
        cfg.max_retries
    )))
}

/// Breadth-first, 6-connected region of `structure` grown from a random
/// metal voxel until it holds `fraction` of the metal (at least one voxel).
pub fn connected_mask(
    rng: &mut impl Rng,
    structure: &VoxelGrid,
    fraction: f64,
) -> Result<VoxelGrid> {
    let d = structure.dims();
    let metal: Vec<usize> = (0..d.len())
        .filter(|&i| structure.data()[i] >= 0.5)
        .collect();
    if metal.is_empty() {
        return Err(Error::Degenerate("mask of an empty structure".into()));
    }
    let target = ((metal.len() as f64 * fraction).ceil() as usize).max(1);
    let seed = metal[rng.random_range(0..metal.len())];
    let mut mask = VoxelGrid::zeros(d);
    let mut queue = VecDeque::from([seed]);
    mask.data_mut()[seed] = 1.0;
    let mut taken = 1;
    while let Some(i) = queue.pop_front() {
        if taken >= target {
            break;
        }
        let (x, y, z) = d.coords(i);
        let (x, y, z) = (x as isize, y as isize, z as isize);
        for (dx, dy, dz) in [
            (-1, 0, 0),
            (1, 0, 0),
            (0, -1, 0),
            (0, 1, 0),
            (0, 0, -1),
            (0, 0, 1),
        ] {
            let (a, b, c) = (x + dx, y + dy, z + dz);
            if a < 0
                || b < 0
                || c < 0
                || a >= d.nx as isize
                || b >= d.ny as isize
                || c >= d.nz as isize
            {
                continue;
            }
            let j = d.index(a as usize, b as usize, c as usize);
            if structure.data()[j] >= 0.5 && mask.data()[j] == 0.0 && taken < target {
                mask.data_mut()[j] = 1.0;
                taken += 1;
                queue.push_back(j);
            }
        }
    }
    Ok(mask)
}

/// Draws one antenna: a random subset of layers, each the union of random
/// star polygons minus their cavities; the mask, surrogate pattern and
/// directivity follow.
pub fn gen_single(rng: &mut impl Rng, cfg: &SingleConfig) -> Result<AntennaSample> {
    cfg.validate()?;
    let d = cfg.voxels;
    let n_layers = rng.random_range(1..=d.nz);
    let layers = sample_indices(rng, d.nz, n_layers).into_vec();
    let mut structure = VoxelGrid::zeros(d);
    for z in layers {
        let raster = random_layer(rng, cfg)?;
        for (cell, &on) in raster.iter().enumerate() {
            if on {
                structure.set(cell % d.nx, cell / d.nx, z, 1.0);
            }
        }
    }
    let mask = connected_mask(rng, &structure, cfg.mask_fraction)?;
    let [lo, hi] = cfg.scale_range;
    let scale = [
        rng.random_range(lo..=hi),
        rng.random_range(lo..=hi),
        rng.random_range(lo..=hi),
    ];
    let pattern = surrogate_radiation(&structure, scale, cfg.sphere)?;
    let directivity = directivity(&pattern)?;
    Ok(AntennaSample {
        structure,
        mask,
        scale,
        pattern,
        directivity,
    })
}

/// Array gain of stored elements at their slot centers.
pub fn element_gain(elements: &[ArrayElement], layout: &ArrayConfig) -> Result<SphericalMap> {
    let patterns: Vec<SphericalMap> = elements.iter().map(|e| e.pattern.clone()).collect();
    let places: Vec<Placement> = elements
        .iter()
        .map(|e| Placement::at(layout.slot_center(e.slot)))
        .collect();
    array_gain(&patterns, &places)
}

/// Composite raster of `elements` placed into their slot cells.
pub fn compose_structure(
    elements: &[ArrayElement],
    layout: &ArrayConfig,
    element_dims: VoxelDims,
) -> Result<VoxelGrid> {
    let dims = layout.composite_dims(element_dims);
    let mut out = VoxelGrid::zeros(dims);
    for e in elements {
        if e.structure.dims() != element_dims {
            return Err(Error::Dimension(
                "array elements on different voxel grids".into(),
            ));
        }
        let (x0, y0) = layout.slot_origin(e.slot, element_dims);
        for z in 0..element_dims.nz {
            for y in 0..element_dims.ny {
                for x in 0..element_dims.nx {
                    out.set(x0 + x, y0 + y, z, e.structure.get(x, y, z));
                }
            }
        }
    }
    Ok(out)
}

/// Constraint plane forbidding every cell not hosting one of `slots`.
pub fn slot_constraint(
    slots: &[usize],
    layout: &ArrayConfig,
    element_dims: VoxelDims,
) -> ConstraintPlane {
    let dims = layout.composite_dims(element_dims);
    let mut plane = ConstraintPlane::permitted(dims.nx, dims.ny);
    for slot in 0..layout.n_slots() {
        if slots.contains(&slot) {
            continue;
        }
        let (x0, y0) = layout.slot_origin(slot, element_dims);
        for y in y0..y0 + element_dims.ny {
            for x in x0..x0 + element_dims.nx {
                plane.set_forbidden(x, y, true);
            }
        }
    }
    plane
}

/// Draws an array of `U{1..6}` distinct pool elements in distinct slots.
pub fn gen_array(
    rng: &mut impl Rng,
    pool: &[AntennaSample],
    layout: &ArrayConfig,
) -> Result<ArraySample> {
    layout.validate()?;
    if pool.len() < MAX_ELEMENTS {
        return Err(Error::Contract(format!(
            "element pool of {} is smaller than {MAX_ELEMENTS}",
            pool.len()
        )));
    }
    let element_dims = pool[0].structure.dims();
    let n = rng.random_range(1..=MAX_ELEMENTS);
    let sources = sample_indices(rng, pool.len(), n).into_vec();
    let slots = sample_indices(rng, layout.n_slots(), n).into_vec();
    let elements: Vec<ArrayElement> = sources
        .iter()
        .zip(&slots)
        .map(|(&source, &slot)| ArrayElement {
            source,
            slot,
            structure: pool[source].structure.clone(),
            scale: pool[source].scale,
            pattern: pool[source].pattern.clone(),
        })
        .collect();
    let structure = compose_structure(&elements, layout, element_dims)?;
    let constraint = slot_constraint(&slots, layout, element_dims);
    let gain = element_gain(&elements, layout)?;
    let depth = elements.iter().map(|e| e.scale[2]).fold(0.0, f64::max);
    Ok(ArraySample {
        elements,
        structure,
        constraint,
        gain,
        scale: [
            layout.slots_x as f64 * layout.pitch,
            layout.slots_y as f64 * layout.pitch,
            depth,
        ],
    })
}

/// `n` single antennas, sample `i` drawn from stream `i`.
pub fn generate_single(n: usize, seed: u64, cfg: &SingleConfig) -> Result<Vec<AntennaSample>> {
    (0..n as u64)
        .map(|i| gen_single(&mut sample_rng(seed, i), cfg))
        .collect()
}

/// `n` array samples over a freshly generated element pool.
pub fn generate_array(
    n: usize,
    seed: u64,
    cfg: &SingleConfig,
    layout: &ArrayConfig,
) -> Result<Vec<ArraySample>> {
    layout.validate()?;
    let pool = (0..layout.pool_size as u64)
        .map(|i| gen_single(&mut sample_rng(seed, POOL_STREAM + i), cfg))
        .collect::<Result<Vec<_>>>()?;
    (0..n as u64)
        .map(|i| gen_array(&mut sample_rng(seed, ARRAY_STREAM + i), &pool, layout))
        .collect()
}

/// Seeded shuffle split into `(train, test)` index lists; the train share is
/// `round(ratio · n)`.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(Error::Contract(format!(
            "cannot split {n} samples; need at least 10"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Contract(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * ratio).round() as usize).clamp(1, n - 1);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}
