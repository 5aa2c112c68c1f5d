use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Extents of a voxel grid: `nx × ny` in-plane, `nz` layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct VoxelDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl VoxelDims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }

    /// Inverse of [`index`](Self::index).
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.nx;
        let y = (idx / self.nx) % self.ny;
        (x, y, idx / (self.nx * self.ny))
    }

    /// Voxel center in box-normalized coordinates `[0, 1]³`.
    pub fn unit_center(&self, idx: usize) -> [f64; 3] {
        let (x, y, z) = self.coords(idx);
        [
            (x as f64 + 0.5) / self.nx as f64,
            (y as f64 + 0.5) / self.ny as f64,
            (z as f64 + 0.5) / self.nz as f64,
        ]
    }
}

/// Scalar field over a voxel grid, stored layer-major (`z`, then `y`, then `x`).
/// Used for occupancy, masks and predicted probabilities alike.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    dims: VoxelDims,
    data: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(dims: VoxelDims, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || data.len() != dims.len() {
            return Err(Error::Dimension(format!(
                "voxel grid {dims:?} with {} values",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: VoxelDims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn dims(&self) -> VoxelDims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    /// Thresholded copy: 1 where the value is at least 0.5.
    pub fn binarized(&self) -> Self {
        Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn count_on(&self) -> usize {
        self.data.iter().filter(|&&v| v >= 0.5).count()
    }

    /// `[nz, ny, nx]` tensor: layers become channels.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.dims.nz, self.dims.ny, self.dims.nx],
            self.data.clone(),
        )
        .expect("voxel dims are non-zero")
    }

    pub fn from_tensor(dims: VoxelDims, t: &Tensor) -> Result<Self> {
        Self::new(dims, t.data().to_vec())
    }
}

/// Binary XY plane of placement constraints; 1 marks a forbidden cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintPlane {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl ConstraintPlane {
    pub fn new(nx: usize, ny: usize, data: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || data.len() != nx * ny {
            return Err(Error::Dimension(format!(
                "constraint plane {nx}x{ny} with {} values",
                data.len()
            )));
        }
        if data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain(
                "constraint plane entries must be 0 or 1".into(),
            ));
        }
        Ok(Self { nx, ny, data })
    }

    pub fn permitted(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_forbidden(&self, x: usize, y: usize) -> bool {
        self.data[y * self.nx + x] == 1.0
    }

    pub fn set_forbidden(&mut self, x: usize, y: usize, forbidden: bool) {
        self.data[y * self.nx + x] = if forbidden { 1.0 } else { 0.0 };
    }

    pub fn forbidden_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1.0).count()
    }

    /// `[1, ny, nx]` single-channel image.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.ny, self.nx], self.data.clone()).expect("plane dims are non-zero")
    }
}
