use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AntennaSample, ArrayConfig, ArrayElement, ArraySample, SingleConfig};
use crate::em::{ConstraintPlane, GridSpec, SphericalMap, VoxelDims, VoxelGrid};
use crate::error::{Error, Result};

const RECORD_MAGIC: &[u8; 8] = b"HHNREC01";
pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Single,
    Array,
}

/// Dataset description stored as `manifest.json` beside the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub seed: u64,
    pub single: SingleConfig,
    pub array: Option<ArrayConfig>,
    pub count: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Samples {
    Single(Vec<AntennaSample>),
    Array(Vec<ArraySample>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Single(s) => s.len(),
            Samples::Array(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Samples,
}

impl Dataset {
    pub fn singles(&self) -> Result<&[AntennaSample]> {
        match &self.samples {
            Samples::Single(s) => Ok(s),
            Samples::Array(_) => Err(Error::Config("expected a single-antenna dataset".into())),
        }
    }

    pub fn arrays(&self) -> Result<&[ArraySample]> {
        match &self.samples {
            Samples::Array(s) => Ok(s),
            Samples::Single(_) => Err(Error::Config("expected an array dataset".into())),
        }
    }
}

fn record_name(i: usize) -> String {
    format!("record_{i:05}.bin")
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn bits(&mut self, vs: &[f64]) {
        self.0.extend(vs.iter().map(|&v| (v >= 0.5) as u8));
    }
    fn voxels(&mut self, g: &VoxelGrid) {
        let d = g.dims();
        self.u32(d.nx);
        self.u32(d.ny);
        self.u32(d.nz);
        self.bits(g.data());
    }
    fn sphere(&mut self, m: &SphericalMap) {
        self.u32(m.grid().n_theta);
        self.u32(m.grid().n_phi);
        self.f64s(m.values());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("record truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn bits(&mut self, n: usize) -> Result<Vec<f64>> {
        self.take(n)?
            .iter()
            .map(|&b| match b {
                0 => Ok(0.0),
                1 => Ok(1.0),
                _ => Err(Error::Format(format!("non-binary voxel byte {b}"))),
            })
            .collect()
    }
    fn scale(&mut self) -> Result<[f64; 3]> {
        let v = self.f64s(3)?;
        Ok([v[0], v[1], v[2]])
    }
    fn voxels(&mut self) -> Result<VoxelGrid> {
        let d = VoxelDims::new(self.u32()?, self.u32()?, self.u32()?);
        let data = self.bits(d.len())?;
        VoxelGrid::new(d, data)
    }
    fn sphere(&mut self) -> Result<SphericalMap> {
        let g = GridSpec::new(self.u32()?, self.u32()?);
        let values = self.f64s(g.len())?;
        SphericalMap::new(g, values)
    }
}

fn header(kind: DatasetKind) -> Writer {
    let mut w = Writer(RECORD_MAGIC.to_vec());
    w.u32(FORMAT_VERSION as usize);
    w.u8(match kind {
        DatasetKind::Single => 0,
        DatasetKind::Array => 1,
    });
    w
}

pub(crate) fn encode_single(s: &AntennaSample) -> Vec<u8> {
    let mut w = header(DatasetKind::Single);
    w.voxels(&s.structure);
    w.voxels(&s.mask);
    w.f64s(&s.scale);
    w.sphere(&s.pattern);
    w.sphere(&s.directivity);
    w.0
}

pub(crate) fn encode_array(a: &ArraySample) -> Vec<u8> {
    let mut w = header(DatasetKind::Array);
    w.u32(a.elements.len());
    for e in &a.elements {
        w.u32(e.source);
        w.u32(e.slot);
        w.voxels(&e.structure);
        w.f64s(&e.scale);
        w.sphere(&e.pattern);
    }
    w.voxels(&a.structure);
    w.u32(a.constraint.nx());
    w.u32(a.constraint.ny());
    w.bits(a.constraint.data());
    w.sphere(&a.gain);
    w.f64s(&a.scale);
    w.0
}

fn open_record(buf: &[u8], expect: DatasetKind) -> Result<Reader<'_>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != RECORD_MAGIC {
        return Err(Error::Format("bad record magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Format(format!(
            "unsupported record version {version}"
        )));
    }
    let kind = match r.u8()? {
        0 => DatasetKind::Single,
        1 => DatasetKind::Array,
        k => return Err(Error::Format(format!("unknown record kind {k}"))),
    };
    if kind != expect {
        return Err(Error::Format(format!(
            "expected {expect:?} record, found {kind:?}"
        )));
    }
    Ok(r)
}

fn finish(r: &Reader<'_>) -> Result<()> {
    if r.pos != r.buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes in record",
            r.buf.len() - r.pos
        )));
    }
    Ok(())
}

pub(crate) fn decode_single(buf: &[u8]) -> Result<AntennaSample> {
    let mut r = open_record(buf, DatasetKind::Single)?;
    let s = AntennaSample {
        structure: r.voxels()?,
        mask: r.voxels()?,
        scale: r.scale()?,
        pattern: r.sphere()?,
        directivity: r.sphere()?,
    };
    finish(&r)?;
    Ok(s)
}

pub(crate) fn decode_array(buf: &[u8]) -> Result<ArraySample> {
    let mut r = open_record(buf, DatasetKind::Array)?;
    let n = r.u32()?;
    let mut elements = Vec::with_capacity(n);
    for _ in 0..n {
        elements.push(ArrayElement {
            source: r.u32()?,
            slot: r.u32()?,
            structure: r.voxels()?,
            scale: r.scale()?,
            pattern: r.sphere()?,
        });
    }
    let structure = r.voxels()?;
    let (nx, ny) = (r.u32()?, r.u32()?);
    let constraint = ConstraintPlane::new(nx, ny, r.bits(nx * ny)?)?;
    let a = ArraySample {
        elements,
        structure,
        constraint,
        gain: r.sphere()?,
        scale: r.scale()?,
    };
    finish(&r)?;
    Ok(a)
}

/// Writes `manifest.json` and one binary record per sample into `dir`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    if ds.manifest.count != ds.samples.len() {
        return Err(Error::Contract(
            "manifest count disagrees with samples".into(),
        ));
    }
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&ds.manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST), json)?;
    match &ds.samples {
        Samples::Single(s) => {
            for (i, x) in s.iter().enumerate() {
                fs::write(dir.join(record_name(i)), encode_single(x))?;
            }
        }
        Samples::Array(s) => {
            for (i, x) in s.iter().enumerate() {
                fs::write(dir.join(record_name(i)), encode_array(x))?;
            }
        }
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "dataset format {} is not {FORMAT_VERSION}",
            manifest.format_version
        )));
    }
    let read = |i: usize| fs::read(dir.join(record_name(i)));
    let samples = match manifest.kind {
        DatasetKind::Single => Samples::Single(
            (0..manifest.count)
                .map(|i| decode_single(&read(i)?))
                .collect::<Result<_>>()?,
        ),
        DatasetKind::Array => Samples::Array(
            (0..manifest.count)
                .map(|i| decode_array(&read(i)?))
                .collect::<Result<_>>()?,
        ),
    };
    Ok(Dataset { manifest, samples })
}
