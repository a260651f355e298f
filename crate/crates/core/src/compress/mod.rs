//! Trajectory-matrix codecs: a parallel x/y/z autoencoder and a PCA
//! baseline, 16-bit quantization, and the self-contained `PDMC` clip file.

mod ae;
mod pca;

pub use ae::{train_codec, AutoencoderCodec, CodecConfig, Decoder, Encoder, Linear, Normalization};
pub use pca::{pca_decode, pca_encode, PcaModel};

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{MeshSequence, TriangleMesh};
use crate::refine::TrajectoryMatrix;

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trajectory matrix has unmatched or non-finite entries")]
    Unmatched,
    #[error("codec training diverged at step {step}")]
    Divergence { step: usize },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CompressError> = std::result::Result<T, E>;

/// The x, y and z coordinates of every entry as three `V x N` matrices.
pub fn split_xyz(a: &TrajectoryMatrix) -> [DMatrix<f64>; 3] {
    let (v, n) = (a.vertex_count(), a.frame_count());
    let nan = Point3::new(f64::NAN, f64::NAN, f64::NAN);
    std::array::from_fn(|k| DMatrix::from_fn(v, n, |i, f| a.position(i, f).unwrap_or(nan)[k]))
}

/// Inverse of [`split_xyz`]; vertex indices are not restored.
pub fn recombine(parts: &[DMatrix<f64>; 3], reference: usize) -> Result<TrajectoryMatrix> {
    let (v, n) = parts[0].shape();
    if parts.iter().any(|p| p.shape() != (v, n)) {
        return Err(CompressError::Shape("coordinate matrices differ in shape".into()));
    }
    if reference >= n.max(1) {
        return Err(CompressError::Shape(format!("reference frame {reference} out of range")));
    }
    let mut a = TrajectoryMatrix::new(v, n, reference);
    for i in 0..v {
        for f in 0..n {
            a.set_position(i, f, Point3::new(parts[0][(i, f)], parts[1][(i, f)], parts[2][(i, f)]));
        }
    }
    Ok(a)
}

/// Bits per vertex per frame of a payload of `bytes`.
pub fn bpvf(bytes: usize, vertices: usize, frames: usize) -> f64 {
    (bytes * 8) as f64 / (vertices * frames) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantization {
    /// Per-tensor min/max scaled unsigned 16-bit values.
    Fixed16,
    /// Raw little-endian f64.
    Float64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipKind {
    Autoencoder,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Quantization range; unused for `Float64`.
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipHeader {
    pub kind: ClipKind,
    pub vertices: usize,
    pub frames: usize,
    pub reference: usize,
    pub fps: f64,
    /// Latent width c (autoencoder) or rank r (PCA).
    pub code_width: usize,
    /// Decoder hidden widths `[h1, h2]`; zero for PCA.
    pub hidden: [usize; 2],
    pub normalization: Option<Normalization>,
    pub quantization: Quantization,
    pub tensors: Vec<TensorInfo>,
    pub faces: usize,
}

/// Decodable clip: header, stored tensors (values as they decode from the
/// file) and the reference connectivity. Tensors are stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedClip {
    pub header: ClipHeader,
    pub tensors: Vec<DMatrix<f64>>,
    pub faces: Vec<[usize; 3]>,
}

const MAGIC: &[u8; 4] = b"PDMC";
const VERSION: u16 = 1;
const LEVELS: f64 = 65535.0;

fn store(name: &str, m: &DMatrix<f64>, q: Quantization) -> (TensorInfo, DMatrix<f64>) {
    let (lo, hi) = if m.is_empty() { (0.0, 0.0) } else { (m.min(), m.max()) };
    let stored = match q {
        Quantization::Float64 => m.clone(),
        Quantization::Fixed16 => m.map(|x| dequantize(quantize(x, lo, hi), lo, hi)),
    };
    let info = TensorInfo {
        name: name.into(),
        rows: m.nrows(),
        cols: m.ncols(),
        min: lo,
        max: hi,
    };
    (info, stored)
}

fn quantize(x: f64, lo: f64, hi: f64) -> u16 {
    if hi > lo {
        ((x - lo) / (hi - lo) * LEVELS).round().clamp(0.0, LEVELS) as u16
    } else {
        0
    }
}

fn dequantize(q: u16, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + q as f64 * ((hi - lo) / LEVELS)
    } else {
        lo
    }
}

fn check_source(a: &TrajectoryMatrix, reference: &TriangleMesh) -> Result<[DMatrix<f64>; 3]> {
    if reference.vertex_count() != a.vertex_count() {
        return Err(CompressError::Shape(format!(
            "reference mesh has {} vertices, trajectory matrix {}",
            reference.vertex_count(),
            a.vertex_count()
        )));
    }
    if a.unmatched_count() > 0 {
        return Err(CompressError::Unmatched);
    }
    Ok(split_xyz(a))
}

const AXES: [&str; 3] = ["x", "y", "z"];

impl CompressedClip {
    fn build(
        mut header: ClipHeader,
        named: Vec<(String, DMatrix<f64>)>,
        reference: &TriangleMesh,
    ) -> Self {
        let mut tensors = Vec::with_capacity(named.len());
        for (name, m) in named {
            let (info, stored) = store(&name, &m, header.quantization);
            header.tensors.push(info);
            tensors.push(stored);
        }
        header.faces = reference.face_count();
        Self {
            header,
            tensors,
            faces: reference.faces().to_vec(),
        }
    }

    /// Latent codes of `a` under the trained codec plus the codec's decoder.
    pub fn encode(
        a: &TrajectoryMatrix,
        codec: &AutoencoderCodec,
        quantization: Quantization,
        reference: &TriangleMesh,
        fps: f64,
    ) -> Result<Self> {
        let parts = check_source(a, reference)?;
        if a.frame_count() != codec.frames {
            return Err(CompressError::Shape(format!(
                "codec expects {} frames, matrix has {}",
                codec.frames,
                a.frame_count()
            )));
        }
        let mut named = vec![("latents".to_string(), codec.encode(&parts))];
        for (k, branch) in codec.decoder.branches.iter().enumerate() {
            for (l, layer) in branch.iter().enumerate() {
                named.push((format!("{}.dec{l}.weight", AXES[k]), layer.weight.clone()));
                named.push((format!("{}.dec{l}.bias", AXES[k]), DMatrix::from_column_slice(layer.bias.len(), 1, layer.bias.as_slice())));
            }
        }
        let header = ClipHeader {
            kind: ClipKind::Autoencoder,
            vertices: a.vertex_count(),
            frames: a.frame_count(),
            reference: a.reference(),
            fps,
            code_width: codec.latent,
            hidden: codec.hidden,
            normalization: Some(codec.decoder.normalization),
            quantization,
            tensors: Vec::new(),
            faces: 0,
        };
        Ok(Self::build(header, named, reference))
    }

    /// Rank-`rank` PCA of `a` stored in the same container.
    pub fn encode_pca(
        a: &TrajectoryMatrix,
        rank: usize,
        quantization: Quantization,
        reference: &TriangleMesh,
        fps: f64,
    ) -> Result<Self> {
        let parts = check_source(a, reference)?;
        let model = pca_encode(&parts, rank)?;
        let mut named = Vec::new();
        for k in 0..3 {
            let mean = &model.mean[k];
            named.push((format!("{}.mean", AXES[k]), DMatrix::from_column_slice(mean.len(), 1, mean.as_slice())));
            named.push((format!("{}.basis", AXES[k]), model.basis[k].clone()));
            named.push((format!("{}.coeffs", AXES[k]), model.coeffs[k].clone()));
        }
        let header = ClipHeader {
            kind: ClipKind::Pca,
            vertices: a.vertex_count(),
            frames: a.frame_count(),
            reference: a.reference(),
            fps,
            code_width: rank,
            hidden: [0, 0],
            normalization: None,
            quantization,
            tensors: Vec::new(),
            faces: 0,
        };
        Ok(Self::build(header, named, reference))
    }

    fn tensor(&self, name: &str, rows: usize, cols: usize) -> Result<&DMatrix<f64>> {
        let k = self
            .header
            .tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| self.format_error(format!("missing tensor {name}")))?;
        let t = &self.tensors[k];
        if t.shape() != (rows, cols) {
            return Err(self.format_error(format!("tensor {name} is {:?}, expected {rows}x{cols}", t.shape())));
        }
        Ok(t)
    }

    fn format_error(&self, message: String) -> CompressError {
        CompressError::Format {
            path: "<clip>".into(),
            message,
        }
    }

    /// Decoded trajectories and the mesh sequence that uses the reference
    /// connectivity in every frame.
    pub fn decode(&self) -> Result<(TrajectoryMatrix, MeshSequence)> {
        let h = &self.header;
        let (v, n, c) = (h.vertices, h.frames, h.code_width);
        let parts = match h.kind {
            ClipKind::Autoencoder => {
                let norm = h.normalization.ok_or_else(|| self.format_error("autoencoder clip without normalization".into()))?;
                let [h1, h2] = h.hidden;
                let latents = self.tensor("latents", v, c)?;
                let mut branches: Vec<[Linear; 3]> = Vec::new();
                for axis in AXES {
                    let dims = [(h2, c), (h1, h2), (n, h1)];
                    let mut layers = Vec::new();
                    for (l, &(out, inp)) in dims.iter().enumerate() {
                        let weight = self.tensor(&format!("{axis}.dec{l}.weight"), out, inp)?.clone();
                        let bias = self.tensor(&format!("{axis}.dec{l}.bias"), out, 1)?;
                        layers.push(Linear {
                            weight,
                            bias: DVector::from_column_slice(bias.as_slice()),
                        });
                    }
                    branches.push(layers.try_into().expect("three layers"));
                }
                let decoder = Decoder {
                    branches: branches.try_into().expect("three branches"),
                    normalization: norm,
                };
                decoder.decode(latents)
            }
            ClipKind::Pca => {
                let mut model = PcaModel {
                    mean: Default::default(),
                    basis: Default::default(),
                    coeffs: Default::default(),
                };
                for (k, axis) in AXES.iter().enumerate() {
                    model.mean[k] = DVector::from_column_slice(self.tensor(&format!("{axis}.mean"), n, 1)?.as_slice());
                    model.basis[k] = self.tensor(&format!("{axis}.basis"), n, c)?.clone();
                    model.coeffs[k] = self.tensor(&format!("{axis}.coeffs"), v, c)?.clone();
                }
                pca_decode(&model)
            }
        };
        let a = recombine(&parts, h.reference)?;
        let frames = (0..n)
            .map(|f| TriangleMesh::new(a.column(f), self.faces.clone()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok((a, MeshSequence::new(frames, h.fps)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for (info, t) in self.header.tensors.iter().zip(&self.tensors) {
            for &x in t.as_slice() {
                match self.header.quantization {
                    Quantization::Fixed16 => buf.extend_from_slice(&quantize(x, info.min, info.max).to_le_bytes()),
                    Quantization::Float64 => buf.extend_from_slice(&x.to_le_bytes()),
                }
            }
        }
        for f in &self.faces {
            for &i in f {
                buf.extend_from_slice(&(i as u32).to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let fmt = |message: String| CompressError::Format {
            path: path.into(),
            message,
        };
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| fmt("truncated clip".into()))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(fmt("not a PDMC clip".into()));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(fmt(format!("unsupported clip version {version}")));
        }
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let header: ClipHeader = serde_json::from_slice(take(len)?).map_err(|e| fmt(e.to_string()))?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for info in &header.tensors {
            let count = info.rows * info.cols;
            let data: Vec<f64> = match header.quantization {
                Quantization::Fixed16 => take(2 * count)?
                    .chunks_exact(2)
                    .map(|b| dequantize(u16::from_le_bytes([b[0], b[1]]), info.min, info.max))
                    .collect(),
                Quantization::Float64 => take(8 * count)?
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            };
            tensors.push(DMatrix::from_vec(info.rows, info.cols, data));
        }
        let mut faces = Vec::with_capacity(header.faces);
        for _ in 0..header.faces {
            let b = take(12)?;
            let idx = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as usize;
            faces.push([idx(0), idx(4), idx(8)]);
        }
        if pos != bytes.len() {
            return Err(fmt("trailing bytes after connectivity".into()));
        }
        Ok(Self { header, tensors, faces })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, &path.display().to_string())
    }

    pub fn connectivity_bytes(&self) -> usize {
        self.faces.len() * 12
    }

    /// Everything except the connectivity section: magic, header, latents
    /// and decoder (or PCA) tensors.
    pub fn payload_bytes(&self) -> usize {
        let header = serde_json::to_vec(&self.header).expect("header serializes").len();
        let per = match self.header.quantization {
            Quantization::Fixed16 => 2,
            Quantization::Float64 => 8,
        };
        10 + header + self.tensors.iter().map(|t| t.len() * per).sum::<usize>()
    }

    pub fn bpvf(&self) -> f64 {
        bpvf(self.payload_bytes(), self.header.vertices, self.header.frames)
    }
}
