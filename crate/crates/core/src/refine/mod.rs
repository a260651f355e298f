//! Vertex trajectories against a reference frame, geodesic-consistency
//! outlier detection and energy-based repair of the outliers.

mod detect;
mod optimize;

pub use detect::{detect_outliers, Detection, GeodesicCache};
pub use optimize::{
    energy_geodesic, energy_temporal, refine_outlier, refine_sequence, refine_with, EntryEnergy, RefineReport,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspond::CorresIdx;
use crate::mesh::{MeshError, MeshSequence};

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("no correspondence given for frame {0}")]
    MissingCorrespondence(usize),
    #[error("frame {frame}: {message}")]
    Correspondence { frame: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RefineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Mean geodesic deviation above which an entry is an outlier. `None`
    /// uses 5% of the reference frame's bounding-sphere radius.
    pub tau: Option<f64>,
    /// Candidate count around the seed position.
    pub neighbors: usize,
    /// Number of anchor rows per frame.
    pub anchors: usize,
    pub max_sweeps: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            tau: None,
            neighbors: 32,
            anchors: 20,
            max_sweeps: 10,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return Err(RefineError::Config(format!("tau must be positive, got {t}")));
            }
        }
        if self.neighbors == 0 {
            return Err(RefineError::Config("neighbor count must be at least 1".into()));
        }
        if self.anchors == 0 {
            return Err(RefineError::Config("anchor count must be at least 1".into()));
        }
        Ok(())
    }

    /// Threshold in model units for `seq` with reference frame `reference`.
    pub fn resolved_tau(&self, seq: &MeshSequence, reference: usize) -> f64 {
        self.tau.unwrap_or_else(|| {
            seq.frame(reference)
                .bounding_sphere()
                .map_or(0.0, |(_, r)| 0.05 * r)
        })
    }
}

/// `V x N` matrix whose row `i` follows reference vertex `i` through the
/// sequence. Each entry is a vertex of its frame (by index when known) and
/// its position; unmatched entries have neither.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMatrix {
    vertices: usize,
    frames: usize,
    reference: usize,
    ids: Vec<Option<usize>>,
    positions: Vec<Point3<f64>>,
}

const TRAJ_MAGIC: &[u8; 4] = b"PDMT";
const FLAG_MAGIC: &[u8; 4] = b"PDMF";
const IDS_MAGIC: &[u8; 4] = b"PDMI";

impl TrajectoryMatrix {
    /// All entries unmatched.
    pub fn new(vertices: usize, frames: usize, reference: usize) -> Self {
        assert!(reference < frames.max(1), "reference frame out of range");
        Self {
            vertices,
            frames,
            reference,
            ids: vec![None; vertices * frames],
            positions: vec![Point3::new(f64::NAN, f64::NAN, f64::NAN); vertices * frames],
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    fn at(&self, i: usize, n: usize) -> usize {
        debug_assert!(i < self.vertices && n < self.frames);
        i * self.frames + n
    }

    /// Frame-`n` vertex index of entry `(i, n)`.
    pub fn id(&self, i: usize, n: usize) -> Option<usize> {
        self.ids[self.at(i, n)]
    }

    /// Position of entry `(i, n)`; `None` when unmatched.
    pub fn position(&self, i: usize, n: usize) -> Option<Point3<f64>> {
        let p = self.positions[self.at(i, n)];
        p.x.is_finite().then_some(p)
    }

    pub fn is_matched(&self, i: usize, n: usize) -> bool {
        self.position(i, n).is_some()
    }

    pub fn set(&mut self, i: usize, n: usize, id: usize, position: Point3<f64>) {
        let k = self.at(i, n);
        self.ids[k] = Some(id);
        self.positions[k] = position;
    }

    /// Stores a free position without a vertex index (decoded data).
    pub fn set_position(&mut self, i: usize, n: usize, position: Point3<f64>) {
        let k = self.at(i, n);
        self.ids[k] = None;
        self.positions[k] = position;
    }

    pub fn clear(&mut self, i: usize, n: usize) {
        let k = self.at(i, n);
        self.ids[k] = None;
        self.positions[k] = Point3::new(f64::NAN, f64::NAN, f64::NAN);
    }

    /// Column `n` as positions; NaN for unmatched entries.
    pub fn column(&self, n: usize) -> Vec<Point3<f64>> {
        (0..self.vertices).map(|i| self.positions[self.at(i, n)]).collect()
    }

    pub fn unmatched_count(&self) -> usize {
        self.positions.iter().filter(|p| !p.x.is_finite()).count()
    }

    /// Header `PDMT`, u32 V, N, reference, then row-major f32 xyz triples.
    /// Vertex indices are not stored.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + self.positions.len() * 12);
        buf.extend_from_slice(TRAJ_MAGIC);
        for v in [self.vertices, self.frames, self.reference] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for p in &self.positions {
            for c in [p.x, p.y, p.z] {
                buf.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let fmt = |message: &str| RefineError::Format {
            path: path.into(),
            message: message.into(),
        };
        if bytes.len() < 16 || &bytes[..4] != TRAJ_MAGIC {
            return Err(fmt("not a trajectory matrix file"));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
        let (v, n, r) = (word(0), word(1), word(2));
        if n == 0 || r >= n {
            return Err(fmt("reference frame out of range"));
        }
        if bytes.len() != 16 + v * n * 12 {
            return Err(fmt("size does not match the header"));
        }
        let mut m = Self::new(v, n, r);
        for (k, c) in bytes[16..].chunks_exact(12).enumerate() {
            let f = |o: usize| f32::from_le_bytes(c[o..o + 4].try_into().unwrap()) as f64;
            let p = Point3::new(f(0), f(4), f(8));
            if p.x.is_finite() {
                m.positions[k] = p;
            }
        }
        Ok(m)
    }

    /// Sidecar holding the vertex indices: `PDMI`, u32 V, N, then one i32
    /// per entry in matrix order, -1 when the entry has no index.
    pub fn ids_to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + self.ids.len() * 4);
        buf.extend_from_slice(IDS_MAGIC);
        for v in [self.vertices, self.frames] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for id in &self.ids {
            buf.extend_from_slice(&id.map_or(-1, |i| i as i32).to_le_bytes());
        }
        buf
    }

    /// Restores the vertex indices written by [`Self::ids_to_bytes`].
    pub fn attach_ids(&mut self, bytes: &[u8], path: &str) -> Result<()> {
        let fmt = |message: &str| RefineError::Format {
            path: path.into(),
            message: message.into(),
        };
        if bytes.len() < 12 || &bytes[..4] != IDS_MAGIC {
            return Err(fmt("not a vertex-index sidecar"));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
        if (word(0), word(1)) != (self.vertices, self.frames) || bytes.len() != 12 + self.ids.len() * 4 {
            return Err(fmt("shape does not match the trajectory matrix"));
        }
        for (k, c) in bytes[12..].chunks_exact(4).enumerate() {
            let id = i32::from_le_bytes(c.try_into().unwrap());
            self.ids[k] = match id {
                -1 => None,
                i if i >= 0 && self.positions[k].x.is_finite() => Some(i as usize),
                _ => return Err(fmt("index without a position")),
            };
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, &path.display().to_string())
    }
}

/// Flagged `(vertex, frame)` entries with their deviation scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutlierSet {
    scores: BTreeMap<(usize, usize), f64>,
}

impl OutlierSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, i: usize, n: usize, score: f64) {
        self.scores.insert((i, n), score);
    }

    pub fn contains(&self, i: usize, n: usize) -> bool {
        self.scores.contains_key(&(i, n))
    }

    pub fn score(&self, i: usize, n: usize) -> Option<f64> {
        self.scores.get(&(i, n)).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `((i, n), score)` ordered by vertex, then frame.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.scores.iter().map(|(&k, &s)| (k, s))
    }

    /// Flagged rows of frame `n`, ascending.
    pub fn in_frame(&self, n: usize) -> Vec<usize> {
        self.scores.keys().filter(|&&(_, f)| f == n).map(|&(i, _)| i).collect()
    }

    /// Header `PDMF`, u32 V, N, then one bit per entry in row-major order,
    /// least significant bit first. Scores are not stored.
    pub fn to_bitset(&self, vertices: usize, frames: usize) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(FLAG_MAGIC);
        buf.extend_from_slice(&(vertices as u32).to_le_bytes());
        buf.extend_from_slice(&(frames as u32).to_le_bytes());
        let mut bits = vec![0u8; (vertices * frames).div_ceil(8)];
        for &(i, n) in self.scores.keys() {
            let k = i * frames + n;
            bits[k / 8] |= 1 << (k % 8);
        }
        buf.extend_from_slice(&bits);
        buf
    }

    /// Inverse of [`to_bitset`](Self::to_bitset); scores read back as NaN.
    pub fn from_bitset(bytes: &[u8], path: &str) -> Result<(Self, usize, usize)> {
        let fmt = |message: &str| RefineError::Format {
            path: path.into(),
            message: message.into(),
        };
        if bytes.len() < 12 || &bytes[..4] != FLAG_MAGIC {
            return Err(fmt("not a flag bitset file"));
        }
        let v = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let bits = &bytes[12..];
        if bits.len() != (v * n).div_ceil(8) {
            return Err(fmt("size does not match the header"));
        }
        let mut set = Self::new();
        for k in 0..v * n {
            if bits[k / 8] >> (k % 8) & 1 == 1 {
                set.insert(k / n, k % n, f64::NAN);
            }
        }
        Ok((set, v, n))
    }
}

/// Fills row `i` with the correspondent of reference vertex `i` in every
/// frame. `corres[n]` maps reference vertices to frame-`n` vertices and must
/// be present for every `n != reference`; the reference column is the
/// identity. Unmatched entries stay empty and are flagged by detection.
pub fn build_trajectory_matrix(
    seq: &MeshSequence,
    reference: usize,
    corres: &[Option<CorresIdx>],
) -> Result<TrajectoryMatrix> {
    let frames = seq.len();
    if reference >= frames {
        return Err(RefineError::Shape(format!(
            "reference frame {reference} out of range for {frames} frames"
        )));
    }
    if corres.len() != frames {
        return Err(RefineError::Shape(format!(
            "{} correspondence entries for {frames} frames",
            corres.len()
        )));
    }
    let base = seq.frame(reference);
    let v = base.vertex_count();
    let mut m = TrajectoryMatrix::new(v, frames, reference);
    for (i, p) in base.vertices().iter().enumerate() {
        m.set(i, reference, i, *p);
    }
    for (n, c) in corres.iter().enumerate() {
        if n == reference {
            continue;
        }
        let c = c.as_ref().ok_or(RefineError::MissingCorrespondence(n))?;
        if c.len() != v {
            return Err(RefineError::Correspondence {
                frame: n,
                message: format!("{} rows, reference has {v} vertices", c.len()),
            });
        }
        let frame = seq.frame(n);
        for (i, t) in c.iter().enumerate() {
            if let Some(t) = *t {
                let p = frame.vertices().get(t).ok_or_else(|| RefineError::Correspondence {
                    frame: n,
                    message: format!("row {i} maps to vertex {t} of {}", frame.vertex_count()),
                })?;
                m.set(i, n, t, *p);
            }
        }
    }
    Ok(m)
}
