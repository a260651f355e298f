//! Dense correspondence by cross-view descriptor matching with vote
//! accumulation over mesh vertices.

mod kdtree;

pub use kdtree::{squared_distance, KdTree};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::descriptor::FeatureField;
use crate::mesh::TriangleMesh;
use crate::render::{reproject, PdmImage, RenderError};

#[derive(Debug, Error)]
pub enum CorrespondError {
    #[error("nearest-neighbor search over an empty set")]
    EmptySet,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no valid pixels in any view")]
    NoValidPixels,
    #[error("view {view}: {message}")]
    View { view: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CorrespondError> = std::result::Result<T, E>;

/// Per-source-vertex target vertex; `None` marks a vertex that received no votes.
pub type CorresIdx = Vec<Option<usize>>;

/// Above this many cells the vote matrix is stored sparsely.
pub const DENSE_VOTE_LIMIT: usize = 1 << 24;

/// For every row of `y`, the index of its Euclidean-nearest row of `x`
/// (ties to the lowest index). Both are flat row-major buffers of width `dim`.
pub fn nnsearch(x: &[f64], y: &[f64], dim: usize) -> Result<Vec<usize>> {
    if dim == 0 || x.len() % dim != 0 || y.len() % dim != 0 {
        return Err(CorrespondError::Dimension(format!(
            "buffers of {} and {} values with dimension {dim}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(CorrespondError::EmptySet);
    }
    let tree = KdTree::new(x, dim);
    Ok(y.chunks_exact(dim).map(|q| tree.nearest(q).expect("tree is non-empty").0).collect())
}

fn flatten_points(points: &[nalgebra::Point3<f64>]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// Source-by-target vertex vote counts.
#[derive(Debug, Clone, PartialEq)]
pub enum VotingMatrix {
    Dense { rows: usize, cols: usize, votes: Vec<u32> },
    Sparse { rows: usize, cols: usize, votes: Vec<BTreeMap<usize, u32>> },
}

impl VotingMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        if rows.saturating_mul(cols) <= DENSE_VOTE_LIMIT {
            Self::Dense {
                rows,
                cols,
                votes: vec![0; rows * cols],
            }
        } else {
            Self::Sparse {
                rows,
                cols,
                votes: vec![BTreeMap::new(); rows],
            }
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Dense { rows, cols, .. } | Self::Sparse { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn add(&mut self, row: usize, col: usize) {
        match self {
            Self::Dense { cols, votes, .. } => votes[row * *cols + col] += 1,
            Self::Sparse { votes, .. } => *votes[row].entry(col).or_insert(0) += 1,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        match self {
            Self::Dense { cols, votes, .. } => votes[row * cols + col],
            Self::Sparse { votes, .. } => votes[row].get(&col).copied().unwrap_or(0),
        }
    }

    pub fn total(&self) -> u64 {
        match self {
            Self::Dense { votes, .. } => votes.iter().map(|&v| v as u64).sum(),
            Self::Sparse { votes, .. } => votes.iter().flat_map(|r| r.values()).map(|&v| v as u64).sum(),
        }
    }

    /// Column with the most votes in `row` (lowest on ties); `None` for an empty row.
    pub fn row_argmax(&self, row: usize) -> Option<usize> {
        let mut best: Option<(usize, u32)> = None;
        let mut consider = |j: usize, v: u32| {
            if v > 0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        };
        match self {
            Self::Dense { cols, votes, .. } => {
                for (j, &v) in votes[row * cols..(row + 1) * cols].iter().enumerate() {
                    consider(j, v);
                }
            }
            Self::Sparse { votes, .. } => {
                for (&j, &v) in &votes[row] {
                    consider(j, v);
                }
            }
        }
        best.map(|(j, _)| j)
    }
}

/// One mesh seen through a set of PDM views with their descriptors.
#[derive(Debug, Clone, Copy)]
pub struct ViewSet<'a> {
    pub mesh: &'a TriangleMesh,
    pub pdms: &'a [PdmImage],
    pub features: &'a [FeatureField],
}

struct PreparedView {
    /// Nearest mesh vertex of each valid pixel, in pixel order.
    vertex: Vec<usize>,
    features: Vec<f64>,
}

fn prepare(set: &ViewSet, dim: &mut Option<usize>) -> Result<Vec<PreparedView>> {
    if set.pdms.len() != set.features.len() {
        return Err(CorrespondError::Dimension(format!(
            "{} PDMs but {} feature fields",
            set.pdms.len(),
            set.features.len()
        )));
    }
    let verts = flatten_points(set.mesh.vertices());
    if verts.is_empty() {
        return Err(CorrespondError::EmptySet);
    }
    let tree = KdTree::new(&verts, 3);
    set.pdms
        .iter()
        .zip(set.features)
        .enumerate()
        .map(|(view, (pdm, field))| {
            let points = reproject(&pdm.camera, pdm)?;
            if points.len() != field.len() || field.pixels != pdm.valid_pixels() {
                return Err(CorrespondError::View {
                    view,
                    message: format!("{} valid pixels but {} descriptors", points.len(), field.len()),
                });
            }
            if !field.is_empty() {
                match dim {
                    Some(d) if *d != field.dim => {
                        return Err(CorrespondError::Dimension(format!(
                            "view {view} has d = {}, expected {d}",
                            field.dim
                        )))
                    }
                    _ => *dim = Some(field.dim),
                }
            }
            let vertex = points
                .iter()
                .map(|p| tree.nearest(&[p.x, p.y, p.z]).expect("mesh is non-empty").0)
                .collect();
            Ok(PreparedView {
                vertex,
                features: field.features.clone(),
            })
        })
        .collect()
}

/// Votes over every (source view, target view) pair and returns the vote matrix.
///
/// Each valid source pixel is matched to the target pixel with the nearest
/// descriptor; the vote goes to (nearest source vertex of the source pixel,
/// nearest target vertex of the matched target pixel).
pub fn vote_matrix(source: &ViewSet, target: &ViewSet) -> Result<VotingMatrix> {
    let mut dim = None;
    let src = prepare(source, &mut dim)?;
    let tgt = prepare(target, &mut dim)?;
    let dim = dim.ok_or(CorrespondError::NoValidPixels)?;
    if src.iter().all(|v| v.vertex.is_empty()) {
        return Err(CorrespondError::NoValidPixels);
    }
    let mut m = VotingMatrix::new(source.mesh.vertex_count(), target.mesh.vertex_count());
    let trees: Vec<Option<KdTree>> = tgt
        .iter()
        .map(|t| (!t.vertex.is_empty()).then(|| KdTree::new(&t.features, dim)))
        .collect();
    for s in &src {
        for (t, tree) in tgt.iter().zip(&trees) {
            let Some(tree) = tree else { continue };
            for (k, f) in s.features.chunks_exact(dim).enumerate() {
                let (matched, _) = tree.nearest(f).expect("tree is non-empty");
                m.add(s.vertex[k], t.vertex[matched]);
            }
        }
    }
    Ok(m)
}

/// Row-wise argmax of the vote matrix; rows without votes are unmatched.
pub fn correspondences(m: &VotingMatrix) -> CorresIdx {
    (0..m.shape().0).map(|r| m.row_argmax(r)).collect()
}

pub fn vote(source: &ViewSet, target: &ViewSet) -> Result<CorresIdx> {
    Ok(correspondences(&vote_matrix(source, target)?))
}

/// One `src tgt` pair per line, `src -1` for unmatched rows.
pub fn write_corres(c: &CorresIdx, mut w: impl Write) -> std::io::Result<()> {
    for (i, t) in c.iter().enumerate() {
        match t {
            Some(t) => writeln!(w, "{i} {t}")?,
            None => writeln!(w, "{i} -1")?,
        }
    }
    Ok(())
}

pub fn read_corres(r: impl BufRead, path: &str) -> Result<CorresIdx> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let err = |message: String| CorrespondError::Parse {
            path: path.into(),
            line: n + 1,
            message,
        };
        let mut it = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(err(format!("expected two fields, got `{trimmed}`")));
        };
        let src: usize = a.parse().map_err(|_| err(format!("bad source index `{a}`")))?;
        if src != out.len() {
            return Err(err(format!("source index {src} out of sequence")));
        }
        let tgt: i64 = b.parse().map_err(|_| err(format!("bad target index `{b}`")))?;
        out.push(match tgt {
            -1 => None,
            t if t >= 0 => Some(t as usize),
            t => return Err(err(format!("negative target {t}"))),
        });
    }
    Ok(out)
}
