//! Triangle meshes, mesh sequences and the surface algorithms built on them:
//! edge-graph geodesics, farthest-point sampling, patch segmentation and
//! genus-based reference frame selection.

mod geodesic;
pub mod io;
mod sampling;
mod segmentation;
mod topology;

pub use geodesic::{geodesic_distance, multi_source_geodesic, EdgeGraph};
pub use sampling::farthest_point_sample;
pub use segmentation::{
    generate_segmentation, propagate_segmentation, segment_centers, Segmentation,
};
pub use topology::{connected_components, frame_genus, select_reference_frame, NonManifold};

use nalgebra::{Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("face {face} references vertex {index}, but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {face} repeats vertex {index}")]
    DegenerateFace { face: usize, index: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("no frame of the sequence is a closed 2-manifold")]
    NoManifoldFrame,
    #[error("correspondence leaves target vertex {0} unmapped")]
    Unmapped(usize),
    #[error("unsupported mesh format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MeshError> = std::result::Result<T, E>;

/// Indexed triangle mesh. Faces are validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    labels: Option<Vec<u32>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let vertex_count = vertices.len();
        for (face, tri) in faces.iter().enumerate() {
            for &index in tri {
                if index >= vertex_count {
                    return Err(MeshError::IndexOutOfRange {
                        face,
                        index,
                        vertex_count,
                    });
                }
            }
            if tri[0] == tri[1] || tri[0] == tri[2] {
                return Err(MeshError::DegenerateFace {
                    face,
                    index: tri[0],
                });
            }
            if tri[1] == tri[2] {
                return Err(MeshError::DegenerateFace {
                    face,
                    index: tri[1],
                });
            }
        }
        Ok(Self {
            vertices,
            faces,
            labels: None,
        })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.vertices.len() {
            return Err(MeshError::Argument(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.vertices.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn bounding_box(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))),
        )
    }

    /// Center of the bounding box and the largest vertex distance from it.
    pub fn bounding_sphere(&self) -> Option<(Point3<f64>, f64)> {
        let (lo, hi) = self.bounding_box()?;
        let center = nalgebra::center(&lo, &hi);
        let radius = self
            .vertices
            .iter()
            .map(|v| (v - center).norm())
            .fold(0.0, f64::max);
        Some((center, radius))
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        self.map_vertices(|v| v + offset)
    }

    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Same surface with vertex `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(MeshError::Argument("not a permutation".into()));
        }
        let mut vertices = vec![Point3::origin(); n];
        for (i, &p) in perm.iter().enumerate() {
            vertices[p] = self.vertices[i];
        }
        let faces = self
            .faces
            .iter()
            .map(|f| [perm[f[0]], perm[f[1]], perm[f[2]]])
            .collect();
        let labels = self.labels.as_ref().map(|l| {
            let mut out = vec![0; n];
            for (i, &p) in perm.iter().enumerate() {
                out[p] = l[i];
            }
            out
        });
        Ok(Self {
            vertices,
            faces,
            labels,
        })
    }

    /// Closest point on the surface to `p` and its distance (brute force over faces).
    pub fn closest_point(&self, p: &Point3<f64>) -> Option<(Point3<f64>, f64)> {
        let mut best: Option<(Point3<f64>, f64)> = None;
        let mut consider = |q: Point3<f64>| {
            let d = (q - p).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((q, d));
            }
        };
        for f in &self.faces {
            consider(closest_point_on_triangle(
                p,
                &self.vertices[f[0]],
                &self.vertices[f[1]],
                &self.vertices[f[2]],
            ));
        }
        if self.faces.is_empty() {
            for v in &self.vertices {
                consider(*v);
            }
        }
        best
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Ordered frames of a captured or synthetic performance. Frames need not
/// share vertex count or connectivity.
#[derive(Debug, Clone)]
pub struct MeshSequence {
    frames: Vec<TriangleMesh>,
    pub fps: f64,
}

impl MeshSequence {
    pub fn new(frames: Vec<TriangleMesh>, fps: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(MeshError::Argument(
                "a sequence needs at least one frame".into(),
            ));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[TriangleMesh] {
        &self.frames
    }

    pub fn frame(&self, n: usize) -> &TriangleMesh {
        &self.frames[n]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn into_frames(self) -> Vec<TriangleMesh> {
        self.frames
    }
}
