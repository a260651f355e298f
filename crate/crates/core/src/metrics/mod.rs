//! Reconstruction and correspondence error measures with CSV, JSON and SVG
//! report output.

mod plot;

pub use plot::svg_line_plot;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::{DMatrix, Point3};
use serde::Serialize;
use thiserror::Error;

use crate::correspond::{CorresIdx, KdTree};
use crate::mesh::{EdgeGraph, MeshSequence, TriangleMesh};
use crate::refine::TrajectoryMatrix;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("reference sequence is static; the KG denominator is zero")]
    StaticSequence,
    #[error("frame {0} has no vertices")]
    EmptyFrame(usize),
    #[error("index out of range: {0}")]
    Index(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// `3V x N` matrix with rows `3i`, `3i+1`, `3i+2` holding the x, y, z
/// trajectory of vertex `i`. Unmatched entries are NaN.
pub fn stacked(a: &TrajectoryMatrix) -> DMatrix<f64> {
    let (v, n) = (a.vertex_count(), a.frame_count());
    DMatrix::from_fn(3 * v, n, |r, f| a.position(r / 3, f).map_or(f64::NAN, |p| p[r % 3]))
}

/// `3V x N` matrix of a sequence whose frames share one vertex order.
pub fn stacked_sequence(seq: &MeshSequence) -> Result<DMatrix<f64>> {
    let v = seq.frame(0).vertex_count();
    if let Some(n) = seq.frames().iter().position(|f| f.vertex_count() != v) {
        return Err(MetricsError::Shape(format!("frame {n} has a different vertex count")));
    }
    Ok(DMatrix::from_fn(3 * v, seq.len(), |r, f| seq.frame(f).vertices()[r / 3][r % 3]))
}

/// KG error in percent: `100 |B - B^| / |B - E(B)|` (Frobenius norms), with
/// `E(B)` the per-row temporal mean of `B`.
pub fn kg_error(b: &DMatrix<f64>, b_hat: &DMatrix<f64>) -> Result<f64> {
    if b.shape() != b_hat.shape() {
        return Err(MetricsError::Shape(format!("{:?} vs {:?}", b.shape(), b_hat.shape())));
    }
    let n = b.ncols() as f64;
    let mut den = 0.0;
    for row in b.row_iter() {
        let mean = row.sum() / n;
        den += row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    }
    if !(den > 0.0) {
        return Err(MetricsError::StaticSequence);
    }
    Ok(100.0 * (b - b_hat).norm() / den.sqrt())
}

/// Per-row temporal mean, broadcast over the columns.
pub fn temporal_mean(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.ncols() as f64;
    let means: Vec<f64> = b.row_iter().map(|r| r.sum() / n).collect();
    DMatrix::from_fn(b.nrows(), b.ncols(), |r, _| means[r])
}

fn flat(points: &[Point3<f64>]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// Largest distance from a point of `from` to its nearest point of `to`.
pub fn directed_hausdorff(from: &[Point3<f64>], to: &[Point3<f64>]) -> f64 {
    let pts = flat(to);
    let tree = KdTree::new(&pts, 3);
    from.iter()
        .map(|p| tree.nearest(&[p.x, p.y, p.z]).map_or(f64::INFINITY, |(_, d2)| d2))
        .fold(0.0, f64::max)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameHausdorff {
    /// `a -> b`: how far `a` strays from `b`.
    pub forward: f64,
    pub backward: f64,
    pub symmetric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HausdorffReport {
    pub frames: Vec<FrameHausdorff>,
    /// Mean of the symmetric per-frame distances.
    pub mean: f64,
    /// Unnormalized sum of the symmetric per-frame distances.
    pub sum: f64,
    pub mean_forward: f64,
    pub mean_backward: f64,
}

/// Symmetric vertex-cloud Hausdorff distance of every frame pair.
pub fn hausdorff_sequence(a: &MeshSequence, b: &MeshSequence) -> Result<HausdorffReport> {
    if a.len() != b.len() {
        return Err(MetricsError::Shape(format!("{} frames vs {}", a.len(), b.len())));
    }
    let mut frames = Vec::with_capacity(a.len());
    for (n, (fa, fb)) in a.frames().iter().zip(b.frames()).enumerate() {
        if fa.vertex_count() == 0 || fb.vertex_count() == 0 {
            return Err(MetricsError::EmptyFrame(n));
        }
        let forward = directed_hausdorff(fa.vertices(), fb.vertices());
        let backward = directed_hausdorff(fb.vertices(), fa.vertices());
        frames.push(FrameHausdorff {
            forward,
            backward,
            symmetric: forward.max(backward),
        });
    }
    let count = frames.len() as f64;
    let sum: f64 = frames.iter().map(|f| f.symmetric).sum();
    Ok(HausdorffReport {
        mean: sum / count,
        sum,
        mean_forward: frames.iter().map(|f| f.forward).sum::<f64>() / count,
        mean_backward: frames.iter().map(|f| f.backward).sum::<f64>() / count,
        frames,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    /// Geodesic error of each source vertex on the target; `+inf` when unmatched.
    pub errors: Vec<f64>,
    /// `(threshold, fraction of vertices with error <= threshold)`.
    pub samples: Vec<(f64, f64)>,
}

/// `count` evenly spaced thresholds from 0 to `max`.
pub fn linear_thresholds(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|k| max * k as f64 / (count - 1) as f64).collect(),
    }
}

/// Cumulative distribution of the geodesic distance, on `target`, between
/// predicted and true correspondents of every source vertex.
pub fn correspondence_error_curve(
    predicted: &CorresIdx,
    truth: &[usize],
    target: &TriangleMesh,
    thresholds: &[f64],
) -> Result<ErrorCurve> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::Shape(format!(
            "{} predictions for {} ground-truth rows",
            predicted.len(),
            truth.len()
        )));
    }
    let v = target.vertex_count();
    let graph = EdgeGraph::new(target);
    let mut fields: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut errors = Vec::with_capacity(truth.len());
    for (i, (&t, p)) in truth.iter().zip(predicted).enumerate() {
        if t >= v || p.is_some_and(|p| p >= v) {
            return Err(MetricsError::Index(format!("row {i} refers past {v} target vertices")));
        }
        errors.push(match p {
            Some(p) => fields.entry(t).or_insert_with(|| graph.distances_from(t))[*p],
            None => f64::INFINITY,
        });
    }
    Ok(cumulative_curve(errors, thresholds))
}

/// Curve of already computed per-vertex errors, e.g. pooled over frames.
pub fn cumulative_curve(errors: Vec<f64>, thresholds: &[f64]) -> ErrorCurve {
    let total = errors.len().max(1) as f64;
    let samples = thresholds
        .iter()
        .map(|&th| (th, errors.iter().filter(|&&e| e <= th).count() as f64 / total))
        .collect();
    ErrorCurve { errors, samples }
}

/// One evaluated metric with its per-frame series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub metric: String,
    pub value: f64,
    pub per_frame: Vec<f64>,
    pub parameters: BTreeMap<String, f64>,
}

impl ErrorReport {
    pub fn new(metric: &str, value: f64, per_frame: Vec<f64>) -> Self {
        Self {
            metric: metric.into(),
            value,
            per_frame,
            parameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.into(), value);
        self
    }
}

/// Per-frame KG error: the KG formula restricted to one column, normalized
/// by the whole-sequence denominator so the squares sum to the total.
pub fn kg_per_frame(b: &DMatrix<f64>, b_hat: &DMatrix<f64>) -> Result<Vec<f64>> {
    let total = kg_error(b, b_hat)?;
    let num_total = (b - b_hat).norm();
    if num_total == 0.0 {
        return Ok(vec![0.0; b.ncols()]);
    }
    Ok((0..b.ncols())
        .map(|f| total * (b.column(f) - b_hat.column(f)).norm() / num_total)
        .collect())
}

/// One row per frame: `frame,<metric>,...` for reports of equal length.
pub fn write_frame_csv(reports: &[ErrorReport], mut w: impl Write) -> std::io::Result<()> {
    write!(w, "frame")?;
    for r in reports {
        write!(w, ",{}", r.metric)?;
    }
    writeln!(w)?;
    let frames = reports.iter().map(|r| r.per_frame.len()).max().unwrap_or(0);
    for f in 0..frames {
        write!(w, "{f}")?;
        for r in reports {
            match r.per_frame.get(f) {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_curve_csv(curve: &ErrorCurve, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "threshold,fraction")?;
    for (t, f) in &curve.samples {
        writeln!(w, "{t},{f}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn kg_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_matrix(&mut rng, 6, 4);
        assert_eq!(kg_error(&b, &b).unwrap(), 0.0);
        assert!((kg_error(&b, &temporal_mean(&b)).unwrap() - 100.0).abs() < 1e-12);
        let flat = DMatrix::from_element(6, 4, 1.5);
        assert!(matches!(kg_error(&flat, &b), Err(MetricsError::StaticSequence)));
    }

    #[test]
    fn kg_is_invariant_to_column_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_matrix(&mut rng, 9, 5);
        let h = random_matrix(&mut rng, 9, 5);
        let perm = [3, 0, 4, 1, 2];
        let pb = DMatrix::from_fn(9, 5, |r, c| b[(r, perm[c])]);
        let ph = DMatrix::from_fn(9, 5, |r, c| h[(r, perm[c])]);
        assert!((kg_error(&b, &h).unwrap() - kg_error(&pb, &ph).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn per_frame_kg_squares_sum_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_matrix(&mut rng, 6, 7);
        let h = random_matrix(&mut rng, 6, 7);
        let total = kg_error(&b, &h).unwrap();
        let sq: f64 = kg_per_frame(&b, &h).unwrap().iter().map(|x| x * x).sum();
        assert!((sq.sqrt() - total).abs() < 1e-9);
    }

    #[test]
    fn hausdorff_of_single_points_and_identical_sequences() {
        let a = vec![Point3::new(0.0, 0.0, 0.0)];
        let b = vec![Point3::new(3.0, 4.0, 0.0)];
        assert_eq!(directed_hausdorff(&a, &b), 5.0);
        let m = synth::subdivided_icosphere(1, 1.0);
        let seq = MeshSequence::new(vec![m.clone(), m.translated(Vector3::x())], 1.0).unwrap();
        let r = hausdorff_sequence(&seq, &seq).unwrap();
        assert_eq!((r.mean, r.sum), (0.0, 0.0));
    }

    #[test]
    fn hausdorff_is_symmetric() {
        let a = synth::subdivided_icosphere(1, 1.0);
        let b = synth::subdivided_icosphere(2, 1.2);
        let sa = MeshSequence::new(vec![a.clone()], 1.0).unwrap();
        let sb = MeshSequence::new(vec![b], 1.0).unwrap();
        let ab = hausdorff_sequence(&sa, &sb).unwrap();
        let ba = hausdorff_sequence(&sb, &sa).unwrap();
        assert_eq!(ab.frames[0].forward, ba.frames[0].backward);
        assert_eq!(ab.mean, ba.mean);
        assert!(ab.frames[0].forward != ab.frames[0].backward);
    }

    #[test]
    fn curve_edge_cases() {
        let m = synth::subdivided_icosphere(1, 1.0);
        let truth: Vec<usize> = (0..42).collect();
        let perfect: CorresIdx = truth.iter().map(|&t| Some(t)).collect();
        let th = linear_thresholds(1.0, 5);
        let c = correspondence_error_curve(&perfect, &truth, &m, &th).unwrap();
        assert!(c.samples.iter().all(|&(_, f)| f == 1.0));
        let none: CorresIdx = vec![None; 42];
        let c = correspondence_error_curve(&none, &truth, &m, &th).unwrap();
        assert!(c.samples.iter().all(|&(_, f)| f == 0.0));
        assert!(c.errors.iter().all(|e| e.is_infinite()));
    }

    #[test]
    fn curve_is_monotone() {
        let m = synth::subdivided_icosphere(2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth: Vec<usize> = (0..m.vertex_count()).collect();
        let pred: CorresIdx = truth.iter().map(|_| rng.gen_bool(0.9).then(|| rng.gen_range(0..m.vertex_count()))).collect();
        let c = correspondence_error_curve(&pred, &truth, &m, &linear_thresholds(3.5, 40)).unwrap();
        assert!(c.samples.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn csv_layout() {
        let a = ErrorReport::new("kg", 1.0, vec![0.5, 1.5]);
        let b = ErrorReport::new("hausdorff", 2.0, vec![2.0, 2.0]);
        let mut buf = Vec::new();
        write_frame_csv(&[a, b], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame,kg,hausdorff\n0,0.5,2\n1,1.5,2\n");
    }
}
