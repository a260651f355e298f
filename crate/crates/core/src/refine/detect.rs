use std::collections::HashMap;
use std::rc::Rc;

use crate::mesh::{farthest_point_sample, EdgeGraph, MeshSequence};

use super::{OutlierSet, RefineConfig, RefineError, Result, TrajectoryMatrix};

/// Lazily built edge graphs and single-source distance fields per frame.
pub struct GeodesicCache<'a> {
    seq: &'a MeshSequence,
    graphs: Vec<Option<EdgeGraph>>,
    fields: HashMap<(usize, usize), Rc<Vec<f64>>>,
}

impl<'a> GeodesicCache<'a> {
    pub fn new(seq: &'a MeshSequence) -> Self {
        Self {
            seq,
            graphs: vec![None; seq.len()],
            fields: HashMap::new(),
        }
    }

    pub fn sequence(&self) -> &'a MeshSequence {
        self.seq
    }

    /// Distances from vertex `source` of frame `frame` to all its vertices.
    pub fn field(&mut self, frame: usize, source: usize) -> Rc<Vec<f64>> {
        if let Some(f) = self.fields.get(&(frame, source)) {
            return f.clone();
        }
        let seq = self.seq;
        let graph = self.graphs[frame].get_or_insert_with(|| EdgeGraph::new(seq.frame(frame)));
        let f = Rc::new(graph.distances_from(source));
        self.fields.insert((frame, source), f.clone());
        f
    }
}

/// Outliers of a trajectory matrix and the anchor rows used per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub outliers: OutlierSet,
    /// `anchors[n]`: rows used as geodesic anchors in frame `n`, in
    /// confidence order (empty for the reference frame).
    pub anchors: Vec<Vec<usize>>,
    pub tau: f64,
}

/// `|a - b|` where two unreachable distances agree.
fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Deviation of entry `(i, n)` against the rows in `against`: the geodesic
/// distance from the entry to each row's correspondent in frame `n`,
/// compared with the same distance on the reference frame. Rows unmatched
/// in frame `n` are skipped. `None` when nothing could be compared.
fn gaps(
    a: &TrajectoryMatrix,
    cache: &mut GeodesicCache,
    i: usize,
    n: usize,
    against: &[usize],
) -> Option<Vec<f64>> {
    let ci = a.id(i, n)?;
    let r = a.reference();
    let mut out = Vec::with_capacity(against.len());
    for &k in against {
        let Some(ck) = a.id(k, n) else { continue };
        let here = cache.field(n, ck)[ci];
        let there = cache.field(r, k)[i];
        out.push(gap(here, there));
    }
    (!out.is_empty()).then_some(out)
}

/// Flags entries whose mean geodesic deviation over the frame's anchors
/// exceeds `tau`.
///
/// Anchors are chosen per frame in a first pass: every entry is scored by
/// the median deviation against a set of farthest-point probe rows, and the
/// `config.anchors` lowest-scoring rows (ties to the lower row) become the
/// anchors. Unmatched entries and entries whose frame disconnects them from
/// the anchors score `+inf` and are always flagged. The reference column is
/// never flagged.
pub fn detect_outliers(a: &TrajectoryMatrix, seq: &MeshSequence, config: &RefineConfig) -> Result<Detection> {
    let mut cache = GeodesicCache::new(seq);
    detect_with(a, &mut cache, config)
}

pub(crate) fn detect_with(a: &TrajectoryMatrix, cache: &mut GeodesicCache, config: &RefineConfig) -> Result<Detection> {
    config.validate()?;
    let seq = cache.sequence();
    if seq.len() != a.frame_count() {
        return Err(RefineError::Shape(format!(
            "matrix has {} frames, sequence has {}",
            a.frame_count(),
            seq.len()
        )));
    }
    let r = a.reference();
    let v = a.vertex_count();
    if seq.frame(r).vertex_count() != v {
        return Err(RefineError::Shape(format!(
            "matrix has {v} rows, reference frame has {} vertices",
            seq.frame(r).vertex_count()
        )));
    }
    let tau = config.resolved_tau(seq, r);
    let mut outliers = OutlierSet::new();
    let mut anchors = vec![Vec::new(); a.frame_count()];
    if v == 0 || a.frame_count() < 2 {
        return Ok(Detection { outliers, anchors, tau });
    }
    let probe_count = v.min((4 * config.anchors).max(32));
    let probes = farthest_point_sample(seq.frame(r), &[0], probe_count)?;

    for n in (0..a.frame_count()).filter(|&n| n != r) {
        let mut first: Vec<(f64, usize)> = (0..v)
            .map(|i| {
                let score = gaps(a, cache, i, n, &probes).map_or(f64::INFINITY, |mut g| {
                    g.sort_by(f64::total_cmp);
                    g[(g.len() - 1) / 2]
                });
                (score, i)
            })
            .filter(|(s, _)| s.is_finite())
            .collect();
        first.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let theta: Vec<usize> = first.iter().take(config.anchors).map(|&(_, i)| i).collect();
        for i in 0..v {
            let score = match gaps(a, cache, i, n, &theta) {
                Some(g) => g.iter().sum::<f64>() / g.len() as f64,
                None => f64::INFINITY,
            };
            if !(score <= tau) {
                outliers.insert(i, n, score);
            }
        }
        anchors[n] = theta;
    }
    Ok(Detection { outliers, anchors, tau })
}
