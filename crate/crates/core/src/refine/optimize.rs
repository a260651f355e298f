use nalgebra::Point3;
use serde::Serialize;

use crate::mesh::MeshSequence;

use super::detect::detect_with;
use super::{Detection, GeodesicCache, RefineConfig, Result, TrajectoryMatrix};

/// Temporal smoothness `|c_next + c_prev - 2t|^2`.
pub fn energy_temporal(prev: &Point3<f64>, next: &Point3<f64>, t: &Point3<f64>) -> f64 {
    (prev.coords + next.coords - 2.0 * t.coords).norm_squared()
}

/// Geodesic consistency over anchors: `sum_k (d_prev[k] - d_t[k])^2 +
/// (d_t[k] - d_next[k])^2`, where `d_t[k]` is the distance from the candidate
/// to anchor `k` in the current frame and `d_prev`, `d_next` the distances
/// from the entry's neighbors to the same anchor in the adjacent frames.
/// An unreachable anchor makes the energy infinite.
pub fn energy_geodesic(d_prev: &[f64], d_t: &[f64], d_next: &[f64]) -> f64 {
    assert!(d_prev.len() == d_t.len() && d_t.len() == d_next.len(), "anchor counts differ");
    let mut e = 0.0;
    for ((p, t), q) in d_prev.iter().zip(d_t).zip(d_next) {
        if !(p.is_finite() && t.is_finite() && q.is_finite()) {
            return f64::INFINITY;
        }
        e += (p - t) * (p - t) + (t - q) * (t - q);
    }
    e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntryEnergy {
    pub temporal: f64,
    pub geodesic: f64,
}

impl EntryEnergy {
    pub fn total(&self) -> f64 {
        self.temporal + self.geodesic
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineReport {
    pub detection: Detection,
    /// Sum of the refinement energy over flagged entries, before the first
    /// sweep and after each sweep.
    pub energies: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Entries moved at least once.
    pub changed: usize,
    /// Flagged entries that could not be evaluated (no confident seed, no
    /// temporal neighbor, or only infinite energies) in the last sweep.
    pub unresolved: Vec<(usize, usize)>,
}

type Entry = (usize, Point3<f64>);

fn entry(a: &TrajectoryMatrix, i: usize, m: usize, over: Option<(usize, Entry)>) -> Option<Entry> {
    match over {
        Some((f, e)) if f == m => Some(e),
        _ => Some((a.id(i, m)?, a.position(i, m)?)),
    }
}

/// Energy of entry `(i, n)` placed at `t`, with entry `(i, over.0)`
/// optionally replaced. `None` without a matched temporal neighbor.
fn energy_at(
    a: &TrajectoryMatrix,
    cache: &mut GeodesicCache,
    det: &Detection,
    i: usize,
    n: usize,
    t: Entry,
    over: Option<(usize, Entry)>,
) -> Option<EntryEnergy> {
    let prev = n.checked_sub(1).and_then(|m| entry(a, i, m, over).map(|e| (m, e)));
    let next = (n + 1 < a.frame_count())
        .then_some(n + 1)
        .and_then(|m| entry(a, i, m, over).map(|e| (m, e)));
    // a missing boundary neighbor is replaced by the other one
    let (p, q) = match (prev, next) {
        (Some(p), Some(q)) => (p, q),
        (Some(p), None) => (p, p),
        (None, Some(q)) => (q, q),
        (None, None) => return None,
    };
    let temporal = energy_temporal(&p.1 .1, &q.1 .1, &t.1);
    let (mut dp, mut dt, mut dq) = (Vec::new(), Vec::new(), Vec::new());
    for &k in &det.anchors[n] {
        if k == i || [n, p.0, q.0].iter().any(|&m| det.outliers.contains(k, m)) {
            continue;
        }
        let (Some(kn), Some(kp), Some(kq)) = (a.id(k, n), a.id(k, p.0), a.id(k, q.0)) else {
            continue;
        };
        dp.push(cache.field(p.0, kp)[p.1 .0]);
        dt.push(cache.field(n, kn)[t.0]);
        dq.push(cache.field(q.0, kq)[q.1 .0]);
    }
    Some(EntryEnergy {
        temporal,
        geodesic: energy_geodesic(&dp, &dt, &dq),
    })
}

/// Seed and candidate vertices for entry `(i, n)`: the correspondent of the
/// confident row geodesically nearest to `i` on the reference frame, its
/// `k` geodesically nearest frame-`n` vertices (itself included), plus the
/// entry's current vertex.
fn candidates(a: &TrajectoryMatrix, cache: &mut GeodesicCache, det: &Detection, i: usize, n: usize, k: usize) -> Option<Vec<usize>> {
    let from_i = cache.field(a.reference(), i);
    let seed = (0..a.vertex_count())
        .filter(|&j| j != i && from_i[j].is_finite() && !det.outliers.contains(j, n) && a.id(j, n).is_some())
        .min_by(|&x, &y| from_i[x].total_cmp(&from_i[y]).then(x.cmp(&y)))?;
    let t0 = a.id(seed, n)?;
    let f = cache.field(n, t0);
    let mut order: Vec<usize> = (0..f.len()).filter(|&u| f[u].is_finite()).collect();
    order.sort_by(|&x, &y| f[x].total_cmp(&f[y]).then(x.cmp(&y)));
    order.truncate(k);
    if let Some(c) = a.id(i, n) {
        if !order.contains(&c) {
            order.push(c);
        }
    }
    Some(order)
}

fn argmin(scored: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    scored.fold(None, |best, (u, e)| match best {
        Some((bu, be)) if e > be || (e == be && u > bu) => Some((bu, be)),
        _ => Some((u, e)),
    })
}

/// Best frame-`n` vertex for the flagged entry `(i, n)` under the
/// temporal plus geodesic energy, with ties to the lowest vertex index.
/// `None` when the entry has no confident seed, no temporal neighbor, or
/// every candidate has infinite energy.
pub fn refine_outlier(
    a: &TrajectoryMatrix,
    cache: &mut GeodesicCache,
    det: &Detection,
    (i, n): (usize, usize),
    config: &RefineConfig,
) -> Option<(usize, Point3<f64>)> {
    let frame = cache.sequence().frame(n);
    let cands = candidates(a, cache, det, i, n, config.neighbors)?;
    let scored: Vec<(usize, f64)> = cands
        .iter()
        .map(|&u| {
            let t = (u, frame.vertices()[u]);
            energy_at(a, cache, det, i, n, t, None).map(|e| (u, e.total()))
        })
        .collect::<Option<_>>()?;
    let (u, e) = argmin(scored.into_iter())?;
    e.is_finite().then(|| (u, frame.vertices()[u]))
}

/// Energy of `(i, n)` at `t` plus the energies of flagged temporal
/// neighbors of the same row that see `t`: the part of the summed energy
/// that depends on this entry.
fn local_energy(
    a: &TrajectoryMatrix,
    cache: &mut GeodesicCache,
    det: &Detection,
    i: usize,
    n: usize,
    t: Entry,
) -> Option<f64> {
    let mut e = energy_at(a, cache, det, i, n, t, None)?.total();
    for m in [n.checked_sub(1), Some(n + 1)].into_iter().flatten() {
        if m < a.frame_count() && det.outliers.contains(i, m) {
            if let Some(cur) = entry(a, i, m, None) {
                if let Some(en) = energy_at(a, cache, det, i, m, cur, Some((n, t))) {
                    e += en.total();
                }
            }
        }
    }
    Some(e)
}

fn total_energy(a: &TrajectoryMatrix, cache: &mut GeodesicCache, det: &Detection) -> f64 {
    let mut sum = 0.0;
    for ((i, n), _) in det.outliers.iter() {
        if let Some(cur) = entry(a, i, n, None) {
            if let Some(e) = energy_at(a, cache, det, i, n, cur, None) {
                sum += e.total();
            }
        }
    }
    sum
}

/// Detects outliers and repairs them with [`refine_with`].
pub fn refine_sequence(
    a: &TrajectoryMatrix,
    seq: &MeshSequence,
    config: &RefineConfig,
) -> Result<(TrajectoryMatrix, RefineReport)> {
    let mut cache = GeodesicCache::new(seq);
    let det = detect_with(a, &mut cache, config)?;
    Ok(refine_with(a, &mut cache, det, config))
}

/// Sweeps the frames in temporal order and moves every flagged entry to the
/// candidate minimizing the energy terms that depend on it. Unflagged
/// entries never change. Because the current vertex is always a candidate,
/// the summed energy over flagged entries cannot increase. Stops after a
/// sweep without changes, or at `max_sweeps` with a warning.
pub fn refine_with(
    a: &TrajectoryMatrix,
    cache: &mut GeodesicCache,
    det: Detection,
    config: &RefineConfig,
) -> (TrajectoryMatrix, RefineReport) {
    let mut m = a.clone();
    let by_frame: Vec<Vec<usize>> = (0..m.frame_count()).map(|n| det.outliers.in_frame(n)).collect();
    let mut energies = vec![total_energy(&m, cache, &det)];
    let mut converged = det.outliers.is_empty();
    let mut sweeps = 0;
    let mut moved = std::collections::BTreeSet::new();
    let mut unresolved = Vec::new();
    let seq = cache.sequence();
    while !converged && sweeps < config.max_sweeps {
        sweeps += 1;
        unresolved.clear();
        let mut changed = 0;
        for (n, rows) in by_frame.iter().enumerate() {
            let verts = seq.frame(n).vertices();
            for &i in rows {
                let best = candidates(&m, cache, &det, i, n, config.neighbors).and_then(|cands| {
                    let scored: Vec<(usize, f64)> = cands
                        .iter()
                        .filter_map(|&u| local_energy(&m, cache, &det, i, n, (u, verts[u])).map(|e| (u, e)))
                        .collect();
                    argmin(scored.into_iter()).filter(|(_, e)| e.is_finite())
                });
                match best {
                    Some((u, _)) if m.id(i, n) != Some(u) => {
                        m.set(i, n, u, verts[u]);
                        moved.insert((i, n));
                        changed += 1;
                    }
                    Some(_) => {}
                    None => unresolved.push((i, n)),
                }
            }
        }
        energies.push(total_energy(&m, cache, &det));
        converged = changed == 0;
    }
    if !converged {
        log::warn!("refinement stopped after {sweeps} sweeps without converging");
    }
    if !unresolved.is_empty() {
        log::warn!("{} flagged entries could not be refined", unresolved.len());
    }
    let report = RefineReport {
        detection: det,
        energies,
        sweeps,
        converged,
        changed: moved.len(),
        unresolved,
    };
    (m, report)
}
