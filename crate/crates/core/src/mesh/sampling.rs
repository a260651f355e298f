use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{EdgeGraph, MeshError, Result, TriangleMesh};

/// Geodesic farthest-point sampling. Starts from `seeds` and appends the
/// vertex farthest from the chosen set until `count` samples exist.
/// Ties go to the lowest vertex index.
pub fn farthest_point_sample(
    mesh: &TriangleMesh,
    seeds: &[usize],
    count: usize,
) -> Result<Vec<usize>> {
    let n = mesh.vertex_count();
    if count > n {
        return Err(MeshError::Argument(format!(
            "cannot sample {count} points from {n} vertices"
        )));
    }
    if count < seeds.len() {
        return Err(MeshError::Argument(format!(
            "count {count} is smaller than the {} seeds",
            seeds.len()
        )));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= n) {
        return Err(MeshError::Argument(format!("seed {bad} out of range")));
    }
    let graph = EdgeGraph::new(mesh);
    Ok(fps_on_graph(&graph, seeds, count, None))
}

/// FPS restricted to the vertices where `mask` is true (all when `None`).
pub(crate) fn fps_on_graph(
    graph: &EdgeGraph,
    seeds: &[usize],
    count: usize,
    mask: Option<&[bool]>,
) -> Vec<usize> {
    let n = graph.vertex_count();
    let mut chosen = vec![false; n];
    let mut samples = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; n];
    for &s in seeds {
        samples.push(s);
        if !chosen[s] {
            chosen[s] = true;
            relax_from(graph, s, &mut dist);
        }
    }
    while samples.len() < count {
        let mut best: Option<usize> = None;
        for v in 0..n {
            if chosen[v] || mask.is_some_and(|m| !m[v]) {
                continue;
            }
            if best.is_none_or(|b| dist[v] > dist[b]) {
                best = Some(v);
            }
        }
        let Some(next) = best else { break };
        chosen[next] = true;
        samples.push(next);
        relax_from(graph, next, &mut dist);
    }
    samples
}

/// Lowers `dist` to the distance from `source` wherever that is smaller.
fn relax_from(graph: &EdgeGraph, source: usize, dist: &mut [f64]) {
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((Key(0.0), source)));
    while let Some(Reverse((Key(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in graph.neighbors(u) {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((Key(nd), v)));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
