use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{MeshError, Result, TriangleMesh};

/// Bits of resolution given to the longest edge. Paths of up to 2^22 edges
/// keep their lengths below 2^53 quanta, so every sum is exact.
const EDGE_BITS: i32 = 30;

/// Weighted edge graph of a mesh with Euclidean edge lengths.
///
/// Lengths are snapped to a dyadic grid sized from the longest edge. Path
/// lengths are then exact multiples of the grid step and do not depend on the
/// order in which a path is summed.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    offsets: Vec<usize>,
    neighbors: Vec<(usize, f64)>,
    quantum: f64,
}

impl EdgeGraph {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let edges = mesh.edges();
        let lengths: Vec<f64> = edges
            .iter()
            .map(|&(a, b)| (mesh.vertices()[a] - mesh.vertices()[b]).norm())
            .collect();
        Self::from_weighted_edges(mesh.vertex_count(), &edges, &lengths)
    }

    pub fn from_weighted_edges(n: usize, edges: &[(usize, usize)], lengths: &[f64]) -> Self {
        let max_len = lengths.iter().copied().fold(0.0, f64::max);
        let quantum = if max_len > 0.0 {
            2f64.powi(max_len.log2().ceil() as i32 - EDGE_BITS)
        } else {
            1.0
        };
        let mut degree = vec![0usize; n + 1];
        for &(a, b) in edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![(0usize, 0.0f64); offsets[n]];
        for (&(a, b), &len) in edges.iter().zip(lengths) {
            let w = (len / quantum).round() * quantum;
            neighbors[fill[a]] = (b, w);
            fill[a] += 1;
            neighbors[fill[b]] = (a, w);
            fill[b] += 1;
        }
        Self {
            offsets,
            neighbors,
            quantum,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Shortest-path distances from `source`. Unreachable vertices get `+inf`.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        self.multi_source(&[source]).0
    }

    /// Distances to the nearest of `sources` and the index (into `sources`)
    /// of that nearest source. Ties go to the lower source index.
    pub fn multi_source(&self, sources: &[usize]) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut owner: Vec<Option<usize>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        for (s, &v) in sources.iter().enumerate() {
            if dist[v] > 0.0 || owner[v].is_none_or(|o| s < o) {
                dist[v] = 0.0;
                owner[v] = Some(s);
                heap.push(Entry {
                    dist: 0.0,
                    owner: s,
                    vertex: v,
                });
            }
        }
        while let Some(Entry {
            dist: d,
            owner: s,
            vertex: u,
        }) = heap.pop()
        {
            if d > dist[u] || owner[u] != Some(s) {
                continue;
            }
            for &(v, w) in self.neighbors(u) {
                let nd = d + w;
                let better = match nd.total_cmp(&dist[v]) {
                    Ordering::Less => true,
                    Ordering::Equal => owner[v].is_none_or(|o| s < o),
                    Ordering::Greater => false,
                };
                if better {
                    dist[v] = nd;
                    owner[v] = Some(s);
                    heap.push(Entry {
                        dist: nd,
                        owner: s,
                        vertex: v,
                    });
                }
            }
        }
        (dist, owner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    owner: usize,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // BinaryHeap is a max-heap: reverse so the smallest (dist, owner) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.owner.cmp(&self.owner))
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Edge-graph geodesic distance from `source` to every vertex of `mesh`.
pub fn geodesic_distance(mesh: &TriangleMesh, source: usize) -> Result<Vec<f64>> {
    if source >= mesh.vertex_count() {
        return Err(MeshError::Argument(format!(
            "source vertex {source} out of range for {} vertices",
            mesh.vertex_count()
        )));
    }
    let dist = EdgeGraph::new(mesh).distances_from(source);
    let unreachable = dist.iter().filter(|d| d.is_infinite()).count();
    if unreachable > 0 {
        log::warn!("{unreachable} vertices unreachable from vertex {source}");
    }
    Ok(dist)
}

/// Distance to the nearest source and which source it is (ties to the lower source id).
pub fn multi_source_geodesic(
    mesh: &TriangleMesh,
    sources: &[usize],
) -> Result<(Vec<f64>, Vec<Option<usize>>)> {
    if let Some(&bad) = sources.iter().find(|&&s| s >= mesh.vertex_count()) {
        return Err(MeshError::Argument(format!(
            "source vertex {bad} out of range"
        )));
    }
    Ok(EdgeGraph::new(mesh).multi_source(sources))
}
