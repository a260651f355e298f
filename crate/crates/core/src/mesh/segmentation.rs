use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sampling::fps_on_graph;
use super::topology::connected_components;
use super::{EdgeGraph, MeshError, Result, TriangleMesh};

/// Number of random seeds drawn per model before farthest-point sampling takes over.
pub const RANDOM_SEEDS: usize = 10;

/// Per-vertex patch labels in `[0, k)` for segmentation number `id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub labels: Vec<u32>,
    pub k: usize,
    pub id: usize,
}

impl Segmentation {
    pub fn new(labels: Vec<u32>, k: usize, id: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
            return Err(MeshError::Argument(format!("label {bad} outside [0, {k})")));
        }
        Ok(Self { labels, k, id })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Text form: header line `K id`, then one label per line.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.k, self.id)?;
        for l in &self.labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead, path: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| MeshError::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing `K id` header".into()))?;
        let header = header?;
        let mut fields = header.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(k)), Some(Ok(id)), None) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(parse_err(1, format!("bad header `{header}`")));
        };
        let mut labels = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let l: u32 = t
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad label `{t}`")))?;
            if l as usize >= k {
                return Err(parse_err(i + 1, format!("label {l} outside [0, {k})")));
            }
            labels.push(l);
        }
        Ok(Self { labels, k, id })
    }
}

/// Splits `mesh` into `k` surface patches.
///
/// Every vertex takes the label of its geodesically nearest center from
/// [`segment_centers`] (ties to the lower center id).
pub fn generate_segmentation(
    mesh: &TriangleMesh,
    k: usize,
    rng_seed: u64,
    id: usize,
) -> Result<Segmentation> {
    let centers = segment_centers(mesh, k, rng_seed)?;
    let (_, owner) = EdgeGraph::new(mesh).multi_source(&centers);
    let labels = owner
        .into_iter()
        .map(|o| o.expect("every component holds a center") as u32)
        .collect();
    Ok(Segmentation { labels, k, id })
}

/// Patch centers: up to ten random seeds per connected component, extended
/// to the component's share of `k` by geodesic farthest-point sampling.
/// Components receive centers in proportion to their vertex counts, at least
/// one each.
pub fn segment_centers(mesh: &TriangleMesh, k: usize, rng_seed: u64) -> Result<Vec<usize>> {
    let n = mesh.vertex_count();
    if k == 0 || k > n {
        return Err(MeshError::Argument(format!(
            "need 1 <= K <= {n} vertices, got K = {k}"
        )));
    }
    let (component, count) = connected_components(mesh);
    if k < count {
        return Err(MeshError::Argument(format!(
            "K = {k} is smaller than the {count} connected components"
        )));
    }
    let mut members = vec![Vec::new(); count];
    for (v, &c) in component.iter().enumerate() {
        members[c].push(v);
    }
    let quotas = apportion(k, &members.iter().map(Vec::len).collect::<Vec<_>>());

    let graph = EdgeGraph::new(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centers = Vec::with_capacity(k);
    for (c, verts) in members.iter().enumerate() {
        let quota = quotas[c];
        let seeds: Vec<usize> = sample(&mut rng, verts.len(), quota.min(RANDOM_SEEDS))
            .into_iter()
            .map(|i| verts[i])
            .collect();
        let mask: Vec<bool> = component.iter().map(|&cc| cc == c).collect();
        centers.extend(fps_on_graph(&graph, &seeds, quota, Some(&mask)));
    }
    Ok(centers)
}

/// Largest-remainder split of `total` over `sizes`, each share at least one.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let spare = total - sizes.len();
    let mut shares: Vec<usize> = sizes.iter().map(|&s| 1 + spare * s / n).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse((spare * sizes[i]) % n), i));
    let mut left = total - shares.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if shares[i] < sizes[i] {
            shares[i] += 1;
            left -= 1;
        }
    }
    shares
}

/// Carries labels across a correspondence: `map[t]` is the source vertex
/// matched to target vertex `t`.
pub fn propagate_segmentation(seg: &Segmentation, map: &[Option<usize>]) -> Result<Segmentation> {
    let labels = map
        .iter()
        .enumerate()
        .map(|(t, s)| match s {
            Some(s) if *s < seg.labels.len() => Ok(seg.labels[*s]),
            Some(s) => Err(MeshError::Argument(format!(
                "target vertex {t} maps to source {s}, outside {} vertices",
                seg.labels.len()
            ))),
            None => Err(MeshError::Unmapped(t)),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Segmentation {
        labels,
        k: seg.k,
        id: seg.id,
    })
}
