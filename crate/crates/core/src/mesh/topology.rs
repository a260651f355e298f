use std::collections::HashMap;

use super::{MeshError, MeshSequence, Result, TriangleMesh};

/// Edge-connected components: component id per vertex and the component count.
/// Isolated vertices form their own components. Ids follow lowest vertex index.
pub fn connected_components(mesh: &TriangleMesh) -> (Vec<usize>, usize) {
    let n = mesh.vertex_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for (a, b) in mesh.edges() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut component = vec![0; n];
    let mut count = 0;
    for v in 0..n {
        let r = find(&mut parent, v);
        if ids[r] == usize::MAX {
            ids[r] = count;
            count += 1;
        }
        component[v] = ids[r];
    }
    (component, count)
}

/// Why a frame cannot be assigned a genus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NonManifold {
    Empty,
    IsolatedVertex(usize),
    Edge { a: usize, b: usize, faces: usize },
    VertexFan(usize),
    OddEuler { component: usize, euler: i64 },
}

/// Genus of a closed 2-manifold frame: the sum over its connected components
/// of `(2 - chi) / 2` with `chi = V - E + F`.
pub fn frame_genus(mesh: &TriangleMesh) -> std::result::Result<usize, NonManifold> {
    if mesh.face_count() == 0 {
        return Err(NonManifold::Empty);
    }
    let n = mesh.vertex_count();
    let mut edge_faces: HashMap<(usize, usize), usize> = HashMap::new();
    let mut fan: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for f in mesh.faces() {
        for i in 0..3 {
            let (a, b) = (f[i], f[(i + 1) % 3]);
            *edge_faces.entry((a.min(b), a.max(b))).or_default() += 1;
            // the link of vertex f[i] gains the opposite edge
            fan[f[i]].push((f[(i + 1) % 3], f[(i + 2) % 3]));
        }
    }
    let mut bad_edges: Vec<_> = edge_faces.iter().filter(|(_, &c)| c != 2).collect();
    bad_edges.sort();
    if let Some((&(a, b), &faces)) = bad_edges.first() {
        return Err(NonManifold::Edge { a, b, faces });
    }
    for (v, link) in fan.iter().enumerate() {
        if link.is_empty() {
            return Err(NonManifold::IsolatedVertex(v));
        }
        if !is_single_cycle(link) {
            return Err(NonManifold::VertexFan(v));
        }
    }

    let (component, count) = connected_components(mesh);
    let mut euler = vec![0i64; count];
    for &c in &component {
        euler[c] += 1;
    }
    for &(a, _) in edge_faces.keys() {
        euler[component[a]] -= 1;
    }
    for f in mesh.faces() {
        euler[component[f[0]]] += 1;
    }
    let mut genus = 0;
    for (c, &chi) in euler.iter().enumerate() {
        if chi > 2 || (2 - chi) % 2 != 0 {
            return Err(NonManifold::OddEuler {
                component: c,
                euler: chi,
            });
        }
        genus += ((2 - chi) / 2) as usize;
    }
    Ok(genus)
}

/// The link edges of a vertex must chain into one closed loop.
fn is_single_cycle(link: &[(usize, usize)]) -> bool {
    let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(a, b) in link {
        next.entry(a).or_default().push(b);
        next.entry(b).or_default().push(a);
    }
    if next.values().any(|adj| adj.len() != 2) {
        return false;
    }
    let start = link[0].0;
    let (mut prev, mut cur) = (start, link[0].1);
    let mut steps = 1;
    while cur != start {
        let adj = &next[&cur];
        let step = if adj[0] != prev { adj[0] } else { adj[1] };
        prev = cur;
        cur = step;
        steps += 1;
        if steps > link.len() {
            return false;
        }
    }
    steps == link.len()
}

/// Index of the lowest-genus frame (earliest on ties). Frames that are not
/// closed 2-manifolds are skipped with a warning.
pub fn select_reference_frame(seq: &MeshSequence) -> Result<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (n, frame) in seq.frames().iter().enumerate() {
        match frame_genus(frame) {
            Ok(g) => {
                if best.is_none_or(|(_, bg)| g < bg) {
                    best = Some((n, g));
                }
            }
            Err(why) => log::warn!("frame {n} skipped for reference selection: {why:?}"),
        }
    }
    best.map(|(n, _)| n).ok_or(MeshError::NoManifoldFrame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn icosahedron_is_genus_zero() {
        let m = synth::icosahedron();
        assert_eq!(m.vertex_count(), 12);
        assert_eq!(m.edges().len(), 30);
        assert_eq!(m.face_count(), 20);
        assert_eq!(frame_genus(&m), Ok(0));
    }

    #[test]
    fn torus_is_genus_one() {
        assert_eq!(frame_genus(&synth::torus(12, 8, 1.0, 0.3)), Ok(1));
    }

    #[test]
    fn plates_have_their_constructed_handle_count() {
        for handles in 0..5 {
            let m = synth::holed_plate(handles);
            assert_eq!(frame_genus(&m), Ok(handles), "{handles} handles");
        }
    }

    #[test]
    fn genus_sums_over_components() {
        let t = synth::torus(10, 6, 1.0, 0.3);
        let two = synth::merge(&[
            t.clone(),
            t.translated(nalgebra::Vector3::new(4.0, 0.0, 0.0)),
        ]);
        assert_eq!(frame_genus(&two), Ok(2));
    }

    #[test]
    fn open_surfaces_are_rejected() {
        let m = synth::icosahedron();
        let faces = m.faces()[1..].to_vec();
        let open = TriangleMesh::new(m.vertices().to_vec(), faces).unwrap();
        assert!(matches!(frame_genus(&open), Err(NonManifold::Edge { .. })));
    }

    #[test]
    fn reference_frame_prefers_lowest_genus() {
        let seq = MeshSequence::new(
            vec![
                synth::torus(12, 8, 1.0, 0.3),
                synth::subdivided_icosphere(1, 1.0),
            ],
            24.0,
        )
        .unwrap();
        assert_eq!(select_reference_frame(&seq).unwrap(), 1);

        let ties =
            MeshSequence::new(vec![synth::icosahedron(), synth::icosahedron()], 24.0).unwrap();
        assert_eq!(select_reference_frame(&ties).unwrap(), 0);
    }

    #[test]
    fn all_non_manifold_is_an_error() {
        let m = synth::icosahedron();
        let open = TriangleMesh::new(m.vertices().to_vec(), m.faces()[2..].to_vec()).unwrap();
        let seq = MeshSequence::new(vec![open], 24.0).unwrap();
        assert!(matches!(
            select_reference_frame(&seq),
            Err(MeshError::NoManifoldFrame)
        ));
    }

    #[test]
    fn components_follow_lowest_vertex() {
        let a = synth::icosahedron();
        let m = synth::merge(&[
            a.clone(),
            a.translated(nalgebra::Vector3::new(3.0, 0.0, 0.0)),
        ]);
        let (c, n) = connected_components(&m);
        assert_eq!(n, 2);
        assert!(c[..12].iter().all(|&x| x == 0));
        assert!(c[12..].iter().all(|&x| x == 1));
    }
}
