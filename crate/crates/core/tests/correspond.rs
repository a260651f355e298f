mod oracles;

use pdmc_core::correspond::{correspondences, nnsearch, vote, vote_matrix, ViewSet};
use pdmc_core::descriptor::FeatureField;
use pdmc_core::mesh::TriangleMesh;
use pdmc_core::render::{render_pdm, rig_with_size, PdmImage, RigConfig};
use pdmc_core::synth::{random_ellipsoid, subdivided_icosphere};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_views(rng: &mut impl Rng, mesh: &TriangleMesh, count: usize, size: usize) -> Vec<PdmImage> {
    let mut cams = rig_with_size(mesh, size, size).unwrap();
    cams.shuffle(rng);
    cams.truncate(count);
    cams.iter().map(|c| render_pdm(c, mesh, None).unwrap()).collect()
}

/// Small-integer descriptors so that nearest-neighbor ties are common.
fn integer_features(rng: &mut impl Rng, pdms: &[PdmImage], dim: usize) -> Vec<FeatureField> {
    pdms.iter()
        .enumerate()
        .map(|(view, pdm)| {
            let pixels = pdm.valid_pixels();
            let features = (0..pixels.len() * dim).map(|_| rng.gen_range(0..3) as f64).collect();
            FeatureField { view, dim, pixels, features }
        })
        .collect()
}

#[test]
fn voting_equals_transcribed_algorithm() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..30 {
        let s_mesh = random_ellipsoid(&mut rng, 1);
        let t_mesh = random_ellipsoid(&mut rng, 1);
        assert!(s_mesh.vertex_count() <= 50);
        let dim = 1 + trial % 3;
        let (ns, nt) = (rng.gen_range(2..=6), rng.gen_range(2..=6));
        let s_pdms = random_views(&mut rng, &s_mesh, ns, 12);
        let t_pdms = random_views(&mut rng, &t_mesh, nt, 12);
        let s_feat = integer_features(&mut rng, &s_pdms, dim);
        let t_feat = integer_features(&mut rng, &t_pdms, dim);

        let m = vote_matrix(
            &ViewSet { mesh: &s_mesh, pdms: &s_pdms, features: &s_feat },
            &ViewSet { mesh: &t_mesh, pdms: &t_pdms, features: &t_feat },
        )
        .unwrap();
        let flat = |f: &[FeatureField]| -> Vec<Vec<f64>> { f.iter().map(|x| x.features.clone()).collect() };
        let (sf, tf) = (flat(&s_feat), flat(&t_feat));
        let (want_m, want_c) = oracles::voting_oracle(
            &oracles::VotingShape { mesh: &s_mesh, pdms: &s_pdms, features: &sf },
            &oracles::VotingShape { mesh: &t_mesh, pdms: &t_pdms, features: &tf },
            dim,
        );
        for (i, row) in want_m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(m.get(i, j), v, "trial {trial} cell ({i}, {j})");
            }
        }
        assert_eq!(correspondences(&m), want_c);
    }
}

#[test]
fn kd_tree_search_equals_exhaustive_search_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for dim in 1..5 {
        let x: Vec<f64> = (0..200 * dim).map(|_| rng.gen_range(0..4) as f64).collect();
        let y: Vec<f64> = (0..300 * dim).map(|_| rng.gen_range(-1..5) as f64 * 0.5).collect();
        assert_eq!(nnsearch(&x, &y, dim).unwrap(), oracles::nnsearch_oracle(&x, &y, dim));
    }
}

#[test]
fn identical_shapes_with_exact_descriptors_match_themselves() {
    let mesh = subdivided_icosphere(1, 1.0);
    // rings above and below the equator so no vertex is only seen grazing
    let rig = RigConfig { width: 48, height: 48, inclinations: vec![-45.0, -15.0, 15.0, 45.0], ..RigConfig::default() };
    let pdms: Vec<PdmImage> = rig
        .cameras(&mesh)
        .unwrap()
        .iter()
        .map(|c| render_pdm(c, &mesh, None).unwrap())
        .collect();
    // descriptor = the surface point itself
    let features: Vec<FeatureField> = pdms
        .iter()
        .enumerate()
        .map(|(view, pdm)| {
            let pixels = pdm.valid_pixels();
            let features = pixels.iter().flat_map(|&p| [pdm.points[p].x, pdm.points[p].y, pdm.points[p].z]).collect();
            FeatureField { view, dim: 3, pixels, features }
        })
        .collect();
    let set = ViewSet { mesh: &mesh, pdms: &pdms, features: &features };
    let c = vote(&set, &set).unwrap();
    for (i, j) in c.iter().enumerate() {
        assert_eq!(*j, Some(i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_valid_source_pixel_casts_one_vote_per_target_view(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s_mesh = random_ellipsoid(&mut rng, 1);
        let t_mesh = random_ellipsoid(&mut rng, 1);
        let s_pdms = random_views(&mut rng, &s_mesh, 3, 10);
        let t_pdms = random_views(&mut rng, &t_mesh, 4, 10);
        let s_feat = integer_features(&mut rng, &s_pdms, 2);
        let t_feat = integer_features(&mut rng, &t_pdms, 2);
        let m = vote_matrix(
            &ViewSet { mesh: &s_mesh, pdms: &s_pdms, features: &s_feat },
            &ViewSet { mesh: &t_mesh, pdms: &t_pdms, features: &t_feat },
        ).unwrap();
        let src: u64 = s_pdms.iter().map(|p| p.valid_count() as u64).sum();
        let views = t_pdms.iter().filter(|p| p.valid_count() > 0).count() as u64;
        prop_assert_eq!(m.total(), src * views);
    }

    #[test]
    fn relabeling_target_vertices_relabels_correspondences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s_mesh = random_ellipsoid(&mut rng, 1);
        let t_mesh = random_ellipsoid(&mut rng, 1);
        let s_pdms = random_views(&mut rng, &s_mesh, 2, 10);
        let t_pdms = random_views(&mut rng, &t_mesh, 2, 10);
        // continuous descriptors: no ties, so argmax is order independent
        let cont = |rng: &mut ChaCha8Rng, pdms: &[PdmImage]| -> Vec<FeatureField> {
            pdms.iter().enumerate().map(|(view, pdm)| {
                let pixels = pdm.valid_pixels();
                let features = (0..pixels.len() * 2).map(|_| rng.gen::<f64>()).collect();
                FeatureField { view, dim: 2, pixels, features }
            }).collect()
        };
        let s_feat = cont(&mut rng, &s_pdms);
        let t_feat = cont(&mut rng, &t_pdms);
        let mut perm: Vec<usize> = (0..t_mesh.vertex_count()).collect();
        perm.shuffle(&mut rng);
        let t_perm = t_mesh.permuted(&perm).unwrap();
        let src = ViewSet { mesh: &s_mesh, pdms: &s_pdms, features: &s_feat };
        let a = vote_matrix(&src, &ViewSet { mesh: &t_mesh, pdms: &t_pdms, features: &t_feat }).unwrap();
        let b = vote_matrix(&src, &ViewSet { mesh: &t_perm, pdms: &t_pdms, features: &t_feat }).unwrap();
        // vertex `j` of the original sits at `pos[j]` in the permuted mesh
        let pos = locate(&t_mesh, &t_perm);
        for i in 0..s_mesh.vertex_count() {
            for j in 0..t_mesh.vertex_count() {
                prop_assert_eq!(a.get(i, j), b.get(i, pos[j]));
            }
        }
    }
}

fn locate(original: &TriangleMesh, permuted: &TriangleMesh) -> Vec<usize> {
    original
        .vertices()
        .iter()
        .map(|v| permuted.vertices().iter().position(|w| w == v).unwrap())
        .collect()
}
