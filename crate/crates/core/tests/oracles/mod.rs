//! Slow, direct reference implementations used as test oracles. Each one is
//! written from the mathematical definition, not from the library code.
#![allow(dead_code)]

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Point3, Vector3};
use pdmc_core::descriptor::{Tensor, TrainSample, REG_PAIR_CAP};
use pdmc_core::mesh::{EdgeGraph, TriangleMesh};
use pdmc_core::render::{reproject, CmCamera, PdmImage};

/// Moller-Trumbore ray/triangle intersection; distance along a unit `dir`.
pub fn ray_triangle(orig: &Point3<f64>, dir: &Vector3<f64>, tri: [&Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = orig - tri[0];
    let u = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-12).then_some(t)
}

fn nearest_hit(orig: &Point3<f64>, dir: &Vector3<f64>, mesh: &TriangleMesh) -> Option<f64> {
    let v = mesh.vertices();
    mesh.faces()
        .iter()
        .filter_map(|f| ray_triangle(orig, dir, [&v[f[0]], &v[f[1]], &v[f[2]]]))
        .min_by(f64::total_cmp)
}

/// Depth image of a concentric mosaic stitched from `ring` conventional
/// pinhole cameras spaced evenly on the ring. Every image column is taken
/// from the ring camera nearest to its azimuth; inside that camera the row
/// is a vertical pinhole ray through the angular row coordinate. Depth is
/// the hit distance from the camera center, 0 where the ray misses.
///
/// Works in world axes, so the camera must use the default `+z` up axis.
pub fn stitched_ring_depth(cam: &CmCamera, mesh: &TriangleMesh, ring: usize) -> Vec<f64> {
    assert_eq!(cam.up.into_inner(), Vector3::z(), "oracle assumes the default up axis");
    let (w, h) = (cam.width, cam.height);
    let t = cam.inclination_deg.to_radians();
    let mut depth = vec![0.0; w * h];
    for j in 0..w {
        let azimuth = TAU * (j as f64 + 0.5) / w as f64;
        let k = (azimuth / TAU * ring as f64).round() as usize % ring;
        let a = TAU * k as f64 / ring as f64;
        let radial = Vector3::new(a.cos(), a.sin(), 0.0);
        let center = cam.center + (radial * t.cos() + Vector3::z() * t.sin()) * cam.radius;
        let forward = (cam.center - center).normalize();
        // image "down": forward turned a quarter turn inside the vertical plane
        let (fr, fz) = (forward.dot(&radial), forward.z);
        let down = radial * (-fz) + Vector3::z() * fr;
        for i in 0..h {
            let beta = ((i as f64 + 0.5) - h as f64 / 2.0) / (h as f64 / 2.0) * cam.half_angle;
            let dir = (forward + down * beta.tan()).normalize();
            if let Some(d) = nearest_hit(&center, &dir, mesh) {
                depth[i * w + j] = d;
            }
        }
    }
    depth
}

/// Columns and rows whose pixel footprint contains the projection of `v`,
/// found by scanning every column sector and every row band.
pub fn covering_pixels(cam: &CmCamera, v: &Point3<f64>) -> (Vec<usize>, Vec<usize>) {
    assert_eq!(cam.up.into_inner(), Vector3::z(), "oracle assumes the default up axis");
    let d = v - cam.center;
    let azimuth = d.y.atan2(d.x).rem_euclid(TAU);
    let cols = (0..cam.width)
        .filter(|&j| {
            let lo = TAU * j as f64 / cam.width as f64;
            let hi = TAU * (j + 1) as f64 / cam.width as f64;
            lo <= azimuth && azimuth < hi
        })
        .collect();
    let t = cam.inclination_deg.to_radians();
    let radial = Vector3::new(azimuth.cos(), azimuth.sin(), 0.0);
    let eye = cam.center + (radial * t.cos() + Vector3::z() * t.sin()) * cam.radius;
    let to_center = (cam.center - eye).normalize();
    let to_v = (v - eye).normalize();
    // signed angle, positive when v lies below the central ray
    let down = radial * (-to_center.z) + Vector3::z() * to_center.dot(&radial);
    let beta = to_v.dot(&down).atan2(to_v.dot(&to_center));
    let rows = (0..cam.height)
        .filter(|&i| {
            let lo = (i as f64 - cam.height as f64 / 2.0) / (cam.height as f64 / 2.0) * cam.half_angle;
            let hi = ((i + 1) as f64 - cam.height as f64 / 2.0) / (cam.height as f64 / 2.0) * cam.half_angle;
            lo <= beta && beta < hi
        })
        .collect();
    (cols, rows)
}

/// `-(1/N) sum_i sum_p log softmax(theta_m . f)[label]` by plain loops,
/// without max subtraction.
pub fn loss_data_oracle(features: &Tensor, theta: &[f64], labels: usize, batch: &[&TrainSample]) -> f64 {
    let d = features.c;
    let mut total = 0.0;
    for (i, s) in batch.iter().enumerate() {
        for y in 0..s.height {
            for x in 0..s.width {
                let p = y * s.width + x;
                if !s.valid[p] {
                    continue;
                }
                let mut z = vec![0.0; labels];
                for (l, zl) in z.iter_mut().enumerate() {
                    for k in 0..d {
                        *zl += theta[(s.segmentation * labels + l) * d + k] * features.at(i, k, y, x);
                    }
                }
                let norm: f64 = z.iter().map(|v| v.exp()).sum();
                total += (z[s.labels[p] as usize].exp() / norm).ln();
            }
        }
    }
    -total / batch.len() as f64
}

/// Regularizer by brute force over all label pairs of every sample.
pub fn loss_reg_oracle(features: &Tensor, batch: &[&TrainSample]) -> f64 {
    let d = features.c;
    let mut total = 0.0;
    for (i, s) in batch.iter().enumerate() {
        let present: Vec<u32> = {
            let mut l: Vec<u32> = (0..s.labels.len()).filter(|&p| s.valid[p]).map(|p| s.labels[p]).collect();
            l.sort_unstable();
            l.dedup();
            l
        };
        let mean = |label: u32| -> Vec<f64> {
            let pix: Vec<usize> = (0..s.labels.len()).filter(|&p| s.valid[p] && s.labels[p] == label).collect();
            (0..d)
                .map(|k| pix.iter().map(|&p| features.at(i, k, p / s.width, p % s.width)).sum::<f64>() / pix.len() as f64)
                .collect()
        };
        for a in 0..present.len() {
            for b in a + 1..present.len() {
                let (ma, mb) = (mean(present[a]), mean(present[b]));
                let dist2: f64 = (0..d).map(|k| (ma[k] - mb[k]).powi(2)).sum();
                total -= dist2.min(REG_PAIR_CAP);
            }
        }
    }
    total
}

/// Exhaustive nearest neighbor of each row of `y` among the rows of `x`;
/// ties go to the lower index.
pub fn nnsearch_oracle(x: &[f64], y: &[f64], dim: usize) -> Vec<usize> {
    y.chunks_exact(dim)
        .map(|q| {
            let mut best = (0, f64::INFINITY);
            for (k, p) in x.chunks_exact(dim).enumerate() {
                let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 < best.1 {
                    best = (k, d2);
                }
            }
            best.0
        })
        .collect()
}

fn flat(points: &[Point3<f64>]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// One shape of a voting instance: mesh, PDM views and, per view, the
/// descriptors of its valid pixels in pixel order.
pub struct VotingShape<'a> {
    pub mesh: &'a TriangleMesh,
    pub pdms: &'a [PdmImage],
    pub features: &'a [Vec<f64>],
}

/// The voting procedure transcribed statement by statement. Returns the
/// vote matrix and the row argmax (lowest column on ties, `None` on empty
/// rows).
pub fn voting_oracle(s: &VotingShape, t: &VotingShape, dim: usize) -> (Vec<Vec<u32>>, Vec<Option<usize>>) {
    let mut m_vote = vec![vec![0u32; t.mesh.vertex_count()]; s.mesh.vertex_count()];
    for p in 0..s.pdms.len() {
        for q in 0..t.pdms.len() {
            let p_s = reproject(&s.pdms[p].camera, &s.pdms[p]).unwrap();
            let p_t = reproject(&t.pdms[q].camera, &t.pdms[q]).unwrap();
            let index_s = nnsearch_oracle(&flat(s.mesh.vertices()), &flat(&p_s), 3);
            let index_t = nnsearch_oracle(&flat(t.mesh.vertices()), &flat(&p_t), 3);
            if t.features[q].is_empty() {
                continue;
            }
            let f_index = nnsearch_oracle(&t.features[q], &s.features[p], dim);
            for k in 0..s.features[p].len() / dim {
                let vote_s = index_s[k];
                let vote_t = index_t[f_index[k]];
                m_vote[vote_s][vote_t] += 1;
            }
        }
    }
    let corres = m_vote
        .iter()
        .map(|row| {
            let mut best: Option<(usize, u32)> = None;
            for (j, &v) in row.iter().enumerate() {
                if v > 0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect();
    (m_vote, corres)
}

/// All-pairs shortest paths over the graph's (snapped) edge weights.
pub fn floyd_warshall(graph: &EdgeGraph) -> Vec<Vec<f64>> {
    let n = graph.vertex_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
        for &(j, w) in graph.neighbors(i) {
            row[j] = row[j].min(w);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Array-scan Dijkstra without a heap.
pub fn naive_dijkstra(graph: &EdgeGraph, source: usize) -> Vec<f64> {
    let n = graph.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&u| !done[u] && dist[u].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) else {
            break;
        };
        done[u] = true;
        for &(v, w) in graph.neighbors(u) {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
            }
        }
    }
    dist
}

/// Symmetric Hausdorff distance by the double max-min loop.
pub fn hausdorff_oracle(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    let directed = |x: &[Point3<f64>], y: &[Point3<f64>]| {
        let mut worst: f64 = 0.0;
        for p in x {
            let mut best = f64::INFINITY;
            for q in y {
                let d2 = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z);
                best = best.min(d2);
            }
            worst = worst.max(best);
        }
        worst.sqrt()
    };
    directed(a, b).max(directed(b, a))
}

/// KG error by scalar loops: `100 |B - B^|_F / |B - E(B)|_F`, with `E(B)`
/// the temporal mean of each row.
pub fn kg_oracle(b: &DMatrix<f64>, b_hat: &DMatrix<f64>) -> f64 {
    let (rows, cols) = b.shape();
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..rows {
        let mut mean = 0.0;
        for c in 0..cols {
            mean += b[(r, c)];
        }
        mean /= cols as f64;
        for c in 0..cols {
            num += (b[(r, c)] - b_hat[(r, c)]).powi(2);
            den += (b[(r, c)] - mean).powi(2);
        }
    }
    100.0 * num.sqrt() / den.sqrt()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)] == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Squared singular values of `m` with each column's mean removed first.
pub fn centered_squared_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut c = m.clone();
    for j in 0..cols {
        let mut mean = 0.0;
        for i in 0..rows {
            mean += m[(i, j)];
        }
        mean /= rows as f64;
        for i in 0..rows {
            c[(i, j)] -= mean;
        }
    }
    let mut gram = DMatrix::zeros(cols, cols);
    for a in 0..cols {
        for b in 0..cols {
            for i in 0..rows {
                gram[(a, b)] += c[(i, a)] * c[(i, b)];
            }
        }
    }
    jacobi_eigenvalues(&gram)
}
