use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Vector3};

use super::{CmCamera, PdmImage, RenderError, Result};
use crate::mesh::{Segmentation, TriangleMesh};

/// Renders `mesh` into a panoramic depth map seen by `camera`.
///
/// Every pixel center is ray-cast exactly: each triangle is cut by the
/// meridian plane of the pixel's column and the pixel ray is intersected
/// with the resulting segment. The nearest hit wins; on exact depth ties the
/// lower triangle index wins. With a segmentation, a pixel takes the label of
/// the winning triangle's corner nearest to the hit point.
pub fn render_pdm(
    camera: &CmCamera,
    mesh: &TriangleMesh,
    segmentation: Option<&Segmentation>,
) -> Result<PdmImage> {
    camera.validate()?;
    if let Some(seg) = segmentation {
        if seg.len() != mesh.vertex_count() {
            return Err(RenderError::LabelCount {
                labels: seg.len(),
                vertices: mesh.vertex_count(),
            });
        }
    }
    let local: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| camera.to_local(v)).collect();
    for (vertex, l) in local.iter().enumerate() {
        let distance = l.norm();
        if !(distance < camera.radius) {
            return Err(RenderError::MeshOutsideRing {
                vertex,
                distance,
                radius: camera.radius,
            });
        }
    }

    let mut pdm = PdmImage::blank(camera.clone());
    if segmentation.is_some() {
        pdm.labels = Some(vec![0; camera.width * camera.height]);
    }
    let w = camera.width;
    let columns: Vec<(f64, f64)> = (0..w)
        .map(|j| {
            let a = TAU * (j as f64 + 0.5) / w as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let t = camera.inclination();
    let meridian = Meridian {
        px: camera.radius * t.cos(),
        pz: camera.radius * t.sin(),
        ax: -t.cos(),
        az: -t.sin(),
        half_h: camera.height as f64 / 2.0,
        half_angle: camera.half_angle,
        height: camera.height,
    };

    let verts = mesh.vertices();
    for face in mesh.faces() {
        let l = [local[face[0]], local[face[1]], local[face[2]]];
        let world = [verts[face[0]], verts[face[1]], verts[face[2]]];
        for (first, count) in column_ranges(&l, w) {
            for step in 0..count {
                let j = (first + step as i64).rem_euclid(w as i64) as usize;
                let (ca, sa) = columns[j];
                let Some(seg) = slice(&l, &world, ca, sa) else {
                    continue;
                };
                meridian.cast(&seg, |i, depth, point| {
                    let idx = i * w + j;
                    let stored = pdm.depth[idx];
                    if stored > 0.0 && depth >= stored {
                        return;
                    }
                    pdm.depth[idx] = depth;
                    pdm.points[idx] = point;
                    if let (Some(labels), Some(s)) = (pdm.labels.as_mut(), segmentation) {
                        labels[idx] = s.labels[nearest_corner(face, &world, &point)];
                    }
                });
            }
        }
    }
    Ok(pdm)
}

fn nearest_corner(face: &[usize; 3], world: &[Point3<f64>; 3], p: &Point3<f64>) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if (world[k] - p).norm_squared() < (world[best] - p).norm_squared() {
            best = k;
        }
    }
    face[best]
}

/// Column ranges `(first, count)` whose meridian plane may cut the triangle;
/// `first` may be negative and is wrapped by the caller. A plane through the
/// axis holds two opposite azimuths, so every range has a mirror half a turn away.
fn column_ranges(l: &[Vector3<f64>; 3], w: usize) -> Vec<(i64, usize)> {
    let all = vec![(0, w)];
    let scale = l.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if l.iter().any(|v| v.x.hypot(v.y) <= 1e-12 * scale) {
        return all;
    }
    // origin inside the projected triangle means the axis pierces it
    let cross = |a: &Vector3<f64>, b: &Vector3<f64>| a.x * b.y - a.y * b.x;
    let s = [
        cross(&l[0], &l[1]),
        cross(&l[1], &l[2]),
        cross(&l[2], &l[0]),
    ];
    if (s.iter().all(|&x| x >= 0.0)) || s.iter().all(|&x| x <= 0.0) {
        return all;
    }
    let a0 = l[0].y.atan2(l[0].x);
    let unwrap = |v: &Vector3<f64>| {
        let mut d = v.y.atan2(v.x) - a0;
        if d > PI {
            d -= TAU;
        } else if d < -PI {
            d += TAU;
        }
        a0 + d
    };
    let angles = [a0, unwrap(&l[1]), unwrap(&l[2])];
    let lo = angles.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo >= PI {
        return all;
    }
    let per = w as f64 / TAU;
    [0.0, PI]
        .iter()
        .map(|&shift| {
            // one column of slack on each side; the slice test is exact
            let first = ((lo + shift) * per - 0.5).ceil() as i64 - 1;
            let last = ((hi + shift) * per - 0.5).floor() as i64 + 1;
            (first, ((last - first + 1).max(0) as usize).min(w))
        })
        .collect()
}

/// A triangle cut by a meridian plane, in signed `(radial, up)` coordinates
/// together with the matching world points.
struct Segment {
    q: [(f64, f64); 2],
    world: [Point3<f64>; 2],
}

fn slice(l: &[Vector3<f64>; 3], world: &[Point3<f64>; 3], ca: f64, sa: f64) -> Option<Segment> {
    let s = l.map(|v| -v.x * sa + v.y * ca);
    if s.iter().all(|&x| x == 0.0) {
        return None;
    }
    let mut pts: Vec<(Vector3<f64>, Point3<f64>)> = Vec::with_capacity(3);
    for k in 0..3 {
        let m = (k + 1) % 3;
        if s[k] == 0.0 {
            pts.push((l[k], world[k]));
        } else if (s[k] > 0.0) != (s[m] > 0.0) && s[m] != 0.0 {
            let u = s[k] / (s[k] - s[m]);
            pts.push((
                l[k] + (l[m] - l[k]) * u,
                world[k] + (world[m] - world[k]) * u,
            ));
        }
    }
    if pts.len() < 2 {
        return None;
    }
    // extreme pair of the collinear cut points
    let (mut bi, mut bj, mut bd) = (0, 1, -1.0);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = (pts[i].0 - pts[j].0).norm_squared();
            if d > bd {
                (bi, bj, bd) = (i, j, d);
            }
        }
    }
    let radial = |v: &Vector3<f64>| v.x * ca + v.y * sa;
    let (p0, p1) = (pts[bi], pts[bj]);
    Some(Segment {
        q: [(radial(&p0.0), p0.0.z), (radial(&p1.0), p1.0.z)],
        world: [p0.1, p1.1],
    })
}

/// Fixed geometry of every meridian plane: viewpoint `(px, pz)` and the
/// unit direction `(ax, az)` toward the center.
struct Meridian {
    px: f64,
    pz: f64,
    ax: f64,
    az: f64,
    half_h: f64,
    half_angle: f64,
    height: usize,
}

impl Meridian {
    fn row(&self, q: (f64, f64)) -> f64 {
        let (bx, bz) = (q.0 - self.px, q.1 - self.pz);
        let beta = (self.ax * bz - self.az * bx).atan2(self.ax * bx + self.az * bz);
        self.half_h + beta / self.half_angle * self.half_h
    }

    /// Calls `hit(row, depth, point)` for every row center covered by the segment.
    fn cast(&self, seg: &Segment, mut hit: impl FnMut(usize, f64, Point3<f64>)) {
        let r0 = self.row(seg.q[0]);
        let r1 = self.row(seg.q[1]);
        let (lo, hi) = (r0.min(r1), r0.max(r1));
        let i0 = (lo - 0.5).ceil().max(0.0);
        let i1 = (hi - 0.5).floor().min(self.height as f64 - 1.0);
        if i1 < i0 {
            return;
        }
        let (ex, ez) = (seg.q[1].0 - seg.q[0].0, seg.q[1].1 - seg.q[0].1);
        let (wx, wz) = (seg.q[0].0 - self.px, seg.q[0].1 - self.pz);
        for i in i0 as usize..=i1 as usize {
            let beta = ((i as f64 + 0.5) - self.half_h) / self.half_h * self.half_angle;
            let (sb, cb) = beta.sin_cos();
            // rotate the center direction by beta toward the lower image half
            let dx = cb * self.ax - sb * self.az;
            let dz = sb * self.ax + cb * self.az;
            let det = ex * dz - ez * dx;
            if det == 0.0 {
                continue;
            }
            let t = (ex * wz - ez * wx) / det;
            let u = ((dx * wz - dz * wx) / det).clamp(0.0, 1.0);
            if !(t > 0.0) {
                continue;
            }
            hit(i, t, seg.world[0] + (seg.world[1] - seg.world[0]) * u);
        }
    }
}
