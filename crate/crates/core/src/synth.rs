//! Procedural test geometry: platonic and subdivided spheres, tori, plates
//! with a chosen number of handles, dumbbells, and an articulated two-segment
//! limb that can be posed and animated with a consistent topology.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::TriangleMesh;

fn build(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> TriangleMesh {
    TriangleMesh::new(vertices, faces).expect("generated mesh is well formed")
}

pub fn icosahedron() -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let vertices = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize()))
    .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    build(vertices, faces)
}

/// Icosahedron with `level` rounds of 4:1 midpoint subdivision, projected to a sphere.
pub fn subdivided_icosphere(level: usize, radius: f64) -> TriangleMesh {
    let base = icosahedron();
    let mut vertices: Vec<Point3<f64>> = base.vertices().to_vec();
    let mut faces = base.faces().to_vec();
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for i in 0..3 {
                let (a, b) = (f[i], f[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[i] = *midpoint.entry(key).or_insert_with(|| {
                    let m = nalgebra::center(&vertices[a], &vertices[b]);
                    vertices.push(Point3::from(m.coords.normalize()));
                    vertices.len() - 1
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    build(vertices, faces)
}

/// Latitude/longitude sphere: `rings` interior latitude rings of `segments`
/// vertices plus two poles, `rings * segments + 2` vertices in total.
pub fn uv_sphere(rings: usize, segments: usize, radius: f64) -> TriangleMesh {
    let mut vertices = vec![Point3::new(0.0, 0.0, radius)];
    for r in 0..rings {
        let polar = PI * (r + 1) as f64 / (rings + 1) as f64;
        for s in 0..segments {
            let az = TAU * s as f64 / segments as f64;
            vertices.push(Point3::new(
                radius * polar.sin() * az.cos(),
                radius * polar.sin() * az.sin(),
                radius * polar.cos(),
            ));
        }
    }
    vertices.push(Point3::new(0.0, 0.0, -radius));
    let south = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + r * segments + s % segments;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(0, s), ring(0, s + 1)]);
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    for r in 0..rings - 1 {
        for s in 0..segments {
            faces.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
            faces.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
        }
    }
    build(vertices, faces)
}

pub fn torus(major_segments: usize, minor_segments: usize, major: f64, minor: f64) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(major_segments * minor_segments);
    for i in 0..major_segments {
        let u = TAU * i as f64 / major_segments as f64;
        for j in 0..minor_segments {
            let v = TAU * j as f64 / minor_segments as f64;
            let r = major + minor * v.cos();
            vertices.push(Point3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % major_segments) * minor_segments + j % minor_segments;
    let mut faces = Vec::new();
    for i in 0..major_segments {
        for j in 0..minor_segments {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build(vertices, faces)
}

/// Closed thickened plate pierced by `handles` square holes: a surface of genus `handles`.
pub fn holed_plate(handles: usize) -> TriangleMesh {
    // cells on a (2h+1) x 3 grid; holes at odd columns of the middle row
    let cols = 2 * handles + 1;
    let rows = 3;
    let hole = |cx: usize, cy: usize| cy == 1 && cx % 2 == 1;
    let solid = |cx: isize, cy: isize| {
        cx >= 0
            && cy >= 0
            && (cx as usize) < cols
            && (cy as usize) < rows
            && !hole(cx as usize, cy as usize)
    };
    let mut vertices = Vec::new();
    let mut index: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut vert = |x: usize, y: usize, layer: usize| {
        *index.entry((x, y, layer)).or_insert_with(|| {
            vertices.push(Point3::new(
                x as f64,
                y as f64,
                if layer == 0 { 0.25 } else { -0.25 },
            ));
            vertices.len() - 1
        })
    };
    let mut faces = Vec::new();
    for cy in 0..rows {
        for cx in 0..cols {
            if !solid(cx as isize, cy as isize) {
                continue;
            }
            let (a, b, c, d) = ((cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1));
            let t = [
                vert(a.0, a.1, 0),
                vert(b.0, b.1, 0),
                vert(c.0, c.1, 0),
                vert(d.0, d.1, 0),
            ];
            faces.push([t[0], t[1], t[2]]);
            faces.push([t[0], t[2], t[3]]);
            let u = [
                vert(a.0, a.1, 1),
                vert(b.0, b.1, 1),
                vert(c.0, c.1, 1),
                vert(d.0, d.1, 1),
            ];
            faces.push([u[0], u[2], u[1]]);
            faces.push([u[0], u[3], u[2]]);
            // walls on every side facing a non-solid cell, oriented outward
            let (x, y) = (cx as isize, cy as isize);
            let sides = [
                ((x, y - 1), a, b),
                ((x + 1, y), b, c),
                ((x, y + 1), c, d),
                ((x - 1, y), d, a),
            ];
            for ((nx, ny), p, q) in sides {
                if !solid(nx, ny) {
                    let (p0, q0, p1, q1) = (
                        vert(p.0, p.1, 0),
                        vert(q.0, q.1, 0),
                        vert(p.0, p.1, 1),
                        vert(q.0, q.1, 1),
                    );
                    faces.push([p0, p1, q1]);
                    faces.push([p0, q1, q0]);
                }
            }
        }
    }
    build(vertices, faces)
}

/// Concatenates meshes into one (disjoint components, indices shifted).
pub fn merge(meshes: &[TriangleMesh]) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for m in meshes {
        let base = vertices.len();
        vertices.extend_from_slice(m.vertices());
        faces.extend(
            m.faces()
                .iter()
                .map(|f| [f[0] + base, f[1] + base, f[2] + base]),
        );
    }
    build(vertices, faces)
}

/// Random ellipsoid: an icosphere under a random positive scaling and rotation (convex).
pub fn random_ellipsoid(rng: &mut impl Rng, level: usize) -> TriangleMesh {
    let scale = Vector3::new(
        rng.gen_range(0.4..1.0),
        rng.gen_range(0.4..1.0),
        rng.gen_range(0.4..1.0),
    );
    let axis = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let rot = Rotation3::new(axis.normalize() * rng.gen_range(0.0..PI));
    let offset = Vector3::new(
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.3..0.3),
    );
    subdivided_icosphere(level, 1.0)
        .map_vertices(|v| Point3::from(rot * v.coords.component_mul(&scale) + offset))
}

/// Generalized cylinder around a polyline-free centerline given as samples:
/// one ring of `segments` vertices per `(center, normal, binormal, radius)`
/// plus a pole at each end.
fn tube(
    rings: &[(Point3<f64>, Vector3<f64>, Vector3<f64>, Vec<f64>)],
    poles: (Point3<f64>, Point3<f64>),
    segments: usize,
) -> TriangleMesh {
    let mut vertices = vec![poles.0];
    for (c, n, b, radius) in rings {
        for (s, &r) in radius.iter().enumerate().take(segments) {
            let psi = TAU * s as f64 / segments as f64;
            vertices.push(c + (n * psi.cos() + b * psi.sin()) * r);
        }
    }
    vertices.push(poles.1);
    let last = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + r * segments + s % segments;
    let n_rings = rings.len();
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(0, s + 1), ring(0, s)]);
        faces.push([last, ring(n_rings - 1, s), ring(n_rings - 1, s + 1)]);
    }
    for r in 0..n_rings - 1 {
        for s in 0..segments {
            faces.push([ring(r, s), ring(r, s + 1), ring(r + 1, s + 1)]);
            faces.push([ring(r, s), ring(r + 1, s + 1), ring(r + 1, s)]);
        }
    }
    build(vertices, faces)
}

/// Two spheres joined by a cylindrical neck along the x axis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DumbbellParams {
    pub bulb_radius: f64,
    pub neck_radius: f64,
    pub neck_length: f64,
    pub segments: usize,
    pub bulb_rings: usize,
    pub neck_rings: usize,
}

impl Default for DumbbellParams {
    fn default() -> Self {
        Self {
            bulb_radius: 1.0,
            neck_radius: 0.3,
            neck_length: 2.0,
            segments: 12,
            bulb_rings: 8,
            neck_rings: 6,
        }
    }
}

/// Returns the mesh; vertex 0 and the last vertex are the two far poles.
pub fn dumbbell(p: &DumbbellParams) -> TriangleMesh {
    let r = p.bulb_radius;
    // polar angle where the bulb surface meets the neck radius
    let join = (p.neck_radius / r).asin();
    let half = p.neck_length / 2.0 + r * join.cos();
    let n = Vector3::y();
    let b = Vector3::z();
    let mut rings = Vec::new();
    let bulb = |from_left: bool, k: usize| {
        let polar = (PI - join) * (k + 1) as f64 / (p.bulb_rings + 1) as f64;
        let x = -r * polar.cos();
        let center_x = if from_left { -half } else { half };
        let x = if from_left {
            center_x + x
        } else {
            center_x - x
        };
        (Point3::new(x, 0.0, 0.0), r * polar.sin())
    };
    for k in 0..p.bulb_rings {
        let (c, rad) = bulb(true, k);
        rings.push((c, n, b, vec![rad; p.segments]));
    }
    for k in 0..p.neck_rings {
        let t = (k + 1) as f64 / (p.neck_rings + 1) as f64;
        let x = -p.neck_length / 2.0 + t * p.neck_length;
        rings.push((
            Point3::new(x, 0.0, 0.0),
            n,
            b,
            vec![p.neck_radius; p.segments],
        ));
    }
    for k in (0..p.bulb_rings).rev() {
        let (c, rad) = bulb(false, k);
        rings.push((c, n, b, vec![rad; p.segments]));
    }
    tube(
        &rings,
        (
            Point3::new(-half - r, 0.0, 0.0),
            Point3::new(half + r, 0.0, 0.0),
        ),
        p.segments,
    )
}

/// A surface bump on the limb: arclength fraction, angle around the limb,
/// relative amplitude and angular/longitudinal width.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bump {
    pub at: f64,
    pub angle: f64,
    pub amplitude: f64,
    pub width: f64,
}

/// Two-segment articulated limb (upper and lower segment joined by an elbow).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimbParams {
    pub upper_length: f64,
    pub lower_length: f64,
    pub base_radius: f64,
    pub tip_radius: f64,
    /// Arclength over which the elbow bend is blended.
    pub joint_width: f64,
    pub rings: usize,
    pub segments: usize,
    pub cap_rings: usize,
    pub bumps: Vec<Bump>,
}

impl Default for LimbParams {
    fn default() -> Self {
        Self {
            upper_length: 1.0,
            lower_length: 0.9,
            base_radius: 0.2,
            tip_radius: 0.12,
            joint_width: 0.3,
            rings: 24,
            segments: 12,
            cap_rings: 2,
            bumps: vec![
                Bump {
                    at: 0.1,
                    angle: 0.0,
                    amplitude: 0.35,
                    width: 0.5,
                },
                Bump {
                    at: 0.3,
                    angle: 2.1,
                    amplitude: 0.5,
                    width: 0.6,
                },
                Bump {
                    at: 0.45,
                    angle: 4.0,
                    amplitude: 0.3,
                    width: 0.5,
                },
                Bump {
                    at: 0.62,
                    angle: 1.0,
                    amplitude: 0.45,
                    width: 0.5,
                },
                Bump {
                    at: 0.75,
                    angle: 3.3,
                    amplitude: 0.4,
                    width: 0.6,
                },
                Bump {
                    at: 0.9,
                    angle: 5.2,
                    amplitude: 0.5,
                    width: 0.5,
                },
            ],
        }
    }
}

impl LimbParams {
    pub fn vertex_count(&self) -> usize {
        (self.rings + 2 * self.cap_rings) * self.segments + 2
    }

    /// Limb sized for the codec benchmarks: exactly 2000 vertices.
    pub fn dense() -> Self {
        Self {
            rings: 70,
            segments: 27,
            cap_rings: 2,
            ..Self::default()
        }
    }
}

/// Joint angles of the limb: `swing` rotates the whole limb about the
/// shoulder (y axis), `bend` folds the lower segment at the elbow; radians.
/// `wave` adds a soft bend `wave * sin(2 pi s / length - phase)` along the
/// arclength `s`, which lets a motion lag behind the shoulder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LimbPose {
    pub swing: f64,
    pub bend: f64,
    #[serde(default)]
    pub wave: f64,
    #[serde(default)]
    pub phase: f64,
}

fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Meshes the limb in `pose`. Hangs from the origin along -z; bends in the xz plane.
pub fn limb(p: &LimbParams, pose: LimbPose) -> TriangleMesh {
    let total = p.upper_length + p.lower_length;
    let angle_at = |s: f64| {
        pose.swing
            + pose.bend * smoothstep((s - p.upper_length) / p.joint_width + 0.5)
            + pose.wave * (TAU * s / total - pose.phase).sin()
    };
    // direction of the centerline for bend angle a: starts pointing down
    let dir = |a: f64| Vector3::new(a.sin(), 0.0, -a.cos());
    let normal = |a: f64| Vector3::new(a.cos(), 0.0, a.sin());
    let base_radius = |s: f64| {
        let t = s / total;
        p.base_radius + (p.tip_radius - p.base_radius) * t
    };
    let bump_factor = |t: f64, psi: f64| {
        let mut f = 1.0;
        for b in &p.bumps {
            let dpsi = (psi - b.angle + PI).rem_euclid(TAU) - PI;
            let ds = (t - b.at) * total / (p.base_radius * 2.0);
            f += b.amplitude * (-(dpsi * dpsi + ds * ds) / (b.width * b.width)).exp();
        }
        f
    };

    // centerline by midpoint integration of the direction field
    let steps_per_ring = 32;
    let n_rings = p.rings;
    let ds = total / (n_rings - 1) as f64;
    let mut centers = Vec::with_capacity(n_rings);
    let mut c = Point3::origin();
    centers.push(c);
    for r in 1..n_rings {
        for k in 0..steps_per_ring {
            let s = (r - 1) as f64 * ds + (k as f64 + 0.5) * ds / steps_per_ring as f64;
            c += dir(angle_at(s)) * (ds / steps_per_ring as f64);
        }
        centers.push(c);
    }

    let b = Vector3::y();
    let mut rings = Vec::new();
    let ring_radius = |s: f64, scale: f64| {
        (0..p.segments)
            .map(|k| {
                let psi = TAU * k as f64 / p.segments as f64;
                scale * base_radius(s) * bump_factor(s / total, psi)
            })
            .collect::<Vec<f64>>()
    };
    let start_a = angle_at(0.0);
    let end_a = angle_at(total);
    let r0 = base_radius(0.0);
    let r1 = base_radius(total);
    for k in (0..p.cap_rings).rev() {
        let th = PI / 2.0 * (k + 1) as f64 / (p.cap_rings + 1) as f64;
        let center = centers[0] - dir(start_a) * (r0 * th.sin());
        rings.push((center, normal(start_a), b, ring_radius(0.0, th.cos())));
    }
    for (r, center) in centers.iter().enumerate() {
        let s = r as f64 * ds;
        let a = angle_at(s);
        rings.push((*center, normal(a), b, ring_radius(s, 1.0)));
    }
    for k in 0..p.cap_rings {
        let th = PI / 2.0 * (k + 1) as f64 / (p.cap_rings + 1) as f64;
        let center = centers[n_rings - 1] + dir(end_a) * (r1 * th.sin());
        rings.push((center, normal(end_a), b, ring_radius(total, th.cos())));
    }
    let poles = (
        centers[0] - dir(start_a) * r0,
        centers[n_rings - 1] + dir(end_a) * r1,
    );
    tube(&rings, poles, p.segments)
}

/// Poses of a periodic arm swing: the shoulder swings with amplitude
/// `swing_amp` while the elbow bends between 0 and `bend_amp` at a different
/// phase, so the clip is not a single rigid motion.
pub fn swing_poses(frames: usize, swing_amp: f64, bend_amp: f64) -> Vec<LimbPose> {
    (0..frames)
        .map(|n| {
            let t = n as f64 / frames as f64;
            LimbPose {
                swing: swing_amp * (TAU * t).sin(),
                bend: bend_amp * 0.5 * (1.0 - (TAU * t + 0.7).cos()),
                ..Default::default()
            }
        })
        .collect()
}

/// Arm swing with follow-through: the swing and elbow bend of
/// [`swing_poses`] plus a bend wave of amplitude `wave_amp` that travels
/// from shoulder to tip twice per clip.
pub fn whip_poses(frames: usize, swing_amp: f64, bend_amp: f64, wave_amp: f64) -> Vec<LimbPose> {
    swing_poses(frames, swing_amp, bend_amp)
        .into_iter()
        .enumerate()
        .map(|(n, pose)| LimbPose {
            wave: wave_amp,
            phase: 2.0 * TAU * n as f64 / frames as f64,
            ..pose
        })
        .collect()
}

pub fn limb_sequence(p: &LimbParams, poses: &[LimbPose]) -> Vec<TriangleMesh> {
    poses.iter().map(|&pose| limb(p, pose)).collect()
}
