use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{Point3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{RenderError, Result};
use crate::mesh::TriangleMesh;

/// Ring inclinations of the default rig, degrees.
pub const RIG_INCLINATIONS: [f64; 6] = [0.0, 20.0, 30.0, 40.0, 50.0, 60.0];
/// Ring radius of the default rig relative to the bounding-sphere radius.
pub const RIG_RADIUS_SCALE: f64 = 2.5;
/// Vertical half-angle of the default rig. A ball of radius `R / 2.5` seen
/// from the ring subtends at most `asin(0.4) ~ 0.41` rad.
pub const RIG_HALF_ANGLE: f64 = 0.45;
pub const RIG_RESOLUTION: usize = 512;

/// Inward-looking concentric-mosaic camera.
///
/// For azimuth `a` the viewpoint sits on a ring around `center`:
/// `p(a) = c + R (cos t cos a, cos t sin a, sin t)` in the camera frame whose
/// third axis is `up` (`t` is the inclination). Column `j` holds azimuth
/// `a = 2 pi j / W`; within the meridian half-plane at `a`, row measures the
/// signed angle between the rays `p(a) -> c` and `p(a) -> v`, scaled so that
/// `+-half_angle` reach the bottom/top image borders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmCamera {
    pub center: Point3<f64>,
    pub radius: f64,
    pub inclination_deg: f64,
    pub width: usize,
    pub height: usize,
    pub half_angle: f64,
    pub up: Unit<Vector3<f64>>,
}

/// Continuous image coordinates of a projected point. Pixel `(j, i)` covers
/// `[j, j+1) x [i, i+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub column: f64,
    pub row: f64,
    pub depth: f64,
    /// `false` when the in-plane angle exceeds the half-angle.
    pub in_frame: bool,
}

impl Projection {
    /// Integer pixel `(column, row)` when the projection lands inside the image.
    pub fn pixel(&self, cam: &CmCamera) -> Option<(usize, usize)> {
        if !self.in_frame || self.row < 0.0 || self.row >= cam.height as f64 {
            return None;
        }
        let col = (self.column.floor() as usize).min(cam.width - 1);
        Some((col, self.row.floor() as usize))
    }
}

impl CmCamera {
    pub fn new(
        center: Point3<f64>,
        radius: f64,
        inclination_deg: f64,
        width: usize,
        height: usize,
        half_angle: f64,
    ) -> Result<Self> {
        let cam = Self {
            center,
            radius,
            inclination_deg,
            width,
            height,
            half_angle,
            up: Vector3::z_axis(),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_up(mut self, up: Vector3<f64>) -> Result<Self> {
        if up.norm() == 0.0 || !up.iter().all(|c| c.is_finite()) {
            return Err(RenderError::Camera(
                "up axis must be a finite non-zero vector".into(),
            ));
        }
        self.up = Unit::new_normalize(up);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(RenderError::Camera(format!(
                "ring radius {} must be positive",
                self.radius
            )));
        }
        if !(self.half_angle > 0.0 && self.half_angle < FRAC_PI_2) {
            return Err(RenderError::Camera(format!(
                "half-angle {} outside (0, pi/2)",
                self.half_angle
            )));
        }
        if self.width < 2 || self.height < 2 {
            return Err(RenderError::Camera(format!(
                "image size {}x{} below 2x2",
                self.width, self.height
            )));
        }
        if !(self.inclination_deg.abs() < 90.0) {
            return Err(RenderError::Camera(format!(
                "inclination {} outside (-90, 90) degrees",
                self.inclination_deg
            )));
        }
        Ok(())
    }

    /// Orthonormal camera frame `(e1, e2, up)`.
    pub fn frame(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let up = self.up.into_inner();
        let reference = if up.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let e1 = (reference - up * reference.dot(&up)).normalize();
        let e2 = up.cross(&e1);
        (e1, e2, up)
    }

    /// `v - center` in the camera frame.
    pub fn to_local(&self, v: &Point3<f64>) -> Vector3<f64> {
        let (e1, e2, up) = self.frame();
        let d = v - self.center;
        Vector3::new(d.dot(&e1), d.dot(&e2), d.dot(&up))
    }

    pub fn inclination(&self) -> f64 {
        self.inclination_deg.to_radians()
    }

    /// Viewpoint on the ring at azimuth `azimuth` (radians).
    pub fn ring_point(&self, azimuth: f64) -> Point3<f64> {
        let (e1, e2, up) = self.frame();
        let t = self.inclination();
        self.center
            + (e1 * (t.cos() * azimuth.cos()) + e2 * (t.cos() * azimuth.sin()) + up * t.sin())
                * self.radius
    }

    pub fn project(&self, v: &Point3<f64>) -> Result<Projection> {
        let local = self.to_local(v);
        let rho = local.x.hypot(local.y);
        if !(rho > 1e-12 * self.radius) {
            return Err(RenderError::OnAxis);
        }
        let azimuth = local.y.atan2(local.x).rem_euclid(TAU);
        let column = (azimuth / TAU * self.width as f64).rem_euclid(self.width as f64);

        let t = self.inclination();
        let (px, pz) = (self.radius * t.cos(), self.radius * t.sin());
        // meridian-plane vectors from the viewpoint to the center and to v
        let (ax, az) = (-px, -pz);
        let (bx, bz) = (rho - px, local.z - pz);
        let beta = (ax * bz - az * bx).atan2(ax * bx + az * bz);
        let half_h = self.height as f64 / 2.0;
        Ok(Projection {
            column,
            row: half_h + beta / self.half_angle * half_h,
            depth: bx.hypot(bz),
            in_frame: beta.abs() <= self.half_angle,
        })
    }

    /// Azimuth and in-plane angle at continuous image coordinates.
    pub fn angles_at(&self, column: f64, row: f64) -> (f64, f64) {
        let half_h = self.height as f64 / 2.0;
        (
            column / self.width as f64 * TAU,
            (row - half_h) / half_h * self.half_angle,
        )
    }

    /// Viewpoint and unit viewing direction through continuous image coordinates.
    pub fn ray(&self, column: f64, row: f64) -> (Point3<f64>, Vector3<f64>) {
        let (azimuth, beta) = self.angles_at(column, row);
        let origin = self.ring_point(azimuth);
        let to_center = (self.center - origin).normalize();
        let (e1, e2, _) = self.frame();
        // rotate inside the meridian plane; the in-plane normal of the
        // center ray points toward increasing row (downward)
        let radial = e1 * azimuth.cos() + e2 * azimuth.sin();
        let up = self.up.into_inner();
        let t = self.inclination();
        let down = -(up * t.cos() - radial * t.sin());
        let dir = to_center * beta.cos() + down * beta.sin();
        (origin, dir.normalize())
    }
}

/// Six rings around the bounding sphere at the default inclinations,
/// `radius = 2.5 x` the bounding radius, `RIG_RESOLUTION` square images.
pub fn default_rig(mesh: &TriangleMesh) -> Result<Vec<CmCamera>> {
    rig_with_size(mesh, RIG_RESOLUTION, RIG_RESOLUTION)
}

pub fn rig_with_size(mesh: &TriangleMesh, width: usize, height: usize) -> Result<Vec<CmCamera>> {
    RigConfig {
        width,
        height,
        ..RigConfig::default()
    }
    .cameras(mesh)
}

/// Ring layout of a rig, sized to each mesh's bounding sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub width: usize,
    pub height: usize,
    /// Degrees.
    pub inclinations: Vec<f64>,
    pub radius_scale: f64,
    pub half_angle: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            width: RIG_RESOLUTION,
            height: RIG_RESOLUTION,
            inclinations: RIG_INCLINATIONS.to_vec(),
            radius_scale: RIG_RADIUS_SCALE,
            half_angle: RIG_HALF_ANGLE,
        }
    }
}

impl RigConfig {
    pub fn cameras(&self, mesh: &TriangleMesh) -> Result<Vec<CmCamera>> {
        let (center, radius) = mesh.bounding_sphere().ok_or(RenderError::EmptyMesh)?;
        if !(radius > 0.0) {
            return Err(RenderError::Camera("mesh has zero extent".into()));
        }
        if self.inclinations.is_empty() {
            return Err(RenderError::Camera("rig has no rings".into()));
        }
        if !(self.radius_scale > 1.0) {
            return Err(RenderError::Camera(format!(
                "radius scale {} does not put the ring outside the mesh",
                self.radius_scale
            )));
        }
        self.inclinations
            .iter()
            .map(|&deg| CmCamera::new(center, self.radius_scale * radius, deg, self.width, self.height, self.half_angle))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn cam(incl: f64) -> CmCamera {
        CmCamera::new(Point3::origin(), 2.0, incl, 64, 48, 0.5).unwrap()
    }

    #[test]
    fn point_on_the_equator_projects_to_column_zero_center_row() {
        let c = cam(0.0);
        let d = 0.7;
        let p = c.project(&Point3::new(c.radius - d, 0.0, 0.0)).unwrap();
        assert_eq!(p.column, 0.0);
        assert_eq!(p.row, 24.0);
        assert!((p.depth - d).abs() < 1e-15);
        assert!(p.in_frame);
    }

    #[test]
    fn center_and_axis_points_are_rejected() {
        let c = cam(30.0);
        assert!(matches!(
            c.project(&Point3::origin()),
            Err(RenderError::OnAxis)
        ));
        assert!(matches!(
            c.project(&Point3::new(0.0, 0.0, 0.4)),
            Err(RenderError::OnAxis)
        ));
    }

    #[test]
    fn upper_points_map_to_upper_rows() {
        let c = cam(0.0);
        let hi = c.project(&Point3::new(0.5, 0.0, 0.3)).unwrap();
        let lo = c.project(&Point3::new(0.5, 0.0, -0.3)).unwrap();
        assert!(hi.row < 24.0 && lo.row > 24.0);
        assert!((hi.row + lo.row - 48.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_frame_is_flagged_not_clamped() {
        let c = cam(0.0);
        let p = c.project(&Point3::new(1.5, 0.0, 1.9)).unwrap();
        assert!(!p.in_frame);
        assert!(p.row < 0.0);
    }

    #[test]
    fn ray_inverts_projection() {
        let c = cam(40.0);
        for v in [Point3::new(0.3, -0.2, 0.1), Point3::new(-0.5, 0.4, -0.3)] {
            let p = c.project(&v).unwrap();
            let (o, d) = c.ray(p.column, p.row);
            let back = o + d * p.depth;
            assert!((back - v).norm() < 1e-12, "{back} vs {v}");
        }
    }

    #[test]
    fn tilted_up_axis_is_a_rotation() {
        let up = Vector3::new(1.0, 1.0, 0.0);
        let c = cam(20.0).with_up(up).unwrap();
        let p = c.project(&Point3::new(0.2, -0.1, 0.5)).unwrap();
        let (o, d) = c.ray(p.column, p.row);
        assert!((o + d * p.depth - Point3::new(0.2, -0.1, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn invalid_cameras() {
        assert!(CmCamera::new(Point3::origin(), 1.0, 0.0, 1, 8, 0.5).is_err());
        assert!(CmCamera::new(Point3::origin(), 1.0, 0.0, 8, 8, 1.6).is_err());
        assert!(CmCamera::new(Point3::origin(), -1.0, 0.0, 8, 8, 0.5).is_err());
    }

    #[test]
    fn default_rig_of_unit_sphere() {
        let sphere = synth::subdivided_icosphere(2, 1.0);
        let rig = default_rig(&sphere).unwrap();
        assert_eq!(rig.len(), 6);
        for (c, deg) in rig.iter().zip(RIG_INCLINATIONS) {
            assert!((c.radius - 2.5).abs() < 1e-12);
            assert_eq!(c.inclination_deg, deg);
            assert_eq!((c.width, c.height), (512, 512));
        }
    }

    #[test]
    fn rig_translates_with_the_mesh() {
        let m = synth::limb(
            &synth::LimbParams::default(),
            synth::LimbPose {
                swing: 0.4,
                bend: 1.0,
                ..Default::default()
            },
        );
        let shift = Vector3::new(3.0, -1.0, 2.0);
        let a = default_rig(&m).unwrap();
        let b = default_rig(&m.translated(shift)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y.center - x.center - shift).norm() < 1e-12);
            assert!((y.radius - x.radius).abs() < 1e-12);
        }
    }
}
