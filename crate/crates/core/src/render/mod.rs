//! Panoramic depth maps: a software rasterizer for the concentric-mosaic
//! camera, reprojection back to 3D, and PDM file I/O.

mod camera;
pub mod io;
mod raster;

pub use camera::{
    default_rig, rig_with_size, CmCamera, Projection, RigConfig, RIG_HALF_ANGLE, RIG_INCLINATIONS,
    RIG_RADIUS_SCALE, RIG_RESOLUTION,
};
pub use raster::render_pdm;

use nalgebra::Point3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("point lies on the camera axis; its azimuth is undefined")]
    OnAxis,
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("vertex {vertex} at distance {distance} from the center reaches the camera ring (radius {radius})")]
    MeshOutsideRing {
        vertex: usize,
        distance: f64,
        radius: f64,
    },
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("PDM was rendered with a different camera")]
    CameraMismatch,
    #[error("segmentation has {labels} labels but the mesh has {vertices} vertices")]
    LabelCount { labels: usize, vertices: usize },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RenderError> = std::result::Result<T, E>;

/// Multi-perspective depth panorama with its point and label maps.
///
/// Storage is row-major, `index = row * width + column`. A pixel is valid iff
/// its depth is positive; invalid pixels hold depth 0 and a NaN point.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmImage {
    pub camera: CmCamera,
    pub depth: Vec<f64>,
    pub points: Vec<Point3<f64>>,
    pub labels: Option<Vec<u32>>,
}

impl PdmImage {
    pub fn blank(camera: CmCamera) -> Self {
        let n = camera.width * camera.height;
        Self {
            camera,
            depth: vec![0.0; n],
            points: vec![Point3::new(f64::NAN, f64::NAN, f64::NAN); n],
            labels: None,
        }
    }

    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.depth[index] > 0.0
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.depth.iter().map(|&d| d > 0.0).collect()
    }

    /// Row-major indices of valid pixels.
    pub fn valid_pixels(&self) -> Vec<usize> {
        (0..self.depth.len())
            .filter(|&i| self.is_valid(i))
            .collect()
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }

    /// Depth divided by twice the ring radius (in `[0, 1)` for meshes inside
    /// the ring); invalid pixels are 0.
    pub fn normalized_depth(&self) -> Vec<f64> {
        let scale = 1.0 / (2.0 * self.camera.radius);
        self.depth.iter().map(|&d| d * scale).collect()
    }
}

/// Surface points of all valid pixels in row-major order.
pub fn reproject(camera: &CmCamera, pdm: &PdmImage) -> Result<Vec<Point3<f64>>> {
    if *camera != pdm.camera {
        return Err(RenderError::CameraMismatch);
    }
    Ok(pdm
        .valid_pixels()
        .into_iter()
        .map(|i| pdm.points[i])
        .collect())
}
