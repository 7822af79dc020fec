//! Simulated, deliberately fallible object detection.
//!
//! Every random draw is keyed by `(seed, seq, object id, camera)`, so the
//! result for one object never depends on which other objects exist or on
//! the order in which cameras are sensed.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraId, CameraModel};
use crate::digest::Digest64;
use crate::kinematics::JointConfig;
use crate::math::Vec3;
use crate::world::{GroundTruthWorld, ObjectInstance};

/// An injected failure: `object` is never detected by `camera`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForcedMiss {
    pub object: String,
    pub camera: CameraId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    pub p_miss: f64,
    /// Per-axis Gaussian position noise, meters.
    pub pos_sigma: f64,
    /// Relative size noise: each extent is scaled by `1 + N(0, size_sigma)`.
    pub size_sigma: f64,
    /// Objects at or above this occluded fraction are not detected.
    pub tau_occ: f64,
    #[serde(default)]
    pub forced_miss: Vec<ForcedMiss>,
    pub seed: u64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig { p_miss: 0.05, pos_sigma: 0.005, size_sigma: 0.05, tau_occ: 0.5, forced_miss: Vec::new(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionConfigError {
    #[error("p_miss and tau_occ must lie in [0, 1]")]
    Probability,
    #[error("noise sigmas must be non-negative")]
    Sigma,
}

impl PerceptionConfig {
    /// Perfect perception: no misses, no noise.
    pub fn noiseless(seed: u64) -> Self {
        PerceptionConfig { p_miss: 0.0, pos_sigma: 0.0, size_sigma: 0.0, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PerceptionConfigError> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.p_miss) || !unit(self.tau_occ) {
            return Err(PerceptionConfigError::Probability);
        }
        if !(self.pos_sigma >= 0.0) || !(self.size_sigma >= 0.0) {
            return Err(PerceptionConfigError::Sigma);
        }
        Ok(())
    }

    pub fn is_forced_miss(&self, object: &str, camera: CameraId) -> bool {
        self.forced_miss.iter().any(|f| f.object == object && f.camera == camera)
    }

    pub fn add_forced_miss(&mut self, object: &str, camera: CameraId) {
        if !self.is_forced_miss(object, camera) {
            self.forced_miss.push(ForcedMiss { object: object.into(), camera });
            self.forced_miss.sort();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: String,
    /// World-frame center, noisy.
    pub position: Vec3,
    /// Full extents of the world-aligned bounding box, noisy.
    pub est_size: Vec3,
    pub confidence: f64,
    pub camera: CameraId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub camera: CameraId,
    pub items: Vec<Detection>,
    pub robot_config: JointConfig,
    pub seq: u64,
    pub stamp_ms: u64,
}

/// Fraction of the target's 26 surface samples hidden from the camera by
/// other objects' boxes.
pub fn occlusion_fraction(world: &GroundTruthWorld, cam: &CameraModel, target: &ObjectInstance) -> f64 {
    occlusion_among(&world.objects, cam, target)
}

fn occlusion_among(objects: &[ObjectInstance], cam: &CameraModel, target: &ObjectInstance) -> f64 {
    let origin = cam.center();
    let blockers: Vec<_> = objects.iter().filter(|o| o.id != target.id).map(|o| o.obb()).collect();
    let blocked = target
        .obb()
        .surface_samples()
        .iter()
        .filter(|s| {
            let dir = **s - origin;
            blockers.iter().any(|b| b.blocks_segment(origin, dir))
        })
        .count();
    blocked as f64 / 26.0
}

/// Whether `target` passes the deterministic visibility gates (in view and
/// not too occluded), ignoring random and forced misses.
pub fn is_visible(world: &GroundTruthWorld, cam: &CameraModel, target: &ObjectInstance, tau_occ: f64) -> bool {
    cam.project(target.pose.position).in_image(&cam.intrinsics) && occlusion_fraction(world, cam, target) < tau_occ
}

fn object_stream(seed: u64, seq: u64, id: &str, camera: CameraId) -> ChaCha8Rng {
    let mut d = Digest64::new("sense/v1");
    d.u64(seed).u64(seq).str(id).str(camera.as_str());
    ChaCha8Rng::from_seed(d.finish_bytes())
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] keeps the log finite
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// One detector pass. For the arm camera the caller supplies the camera pose
/// computed from `q`.
pub fn sense(
    world: &GroundTruthWorld,
    cam: &CameraModel,
    cfg: &PerceptionConfig,
    q: &JointConfig,
    seq: u64,
    stamp_ms: u64,
) -> DetectionSet {
    let mut items = Vec::new();
    for obj in &world.objects {
        let mut rng = object_stream(cfg.seed, seq, &obj.id, cam.id);
        let keep_draw: f64 = rng.gen();
        let pos_noise = Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng));
        let size_noise = Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng));

        if !cam.project(obj.pose.position).in_image(&cam.intrinsics) {
            continue;
        }
        let occ = occlusion_fraction(world, cam, obj);
        if occ >= cfg.tau_occ || cfg.is_forced_miss(&obj.id, cam.id) || keep_draw < cfg.p_miss {
            continue;
        }
        let aabb = obj.obb().aabb_half_extents();
        let scale = |h: f64, n: f64| 2.0 * h * (1.0 + cfg.size_sigma * n).max(1e-3);
        items.push(Detection {
            category: obj.category.clone(),
            position: obj.pose.position + pos_noise * cfg.pos_sigma,
            est_size: Vec3::new(scale(aabb.x, size_noise.x), scale(aabb.y, size_noise.y), scale(aabb.z, size_noise.z)),
            confidence: 1.0 - occ,
            camera: cam.id,
        });
    }
    DetectionSet { camera: cam.id, items, robot_config: q.clone(), seq, stamp_ms }
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn get(&self, col: u32, row: u32) -> u8 {
        self.pixels[(row * self.width + col) as usize]
    }
}

/// Orthographic top-down silhouette of the true object footprints, with the
/// workspace mapped onto the full raster. Column 0 is `workspace.min.x`, row
/// 0 is `workspace.max.y`. Object pixels are 255, background 0.
pub fn render_passthrough(world: &GroundTruthWorld, width: u32, height: u32) -> Raster {
    let ws = &world.workspace;
    let boxes: Vec<_> = world.objects.iter().map(|o| o.obb()).collect();
    let mut pixels = alloc::vec![0u8; width as usize * height as usize];
    let sx = (ws.max.x - ws.min.x) / width as f64;
    let sy = (ws.max.y - ws.min.y) / height as f64;
    for row in 0..height {
        let y = ws.max.y - (row as f64 + 0.5) * sy;
        for col in 0..width {
            let x = ws.min.x + (col as f64 + 0.5) * sx;
            let hit = boxes.iter().any(|b| b.line_interval(Vec3::new(x, y, 0.0), Vec3::Z).is_some());
            if hit {
                pixels[(row * width + col) as usize] = 255;
            }
        }
    }
    Raster { width, height, pixels }
}
