//! Pinhole cameras. The camera frame looks along +z with +x right and +y down.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, Quat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraId {
    /// Fixed, looking down at the table.
    Main,
    /// Mounted on the end effector.
    Arm,
}

impl CameraId {
    pub fn as_str(&self) -> &'static str {
        match self {
            CameraId::Main => "main",
            CameraId::Arm => "arm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), CameraError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(CameraError::BadIntrinsics)
        }
    }

    /// 640x480 wide-angle lens used for the end-effector camera.
    pub fn arm_default() -> Self {
        Intrinsics { fx: 400.0, fy: 400.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CameraError {
    #[error("camera intrinsics violate fx, fy > 0 and principal point inside the image")]
    BadIntrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: CameraId,
    /// World pose of the camera frame.
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel { u: f64, v: f64 },
    Behind,
}

impl Projection {
    pub fn in_image(&self, intr: &Intrinsics) -> bool {
        match *self {
            Projection::Pixel { u, v } => u >= 0.0 && v >= 0.0 && u < intr.width as f64 && v < intr.height as f64,
            Projection::Behind => false,
        }
    }
}

impl CameraModel {
    /// A camera at `position` looking straight down (-z world), image +x along world +x.
    pub fn looking_down(id: CameraId, position: Vec3, intrinsics: Intrinsics) -> Self {
        let down = Quat::from_axis_angle(Vec3::X, core::f64::consts::PI);
        CameraModel { id, pose: Pose::new(position, down), intrinsics }
    }

    pub fn center(&self) -> Vec3 {
        self.pose.position
    }

    pub fn project(&self, point: Vec3) -> Projection {
        let p = self.pose.inverse_transform_point(point);
        if p.z <= 0.0 {
            return Projection::Behind;
        }
        let k = &self.intrinsics;
        Projection::Pixel { u: k.fx * p.x / p.z + k.cx, v: k.fy * p.y / p.z + k.cy }
    }
}

pub fn project_to_image(cam: &CameraModel, point: Vec3) -> Projection {
    cam.project(point)
}
