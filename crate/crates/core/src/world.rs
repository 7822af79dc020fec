//! The ground-truth tabletop: what is really there, independent of what the
//! robot believes.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, CameraModel};
use crate::collision::Obb;
use crate::digest::Digest64;
use crate::math::{Pose, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),
    #[error("object `{0}` lies outside the workspace")]
    OutsideWorkspace(String),
    #[error("object `{0}` has non-positive half extents")]
    BadExtents(String),
    #[error("workspace min must be below max on every axis")]
    BadWorkspace,
    #[error("main camera: {0}")]
    Camera(#[from] CameraError),
    #[error("non-finite pose for `{0}`")]
    BadPose(String),
}

/// Axis-aligned bounds, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: Vec3,
    pub max: Vec3,
}

impl Workspace {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i] < self.max[i]) && self.min.is_finite() && self.max.is_finite()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: String,
    pub category: String,
    pub pose: Pose,
    pub half_extents: Vec3,
    #[serde(default = "default_true")]
    pub graspable: bool,
}

impl ObjectInstance {
    pub fn obb(&self) -> Obb {
        Obb::new(self.pose, self.half_extents)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthWorld {
    pub workspace: Workspace,
    pub table_height: f64,
    pub chain: String,
    pub robot_base: Pose,
    pub main_camera: CameraModel,
    pub objects: Vec<ObjectInstance>,
}

fn check_object(ws: &Workspace, o: &ObjectInstance) -> Result<(), WorldError> {
    if !o.pose.is_finite() || !(o.pose.orientation.norm() > 0.0) {
        return Err(WorldError::BadPose(o.id.clone()));
    }
    if !(o.half_extents.min_component() > 0.0) || !o.half_extents.is_finite() {
        return Err(WorldError::BadExtents(o.id.clone()));
    }
    if !ws.contains(&o.pose.position) {
        return Err(WorldError::OutsideWorkspace(o.id.clone()));
    }
    Ok(())
}

impl GroundTruthWorld {
    /// Checks every invariant and normalizes object orientations.
    pub fn validated(mut self) -> Result<Self, WorldError> {
        if !self.workspace.is_valid() {
            return Err(WorldError::BadWorkspace);
        }
        self.main_camera.intrinsics.validate()?;
        self.main_camera.pose = Pose::new(self.main_camera.pose.position, self.main_camera.pose.orientation);
        self.robot_base = Pose::new(self.robot_base.position, self.robot_base.orientation);
        let mut seen = BTreeSet::new();
        for o in &mut self.objects {
            check_object(&self.workspace, o)?;
            o.pose = Pose::new(o.pose.position, o.pose.orientation);
            if !seen.insert(o.id.clone()) {
                return Err(WorldError::DuplicateId(o.id.clone()));
            }
        }
        Ok(self)
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Returns a new world with `obj` added; `self` is untouched.
    pub fn spawn_object(&self, obj: ObjectInstance) -> Result<GroundTruthWorld, WorldError> {
        if self.object(&obj.id).is_some() {
            return Err(WorldError::DuplicateId(obj.id));
        }
        check_object(&self.workspace, &obj)?;
        let mut next = self.clone();
        next.objects.push(ObjectInstance { pose: Pose::new(obj.pose.position, obj.pose.orientation), ..obj });
        Ok(next)
    }

    /// Replaces one object's pose, used when the real robot places an object.
    pub fn with_object_pose(&self, id: &str, pose: Pose) -> GroundTruthWorld {
        let mut next = self.clone();
        if let Some(o) = next.objects.iter_mut().find(|o| o.id == id) {
            o.pose = pose;
        }
        next
    }

    /// Order-independent digest: objects are sorted by id first.
    pub fn hash(&self) -> u64 {
        let mut d = Digest64::new("world/v1");
        d.vec3(&self.workspace.min).vec3(&self.workspace.max);
        d.f64(self.table_height).str(&self.chain).pose(&self.robot_base);
        let cam = &self.main_camera;
        let k = &cam.intrinsics;
        d.str(cam.id.as_str()).pose(&cam.pose);
        d.f64(k.fx).f64(k.fy).f64(k.cx).f64(k.cy).u64(k.width as u64).u64(k.height as u64);
        let mut objs: Vec<&ObjectInstance> = self.objects.iter().collect();
        objs.sort_by(|a, b| a.id.cmp(&b.id));
        d.u64(objs.len() as u64);
        for o in objs {
            d.str(&o.id).str(&o.category).pose(&o.pose).vec3(&o.half_extents).bool(o.graspable);
        }
        d.finish()
    }
}

pub fn world_hash(world: &GroundTruthWorld) -> u64 {
    world.hash()
}

/// A placeable object kind in the operator's palette.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryInfo {
    pub category: String,
    pub half_extents: Vec3,
    pub graspable: bool,
}

/// Known object categories: those present in the world file plus a built-in set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Palette {
    pub entries: Vec<CategoryInfo>,
}

impl Palette {
    pub fn builtin() -> Self {
        let e = |c: &str, h: [f64; 3]| CategoryInfo { category: c.to_string(), half_extents: Vec3::from(h), graspable: true };
        Palette {
            entries: alloc::vec![
                e("cup", [0.04, 0.04, 0.05]),
                e("box", [0.05, 0.05, 0.05]),
                e("bottle", [0.035, 0.035, 0.1]),
                e("ball", [0.035, 0.035, 0.035]),
                e("book", [0.1, 0.07, 0.02]),
            ],
        }
    }

    /// World categories take precedence (first object of each category
    /// defines the default size); built-ins fill the rest.
    pub fn for_world(world: &GroundTruthWorld) -> Self {
        let mut entries: Vec<CategoryInfo> = Vec::new();
        for o in &world.objects {
            if !entries.iter().any(|e| e.category == o.category) {
                entries.push(CategoryInfo { category: o.category.clone(), half_extents: o.half_extents, graspable: o.graspable });
            }
        }
        for b in Palette::builtin().entries {
            if !entries.iter().any(|e| e.category == b.category) {
                entries.push(b);
            }
        }
        entries.sort_by(|a, b| a.category.cmp(&b.category));
        Palette { entries }
    }

    pub fn get(&self, category: &str) -> Option<&CategoryInfo> {
        self.entries.iter().find(|e| e.category == category)
    }

    /// Unknown categories are treated as graspable.
    pub fn is_graspable(&self, category: &str) -> bool {
        self.get(category).is_none_or(|e| e.graspable)
    }
}
