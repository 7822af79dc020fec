//! The robot's believed scene: built from detections, corrected by the operator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::Obb;
use crate::digest::Digest64;
use crate::math::{Pose, Vec3};
use crate::perception::DetectionSet;
use crate::world::{GroundTruthWorld, Workspace};

/// Detections farther than this from every same-category object start a new one.
pub const ASSOCIATION_GATE: f64 = 0.05;
/// Belief/truth pairs farther apart than this are not matched when diffing.
pub const DIFF_MATCH_CAP: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Detected,
    UserAdded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefObject {
    pub id: String,
    pub category: String,
    pub pose: Pose,
    pub half_extents: Vec3,
    pub provenance: Provenance,
    pub last_seen: Option<u64>,
    /// Always equal to `provenance == UserAdded`.
    pub pinned: bool,
}

impl BeliefObject {
    pub fn obb(&self) -> Obb {
        Obb::new(self.pose, self.half_extents)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BeliefScene {
    pub objects: Vec<BeliefObject>,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BeliefError {
    #[error("pose lies outside the workspace")]
    OutsideWorkspace,
    #[error("unknown object id `{0}`")]
    UnknownId(String),
    #[error("half extents must be positive")]
    BadExtents,
}

impl BeliefScene {
    pub fn new() -> Self {
        BeliefScene::default()
    }

    pub fn object(&self, id: &str) -> Option<&BeliefObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Merge one detector pass. Each detection claims the nearest unclaimed
    /// pre-existing object of its category inside the gate; unmatched
    /// detections become new objects. The revision moves only when a pose,
    /// size or the object set changed, so re-sensing a static scene without
    /// noise is a fixed point apart from `last_seen`.
    pub fn integrate_detections(&self, ds: &DetectionSet) -> BeliefScene {
        let mut next = self.clone();
        let existing = self.objects.len();
        let mut claimed = alloc::vec![false; existing];
        let mut changed = false;
        for (index, det) in ds.items.iter().enumerate() {
            let nearest = (0..existing)
                .filter(|&i| !claimed[i] && next.objects[i].category == det.category)
                .map(|i| (i, (next.objects[i].pose.position - det.position).norm()))
                .filter(|&(_, d)| d <= ASSOCIATION_GATE)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let half = det.est_size * 0.5;
            match nearest {
                Some((i, _)) => {
                    claimed[i] = true;
                    let obj = &mut next.objects[i];
                    obj.last_seen = Some(ds.stamp_ms);
                    if !obj.pinned {
                        let pose = Pose::from_translation(det.position.x, det.position.y, det.position.z);
                        if obj.pose != pose || obj.half_extents != half {
                            obj.pose = pose;
                            obj.half_extents = half;
                            changed = true;
                        }
                    }
                }
                None => {
                    next.objects.push(BeliefObject {
                        id: format!("{}-{}-{}", ds.camera.as_str(), ds.seq, index),
                        category: det.category.clone(),
                        pose: Pose::from_translation(det.position.x, det.position.y, det.position.z),
                        half_extents: half,
                        provenance: Provenance::Detected,
                        last_seen: Some(ds.stamp_ms),
                        pinned: false,
                    });
                    changed = true;
                }
            }
        }
        if changed {
            next.revision += 1;
        }
        next
    }

    /// Operator-inserted virtual object; pinned so perception never moves it.
    pub fn add_user_object(&self, ws: &Workspace, category: &str, pose: Pose, half_extents: Vec3) -> Result<BeliefScene, BeliefError> {
        if !(half_extents.min_component() > 0.0) || !half_extents.is_finite() {
            return Err(BeliefError::BadExtents);
        }
        if !pose.is_finite() || !ws.contains(&pose.position) {
            return Err(BeliefError::OutsideWorkspace);
        }
        let mut next = self.clone();
        next.revision += 1;
        let mut id = format!("user-r{}", next.revision);
        while next.object(&id).is_some() {
            id.push('x');
        }
        next.objects.push(BeliefObject {
            id,
            category: category.into(),
            pose: Pose::new(pose.position, pose.orientation),
            half_extents,
            provenance: Provenance::UserAdded,
            last_seen: None,
            pinned: true,
        });
        Ok(next)
    }

    /// Moving an object is an operator override: it becomes user-owned and pinned.
    pub fn move_object(&self, ws: &Workspace, id: &str, pose: Pose) -> Result<BeliefScene, BeliefError> {
        let i = self.index_of(id)?;
        if !pose.is_finite() || !ws.contains(&pose.position) {
            return Err(BeliefError::OutsideWorkspace);
        }
        let mut next = self.clone();
        let obj = &mut next.objects[i];
        obj.pose = Pose::new(pose.position, pose.orientation);
        obj.provenance = Provenance::UserAdded;
        obj.pinned = true;
        next.revision += 1;
        Ok(next)
    }

    pub fn remove_object(&self, id: &str) -> Result<BeliefScene, BeliefError> {
        let i = self.index_of(id)?;
        let mut next = self.clone();
        next.objects.remove(i);
        next.revision += 1;
        Ok(next)
    }

    /// Empties the scene, still advancing the revision.
    pub fn cleared(&self) -> BeliefScene {
        BeliefScene { objects: Vec::new(), revision: self.revision + 1 }
    }

    fn index_of(&self, id: &str) -> Result<usize, BeliefError> {
        self.objects.iter().position(|o| o.id == id).ok_or_else(|| BeliefError::UnknownId(id.into()))
    }

    /// Digest of ids, categories, geometry and provenance. `last_seen` is
    /// excluded so passive re-sensing does not perturb it.
    pub fn digest(&self) -> u64 {
        let mut d = Digest64::new("belief/v1");
        d.u64(self.revision).u64(self.objects.len() as u64);
        for o in &self.objects {
            d.str(&o.id).str(&o.category).pose(&o.pose).vec3(&o.half_extents);
            d.bool(o.provenance == Provenance::UserAdded).bool(o.pinned);
        }
        d.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub belief_id: String,
    pub truth_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BeliefDiff {
    pub missed: Vec<String>,
    pub spurious: Vec<String>,
    pub placement_errors: Vec<MatchedPair>,
}

impl BeliefDiff {
    pub fn missed_count(&self) -> usize {
        self.missed.len()
    }

    pub fn spurious_count(&self) -> usize {
        self.spurious.len()
    }

    pub fn max_placement_error(&self) -> f64 {
        self.placement_errors.iter().map(|p| p.distance).fold(0.0, f64::max)
    }
}

/// Greedy one-to-one matching: all same-category pairs within the cap,
/// taken in ascending distance order.
pub fn belief_diff(scene: &BeliefScene, world: &GroundTruthWorld) -> BeliefDiff {
    let mut pairs = Vec::new();
    for (bi, b) in scene.objects.iter().enumerate() {
        for (ti, t) in world.objects.iter().enumerate() {
            if b.category == t.category {
                let d = (b.pose.position - t.pose.position).norm();
                if d <= DIFF_MATCH_CAP {
                    pairs.push((d, bi, ti));
                }
            }
        }
    }
    // ties resolve by index so the result is deterministic
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut b_used = alloc::vec![false; scene.objects.len()];
    let mut t_used = alloc::vec![false; world.objects.len()];
    let mut diff = BeliefDiff::default();
    for (d, bi, ti) in pairs {
        if b_used[bi] || t_used[ti] {
            continue;
        }
        b_used[bi] = true;
        t_used[ti] = true;
        diff.placement_errors.push(MatchedPair { belief_id: scene.objects[bi].id.clone(), truth_id: world.objects[ti].id.clone(), distance: d });
    }
    diff.missed = world.objects.iter().zip(&t_used).filter(|(_, u)| !**u).map(|(o, _)| o.id.clone()).collect();
    diff.spurious = scene.objects.iter().zip(&b_used).filter(|(_, u)| !**u).map(|(o, _)| o.id.clone()).collect();
    diff
}
