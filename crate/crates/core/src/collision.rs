//! Oriented boxes and the queries the planner and perception need: exact
//! segment-to-box distance (capsule tests), slab ray intersection and
//! box-box overlap by separating axes.

use crate::math::{Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub pose: Pose,
    pub half_extents: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    /// Strict overlap: the axis passes closer than `radius` to the box.
    pub fn hits(&self, obb: &Obb) -> bool {
        obb.segment_distance(self.a, self.b) < self.radius
    }
}

fn axis_sq_dist(x: f64, h: f64) -> f64 {
    if x > h {
        (x - h) * (x - h)
    } else if x < -h {
        (x + h) * (x + h)
    } else {
        0.0
    }
}

impl Obb {
    pub fn new(pose: Pose, half_extents: Vec3) -> Self {
        Obb { pose, half_extents }
    }

    pub fn inflated(&self, margin: f64) -> Obb {
        let m = Vec3::new(margin, margin, margin);
        Obb { pose: self.pose, half_extents: self.half_extents + m }
    }

    fn local_sq_dist(&self, p: Vec3) -> f64 {
        let h = self.half_extents;
        axis_sq_dist(p.x, h.x) + axis_sq_dist(p.y, h.y) + axis_sq_dist(p.z, h.z)
    }

    pub fn distance_to_point(&self, p: Vec3) -> f64 {
        libm::sqrt(self.local_sq_dist(self.pose.inverse_transform_point(p)))
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        let l = self.pose.inverse_transform_point(p);
        let h = self.half_extents;
        l.x.abs() <= h.x && l.y.abs() <= h.y && l.z.abs() <= h.z
    }

    /// Exact minimum distance from the segment `a..b` to the box (zero when
    /// they intersect).
    ///
    /// In box coordinates the squared distance is a convex piecewise
    /// quadratic in the segment parameter, with breakpoints where the
    /// segment crosses a face plane. Each piece is minimized in closed form.
    pub fn segment_distance(&self, a: Vec3, b: Vec3) -> f64 {
        let la = self.pose.inverse_transform_point(a);
        let d = self.pose.inverse_transform_point(b) - la;
        let h = self.half_extents;

        let mut breaks = [0.0f64; 8];
        let mut nb = 0;
        breaks[nb] = 0.0;
        nb += 1;
        for i in 0..3 {
            if d[i] != 0.0 {
                for c in [-h[i], h[i]] {
                    let t = (c - la[i]) / d[i];
                    if t > 0.0 && t < 1.0 {
                        breaks[nb] = t;
                        nb += 1;
                    }
                }
            }
        }
        breaks[nb] = 1.0;
        nb += 1;
        let breaks = &mut breaks[..nb];
        breaks.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));

        let at = |t: f64| self.local_sq_dist(la + d * t);
        let mut best = at(0.0).min(at(1.0));
        for w in breaks.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            if t1 <= t0 {
                continue;
            }
            let mid = la + d * (0.5 * (t0 + t1));
            let (mut qa, mut qb) = (0.0, 0.0);
            for i in 0..3 {
                let c = if mid[i] > h[i] {
                    h[i]
                } else if mid[i] < -h[i] {
                    -h[i]
                } else {
                    continue;
                };
                qa += d[i] * d[i];
                qb += 2.0 * d[i] * (la[i] - c);
            }
            let t = if qa > 0.0 { (-qb / (2.0 * qa)).clamp(t0, t1) } else { t0 };
            best = best.min(at(t)).min(at(t1));
        }
        libm::sqrt(best)
    }

    /// Parametric interval `[t_enter, t_exit]` where the line
    /// `origin + t * dir` lies inside the box, or `None` if it misses.
    pub fn line_interval(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        let o = self.pose.inverse_transform_point(origin);
        let d = self.pose.orientation.conjugate().rotate(dir);
        let h = self.half_extents;
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        for i in 0..3 {
            if d[i].abs() < 1e-300 {
                if o[i].abs() > h[i] {
                    return None;
                }
            } else {
                let t1 = (-h[i] - o[i]) / d[i];
                let t2 = (h[i] - o[i]) / d[i];
                let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                t_enter = t_enter.max(lo);
                t_exit = t_exit.min(hi);
                if t_enter > t_exit {
                    return None;
                }
            }
        }
        Some((t_enter, t_exit))
    }

    /// True if the segment from `origin` to `origin + dir` passes through the
    /// box strictly before reaching its end point.
    pub fn blocks_segment(&self, origin: Vec3, dir: Vec3) -> bool {
        match self.line_interval(origin, dir) {
            Some((t0, t1)) => t1 >= 0.0 && t0 < 1.0,
            None => false,
        }
    }

    fn axes(&self) -> [Vec3; 3] {
        let q = self.pose.orientation;
        [q.rotate(Vec3::X), q.rotate(Vec3::Y), q.rotate(Vec3::Z)]
    }

    /// Separating-axis overlap test. Touching boxes do not overlap.
    pub fn overlaps(&self, other: &Obb) -> bool {
        let a = self.axes();
        let b = other.axes();
        let ha = self.half_extents;
        let hb = other.half_extents;
        let t = other.pose.position - self.pose.position;

        let radius = |axes: &[Vec3; 3], h: &Vec3, l: &Vec3| -> f64 {
            h.x * axes[0].dot(l).abs() + h.y * axes[1].dot(l).abs() + h.z * axes[2].dot(l).abs()
        };
        let separated = |l: &Vec3| -> bool {
            let ra = radius(&a, &ha, l);
            let rb = radius(&b, &hb, l);
            t.dot(l).abs() >= ra + rb
        };

        for l in a.iter().chain(b.iter()) {
            if separated(l) {
                return false;
            }
        }
        for ai in &a {
            for bj in &b {
                let l = ai.cross(bj);
                if l.norm_squared() > 1e-18 && separated(&l) {
                    return false;
                }
            }
        }
        true
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents;
        let mut out = [Vec3::ZERO; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
            *c = self.pose.transform_point(Vec3::new(s(1) * h.x, s(2) * h.y, s(4) * h.z));
        }
        out
    }

    /// The 26 canonical surface samples: 8 corners, 12 edge midpoints and
    /// 6 face centers, in world coordinates.
    pub fn surface_samples(&self) -> [Vec3; 26] {
        let h = self.half_extents;
        let mut out = [Vec3::ZERO; 26];
        let mut n = 0;
        for i in -1i32..=1 {
            for j in -1i32..=1 {
                for k in -1i32..=1 {
                    if i == 0 && j == 0 && k == 0 {
                        continue;
                    }
                    let local = Vec3::new(i as f64 * h.x, j as f64 * h.y, k as f64 * h.z);
                    out[n] = self.pose.transform_point(local);
                    n += 1;
                }
            }
        }
        out
    }

    /// Half extents of the world-axis-aligned box enclosing this one.
    pub fn aabb_half_extents(&self) -> Vec3 {
        let [ax, ay, az] = self.axes();
        let h = self.half_extents;
        Vec3::new(
            h.x * ax.x.abs() + h.y * ay.x.abs() + h.z * az.x.abs(),
            h.x * ax.y.abs() + h.y * ay.y.abs() + h.z * az.y.abs(),
            h.x * ax.z.abs() + h.y * ay.z.abs() + h.z * az.z.abs(),
        )
    }
}
