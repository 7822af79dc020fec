//! Stable 64-bit digests over canonical byte streams (SHA-256, truncated).

use sha2::{Digest as _, Sha256};

use crate::math::{Pose, Vec3};

#[derive(Clone, Default)]
pub struct Digest64 {
    inner: Sha256,
}

impl Digest64 {
    pub fn new(domain: &str) -> Self {
        let mut d = Digest64 { inner: Sha256::new() };
        d.str(domain);
        d
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.inner.update(v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        // -0.0 and 0.0 compare equal, hash them equally too
        let v = if v == 0.0 { 0.0 } else { v };
        self.u64(v.to_bits())
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.inner.update([v as u8]);
        self
    }

    /// Length-prefixed, so adjacent strings cannot alias.
    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u64(s.len() as u64);
        self.inner.update(s.as_bytes());
        self
    }

    pub fn vec3(&mut self, v: &Vec3) -> &mut Self {
        self.f64(v.x).f64(v.y).f64(v.z)
    }

    pub fn pose(&mut self, p: &Pose) -> &mut Self {
        self.vec3(&p.position);
        let q = p.orientation;
        self.f64(q.w).f64(q.x).f64(q.y).f64(q.z)
    }

    pub fn finish(&self) -> u64 {
        let out = self.inner.clone().finalize();
        let mut b = [0u8; 8];
        b.copy_from_slice(&out[..8]);
        u64::from_be_bytes(b)
    }

    /// Full 32-byte output, used to key random streams.
    pub fn finish_bytes(&self) -> [u8; 32] {
        self.inner.clone().finalize().into()
    }
}
