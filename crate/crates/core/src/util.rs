//! Small shared helpers: vector checks and serde adapters.

use crate::error::{Error, Result};
use crate::Vector;

/// Slack applied to unit-norm and ball-membership checks.
pub const NORM_SLACK: f64 = 1e-12;

pub fn is_unit(v: &Vector) -> bool {
    (v.norm() - 1.0).abs() <= NORM_SLACK
}

pub fn in_unit_ball(v: &Vector) -> bool {
    v.norm() <= 1.0 + NORM_SLACK
}

pub fn require_unit(v: &Vector, what: &str) -> Result<()> {
    if is_unit(v) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} must have unit norm, got {}",
            v.norm()
        )))
    }
}

/// Componentwise max(v, 0).
pub fn positive_part(v: &Vector) -> Vector {
    v.map(|x| x.max(0.0))
}

pub fn canonical_basis(d: usize, i: usize) -> Vector {
    let mut e = Vector::zeros(d);
    e[i] = 1.0;
    e
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Serialize a `DVector<f64>` as a plain JSON array.
pub mod serde_vector {
    use crate::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let data = Vec::<f64>::deserialize(d)?;
        Ok(Vector::from_vec(data))
    }
}
