//! Salted one-way password hashing (Argon2id).

use argon2::password_hash::{PasswordHash, PasswordHasher as _, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};

use crate::error::{Error, Result};
use crate::model::PasswordDigest;

pub const MIN_PASSWORD_LEN: usize = 8;

/// Hashes new passwords with a configurable cost. Verification reads the
/// parameters back from the digest, so digests made at any cost stay valid.
#[derive(Clone, Default)]
pub struct PasswordHasher {
    params: Params,
}

impl PasswordHasher {
    /// Minimal-cost hasher for tests and throwaway fixtures.
    pub fn fast() -> Self {
        PasswordHasher {
            params: Params::new(Params::MIN_M_COST, 1, 1, None).expect("valid argon2 params"),
        }
    }

    pub fn hash(&self, password: &str) -> Result<PasswordDigest> {
        let salt = SaltString::encode_b64(&rand::random::<[u8; 16]>())
            .map_err(|e| Error::Internal(format!("salt encoding failed: {e}")))?;
        let argon = Argon2::new(Algorithm::Argon2id, Version::V0x13, self.params.clone());
        argon
            .hash_password(password.as_bytes(), &salt)
            .map(|h| PasswordDigest(h.to_string()))
            .map_err(|e| Error::Internal(format!("password hashing failed: {e}")))
    }

    pub fn verify(&self, password: &str, digest: &PasswordDigest) -> bool {
        match PasswordHash::new(&digest.0) {
            Ok(parsed) => Argon2::default().verify_password(password.as_bytes(), &parsed).is_ok(),
            Err(_) => false,
        }
    }
}

pub fn check_strength(password: &str) -> Result<()> {
    if password.chars().count() < MIN_PASSWORD_LEN {
        return Err(Error::WeakPassword(MIN_PASSWORD_LEN));
    }
    Ok(())
}
