//! REST credentials: shared-secret login and HS256 access tokens.

use std::fmt;
use std::time::Duration;

use chrono::{DateTime, Utc};
use jsonwebtoken::{Algorithm, DecodingKey, EncodingKey, Header, Validation};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

pub const DEFAULT_JWT_LIFETIME: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParticipantKind {
    Application,
    Controller,
    Admin,
}

impl fmt::Display for ParticipantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JwtClaims {
    pub sub: String,
    pub iat: i64,
    pub exp: i64,
    pub participant_type: ParticipantKind,
    /// Session id; an uploaded identity card is bound to it.
    pub jti: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JwtRejection {
    Malformed,
    Expired,
}

/// Signs and checks access tokens under a server-local secret.
pub struct JwtKeys {
    encoding: EncodingKey,
    decoding: DecodingKey,
    validation: Validation,
    lifetime: Duration,
}

impl JwtKeys {
    pub fn new(secret: &[u8], lifetime: Duration) -> Self {
        let mut validation = Validation::new(Algorithm::HS256);
        // expiry is checked against the injected clock in `decode`
        validation.validate_exp = false;
        validation.required_spec_claims.clear();
        JwtKeys {
            encoding: EncodingKey::from_secret(secret),
            decoding: DecodingKey::from_secret(secret),
            validation,
            lifetime,
        }
    }

    pub fn lifetime(&self) -> Duration {
        self.lifetime
    }

    pub fn issue(&self, subject: &str, kind: ParticipantKind, now: DateTime<Utc>) -> (String, JwtClaims) {
        let iat = now.timestamp();
        let claims = JwtClaims {
            sub: subject.to_owned(),
            iat,
            exp: iat + self.lifetime.as_secs().max(1) as i64,
            participant_type: kind,
            jti: Uuid::new_v4().to_string(),
        };
        let token = jsonwebtoken::encode(&Header::new(Algorithm::HS256), &claims, &self.encoding)
            .expect("HS256 encoding does not fail");
        (token, claims)
    }

    pub fn decode(&self, token: &str, now: DateTime<Utc>) -> Result<JwtClaims, JwtRejection> {
        let claims = jsonwebtoken::decode::<JwtClaims>(token, &self.decoding, &self.validation)
            .map_err(|_| JwtRejection::Malformed)?
            .claims;
        if claims.exp <= claims.iat {
            return Err(JwtRejection::Malformed);
        }
        if now.timestamp() >= claims.exp {
            return Err(JwtRejection::Expired);
        }
        Ok(claims)
    }
}

pub fn random_bytes<const N: usize>() -> [u8; N] {
    let mut bytes = [0u8; N];
    rand::thread_rng().fill_bytes(&mut bytes);
    bytes
}

pub fn random_secret() -> String {
    hex::encode(random_bytes::<16>())
}

/// Salted SHA-256 of a participant's login secret.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub kind: ParticipantKind,
    pub salt: String,
    pub digest: String,
}

impl Credential {
    pub fn new(kind: ParticipantKind, secret: &str) -> Self {
        let salt = hex::encode(random_bytes::<16>());
        let digest = Self::hash(&salt, secret);
        Credential { kind, salt, digest }
    }

    fn hash(salt: &str, secret: &str) -> String {
        let mut h = Sha256::new();
        h.update(salt.as_bytes());
        h.update([0u8]);
        h.update(secret.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn matches(&self, secret: &str) -> bool {
        let candidate = Self::hash(&self.salt, secret);
        // compare every byte regardless of where they differ
        candidate.len() == self.digest.len()
            && candidate
                .bytes()
                .zip(self.digest.bytes())
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(secs, 0).unwrap()
    }

    #[test]
    fn round_trip_and_expiry() {
        let keys = JwtKeys::new(b"secret", Duration::from_secs(60));
        let (token, claims) = keys.issue("app1", ParticipantKind::Application, at(1_000));
        assert_eq!(claims.exp - claims.iat, 60);
        assert_eq!(keys.decode(&token, at(1_059)).unwrap(), claims);
        assert_eq!(keys.decode(&token, at(1_060)), Err(JwtRejection::Expired));
    }

    #[test]
    fn foreign_secret_and_garbage_are_rejected() {
        let keys = JwtKeys::new(b"secret", DEFAULT_JWT_LIFETIME);
        let other = JwtKeys::new(b"other", DEFAULT_JWT_LIFETIME);
        let (token, _) = other.issue("app1", ParticipantKind::Admin, at(0));
        assert_eq!(keys.decode(&token, at(1)), Err(JwtRejection::Malformed));
        assert_eq!(keys.decode("not.a.jwt", at(1)), Err(JwtRejection::Malformed));
    }

    #[test]
    fn credential_checks_secret() {
        let c = Credential::new(ParticipantKind::Controller, "s3cret");
        assert!(c.matches("s3cret"));
        assert!(!c.matches("s3cre"));
        assert_ne!(Credential::new(ParticipantKind::Controller, "s3cret").salt, c.salt);
    }
}
