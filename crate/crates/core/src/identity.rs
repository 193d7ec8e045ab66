//! Participant identities: P-256 key pairs, ECDSA signatures, and certificates
//! issued by a single self-signed certificate authority.
//!
//! Every ledger participant (administrator, application, controller, peer)
//! holds an [`Identity`]: a certificate binding its id to a public key, the
//! matching private key, and the membership service id. Identities travel
//! between processes as JSON [`Wallet`] files.

use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{DateTime, TimeZone, Utc};
use p256::ecdsa::signature::{Signer as _, Verifier as _};
use p256::ecdsa::{SigningKey, VerifyingKey};
use parking_lot::Mutex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const CERT_MAGIC: &[u8; 4] = b"NBC1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("private key is not a scalar in [1, n-1]")]
    InvalidPrivateKey,
    #[error("public key is not a valid P-256 point")]
    InvalidPublicKey,
    #[error("signature must be 64 bytes, got {0}")]
    SignatureLength(usize),
    #[error("malformed certificate: {0}")]
    MalformedCertificate(&'static str),
    #[error("certificate public key does not match the private key")]
    KeyMismatch,
    #[error("msp id must not be empty")]
    EmptyMspId,
    #[error("issuer is not the configured certificate authority")]
    NotCertificateAuthority,
    #[error("malformed wallet: {0}")]
    MalformedWallet(String),
}

/// A P-256 private scalar.
#[derive(Clone)]
pub struct PrivateKey(SigningKey);

impl PrivateKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IdentityError> {
        if bytes.len() != 32 {
            return Err(IdentityError::InvalidPrivateKey);
        }
        SigningKey::from_slice(bytes)
            .map(PrivateKey)
            .map_err(|_| IdentityError::InvalidPrivateKey)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes().into()
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(*self.0.verifying_key())
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

/// A point on P-256, serialized as compressed SEC1 hex.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn from_sec1_bytes(bytes: &[u8]) -> Result<Self, IdentityError> {
        VerifyingKey::from_sec1_bytes(bytes)
            .map(PublicKey)
            .map_err(|_| IdentityError::InvalidPublicKey)
    }

    /// Compressed SEC1 encoding (33 bytes).
    pub fn to_sec1_bytes(&self) -> Vec<u8> {
        self.0.to_encoded_point(true).as_bytes().to_vec()
    }

    /// Uncompressed affine coordinates `(x, y)`.
    pub fn coordinates(&self) -> ([u8; 32], [u8; 32]) {
        let point = self.0.to_encoded_point(false);
        let mut x = [0u8; 32];
        let mut y = [0u8; 32];
        x.copy_from_slice(point.x().expect("uncompressed point has x"));
        y.copy_from_slice(point.y().expect("uncompressed point has y"));
        (x, y)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_sec1_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, IdentityError> {
        let bytes = hex::decode(s).map_err(|_| IdentityError::InvalidPublicKey)?;
        Self::from_sec1_bytes(&bytes)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PublicKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub private_key: PrivateKey,
    pub public_key: PublicKey,
}

impl KeyPair {
    pub fn from_private_key(private_key: PrivateKey) -> Self {
        let public_key = private_key.public_key();
        KeyPair {
            private_key,
            public_key,
        }
    }
}

pub fn generate_keypair() -> KeyPair {
    let signing = SigningKey::random(&mut rand::rngs::OsRng);
    KeyPair::from_private_key(PrivateKey(signing))
}

/// An ECDSA signature `(r, s)`; `r` is the x-coordinate of the nonce point
/// reduced mod n. Range checks happen at verification time so that a
/// malformed signature verifies as `false` rather than failing to parse.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    pub r: [u8; 32],
    pub s: [u8; 32],
}

impl Signature {
    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.r);
        out[32..].copy_from_slice(&self.s);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IdentityError> {
        if bytes.len() != 64 {
            return Err(IdentityError::SignatureLength(bytes.len()));
        }
        let mut r = [0u8; 32];
        let mut s = [0u8; 32];
        r.copy_from_slice(&bytes[..32]);
        s.copy_from_slice(&bytes[32..]);
        Ok(Signature { r, s })
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(self.to_bytes()))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        Signature::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

/// Signs `SHA-256(message)` with an RFC 6979 deterministic nonce.
pub fn sign(private_key: &PrivateKey, message: &[u8]) -> Signature {
    let sig: p256::ecdsa::Signature = private_key.0.sign(message);
    let (r, s) = sig.split_bytes();
    Signature {
        r: r.into(),
        s: s.into(),
    }
}

pub fn verify(public_key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    // from_scalars rejects r or s outside [1, n-1]
    match p256::ecdsa::Signature::from_scalars(signature.r, signature.s) {
        Ok(sig) => public_key.0.verify(message, &sig).is_ok(),
        Err(_) => false,
    }
}

/// A certificate binding `subject_id` to a public key, signed by the CA.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub subject_id: String,
    pub public_key: PublicKey,
    pub issuer: String,
    pub issued_at: DateTime<Utc>,
    pub ca_signature: Signature,
}

fn put_field(buf: &mut Vec<u8>, field: &[u8]) {
    buf.extend_from_slice(&(field.len() as u32).to_be_bytes());
    buf.extend_from_slice(field);
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdentityError> {
        if self.bytes.len() < n {
            return Err(IdentityError::MalformedCertificate("truncated"));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn field(&mut self) -> Result<&'a [u8], IdentityError> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        self.take(len)
    }
}

impl Certificate {
    /// The to-be-signed part: magic, then length-prefixed subject, key and
    /// issuer, then the issue time as big-endian nanoseconds since the epoch.
    pub fn tbs_bytes(
        subject_id: &str,
        public_key: &PublicKey,
        issuer: &str,
        issued_at: DateTime<Utc>,
    ) -> Vec<u8> {
        let mut buf = Vec::with_capacity(128);
        buf.extend_from_slice(CERT_MAGIC);
        put_field(&mut buf, subject_id.as_bytes());
        put_field(&mut buf, &public_key.to_sec1_bytes());
        put_field(&mut buf, issuer.as_bytes());
        let nanos = issued_at
            .timestamp_nanos_opt()
            .expect("issue time within i64 nanoseconds");
        buf.extend_from_slice(&nanos.to_be_bytes());
        buf
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf =
            Self::tbs_bytes(&self.subject_id, &self.public_key, &self.issuer, self.issued_at);
        buf.extend_from_slice(&self.ca_signature.to_bytes());
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IdentityError> {
        let mut reader = Reader { bytes };
        if reader.take(4)? != CERT_MAGIC {
            return Err(IdentityError::MalformedCertificate("bad magic"));
        }
        let subject_id = std::str::from_utf8(reader.field()?)
            .map_err(|_| IdentityError::MalformedCertificate("subject is not utf-8"))?
            .to_owned();
        let public_key = PublicKey::from_sec1_bytes(reader.field()?)?;
        let issuer = std::str::from_utf8(reader.field()?)
            .map_err(|_| IdentityError::MalformedCertificate("issuer is not utf-8"))?
            .to_owned();
        let nanos = i64::from_be_bytes(reader.take(8)?.try_into().expect("8 bytes"));
        let issued_at = Utc.timestamp_nanos(nanos);
        let ca_signature = Signature::from_bytes(reader.take(64)?)?;
        if !reader.bytes.is_empty() {
            return Err(IdentityError::MalformedCertificate("trailing bytes"));
        }
        Ok(Certificate {
            subject_id,
            public_key,
            issuer,
            issued_at,
            ca_signature,
        })
    }

    pub fn verify(&self, ca_public_key: &PublicKey) -> bool {
        let tbs = Self::tbs_bytes(&self.subject_id, &self.public_key, &self.issuer, self.issued_at);
        verify(ca_public_key, &tbs, &self.ca_signature)
    }

    /// Decodes and verifies in one step; any decoding failure is `false`.
    pub fn verify_encoded(ca_public_key: &PublicKey, bytes: &[u8]) -> bool {
        Certificate::decode(bytes).is_ok_and(|cert| cert.verify(ca_public_key))
    }

    pub fn to_base64(&self) -> String {
        BASE64.encode(self.encode())
    }

    pub fn from_base64(s: &str) -> Result<Self, IdentityError> {
        let bytes = BASE64
            .decode(s)
            .map_err(|_| IdentityError::MalformedCertificate("invalid base64"))?;
        Certificate::decode(&bytes)
    }
}

impl Serialize for Certificate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for Certificate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Certificate::from_base64(&s).map_err(serde::de::Error::custom)
    }
}

/// Certificate, private key and membership service id of one participant.
#[derive(Clone, Debug)]
pub struct Identity {
    certificate: Certificate,
    private_key: PrivateKey,
    msp_id: String,
}

impl Identity {
    pub fn new(
        certificate: Certificate,
        private_key: PrivateKey,
        msp_id: impl Into<String>,
    ) -> Result<Self, IdentityError> {
        let msp_id = msp_id.into();
        if msp_id.is_empty() {
            return Err(IdentityError::EmptyMspId);
        }
        if private_key.public_key() != certificate.public_key {
            return Err(IdentityError::KeyMismatch);
        }
        Ok(Identity {
            certificate,
            private_key,
            msp_id,
        })
    }

    pub fn id(&self) -> &str {
        &self.certificate.subject_id
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn public_key(&self) -> PublicKey {
        self.certificate.public_key
    }

    pub fn private_key(&self) -> &PrivateKey {
        &self.private_key
    }

    pub fn msp_id(&self) -> &str {
        &self.msp_id
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(&self.private_key, message)
    }

    pub fn to_wallet(&self) -> Wallet {
        Wallet {
            certificate: self.certificate.to_base64(),
            private_key_hex: hex::encode(self.private_key.to_bytes()),
            msp_id: self.msp_id.clone(),
        }
    }

    pub fn from_wallet(wallet: &Wallet) -> Result<Self, IdentityError> {
        let certificate = Certificate::from_base64(&wallet.certificate)?;
        let key_bytes = hex::decode(&wallet.private_key_hex)
            .map_err(|e| IdentityError::MalformedWallet(e.to_string()))?;
        let private_key = PrivateKey::from_bytes(&key_bytes)?;
        Identity::new(certificate, private_key, wallet.msp_id.clone())
    }
}

/// On-disk identity card.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wallet {
    pub certificate: String,
    pub private_key_hex: String,
    pub msp_id: String,
}

/// The single root CA. Issue times are kept strictly increasing so that two
/// certificates for the same subject never share a timestamp.
pub struct CertificateAuthority {
    identity: Identity,
    last_issued_nanos: Mutex<i64>,
}

impl CertificateAuthority {
    /// Creates a fresh self-signed root.
    pub fn new(ca_id: &str, msp_id: &str) -> Self {
        let keys = generate_keypair();
        let issued_at = Utc::now();
        let tbs = Certificate::tbs_bytes(ca_id, &keys.public_key, ca_id, issued_at);
        let certificate = Certificate {
            subject_id: ca_id.to_owned(),
            public_key: keys.public_key,
            issuer: ca_id.to_owned(),
            issued_at,
            ca_signature: sign(&keys.private_key, &tbs),
        };
        let identity =
            Identity::new(certificate, keys.private_key, msp_id).expect("fresh CA identity");
        Self::from_identity(identity).expect("self-signed root")
    }

    /// Restores a CA from its identity; the certificate must be self-signed.
    pub fn from_identity(identity: Identity) -> Result<Self, IdentityError> {
        let cert = identity.certificate();
        if cert.issuer != cert.subject_id || !cert.verify(&cert.public_key) {
            return Err(IdentityError::NotCertificateAuthority);
        }
        let last = cert.issued_at.timestamp_nanos_opt().unwrap_or_default();
        Ok(CertificateAuthority {
            identity,
            last_issued_nanos: Mutex::new(last),
        })
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn id(&self) -> &str {
        self.identity.id()
    }

    pub fn public_key(&self) -> PublicKey {
        self.identity.public_key()
    }

    /// Issues a certificate signed by `issuer`, which must be this CA's root
    /// identity.
    pub fn issue(
        &self,
        issuer: &Identity,
        subject_id: &str,
        public_key: PublicKey,
    ) -> Result<Certificate, IdentityError> {
        if issuer.public_key() != self.public_key() || issuer.id() != self.id() {
            return Err(IdentityError::NotCertificateAuthority);
        }
        let issued_at = {
            let mut last = self.last_issued_nanos.lock();
            let now = Utc::now().timestamp_nanos_opt().unwrap_or_default();
            let next = now.max(*last + 1);
            *last = next;
            Utc.timestamp_nanos(next)
        };
        let tbs = Certificate::tbs_bytes(subject_id, &public_key, self.id(), issued_at);
        Ok(Certificate {
            subject_id: subject_id.to_owned(),
            public_key,
            issuer: self.id().to_owned(),
            issued_at,
            ca_signature: issuer.sign(&tbs),
        })
    }

    /// Generates a key pair for `subject_id` and wraps it with a fresh
    /// certificate.
    pub fn enroll(&self, subject_id: &str) -> Identity {
        let keys = generate_keypair();
        let cert = self
            .issue(&self.identity, subject_id, keys.public_key)
            .expect("root identity issues");
        Identity::new(cert, keys.private_key, self.identity.msp_id().to_owned())
            .expect("fresh enrollment")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use p256::elliptic_curve::sec1::ToEncodedPoint;
    use std::collections::HashSet;

    #[test]
    fn public_key_is_generator_times_private_key() {
        let keys = generate_keypair();
        let expected = (p256::ProjectivePoint::GENERATOR
            * *p256::SecretKey::from_slice(&keys.private_key.to_bytes())
                .unwrap()
                .to_nonzero_scalar())
        .to_affine();
        assert_eq!(
            keys.public_key.to_sec1_bytes(),
            expected.to_encoded_point(true).as_bytes()
        );
    }

    #[test]
    fn private_key_one_gives_generator() {
        let mut one = [0u8; 32];
        one[31] = 1;
        let keys = KeyPair::from_private_key(PrivateKey::from_bytes(&one).unwrap());
        let g = p256::AffinePoint::GENERATOR.to_encoded_point(true);
        assert_eq!(keys.public_key.to_sec1_bytes(), g.as_bytes());
    }

    #[test]
    fn zero_and_order_are_not_private_keys() {
        assert!(PrivateKey::from_bytes(&[0u8; 32]).is_err());
        let n = hex::decode("ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551")
            .unwrap();
        assert!(PrivateKey::from_bytes(&n).is_err());
        assert!(PrivateKey::from_bytes(&[1u8; 31]).is_err());
    }

    #[test]
    fn generated_private_keys_are_distinct() {
        let keys: HashSet<[u8; 32]> = (0..100)
            .map(|_| generate_keypair().private_key.to_bytes())
            .collect();
        assert_eq!(keys.len(), 100);
    }

    #[test]
    fn sign_verify_roundtrip_and_message_binding() {
        let keys = generate_keypair();
        let sig = sign(&keys.private_key, b"m1");
        assert!(verify(&keys.public_key, b"m1", &sig));
        assert!(!verify(&keys.public_key, b"m2", &sig));
        let empty = sign(&keys.private_key, b"");
        assert!(verify(&keys.public_key, b"", &empty));
    }

    #[test]
    fn out_of_range_signature_components_verify_false() {
        let keys = generate_keypair();
        let mut sig = sign(&keys.private_key, b"x");
        sig.s = [0u8; 32];
        assert!(!verify(&keys.public_key, b"x", &sig));
        let mut sig = sign(&keys.private_key, b"x");
        sig.r = [0xff; 32];
        assert!(!verify(&keys.public_key, b"x", &sig));
    }

    #[test]
    fn cross_key_verification_fails_pairwise() {
        let keys: Vec<KeyPair> = (0..10).map(|_| generate_keypair()).collect();
        let msg = b"pairwise";
        for (i, signer) in keys.iter().enumerate() {
            let sig = sign(&signer.private_key, msg);
            for (j, other) in keys.iter().enumerate() {
                assert_eq!(verify(&other.public_key, msg, &sig), i == j, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn certificate_roundtrip_and_tamper() {
        let ca = CertificateAuthority::new("ca", "Org1MSP");
        let keys = generate_keypair();
        let cert = ca.issue(ca.identity(), "app1", keys.public_key).unwrap();
        assert!(cert.verify(&ca.public_key()));
        let encoded = cert.encode();
        assert_eq!(Certificate::decode(&encoded).unwrap(), cert);
        assert!(Certificate::verify_encoded(&ca.public_key(), &encoded));
        for i in 0..encoded.len() {
            let mut flipped = encoded.clone();
            flipped[i] ^= 0x01;
            assert!(
                !Certificate::verify_encoded(&ca.public_key(), &flipped),
                "flip at byte {i} went unnoticed"
            );
        }
    }

    #[test]
    fn reissued_certificates_have_distinct_times_and_both_verify() {
        let ca = CertificateAuthority::new("ca", "Org1MSP");
        let keys = generate_keypair();
        let a = ca.issue(ca.identity(), "app1", keys.public_key).unwrap();
        let b = ca.issue(ca.identity(), "app1", keys.public_key).unwrap();
        assert!(a.issued_at < b.issued_at);
        assert!(a.verify(&ca.public_key()) && b.verify(&ca.public_key()));
    }

    #[test]
    fn non_ca_issuer_is_rejected() {
        let ca = CertificateAuthority::new("ca", "Org1MSP");
        let imposter = ca.enroll("mallory");
        let keys = generate_keypair();
        assert_eq!(
            ca.issue(&imposter, "app1", keys.public_key),
            Err(IdentityError::NotCertificateAuthority)
        );
    }

    #[test]
    fn wallet_roundtrip() {
        let ca = CertificateAuthority::new("ca", "Org1MSP");
        let id = ca.enroll("ctrl1");
        let json = serde_json::to_string(&id.to_wallet()).unwrap();
        let wallet: Wallet = serde_json::from_str(&json).unwrap();
        let back = Identity::from_wallet(&wallet).unwrap();
        assert_eq!(back.id(), "ctrl1");
        assert_eq!(back.public_key(), id.public_key());
        assert_eq!(back.msp_id(), "Org1MSP");
    }

    #[test]
    fn wallet_with_foreign_key_is_rejected() {
        let ca = CertificateAuthority::new("ca", "Org1MSP");
        let id = ca.enroll("ctrl1");
        let mut wallet = id.to_wallet();
        wallet.private_key_hex = hex::encode(generate_keypair().private_key.to_bytes());
        assert_eq!(
            Identity::from_wallet(&wallet).unwrap_err(),
            IdentityError::KeyMismatch
        );
    }
}
