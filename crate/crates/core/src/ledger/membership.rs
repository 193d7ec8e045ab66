use std::collections::HashMap;

use crate::identity::{self, Certificate, PublicKey, Signature};

use super::LedgerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberKind {
    Peer,
    Client,
}

#[derive(Debug, Clone)]
struct Member {
    kind: MemberKind,
    certificates: Vec<Certificate>,
}

/// Membership service: the CA-verified certificates known for each id.
/// Re-issued certificates accumulate, so older signatures stay verifiable.
#[derive(Debug, Clone)]
pub struct Membership {
    ca_public_key: PublicKey,
    members: HashMap<String, Member>,
}

impl Membership {
    pub fn new(ca_public_key: PublicKey) -> Self {
        Membership {
            ca_public_key,
            members: HashMap::new(),
        }
    }

    pub fn ca_public_key(&self) -> PublicKey {
        self.ca_public_key
    }

    pub fn register(&mut self, certificate: Certificate, kind: MemberKind) -> Result<(), LedgerError> {
        if !certificate.verify(&self.ca_public_key) {
            return Err(LedgerError::UntrustedCertificate(certificate.subject_id));
        }
        match self.members.get_mut(&certificate.subject_id) {
            Some(member) if member.kind != kind => {
                Err(LedgerError::MemberKindClash(certificate.subject_id))
            }
            Some(member) => {
                if !member.certificates.contains(&certificate) {
                    member.certificates.push(certificate);
                }
                Ok(())
            }
            None => {
                self.members.insert(
                    certificate.subject_id.clone(),
                    Member {
                        kind,
                        certificates: vec![certificate],
                    },
                );
                Ok(())
            }
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.contains_key(id)
    }

    pub fn kind(&self, id: &str) -> Option<MemberKind> {
        self.members.get(id).map(|m| m.kind)
    }

    pub fn certificates(&self, id: &str) -> &[Certificate] {
        self.members.get(id).map_or(&[], |m| &m.certificates)
    }

    /// True iff one of `id`'s certificates verifies `signature` over `message`.
    pub fn verify(&self, id: &str, message: &[u8], signature: &Signature) -> bool {
        self.certificates(id)
            .iter()
            .any(|c| identity::verify(&c.public_key, message, signature))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{generate_keypair, CertificateAuthority};

    #[test]
    fn rejects_foreign_certificates_and_kind_changes() {
        let ca = CertificateAuthority::new("ca", "Org1MSP");
        let other = CertificateAuthority::new("ca", "Org1MSP");
        let mut m = Membership::new(ca.public_key());
        let foreign = other.enroll("app1");
        assert!(matches!(
            m.register(foreign.certificate().clone(), MemberKind::Client),
            Err(LedgerError::UntrustedCertificate(_))
        ));
        let app = ca.enroll("app1");
        m.register(app.certificate().clone(), MemberKind::Client).unwrap();
        assert!(matches!(
            m.register(app.certificate().clone(), MemberKind::Peer),
            Err(LedgerError::MemberKindClash(_))
        ));
    }

    #[test]
    fn any_registered_certificate_verifies() {
        let ca = CertificateAuthority::new("ca", "Org1MSP");
        let mut m = Membership::new(ca.public_key());
        let first = ca.enroll("app1");
        let second_keys = generate_keypair();
        let second = ca.issue(ca.identity(), "app1", second_keys.public_key).unwrap();
        m.register(first.certificate().clone(), MemberKind::Client).unwrap();
        m.register(second, MemberKind::Client).unwrap();
        assert_eq!(m.certificates("app1").len(), 2);
        let sig = identity::sign(&second_keys.private_key, b"hello");
        assert!(m.verify("app1", b"hello", &sig));
        assert!(m.verify("app1", b"hi", &first.sign(b"hi")));
        assert!(!m.verify("app2", b"hi", &first.sign(b"hi")));
    }
}
