//! Dual-signed property registry: both parties sign the canonical property
//! set they agreed on, and either can later prove the other's agreement.

use thiserror::Error;

use crate::canon::{CanonError, Reader, Writer};
use crate::crypto::{self, KeyPair, SIGNATURE_LEN};
use crate::symexec::{PropertyError, PropertySet};

pub const REGISTRY_MAGIC: &[u8; 4] = b"TCPR";
pub const REGISTRY_VERSION: u8 = 1;
pub const REGISTRY_EXTENSION: &str = "tcpr";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("bad registry magic or version")]
    BadHeader,
    #[error("malformed registry: {0}")]
    Malformed(#[from] CanonError),
    #[error("malformed property set: {0}")]
    Properties(#[from] PropertyError),
    #[error("provider signature does not verify")]
    ProviderSignature,
    #[error("consumer signature does not verify")]
    ConsumerSignature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    pub properties: PropertySet,
    pub provider_sig: [u8; SIGNATURE_LEN],
    pub consumer_sig: [u8; SIGNATURE_LEN],
}

fn signed_bytes(props: &PropertySet) -> Vec<u8> {
    let mut w = Writer::with_prefix(&[REGISTRY_MAGIC.as_slice(), &[REGISTRY_VERSION]].concat());
    w.bytes(&props.to_bytes());
    w.finish()
}

impl Registry {
    pub fn create(properties: PropertySet, provider: &KeyPair, consumer: &KeyPair) -> Self {
        let msg = signed_bytes(&properties);
        Registry {
            provider_sig: provider.sign(&msg),
            consumer_sig: consumer.sign(&msg),
            properties,
        }
    }

    /// Returns the property set only if both signatures hold.
    pub fn verify(&self, provider_pub: &[u8], consumer_pub: &[u8]) -> Result<&PropertySet, RegistryError> {
        let msg = signed_bytes(&self.properties);
        if !crypto::verify(&self.provider_sig, &msg, provider_pub).unwrap_or(false) {
            return Err(RegistryError::ProviderSignature);
        }
        if !crypto::verify(&self.consumer_sig, &msg, consumer_pub).unwrap_or(false) {
            return Err(RegistryError::ConsumerSignature);
        }
        Ok(&self.properties)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = signed_bytes(&self.properties);
        let mut w = Writer::new();
        w.bytes(&self.provider_sig).bytes(&self.consumer_sig);
        out.extend_from_slice(w.as_slice());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RegistryError> {
        if bytes.len() < 5 || &bytes[..4] != REGISTRY_MAGIC || bytes[4] != REGISTRY_VERSION {
            return Err(RegistryError::BadHeader);
        }
        let mut r = Reader::new(&bytes[5..]);
        let properties = PropertySet::from_bytes(r.bytes()?)?;
        let provider_sig = r.fixed()?;
        let consumer_sig = r.fixed()?;
        r.finish()?;
        Ok(Registry {
            properties,
            provider_sig,
            consumer_sig,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::seeded_rng;

    #[test]
    fn both_signatures_required() {
        let mut rng = seeded_rng(3);
        let (a, b, c) = (
            KeyPair::generate(&mut rng),
            KeyPair::generate(&mut rng),
            KeyPair::generate(&mut rng),
        );
        let props = PropertySet::parse("p1 no_trap f\np2 assertion_unreachable\n").unwrap();
        let reg = Registry::create(props.clone(), &a, &b);
        let bytes = reg.encode();
        let back = Registry::decode(&bytes).unwrap();
        assert_eq!(back.encode(), bytes);
        assert_eq!(back.verify(&a.public(), &b.public()).unwrap(), &props);
        assert_eq!(back.verify(&c.public(), &b.public()), Err(RegistryError::ProviderSignature));
        assert_eq!(back.verify(&a.public(), &c.public()), Err(RegistryError::ConsumerSignature));

        let mut tampered = bytes.clone();
        tampered[12] ^= 1;
        if let Ok(t) = Registry::decode(&tampered) {
            assert!(t.verify(&a.public(), &b.public()).is_err());
        }
    }
}
