//! Simulation-grade cryptography: SHA-256, Ed25519 signatures, X25519 key
//! agreement with HKDF-SHA256, and ChaCha20-Poly1305 envelopes.
//!
//! NOT FOR PRODUCTION. Keys live in ordinary process memory; nothing here
//! offers the hardware key protection a real TEE would provide.
//!
//! Byte formats: public keys and DH shares are 32 raw bytes, signatures are
//! 64 raw bytes (RFC 8032), and an encrypted envelope is a 12-byte nonce
//! followed by the ciphertext and 16-byte tag.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as DhPublicKey, StaticSecret};

use crate::canon::Writer;

pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

const AEAD_INFO: &[u8] = b"tcpa/aead-key/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("malformed public key")]
    MalformedKey,
    #[error("malformed signature")]
    MalformedSignature,
    #[error("malformed key share")]
    MalformedShare,
    #[error("authenticated decryption failed")]
    AuthFailure,
    #[error("symmetric key must be 32 bytes, got {0}")]
    BadKeyLength(usize),
}

/// Randomness source accepted by key generation and encryption.
pub trait SecureRng: RngCore + CryptoRng {}

impl<T: RngCore + CryptoRng> SecureRng for T {}

/// The concrete generator behind [`seeded_rng`] and [`os_rng`].
pub type CryptoRngImpl = ChaCha20Rng;

/// Deterministic generator for reproducible runs.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Generator seeded from the operating system.
pub fn os_rng() -> ChaCha20Rng {
    ChaCha20Rng::from_entropy()
}

pub fn hash(data: &[u8]) -> [u8; DIGEST_LEN] {
    Sha256::digest(data).into()
}

/// Digest of the isolated computation's `(X, B, P)` images.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Measurement([u8; DIGEST_LEN]);

impl Measurement {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// Reconstructs a measurement read back from an encoded certificate.
    pub(crate) fn from_encoded(bytes: [u8; DIGEST_LEN]) -> Self {
        Measurement(bytes)
    }
}

impl fmt::Debug for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Measurement({self})")
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// SHA-256 over the length-prefixed concatenation of X, B, P.
pub fn measure(x_code: &[u8], b_config: &[u8], p_props: &[u8]) -> Measurement {
    let mut w = Writer::new();
    w.bytes(x_code).bytes(b_config).bytes(p_props);
    Measurement(hash(w.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Ed25519,
}

/// Signing key pair. `Debug` never prints the private half.
#[derive(Clone)]
pub struct KeyPair {
    key: SigningKey,
}

impl KeyPair {
    pub fn generate(rng: &mut dyn SecureRng) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        KeyPair::from_secret(seed)
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        KeyPair {
            key: SigningKey::from_bytes(&secret),
        }
    }

    pub fn scheme(&self) -> Scheme {
        Scheme::Ed25519
    }

    pub fn public(&self) -> [u8; PUBLIC_KEY_LEN] {
        self.key.verifying_key().to_bytes()
    }

    /// Private seed, for writing key files. Handle with care.
    pub fn secret_bytes(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> [u8; SIGNATURE_LEN] {
        self.key.sign(message).to_bytes()
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("scheme", &self.scheme())
            .field("public", &hex_short(&self.public()))
            .finish_non_exhaustive()
    }
}

fn hex_short(b: &[u8]) -> String {
    b.iter().take(8).map(|x| format!("{x:02x}")).collect::<String>() + ".."
}

/// Signs with a raw 32-byte private seed.
pub fn sign(message: &[u8], private: &[u8]) -> Result<[u8; SIGNATURE_LEN], CryptoError> {
    let seed: [u8; 32] = private.try_into().map_err(|_| CryptoError::MalformedKey)?;
    Ok(KeyPair::from_secret(seed).sign(message))
}

/// True iff `signature` is a valid signature over exactly `message`.
pub fn verify(signature: &[u8], message: &[u8], public: &[u8]) -> Result<bool, CryptoError> {
    let pk: [u8; PUBLIC_KEY_LEN] = public.try_into().map_err(|_| CryptoError::MalformedKey)?;
    let vk = VerifyingKey::from_bytes(&pk).map_err(|_| CryptoError::MalformedKey)?;
    let sig = ed25519_dalek::Signature::from_slice(signature).map_err(|_| CryptoError::MalformedSignature)?;
    Ok(vk.verify(message, &sig).is_ok())
}

/// Shared key material. `Debug` is redacted.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey([u8; 32]);

impl SessionKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

/// Private half of an ephemeral key-agreement share.
pub struct DhSecret(StaticSecret);

impl fmt::Debug for DhSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DhSecret(..)")
    }
}

pub fn dh_keypair(rng: &mut dyn SecureRng) -> ([u8; 32], DhSecret) {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let secret = StaticSecret::from(seed);
    (DhPublicKey::from(&secret).to_bytes(), DhSecret(secret))
}

/// Raw X25519 agreement. Rejects shares of the wrong length and
/// low-order points that would force a predictable key.
pub fn dh_shared(secret: &DhSecret, peer_public: &[u8]) -> Result<SessionKey, CryptoError> {
    let peer: [u8; 32] = peer_public.try_into().map_err(|_| CryptoError::MalformedShare)?;
    let shared = secret.0.diffie_hellman(&DhPublicKey::from(peer));
    if !shared.was_contributory() {
        return Err(CryptoError::MalformedShare);
    }
    Ok(SessionKey(shared.to_bytes()))
}

fn aead_for(key: &[u8]) -> Result<ChaCha20Poly1305, CryptoError> {
    if key.len() != 32 {
        return Err(CryptoError::BadKeyLength(key.len()));
    }
    let mut okm = [0u8; 32];
    Hkdf::<Sha256>::new(None, key)
        .expand(AEAD_INFO, &mut okm)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    Ok(ChaCha20Poly1305::new(Key::from_slice(&okm)))
}

/// Encrypts under a key derived from `key` with a fresh random nonce.
pub fn sym_encrypt(key: &[u8], plaintext: &[u8], rng: &mut dyn SecureRng) -> Result<Vec<u8>, CryptoError> {
    let aead = aead_for(key)?;
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = aead
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("ChaCha20-Poly1305 encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    Ok(out)
}

pub fn sym_decrypt(key: &[u8], envelope: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let aead = aead_for(key)?;
    if envelope.len() < NONCE_LEN + TAG_LEN {
        return Err(CryptoError::AuthFailure);
    }
    let (nonce, ct) = envelope.split_at(NONCE_LEN);
    aead.decrypt(Nonce::from_slice(nonce), ct)
        .map_err(|_| CryptoError::AuthFailure)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unhex(s: &str) -> Vec<u8> {
        hex::decode(s).unwrap()
    }

    #[test]
    fn sha256_vectors() {
        assert_eq!(
            hash(b"").to_vec(),
            unhex("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")
        );
        assert_eq!(
            hash(b"abc").to_vec(),
            unhex("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
        let x = b"tcpa";
        assert_ne!(hash(x), hash(b"tcpa\0"));
    }

    #[test]
    fn ed25519_rfc8032_test_1() {
        let secret = unhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60");
        let kp = KeyPair::from_secret(secret.clone().try_into().unwrap());
        assert_eq!(
            kp.public().to_vec(),
            unhex("d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a")
        );
        let sig = sign(b"", &secret).unwrap();
        assert_eq!(
            sig.to_vec(),
            unhex(
                "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
            )
        );
        assert_eq!(verify(&sig, b"", &kp.public()), Ok(true));
    }

    #[test]
    fn signatures_bind_message_and_key() {
        let mut rng = seeded_rng(1);
        let kp = KeyPair::generate(&mut rng);
        let other = KeyPair::generate(&mut rng);
        let msg = b"compliance".to_vec();
        let sig = kp.sign(&msg);
        assert_eq!(verify(&sig, &msg, &kp.public()), Ok(true));
        let mut flipped = msg.clone();
        flipped[0] ^= 1;
        assert_eq!(verify(&sig, &flipped, &kp.public()), Ok(false));
        assert_eq!(verify(&sig, &msg, &other.public()), Ok(false));
        assert_eq!(verify(&sig[..10], &msg, &kp.public()), Err(CryptoError::MalformedSignature));
        assert_eq!(verify(&sig, &msg, &[1, 2, 3]), Err(CryptoError::MalformedKey));
        assert_eq!(sign(&msg, &[0; 5]), Err(CryptoError::MalformedKey));
        assert!(!format!("{kp:?}").contains(&hex::encode(kp.secret_bytes())));
    }

    #[test]
    fn x25519_rfc7748_vector() {
        let a: [u8; 32] = unhex("77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a")
            .try_into()
            .unwrap();
        let b_pub = unhex("de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f");
        let shared = dh_shared(&DhSecret(StaticSecret::from(a)), &b_pub).unwrap();
        assert_eq!(
            shared.as_bytes().to_vec(),
            unhex("4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742")
        );
    }

    #[test]
    fn dh_is_symmetric_and_fresh() {
        let mut rng = seeded_rng(2);
        let (a_pub, a) = dh_keypair(&mut rng);
        let (b_pub, b) = dh_keypair(&mut rng);
        assert_eq!(dh_shared(&a, &b_pub).unwrap(), dh_shared(&b, &a_pub).unwrap());
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100 {
            let (p, _) = dh_keypair(&mut rng);
            let (_, s) = dh_keypair(&mut rng);
            assert!(seen.insert(*dh_shared(&s, &p).unwrap().as_bytes()));
        }
        assert_eq!(dh_shared(&a, &[0; 31]).err(), Some(CryptoError::MalformedShare));
        assert_eq!(dh_shared(&a, &[0; 32]).err(), Some(CryptoError::MalformedShare));
    }

    #[test]
    fn envelopes_authenticate() {
        let mut rng = seeded_rng(3);
        let key = [7u8; 32];
        let ct = sym_encrypt(&key, b"secret source", &mut rng).unwrap();
        assert_eq!(sym_decrypt(&key, &ct).unwrap(), b"secret source");
        for i in [0, NONCE_LEN, ct.len() - 1] {
            let mut t = ct.clone();
            t[i] ^= 0x80;
            assert_eq!(sym_decrypt(&key, &t), Err(CryptoError::AuthFailure));
        }
        assert_eq!(sym_decrypt(&[8u8; 32], &ct), Err(CryptoError::AuthFailure));
        assert_eq!(sym_decrypt(&key, &ct[..5]), Err(CryptoError::AuthFailure));
        assert_eq!(sym_encrypt(&[0; 16], b"", &mut rng), Err(CryptoError::BadKeyLength(16)));
        let again = sym_encrypt(&key, b"secret source", &mut rng).unwrap();
        assert_ne!(ct[..NONCE_LEN], again[..NONCE_LEN]);
    }

    #[test]
    fn measurement_is_length_prefixed() {
        let p = b"props";
        assert_eq!(measure(b"x", b"b", p), measure(b"x", b"b", p));
        assert_ne!(measure(b"ab", b"c", p), measure(b"a", b"bc", p));
        assert_ne!(measure(b"x", b"b", b"p1"), measure(b"x", b"b", b"p2"));
        // Independent recomputation of the documented input layout.
        let mut buf = Vec::new();
        for f in [&b"x"[..], b"b", p] {
            buf.extend_from_slice(&(f.len() as u32).to_be_bytes());
            buf.extend_from_slice(f);
        }
        assert_eq!(measure(b"x", b"b", p).as_bytes(), &hash(&buf));
    }
}
