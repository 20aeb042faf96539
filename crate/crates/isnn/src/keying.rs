//! Key generation, copyright encryption, and perturbation derivation.
//!
//! The 256-bit key encrypts a resized copyright image with AES-256-CTR; the
//! ciphertext bytes map deterministically onto a zero-centered integer offset
//! field with an exact l-inf budget. False perturbations for the illegal
//! dataset come from random ciphertexts or plain noise under the same budget.

use std::fs;
use std::path::Path;

use aes::cipher::{KeyIvInit, StreamCipher};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{IsnnError, Result};
use crate::pgm::GrayImage;

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 16;
pub const KEY_FILE_LEN: usize = KEY_LEN + NONCE_LEN;

/// Max perturbation intensity allowed by the crypticity bound.
pub const EPSILON_MAX: u8 = 16;

/// The 256-bit secret plus the deterministic-encryption nonce.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub key: [u8; KEY_LEN],
    pub nonce: [u8; NONCE_LEN],
}

impl std::fmt::Debug for KeyMaterial {
    // Secrets stay out of logs.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("KeyMaterial(<redacted>)")
    }
}

/// Resized copyright image plus its AES-256-CTR ciphertext M.
#[derive(Clone)]
pub struct CopyrightPayload {
    /// Resized grayscale plane; empty for randomly generated false payloads.
    pub image: Vec<u8>,
    /// [C, H, W] of the model input this payload is sized for.
    pub shape: [usize; 3],
    /// Ciphertext M (or random M'), length C*H*W.
    pub ciphertext: Vec<u8>,
}

impl CopyrightPayload {
    pub fn sha256_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(&self.ciphertext);
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Where a perturbation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Legal,
    IllegalRandom,
    Forged,
}

/// Noise families the adversary is assumed to know about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseType {
    Uniform,
    Gaussian,
    Impulse,
}

impl std::str::FromStr for NoiseType {
    type Err = IsnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NoiseType::Uniform),
            "gaussian" => Ok(NoiseType::Gaussian),
            "impulse" => Ok(NoiseType::Impulse),
            other => Err(IsnnError::InvalidArgument(format!(
                "unknown noise type {other:?}"
            ))),
        }
    }
}

/// Per-pixel signed byte offset field with an exact l-inf budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub values: Vec<i16>,
    pub shape: [usize; 3],
    pub epsilon: u8,
    /// Recorded scale factor epsilon / 127.5.
    pub scale: f64,
    pub origin: Origin,
}

impl Perturbation {
    /// Max absolute offset; always <= epsilon.
    pub fn linf_norm(&self) -> u16 {
        self.values.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0)
    }

    /// Stamp onto byte pixels with clamping to [0,255].
    pub fn stamp(&self, src: &[u8], dst: &mut [u8]) {
        debug_assert_eq!(src.len(), self.values.len());
        for ((d, &s), &v) in dst.iter_mut().zip(src.iter()).zip(self.values.iter()) {
            *d = (i16::from(s) + v).clamp(0, 255) as u8;
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_epsilon(epsilon: i64) -> Result<u8> {
    if !(0..=i64::from(EPSILON_MAX)).contains(&epsilon) {
        return Err(IsnnError::EpsilonOutOfRange(epsilon));
    }
    Ok(epsilon as u8)
}

/// Take 32 key bytes and 16 nonce bytes from an entropy buffer.
pub fn generate_key(entropy: &[u8]) -> Result<KeyMaterial> {
    if entropy.len() < KEY_FILE_LEN {
        return Err(IsnnError::ShortEntropy {
            need: KEY_FILE_LEN,
            got: entropy.len(),
        });
    }
    let mut key = [0u8; KEY_LEN];
    let mut nonce = [0u8; NONCE_LEN];
    key.copy_from_slice(&entropy[..KEY_LEN]);
    nonce.copy_from_slice(&entropy[KEY_LEN..KEY_FILE_LEN]);
    Ok(KeyMaterial { key, nonce })
}

/// Raw AES-256-CTR keystream application; exposed for tests.
pub fn aes256_ctr(km: &KeyMaterial, data: &mut [u8]) {
    let mut cipher = Aes256Ctr::new(&km.key.into(), &km.nonce.into());
    cipher.apply_keystream(data);
}

/// Resize the copyright image to the model input plane (nearest neighbor,
/// replicated across channels) and encrypt it into the payload M.
pub fn encrypt_copyright(
    km: &KeyMaterial,
    copyright_image: &GrayImage,
    input_shape: [usize; 3],
) -> Result<CopyrightPayload> {
    if copyright_image.pixels.is_empty() {
        return Err(IsnnError::Empty("copyright image"));
    }
    let [c, h, w] = input_shape;
    let resized = copyright_image.resize_nearest(w, h);
    let mut plain = Vec::with_capacity(c * h * w);
    for _ in 0..c {
        plain.extend_from_slice(&resized.pixels);
    }
    let mut ciphertext = plain;
    aes256_ctr(km, &mut ciphertext);
    Ok(CopyrightPayload {
        image: resized.pixels,
        shape: input_shape,
        ciphertext,
    })
}

/// Uniform random bytes standing in for a false ciphertext M'.
pub fn random_false_ciphertext(rng: &mut impl Rng, shape: [usize; 3]) -> CopyrightPayload {
    let len = shape.iter().product();
    let mut ciphertext = vec![0u8; len];
    rng.fill(&mut ciphertext[..]);
    CopyrightPayload {
        image: Vec::new(),
        shape,
        ciphertext,
    }
}

fn bytes_to_offsets(bytes: &[u8], epsilon: u8) -> Vec<i16> {
    let eps = f64::from(epsilon);
    bytes
        .iter()
        .map(|&m| {
            let s = (f64::from(m) - 127.5) / 127.5;
            (s * eps).round() as i16
        })
        .collect()
}

/// Map ciphertext bytes onto the zero-centered offset field delta.
///
/// Each byte m is centered to s = (m - 127.5)/127.5 in [-1,1] and scaled to
/// round(s * epsilon), so the budget max|delta| <= epsilon holds exactly.
pub fn derive_perturbation(payload: &CopyrightPayload, epsilon: i64) -> Result<Perturbation> {
    let eps = check_epsilon(epsilon)?;
    let origin = if payload.image.is_empty() {
        Origin::IllegalRandom
    } else {
        Origin::Legal
    };
    Ok(Perturbation {
        values: bytes_to_offsets(&payload.ciphertext, eps),
        shape: payload.shape,
        epsilon: eps,
        scale: f64::from(eps) / 127.5,
        origin,
    })
}

/// Sample an illegal noise field under the same budget.
pub fn sample_noise(
    rng: &mut impl Rng,
    epsilon: i64,
    noise_type: NoiseType,
    shape: [usize; 3],
) -> Result<Perturbation> {
    let eps = check_epsilon(epsilon)?;
    let len: usize = shape.iter().product();
    let e = i16::from(eps);
    let values: Vec<i16> = match noise_type {
        NoiseType::Uniform => (0..len).map(|_| rng.random_range(-e..=e)).collect(),
        NoiseType::Gaussian => {
            if eps == 0 {
                vec![0; len]
            } else {
                let normal = Normal::new(0.0, f64::from(eps) / 2.0).expect("positive sigma");
                (0..len)
                    .map(|_| (normal.sample(rng).round() as i64).clamp(-i64::from(e), i64::from(e)) as i16)
                    .collect()
            }
        }
        NoiseType::Impulse => (0..len)
            .map(|_| {
                if rng.random::<f64>() < 0.05 {
                    if rng.random::<bool>() {
                        e
                    } else {
                        -e
                    }
                } else {
                    0
                }
            })
            .collect(),
    };
    Ok(Perturbation {
        values,
        shape,
        epsilon: eps,
        scale: f64::from(eps) / 127.5,
        origin: Origin::IllegalRandom,
    })
}

/// Write the 48-byte key file (32 key || 16 nonce) with restricted mode.
pub fn write_key_file(path: &Path, km: &KeyMaterial, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(IsnnError::InvalidArgument(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    let mut buf = Vec::with_capacity(KEY_FILE_LEN);
    buf.extend_from_slice(&km.key);
    buf.extend_from_slice(&km.nonce);
    fs::write(path, &buf).map_err(|e| IsnnError::io(path.display().to_string(), e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(path, fs::Permissions::from_mode(0o600))
            .map_err(|e| IsnnError::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn read_key_file(path: &Path) -> Result<KeyMaterial> {
    let data = fs::read(path).map_err(|e| IsnnError::io(path.display().to_string(), e))?;
    if data.len() != KEY_FILE_LEN {
        return Err(IsnnError::Format {
            what: "key file",
            detail: format!("expected {KEY_FILE_LEN} bytes, got {}", data.len()),
        });
    }
    generate_key(&data)
}
