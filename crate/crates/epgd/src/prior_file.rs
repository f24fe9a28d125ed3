//! Binary prior file.
//!
//! Little-endian layout:
//!
//! ```text
//! "EPGM"  u32 version = 1  u32 p  u32 K
//! K times:  f64 weight
//!           f64 eigenvalues[d]          d = 3p²
//!           f64 eigenvectors[d*d]       column-major
//!           f64 covariance[d*d]         column-major
//! ```

use std::path::Path;

use epgd_core::{DMatrix, DVector, GmmComponent, GmmPrior};

pub const MAGIC: &[u8; 4] = b"EPGM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum PriorFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a prior file: expected magic \"EPGM\", found {found:?}")]
    BadMagic { found: String },
    #[error("unsupported prior file version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("prior file truncated: {needed} bytes required, {available} present")]
    Truncated { needed: usize, available: usize },
    #[error("prior file has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("non-finite value in component {component} {field}")]
    NonFinite {
        component: usize,
        field: &'static str,
    },
    #[error("prior file header is invalid: {0}")]
    Header(String),
    #[error("prior file content is invalid: {0}")]
    Invalid(#[from] epgd_core::Error),
}

pub fn encode_prior(prior: &GmmPrior) -> Vec<u8> {
    let d = prior.dim();
    let k = prior.len();
    let mut out = Vec::with_capacity(HEADER_LEN + k * (1 + d + 2 * d * d) * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(prior.patch_size() as u32).to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
    for c in prior.components() {
        put(c.weight);
        c.eigenvalues.iter().for_each(|&v| put(v));
        // nalgebra storage is column-major
        c.eigenvectors.iter().for_each(|&v| put(v));
        c.covariance.iter().for_each(|&v| put(v));
    }
    out
}

pub fn decode_prior(bytes: &[u8]) -> Result<GmmPrior, PriorFileError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(PriorFileError::BadMagic {
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(PriorFileError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4-byte slice"));
    let version = word(4);
    if version != VERSION {
        return Err(PriorFileError::UnsupportedVersion(version));
    }
    let p = word(8) as usize;
    let k = word(12) as usize;
    if p == 0 || k == 0 {
        return Err(PriorFileError::Header(format!(
            "patch size {p}, {k} components"
        )));
    }
    let needed = 3usize
        .checked_mul(p)
        .and_then(|v| v.checked_mul(p))
        .and_then(|d| {
            d.checked_mul(d)
                .and_then(|dd| dd.checked_mul(2))
                .and_then(|v| v.checked_add(d + 1))
        })
        .and_then(|per| per.checked_mul(k))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| {
            PriorFileError::Header(format!("patch size {p} with {k} components overflows"))
        })?;
    if bytes.len() < needed {
        return Err(PriorFileError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(PriorFileError::TrailingBytes(bytes.len() - needed));
    }

    let d = 3 * p * p;
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take =
        |n: usize, component: usize, field: &'static str| -> Result<Vec<f64>, PriorFileError> {
            let v: Vec<f64> = values.by_ref().take(n).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(PriorFileError::NonFinite { component, field });
            }
            Ok(v)
        };
    let mut components = Vec::with_capacity(k);
    for c in 0..k {
        let weight = take(1, c, "weight")?[0];
        let eigenvalues = DVector::from_vec(take(d, c, "eigenvalues")?);
        let eigenvectors = DMatrix::from_vec(d, d, take(d * d, c, "eigenvectors")?);
        let covariance = DMatrix::from_vec(d, d, take(d * d, c, "covariance")?);
        components.push(GmmComponent {
            weight,
            covariance,
            eigenvectors,
            eigenvalues,
        });
    }
    Ok(GmmPrior::new(p, components)?)
}

pub fn save_prior(prior: &GmmPrior, path: impl AsRef<Path>) -> Result<(), PriorFileError> {
    let path = path.as_ref();
    std::fs::write(path, encode_prior(prior)).map_err(|source| PriorFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_prior(path: impl AsRef<Path>) -> Result<GmmPrior, PriorFileError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| PriorFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_prior(&bytes)
}
