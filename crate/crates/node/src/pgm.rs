//! Binary PGM (P5) images, base64-wrapped for the wire.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;
use twin_core::perception::Raster;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("not base64: {0}")]
    Base64(String),
    #[error("malformed PGM header")]
    Header,
    #[error("pixel data has {got} bytes, expected {expected}")]
    Length { expected: usize, got: usize },
}

pub fn encode_pgm(r: &Raster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", r.width, r.height).into_bytes();
    out.extend_from_slice(&r.pixels);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Raster, PgmError> {
    // header: magic, width, height, maxval, each separated by one whitespace
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::Header);
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| PgmError::Header)?);
    }
    pos += 1; // the single separator before the raster
    let num = |s: &str| s.parse::<u32>().map_err(|_| PgmError::Header);
    if fields[0] != "P5" || num(fields[3])? != 255 {
        return Err(PgmError::Header);
    }
    let (width, height) = (num(fields[1])?, num(fields[2])?);
    let expected = width as usize * height as usize;
    let pixels = bytes.get(pos..).unwrap_or_default().to_vec();
    if pixels.len() != expected {
        return Err(PgmError::Length { expected, got: pixels.len() });
    }
    Ok(Raster { width, height, pixels })
}

pub fn to_base64(r: &Raster) -> String {
    STANDARD.encode(encode_pgm(r))
}

pub fn from_base64(s: &str) -> Result<Raster, PgmError> {
    let bytes = STANDARD.decode(s).map_err(|e| PgmError::Base64(e.to_string()))?;
    decode_pgm(&bytes)
}
