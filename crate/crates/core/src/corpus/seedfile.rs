//! Loading seed artifacts from disk: ELF64 objects, hex text, or raw words.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use super::elf::{extract_text_section, is_elf, ElfError};
use crate::isa::{parse_hex_text, StreamError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedFormat {
    /// ELF magic first, then hex text, then raw.
    #[default]
    Auto,
    Raw,
    Hex,
    Elf,
}

impl FromStr for SeedFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(SeedFormat::Auto),
            "raw" | "bin" => Ok(SeedFormat::Raw),
            "hex" => Ok(SeedFormat::Hex),
            "elf" => Ok(SeedFormat::Elf),
            other => Err(format!(
                "unknown seed format `{other}` (auto, raw, hex, elf)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum SeedFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Elf(#[from] ElfError),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

fn looks_like_hex(bytes: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(bytes) else {
        return false;
    };
    let mut any = false;
    for line in text.lines() {
        let code = line.split('#').next().unwrap_or("").trim();
        if code.is_empty() {
            continue;
        }
        let digits = code
            .strip_prefix("0x")
            .or_else(|| code.strip_prefix("0X"))
            .unwrap_or(code);
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
            return false;
        }
        any = true;
    }
    // A file of only comments is still text.
    any || text.trim_start().starts_with('#')
}

/// Turns file contents into a little-endian instruction byte stream.
pub fn parse_seed_bytes(bytes: &[u8], format: SeedFormat) -> Result<Vec<u8>, SeedFileError> {
    let format = match format {
        SeedFormat::Auto if is_elf(bytes) => SeedFormat::Elf,
        SeedFormat::Auto if !bytes.is_empty() && looks_like_hex(bytes) => SeedFormat::Hex,
        SeedFormat::Auto => SeedFormat::Raw,
        f => f,
    };
    let out = match format {
        SeedFormat::Elf => extract_text_section(bytes)?,
        SeedFormat::Hex => {
            let text = String::from_utf8_lossy(bytes);
            parse_hex_text(&text)?
                .into_iter()
                .flat_map(u32::to_le_bytes)
                .collect()
        }
        _ => bytes.to_vec(),
    };
    if out.len() % 4 != 0 {
        return Err(StreamError::TrailingBytes { len: out.len() }.into());
    }
    Ok(out)
}

pub fn load_seed_file(path: &Path, format: SeedFormat) -> Result<Vec<u8>, SeedFileError> {
    let bytes = std::fs::read(path).map_err(|source| SeedFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_seed_bytes(&bytes, format)
}
