//! Just enough ELF64 parsing to pull out the `.text` section.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElfError {
    #[error("input is not an ELF file")]
    NotElf,
    #[error("unsupported ELF class/encoding (only 64-bit little-endian is accepted)")]
    UnsupportedElfClass,
    #[error("ELF has no .text section")]
    NoTextSection,
    #[error("malformed ELF: {0}")]
    Malformed(&'static str),
}

const MAGIC: &[u8; 4] = b"\x7fELF";
const ELFCLASS64: u8 = 2;
const ELFDATA2LSB: u8 = 1;
const SHT_NOBITS: u32 = 8;

pub fn is_elf(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}

fn read<const N: usize>(bytes: &[u8], at: usize) -> Result<[u8; N], ElfError> {
    bytes
        .get(at..at + N)
        .and_then(|s| s.try_into().ok())
        .ok_or(ElfError::Malformed("truncated header"))
}

fn u16_at(bytes: &[u8], at: usize) -> Result<u16, ElfError> {
    read::<2>(bytes, at).map(u16::from_le_bytes)
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32, ElfError> {
    read::<4>(bytes, at).map(u32::from_le_bytes)
}

fn u64_at(bytes: &[u8], at: usize) -> Result<usize, ElfError> {
    let v = read::<8>(bytes, at).map(u64::from_le_bytes)?;
    usize::try_from(v).map_err(|_| ElfError::Malformed("offset overflow"))
}

struct Section {
    name: u32,
    kind: u32,
    offset: usize,
    size: usize,
}

fn section(bytes: &[u8], shoff: usize, entsize: usize, idx: usize) -> Result<Section, ElfError> {
    let base = idx
        .checked_mul(entsize)
        .and_then(|o| o.checked_add(shoff))
        .ok_or(ElfError::Malformed("section header offset overflow"))?;
    Ok(Section {
        name: u32_at(bytes, base)?,
        kind: u32_at(bytes, base + 4)?,
        offset: u64_at(bytes, base + 0x18)?,
        size: u64_at(bytes, base + 0x20)?,
    })
}

fn slice(bytes: &[u8], offset: usize, size: usize) -> Result<&[u8], ElfError> {
    offset
        .checked_add(size)
        .and_then(|end| bytes.get(offset..end))
        .ok_or(ElfError::Malformed("section extends past end of file"))
}

/// Returns the contents of the section named `.text`.
pub fn extract_text_section(bytes: &[u8]) -> Result<Vec<u8>, ElfError> {
    if !is_elf(bytes) {
        return Err(ElfError::NotElf);
    }
    let ident = read::<16>(bytes, 0).map_err(|_| ElfError::NotElf)?;
    if ident[4] != ELFCLASS64 || ident[5] != ELFDATA2LSB {
        return Err(ElfError::UnsupportedElfClass);
    }
    let shoff = u64_at(bytes, 0x28)?;
    let entsize = u16_at(bytes, 0x3a)? as usize;
    let shnum = u16_at(bytes, 0x3c)? as usize;
    let shstrndx = u16_at(bytes, 0x3e)? as usize;
    if shoff == 0 || shnum == 0 {
        return Err(ElfError::NoTextSection);
    }
    if entsize < 0x40 {
        return Err(ElfError::Malformed("section header entry too small"));
    }
    if shstrndx >= shnum {
        return Err(ElfError::Malformed("bad section name table index"));
    }
    let strtab = section(bytes, shoff, entsize, shstrndx)?;
    let names = slice(bytes, strtab.offset, strtab.size)?;

    for idx in 0..shnum {
        let sec = section(bytes, shoff, entsize, idx)?;
        let name = names
            .get(sec.name as usize..)
            .and_then(|s| s.split(|&b| b == 0).next())
            .ok_or(ElfError::Malformed("section name out of range"))?;
        if name == b".text" {
            if sec.kind == SHT_NOBITS {
                return Ok(Vec::new());
            }
            return Ok(slice(bytes, sec.offset, sec.size)?.to_vec());
        }
    }
    Err(ElfError::NoTextSection)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_NOPS: &[u8] = include_bytes!("../../../../fixtures/elf/two_nops.elf");
    const RENAMED: &[u8] = include_bytes!("../../../../fixtures/elf/renamed_text.elf");
    const RV32: &[u8] = include_bytes!("../../../../fixtures/elf/two_nops_rv32.elf");

    #[test]
    fn extracts_two_nops() {
        assert_eq!(
            extract_text_section(TWO_NOPS).unwrap(),
            vec![0x13, 0, 0, 0, 0x13, 0, 0, 0]
        );
    }

    #[test]
    fn wrong_magic() {
        assert_eq!(extract_text_section(b"\x7fELG...."), Err(ElfError::NotElf));
        assert_eq!(extract_text_section(&[]), Err(ElfError::NotElf));
    }

    #[test]
    fn missing_text() {
        assert_eq!(extract_text_section(RENAMED), Err(ElfError::NoTextSection));
    }

    #[test]
    fn elf32_rejected() {
        assert_eq!(
            extract_text_section(RV32),
            Err(ElfError::UnsupportedElfClass)
        );
        let mut big_endian = TWO_NOPS.to_vec();
        big_endian[5] = 2;
        assert_eq!(
            extract_text_section(&big_endian),
            Err(ElfError::UnsupportedElfClass)
        );
    }

    #[test]
    fn truncated_is_malformed_not_panic() {
        for len in [16, 0x30, 0x40, 0x41, 200] {
            assert!(extract_text_section(&TWO_NOPS[..len]).is_err(), "len {len}");
        }
    }
}
