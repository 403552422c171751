//! NPZ container support: a minimal ZIP reader/writer.
//!
//! Reading handles stored and deflate members (the two methods numpy emits)
//! by walking the central directory; zip64, encryption, and multi-disk
//! archives are rejected. Writing emits stored (uncompressed) members only.
//! Non-`.npy` members are ignored with a warning on read.

use std::collections::BTreeMap;
use std::io::Read;

use flate2::read::DeflateDecoder;

use crate::error::{Error, Result};

use super::npy::{parse_npy, write_npy, NpyArray};

const LOCAL_SIG: u32 = 0x0403_4b50;
const CENTRAL_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;

fn u16_at(b: &[u8], at: usize) -> Result<u16> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| Error::Zip("truncated archive".into()))
}

fn u32_at(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| Error::Zip("truncated archive".into()))
}

struct CentralEntry {
    name: String,
    method: u16,
    compressed_size: usize,
    uncompressed_size: usize,
    local_offset: usize,
    flags: u16,
}

fn find_eocd(bytes: &[u8]) -> Result<usize> {
    if bytes.len() < 22 {
        return Err(Error::Zip("too short to be a ZIP archive".into()));
    }
    // EOCD is within the last 64 KiB + 22 bytes (max comment length).
    let floor = bytes.len().saturating_sub(22 + 0xFFFF);
    let mut at = bytes.len() - 22;
    loop {
        if u32_at(bytes, at)? == EOCD_SIG {
            return Ok(at);
        }
        if at == floor {
            return Err(Error::Zip("end-of-central-directory record not found".into()));
        }
        at -= 1;
    }
}

fn read_central_directory(bytes: &[u8]) -> Result<Vec<CentralEntry>> {
    let eocd = find_eocd(bytes)?;
    let disk = u16_at(bytes, eocd + 4)?;
    if disk != 0 {
        return Err(Error::Zip("multi-disk archives are not supported".into()));
    }
    let n_entries = u16_at(bytes, eocd + 10)? as usize;
    let cd_offset = u32_at(bytes, eocd + 16)? as usize;

    let mut entries = Vec::with_capacity(n_entries);
    let mut at = cd_offset;
    for _ in 0..n_entries {
        if u32_at(bytes, at)? != CENTRAL_SIG {
            return Err(Error::Zip("corrupt central directory".into()));
        }
        let flags = u16_at(bytes, at + 8)?;
        let method = u16_at(bytes, at + 10)?;
        let compressed_size = u32_at(bytes, at + 20)? as usize;
        let uncompressed_size = u32_at(bytes, at + 24)? as usize;
        let name_len = u16_at(bytes, at + 28)? as usize;
        let extra_len = u16_at(bytes, at + 30)? as usize;
        let comment_len = u16_at(bytes, at + 32)? as usize;
        let local_offset = u32_at(bytes, at + 42)? as usize;
        let name_bytes = bytes
            .get(at + 46..at + 46 + name_len)
            .ok_or_else(|| Error::Zip("truncated central directory".into()))?;
        let name = String::from_utf8_lossy(name_bytes).into_owned();
        entries.push(CentralEntry {
            name,
            method,
            compressed_size,
            uncompressed_size,
            local_offset,
            flags,
        });
        at += 46 + name_len + extra_len + comment_len;
    }
    Ok(entries)
}

fn member_bytes(bytes: &[u8], entry: &CentralEntry) -> Result<Vec<u8>> {
    if entry.flags & 0x1 != 0 {
        return Err(Error::Zip(format!("member {:?} is encrypted", entry.name)));
    }
    let at = entry.local_offset;
    if u32_at(bytes, at)? != LOCAL_SIG {
        return Err(Error::Zip(format!(
            "bad local header for member {:?}",
            entry.name
        )));
    }
    let name_len = u16_at(bytes, at + 26)? as usize;
    let extra_len = u16_at(bytes, at + 28)? as usize;
    let data_at = at + 30 + name_len + extra_len;
    let raw = bytes
        .get(data_at..data_at + entry.compressed_size)
        .ok_or_else(|| Error::Zip(format!("truncated data for member {:?}", entry.name)))?;

    match entry.method {
        0 => Ok(raw.to_vec()),
        8 => {
            let mut out = Vec::with_capacity(entry.uncompressed_size);
            DeflateDecoder::new(raw)
                .read_to_end(&mut out)
                .map_err(|e| Error::Zip(format!("inflate {:?}: {e}", entry.name)))?;
            Ok(out)
        }
        m => Err(Error::Zip(format!(
            "member {:?} uses unsupported compression method {m}",
            entry.name
        ))),
    }
}

/// Parses an NPZ buffer into `array name -> array` (names without `.npy`).
pub fn parse_npz(bytes: &[u8]) -> Result<BTreeMap<String, NpyArray>> {
    let entries = read_central_directory(bytes)?;
    let mut out = BTreeMap::new();
    for entry in &entries {
        match entry.name.strip_suffix(".npy") {
            Some(stem) => {
                let raw = member_bytes(bytes, entry)?;
                let arr = parse_npy(&raw)
                    .map_err(|e| Error::Zip(format!("member {:?}: {e}", entry.name)))?;
                out.insert(stem.to_string(), arr);
            }
            None => {
                eprintln!("warning: ignoring non-npy archive member {:?}", entry.name);
            }
        }
    }
    Ok(out)
}

/// Serializes arrays as an NPZ archive with stored (uncompressed) members.
pub fn write_npz(arrays: &BTreeMap<String, NpyArray>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut central = Vec::new();
    let mut n = 0u16;

    for (stem, arr) in arrays {
        let name = format!("{stem}.npy");
        let payload = write_npy(arr)?;
        let mut crc = flate2::Crc::new();
        crc.update(&payload);
        let crc = crc.sum();
        let offset = out.len() as u32;
        let size = payload.len() as u32;

        out.extend_from_slice(&LOCAL_SIG.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes()); // version needed
        out.extend_from_slice(&0u16.to_le_bytes()); // flags
        out.extend_from_slice(&0u16.to_le_bytes()); // method: stored
        out.extend_from_slice(&0u32.to_le_bytes()); // mod time/date
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&size.to_le_bytes());
        out.extend_from_slice(&size.to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes()); // extra len
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&payload);

        central.extend_from_slice(&CENTRAL_SIG.to_le_bytes());
        central.extend_from_slice(&20u16.to_le_bytes()); // version made by
        central.extend_from_slice(&20u16.to_le_bytes()); // version needed
        central.extend_from_slice(&0u16.to_le_bytes()); // flags
        central.extend_from_slice(&0u16.to_le_bytes()); // method
        central.extend_from_slice(&0u32.to_le_bytes()); // mod time/date
        central.extend_from_slice(&crc.to_le_bytes());
        central.extend_from_slice(&size.to_le_bytes());
        central.extend_from_slice(&size.to_le_bytes());
        central.extend_from_slice(&(name.len() as u16).to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes()); // extra len
        central.extend_from_slice(&0u16.to_le_bytes()); // comment len
        central.extend_from_slice(&0u16.to_le_bytes()); // disk number
        central.extend_from_slice(&0u16.to_le_bytes()); // internal attrs
        central.extend_from_slice(&0u32.to_le_bytes()); // external attrs
        central.extend_from_slice(&offset.to_le_bytes());
        central.extend_from_slice(name.as_bytes());
        n += 1;
    }

    let cd_offset = out.len() as u32;
    let cd_size = central.len() as u32;
    out.extend_from_slice(&central);
    out.extend_from_slice(&EOCD_SIG.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // this disk
    out.extend_from_slice(&0u16.to_le_bytes()); // cd disk
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&cd_size.to_le_bytes());
    out.extend_from_slice(&cd_offset.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // comment len
    Ok(out)
}
