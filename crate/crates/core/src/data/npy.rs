//! NPY v1.0 reader and writer.
//!
//! Covers the subset the pipeline needs: C-order arrays of `|u1`, `|b1`,
//! `<f4`, `<f8`, `<i8`, and little-endian fixed-width unicode (`<U#`) for
//! key arrays. Fortran order and v2/v3 headers are rejected with explicit
//! errors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Element payload of a parsed NPY array.
#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    U8(Vec<u8>),
    Bool(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
    /// Fixed-width unicode, one decoded string per element.
    Str(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Numeric payload widened to f64; errors on string arrays.
    pub fn to_f64(&self) -> Result<Vec<f64>> {
        Ok(match &self.data {
            NpyData::U8(v) | NpyData::Bool(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::F64(v) => v.clone(),
            NpyData::I64(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::Str(_) => {
                return Err(Error::Npy("string array where numbers expected".into()))
            }
        })
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::from_vec(&self.shape, self.to_f64()?)
    }

    pub fn descr(&self) -> &'static str {
        match &self.data {
            NpyData::U8(_) => "|u1",
            NpyData::Bool(_) => "|b1",
            NpyData::F32(_) => "<f4",
            NpyData::F64(_) => "<f8",
            NpyData::I64(_) => "<i8",
            NpyData::Str(_) => "<U",
        }
    }
}

fn header_str_field<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let start = header
        .find(&pat)
        .ok_or_else(|| Error::Npy(format!("header missing key {key}")))?
        + pat.len();
    Ok(header[start..].trim_start())
}

fn parse_quoted(s: &str) -> Result<String> {
    let mut chars = s.chars();
    let quote = chars
        .next()
        .filter(|&c| c == '\'' || c == '"')
        .ok_or_else(|| Error::Npy(format!("expected quoted value at {s:.20}")))?;
    let rest: String = chars.take_while(|&c| c != quote).collect();
    Ok(rest)
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    let open = s
        .find('(')
        .ok_or_else(|| Error::Npy("shape is not a tuple".into()))?;
    let close = s[open..]
        .find(')')
        .ok_or_else(|| Error::Npy("unterminated shape tuple".into()))?
        + open;
    let inner = &s[open + 1..close];
    let mut dims = Vec::new();
    for part in inner.split(',') {
        let p = part.trim();
        if p.is_empty() {
            continue; // trailing comma of 1-tuples
        }
        dims.push(
            p.parse::<usize>()
                .map_err(|_| Error::Npy(format!("bad shape component {p:?}")))?,
        );
    }
    if dims.is_empty() {
        return Err(Error::Npy("0-dimensional arrays are not supported".into()));
    }
    Ok(dims)
}

fn take<'a>(bytes: &'a [u8], at: usize, n: usize, what: &str) -> Result<&'a [u8]> {
    bytes
        .get(at..at + n)
        .ok_or_else(|| Error::Npy(format!("truncated payload reading {what}")))
}

/// Parses one NPY v1.0 buffer.
pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Npy("bad magic: not an NPY file".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::Npy(format!(
            "unsupported NPY version {major}.{minor} (only 1.0 is supported)"
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let header_bytes = take(bytes, 10, header_len, "header")?;
    let header = std::str::from_utf8(header_bytes)
        .map_err(|_| Error::Npy("header is not valid UTF-8".into()))?;

    let descr = parse_quoted(header_str_field(header, "descr")?)?;
    let fortran = header_str_field(header, "fortran_order")?;
    if fortran.starts_with("True") {
        return Err(Error::Npy(
            "fortran_order=True is not supported (C-order only)".into(),
        ));
    }
    if !fortran.starts_with("False") {
        return Err(Error::Npy("unreadable fortran_order flag".into()));
    }
    let shape = parse_shape(header_str_field(header, "shape")?)?;
    let count: usize = shape.iter().product();
    let payload_at = 10 + header_len;

    let data = match descr.as_str() {
        "|u1" | "u1" => NpyData::U8(take(bytes, payload_at, count, "u1 data")?.to_vec()),
        "|b1" | "b1" => NpyData::Bool(take(bytes, payload_at, count, "b1 data")?.to_vec()),
        "<f4" => {
            let raw = take(bytes, payload_at, count * 4, "f4 data")?;
            NpyData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        }
        "<f8" => {
            let raw = take(bytes, payload_at, count * 8, "f8 data")?;
            NpyData::F64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunked by 8")))
                    .collect(),
            )
        }
        "<i8" => {
            let raw = take(bytes, payload_at, count * 8, "i8 data")?;
            NpyData::I64(
                raw.chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().expect("chunked by 8")))
                    .collect(),
            )
        }
        d if d.starts_with("<U") => {
            let width: usize = d[2..]
                .parse()
                .map_err(|_| Error::Npy(format!("bad unicode width in {d:?}")))?;
            let raw = take(bytes, payload_at, count * width * 4, "unicode data")?;
            let mut out = Vec::with_capacity(count);
            for el in raw.chunks_exact(width * 4) {
                let mut s = String::new();
                for cp in el.chunks_exact(4) {
                    let code = u32::from_le_bytes([cp[0], cp[1], cp[2], cp[3]]);
                    if code == 0 {
                        break; // NUL padding
                    }
                    s.push(
                        char::from_u32(code)
                            .ok_or_else(|| Error::Npy(format!("invalid codepoint {code}")))?,
                    );
                }
                out.push(s);
            }
            NpyData::Str(out)
        }
        other => {
            return Err(Error::Npy(format!(
                "unsupported dtype {other:?} (supported: |u1 |b1 <f4 <f8 <i8 <U#)"
            )))
        }
    };

    Ok(NpyArray { shape, data })
}

fn format_shape(shape: &[usize]) -> String {
    if shape.len() == 1 {
        format!("({},)", shape[0])
    } else {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        format!("({})", dims.join(", "))
    }
}

/// Serializes an array as NPY v1.0 (little-endian, C-order).
pub fn write_npy(arr: &NpyArray) -> Result<Vec<u8>> {
    let count: usize = arr.shape.iter().product();
    let (descr, payload): (String, Vec<u8>) = match &arr.data {
        NpyData::U8(v) => ("|u1".into(), v.clone()),
        NpyData::Bool(v) => ("|b1".into(), v.clone()),
        NpyData::F32(v) => (
            "<f4".into(),
            v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        ),
        NpyData::F64(v) => (
            "<f8".into(),
            v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        ),
        NpyData::I64(v) => (
            "<i8".into(),
            v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        ),
        NpyData::Str(v) => {
            let width = v.iter().map(|s| s.chars().count()).max().unwrap_or(1).max(1);
            let mut bytes = Vec::with_capacity(count * width * 4);
            for s in v {
                let mut n = 0;
                for c in s.chars() {
                    bytes.extend_from_slice(&(c as u32).to_le_bytes());
                    n += 1;
                }
                for _ in n..width {
                    bytes.extend_from_slice(&0u32.to_le_bytes());
                }
            }
            (format!("<U{width}"), bytes)
        }
    };
    let n_elems = match &arr.data {
        NpyData::U8(v) | NpyData::Bool(v) => v.len(),
        NpyData::F32(v) => v.len(),
        NpyData::F64(v) => v.len(),
        NpyData::I64(v) => v.len(),
        NpyData::Str(v) => v.len(),
    };
    if n_elems != count {
        return Err(Error::Npy(format!(
            "shape {:?} wants {count} elements, got {n_elems}",
            arr.shape
        )));
    }

    let dict = format!(
        "{{'descr': '{descr}', 'fortran_order': False, 'shape': {}, }}",
        format_shape(&arr.shape)
    );
    // Pad with spaces so (magic + version + len + header) is a multiple of 64,
    // terminated by a newline, as the format requires.
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + pad + 1;
    if header_len > u16::MAX as usize {
        return Err(Error::Npy("header too long for v1.0".into()));
    }

    let mut out = Vec::with_capacity(10 + header_len + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(1);
    out.push(0);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', pad));
    out.push(b'\n');
    out.extend_from_slice(&payload);
    Ok(out)
}

/// f32 NPY bytes from an f64 tensor (values narrowed to f32).
pub fn tensor_to_npy_f32(t: &Tensor) -> Result<Vec<u8>> {
    write_npy(&NpyArray {
        shape: t.shape().to_vec(),
        data: NpyData::F32(t.data().iter().map(|&x| x as f32).collect()),
    })
}
