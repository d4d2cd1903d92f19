//! The `.ssdu` container: a flat list of named, typed n-d records.
//!
//! ```text
//! magic "SSDU" | version: u32 | record count: u32
//! per record: name length: u16 | name (UTF-8) | dtype: u8 | ndim: u8
//!             | dims: u64 * ndim | payload
//! crc64: u64
//! ```
//!
//! All integers and floats are little-endian. The checksum is CRC-64/XZ over
//! every byte that precedes it. Payload encodings by dtype code:
//!
//! | code | dtype   | payload                                        |
//! |------|---------|------------------------------------------------|
//! | 0    | bool    | bit-packed, LSB first, `ceil(len / 8)` bytes   |
//! | 1    | f64     | IEEE-754 binary64                              |
//! | 2    | complex | `(re, im)` binary64 pairs                      |
//! | 3    | u64     | unsigned 64-bit integers                       |

use std::collections::HashSet;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use crate::error::{Error, FormatError, Result};
use crate::kspace::C64;

pub const MAGIC: [u8; 4] = *b"SSDU";
pub const VERSION: u32 = 1;
/// Size of a file holding no records: magic, version, count and checksum.
pub const EMPTY_SIZE: usize = 4 + 4 + 4 + 8;

const CRC: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Clone, Debug, PartialEq)]
pub enum RecordData {
    Bool(Vec<bool>),
    F64(Vec<f64>),
    Complex(Vec<C64>),
    U64(Vec<u64>),
}

impl RecordData {
    pub fn dtype(&self) -> u8 {
        match self {
            RecordData::Bool(_) => 0,
            RecordData::F64(_) => 1,
            RecordData::Complex(_) => 2,
            RecordData::U64(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            RecordData::Bool(v) => v.len(),
            RecordData::F64(v) => v.len(),
            RecordData::Complex(v) => v.len(),
            RecordData::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn type_name(&self) -> &'static str {
        match self {
            RecordData::Bool(_) => "bool",
            RecordData::F64(_) => "f64",
            RecordData::Complex(_) => "complex",
            RecordData::U64(_) => "u64",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: RecordData,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetContainer {
    records: Vec<Record>,
}

fn missing(name: &str) -> Error {
    FormatError::MissingRecord(name.to_string()).into()
}

fn wrong_type(name: &str, want: &str, got: &RecordData) -> Error {
    FormatError::Malformed(format!("record '{name}' has dtype {}, expected {want}", got.type_name())).into()
}

impl DatasetContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, name: impl Into<String>, dims: &[usize], data: RecordData) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name.len() > u16::MAX as usize {
            return Err(FormatError::Malformed(format!("record name length {} out of range", name.len())).into());
        }
        if dims.len() > u8::MAX as usize {
            return Err(FormatError::Malformed(format!("record '{name}' has too many dimensions")).into());
        }
        let count: usize = dims.iter().product();
        if count != data.len() {
            return Err(FormatError::Malformed(format!(
                "record '{name}': dims {dims:?} hold {count} values, payload has {}",
                data.len()
            ))
            .into());
        }
        if self.get(&name).is_some() {
            return Err(FormatError::Malformed(format!("duplicate record '{name}'")).into());
        }
        self.records.push(Record { name, dims: dims.iter().map(|&d| d as u64).collect(), data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Record> {
        self.get(name).ok_or_else(|| missing(name))
    }

    pub fn f64s(&self, name: &str) -> Result<(&[u64], &[f64])> {
        let r = self.require(name)?;
        match &r.data {
            RecordData::F64(v) => Ok((&r.dims, v)),
            other => Err(wrong_type(name, "f64", other)),
        }
    }

    pub fn complex(&self, name: &str) -> Result<(&[u64], &[C64])> {
        let r = self.require(name)?;
        match &r.data {
            RecordData::Complex(v) => Ok((&r.dims, v)),
            other => Err(wrong_type(name, "complex", other)),
        }
    }

    pub fn bools(&self, name: &str) -> Result<(&[u64], &[bool])> {
        let r = self.require(name)?;
        match &r.data {
            RecordData::Bool(v) => Ok((&r.dims, v)),
            other => Err(wrong_type(name, "bool", other)),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<(&[u64], &[u64])> {
        let r = self.require(name)?;
        match &r.data {
            RecordData::U64(v) => Ok((&r.dims, v)),
            other => Err(wrong_type(name, "u64", other)),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u16).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.push(r.data.dtype());
            out.push(r.dims.len() as u8);
            for d in &r.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            match &r.data {
                RecordData::Bool(v) => {
                    let mut bytes = vec![0u8; v.len().div_ceil(8)];
                    for (i, _) in v.iter().enumerate().filter(|(_, &b)| b) {
                        bytes[i / 8] |= 1 << (i % 8);
                    }
                    out.extend_from_slice(&bytes);
                }
                RecordData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                RecordData::Complex(v) => v.iter().for_each(|c| {
                    out.extend_from_slice(&c.re.to_le_bytes());
                    out.extend_from_slice(&c.im.to_le_bytes());
                }),
                RecordData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        let crc = CRC.checksum(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(FormatError::Truncated { offset: 0, needed: 4 }.into());
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic).into());
        }
        if bytes.len() < EMPTY_SIZE {
            return Err(FormatError::Truncated { offset: bytes.len(), needed: EMPTY_SIZE - bytes.len() }.into());
        }
        let body = &bytes[..bytes.len() - 8];
        let mut cur = Cursor { buf: body, pos: 4 };
        let version = cur.u32()?;
        if version != VERSION {
            return Err(FormatError::BadVersion(version).into());
        }
        let count = cur.u32()?;
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| FormatError::Malformed("record name is not UTF-8".into()))?
                .to_string();
            if !seen.insert(name.clone()) {
                return Err(FormatError::Malformed(format!("duplicate record '{name}'")).into());
            }
            let dtype = cur.u8()?;
            let ndim = cur.u8()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(cur.u64()?);
            }
            let len = dims
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                .and_then(|n| usize::try_from(n).ok())
                .ok_or_else(|| FormatError::Malformed(format!("record '{name}' dims overflow")))?;
            let need = |width: usize| {
                len.checked_mul(width).ok_or_else(|| FormatError::Malformed(format!("record '{name}' too large")))
            };
            let data = match dtype {
                0 => {
                    let raw = cur.take(len.div_ceil(8))?;
                    RecordData::Bool((0..len).map(|i| raw[i / 8] >> (i % 8) & 1 == 1).collect())
                }
                1 => RecordData::F64(cur.take(need(8)?)?.chunks_exact(8).map(le_f64).collect()),
                2 => RecordData::Complex(
                    cur.take(need(16)?)?.chunks_exact(16).map(|c| C64::new(le_f64(&c[..8]), le_f64(&c[8..]))).collect(),
                ),
                3 => RecordData::U64(
                    cur.take(need(8)?)?.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                other => return Err(FormatError::BadDtype(other).into()),
            };
            records.push(Record { name, dims, data });
        }
        if cur.pos != body.len() {
            return Err(FormatError::Malformed(format!("{} trailing bytes", body.len() - cur.pos)).into());
        }
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        let computed = CRC.checksum(body);
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed }.into());
        }
        Ok(Self { records })
    }
}

fn le_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().unwrap())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(FormatError::Truncated { offset: self.pos, needed: n }),
        }
    }

    fn u8(&mut self) -> std::result::Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn write_dataset(path: impl AsRef<Path>, container: &DatasetContainer) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, container.to_bytes()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetContainer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    DatasetContainer::from_bytes(&bytes)
}
