//! Fixed-width f32 vectors, id-keyed vector tables, and their binary file
//! format.
//!
//! File layout (little-endian, no padding):
//! magic `ELVC`, u32 version = 1, u32 dim, u64 count, then per record a
//! u16 id length, the UTF-8 id bytes, and dim f32 values.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ELVC";
const VERSION: u32 = 1;

/// A fixed-length sequence of f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    values: Vec<f32>,
}

impl Vector {
    pub fn new(values: Vec<f32>) -> Self {
        Vector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Dot product, accumulated left to right in f64.
    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "vector dim mismatch");
        dot_slices(&self.values, other.values())
    }
}

pub(crate) fn dot_slices(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc
}

/// Id-keyed table of same-width vectors. Insertion order is preserved and is
/// the record order of the file format.
#[derive(Debug, Clone)]
pub struct VectorTable {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl VectorTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("vector dim must be positive".into()));
        }
        Ok(VectorTable {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: &str, values: &[f32]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: values.len(),
            });
        }
        if self.index.contains_key(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        (0..self.len()).map(move |i| (self.id(i), self.row(i)))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write_records(w, self.dim, self.len() as u64, self.iter())
    }

    /// Read a table from the current reader position, consuming exactly the
    /// declared record count and leaving any trailing data unread.
    pub fn read_from(r: &mut impl Read, path: &str) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic, path, "magic")?;
        if &magic != MAGIC {
            return Err(Error::malformed(path, 0, "bad magic, expected ELVC"));
        }
        let version = r
            .read_u32::<LittleEndian>()
            .map_err(|e| truncated(path, "version", e))?;
        if version != VERSION {
            return Err(Error::malformed(
                path,
                0,
                format!("unsupported version {version}"),
            ));
        }
        let dim = r
            .read_u32::<LittleEndian>()
            .map_err(|e| truncated(path, "dim", e))? as usize;
        let count = r
            .read_u64::<LittleEndian>()
            .map_err(|e| truncated(path, "count", e))? as usize;
        let mut table = VectorTable::new(dim)
            .map_err(|_| Error::malformed(path, 0, "header declares dim 0"))?;
        let mut values = vec![0f32; dim];
        for rec in 0..count {
            let id_len = r
                .read_u16::<LittleEndian>()
                .map_err(|e| truncated(path, &format!("record {rec} id length"), e))?;
            let mut id_bytes = vec![0u8; id_len as usize];
            read_exact(r, &mut id_bytes, path, &format!("record {rec} id"))?;
            let id = String::from_utf8(id_bytes)
                .map_err(|_| Error::malformed(path, 0, format!("record {rec}: id not UTF-8")))?;
            r.read_f32_into::<LittleEndian>(&mut values)
                .map_err(|e| truncated(path, &format!("record {rec} values"), e))?;
            table.insert(&id, &values)?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file =
            File::create(path).map_err(|e| Error::io_path(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io_path(path.display().to_string(), e))?;
        Self::read_from(&mut BufReader::new(file), &path.display().to_string())
    }
}

pub(crate) fn write_records<'a>(
    w: &mut impl Write,
    dim: usize,
    count: u64,
    rows: impl Iterator<Item = (&'a str, &'a [f32])>,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(dim as u32)?;
    w.write_u64::<LittleEndian>(count)?;
    for (id, values) in rows {
        let id_bytes = id.as_bytes();
        if id_bytes.len() > u16::MAX as usize {
            return Err(Error::InvalidInput(format!(
                "id longer than {} bytes",
                u16::MAX
            )));
        }
        debug_assert_eq!(values.len(), dim);
        w.write_u16::<LittleEndian>(id_bytes.len() as u16)?;
        w.write_all(id_bytes)?;
        for &v in values {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &str, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| truncated(path, what, e))
}

fn truncated(path: &str, what: &str, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Truncated {
            path: path.to_string(),
            msg: format!("while reading {what}"),
        }
    } else {
        Error::io_path(path, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    #[test]
    fn writes_and_reads_two_records() {
        let mut t = VectorTable::new(4).unwrap();
        t.insert("Q1", &[1.0, 2.0, 3.0, 4.0]).unwrap();
        t.insert("Q2", &[-1.0, 0.5, 0.0, 9.0]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = VectorTable::read_from(&mut Cursor::new(&buf), "mem").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get("Q2").unwrap(), &[-1.0, 0.5, 0.0, 9.0]);
    }

    #[test]
    fn header_count_exceeding_records_is_truncation() {
        let mut t = VectorTable::new(2).unwrap();
        t.insert("a", &[1.0, 2.0]).unwrap();
        t.insert("b", &[3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, 2, 3, t.iter()).unwrap();
        let err = VectorTable::read_from(&mut Cursor::new(&buf), "mem").unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }), "{err}");
    }

    #[test]
    fn duplicate_id_in_file_is_rejected() {
        let mut buf = Vec::new();
        let rows = [("x", [1.0f32, 0.0]), ("x", [0.0, 1.0])];
        write_records(
            &mut buf,
            2,
            2,
            rows.iter().map(|(id, v)| (*id, v.as_slice())),
        )
        .unwrap();
        let err = VectorTable::read_from(&mut Cursor::new(&buf), "mem").unwrap_err();
        assert!(matches!(err, Error::DuplicateId(_)));
    }

    #[test]
    fn insert_rejects_wrong_dim() {
        let mut t = VectorTable::new(3).unwrap();
        assert!(matches!(
            t.insert("a", &[1.0, 2.0]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn bad_magic_is_malformed() {
        let buf = b"NOPE\x01\x00\x00\x00".to_vec();
        let err = VectorTable::read_from(&mut Cursor::new(&buf), "mem").unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { .. }));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            dim in 1usize..6,
            rows in proptest::collection::vec(
                proptest::collection::vec(-1e6f32..1e6, 6), 0..8),
        ) {
            let mut t = VectorTable::new(dim).unwrap();
            for (i, row) in rows.iter().enumerate() {
                t.insert(&format!("id{i}"), &row[..dim]).unwrap();
            }
            let mut buf = Vec::new();
            t.write_to(&mut buf).unwrap();
            let back = VectorTable::read_from(&mut Cursor::new(&buf), "mem").unwrap();
            prop_assert_eq!(back.len(), t.len());
            for (id, row) in t.iter() {
                let got = back.get(id).unwrap();
                prop_assert_eq!(
                    got.iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
                    row.iter().map(|f| f.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }
}
