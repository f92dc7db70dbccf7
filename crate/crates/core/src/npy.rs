// SPDX-License-Identifier: MIT OR Apache-2.0

//! NPY v1.0 reader and writer.
//!
//! Writes little-endian, C-order arrays with the header padded so the payload
//! starts on a 64-byte boundary, byte-identical to `numpy.save`. Reading also
//! accepts v2/v3 headers, big-endian payloads and Fortran order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Element storage of an NPY array.
#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
    I64(Vec<i64>),
}

impl NpyData {
    fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
            Self::I32(v) => v.len(),
            Self::I64(v) => v.len(),
        }
    }

    fn descr(&self) -> &'static str {
        match self {
            Self::F32(_) => "<f4",
            Self::F64(_) => "<f8",
            Self::I32(_) => "<i4",
            Self::I64(_) => "<i8",
        }
    }
}

/// An n-dimensional array in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Npy(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Elements converted to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            NpyData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::F64(v) => v.clone(),
            NpyData::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::I64(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        let (rows, cols) = match self.shape.as_slice() {
            [n] => (*n, 1),
            [r, c] => (*r, *c),
            other => {
                return Err(Error::Npy(format!(
                    "expected a 1-D or 2-D array, got shape {other:?}"
                )))
            }
        };
        Matrix::from_vec(rows, cols, self.to_f64())
    }

    pub fn to_labels(&self) -> Result<Vec<i64>> {
        match &self.data {
            NpyData::I64(v) => Ok(v.clone()),
            NpyData::I32(v) => Ok(v.iter().map(|&x| i64::from(x)).collect()),
            _ => {
                let vals = self.to_f64();
                vals.iter()
                    .map(|&x| {
                        if x.fract() == 0.0 && x.is_finite() {
                            Ok(x as i64)
                        } else {
                            Err(Error::Npy(format!("label value {x} is not an integer")))
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = header_bytes(self.data.descr(), &self.shape);
        match &self.data {
            NpyData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NpyData::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NpyData::I32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NpyData::I64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 || &bytes[..6] != MAGIC {
            return Err(Error::Npy("missing NPY magic string".into()));
        }
        let major = bytes[6];
        let (header_len, offset) = match major {
            1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
            2 | 3 => {
                if bytes.len() < 12 {
                    return Err(Error::Npy("truncated header".into()));
                }
                (
                    u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                    12,
                )
            }
            v => return Err(Error::Npy(format!("unsupported format version {v}"))),
        };
        let end = offset + header_len;
        if bytes.len() < end {
            return Err(Error::Npy("truncated header".into()));
        }
        let header = std::str::from_utf8(&bytes[offset..end])
            .map_err(|_| Error::Npy("header is not text".into()))?;
        let descr = dict_string(header, "descr")?;
        let fortran = dict_value(header, "fortran_order")?;
        let fortran = match fortran.trim() {
            "False" => false,
            "True" => true,
            other => return Err(Error::Npy(format!("bad fortran_order '{other}'"))),
        };
        let shape = parse_shape(&dict_value(header, "shape")?)?;
        let count: usize = shape.iter().product();
        let payload = &bytes[end..];

        let (little, kind, width) = parse_descr(&descr)?;
        if payload.len() < count * width {
            return Err(Error::Npy(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                count * width
            )));
        }
        let chunks = payload[..count * width].chunks_exact(width);
        let data = match (kind, width) {
            ('f', 4) => NpyData::F32(
                chunks
                    .map(|c| decode(c, little, f32::from_le_bytes, f32::from_be_bytes))
                    .collect(),
            ),
            ('f', 8) => NpyData::F64(
                chunks
                    .map(|c| decode(c, little, f64::from_le_bytes, f64::from_be_bytes))
                    .collect(),
            ),
            ('i', 4) => NpyData::I32(
                chunks
                    .map(|c| decode(c, little, i32::from_le_bytes, i32::from_be_bytes))
                    .collect(),
            ),
            ('i', 8) => NpyData::I64(
                chunks
                    .map(|c| decode(c, little, i64::from_le_bytes, i64::from_be_bytes))
                    .collect(),
            ),
            _ => return Err(Error::Npy(format!("unsupported dtype '{descr}'"))),
        };
        let mut array = Self::new(shape, data)?;
        if fortran && array.shape.len() > 1 {
            array = array.fortran_to_c();
        }
        Ok(array)
    }

    fn fortran_to_c(self) -> Self {
        let shape = self.shape.clone();
        let n = shape.len();
        let count: usize = shape.iter().product();
        // position of each C-order index in the column-major buffer
        let perm: Vec<usize> = (0..count)
            .map(|c_idx| {
                let mut rem = c_idx;
                let mut idx = vec![0; n];
                for k in (0..n).rev() {
                    idx[k] = rem % shape[k];
                    rem /= shape[k];
                }
                let mut f_idx = 0;
                for k in (0..n).rev() {
                    f_idx = f_idx * shape[k] + idx[k];
                }
                f_idx
            })
            .collect();
        fn gather<T: Copy>(v: &[T], perm: &[usize]) -> Vec<T> {
            perm.iter().map(|&i| v[i]).collect()
        }
        let data = match &self.data {
            NpyData::F32(v) => NpyData::F32(gather(v, &perm)),
            NpyData::F64(v) => NpyData::F64(gather(v, &perm)),
            NpyData::I32(v) => NpyData::I32(gather(v, &perm)),
            NpyData::I64(v) => NpyData::I64(gather(v, &perm)),
        };
        Self { shape, data }
    }
}

fn decode<T, const N: usize>(
    chunk: &[u8],
    little: bool,
    le: fn([u8; N]) -> T,
    be: fn([u8; N]) -> T,
) -> T {
    let arr: [u8; N] = chunk.try_into().expect("chunk width matches dtype");
    if little {
        le(arr)
    } else {
        be(arr)
    }
}

fn header_bytes(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_text = match shape {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict =
        format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_text}, }}");
    // magic(6) + version(2) + length(2) + dict + padding + '\n' ≡ 0 mod 64
    let unpadded = 10 + dict.len() + 1;
    let padding = (64 - unpadded % 64) % 64;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');
    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

fn dict_value(header: &str, key: &str) -> Result<String> {
    let pat = format!("'{key}':");
    let start = header
        .find(&pat)
        .ok_or_else(|| Error::Npy(format!("header missing '{key}'")))?
        + pat.len();
    let rest = header[start..].trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(|| Error::Npy(format!("unterminated value for '{key}'")))?;
    Ok(rest[..end].to_string())
}

fn dict_string(header: &str, key: &str) -> Result<String> {
    let raw = dict_value(header, key)?;
    let trimmed = raw.trim();
    let unquoted = trimmed
        .strip_prefix('\'')
        .and_then(|s| s.strip_suffix('\''))
        .or_else(|| trimmed.strip_prefix('"').and_then(|s| s.strip_suffix('"')))
        .ok_or_else(|| Error::Npy(format!("'{key}' is not a string")))?;
    Ok(unquoted.to_string())
}

fn parse_shape(text: &str) -> Result<Vec<usize>> {
    let inner = text
        .trim()
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Npy(format!("bad shape '{text}'")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Npy(format!("bad shape entry '{s}'")))
        })
        .collect()
}

fn parse_descr(descr: &str) -> Result<(bool, char, usize)> {
    let mut chars = descr.chars();
    let order = chars
        .next()
        .ok_or_else(|| Error::Npy("empty dtype".into()))?;
    let little = match order {
        '<' | '|' | '=' => true,
        '>' => false,
        _ => return Err(Error::Npy(format!("unsupported dtype '{descr}'"))),
    };
    let kind = chars
        .next()
        .ok_or_else(|| Error::Npy("empty dtype".into()))?;
    let width: usize = chars
        .as_str()
        .parse()
        .map_err(|_| Error::Npy(format!("unsupported dtype '{descr}'")))?;
    Ok((little, kind, width))
}

impl From<&Matrix> for NpyArray {
    /// A 2-D float64 array.
    fn from(m: &Matrix) -> Self {
        Self {
            shape: vec![m.rows(), m.cols()],
            data: NpyData::F64(m.as_slice().to_vec()),
        }
    }
}

pub fn write_matrix_f64(path: &Path, m: &Matrix) -> Result<()> {
    NpyArray::from(m).save(path)
}

pub fn write_matrix_f32(path: &Path, m: &Matrix) -> Result<()> {
    let data = m.as_slice().iter().map(|&v| v as f32).collect();
    NpyArray::new(vec![m.rows(), m.cols()], NpyData::F32(data))?.save(path)
}

pub fn write_vector_f64(path: &Path, v: &[f64]) -> Result<()> {
    NpyArray::new(vec![v.len()], NpyData::F64(v.to_vec()))?.save(path)
}

/// Writes integer labels as an n×k int64 array (one column per label set).
pub fn write_labels(path: &Path, columns: &[&[usize]]) -> Result<()> {
    labels_to_array(columns)?.save(path)
}

/// Reads a 1-D or 2-D numeric array as a matrix (1-D becomes a column).
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    NpyArray::load(path)?.to_matrix()
}

/// Reads a 1-D array; 2-D arrays with one row or column are flattened.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let a = NpyArray::load(path)?;
    match a.shape.as_slice() {
        [_] => Ok(a.to_f64()),
        [1, _] | [_, 1] => Ok(a.to_f64()),
        other => Err(Error::Npy(format!(
            "expected a vector, got shape {other:?}"
        ))),
    }
}

/// Reads an integer label array as columns (a 1-D array is one column).
pub fn read_labels(path: &Path) -> Result<Vec<Vec<usize>>> {
    NpyArray::load(path)?.label_columns()
}

/// Encodes label columns as an n×k int64 array.
pub fn labels_to_array(columns: &[&[usize]]) -> Result<NpyArray> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Npy("label columns differ in length".into()));
    }
    let mut data = Vec::with_capacity(n * columns.len());
    for r in 0..n {
        for c in columns {
            data.push(c[r] as i64);
        }
    }
    NpyArray::new(vec![n, columns.len()], NpyData::I64(data))
}

impl NpyArray {
    /// Nonnegative integer labels as columns (a 1-D array is one column).
    pub fn label_columns(&self) -> Result<Vec<Vec<usize>>> {
        let values = self.to_labels()?;
        let (n, k) = match self.shape.as_slice() {
            [n] => (*n, 1),
            [n, k] => (*n, *k),
            other => {
                return Err(Error::Npy(format!(
                    "expected 1-D or 2-D labels, got shape {other:?}"
                )))
            }
        };
        let mut cols = vec![Vec::with_capacity(n); k];
        for r in 0..n {
            for (c, col) in cols.iter_mut().enumerate() {
                let v = values[r * k + c];
                if v < 0 {
                    return Err(Error::Npy(format!("negative label {v}")));
                }
                col.push(v as usize);
            }
        }
        Ok(cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_numpy_layout() {
        let a = NpyArray::new(vec![3, 2], NpyData::F64(vec![0.0; 6])).unwrap();
        let bytes = a.to_bytes();
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        let header = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
        assert!(header.starts_with("{'descr': '<f8', 'fortran_order': False, 'shape': (3, 2), }"));
        assert!(header.ends_with('\n'));
        assert_eq!(bytes.len(), 10 + header_len + 48);
    }

    #[test]
    fn one_d_and_scalar_shapes() {
        let a = NpyArray::new(vec![4], NpyData::I64(vec![1, 2, 3, 4])).unwrap();
        let text = String::from_utf8_lossy(&a.to_bytes()).to_string();
        assert!(text.contains("'shape': (4,)"));
        assert_eq!(NpyArray::from_bytes(&a.to_bytes()).unwrap(), a);
        let s = NpyArray::new(vec![], NpyData::F64(vec![2.5])).unwrap();
        assert_eq!(NpyArray::from_bytes(&s.to_bytes()).unwrap(), s);
    }

    #[test]
    fn fortran_order_is_transposed_on_read() {
        // 2x3 array [[1,2,3],[4,5,6]] stored column-major
        let mut bytes = header_bytes("<f8", &[2, 3]);
        let text = String::from_utf8(bytes[10..].to_vec())
            .unwrap()
            .replace("False", "True ");
        bytes.truncate(10);
        bytes.extend_from_slice(text.as_bytes());
        for v in [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let a = NpyArray::from_bytes(&bytes).unwrap();
        assert_eq!(a.to_f64(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn big_endian_payload() {
        let mut bytes = header_bytes(">f8", &[2]);
        bytes.extend_from_slice(&1.5f64.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f64).to_be_bytes());
        assert_eq!(
            NpyArray::from_bytes(&bytes).unwrap().to_f64(),
            vec![1.5, -2.0]
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(NpyArray::from_bytes(b"not an npy file").is_err());
        let mut bytes = header_bytes("<f8", &[4]);
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(
            NpyArray::from_bytes(&bytes).is_err(),
            "truncated payload must fail"
        );
        let mut bytes = header_bytes("<c16", &[1]);
        bytes.extend_from_slice(&[0u8; 16]);
        assert!(NpyArray::from_bytes(&bytes).is_err());
    }

    #[test]
    fn label_columns_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.npy");
        write_labels(&path, &[&[0, 1, 2], &[3, 4, 5]]).unwrap();
        assert_eq!(
            read_labels(&path).unwrap(),
            vec![vec![0, 1, 2], vec![3, 4, 5]]
        );
    }
}
