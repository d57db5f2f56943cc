//! `USTN`: a minimal little-endian tensor container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "USTN"
//! 4       1     version (1)
//! 5       1     dtype (1 = float32, 2 = complex64 as interleaved re/im float32)
//! 6       1     ndim
//! 7       9     reserved, zero
//! 16      8·nd  dims, u64 LE, outermost first
//! ..            payload, row-major, LE
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex32;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"USTN";
pub const VERSION: u8 = 1;
pub const PREAMBLE_LEN: usize = 16;
pub const MAX_NDIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    C64 = 2,
}

impl DType {
    pub fn from_code(code: u8) -> Option<DType> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::C64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::C64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F32(ArrayD<f32>),
    C64(ArrayD<Complex32>),
}

impl Tensor {
    pub fn dtype(&self) -> DType {
        match self {
            Tensor::F32(_) => DType::F32,
            Tensor::C64(_) => DType::C64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            Tensor::F32(a) => a.shape(),
            Tensor::C64(a) => a.shape(),
        }
    }

    pub fn into_f32(self) -> Result<ArrayD<f32>> {
        match self {
            Tensor::F32(a) => Ok(a),
            Tensor::C64(_) => Err(Error::Shape("expected float32 tensor, found complex64".into())),
        }
    }

    pub fn into_c64(self) -> Result<ArrayD<Complex32>> {
        match self {
            Tensor::C64(a) => Ok(a),
            Tensor::F32(_) => Err(Error::Shape("expected complex64 tensor, found float32".into())),
        }
    }
}

/// Total file size of a tensor with the given dtype and dims.
pub fn encoded_len(dtype: DType, dims: &[usize]) -> usize {
    PREAMBLE_LEN + 8 * dims.len() + dims.iter().product::<usize>() * dtype.size()
}

pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    let dims = t.shape();
    if dims.len() > MAX_NDIM {
        return Err(Error::Shape(format!("{} dims exceed the maximum of {MAX_NDIM}", dims.len())));
    }
    let mut out = Vec::with_capacity(encoded_len(t.dtype(), dims));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(t.dtype() as u8);
    out.push(dims.len() as u8);
    out.extend_from_slice(&[0u8; 9]);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match t {
        Tensor::F32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Tensor::C64(a) => a.iter().for_each(|v| {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }),
    }
    Ok(out)
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        reason: reason.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < PREAMBLE_LEN {
        return Err(format_err(
            bytes.len(),
            format!("truncated header: expected {PREAMBLE_LEN} bytes, found {}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(0, format!("bad magic {:?}", &bytes[..4])));
    }
    if bytes[4] != VERSION {
        return Err(format_err(4, format!("unsupported version {}", bytes[4])));
    }
    let dtype = DType::from_code(bytes[5])
        .ok_or_else(|| format_err(5, format!("unknown dtype code {}", bytes[5])))?;
    let ndim = bytes[6] as usize;
    if ndim > MAX_NDIM {
        return Err(format_err(6, format!("ndim {ndim} exceeds {MAX_NDIM}")));
    }
    if let Some(i) = bytes[7..PREAMBLE_LEN].iter().position(|&b| b != 0) {
        return Err(format_err(7 + i, "reserved header bytes must be zero"));
    }
    let dims_end = PREAMBLE_LEN + 8 * ndim;
    if bytes.len() < dims_end {
        return Err(format_err(
            bytes.len(),
            format!("truncated dims: expected {dims_end} bytes, found {}", bytes.len()),
        ));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut count: usize = 1;
    for k in 0..ndim {
        let at = PREAMBLE_LEN + 8 * k;
        let d = u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
        let d = usize::try_from(d).map_err(|_| format_err(at, format!("dim {d} overflows")))?;
        count = count
            .checked_mul(d)
            .ok_or_else(|| format_err(at, "element count overflows"))?;
        dims.push(d);
    }
    let payload = count
        .checked_mul(dtype.size())
        .and_then(|p| p.checked_add(dims_end))
        .ok_or_else(|| format_err(dims_end, "payload size overflows"))?;
    if bytes.len() != payload {
        let what = if bytes.len() < payload { "truncated payload" } else { "trailing bytes" };
        return Err(format_err(
            bytes.len().min(payload),
            format!("{what}: expected {payload} bytes, found {}", bytes.len()),
        ));
    }
    let body = &bytes[dims_end..];
    let f = |i: usize| f32::from_le_bytes(body[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let shape = IxDyn(&dims);
    let t = match dtype {
        DType::F32 => Tensor::F32(ArrayD::from_shape_vec(shape, (0..count).map(f).collect())
            .expect("length checked")),
        DType::C64 => Tensor::C64(
            ArrayD::from_shape_vec(
                shape,
                (0..count).map(|i| Complex32::new(f(2 * i), f(2 * i + 1))).collect(),
            )
            .expect("length checked"),
        ),
    };
    Ok(t)
}

/// Writes atomically through a sibling temp file.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let bytes = encode(t)?;
    write_atomic(path, &bytes)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { offset, reason } => Error::Format {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().ok();
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_f32<D: ndarray::Dimension>(path: &Path, a: &ndarray::Array<f32, D>) -> Result<()> {
    write_tensor(path, &Tensor::F32(a.clone().into_dyn()))
}

pub fn read_f32<D: ndarray::Dimension>(path: &Path) -> Result<ndarray::Array<f32, D>> {
    let a = read_tensor(path)?.into_f32()?;
    let shape = a.shape().to_vec();
    a.into_dimensionality::<D>()
        .map_err(|_| Error::Shape(format!("{}: unexpected shape {shape:?}", path.display())))
}

pub fn read_c64<D: ndarray::Dimension>(path: &Path) -> Result<ndarray::Array<Complex32, D>> {
    let a = read_tensor(path)?.into_c64()?;
    let shape = a.shape().to_vec();
    a.into_dimensionality::<D>()
        .map_err(|_| Error::Shape(format!("{}: unexpected shape {shape:?}", path.display())))
}
