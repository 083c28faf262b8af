//! Uncompressed NIfTI-1 volumes.
//!
//! Voxels are stored with the first NIfTI axis varying fastest, so a file
//! with `dim = [3, nx, ny, nz]` becomes a [`Volume3D`] of dims
//! `[nz, ny, nx]` in row-major order without any reordering.

use std::path::Path;

use super::volume::{Volume3D, VoxelData};
use crate::error::{Error, FormatError, Result};

pub const HEADER_SIZE: usize = 348;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

/// NIfTI-1 datatype codes this reader accepts.
pub mod datatype {
    pub const UINT8: i16 = 2;
    pub const INT16: i16 = 4;
    pub const FLOAT32: i16 = 16;
    pub const FLOAT64: i16 = 64;
}

fn bitpix_for(datatype: i16) -> Option<i16> {
    match datatype {
        datatype::UINT8 => Some(8),
        datatype::INT16 => Some(16),
        datatype::FLOAT32 => Some(32),
        datatype::FLOAT64 => Some(64),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
    pub byte_order: ByteOrder,
}

impl NiftiHeader {
    /// Minimal single-file header for a `[nz, ny, nx]` volume.
    pub fn for_volume(dims: [usize; 3], datatype: i16) -> Self {
        let [nz, ny, nx] = dims;
        Self {
            sizeof_hdr: HEADER_SIZE as i32,
            dim: [3, nx as i16, ny as i16, nz as i16, 1, 1, 1, 1],
            datatype,
            bitpix: bitpix_for(datatype).unwrap_or(0),
            pixdim: [1.0; 8],
            vox_offset: 352.0,
            scl_slope: 0.0,
            scl_inter: 0.0,
            magic: *b"n+1\0",
            byte_order: ByteOrder::Little,
        }
    }

    /// Volume dims `[nz, ny, nx]`.
    pub fn volume_dims(&self) -> [usize; 3] {
        [self.dim[3] as usize, self.dim[2] as usize, self.dim[1] as usize]
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < HEADER_SIZE {
            return Err(FormatError::Truncated {
                expected: HEADER_SIZE,
                found: bytes.len(),
            });
        }
        let raw = [bytes[0], bytes[1], bytes[2], bytes[3]];
        let order = if i32::from_le_bytes(raw) == HEADER_SIZE as i32 {
            ByteOrder::Little
        } else if i32::from_be_bytes(raw) == HEADER_SIZE as i32 {
            ByteOrder::Big
        } else {
            return Err(FormatError::Header(format!(
                "sizeof_hdr is neither 348 little- nor big-endian ({raw:02x?})"
            )));
        };
        let r = Reader { bytes, order };

        let magic: [u8; 4] = bytes[344..348].try_into().expect("4 bytes");
        if &magic != b"n+1\0" && &magic != b"ni1\0" {
            return Err(FormatError::BadMagic(format!(
                "NIfTI-1 magic must be n+1 or ni1, got {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }

        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = r.i16(40 + 2 * i);
        }
        if !(1..=7).contains(&dim[0]) {
            return Err(FormatError::Header(format!("dim[0] = {} outside 1..=7", dim[0])));
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = r.f32(76 + 4 * i);
        }
        let datatype = r.i16(70);
        let bitpix = r.i16(72);
        match bitpix_for(datatype) {
            None => {
                return Err(FormatError::UnsupportedDatatype(format!(
                    "NIfTI datatype code {datatype}"
                )))
            }
            Some(expected) if expected != bitpix => {
                return Err(FormatError::Header(format!(
                    "bitpix {bitpix} inconsistent with datatype {datatype}"
                )))
            }
            Some(_) => {}
        }
        Ok(Self {
            sizeof_hdr: HEADER_SIZE as i32,
            dim,
            datatype,
            bitpix,
            pixdim,
            vox_offset: r.f32(108),
            scl_slope: r.f32(112),
            scl_inter: r.f32(116),
            magic,
            byte_order: order,
        })
    }

    /// Serializes the header (348 bytes) in its declared byte order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; HEADER_SIZE];
        let mut w = Writer {
            bytes: &mut out,
            order: self.byte_order,
        };
        w.i32(0, self.sizeof_hdr);
        for (i, &d) in self.dim.iter().enumerate() {
            w.i16(40 + 2 * i, d);
        }
        w.i16(70, self.datatype);
        w.i16(72, self.bitpix);
        for (i, &p) in self.pixdim.iter().enumerate() {
            w.f32(76 + 4 * i, p);
        }
        w.f32(108, self.vox_offset);
        w.f32(112, self.scl_slope);
        w.f32(116, self.scl_inter);
        out[344..348].copy_from_slice(&self.magic);
        out
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    order: ByteOrder,
}

impl Reader<'_> {
    fn array<const N: usize>(&self, off: usize) -> [u8; N] {
        self.bytes[off..off + N].try_into().expect("in bounds")
    }
    fn i16(&self, off: usize) -> i16 {
        match self.order {
            ByteOrder::Little => i16::from_le_bytes(self.array(off)),
            ByteOrder::Big => i16::from_be_bytes(self.array(off)),
        }
    }
    fn f32(&self, off: usize) -> f32 {
        match self.order {
            ByteOrder::Little => f32::from_le_bytes(self.array(off)),
            ByteOrder::Big => f32::from_be_bytes(self.array(off)),
        }
    }
}

struct Writer<'a> {
    bytes: &'a mut [u8],
    order: ByteOrder,
}

impl Writer<'_> {
    fn put(&mut self, off: usize, le: &[u8], be: &[u8]) {
        let src = match self.order {
            ByteOrder::Little => le,
            ByteOrder::Big => be,
        };
        self.bytes[off..off + src.len()].copy_from_slice(src);
    }
    fn i16(&mut self, off: usize, v: i16) {
        self.put(off, &v.to_le_bytes(), &v.to_be_bytes());
    }
    fn i32(&mut self, off: usize, v: i32) {
        self.put(off, &v.to_le_bytes(), &v.to_be_bytes());
    }
    fn f32(&mut self, off: usize, v: f32) {
        self.put(off, &v.to_le_bytes(), &v.to_be_bytes());
    }
}

/// Decodes a single-file NIfTI-1 image held in memory.
///
/// Voxels are scaled by `scl_slope`/`scl_inter` when the slope is non-zero
/// and always returned as `f64`.
pub fn decode_nifti(bytes: &[u8]) -> Result<Volume3D, FormatError> {
    let header = NiftiHeader::parse(bytes)?;
    let offset = header.vox_offset.max(HEADER_SIZE as f32) as usize;
    decode_payload(&header, bytes, offset)
}

fn decode_payload(header: &NiftiHeader, bytes: &[u8], offset: usize) -> Result<Volume3D, FormatError> {
    let nd = header.dim[0] as usize;
    if nd != 3 && !(nd > 3 && header.dim[4..=nd].iter().all(|&d| d == 1)) {
        return Err(FormatError::Header(format!(
            "only 3-D volumes are supported, dim = {:?}",
            header.dim
        )));
    }
    if header.dim[1..=3].iter().any(|&d| d <= 0) {
        return Err(FormatError::Header(format!(
            "non-positive extent in dim {:?}",
            header.dim
        )));
    }
    let dims = header.volume_dims();
    let count: usize = dims.iter().product();
    let width = (header.bitpix / 8) as usize;
    let expected = offset + count * width;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[offset..expected];
    let big = header.byte_order == ByteOrder::Big;
    let raw: Vec<f64> = match header.datatype {
        datatype::UINT8 => payload.iter().map(|&b| b as f64).collect(),
        datatype::INT16 => payload
            .chunks_exact(2)
            .map(|c| {
                let a = [c[0], c[1]];
                (if big {
                    i16::from_be_bytes(a)
                } else {
                    i16::from_le_bytes(a)
                }) as f64
            })
            .collect(),
        datatype::FLOAT32 => payload
            .chunks_exact(4)
            .map(|c| {
                let a: [u8; 4] = c.try_into().expect("4 bytes");
                (if big {
                    f32::from_be_bytes(a)
                } else {
                    f32::from_le_bytes(a)
                }) as f64
            })
            .collect(),
        datatype::FLOAT64 => payload
            .chunks_exact(8)
            .map(|c| {
                let a: [u8; 8] = c.try_into().expect("8 bytes");
                if big {
                    f64::from_be_bytes(a)
                } else {
                    f64::from_le_bytes(a)
                }
            })
            .collect(),
        other => return Err(FormatError::UnsupportedDatatype(format!("NIfTI datatype code {other}"))),
    };
    let (slope, inter) = (header.scl_slope as f64, header.scl_inter as f64);
    let data = if slope != 0.0 && slope.is_finite() {
        raw.into_iter().map(|v| v * slope + inter).collect()
    } else {
        raw
    };
    Ok(Volume3D::new(dims, VoxelData::F64(data)).expect("dims checked above"))
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = NiftiHeader::parse(&bytes)?;
    let mut vol = if &header.magic == b"ni1\0" {
        // header/image pair: voxels live in the sibling .img file
        let img = path.with_extension("img");
        let data = std::fs::read(&img).map_err(|e| Error::io(&img, e))?;
        decode_payload(&header, &data, header.vox_offset.max(0.0) as usize)?
    } else {
        decode_nifti(&bytes)?
    };
    vol.provenance.source = Some(path.to_path_buf());
    vol.provenance.history.push("read_nifti".into());
    Ok(vol)
}

/// Encodes a volume as single-file NIfTI-1 with `float64` voxels.
pub fn encode_nifti(volume: &Volume3D, order: ByteOrder) -> Vec<u8> {
    let mut header = NiftiHeader::for_volume(volume.dims(), datatype::FLOAT64);
    header.byte_order = order;
    let mut out = header.to_bytes();
    out.extend_from_slice(&[0u8; 4]);
    for v in volume.to_f64_vec() {
        match order {
            ByteOrder::Little => out.extend_from_slice(&v.to_le_bytes()),
            ByteOrder::Big => out.extend_from_slice(&v.to_be_bytes()),
        }
    }
    out
}

pub fn write_nifti(path: impl AsRef<Path>, volume: &Volume3D) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_nifti(volume, ByteOrder::Little)).map_err(|e| Error::io(path, e))
}
