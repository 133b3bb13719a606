//! Minimal NIfTI-1 reader: uncompressed, single-file, little-endian volumes
//! with int16 / uint8 / uint16 / float32 payloads. Only the header fields
//! needed for ingestion (dims, pixdim, datatype, vox_offset, scaling) are
//! interpreted.

use std::io::Read;
use std::path::Path;

use crate::grid::Grid3;
use crate::volume::VolumeError;

pub const HEADER_SIZE: usize = 348;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_UINT16: i16 = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NiftiDatatype {
    Uint8,
    Int16,
    Float32,
    Uint16,
}

#[derive(Clone, Debug)]
pub struct NiftiVolume {
    pub dims: (usize, usize, usize),
    pub spacing_mm: [f64; 3],
    pub datatype: NiftiDatatype,
    /// Raw values after scl_slope/scl_inter scaling, x-fastest.
    pub values: Vec<f64>,
}

impl NiftiVolume {
    pub fn to_image_grid(&self) -> Grid3<i16> {
        let data = self
            .values
            .iter()
            .map(|&v| v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
            .collect();
        Grid3::from_vec(self.dims.0, self.dims.1, self.dims.2, data)
    }

    pub fn to_label_grid(&self) -> Result<Grid3<u16>, VolumeError> {
        let mut data = Vec::with_capacity(self.values.len());
        for &v in &self.values {
            let r = v.round();
            if !(0.0..=u16::MAX as f64).contains(&r) {
                return Err(VolumeError::InvalidLabelValue(v));
            }
            data.push(r as u16);
        }
        Ok(Grid3::from_vec(self.dims.0, self.dims.1, self.dims.2, data))
    }
}

fn read_i16(bytes: &[u8], at: usize) -> i16 {
    i16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn read_i32(bytes: &[u8], at: usize) -> i32 {
    i32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn read_f32(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Read an uncompressed single-file NIfTI-1 volume.
pub fn read_nifti(path: &Path) -> Result<NiftiVolume, VolumeError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| VolumeError::Io(path.display().to_string(), e.to_string()))?
        .read_to_end(&mut bytes)
        .map_err(|e| VolumeError::Io(path.display().to_string(), e.to_string()))?;
    parse_nifti(&bytes, path)
}

fn parse_nifti(bytes: &[u8], path: &Path) -> Result<NiftiVolume, VolumeError> {
    let name = path.display().to_string();
    if bytes.len() < HEADER_SIZE {
        return Err(VolumeError::HeaderParse(name, "file shorter than 348-byte header".into()));
    }
    let sizeof_hdr = read_i32(bytes, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        // 348 byte-swapped is 1543569408; flag big-endian files explicitly.
        let hint = if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
            "big-endian NIfTI is not supported"
        } else {
            "sizeof_hdr is not 348"
        };
        return Err(VolumeError::HeaderParse(name, hint.into()));
    }
    let magic = &bytes[344..348];
    if magic != b"n+1\0" {
        if magic[..3] == *b"ni1" {
            return Err(VolumeError::HeaderParse(
                name,
                "two-file NIfTI (ni1 magic) is not supported".into(),
            ));
        }
        return Err(VolumeError::HeaderParse(name, "bad magic, expected n+1".into()));
    }

    let ndim = read_i16(bytes, 40);
    if !(3..=7).contains(&ndim) {
        return Err(VolumeError::HeaderParse(name, format!("dim[0]={ndim}, expected >=3")));
    }
    let nx = read_i16(bytes, 42);
    let ny = read_i16(bytes, 44);
    let nz = read_i16(bytes, 46);
    if nx <= 0 || ny <= 0 || nz <= 0 {
        return Err(VolumeError::HeaderParse(name, "non-positive spatial dims".into()));
    }
    for d in 4..=ndim as usize {
        let extent = read_i16(bytes, 40 + 2 * d);
        if extent > 1 {
            return Err(VolumeError::HeaderParse(
                name,
                format!("dim[{d}]={extent}: only single-frame volumes are supported"),
            ));
        }
    }
    let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);

    let datatype_code = read_i16(bytes, 70);
    let datatype = match datatype_code {
        DT_UINT8 => NiftiDatatype::Uint8,
        DT_INT16 => NiftiDatatype::Int16,
        DT_FLOAT32 => NiftiDatatype::Float32,
        DT_UINT16 => NiftiDatatype::Uint16,
        other => return Err(VolumeError::UnsupportedDatatype(name, other)),
    };
    let value_size = match datatype {
        NiftiDatatype::Uint8 => 1,
        NiftiDatatype::Int16 | NiftiDatatype::Uint16 => 2,
        NiftiDatatype::Float32 => 4,
    };

    let spacing_mm = [
        read_f32(bytes, 80) as f64,
        read_f32(bytes, 84) as f64,
        read_f32(bytes, 88) as f64,
    ];
    for s in spacing_mm {
        if !(s.is_finite() && s > 0.0) {
            return Err(VolumeError::BadSpacing(name, spacing_mm));
        }
    }

    let vox_offset = read_f32(bytes, 108);
    if vox_offset < HEADER_SIZE as f32 || vox_offset.fract() != 0.0 {
        return Err(VolumeError::HeaderParse(name, format!("bad vox_offset {vox_offset}")));
    }
    let offset = vox_offset as usize;

    let scl_slope = read_f32(bytes, 112) as f64;
    let scl_inter = read_f32(bytes, 116) as f64;
    let (slope, inter) = if scl_slope == 0.0 { (1.0, 0.0) } else { (scl_slope, scl_inter) };

    let count = nx * ny * nz;
    let need = offset + count * value_size;
    if bytes.len() < need {
        return Err(VolumeError::PayloadSizeMismatch {
            path: name,
            expected: need,
            got: bytes.len(),
        });
    }
    let payload = &bytes[offset..need];
    let mut values = Vec::with_capacity(count);
    match datatype {
        NiftiDatatype::Uint8 => {
            values.extend(payload.iter().map(|&b| b as f64 * slope + inter));
        }
        NiftiDatatype::Int16 => {
            for c in payload.chunks_exact(2) {
                values.push(i16::from_le_bytes([c[0], c[1]]) as f64 * slope + inter);
            }
        }
        NiftiDatatype::Uint16 => {
            for c in payload.chunks_exact(2) {
                values.push(u16::from_le_bytes([c[0], c[1]]) as f64 * slope + inter);
            }
        }
        NiftiDatatype::Float32 => {
            for c in payload.chunks_exact(4) {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if !v.is_finite() {
                    return Err(VolumeError::HeaderParse(name, "non-finite voxel".into()));
                }
                values.push(v as f64 * slope + inter);
            }
        }
    }

    Ok(NiftiVolume { dims: (nx, ny, nz), spacing_mm, datatype, values })
}
