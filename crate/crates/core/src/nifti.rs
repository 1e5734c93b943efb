//! Minimal single-file NIfTI-1 (`.nii`) reader and writer.
//!
//! Reads uncompressed little-endian files with uint8, int16, int32, float32
//! or float64 voxels and applies `scl_slope`/`scl_inter`. Writes float32
//! volumes, uint8 masks and int16/int32 label atlases with a fixed header so
//! identical inputs produce identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::volume::{voxel_count, Dims3, LabelAtlas, Mask, Spacing3, Volume3D, Volume4D};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const SFORM_CODE: usize = 254;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DataType {
    UInt8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl DataType {
    fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(Self::UInt8),
            4 => Some(Self::Int16),
            8 => Some(Self::Int32),
            16 => Some(Self::Float32),
            64 => Some(Self::Float64),
            _ => None,
        }
    }

    fn code(self) -> i16 {
        match self {
            Self::UInt8 => 2,
            Self::Int16 => 4,
            Self::Int32 => 8,
            Self::Float32 => 16,
            Self::Float64 => 64,
        }
    }

    fn size(self) -> usize {
        match self {
            Self::UInt8 => 1,
            Self::Int16 => 2,
            Self::Int32 | Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }
}

/// Result of reading a NIfTI file: 3-D when `dim[0] == 3` (or `dim[4] == 1`).
#[derive(Debug, Clone, PartialEq)]
pub enum NiftiVolume {
    ThreeD(Volume3D),
    FourD(Volume4D),
}

impl NiftiVolume {
    pub fn into_3d(self) -> Result<Volume3D> {
        match self {
            NiftiVolume::ThreeD(v) => Ok(v),
            NiftiVolume::FourD(v) => Err(Error::nifti(
                "dim",
                format!("expected a 3-D volume, found {} timepoints", v.nt()),
            )),
        }
    }

    pub fn into_4d(self) -> Result<Volume4D> {
        match self {
            NiftiVolume::FourD(v) => Ok(v),
            NiftiVolume::ThreeD(_) => Err(Error::nifti("dim", "expected a 4-D volume, found 3-D")),
        }
    }
}

/// Anything that can be written to a `.nii` file.
#[derive(Debug, Clone, Copy)]
pub enum NiftiImage<'a> {
    Volume3D(&'a Volume3D),
    Volume4D(&'a Volume4D),
    Mask(&'a Mask, Spacing3),
    Atlas(&'a LabelAtlas, Spacing3),
}

pub fn load_nifti(path: impl AsRef<Path>) -> Result<NiftiVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

pub fn load_volume3d(path: impl AsRef<Path>) -> Result<Volume3D> {
    load_nifti(path)?.into_3d()
}

pub fn load_volume4d(path: impl AsRef<Path>) -> Result<Volume4D> {
    load_nifti(path)?.into_4d()
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    Mask::from_volume(&load_volume3d(path)?)
}

pub fn load_atlas(path: impl AsRef<Path>) -> Result<LabelAtlas> {
    LabelAtlas::from_volume(&load_volume3d(path)?)
}

pub fn save_nifti(image: NiftiImage<'_>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses an in-memory `.nii` file.
pub fn from_bytes(bytes: &[u8]) -> Result<NiftiVolume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::nifti(
            "sizeof_hdr",
            format!("file has {} bytes, header needs {HEADER_SIZE}", bytes.len()),
        ));
    }
    let sizeof_hdr = LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        let swapped = sizeof_hdr.swap_bytes();
        let message = if swapped == HEADER_SIZE as i32 {
            "big-endian files are not supported".to_string()
        } else {
            format!("expected 348, found {sizeof_hdr}")
        };
        return Err(Error::nifti("sizeof_hdr", message));
    }
    if &bytes[offsets::MAGIC..offsets::MAGIC + 4] != b"n+1\0" {
        return Err(Error::nifti("magic", "bad magic (expected single-file \"n+1\")"));
    }

    let mut dim = [0i16; 8];
    LittleEndian::read_i16_into(&bytes[offsets::DIM..offsets::DIM + 16], &mut dim);
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::nifti("dim", format!("dim[0] = {ndim} is out of range")));
    }
    for (i, &d) in dim.iter().enumerate().take(ndim as usize + 1).skip(1) {
        if d < 1 {
            return Err(Error::nifti("dim", format!("dim[{i}] = {d} must be positive")));
        }
    }
    let extent = |i: usize| if i as i16 <= ndim { dim[i] as usize } else { 1 };
    if (5..=7).any(|i| extent(i) != 1) {
        return Err(Error::nifti("dim", "volumes with more than 4 dimensions are not supported"));
    }
    let dims: Dims3 = [extent(1), extent(2), extent(3)];
    let nt = extent(4);

    let code = LittleEndian::read_i16(&bytes[offsets::DATATYPE..]);
    let dtype = DataType::from_code(code)
        .ok_or_else(|| Error::nifti("datatype", format!("unsupported datatype code {code}")))?;
    let bitpix = LittleEndian::read_i16(&bytes[offsets::BITPIX..]);
    if bitpix as usize != dtype.size() * 8 {
        return Err(Error::nifti(
            "bitpix",
            format!("bitpix {bitpix} disagrees with datatype {code}"),
        ));
    }

    let mut pixdim = [0f32; 8];
    LittleEndian::read_f32_into(&bytes[offsets::PIXDIM..offsets::PIXDIM + 32], &mut pixdim);
    let spacing: Spacing3 = [
        f64::from(pixdim[1]),
        f64::from(pixdim[2]),
        f64::from(pixdim[3]),
    ];
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::nifti(
            "pixdim",
            format!("voxel spacing {spacing:?} must be positive"),
        ));
    }

    let vox_offset = LittleEndian::read_f32(&bytes[offsets::VOX_OFFSET..]);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::nifti(
            "vox_offset",
            format!("invalid data offset {vox_offset}"),
        ));
    }
    let offset = vox_offset as usize;
    let n = voxel_count(dims) * nt;
    let needed = offset + n * dtype.size();
    if bytes.len() < needed {
        return Err(Error::nifti(
            "dim",
            format!(
                "header describes {n} voxels ({needed} bytes) but file has {} bytes",
                bytes.len()
            ),
        ));
    }

    let mut slope = f64::from(LittleEndian::read_f32(&bytes[offsets::SCL_SLOPE..]));
    let inter = f64::from(LittleEndian::read_f32(&bytes[offsets::SCL_INTER..]));
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    let inter = if inter.is_finite() { inter } else { 0.0 };

    let raw = &bytes[offset..needed];
    let data: Vec<f64> = match dtype {
        DataType::UInt8 => raw.iter().map(|&b| f64::from(b)).collect(),
        DataType::Int16 => raw
            .chunks_exact(2)
            .map(|c| f64::from(LittleEndian::read_i16(c)))
            .collect(),
        DataType::Int32 => raw
            .chunks_exact(4)
            .map(|c| f64::from(LittleEndian::read_i32(c)))
            .collect(),
        DataType::Float32 => raw
            .chunks_exact(4)
            .map(|c| f64::from(LittleEndian::read_f32(c)))
            .collect(),
        DataType::Float64 => raw.chunks_exact(8).map(LittleEndian::read_f64).collect(),
    };
    let data: Vec<f64> = data.into_iter().map(|v| v * slope + inter).collect();

    if nt == 1 {
        Ok(NiftiVolume::ThreeD(Volume3D::new(dims, spacing, data)?))
    } else {
        let units = bytes[offsets::XYZT_UNITS] & 0x38;
        let mut tr = f64::from(pixdim[4]);
        match units {
            16 => tr /= 1e3, // msec
            24 => tr /= 1e6, // usec
            _ => {}
        }
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::nifti(
                "pixdim",
                format!("pixdim[4] = {} is not a valid repetition time", pixdim[4]),
            ));
        }
        Ok(NiftiVolume::FourD(Volume4D::new(dims, nt, spacing, tr, data)?))
    }
}

fn header(dims: Dims3, nt: usize, spacing: Spacing3, tr: f64, dtype: DataType) -> Result<Vec<u8>> {
    let mut h = vec![0u8; VOX_OFFSET];
    LittleEndian::write_i32(&mut h[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    let extents = [dims[0], dims[1], dims[2], nt];
    for &e in &extents {
        if e > i16::MAX as usize {
            return Err(Error::nifti("dim", format!("extent {e} exceeds NIfTI-1 limit")));
        }
    }
    let ndim: i16 = if nt > 1 { 4 } else { 3 };
    let dim: [i16; 8] = [
        ndim,
        dims[0] as i16,
        dims[1] as i16,
        dims[2] as i16,
        nt.max(1) as i16,
        1,
        1,
        1,
    ];
    LittleEndian::write_i16_into(&dim, &mut h[offsets::DIM..offsets::DIM + 16]);
    LittleEndian::write_i16(&mut h[offsets::DATATYPE..], dtype.code());
    LittleEndian::write_i16(&mut h[offsets::BITPIX..], (dtype.size() * 8) as i16);
    let pixdim: [f32; 8] = [
        1.0,
        spacing[0] as f32,
        spacing[1] as f32,
        spacing[2] as f32,
        if nt > 1 { tr as f32 } else { 0.0 },
        0.0,
        0.0,
        0.0,
    ];
    LittleEndian::write_f32_into(&pixdim, &mut h[offsets::PIXDIM..offsets::PIXDIM + 32]);
    LittleEndian::write_f32(&mut h[offsets::VOX_OFFSET..], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut h[offsets::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut h[offsets::SCL_INTER..], 0.0);
    // mm + sec
    h[offsets::XYZT_UNITS] = 2 | 8;
    let descrip = b"hemomap";
    h[offsets::DESCRIP..offsets::DESCRIP + descrip.len()].copy_from_slice(descrip);
    // scanner-independent diagonal sform
    LittleEndian::write_i16(&mut h[offsets::SFORM_CODE..], 2);
    let srow: [f32; 12] = [
        spacing[0] as f32,
        0.0,
        0.0,
        0.0,
        0.0,
        spacing[1] as f32,
        0.0,
        0.0,
        0.0,
        0.0,
        spacing[2] as f32,
        0.0,
    ];
    LittleEndian::write_f32_into(&srow, &mut h[offsets::SROW_X..offsets::SROW_X + 48]);
    h[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"n+1\0");
    Ok(h)
}

fn push_f32(out: &mut Vec<u8>, values: &[f64]) -> Result<()> {
    let mut buf = [0u8; 4];
    for &v in values {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "value {v} is not representable as float32"
            )));
        }
        LittleEndian::write_f32(&mut buf, f);
        out.extend_from_slice(&buf);
    }
    Ok(())
}

/// Writes a float32 4-D stack one 3-D frame at a time (frames are the slowest axis).
///
/// Used for channel stacks too large to hold as a [`Volume4D`]; the fourth
/// axis carries a nominal 1 s step.
pub struct StackWriter {
    path: PathBuf,
    out: BufWriter<File>,
    dims: Dims3,
    spacing: Spacing3,
    expected: usize,
    written: usize,
}

impl StackWriter {
    pub fn create(path: impl AsRef<Path>, dims: Dims3, spacing: Spacing3, frames: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if frames < 2 {
            return Err(Error::InvalidArgument(format!(
                "a stack needs at least 2 frames, got {frames}"
            )));
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let h = header(dims, frames, spacing, 1.0, DataType::Float32)?;
        out.write_all(&h).map_err(|e| Error::io(&path, e))?;
        Ok(StackWriter {
            path,
            out,
            dims,
            spacing,
            expected: frames,
            written: 0,
        })
    }

    pub fn push(&mut self, frame: &Volume3D) -> Result<()> {
        if frame.dims() != self.dims || frame.spacing() != self.spacing {
            return Err(Error::DimensionMismatch(format!(
                "stack frame {:?} does not match {:?}",
                frame.dims(),
                self.dims
            )));
        }
        if self.written == self.expected {
            return Err(Error::InvalidArgument("stack already holds every frame".into()));
        }
        let mut buf = Vec::with_capacity(frame.len() * 4);
        push_f32(&mut buf, frame.data())?;
        self.out.write_all(&buf).map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::InvalidArgument(format!(
                "stack received {} of {} frames",
                self.written, self.expected
            )));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Serializes an image to `.nii` bytes.
pub fn to_bytes(image: NiftiImage<'_>) -> Result<Vec<u8>> {
    match image {
        NiftiImage::Volume3D(v) => {
            let mut out = header(v.dims(), 1, v.spacing(), 0.0, DataType::Float32)?;
            push_f32(&mut out, v.data())?;
            Ok(out)
        }
        NiftiImage::Volume4D(v) => {
            let mut out = header(v.dims(), v.nt(), v.spacing(), v.tr(), DataType::Float32)?;
            push_f32(&mut out, v.data())?;
            Ok(out)
        }
        NiftiImage::Mask(m, spacing) => {
            let mut out = header(m.dims(), 1, spacing, 0.0, DataType::UInt8)?;
            out.extend(m.data().iter().map(|&b| u8::from(b)));
            Ok(out)
        }
        NiftiImage::Atlas(a, spacing) => {
            let max = a.label_ids().last().copied().unwrap_or(0);
            if max <= i16::MAX as u32 {
                let mut out = header(a.dims(), 1, spacing, 0.0, DataType::Int16)?;
                let mut buf = [0u8; 2];
                for &l in a.labels() {
                    LittleEndian::write_i16(&mut buf, l as i16);
                    out.extend_from_slice(&buf);
                }
                Ok(out)
            } else if max <= i32::MAX as u32 {
                let mut out = header(a.dims(), 1, spacing, 0.0, DataType::Int32)?;
                let mut buf = [0u8; 4];
                for &l in a.labels() {
                    LittleEndian::write_i32(&mut buf, l as i32);
                    out.extend_from_slice(&buf);
                }
                Ok(out)
            } else {
                Err(Error::InvalidArgument(format!("label {max} exceeds int32")))
            }
        }
    }
}
