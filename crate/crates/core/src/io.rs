//! `LFT1` binary tensors and per-view PNG light field directories.
//!
//! `LFT1` layout: the 4 magic bytes `LFT1`, a little-endian `u32` rank, `rank`
//! little-endian `u32` dimensions, then the values as little-endian `f32` in
//! row-major order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::field::{CodedImage, LightField, SensingTensor};
use crate::shape::{RayShape, COLORS};

pub const LFT_MAGIC: &[u8; 4] = b"LFT1";

/// An untyped dense `f32` tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(LfError::Length {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(LFT_MAGIC)?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            let d = u32::try_from(d)
                .map_err(|_| LfError::Format(format!("dimension {d} exceeds u32")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != LFT_MAGIC {
            return Err(LfError::Format(format!("bad magic {magic:?}")));
        }
        let rank = read_u32(r)? as usize;
        if rank > 16 {
            return Err(LfError::Format(format!("implausible rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| read_u32(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 4 {
            return Err(LfError::Format(format!(
                "payload has {} bytes, dims {:?} need {}",
                bytes.len(),
                dims,
                len * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    fn ray_shape(&self) -> Result<RayShape> {
        match self.dims.as_slice() {
            &[h, w, nu, nv, c] if nu == nv && c == COLORS => RayShape::new(h, w, nu),
            other => Err(LfError::Shape(format!(
                "expected [H, W, Nv, Nv, 3], got {other:?}"
            ))),
        }
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

impl From<&LightField> for RawTensor {
    fn from(lf: &LightField) -> Self {
        Self {
            dims: lf.shape().dims().to_vec(),
            data: lf.as_slice().to_vec(),
        }
    }
}

impl From<&SensingTensor> for RawTensor {
    fn from(phi: &SensingTensor) -> Self {
        Self {
            dims: phi.shape().dims().to_vec(),
            data: phi.weights().to_vec(),
        }
    }
}

impl From<&CodedImage> for RawTensor {
    fn from(img: &CodedImage) -> Self {
        Self {
            dims: vec![img.height(), img.width()],
            data: img.as_slice().to_vec(),
        }
    }
}

impl TryFrom<RawTensor> for LightField {
    type Error = LfError;

    fn try_from(t: RawTensor) -> Result<Self> {
        let shape = t.ray_shape()?;
        LightField::from_vec(shape, t.data)
    }
}

impl TryFrom<RawTensor> for SensingTensor {
    type Error = LfError;

    fn try_from(t: RawTensor) -> Result<Self> {
        let shape = t.ray_shape()?;
        SensingTensor::from_vec(shape, t.data)
    }
}

impl TryFrom<RawTensor> for CodedImage {
    type Error = LfError;

    fn try_from(t: RawTensor) -> Result<Self> {
        match t.dims.as_slice() {
            &[h, w] => CodedImage::from_vec(h, w, t.data),
            other => Err(LfError::Shape(format!("expected [H, W], got {other:?}"))),
        }
    }
}

/// `meta.json` of a light field view directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMeta {
    #[serde(rename = "Nv")]
    pub views: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub color_space: String,
}

pub const META_FILE: &str = "meta.json";

pub fn view_file_name(u: usize, v: usize) -> String {
    format!("view_{u}_{v}.png")
}

fn to_u8(x: f32) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `view_{u}_{v}.png` (8-bit sRGB-tagged RGB) for every viewpoint plus `meta.json`.
pub fn write_view_dir(lf: &LightField, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let s = lf.shape();
    for u in 0..s.views {
        for v in 0..s.views {
            let view = lf.view(u, v);
            let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(
                s.width as u32,
                s.height as u32,
                view.iter().map(|&x| to_u8(x)).collect(),
            )
            .expect("buffer length matches view size");
            img.save(dir.join(view_file_name(u, v)))?;
        }
    }
    let meta = ViewMeta {
        views: s.views,
        height: s.height,
        width: s.width,
        color_space: "srgb".into(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| LfError::Meta(e.to_string()))?;
    fs::write(dir.join(META_FILE), json)?;
    Ok(())
}

pub fn read_view_meta(dir: impl AsRef<Path>) -> Result<ViewMeta> {
    let path = dir.as_ref().join(META_FILE);
    let text = fs::read_to_string(&path)?;
    let meta: ViewMeta = serde_json::from_str(&text)
        .map_err(|e| LfError::Meta(format!("{}: {e}", path.display())))?;
    if meta.views == 0 || meta.height == 0 || meta.width == 0 {
        return Err(LfError::Meta(format!("{}: zero dimension", path.display())));
    }
    Ok(meta)
}

/// Loads a view directory written by [`write_view_dir`] (or any directory in the same layout).
pub fn read_view_dir(dir: impl AsRef<Path>) -> Result<LightField> {
    let dir = dir.as_ref();
    let meta = read_view_meta(dir)?;
    let shape = RayShape::new(meta.height, meta.width, meta.views)?;
    let mut data = vec![0.0f32; shape.len()];
    for u in 0..shape.views {
        for v in 0..shape.views {
            let path = dir.join(view_file_name(u, v));
            if !path.is_file() {
                return Err(LfError::MissingView { u, v, path });
            }
            let img = image::open(&path)?.to_rgb8();
            if (img.height() as usize, img.width() as usize) != (shape.height, shape.width) {
                return Err(LfError::Shape(format!(
                    "{} is {}x{}, meta says {}x{}",
                    path.display(),
                    img.height(),
                    img.width(),
                    shape.height,
                    shape.width
                )));
            }
            for (x, y, px) in img.enumerate_pixels() {
                let base = shape.index(y as usize, x as usize, u, v, 0);
                for c in 0..COLORS {
                    data[base + c] = px.0[c] as f32 / 255.0;
                }
            }
        }
    }
    LightField::from_vec(shape, data)
}

/// Saves a single-channel image (e.g. a coded measurement) as an 8-bit grayscale PNG.
pub fn write_gray_png(
    data: &[f32],
    height: usize,
    width: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let img: ImageBuffer<image::Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        width as u32,
        height as u32,
        data.iter().map(|&x| to_u8(x)).collect(),
    )
    .ok_or_else(|| LfError::Length {
        expected: height * width,
        actual: data.len(),
    })?;
    img.save(path)?;
    Ok(())
}

/// Reads an 8-bit grayscale PNG as a coded image in `[0, 1]`.
pub fn read_gray_png(path: impl AsRef<Path>) -> Result<CodedImage> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    CodedImage::from_vec(
        h as usize,
        w as usize,
        img.into_raw()
            .into_iter()
            .map(|v| v as f32 / 255.0)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lft_round_trip_in_memory() {
        let t = RawTensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.0, 1e-7, 3.25]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"LFT1");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &3u32.to_le_bytes());
        assert_eq!(&buf[16..20], &0.5f32.to_le_bytes());
        assert_eq!(buf.len(), 16 + 6 * 4);
        let back = RawTensor::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn lft_rejects_bad_magic_and_truncation() {
        assert!(RawTensor::read_from(&mut &b"LFT2\x00\x00\x00\x00"[..]).is_err());
        let t = RawTensor::new(vec![4], vec![1.0; 4]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(
            RawTensor::read_from(&mut buf.as_slice()),
            Err(LfError::Format(_))
        ));
    }

    #[test]
    fn light_field_requires_rank_five() {
        let t = RawTensor::new(vec![2, 2, 3], vec![0.0; 12]).unwrap();
        assert!(LightField::try_from(t).is_err());
    }

    #[test]
    fn missing_view_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let lf = LightField::zeros(RayShape::new(3, 4, 2).unwrap());
        write_view_dir(&lf, dir.path()).unwrap();
        fs::remove_file(dir.path().join("view_1_0.png")).unwrap();
        match read_view_dir(dir.path()) {
            Err(LfError::MissingView { u: 1, v: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_meta_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(META_FILE), "{\"Nv\": 2}").unwrap();
        assert!(matches!(read_view_dir(dir.path()), Err(LfError::Meta(_))));
    }
}
