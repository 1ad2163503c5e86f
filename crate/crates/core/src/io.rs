//! File formats.
//!
//! Binary files are little-endian. A projection stack (`UVTS`) is
//!
//! ```text
//! "UVTS" | version u32 | L u32 | M u32 | delta f64 | sigma f64 | seed u64
//! L frames of (2M+1)^2 f32, row-major with u fastest
//! ```
//!
//! and a voxel density (`UVTV`) is
//!
//! ```text
//! "UVTV" | version u32 | M_r u32 | voxel_size f64
//! (2M_r+1)^3 f32 with x fastest
//! ```
//!
//! Curves are two-column CSV files with a header line.

use std::borrow::Cow;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{ImageSource, ProjectionImage, ProjectionStack};
use crate::recon::{DensityVector, TraceEntry, VoxelGrid};

pub const STACK_MAGIC: &[u8; 4] = b"UVTS";
pub const DENSITY_MAGIC: &[u8; 4] = b"UVTV";
pub const FORMAT_VERSION: u32 = 1;
const STACK_HEADER_BYTES: u64 = 4 + 4 + 4 + 4 + 8 + 8 + 8;
const WRITE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackHeader {
    pub n_images: usize,
    pub half_width: usize,
    pub delta: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl StackHeader {
    fn frame_len(&self) -> usize {
        (2 * self.half_width + 1).pow(2)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn to_u32(v: usize, what: &str, path: &Path) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(path, format!("{what} {v} does not fit in u32")))
}

/// Write every image of `source`, generating or loading it in chunks.
pub fn write_stack(path: &Path, source: &dyn ImageSource, seed: u64) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    w.write_all(STACK_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io)?;
    w.write_u32::<LittleEndian>(to_u32(source.len(), "image count", path)?).map_err(io)?;
    w.write_u32::<LittleEndian>(to_u32(source.half_width(), "half width", path)?).map_err(io)?;
    w.write_f64::<LittleEndian>(source.delta()).map_err(io)?;
    w.write_f64::<LittleEndian>(source.noise_sigma()).map_err(io)?;
    w.write_u64::<LittleEndian>(seed).map_err(io)?;
    for start in (0..source.len()).step_by(WRITE_CHUNK) {
        let end = (start + WRITE_CHUNK).min(source.len());
        for img in source.load(start..end)?.iter() {
            for &p in img.pixels() {
                w.write_f32::<LittleEndian>(p as f32).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

fn read_stack_header(path: &Path, r: &mut impl Read) -> Result<StackHeader> {
    let short = |_| Error::format(path, "truncated header");
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(short)?;
    if &magic != STACK_MAGIC {
        return Err(Error::format(path, "not a projection stack (bad magic)"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(short)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let n_images = r.read_u32::<LittleEndian>().map_err(short)? as usize;
    let half_width = r.read_u32::<LittleEndian>().map_err(short)? as usize;
    let delta = r.read_f64::<LittleEndian>().map_err(short)?;
    let noise_sigma = r.read_f64::<LittleEndian>().map_err(short)?;
    let seed = r.read_u64::<LittleEndian>().map_err(short)?;
    if !(delta > 0.0) || !(noise_sigma >= 0.0) {
        return Err(Error::format(path, "invalid pixel width or noise level"));
    }
    Ok(StackHeader {
        n_images,
        half_width,
        delta,
        noise_sigma,
        seed,
    })
}

fn read_frames(path: &Path, r: &mut impl Read, h: &StackHeader, count: usize) -> Result<Vec<ProjectionImage>> {
    let n = h.frame_len();
    let mut buf = vec![0f32; n];
    (0..count)
        .map(|_| {
            r.read_f32_into::<LittleEndian>(&mut buf)
                .map_err(|_| Error::format(path, "truncated frame data"))?;
            ProjectionImage::from_pixels(h.half_width, h.delta, buf.iter().map(|&v| v as f64).collect())
        })
        .collect()
}

/// Read a whole stack into memory.
pub fn read_stack(path: &Path) -> Result<ProjectionStack> {
    let mut r = open(path)?;
    let h = read_stack_header(path, &mut r)?;
    if h.n_images == 0 {
        return Err(Error::format(path, "stack holds no images"));
    }
    let images = read_frames(path, &mut r, &h, h.n_images)?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after the last frame"));
    }
    ProjectionStack::new(images, h.noise_sigma, h.seed)
}

/// A stack file read lazily, chunk by chunk.
#[derive(Debug, Clone)]
pub struct StackFile {
    path: PathBuf,
    header: StackHeader,
}

impl StackFile {
    pub fn open(path: &Path) -> Result<Self> {
        let mut r = open(path)?;
        let header = read_stack_header(path, &mut r)?;
        let expected = STACK_HEADER_BYTES + (header.n_images * header.frame_len() * 4) as u64;
        let actual = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
        if actual != expected {
            return Err(Error::format(
                path,
                format!("expected {expected} bytes for {} frames, found {actual}", header.n_images),
            ));
        }
        Ok(StackFile {
            path: path.to_path_buf(),
            header,
        })
    }

    pub fn header(&self) -> &StackHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl ImageSource for StackFile {
    fn len(&self) -> usize {
        self.header.n_images
    }
    fn half_width(&self) -> usize {
        self.header.half_width
    }
    fn delta(&self) -> f64 {
        self.header.delta
    }
    fn noise_sigma(&self) -> f64 {
        self.header.noise_sigma
    }
    fn load(&self, range: Range<usize>) -> Result<Cow<'_, [ProjectionImage]>> {
        assert!(range.end <= self.len(), "frame range out of bounds");
        let mut r = open(&self.path)?;
        let offset = STACK_HEADER_BYTES + (range.start * self.header.frame_len() * 4) as u64;
        r.seek(SeekFrom::Start(offset)).map_err(|e| Error::io(&self.path, e))?;
        Ok(Cow::Owned(read_frames(&self.path, &mut r, &self.header, range.len())?))
    }
}

pub fn write_density(path: &Path, density: &DensityVector, grid: &VoxelGrid) -> Result<()> {
    if density.values.len() != grid.len() {
        return Err(Error::param("density size does not match the grid"));
    }
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    w.write_all(DENSITY_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io)?;
    w.write_u32::<LittleEndian>(to_u32(grid.half_width, "half width", path)?).map_err(io)?;
    w.write_f64::<LittleEndian>(grid.voxel_size).map_err(io)?;
    for &v in &density.values {
        w.write_f32::<LittleEndian>(v as f32).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_density(path: &Path) -> Result<(DensityVector, VoxelGrid)> {
    let mut r = open(path)?;
    let short = |_| Error::format(path, "truncated density file");
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(short)?;
    if &magic != DENSITY_MAGIC {
        return Err(Error::format(path, "not a density file (bad magic)"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(short)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let half_width = r.read_u32::<LittleEndian>().map_err(short)? as usize;
    let voxel_size = r.read_f64::<LittleEndian>().map_err(short)?;
    let grid = VoxelGrid::new(half_width, voxel_size).map_err(|_| Error::format(path, "invalid voxel size"))?;
    let mut buf = vec![0f32; grid.len()];
    r.read_f32_into::<LittleEndian>(&mut buf).map_err(short)?;
    Ok((
        DensityVector {
            values: buf.iter().map(|&v| v as f64).collect(),
        },
        grid,
    ))
}

/// Two-column CSV with header `x_name,value`.
pub fn write_curve_csv(path: &Path, x_name: &str, x: &[f64], values: &[f64]) -> Result<()> {
    assert_eq!(x.len(), values.len());
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    writeln!(w, "{x_name},value").map_err(io)?;
    for (a, b) in x.iter().zip(values) {
        writeln!(w, "{a:e},{b:e}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read a two-column CSV written by [`write_curve_csv`].
pub fn read_curve_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = open(path)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = || -> Result<f64> {
            parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::format(path, format!("line {}: expected two numbers", n + 1)))
        };
        x.push(next()?);
        y.push(next()?);
    }
    Ok((x, y))
}

pub fn write_trace_csv(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    writeln!(w, "iter,objective,step").map_err(io)?;
    for e in trace {
        writeln!(w, "{},{:e},{:e}", e.iter, e.objective, e.step).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One frame as `u,v,value` rows.
pub fn write_frame_csv(path: &Path, image: &ProjectionImage) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    writeln!(w, "u,v,value").map_err(io)?;
    let m = image.half_width() as i64;
    for v in -m..=m {
        for u in -m..=m {
            writeln!(w, "{u},{v},{:e}", image.get(u, v)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
