//! File formats: 8-bit sRGB PNG images, PFM and 16-bit PNG depth, sparse
//! depth as CSV or JSON.
//!
//! PNG output uses fixed encoder settings so identical images always produce
//! identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::depth::{DepthSample, SparseDepth};
use crate::error::{Error, Result};
use crate::image::{DepthMap, Image, CHANNELS};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Quantizes display values to 8 bits.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a display-space image as 8-bit RGB PNG.
pub fn encode_png(image: &Image) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::NoFilter);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        let bytes: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
        writer.write_image_data(&bytes).expect("in-memory PNG data");
    }
    out
}

pub fn write_png(path: &Path, image: &Image) -> Result<()> {
    let bytes = encode_png(image);
    let mut f = create(path)?;
    f.write_all(&bytes)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

struct DecodedPng {
    width: usize,
    height: usize,
    channels: usize,
    max: f64,
    samples: Vec<f64>,
}

fn decode_png_bytes(bytes: &[u8], path: &Path) -> Result<DecodedPng> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, format!("PNG header: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "PNG too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, format!("PNG data: {e}")))?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::format(path, "unexpanded palette PNG")),
    };
    let (samples, max) = match info.bit_depth {
        png::BitDepth::Sixteen => (
            buf[..info.buffer_size()]
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64)
                .collect(),
            65535.0,
        ),
        png::BitDepth::Eight => (
            buf[..info.buffer_size()]
                .iter()
                .map(|&b| b as f64)
                .collect(),
            255.0,
        ),
        other => {
            return Err(Error::format(
                path,
                format!("unsupported bit depth {other:?}"),
            ))
        }
    };
    Ok(DecodedPng {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        max,
        samples,
    })
}

/// Decodes PNG bytes into a display-space RGB image. Gray is replicated and
/// alpha dropped.
pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    png_to_image(decode_png_bytes(bytes, Path::new("<memory>"))?)
}

fn png_to_image(png: DecodedPng) -> Result<Image> {
    let mut data = Vec::with_capacity(png.width * png.height * CHANNELS);
    for px in png.samples.chunks_exact(png.channels) {
        let rgb = match png.channels {
            1 | 2 => [px[0]; 3],
            _ => [px[0], px[1], px[2]],
        };
        data.extend(rgb.iter().map(|v| v / png.max));
    }
    Image::new(png.width, png.height, data)
}

pub fn read_png(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    png_to_image(decode_png_bytes(&bytes, path)?)
}

/// Linear depth range encoded by a 16-bit depth PNG: 0 maps to `near`, 65535
/// to `far`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEncoding {
    pub near: f64,
    pub far: f64,
}

pub fn read_depth_png16(path: &Path, encoding: &DepthEncoding) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let png = decode_png_bytes(&bytes, path)?;
    if png.channels != 1 || png.max != 65535.0 {
        return Err(Error::format(path, "depth PNG must be 16-bit grayscale"));
    }
    let span = encoding.far - encoding.near;
    DepthMap::new(
        png.width,
        png.height,
        png.samples
            .iter()
            .map(|v| encoding.near + span * v / 65535.0)
            .collect(),
    )
}

pub fn write_depth_png16(path: &Path, depth: &DepthMap, encoding: &DepthEncoding) -> Result<()> {
    let span = encoding.far - encoding.near;
    if !(span > 0.0) {
        return Err(Error::domain("depth encoding needs far > near"));
    }
    let mut bytes = Vec::with_capacity(depth.values().len() * 2);
    for &d in depth.values() {
        let q = (((d - encoding.near) / span).clamp(0.0, 1.0) * 65535.0).round() as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, depth.width() as u32, depth.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::NoFilter);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        writer.write_image_data(&bytes).expect("in-memory PNG data");
    }
    let mut f = create(path)?;
    f.write_all(&out)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a single-channel PFM (`Pf`). Rows are stored bottom to top; the
/// sign of the scale line gives the byte order.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let mut reader = open(path)?;
    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<File>| -> Result<String> {
        line.clear();
        reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        Ok(line.trim().to_string())
    };
    match next_line(&mut reader)?.as_str() {
        "Pf" => {}
        "PF" => {
            return Err(Error::format(
                path,
                "color PFM given where depth was expected",
            ))
        }
        other => return Err(Error::format(path, format!("bad PFM magic `{other}`"))),
    }
    let dims = next_line(&mut reader)?;
    let mut parts = dims.split_whitespace().map(str::parse::<usize>);
    let (w, h) = match (parts.next(), parts.next(), parts.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) => (w, h),
        _ => return Err(Error::format(path, format!("bad PFM dimensions `{dims}`"))),
    };
    let scale_line = next_line(&mut reader)?;
    let scale: f64 = scale_line
        .parse()
        .map_err(|_| Error::format(path, format!("bad PFM scale `{scale_line}`")))?;
    let little = scale < 0.0;

    let mut raw = vec![0u8; w * h * 4];
    reader
        .read_exact(&mut raw)
        .map_err(|_| Error::format(path, "truncated PFM data"))?;
    let mut values = vec![0.0; w * h];
    for (k, b) in raw.chunks_exact(4).enumerate() {
        let bytes = [b[0], b[1], b[2], b[3]];
        let v = if little {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let (x, file_row) = (k % w, k / w);
        values[(h - 1 - file_row) * w + x] = v as f64;
    }
    DepthMap::new(w, h, values).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes a little-endian single-channel PFM.
pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = depth.dims();
    let mut out = Vec::with_capacity(w * h * 4 + 32);
    out.extend_from_slice(format!("Pf\n{w} {h}\n-1.0\n").as_bytes());
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(depth.at(x, y) as f32).to_le_bytes());
        }
    }
    let mut f = create(path)?;
    f.write_all(&out)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

/// Loads depth from PFM, or from 16-bit PNG when an encoding range is given.
pub fn read_depth(path: &Path, png_encoding: Option<&DepthEncoding>) -> Result<DepthMap> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "pfm" => read_pfm(path),
        "png" => {
            let enc = png_encoding.ok_or_else(|| {
                Error::format(path, "16-bit depth PNG needs a declared depth range")
            })?;
            read_depth_png16(path, enc)
        }
        other => Err(Error::format(
            path,
            format!("unknown depth format `.{other}`"),
        )),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SparseJson {
    List(Vec<DepthSample>),
    Wrapped { samples: Vec<DepthSample> },
}

/// Reads sparse depth samples from `.csv` (`x,y,depth` per line, optional
/// header) or `.json` (a list of `{x, y, depth}` or `{"samples": [...]}`).
pub fn read_sparse_depth(path: &Path, width: usize, height: usize) -> Result<SparseDepth> {
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let samples = if is_json {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))? {
            SparseJson::List(s) | SparseJson::Wrapped { samples: s } => s,
        }
    } else {
        parse_sparse_csv(open(path)?, path)?
    };
    SparseDepth::new(width, height, samples).map_err(|e| Error::format(path, e.to_string()))
}

fn parse_sparse_csv<R: Read>(reader: R, path: &Path) -> Result<Vec<DepthSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut samples = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if record.len() != 3 {
            return Err(Error::format(
                path,
                format!("line {}: expected x,y,depth", line + 1),
            ));
        }
        let parsed = (
            record[0].parse::<usize>(),
            record[1].parse::<usize>(),
            record[2].parse::<f64>(),
        );
        match parsed {
            (Ok(x), Ok(y), Ok(depth)) => samples.push(DepthSample { x, y, depth }),
            _ if line == 0 => continue,
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {}: unparsable sample", line + 1),
                ))
            }
        }
    }
    Ok(samples)
}

pub fn write_sparse_csv(path: &Path, sparse: &SparseDepth) -> Result<()> {
    let mut f = create(path)?;
    let mut text = String::from("x,y,depth\n");
    for s in sparse.samples() {
        text.push_str(&format!("{},{},{}\n", s.x, s.y, s.depth));
    }
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}
