//! 8-bit RGB PNG and binary PPM (P6) reading and writing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use epgd_core::Image;

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    Format(String),
    #[error("cannot tell the image format of {0} (expected .png, .ppm or .pnm)")]
    UnknownExtension(String),
    #[error(transparent)]
    Image(#[from] epgd_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Png,
    Ppm,
}

fn kind_of(path: &Path) -> Result<Kind, ImageIoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(Kind::Png),
        Some("ppm") | Some("pnm") => Ok(Kind::Ppm),
        _ => Err(ImageIoError::UnknownExtension(path.display().to_string())),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ImageIoError + '_ {
    move |source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a PNG or P6 file, chosen by extension.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageIoError> {
    let path = path.as_ref();
    match kind_of(path)? {
        Kind::Png => {
            let file = File::open(path).map_err(io_err(path))?;
            decode_png(BufReader::new(file))
        }
        Kind::Ppm => {
            let bytes = std::fs::read(path).map_err(io_err(path))?;
            decode_ppm(&bytes)
        }
    }
}

/// Writes PNG or P6 by extension. Samples are clamped to `[0, 255]` and
/// rounded half up.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageIoError> {
    let path = path.as_ref();
    let kind = kind_of(path)?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match kind {
        Kind::Png => encode_png(img, &mut out)?,
        Kind::Ppm => out.write_all(&encode_ppm(img)).map_err(io_err(path))?,
    }
    out.flush().map_err(io_err(path))
}

pub fn decode_png(reader: impl std::io::BufRead + std::io::Seek) -> Result<Image, ImageIoError> {
    let decoder = png::Decoder::new(reader);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageIoError::Format(format!("PNG: {e}")))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageIoError::Format(format!(
            "PNG bit depth {} (only 8-bit is supported)",
            info.bit_depth as u8
        )));
    }
    if info.color_type != png::ColorType::Rgb {
        return Err(ImageIoError::Format(format!(
            "PNG color type {:?} with {} channel(s) (only 3-channel RGB is supported)",
            info.color_type,
            info.color_type.samples()
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(width * height * 3)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageIoError::Format(format!("PNG: {e}")))?;
    buf.truncate(frame.buffer_size());
    Ok(Image::from_rgb8(height, width, &buf)?)
}

pub fn encode_png(img: &Image, out: &mut impl Write) -> Result<(), ImageIoError> {
    let format_err = |e: png::EncodingError| ImageIoError::Format(format!("PNG: {e}"));
    let mut encoder = png::Encoder::new(out, img.width() as u32, img.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(format_err)?;
    writer
        .write_image_data(&img.to_rgb8())
        .map_err(format_err)?;
    writer.finish().map_err(format_err)
}

/// Parses a binary PPM with maxval 255. Header comments are allowed.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image, ImageIoError> {
    let mut pos = 0;
    let magic = ppm_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(ImageIoError::Format(format!(
            "PPM magic {:?} (only binary P6 is supported)",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = ppm_number(bytes, &mut pos, "width")?;
    let height = ppm_number(bytes, &mut pos, "height")?;
    let maxval = ppm_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(ImageIoError::Format(format!(
            "PPM maxval {maxval} (only 8-bit, maxval 255, is supported)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height * 3;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < need {
        return Err(ImageIoError::Format(format!(
            "PPM raster truncated: {} of {need} bytes",
            raster.len()
        )));
    }
    Ok(Image::from_rgb8(height, width, &raster[..need])?)
}

fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], ImageIoError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageIoError::Format("PPM header truncated".into()));
    }
    Ok(&bytes[start..*pos])
}

fn ppm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize, ImageIoError> {
    let tok = ppm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            ImageIoError::Format(format!(
                "PPM {what} {:?} is not a number",
                String::from_utf8_lossy(tok)
            ))
        })
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_rgb8());
    out
}
