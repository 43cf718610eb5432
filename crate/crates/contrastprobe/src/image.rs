//! Decoding binary PPM (P6, maxval 255) and 8-bit PNG into `[0, 1]` tensors.

use std::io::Cursor;
use std::path::Path;

use contrastprobe_core::Tensor;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DecodeError(pub String);

fn err(msg: impl Into<String>) -> DecodeError {
    DecodeError(msg.into())
}

/// Decodes by content sniffing, not file extension.
pub fn decode_bytes(bytes: &[u8]) -> Result<Tensor, DecodeError> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        Err(err("unrecognized image format (expected binary PPM or PNG)"))
    }
}

pub fn decode_image(path: impl AsRef<Path>) -> Result<Tensor, DecodeError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    decode_bytes(&bytes)
}

fn rgb_tensor(height: usize, width: usize, rgb: &[u8]) -> Result<Tensor, DecodeError> {
    Tensor::new(height, width, 3, rgb.iter().map(|&b| f32::from(b) / 255.0).collect()).map_err(|e| err(e.to_string()))
}

/// Reads one header token, skipping whitespace and `#` comments.
fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], DecodeError> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n' && b != b'\r') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(err("truncated PPM header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn ppm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize, DecodeError> {
    let tok = ppm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| err(format!("bad PPM {what} `{}`", String::from_utf8_lossy(tok))))
}

fn decode_ppm(bytes: &[u8]) -> Result<Tensor, DecodeError> {
    let mut pos = 0;
    if ppm_token(bytes, &mut pos)? != b"P6" {
        return Err(err("not a binary PPM"));
    }
    let width = ppm_number(bytes, &mut pos, "width")?;
    let height = ppm_number(bytes, &mut pos, "height")?;
    let maxval = ppm_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(err(format!("PPM maxval {maxval} unsupported (need 255)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err("truncated PPM header"));
    }
    pos += 1;
    let n = width * height * 3;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| err(format!("PPM raster needs {n} bytes, file has {}", bytes.len().saturating_sub(pos))))?;
    rgb_tensor(height, width, raster)
}

fn decode_png(bytes: &[u8]) -> Result<Tensor, DecodeError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| err(format!("png: {e}")))?;
    let size = reader.output_buffer_size().ok_or_else(|| err("png: image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| err(format!("png: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(err(format!("png: {:?}-bit images unsupported", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let buf = &buf[..info.buffer_size()];
    match info.color_type {
        png::ColorType::Rgb => rgb_tensor(h, w, buf),
        png::ColorType::Grayscale => {
            let rgb: Vec<u8> = buf.iter().flat_map(|&g| [g, g, g]).collect();
            rgb_tensor(h, w, &rgb)
        }
        other => Err(err(format!("png: color type {other:?} unsupported"))),
    }
}

fn to_bytes(image: &Tensor) -> Vec<u8> {
    image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

/// Encodes a 3-channel `[0, 1]` tensor as binary PPM.
pub fn encode_ppm(image: &Tensor) -> Vec<u8> {
    assert_eq!(image.channels(), 3, "PPM needs 3 channels");
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(to_bytes(image));
    out
}

/// Encodes a 3-channel `[0, 1]` tensor as 8-bit RGB PNG.
pub fn encode_png(image: &Tensor) -> Vec<u8> {
    assert_eq!(image.channels(), 3, "PNG encoder needs 3 channels");
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().expect("in-memory png header");
    writer.write_image_data(&to_bytes(image)).expect("in-memory png data");
    writer.finish().expect("in-memory png finish");
    out
}
