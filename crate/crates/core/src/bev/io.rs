//! Tile files: an 8-bit RGB PNG for the channels, a 1-bit grayscale PNG for
//! occupancy (`<stem>.occ.png`) and a JSON georeferencing sidecar
//! (`<stem>.json`).

use std::io::{BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};

use super::{BevError, BevTile, Result, TileFrame};

/// JSON sidecar record: `{center:[x,y], heading, resolution, size,
/// ground_ref_z, z_span, intensity_max}`.
pub type TileSidecar = TileFrame;

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

pub fn occupancy_path(png: &Path) -> PathBuf {
    png.with_extension("occ.png")
}

fn malformed(path: &Path, reason: impl std::fmt::Display) -> BevError {
    BevError::MalformedTileFile { path: path.display().to_string(), reason: reason.to_string() }
}

fn encode_png(size: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> std::result::Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, size, size);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(out)
}

/// Encodes the channel raster as an RGB PNG (also what the review API serves).
pub fn encode_channels_png(tile: &BevTile) -> Vec<u8> {
    encode_png(tile.size(), png::ColorType::Rgb, png::BitDepth::Eight, &tile.channels)
        .expect("in-memory PNG encoding cannot fail for a well-sized buffer")
}

fn pack_bits(occupancy: &[bool], size: u32) -> Vec<u8> {
    let stride = (size as usize).div_ceil(8);
    let mut out = vec![0u8; stride * size as usize];
    for (i, &occ) in occupancy.iter().enumerate() {
        if occ {
            let (row, col) = (i / size as usize, i % size as usize);
            out[row * stride + col / 8] |= 0x80 >> (col % 8);
        }
    }
    out
}

pub fn write_tile(tile: &BevTile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    tile.frame.validate()?;
    let rgb = encode_channels_png(tile);
    let occ = encode_png(tile.size(), png::ColorType::Grayscale, png::BitDepth::One, &pack_bits(&tile.occupancy, tile.size()))
        .map_err(|e| malformed(path, e))?;
    std::fs::write(path, rgb)?;
    std::fs::write(occupancy_path(path), occ)?;
    let mut side = BufWriter::new(std::fs::File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut side, &tile.frame).map_err(|e| malformed(path, e))?;
    side.flush()?;
    Ok(())
}

struct Decoded {
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    line_size: usize,
    data: Vec<u8>,
}

fn decode_png(path: &Path) -> Result<Decoded> {
    let bytes = std::fs::read(path)?;
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(|e| malformed(path, e))?;
    let len = reader.output_buffer_size().ok_or_else(|| malformed(path, "image too large"))?;
    let mut data = vec![0u8; len];
    let info = reader.next_frame(&mut data).map_err(|e| malformed(path, e))?;
    data.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width,
        height: info.height,
        color: info.color_type,
        depth: info.bit_depth,
        line_size: info.line_size,
        data,
    })
}

pub fn read_tile(path: impl AsRef<Path>) -> Result<BevTile> {
    let path = path.as_ref();
    let side = std::fs::read(sidecar_path(path))?;
    let frame: TileFrame = serde_json::from_slice(&side).map_err(|e| malformed(&sidecar_path(path), e))?;
    frame.validate().map_err(|e| malformed(&sidecar_path(path), e))?;
    let size = frame.size;

    let rgb = decode_png(path)?;
    if rgb.width != size || rgb.height != size || rgb.color != png::ColorType::Rgb || rgb.depth != png::BitDepth::Eight {
        return Err(malformed(path, "channel image does not match sidecar (expect RGB8 of frame size)"));
    }
    let occ_path = occupancy_path(path);
    let occ = decode_png(&occ_path)?;
    if occ.width != size || occ.height != size || occ.color != png::ColorType::Grayscale || occ.depth != png::BitDepth::One {
        return Err(malformed(&occ_path, "occupancy image must be 1-bit grayscale of frame size"));
    }
    let mut occupancy = vec![false; frame.pixel_count()];
    for row in 0..size as usize {
        let line = &occ.data[row * occ.line_size..(row + 1) * occ.line_size];
        for col in 0..size as usize {
            occupancy[row * size as usize + col] = line[col / 8] & (0x80 >> (col % 8)) != 0;
        }
    }
    let tile = BevTile { frame, channels: rgb.data, occupancy };
    tile.check_invariants().map_err(|e| malformed(path, e))?;
    Ok(tile)
}
