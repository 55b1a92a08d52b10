//! Reading and writing rasters. PNG for lossless storage; JPEG inputs are
//! accepted when reading clean corpora.

use std::fs;
use std::path::Path;

use image::RgbImage;

use crate::degrade::{decode_jpeg, DegradeError};

pub fn is_image_path(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, DegradeError> {
    let bytes = fs::read(path).map_err(|e| DegradeError::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("jpg" | "jpeg") => decode_jpeg(&bytes),
        _ => image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map(|img| img.to_rgb8())
            .map_err(|e| DegradeError::Codec(format!("{}: {e}", path.display()))),
    }
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, DegradeError> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| DegradeError::Codec(e.to_string()))?;
    Ok(buf.into_inner())
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), DegradeError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| DegradeError::io(parent, e))?;
    }
    let bytes = encode_png(img)?;
    fs::write(path, bytes).map_err(|e| DegradeError::io(path, e))
}
