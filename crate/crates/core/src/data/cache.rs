//! Preprocessed dataset cache: `manifest.json` plus one little-endian `f32`
//! blob per sample.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GraspSample, ImageMeta, MultiModalImage};
use crate::error::{Error, Result};
use crate::geometry::GraspRect;

pub const CACHE_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    id: String,
    file: String,
    height: usize,
    width: usize,
    meta: ImageMeta,
    positives: Vec<GraspRect>,
    negatives: Vec<GraspRect>,
    is_background: bool,
}

#[derive(Serialize, Deserialize)]
struct CacheManifest {
    format_version: u32,
    samples: Vec<CacheEntry>,
}

pub fn write_cache(dir: &Path, samples: &[GraspSample]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let file = format!("sample_{i:05}.bin");
        let bytes: Vec<u8> = s.image.channels.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(CacheEntry {
            id: s.id.clone(),
            file,
            height: s.image.height,
            width: s.image.width,
            meta: s.image.meta.clone(),
            positives: s.positives.clone(),
            negatives: s.negatives.clone(),
            is_background: s.is_background,
        });
    }
    let manifest = CacheManifest {
        format_version: CACHE_FORMAT_VERSION,
        samples: entries,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn read_cache(dir: &Path) -> Result<Vec<GraspSample>> {
    let path = dir.join(MANIFEST);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CacheManifest = serde_json::from_slice(&text)?;
    if manifest.format_version != CACHE_FORMAT_VERSION {
        return Err(Error::Mismatch(format!(
            "cache format {} (expected {CACHE_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    manifest
        .samples
        .into_iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            if bytes.len() % 4 != 0 {
                return Err(Error::Input(format!("{}: truncated blob", path.display())));
            }
            let channels = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(GraspSample {
                id: e.id,
                image: MultiModalImage::new(e.height, e.width, channels, e.meta)?,
                positives: e.positives,
                negatives: e.negatives,
                is_background: e.is_background,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_background_patches;

    #[test]
    fn bit_exact_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut samples = make_background_patches(2, 3);
        samples[1].negatives.push(GraspRect::new(10.1, 20.7, 33.3, 5.0, 7.0).unwrap());
        write_cache(dir.path(), &samples).unwrap();
        assert_eq!(read_cache(dir.path()).unwrap(), samples);
    }
}
