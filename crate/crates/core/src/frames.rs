//! Directories of numbered frame images.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};

/// Frame files of a directory, ordered by the numeric value of their file stem.
#[derive(Debug, Clone)]
pub struct FrameSource {
    dir: PathBuf,
    paths: Vec<PathBuf>,
}

impl FrameSource {
    /// Lists every file with a purely numeric stem. Other files are ignored.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut numbered = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if !path.is_file() {
                continue;
            }
            let number = path
                .file_stem()
                .and_then(|s| s.to_str())
                .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|s| s.parse::<u64>().ok());
            if let Some(n) = number {
                numbered.push((n, path));
            }
        }
        numbered.sort();
        if numbered.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Input(format!(
                "{}: two frames share the same number",
                dir.display()
            )));
        }
        Ok(Self {
            dir,
            paths: numbered.into_iter().map(|(_, p)| p).collect(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn path(&self, index: usize) -> Option<&Path> {
        self.paths.get(index).map(PathBuf::as_path)
    }

    pub fn load(&self, index: usize) -> Result<RgbImage> {
        let path = self
            .paths
            .get(index)
            .ok_or_else(|| Error::Input(format!("{}: no frame {index}", self.dir.display())))?;
        load_frame(path)
    }

    /// Width and height of the first frame.
    pub fn dimensions(&self) -> Result<(u32, u32)> {
        Ok(self.load(0)?.dimensions())
    }
}

pub fn load_frame(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

pub fn save_frame(dir: &Path, index: usize, frame: &RgbImage) -> Result<PathBuf> {
    let path = dir.join(frame_file_name(index));
    frame.save(&path).map_err(|source| Error::Image {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn save_frames(dir: &Path, frames: &[RgbImage]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        save_frame(dir, i, f)?;
    }
    Ok(())
}
