use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Image;

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// PNG files directly inside `dir`, sorted lexicographically.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_png(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Decodes every PNG in `dir` to a `[0,1]` RGB raster.
pub fn load_dataset(dir: &Path) -> Result<Vec<Image>> {
    let paths = list_pngs(dir)?;
    if paths.is_empty() {
        return Err(Error::Config(format!("no PNG images in {}", dir.display())));
    }
    paths.iter().map(|p| Image::load(p)).collect()
}

/// Writes images as `{prefix}{index:03}.png`.
pub fn save_dataset(dir: &Path, prefix: &str, images: &[Image]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let path = dir.join(format!("{prefix}{i:03}.png"));
            img.save_png(&path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_in_lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        Image::filled(4, 4, 3, 1.0).save_png(&dir.path().join("b.png")).unwrap();
        Image::filled(64, 64, 3, 0.0).save_png(&dir.path().join("a.png")).unwrap();
        fs::write(dir.path().join("notes.txt"), "skip me").unwrap();
        let imgs = load_dataset(dir.path()).unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0].dims(), (64, 64, 3));
        assert!(imgs[1].data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_directory_is_a_configuration_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn corrupt_file_names_its_path() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("broken.png");
        fs::write(&bad, b"\x89PNG\r\n\x1a\nnot really").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("broken.png"), "{err}");
    }
}
