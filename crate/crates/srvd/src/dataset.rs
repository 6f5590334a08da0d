//! `root/images/*.png` with `root/labels/<stem>.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use srvd_core::imaging::{extract_patches, format_labels, parse_labels};
use srvd_core::{Error as CoreError, LabeledScene, PairedSample};

use crate::error::{Error, IoContext, Result};
use crate::pngio::{load_png, save_png};

pub fn images_dir(root: &Path) -> PathBuf {
    root.join("images")
}

pub fn labels_dir(root: &Path) -> PathBuf {
    root.join("labels")
}

/// PNG files under `images/`, sorted by file name.
fn image_files(root: &Path) -> Result<Vec<PathBuf>> {
    let dir = images_dir(root);
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(&dir).at(&dir)? {
        let p = entry.at(&dir)?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every labelled image in name order. A missing label file means an
/// empty scene and is logged.
pub fn load_dataset(root: &Path) -> Result<Vec<LabeledScene>> {
    let mut out = Vec::new();
    for img_path in image_files(root)? {
        let stem = img_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let label_path = labels_dir(root).join(format!("{stem}.txt"));
        let boxes = if label_path.is_file() {
            let text = fs::read_to_string(&label_path).at(&label_path)?;
            parse_labels(&text).map_err(|e| match e {
                CoreError::Parse { line, message } => Error::Label {
                    path: label_path.clone(),
                    line,
                    message,
                },
                other => other.into(),
            })?
        } else {
            log::warn!(
                "no label file for {}; treating it as empty",
                img_path.display()
            );
            Vec::new()
        };
        let image = load_png(&img_path)?;
        out.push(LabeledScene::new(image, boxes, stem)?);
    }
    Ok(out)
}

/// Writes scenes in the dataset layout, named by `source_id`.
pub fn write_dataset(root: &Path, scenes: &[LabeledScene]) -> Result<()> {
    let (img_dir, lbl_dir) = (images_dir(root), labels_dir(root));
    fs::create_dir_all(&img_dir).at(&img_dir)?;
    fs::create_dir_all(&lbl_dir).at(&lbl_dir)?;
    for s in scenes {
        save_png(&img_dir.join(format!("{}.png", s.source_id)), &s.image)?;
        let p = lbl_dir.join(format!("{}.txt", s.source_id));
        fs::write(&p, format_labels(&s.boxes)).at(&p)?;
    }
    Ok(())
}

/// Content hash of the dataset in the style of a git tree: every file is
/// hashed as a blob, then the sorted `path hash` listing is hashed.
pub fn dataset_hash(root: &Path) -> Result<String> {
    let mut entries = Vec::new();
    for sub in ["images", "labels"] {
        let dir = root.join(sub);
        if !dir.is_dir() {
            continue;
        }
        for entry in fs::read_dir(&dir).at(&dir)? {
            let p = entry.at(&dir)?.path();
            if p.is_file() {
                let bytes = fs::read(&p).at(&p)?;
                let mut h = Sha256::new();
                h.update(format!("blob {}\0", bytes.len()));
                h.update(&bytes);
                let name = format!(
                    "{sub}/{}",
                    p.file_name().unwrap_or_default().to_string_lossy()
                );
                entries.push((name, hex::encode(h.finalize())));
            }
        }
    }
    entries.sort();
    let mut tree = Sha256::new();
    for (name, hash) in &entries {
        tree.update(format!("{name} {hash}\n"));
    }
    Ok(hex::encode(tree.finalize()))
}

/// Cuts scenes larger than `hr` into `hr`-sized tiles; scenes already that
/// size pass through. Smaller scenes are an error.
pub fn tile_scenes(scenes: &[LabeledScene], hr: usize) -> Result<Vec<LabeledScene>> {
    let mut out = Vec::new();
    for s in scenes {
        let (h, w) = (s.image.height(), s.image.width());
        if h == hr && w == hr {
            out.push(s.clone());
        } else {
            if h < hr || w < hr {
                return Err(Error::Config(format!(
                    "{} is {h}x{w}, smaller than the {hr}x{hr} network input",
                    s.source_id
                )));
            }
            out.extend(extract_patches(s, hr, hr)?);
        }
    }
    Ok(out)
}

pub fn pairs(scenes: &[LabeledScene]) -> Result<Vec<PairedSample>> {
    Ok(scenes
        .iter()
        .map(PairedSample::from_scene)
        .collect::<Result<Vec<_>, _>>()?)
}
