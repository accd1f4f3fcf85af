//! Rating profiles as 25x20 grayscale rasters: one constant 5x5 block per
//! expression statement, row-major ES order (ES1..ES5 across the top).
//!
//! PGM is the canonical on-disk form. Channel replication to the network's
//! three input channels happens at load time only.

use crate::dataset::Cohort;
use crate::grouping::Grouping;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const WIDTH: usize = 25;
pub const HEIGHT: usize = 20;
pub const PIXELS: usize = WIDTH * HEIGHT;
const BLOCK: usize = 5;
const PGM_HEADER: &[u8] = b"P5\n25 20\n255\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingImage {
    /// Row-major, 500 bytes.
    pub pixels: [u8; PIXELS],
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncoderError {
    #[error("bad PGM: {0}")]
    BadPgm(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for EncoderError {
    fn from(e: std::io::Error) -> Self {
        EncoderError::Io(e.to_string())
    }
}

/// Brightness is proportional to the rating: round(rating * 255), half away
/// from zero.
pub fn encode_profile(ratings: &[f64; 20]) -> RatingImage {
    let mut pixels = [0u8; PIXELS];
    for (k, &r) in ratings.iter().enumerate() {
        debug_assert!((0.0..=1.0).contains(&r));
        let byte = (r * 255.0).round() as u8;
        let (row0, col0) = (k / BLOCK * BLOCK, k % BLOCK * BLOCK);
        for dy in 0..BLOCK {
            let base = (row0 + dy) * WIDTH + col0;
            pixels[base..base + BLOCK].fill(byte);
        }
    }
    RatingImage { pixels }
}

/// Inverse of encode_profile on the 11-point grid: each block's byte maps
/// back to the nearest 0.1 grid point.
pub fn decode_profile(img: &RatingImage) -> [f64; 20] {
    let mut ratings = [0.0; 20];
    for (k, r) in ratings.iter_mut().enumerate() {
        let byte = img.pixels[(k / BLOCK * BLOCK) * WIDTH + k % BLOCK * BLOCK];
        *r = (f64::from(byte) / 255.0 * 10.0).round() / 10.0;
    }
    ratings
}

pub fn write_pgm(img: &RatingImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(PGM_HEADER.len() + PIXELS);
    out.extend_from_slice(PGM_HEADER);
    out.extend_from_slice(&img.pixels);
    out
}

/// Strict reader for the canonical format only.
pub fn read_pgm(bytes: &[u8]) -> Result<RatingImage, EncoderError> {
    let payload = bytes
        .strip_prefix(PGM_HEADER)
        .ok_or_else(|| EncoderError::BadPgm("wrong header, want P5 25x20 maxval 255".into()))?;
    let pixels: [u8; PIXELS] = payload
        .try_into()
        .map_err(|_| EncoderError::BadPgm(format!("payload is {} bytes, want {PIXELS}", payload.len())))?;
    Ok(RatingImage { pixels })
}

/// The network-input view of one image: grayscale replicated into three
/// channels, scaled to [0,1]. Shape (HEIGHT, WIDTH, 3), row-major. This is
/// exactly the canonical network's rescale stage applied to raw bytes, so
/// feed either this to the post-rescale stack or raw channels to the full
/// network, never both.
pub fn to_network_input(img: &RatingImage) -> Vec<f64> {
    let mut out = Vec::with_capacity(PIXELS * 3);
    for &b in &img.pixels {
        let v = f64::from(b) / 255.0;
        out.extend_from_slice(&[v, v, v]);
    }
    out
}

/// Raw-byte variant of to_network_input (values 0..=255), for feeding a
/// network whose first stage is the rescale layer.
pub fn to_raw_channels(img: &RatingImage) -> Vec<f64> {
    let mut out = Vec::with_capacity(PIXELS * 3);
    for &b in &img.pixels {
        let v = f64::from(b);
        out.extend_from_slice(&[v, v, v]);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    pub images: Vec<(RatingImage, usize)>,
    pub arity: usize,
}

impl LabeledImageSet {
    pub fn from_grouping(cohort: &Cohort, grouping: &Grouping) -> LabeledImageSet {
        assert_eq!(grouping.labels.len(), cohort.len(), "grouping/cohort mismatch");
        let images = cohort
            .respondents
            .iter()
            .zip(&grouping.labels)
            .map(|(r, &label)| (encode_profile(&r.ratings), label))
            .collect();
        LabeledImageSet { images, arity: grouping.arity }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Label-by-directory export: <dir>/<label>/<respondent-id>.pgm.
pub fn export_images(
    cohort: &Cohort,
    grouping: &Grouping,
    dir: &Path,
) -> Result<(), EncoderError> {
    assert_eq!(grouping.labels.len(), cohort.len(), "grouping/cohort mismatch");
    for g in 0..grouping.arity {
        fs::create_dir_all(dir.join(g.to_string()))?;
    }
    for (r, &label) in cohort.respondents.iter().zip(&grouping.labels) {
        let img = encode_profile(&r.ratings);
        let path = dir.join(label.to_string()).join(format!("{}.pgm", r.id));
        let mut f = fs::File::create(path)?;
        f.write_all(&write_pgm(&img))?;
    }
    Ok(())
}

/// Read a label-by-directory tree back. Labels are the numeric directory
/// names; files inside each label are read in sorted name order.
pub fn import_images(dir: &Path) -> Result<LabeledImageSet, EncoderError> {
    let mut labels: Vec<usize> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            if let Some(label) = entry.file_name().to_str().and_then(|s| s.parse().ok()) {
                labels.push(label);
            }
        }
    }
    labels.sort_unstable();
    if labels.is_empty() {
        return Err(EncoderError::BadPgm(format!(
            "no numeric label directories under {}",
            dir.display()
        )));
    }
    let arity = labels.last().unwrap() + 1;
    if labels != (0..arity).collect::<Vec<_>>() {
        return Err(EncoderError::BadPgm(format!(
            "label directories must be 0..k, found {labels:?}"
        )));
    }

    let mut images = Vec::new();
    for &label in &labels {
        let mut files: Vec<_> = fs::read_dir(dir.join(label.to_string()))?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
            .collect();
        files.sort();
        for path in files {
            let bytes = fs::read(&path)?;
            let img = read_pgm(&bytes)
                .map_err(|e| EncoderError::BadPgm(format!("{}: {e}", path.display())))?;
            images.push((img, label));
        }
    }
    Ok(LabeledImageSet { images, arity })
}
