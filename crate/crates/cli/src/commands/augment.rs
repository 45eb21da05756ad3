use std::path::Path;

use mvdet_core::augment::{fit_pca_basis, flip_scene, pca_jitter, sample_alphas, Frame};
use mvdet_core::kitti::parse_ground_plane;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::layout::{read_text, write_file, Layout, IMAGES, LABELS, PLANES};
use crate::FrameArgs;

/// Writes the mirrored frame under `out` with the same id. The ground
/// plane is mirrored too when the frame has one.
pub fn flip(frame: &FrameArgs, out: &Path) -> Result<()> {
    let src = Layout::new(&frame.frame_dir);
    let id = &frame.id;
    let input = Frame {
        cloud: src.read_cloud(id)?,
        image: src.read_image(id)?,
        calib: src.read_calib(id)?,
        labels: src.read_labels(LABELS, id)?,
    };
    let flipped = flip_scene(&input);
    let dst = Layout::new(out);
    dst.write_cloud(id, &flipped.cloud)?;
    dst.write_image(id, &flipped.image)?;
    dst.write_calib(id, &flipped.calib)?;
    dst.write_labels(LABELS, id, &flipped.labels)?;
    let plane_path = src.path(PLANES, id);
    if plane_path.exists() {
        let plane = parse_ground_plane(&read_text(&plane_path)?).map_err(|e| CliError::input(&plane_path, e))?;
        let text = mvdet_core::kitti::write_ground_plane(&plane.mirrored(0));
        write_file(&dst.path(PLANES, id), text.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PcaReport {
    /// In [0, 1] RGB units, descending.
    eigenvalues: [f64; 3],
    /// One eigenvector per row, matching `eigenvalues`.
    eigenvectors: [[f64; 3]; 3],
    sigma: f64,
    alphas: Vec<(String, [f64; 3])>,
}

/// Fits one PCA basis over every image, then jitters each with its own
/// coefficients, drawn in id order from the run seed.
pub fn jitter(frame_dir: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let src = Layout::new(frame_dir);
    let ids = src.ids(IMAGES)?;
    let images: Vec<_> = ids.par_iter().map(|id| src.read_image(id)).collect::<Result<_>>()?;
    let basis = fit_pca_basis(&images)
        .ok_or_else(|| CliError::input(&frame_dir.join(IMAGES), "no pixels to fit a colour basis"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let alphas: Vec<[f64; 3]> = ids.iter().map(|_| sample_alphas(&mut rng, cfg.jitter.sigma)).collect();
    let dst = Layout::new(out);
    ids.par_iter()
        .zip(&images)
        .zip(&alphas)
        .try_for_each(|((id, image), a)| dst.write_image(id, &pca_jitter(image, &basis, *a)))?;
    let report = PcaReport {
        eigenvalues: basis.eigenvalues,
        eigenvectors: std::array::from_fn(|i| std::array::from_fn(|r| basis.eigenvectors[(r, i)])),
        sigma: cfg.jitter.sigma,
        alphas: ids.into_iter().zip(alphas).collect(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&out.join("pca.json"), json.as_bytes())
}
