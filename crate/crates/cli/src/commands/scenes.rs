use std::path::Path;

use mvdet_core::kitti::{write_detections, Detection};
use mvdet_core::synth::{generate_proposals, generate_scene, ProposalConfig, ProposalMode, SceneSpec};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::layout::{write_file, Layout, CALIB, LABELS, PLANES, PROPOSALS, VELODYNE};
use crate::ProposalKind;

fn mode(kind: ProposalKind) -> ProposalMode {
    match kind {
        ProposalKind::Perturb => ProposalMode::Perturb,
        ProposalKind::DepthAligned => ProposalMode::DepthAligned,
        ProposalKind::Random => ProposalMode::Random,
    }
}

/// Scene `i` uses seed `seed + i`; ids are `i` zero-padded to six digits.
pub fn run(count: usize, proposals: Option<ProposalKind>, out: &Path, cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(out);
    (0..count).into_par_iter().try_for_each(|i| {
        let id = format!("{i:06}");
        let spec = SceneSpec { seed: cfg.seed.wrapping_add(i as u64), ..cfg.scene.clone() };
        let scene = generate_scene(&spec).map_err(|e| CliError::Usage(format!("scene {id}: {e}")))?;
        let k = scene.to_kitti();
        write_file(&layout.path(VELODYNE, &id), &k.velodyne)?;
        layout.write_text(CALIB, &id, &k.calib)?;
        layout.write_text(LABELS, &id, &k.label)?;
        layout.write_text(PLANES, &id, &k.plane)?;
        layout.write_image(&id, &scene.image)?;
        if let Some(kind) = proposals {
            let pc = ProposalConfig { seed: cfg.seed, ..cfg.proposals };
            let dets: Vec<Detection> = generate_proposals(&scene, mode(kind), &pc)
                .iter()
                .map(|g| Detection { class_name: g.proposal.class.name().into(), box3d: g.proposal.box3d, score: g.proposal.score })
                .collect();
            layout.write_text(PROPOSALS, &id, &write_detections(&dets, &scene.calib, scene.image_size()))?;
        }
        log::debug!("scene {id}: {} objects", scene.objects.len());
        Ok(())
    })
}
