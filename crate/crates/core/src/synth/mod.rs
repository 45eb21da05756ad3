//! Deterministic synthetic driving scenes.
//!
//! A scene is a flat ground plane with boxes standing on it: target objects
//! (cars, pedestrians, cyclists) and unlabeled clutter. The camera sits at
//! the LIDAR origin looking down +x. Both sensors are simulated by ray
//! casting, so every LIDAR point lies on a surface and the rendered depth
//! map is exact wherever a surface is visible.

mod oracle;
mod proposals;
mod raycast;
mod render;

pub use oracle::{depth_component, homogeneous_cells, silhouette_mask_oracle};
pub use proposals::{
    depth_aligned_proposal, split_view_fixture, generate_proposals, perturb_box, SplitViewFixture, GeneratedProposal, ProposalConfig,
    ProposalMode,
};
pub use raycast::{distance_to_box_surface, ray_box, ray_plane};
pub use render::{render_camera, simulate_lidar, LidarHit, OBJECT_GROUND, OBJECT_SKY};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{project_box_to_image, BoxDims, ConvexPolygon2D, OrientedBox3D};
use crate::kitti::{
    box_to_label, write_calibration, write_ground_plane, write_labels, write_point_cloud, CalibrationSet, GroundPlane,
    GroundTruthLabel, RawPointCloud,
};
use crate::labeling::{GtObject, ImageView, ObjectClass};
use crate::raster::RgbRaster;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("could not place object {index} without overlap after {attempts} attempts")]
    PlacementFailure { index: usize, attempts: usize },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
}

const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimRange {
    pub l: (f64, f64),
    pub w: (f64, f64),
    pub h: (f64, f64),
}

impl DimRange {
    fn sample(&self, rng: &mut ChaCha8Rng) -> BoxDims {
        let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
        BoxDims::new(draw(rng, self.l), draw(rng, self.w), draw(rng, self.h))
    }

    fn is_valid(&self) -> bool {
        [self.l, self.w, self.h].iter().all(|&(lo, hi)| lo > 0.0 && hi >= lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarSpec {
    pub rings: usize,
    /// Elevation of the top and bottom ring, degrees.
    pub elevation_deg: (f64, f64),
    pub azimuth_steps: usize,
    /// Horizontal field of view centred on +x, degrees.
    pub azimuth_fov_deg: f64,
    pub max_range: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self { rings: 32, elevation_deg: (2.0, -24.8), azimuth_steps: 720, azimuth_fov_deg: 360.0, max_range: 120.0 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub seed: u64,
    /// Number of labeled objects.
    pub objects: usize,
    /// Relative frequency of car, pedestrian and cyclist.
    pub class_mix: [f64; 3],
    pub car_dims: DimRange,
    pub pedestrian_dims: DimRange,
    pub cyclist_dims: DimRange,
    /// Number of unlabeled clutter boxes.
    pub clutter: usize,
    pub clutter_dims: DimRange,
    /// Fraction of clutter placed just behind or beside a labeled object.
    pub clutter_near_objects: f64,
    /// Longitudinal placement range of object centres, metres.
    pub x_range: (f64, f64),
    /// Minimum free gap between footprints, metres.
    pub min_gap: f64,
    pub lidar: LidarSpec,
    pub image_size: (usize, usize),
    pub focal: f64,
    /// Principal point; the image centre when absent.
    pub principal_point: Option<(f64, f64)>,
    /// Height of the sensors above the ground.
    pub sensor_height: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            objects: 4,
            class_mix: [1.0, 1.0, 1.0],
            car_dims: DimRange { l: (3.5, 4.6), w: (1.5, 1.9), h: (1.4, 1.7) },
            pedestrian_dims: DimRange { l: (0.5, 0.9), w: (0.45, 0.75), h: (1.55, 1.9) },
            cyclist_dims: DimRange { l: (1.5, 1.9), w: (0.5, 0.75), h: (1.55, 1.85) },
            clutter: 4,
            clutter_dims: DimRange { l: (0.4, 3.0), w: (0.4, 2.0), h: (0.5, 2.4) },
            clutter_near_objects: 0.5,
            x_range: (8.0, 40.0),
            min_gap: 0.3,
            lidar: LidarSpec::default(),
            image_size: (624, 188),
            focal: 360.0,
            principal_point: None,
            sensor_height: 1.73,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.class_mix.iter().any(|&w| !(w >= 0.0)) || (self.objects > 0 && self.class_mix.iter().sum::<f64>() <= 0.0) {
            return bad("class_mix weights must be non-negative with a positive sum");
        }
        if ![self.car_dims, self.pedestrian_dims, self.cyclist_dims, self.clutter_dims].iter().all(DimRange::is_valid) {
            return bad("dimension ranges must be positive with lo <= hi");
        }
        if !(self.x_range.0 > 0.0 && self.x_range.1 > self.x_range.0) {
            return bad("x_range must be positive and ordered");
        }
        if self.image_size.0 < 2 || self.image_size.1 < 2 || !(self.focal > 0.0) {
            return bad("image_size must be at least 2×2 and focal positive");
        }
        if self.lidar.rings == 0 || self.lidar.azimuth_steps == 0 || !(self.lidar.max_range > 0.0) {
            return bad("lidar needs rings, azimuth steps and a positive range");
        }
        if !(self.sensor_height > 0.0) || !(0.0..=1.0).contains(&self.clutter_near_objects) || !(self.min_gap >= 0.0) {
            return bad("sensor_height, clutter_near_objects or min_gap out of range");
        }
        Ok(())
    }

    pub fn dims_for(&self, class: ObjectClass) -> &DimRange {
        match class {
            ObjectClass::Car => &self.car_dims,
            ObjectClass::Pedestrian => &self.pedestrian_dims,
            ObjectClass::Cyclist => &self.cyclist_dims,
        }
    }

    pub fn calibration(&self) -> CalibrationSet {
        let (w, h) = self.image_size;
        let (cx, cy) = self.principal_point.unwrap_or(((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0));
        CalibrationSet::pinhole(self.focal, cx, cy, CalibrationSet::lidar_to_camera_axes(Vector3::zeros()))
    }

    /// Ground plane in the LIDAR frame.
    pub fn ground(&self) -> GroundPlane {
        GroundPlane { normal: Vector3::z(), offset: self.sensor_height }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub box3d: OrientedBox3D,
    /// `None` for clutter.
    pub class: Option<ObjectClass>,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub objects: Vec<SceneObject>,
    pub cloud: RawPointCloud,
    pub image: RgbRaster,
    pub calib: CalibrationSet,
    /// LIDAR frame.
    pub plane: GroundPlane,
    /// Camera depth of the visible surface per pixel, 0 for sky.
    pub dense_depth: Vec<f64>,
    /// Index into `objects` of the visible surface per pixel, or
    /// [`OBJECT_GROUND`] / [`OBJECT_SKY`].
    pub object_id: Vec<i32>,
}

/// A scene in the on-disk KITTI formats.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiFrame {
    pub velodyne: Vec<u8>,
    pub calib: String,
    pub label: String,
    /// Camera-frame plane.
    pub plane: String,
}

impl SyntheticScene {
    pub fn image_size(&self) -> (usize, usize) {
        self.spec.image_size
    }

    pub fn view(&self) -> ImageView<'_> {
        ImageView { calib: &self.calib, image_size: self.spec.image_size }
    }

    /// Labeled objects, in `objects` order.
    pub fn gt_objects(&self) -> Vec<GtObject> {
        self.objects.iter().filter_map(|o| o.class.map(|class| GtObject { box3d: o.box3d, class })).collect()
    }

    pub fn labels(&self) -> Vec<GroundTruthLabel> {
        let (w, h) = self.spec.image_size;
        self.gt_objects()
            .iter()
            .map(|g| {
                let mut label = box_to_label(&g.box3d, g.class.name(), &self.calib, (w, h), None);
                label.truncation = truncation(&g.box3d, &self.calib, (w, h));
                label
            })
            .collect()
    }

    pub fn to_kitti(&self) -> KittiFrame {
        KittiFrame {
            velodyne: write_point_cloud(&self.cloud),
            calib: write_calibration(&self.calib),
            label: write_labels(&self.labels()),
            plane: write_ground_plane(&self.calib.plane_lidar_to_rect(&self.plane)),
        }
    }
}

/// Fraction of the unclipped projected 2D box lying outside the image.
fn truncation(b: &OrientedBox3D, calib: &CalibrationSet, (w, h): (usize, usize)) -> f64 {
    let huge = (1usize << 30, 1usize << 30);
    let Ok(full) = project_box_to_image(b, calib, huge) else { return 1.0 };
    let Ok(clipped) = project_box_to_image(b, calib, (w, h)) else { return 1.0 };
    if full.bbox.area() <= 0.0 {
        return 1.0;
    }
    (1.0 - clipped.bbox.area() / full.bbox.area()).clamp(0.0, 1.0)
}

fn inflated(b: &OrientedBox3D, gap: f64) -> ConvexPolygon2D {
    let mut g = *b;
    g.dims.l += gap;
    g.dims.w += gap;
    g.footprint_polygon()
}

fn overlaps(b: &OrientedBox3D, placed: &[SceneObject], gap: f64) -> bool {
    let poly = inflated(b, gap);
    placed.iter().any(|o| poly.intersection(&o.box3d.footprint_polygon()).area() > 0.0)
}

fn class_color(class: Option<ObjectClass>, rng: &mut ChaCha8Rng) -> [u8; 3] {
    const CLUTTER: [[i32; 3]; 5] = [[150, 120, 190], [200, 190, 70], [120, 90, 60], [70, 180, 185], [230, 230, 230]];
    let (base, amount): ([i32; 3], i32) = match class {
        Some(ObjectClass::Car) => ([60, 90, 200], 25),
        Some(ObjectClass::Pedestrian) => ([215, 60, 40], 25),
        Some(ObjectClass::Cyclist) => ([60, 185, 70], 25),
        None => (CLUTTER[rng.random_range(0..CLUTTER.len())], 20),
    };
    base.map(|c: i32| (c + rng.random_range(-amount..=amount)).clamp(0, 255) as u8)
}

fn pick_class(mix: &[f64; 3], rng: &mut ChaCha8Rng) -> ObjectClass {
    let total: f64 = mix.iter().sum();
    let mut r = rng.random_range(0.0..total);
    for (c, w) in ObjectClass::ALL.into_iter().zip(mix) {
        if r < *w {
            return c;
        }
        r -= w;
    }
    ObjectClass::Cyclist
}

/// Random pose whose box centre projects inside the image.
fn sample_pose(spec: &SceneSpec, calib: &CalibrationSet, dims: BoxDims, rng: &mut ChaCha8Rng) -> OrientedBox3D {
    let (w, _) = spec.image_size;
    loop {
        let x = rng.random_range(spec.x_range.0..spec.x_range.1);
        // Lateral extent visible at this depth, with a margin.
        let half = x * ((w as f64 / 2.0) / spec.focal) * 0.9;
        let y = rng.random_range(-half..half);
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let center = Point3::new(x, y, -spec.sensor_height + dims.h / 2.0);
        let (u, _, depth) = calib.project_lidar(&center);
        if depth > 0.0 && (0.0..w as f64).contains(&u) {
            return OrientedBox3D::new(center, dims, yaw);
        }
    }
}

/// Clutter pose close to `anchor`: behind it along the viewing ray, or beside it.
fn sample_near(spec: &SceneSpec, anchor: &OrientedBox3D, dims: BoxDims, rng: &mut ChaCha8Rng) -> OrientedBox3D {
    let ray = Vector3::new(anchor.center.x, anchor.center.y, 0.0).normalize();
    let side = Vector3::new(-ray.y, ray.x, 0.0);
    let along = rng.random_range(1.0..4.0) + (anchor.dims.l.max(anchor.dims.w) + dims.l.max(dims.w)) / 2.0;
    let across = rng.random_range(-1.5..1.5);
    let p = anchor.center + ray * along + side * across;
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    OrientedBox3D::new(Point3::new(p.x, p.y, -spec.sensor_height + dims.h / 2.0), dims, yaw)
}

fn place_objects(spec: &SceneSpec, calib: &CalibrationSet, rng: &mut ChaCha8Rng) -> Result<Vec<SceneObject>, SynthError> {
    let mut placed: Vec<SceneObject> = Vec::new();
    for index in 0..spec.objects {
        let class = pick_class(&spec.class_mix, rng);
        let dims = spec.dims_for(class).sample(rng);
        let mut ok = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let b = sample_pose(spec, calib, dims, rng);
            if !overlaps(&b, &placed, spec.min_gap) {
                ok = Some(b);
                break;
            }
        }
        let b = ok.ok_or(SynthError::PlacementFailure { index, attempts: PLACEMENT_ATTEMPTS })?;
        placed.push(SceneObject { box3d: b, class: Some(class), color: class_color(Some(class), rng) });
    }
    let anchors = placed.len();
    for index in spec.objects..spec.objects + spec.clutter {
        let dims = spec.clutter_dims.sample(rng);
        let near = anchors > 0 && rng.random_bool(spec.clutter_near_objects);
        let mut ok = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let b = if near {
                sample_near(spec, &placed[rng.random_range(0..anchors)].box3d, dims, rng)
            } else {
                sample_pose(spec, calib, dims, rng)
            };
            if b.center.x > 0.5 && !overlaps(&b, &placed, spec.min_gap) {
                ok = Some(b);
                break;
            }
        }
        let b = ok.ok_or(SynthError::PlacementFailure { index, attempts: PLACEMENT_ATTEMPTS })?;
        placed.push(SceneObject { box3d: b, class: None, color: class_color(None, rng) });
    }
    Ok(placed)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let calib = spec.calibration();
    let objects = place_objects(spec, &calib, &mut rng)?;
    Ok(build_scene(spec.clone(), objects, rng.random()))
}

/// Renders both sensors for a fixed set of objects.
pub fn build_scene(spec: SceneSpec, objects: Vec<SceneObject>, texture_seed: u64) -> SyntheticScene {
    let calib = spec.calibration();
    let plane = spec.ground();
    let boxes: Vec<OrientedBox3D> = objects.iter().map(|o| o.box3d).collect();
    let hits = simulate_lidar(&spec.lidar, &boxes, &plane);
    let cloud = RawPointCloud::new(
        hits.iter()
            .map(|h| {
                let r = if h.object >= 0 { 0.6 } else { 0.25 };
                crate::kitti::Point::new(h.point.x as f32, h.point.y as f32, h.point.z as f32, r)
            })
            .collect(),
    );
    let colors: Vec<[u8; 3]> = objects.iter().map(|o| o.color).collect();
    let (image, dense_depth, object_id) = render_camera(&calib, spec.image_size, &boxes, &colors, &plane, texture_seed);
    SyntheticScene { spec, objects, cloud, image, calib, plane, dense_depth, object_id }
}
