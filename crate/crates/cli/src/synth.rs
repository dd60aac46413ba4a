//! Synthetic scene and prediction generation.
//!
//! Scenes follow the color-boxes recipe: up to 30 objects of 20 classes on
//! a 500 x 400 canvas, box sides 12 to 80 pixels, placed by rejection
//! sampling so that no two bounding boxes overlap with IoU above 0.25.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use uotod_core::{iou, BBox, GroundTruth, Prediction};

use crate::HarnessError;

pub const NUM_CLASSES: usize = 20;
pub const MAX_OBJECTS: usize = 30;
pub const IMAGE_W: f64 = 500.0;
pub const IMAGE_H: f64 = 400.0;
pub const SIDE_MIN_PX: f64 = 12.0;
pub const SIDE_MAX_PX: f64 = 80.0;
pub const IOU_CAP: f64 = 0.25;

const PLACEMENT_ATTEMPTS: usize = 1_000;
const MIN_DIM: f64 = 1e-3;
const JITTER_CONFIDENCE: f64 = 0.9;

/// A generated scene: ground-truth objects plus the seed that produced them.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub gts: Vec<GroundTruth>,
    pub seed: u64,
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let w_px = rng.random_range(SIDE_MIN_PX..=SIDE_MAX_PX);
    let h_px = rng.random_range(SIDE_MIN_PX..=SIDE_MAX_PX);
    let cx_px = rng.random_range(w_px / 2.0..=IMAGE_W - w_px / 2.0);
    let cy_px = rng.random_range(h_px / 2.0..=IMAGE_H - h_px / 2.0);
    BBox::new(cx_px / IMAGE_W, cy_px / IMAGE_H, w_px / IMAGE_W, h_px / IMAGE_H)
        .expect("sampled box satisfies the construction invariants")
}

/// Generates a scene deterministically from a seed: a uniformly random
/// object count in `[0, 30]`, uniform classes, and rejection-sampled
/// placement under the pairwise IoU cap. Fails with the seed attached if an
/// object cannot be placed within the retry budget.
pub fn generate_scene(seed: u64) -> Result<SyntheticScene, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(0..=MAX_OBJECTS);
    let mut gts: Vec<GroundTruth> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let class_id = rng.random_range(0..NUM_CLASSES);
            let bbox = random_box(&mut rng);
            if gts.iter().all(|g| iou(&g.bbox, &bbox) <= IOU_CAP) {
                gts.push(GroundTruth { class_id, bbox });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(HarnessError::PlacementFailed { seed });
        }
    }
    Ok(SyntheticScene { gts, seed })
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn smoothed_one_hot(class_id: usize) -> Vec<f64> {
    let mut probs = vec![(1.0 - JITTER_CONFIDENCE) / (NUM_CLASSES - 1) as f64; NUM_CLASSES];
    probs[class_id] = JITTER_CONFIDENCE;
    probs
}

/// Generates `np` predictions for a scene: the first `min(np, ng)` jitter
/// one ground truth each with gaussian coordinate noise (clamped back to
/// the unit square) and a smoothed one-hot class vector; the remainder are
/// uniformly random boxes with uniform class scores. Deterministic per
/// seed. Callers should prefer `np >= ng` so every object can be covered.
pub fn generate_predictions(
    scene: &SyntheticScene,
    np: usize,
    noise: f64,
    seed: u64,
) -> Vec<Prediction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = if noise > 0.0 {
        Some(Normal::new(0.0, noise).expect("finite positive std dev"))
    } else {
        None
    };
    let jitter = |rng: &mut ChaCha8Rng| match &normal {
        Some(n) => n.sample(rng),
        None => 0.0,
    };

    let mut preds = Vec::with_capacity(np);
    for i in 0..np {
        if i < scene.gts.len() {
            let gt = &scene.gts[i];
            let bbox = BBox::new(
                clamp01(gt.bbox.cx() + jitter(&mut rng)),
                clamp01(gt.bbox.cy() + jitter(&mut rng)),
                (gt.bbox.w() + jitter(&mut rng)).clamp(MIN_DIM, 1.0),
                (gt.bbox.h() + jitter(&mut rng)).clamp(MIN_DIM, 1.0),
            )
            .expect("clamped box satisfies the construction invariants");
            preds.push(
                Prediction::new(smoothed_one_hot(gt.class_id), bbox)
                    .expect("smoothed one-hot is a valid probability vector"),
            );
        } else {
            let bbox = random_box(&mut rng);
            preds.push(
                Prediction::new(vec![1.0 / NUM_CLASSES as f64; NUM_CLASSES], bbox)
                    .expect("uniform scores are valid"),
            );
        }
    }
    preds
}
