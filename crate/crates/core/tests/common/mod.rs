#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use r2g_core::scene::{scene_from_document, ObjectDocument, Scene, SceneDocument};

pub const POOL: [&str; 4] = ["bag", "chair", "lamp", "table"];

/// Raw object parameters; coordinates are multiples of 1/8 so that
/// power-of-two scalings and integer translations stay exact.
#[derive(Clone, Debug)]
pub struct RawObject {
    pub center: [i32; 3],
    pub extents: [i32; 3],
    pub weights: Vec<u32>,
}

pub fn raw_object(one_hot: bool) -> impl Strategy<Value = RawObject> {
    let weights = if one_hot {
        (0..POOL.len())
            .prop_map(|k| (0..POOL.len()).map(|i| u32::from(i == k)).collect())
            .boxed()
    } else {
        proptest::collection::vec(0u32..5, POOL.len())
            .prop_filter("some mass", |w| w.iter().any(|x| *x > 0))
            .boxed()
    };
    (
        [-40i32..40, -40i32..40, 0i32..16],
        [2i32..16, 2i32..16, 2i32..16],
        weights,
    )
        .prop_map(|(center, extents, weights)| RawObject {
            center,
            extents,
            weights,
        })
}

pub fn raw_scene(n: std::ops::RangeInclusive<usize>, one_hot: bool) -> impl Strategy<Value = Vec<RawObject>> {
    proptest::collection::vec(raw_object(one_hot), n)
}

pub fn build(raw: &[RawObject], scale: f64, shift: [f64; 3]) -> Scene {
    let objects = raw
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let total: u32 = o.weights.iter().sum();
            let category_dist: BTreeMap<String, f64> = POOL
                .iter()
                .zip(&o.weights)
                .filter(|(_, w)| **w > 0)
                .map(|(c, w)| (c.to_string(), f64::from(*w) / f64::from(total)))
                .collect();
            let gt = POOL[o.weights.iter().enumerate().max_by_key(|(_, w)| **w).unwrap().0];
            let e = o.extents.map(|v| f64::from(v) / 8.0 * scale);
            let c = o.center.map(|v| f64::from(v) / 8.0);
            ObjectDocument {
                id: format!("o{i}"),
                // rest the box on z = c[2]
                center: [c[0] * scale + shift[0], c[1] * scale + shift[1], c[2] * scale + e[2] / 2.0 + shift[2]],
                extents: e,
                yaw: 0.0,
                mean_rgb: [0.5, 0.5, 0.5],
                category_dist,
                shape_dist: None,
                attrs: None,
                gt_category: Some(gt.to_string()),
            }
        })
        .collect();
    scene_from_document(SceneDocument {
        id: "prop".into(),
        objects,
    })
    .unwrap()
}
