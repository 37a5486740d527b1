//! Inventory of the naturalistic-variation object dataset: object classes
//! with their model counts, lighting environments and occluder objects.
//!
//! Model and lighting identifiers are synthesized (`<class slug>_<nn>`,
//! `hdri_<nn>`); callers with real asset ids should build trials themselves.

use crate::sweep::SceneTrial;

/// ImageNet-1k class names and the number of object models per class.
pub const OBJECT_CLASSES: [(&str, usize); 17] = [
    ("banana", 7),
    ("baseball", 3),
    ("cowboy hat, ten-gallon hat", 1),
    ("cup", 7),
    ("dumbbell", 9),
    ("frying pan, frypan, skillet", 3),
    ("hammer", 8),
    ("ice cream, icecream", 6),
    ("laptop, laptop computer", 4),
    ("microwave, microwave oven", 1),
    ("mouse, computer mouse", 10),
    ("orange", 4),
    ("pillow", 15),
    ("plate", 3),
    ("screwdriver", 3),
    ("spatula", 3),
    ("vase", 5),
];

pub const LIGHTING_ENVIRONMENTS: usize = 27;

pub const OCCLUDERS: [&str; 3] = ["stone_bookend", "red_die", "green_l_block"];

pub fn model_count() -> usize {
    OBJECT_CLASSES.iter().map(|(_, n)| n).sum()
}

pub fn class_labels() -> Vec<String> {
    OBJECT_CLASSES.iter().map(|(c, _)| c.to_string()).collect()
}

/// `"cowboy hat, ten-gallon hat"` -> `"cowboy_hat"`
fn slug(class: &str) -> String {
    class
        .split(',')
        .next()
        .unwrap_or(class)
        .trim()
        .replace(' ', "_")
}

pub fn lighting_ids() -> Vec<String> {
    (1..=LIGHTING_ENVIRONMENTS)
        .map(|i| format!("hdri_{i:02}"))
        .collect()
}

/// (model id, class label) for every object model.
pub fn object_models() -> Vec<(String, String)> {
    OBJECT_CLASSES
        .iter()
        .flat_map(|&(class, n)| {
            let s = slug(class);
            (1..=n).map(move |i| (format!("{s}_{i:02}"), class.to_string()))
        })
        .collect()
}

/// Every model under every lighting environment; with `with_occluders`,
/// additionally crossed with the three occluder objects.
pub fn trials(with_occluders: bool) -> Vec<SceneTrial> {
    let occluders: Vec<Option<&str>> = if with_occluders {
        OCCLUDERS.iter().map(|o| Some(*o)).collect()
    } else {
        vec![None]
    };
    let lights = lighting_ids();
    let mut out = Vec::new();
    for (model, class) in object_models() {
        for light in &lights {
            for occ in &occluders {
                let trial_id = match occ {
                    Some(o) => format!("{model}__{light}__{o}"),
                    None => format!("{model}__{light}"),
                };
                out.push(SceneTrial {
                    trial_id,
                    object_model_id: model.clone(),
                    class_label: class.clone(),
                    lighting_env_id: light.clone(),
                    occluder_id: occ.map(str::to_string),
                    unit_scale: None,
                });
            }
        }
    }
    out
}
