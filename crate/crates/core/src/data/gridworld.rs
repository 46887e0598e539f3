//! Gridworld rollouts on a 10x10 grid.
//!
//! Each step draws agent and object positions i.i.d. uniform on the grid (no
//! temporal dynamics; only per-step tuples are consumed downstream). The
//! feature vector is `(a_x, a_y, o_x, o_y, proximity, reward)` and the class
//! label is the object type (A = 0, B = 1; type C rows are labeled 0 and the
//! labels are unused at test time).

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{DatasetMeta, LabeledDataset, SplitTag};
use crate::seeding::rng_from_seed;

pub const GRID_SIZE: u32 = 10;
pub const GRIDWORLD_COLUMNS: [&str; 6] = ["a_x", "a_y", "o_x", "o_y", "proximity", "reward"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridworldVariant {
    Regular,
    NewObject,
    Mechanism,
}

impl GridworldVariant {
    pub const ALL: [GridworldVariant; 3] = [
        GridworldVariant::Regular,
        GridworldVariant::NewObject,
        GridworldVariant::Mechanism,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GridworldVariant::Regular => "regular",
            GridworldVariant::NewObject => "newobj",
            GridworldVariant::Mechanism => "mechanism",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectType {
    A,
    B,
    C,
}

/// Inverse Euclidean distance between agent and object.
pub fn proximity(a_x: f64, a_y: f64, o_x: f64, o_y: f64) -> f64 {
    let dx = a_x - o_x;
    let dy = a_y - o_y;
    1.0 / (1.0 + (dx * dx + dy * dy).sqrt())
}

/// Reward table per variant. The new-object variant pays 2.0 only for
/// proximity in (0.3, 0.7]; the mechanism variant replaces both base rewards
/// with step functions at proximity 0.5.
pub fn reward(variant: GridworldVariant, object: ObjectType, proximity: f64) -> f64 {
    match (variant, object) {
        (GridworldVariant::Mechanism, ObjectType::A) => {
            if proximity > 0.5 {
                2.0
            } else {
                0.1
            }
        }
        (GridworldVariant::Mechanism, ObjectType::B) => {
            if proximity > 0.5 {
                -2.0
            } else {
                -0.1
            }
        }
        (_, ObjectType::A) => 1.5 * proximity,
        (_, ObjectType::B) => -1.0 * proximity,
        (_, ObjectType::C) => {
            if proximity > 0.3 && proximity <= 0.7 {
                2.0
            } else {
                -0.5
            }
        }
    }
}

/// Generates `n_steps` rows. The new-object variant emits type-C rows only;
/// the other variants draw A or B with equal probability.
pub fn gen_gridworld(n_steps: usize, variant: GridworldVariant, seed: u64) -> LabeledDataset {
    assert!(n_steps >= 1, "need at least one step");
    let mut rng = rng_from_seed(seed);
    let mut features = Array2::<f64>::zeros((n_steps, 6));
    let mut labels = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        let a_x = rng.random_range(0..GRID_SIZE) as f64;
        let a_y = rng.random_range(0..GRID_SIZE) as f64;
        let o_x = rng.random_range(0..GRID_SIZE) as f64;
        let o_y = rng.random_range(0..GRID_SIZE) as f64;
        let object = match variant {
            GridworldVariant::NewObject => ObjectType::C,
            _ => {
                if rng.random::<f64>() < 0.5 {
                    ObjectType::A
                } else {
                    ObjectType::B
                }
            }
        };
        let p = proximity(a_x, a_y, o_x, o_y);
        let r = reward(variant, object, p);
        features[[i, 0]] = a_x;
        features[[i, 1]] = a_y;
        features[[i, 2]] = o_x;
        features[[i, 3]] = o_y;
        features[[i, 4]] = p;
        features[[i, 5]] = r;
        labels.push(match object {
            ObjectType::B => 1,
            _ => 0,
        });
    }
    let meta = DatasetMeta {
        name: "gridworld".to_string(),
        variant: variant.name().to_string(),
        seed,
        columns: GRIDWORLD_COLUMNS.iter().map(|c| c.to_string()).collect(),
    };
    LabeledDataset::with_tag(features, labels, SplitTag::Test, meta).expect("consistent shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn colocated_agent_and_object_have_proximity_one() {
        assert_abs_diff_eq!(proximity(3.0, 4.0, 3.0, 4.0), 1.0);
    }

    #[test]
    fn object_a_at_zero_distance_pays_1_5() {
        let p = proximity(2.0, 2.0, 2.0, 2.0);
        assert_abs_diff_eq!(reward(GridworldVariant::Regular, ObjectType::A, p), 1.5);
    }

    #[test]
    fn new_object_reward_band() {
        assert_abs_diff_eq!(reward(GridworldVariant::NewObject, ObjectType::C, 0.5), 2.0);
        assert_abs_diff_eq!(reward(GridworldVariant::NewObject, ObjectType::C, 0.2), -0.5);
        // Band boundaries: 0.3 is outside, 0.7 is inside.
        assert_abs_diff_eq!(reward(GridworldVariant::NewObject, ObjectType::C, 0.3), -0.5);
        assert_abs_diff_eq!(reward(GridworldVariant::NewObject, ObjectType::C, 0.7), 2.0);
    }

    #[test]
    fn mechanism_rewards_are_step_functions() {
        assert_abs_diff_eq!(reward(GridworldVariant::Mechanism, ObjectType::A, 0.6), 2.0);
        assert_abs_diff_eq!(reward(GridworldVariant::Mechanism, ObjectType::A, 0.4), 0.1);
        assert_abs_diff_eq!(reward(GridworldVariant::Mechanism, ObjectType::B, 0.6), -2.0);
        assert_abs_diff_eq!(reward(GridworldVariant::Mechanism, ObjectType::B, 0.4), -0.1);
    }

    #[test]
    fn proximity_and_reward_stay_in_bounds() {
        for variant in GridworldVariant::ALL {
            let data = gen_gridworld(5000, variant, 12);
            for row in data.features.rows() {
                let p = row[4];
                assert!(p > 0.0 && p <= 1.0, "proximity {p}");
                let r = row[5];
                assert!((-2.0..=2.0).contains(&r), "reward {r}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_gridworld(1000, GridworldVariant::Mechanism, 5);
        let b = gen_gridworld(1000, GridworldVariant::Mechanism, 5);
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn new_object_rows_are_all_type_c() {
        let data = gen_gridworld(200, GridworldVariant::NewObject, 3);
        assert!(data.labels.iter().all(|&l| l == 0));
        // Every reward is one of the two type-C values.
        for row in data.features.rows() {
            let r = row[5];
            assert!(r == 2.0 || r == -0.5, "reward {r}");
        }
    }
}
