use serde::{Deserialize, Serialize};

/// A point on the floor plan, in meters.
pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Axis-aligned rectangle in which the devices move and where detection is
/// reliable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurveyArea {
    pub min: Point,
    pub max: Point,
}

impl Default for SurveyArea {
    /// 2 m wide, 1 m deep: 2 m².
    fn default() -> Self {
        SurveyArea {
            min: [0.0, 0.0],
            max: [2.0, 1.0],
        }
    }
}

impl SurveyArea {
    pub fn contains(&self, p: Point) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn is_valid(&self) -> bool {
        (0..2).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.max[i] > self.min[i])
    }

    pub fn center(&self) -> Point {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }
}
