//! Bounding-box-free object descriptors.
//!
//! Every class has a fixed vector layout from which its geometry can be
//! derived (pole yaw from apex/bottom, sign corners from centre/axes/extents,
//! cone height and axis from vertex/base). Co-located objects are bundled in a
//! [`MultiObjectDescriptor`] whose slots carry an activation probability each.

mod geometry;
pub mod json;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{cone_geometry, descriptor_distance, keypoints, pole_yaw, sign_corners, sign_normal, Vec3};

/// Default number of polyline vertices for barrier/curb/lane vectors.
pub const DEFAULT_POLYLINE_VERTICES: usize = 8;
/// Default `N` in a multi-object descriptor (so up to `N + 1` slots).
pub const DEFAULT_N_MAX: usize = 2;
/// Numerical tolerance for unit-norm and orthogonality checks.
pub const AXIS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("{class:?} vector needs {expected} values, got {got}")]
    WrongLength { class: ObjectClass, expected: String, got: usize },
    #[error("descriptor values must be finite")]
    NonFinite,
    #[error("cone radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("sign axes must be unit length and orthogonal")]
    InvalidAxes,
    #[error("extent must be non-negative, got {0}")]
    InvalidExtent(f64),
    #[error("expected a {expected:?} vector, got {got:?}")]
    WrongClass { expected: ObjectClass, got: ObjectClass },
    #[error("pole is vertical; yaw is undefined")]
    DegenerateOrientation,
    #[error("cone vertex coincides with base centre")]
    DegenerateCone,
    #[error("cannot compare {0:?} with {1:?}")]
    ClassMismatch(ObjectClass, ObjectClass),
    #[error("activation {0} outside [0, 1]")]
    InvalidActivation(f64),
    #[error("descriptor has {got} slots, at most {max} allowed")]
    TooManySlots { got: usize, max: usize },
    #[error("descriptor has no slots")]
    EmptySlots,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("detection needs exactly one of `values` or `slots`")]
    AmbiguousPayload,
}

pub type Result<T> = std::result::Result<T, DescriptorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Pole,
    TrafficLight,
    TrafficSign,
    TrafficCone,
    Tunnel,
    Barrier,
    Curb,
    LaneMarking,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 8] = [
        ObjectClass::Pole,
        ObjectClass::TrafficLight,
        ObjectClass::TrafficSign,
        ObjectClass::TrafficCone,
        ObjectClass::Tunnel,
        ObjectClass::Barrier,
        ObjectClass::Curb,
        ObjectClass::LaneMarking,
    ];

    /// Fixed vector length, or `None` for polyline classes (3 per vertex).
    pub fn fixed_len(self) -> Option<usize> {
        match self {
            ObjectClass::Pole => Some(6),
            ObjectClass::TrafficCone => Some(7),
            ObjectClass::TrafficSign => Some(11),
            ObjectClass::TrafficLight => Some(9),
            ObjectClass::Tunnel => Some(8),
            ObjectClass::Barrier | ObjectClass::Curb | ObjectClass::LaneMarking => None,
        }
    }

    pub fn is_polyline(self) -> bool {
        self.fixed_len().is_none()
    }
}

/// A validated per-class descriptor vector.
///
/// Layouts:
/// - pole: apex xyz, bottom xyz
/// - traffic cone: vertex xyz, base centre xyz, radius
/// - traffic sign: centre xyz, unit axis u, unit axis v, half-width, half-height
/// - traffic light: centre xyz, axis xyz, width, height, depth
/// - tunnel: entry centre xyz, exit centre xyz, width, height
/// - barrier / curb / lane marking: K >= 2 polyline vertices, xyz each
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    class: ObjectClass,
    values: Vec<f64>,
}

fn v3(values: &[f64], at: usize) -> Vec3 {
    [values[at], values[at + 1], values[at + 2]]
}

impl DescriptorVector {
    pub fn new(class: ObjectClass, values: Vec<f64>) -> Result<Self> {
        match class.fixed_len() {
            Some(n) if values.len() != n => {
                return Err(DescriptorError::WrongLength { class, expected: n.to_string(), got: values.len() })
            }
            None if values.len() < 6 || values.len() % 3 != 0 => {
                return Err(DescriptorError::WrongLength {
                    class,
                    expected: "a multiple of 3, at least 6".into(),
                    got: values.len(),
                })
            }
            _ => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DescriptorError::NonFinite);
        }
        let non_negative = |v: f64| if v >= 0.0 { Ok(()) } else { Err(DescriptorError::InvalidExtent(v)) };
        match class {
            ObjectClass::TrafficCone => {
                if !(values[6] > 0.0) {
                    return Err(DescriptorError::InvalidRadius(values[6]));
                }
            }
            ObjectClass::TrafficSign => {
                let (u, v) = (v3(&values, 3), v3(&values, 6));
                let unit = |a: Vec3| (geometry::norm(a) - 1.0).abs() <= AXIS_TOLERANCE;
                if !unit(u) || !unit(v) || geometry::dot(u, v).abs() > AXIS_TOLERANCE {
                    return Err(DescriptorError::InvalidAxes);
                }
                non_negative(values[9])?;
                non_negative(values[10])?;
            }
            ObjectClass::TrafficLight => {
                for &e in &values[6..9] {
                    non_negative(e)?;
                }
            }
            ObjectClass::Tunnel => {
                non_negative(values[6])?;
                non_negative(values[7])?;
            }
            _ => {}
        }
        Ok(Self { class, values })
    }

    pub fn pole(apex: Vec3, bottom: Vec3) -> Result<Self> {
        Self::new(ObjectClass::Pole, [apex, bottom].concat())
    }

    pub fn cone(vertex: Vec3, base_center: Vec3, radius: f64) -> Result<Self> {
        Self::new(ObjectClass::TrafficCone, [&vertex[..], &base_center[..], &[radius]].concat())
    }

    pub fn sign(center: Vec3, u: Vec3, v: Vec3, half_width: f64, half_height: f64) -> Result<Self> {
        Self::new(ObjectClass::TrafficSign, [&center[..], &u[..], &v[..], &[half_width, half_height]].concat())
    }

    pub fn polyline(class: ObjectClass, vertices: &[Vec3]) -> Result<Self> {
        if !class.is_polyline() {
            return Err(DescriptorError::WrongLength { class, expected: "a fixed layout".into(), got: vertices.len() * 3 });
        }
        Self::new(class, vertices.iter().flatten().copied().collect())
    }

    pub fn class(&self) -> ObjectClass {
        self.class
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn point(&self, index: usize) -> Vec3 {
        v3(&self.values, index * 3)
    }

    /// Polyline vertices (empty for fixed-layout classes).
    pub fn vertices(&self) -> Vec<Vec3> {
        if !self.class.is_polyline() {
            return Vec::new();
        }
        self.values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }

    fn expect(&self, class: ObjectClass) -> Result<()> {
        if self.class != class {
            return Err(DescriptorError::WrongClass { expected: class, got: self.class });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    /// Activation probability in `[0, 1]`.
    pub activation: f64,
    pub vector: DescriptorVector,
}

/// Activation-weighted bundle of descriptors at one location. Slot order is
/// whatever the producer emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiObjectDescriptor {
    slots: Vec<Slot>,
}

impl MultiObjectDescriptor {
    pub fn new(slots: Vec<Slot>, n_max: usize) -> Result<Self> {
        if slots.is_empty() {
            return Err(DescriptorError::EmptySlots);
        }
        if slots.len() > n_max + 1 {
            return Err(DescriptorError::TooManySlots { got: slots.len(), max: n_max + 1 });
        }
        for s in &slots {
            if !(0.0..=1.0).contains(&s.activation) {
                return Err(DescriptorError::InvalidActivation(s.activation));
            }
        }
        Ok(Self { slots })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }
}

/// Vectors of the slots whose activation is strictly above `threshold`, in
/// slot order.
pub fn activate(d: &MultiObjectDescriptor, threshold: f64) -> Vec<&DescriptorVector> {
    d.slots.iter().filter(|s| s.activation > threshold).map(|s| &s.vector).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Model,
    Human,
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Single(DescriptorVector),
    Multi(MultiObjectDescriptor),
}

/// A confidence-scored object hypothesis, the unit exchanged between stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "json::DetectionJson", into = "json::DetectionJson")]
pub struct Detection {
    pub id: String,
    pub payload: Payload,
    confidence: f64,
    pub source: Source,
    /// Identifier of the tile the detection was made on, if any.
    pub tile: Option<String>,
}

impl Detection {
    pub fn new(id: impl Into<String>, vector: DescriptorVector, confidence: f64, source: Source) -> Result<Self> {
        Self::with_payload(id, Payload::Single(vector), confidence, source)
    }

    pub fn with_payload(id: impl Into<String>, payload: Payload, confidence: f64, source: Source) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(DescriptorError::InvalidConfidence(confidence));
        }
        Ok(Self { id: id.into(), payload, confidence, source, tile: None })
    }

    pub fn on_tile(mut self, tile: impl Into<String>) -> Self {
        self.tile = Some(tile.into());
        self
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    /// The vector used for matching: the single vector, or the most activated
    /// slot (first one on ties).
    pub fn primary_vector(&self) -> &DescriptorVector {
        match &self.payload {
            Payload::Single(v) => v,
            Payload::Multi(m) => {
                let mut best = &m.slots[0];
                for s in &m.slots[1..] {
                    if s.activation > best.activation {
                        best = s;
                    }
                }
                &best.vector
            }
        }
    }

    pub fn class(&self) -> ObjectClass {
        self.primary_vector().class()
    }

    /// Human-confirmed copy: source `Human`, confidence 1.
    pub fn as_human(&self) -> Detection {
        Detection { source: Source::Human, confidence: 1.0, ..self.clone() }
    }
}
