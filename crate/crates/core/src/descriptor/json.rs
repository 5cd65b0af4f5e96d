//! Wire format for detections:
//! `{id, class, values:[...] | slots:[{s, values, class?}], confidence, source, tile?}`.

use serde::{Deserialize, Serialize};

use super::{Detection, DescriptorError, DescriptorVector, MultiObjectDescriptor, ObjectClass, Payload, Slot, Source, DEFAULT_N_MAX};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotJson {
    pub s: f64,
    pub values: Vec<f64>,
    /// Only present when the slot's class differs from the detection's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ObjectClass>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionJson {
    pub id: String,
    pub class: ObjectClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<Vec<SlotJson>>,
    pub confidence: f64,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<String>,
}

impl TryFrom<DetectionJson> for Detection {
    type Error = DescriptorError;

    fn try_from(j: DetectionJson) -> Result<Self, Self::Error> {
        let payload = match (j.values, j.slots) {
            (Some(values), None) => Payload::Single(DescriptorVector::new(j.class, values)?),
            (None, Some(slots)) => {
                let slots = slots
                    .into_iter()
                    .map(|s| {
                        Ok(Slot {
                            activation: s.s,
                            vector: DescriptorVector::new(s.class.unwrap_or(j.class), s.values)?,
                        })
                    })
                    .collect::<Result<Vec<_>, DescriptorError>>()?;
                Payload::Multi(MultiObjectDescriptor::new(slots, DEFAULT_N_MAX)?)
            }
            _ => return Err(DescriptorError::AmbiguousPayload),
        };
        let mut det = Detection::with_payload(j.id, payload, j.confidence, j.source)?;
        det.tile = j.tile;
        Ok(det)
    }
}

impl From<Detection> for DetectionJson {
    fn from(d: Detection) -> Self {
        let class = d.class();
        let (values, slots) = match d.payload {
            Payload::Single(v) => (Some(v.values), None),
            Payload::Multi(m) => (
                None,
                Some(
                    m.slots
                        .into_iter()
                        .map(|s| SlotJson {
                            s: s.activation,
                            class: (s.vector.class != class).then_some(s.vector.class),
                            values: s.vector.values,
                        })
                        .collect(),
                ),
            ),
        };
        DetectionJson { id: d.id, class, values, slots, confidence: d.confidence, source: d.source, tile: d.tile }
    }
}
