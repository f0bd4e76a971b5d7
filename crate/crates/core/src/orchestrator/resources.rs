use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measured requirement of a task at one scene size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceAnchor {
    pub frames: u64,
    pub cpus: u32,
    pub ram_gb: f64,
    pub hours: f64,
    pub gpus: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct ResourceModel {
    anchors: Vec<ResourceAnchor>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    anchors: Vec<ResourceAnchor>,
}

impl TryFrom<RawModel> for ResourceModel {
    type Error = Error;
    fn try_from(raw: RawModel) -> Result<Self> {
        ResourceModel::new(raw.anchors)
    }
}

impl From<ResourceModel> for RawModel {
    fn from(m: ResourceModel) -> Self {
        RawModel { anchors: m.anchors }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub cpus: u32,
    pub ram_gb: f64,
    pub hours: f64,
    pub gpus: u32,
}

impl ResourceModel {
    /// Sorts anchors by frame count.
    pub fn new(mut anchors: Vec<ResourceAnchor>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::InvalidInput("resource model needs at least one anchor".into()));
        }
        for a in &anchors {
            if a.frames == 0 || a.cpus == 0 || !(a.ram_gb > 0.0) || !(a.hours > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "resource anchor fields must be positive: {a:?}"
                )));
            }
        }
        anchors.sort_by_key(|a| a.frames);
        if anchors.windows(2).any(|w| w[0].frames == w[1].frames) {
            return Err(Error::InvalidInput("duplicate anchor frame count".into()));
        }
        Ok(Self { anchors })
    }

    /// One CPU, 1 GB, one hour.
    pub fn minimal() -> Self {
        Self {
            anchors: vec![ResourceAnchor {
                frames: 1,
                cpus: 1,
                ram_gb: 1.0,
                hours: 1.0,
                gpus: 0,
            }],
        }
    }

    pub fn anchors(&self) -> &[ResourceAnchor] {
        &self.anchors
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.anchors.clone()).map(|_| ())
    }
}

/// Piecewise-linear in scene size between bracketing anchors, clamped to
/// the end anchors outside their range. CPU and GPU counts round up.
pub fn estimate(model: &ResourceModel, n_frames: u64) -> Result<ResourceEstimate> {
    if n_frames == 0 {
        return Err(Error::InvalidInput("scene must have at least one frame".into()));
    }
    let a = model.anchors();
    let first = a.first().ok_or_else(|| Error::InvalidInput("empty anchors".into()))?;
    let last = a[a.len() - 1];
    let exact = |x: &ResourceAnchor| ResourceEstimate {
        cpus: x.cpus,
        ram_gb: x.ram_gb,
        hours: x.hours,
        gpus: x.gpus,
    };
    if n_frames <= first.frames {
        return Ok(exact(first));
    }
    if n_frames >= last.frames {
        return Ok(exact(&last));
    }
    let i = a.partition_point(|x| x.frames < n_frames);
    let (lo, hi) = (&a[i - 1], &a[i]);
    if hi.frames == n_frames {
        return Ok(exact(hi));
    }
    let s = (n_frames - lo.frames) as f64 / (hi.frames - lo.frames) as f64;
    let lerp = |x: f64, y: f64| x + (y - x) * s;
    Ok(ResourceEstimate {
        cpus: lerp(lo.cpus as f64, hi.cpus as f64).ceil() as u32,
        ram_gb: lerp(lo.ram_gb, hi.ram_gb),
        hours: lerp(lo.hours, hi.hours),
        gpus: lerp(lo.gpus as f64, hi.gpus as f64).ceil() as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor(frames: u64, hours: f64) -> ResourceAnchor {
        ResourceAnchor {
            frames,
            cpus: 2,
            ram_gb: 8.0,
            hours,
            gpus: 1,
        }
    }

    #[test]
    fn single_anchor_is_constant() {
        let m = ResourceModel::new(vec![anchor(500, 3.0)]).unwrap();
        for n in [1, 65, 500, 13796] {
            assert_eq!(estimate(&m, n).unwrap().hours, 3.0);
        }
    }

    #[test]
    fn midpoint_and_clamps() {
        let m = ResourceModel::new(vec![anchor(200, 4.0), anchor(100, 2.0)]).unwrap();
        assert_eq!(estimate(&m, 150).unwrap().hours, 3.0);
        assert_eq!(estimate(&m, 65).unwrap().hours, 2.0);
        assert_eq!(estimate(&m, 13796).unwrap().hours, 4.0);
        assert!(estimate(&m, 0).is_err());
    }

    #[test]
    fn counts_round_up() {
        let mut a = anchor(100, 1.0);
        a.cpus = 2;
        let mut b = anchor(200, 1.0);
        b.cpus = 3;
        let m = ResourceModel::new(vec![a, b]).unwrap();
        assert_eq!(estimate(&m, 101).unwrap().cpus, 3);
    }

    #[test]
    fn invalid_models() {
        assert!(ResourceModel::new(vec![]).is_err());
        assert!(ResourceModel::new(vec![anchor(100, 0.0)]).is_err());
        assert!(ResourceModel::new(vec![anchor(100, 1.0), anchor(100, 2.0)]).is_err());
        assert!(serde_json::from_str::<ResourceModel>(r#"{"anchors":[]}"#).is_err());
    }
}
