use crate::error::{Error, Result};

/// `V×J×2` joint detections in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence2D {
    joints: usize,
    coords: Vec<f64>,
}

/// `V×J×3` root-relative joint positions in millimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence3D {
    joints: usize,
    coords: Vec<f64>,
}

macro_rules! pose_sequence {
    ($ty:ident, $dims:expr) => {
        impl $ty {
            pub const DIMS: usize = $dims;

            pub fn new(joints: usize, coords: Vec<f64>) -> Result<Self> {
                if joints == 0 || coords.len() % (joints * $dims) != 0 {
                    return Err(Error::Data(format!(
                        "{} values do not form frames of {joints} joints x {}",
                        coords.len(),
                        $dims
                    )));
                }
                if let Some(bad) = coords.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("non-finite coordinate {bad}")));
                }
                Ok(Self { joints, coords })
            }

            pub fn joints(&self) -> usize {
                self.joints
            }

            pub fn frames(&self) -> usize {
                self.coords.len() / (self.joints * $dims)
            }

            pub fn frame(&self, t: usize) -> &[f64] {
                let w = self.joints * $dims;
                &self.coords[t * w..(t + 1) * w]
            }

            pub fn coords(&self) -> &[f64] {
                &self.coords
            }

            /// Frames at the given indices, in order.
            pub fn select(&self, frames: &[usize]) -> Self {
                let coords = frames.iter().flat_map(|&t| self.frame(t).iter().copied()).collect();
                Self { joints: self.joints, coords }
            }
        }
    };
}

pose_sequence!(PoseSequence2D, 2);
pose_sequence!(PoseSequence3D, 3);

impl PoseSequence2D {
    /// Maps pixel coordinates to [-1, 1] with the image width as scale,
    /// keeping the aspect ratio.
    pub fn normalized(&self, width: f64, height: f64) -> Vec<f64> {
        self.coords
            .iter()
            .enumerate()
            .map(|(i, &v)| if i % 2 == 0 { v / width * 2.0 - 1.0 } else { v / width * 2.0 - height / width })
            .collect()
    }
}

/// Paired 2D input and 3D ground truth for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePair {
    pub pose2d: PoseSequence2D,
    pub pose3d: PoseSequence3D,
}

impl SequencePair {
    pub fn new(pose2d: PoseSequence2D, pose3d: PoseSequence3D) -> Result<Self> {
        if pose2d.frames() != pose3d.frames() || pose2d.joints() != pose3d.joints() {
            return Err(Error::Data(format!(
                "2D ({}x{}) and 3D ({}x{}) sequences disagree",
                pose2d.frames(),
                pose2d.joints(),
                pose3d.frames(),
                pose3d.joints()
            )));
        }
        Ok(Self { pose2d, pose3d })
    }

    pub fn frames(&self) -> usize {
        self.pose2d.frames()
    }

    pub fn joints(&self) -> usize {
        self.pose2d.joints()
    }
}

/// A collection of sequences sharing one image size.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub image_width: u32,
    pub image_height: u32,
    pub sequences: Vec<SequencePair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn joints(&self) -> Option<usize> {
        self.sequences.first().map(SequencePair::joints)
    }

    /// Deterministic train/test split: the last `ceil(n·fraction)`
    /// sequences are held out.
    pub fn split(&self, test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let n = self.len();
        let test = ((n as f64) * test_fraction).ceil() as usize;
        let test = test.min(n);
        ((0..n - test).collect(), (n - test..n).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_layout() {
        assert!(PoseSequence2D::new(2, vec![0.0; 6]).is_err());
        assert!(PoseSequence3D::new(2, vec![f64::NAN; 6]).is_err());
        let p = PoseSequence3D::new(2, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(p.frames(), 2);
        assert_eq!(p.frame(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert_eq!(p.select(&[1, 1, 0]).frames(), 3);
        let q = PoseSequence2D::new(2, vec![0.0; 8]).unwrap();
        assert!(SequencePair::new(q, p).is_ok());
    }

    #[test]
    fn normalization_maps_image_to_unit_range() {
        let p = PoseSequence2D::new(1, vec![0.0, 0.0, 1000.0, 1000.0, 500.0, 500.0]).unwrap();
        assert_eq!(p.normalized(1000.0, 1000.0), vec![-1.0, -1.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
