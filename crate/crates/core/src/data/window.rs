//! Clip windowing and boundary completion.
//!
//! A target frame `t` needs `(T-1)/2` frames on each side. Near the ends of a
//! video some are missing, and one of three strategies fills the gap:
//!
//! * edge: repeat the boundary frame,
//! * expand: duplicate the first (or last) `k` real frames once each,
//! * roll: if more than `R` frames are missing, slide the window so it lies
//!   inside the video and report where the target landed; otherwise edge.
//!
//! Completion works on frame indices, so the same plan gathers 2D inputs and
//! 3D ground truth alike.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompletionMode {
    Edge,
    Expand,
    Roll,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompletionPolicy {
    pub mode: CompletionMode,
    /// Rolling threshold R, in frames.
    pub threshold: usize,
}

/// The real frames of an ideal centered window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub frames: Vec<usize>,
    pub missing_before: usize,
    pub missing_after: usize,
}

/// Intersects `[t-(T-1)/2, t+(T-1)/2]` with `[0, V)`.
pub fn window(video_len: usize, target: usize, len: usize) -> Result<Window> {
    if len.is_multiple_of(2) {
        return Err(Error::config("frames", format!("window length must be odd, got {len}")));
    }
    if target >= video_len {
        return Err(Error::Index(format!("target {target} outside a {video_len}-frame video")));
    }
    let half = (len - 1) / 2;
    let missing_before = half.saturating_sub(target);
    let missing_after = (target + half + 1).saturating_sub(video_len);
    let start = target.saturating_sub(half);
    let end = (target + half + 1).min(video_len);
    Ok(Window { frames: (start..end).collect(), missing_before, missing_after })
}

/// Repeats the boundary frames to fill the missing slots.
pub fn complete_edge<T: Clone>(clip: &[T], before: usize, after: usize) -> Result<Vec<T>> {
    let (first, last) = match (clip.first(), clip.last()) {
        (Some(f), Some(l)) => (f.clone(), l.clone()),
        _ => return Err(Error::Data("cannot complete an empty clip".into())),
    };
    let mut out = Vec::with_capacity(before + clip.len() + after);
    out.extend(std::iter::repeat_n(first, before));
    out.extend_from_slice(clip);
    out.extend(std::iter::repeat_n(last, after));
    Ok(out)
}

/// Duplicates the first `before` frames (and last `after` frames) once each,
/// in order: `[1,1,2,2,3,...]` for two missing leading frames.
pub fn complete_expand<T: Clone>(clip: &[T], before: usize, after: usize) -> Result<Vec<T>> {
    if before > clip.len() || after > clip.len() {
        return Err(Error::Data(format!(
            "expanding {before}+{after} missing frames needs at least that many real frames, have {}",
            clip.len()
        )));
    }
    if clip.is_empty() {
        return Err(Error::Data("cannot complete an empty clip".into()));
    }
    let n = clip.len();
    let mut out = Vec::with_capacity(n + before + after);
    for (i, f) in clip.iter().enumerate() {
        if i < before {
            out.push(f.clone());
        }
        out.push(f.clone());
        if i >= n - after {
            out.push(f.clone());
        }
    }
    Ok(out)
}

/// Frame indices forming one model input, plus where the target sits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClipPlan {
    pub frames: Vec<usize>,
    pub target_offset: usize,
    /// True when the window was shifted and the target is off-center.
    pub rolled: bool,
}

impl ClipPlan {
    /// Circular shift of the clip that puts the target at the center.
    pub fn centered_rotation(&self) -> Vec<usize> {
        let n = self.frames.len();
        let center = (n - 1) / 2;
        (0..n).map(|c| self.frames[(self.target_offset + n + c - center) % n]).collect()
    }
}

/// Data rolling: edge padding when at most `threshold` frames are missing,
/// otherwise the window `[0, T)` or `[V-T, V)` with the target off-center.
pub fn complete_roll(video_len: usize, target: usize, len: usize, threshold: usize) -> Result<ClipPlan> {
    if video_len < len {
        return Err(Error::Data(format!("rolling needs at least {len} frames, video has {video_len}")));
    }
    let w = window(video_len, target, len)?;
    let missing = w.missing_before.max(w.missing_after);
    if missing <= threshold {
        return Ok(ClipPlan {
            frames: complete_edge(&w.frames, w.missing_before, w.missing_after)?,
            target_offset: (len - 1) / 2,
            rolled: false,
        });
    }
    let start = if w.missing_before > 0 { 0 } else { video_len - len };
    Ok(ClipPlan { frames: (start..start + len).collect(), target_offset: target - start, rolled: true })
}

/// Builds the input clip for `target` under `policy`.
pub fn plan_clip(video_len: usize, target: usize, len: usize, policy: CompletionPolicy) -> Result<ClipPlan> {
    let centered = |frames| ClipPlan { frames, target_offset: (len - 1) / 2, rolled: false };
    match policy.mode {
        CompletionMode::Roll => complete_roll(video_len, target, len, policy.threshold),
        CompletionMode::Edge => {
            let w = window(video_len, target, len)?;
            Ok(centered(complete_edge(&w.frames, w.missing_before, w.missing_after)?))
        }
        CompletionMode::Expand => {
            let w = window(video_len, target, len)?;
            Ok(centered(complete_expand(&w.frames, w.missing_before, w.missing_after)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_examples() {
        let w = window(9, 4, 9).unwrap();
        assert_eq!((w.frames.len(), w.missing_before, w.missing_after), (9, 0, 0));
        let w = window(7, 2, 9).unwrap();
        assert_eq!(w.missing_before, 2);
        assert_eq!(w.frames, (0..7).collect::<Vec<_>>());
        assert_eq!(window(100, 0, 9).unwrap().missing_before, 4);
        assert!(window(100, 0, 8).is_err());
        assert!(window(10, 10, 9).is_err());
    }

    #[test]
    fn edge_examples() {
        let clip: Vec<u32> = (1..=7).collect();
        assert_eq!(complete_edge(&clip, 2, 0).unwrap(), vec![1, 1, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(complete_edge(&clip, 0, 0).unwrap(), clip);
        assert_eq!(complete_edge(&[5], 3, 2).unwrap(), vec![5; 6]);
        assert!(complete_edge::<u32>(&[], 1, 0).is_err());
    }

    #[test]
    fn expand_examples() {
        let clip: Vec<u32> = (1..=7).collect();
        assert_eq!(complete_expand(&clip, 2, 0).unwrap(), vec![1, 1, 2, 2, 3, 4, 5, 6, 7]);
        assert_eq!(complete_expand(&clip, 0, 0).unwrap(), clip);
        assert_eq!(complete_expand(&clip, 1, 0).unwrap(), vec![1, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(complete_expand(&clip, 0, 2).unwrap(), vec![1, 2, 3, 4, 5, 6, 6, 7, 7]);
        assert!(complete_expand(&[1, 2], 3, 0).is_err());
    }

    #[test]
    fn roll_examples() {
        let p = complete_roll(100, 50, 27, 3).unwrap();
        assert_eq!((p.target_offset, p.rolled), (13, false));
        let p = complete_roll(300, 3, 243, 30).unwrap();
        assert_eq!(p.frames, (0..243).collect::<Vec<_>>());
        assert_eq!((p.target_offset, p.rolled), (3, true));
        let p = complete_roll(300, 297, 243, 30).unwrap();
        assert_eq!(p.frames, (57..300).collect::<Vec<_>>());
        assert_eq!(p.target_offset, 240);
        // R = (T-1)/2 never rolls
        for t in 0..40 {
            assert!(!complete_roll(40, t, 27, 13).unwrap().rolled);
        }
        assert!(complete_roll(20, 3, 27, 3).is_err());
    }

    #[test]
    fn rotation_centers_target() {
        let p = complete_roll(100, 2, 9, 1).unwrap();
        let r = p.centered_rotation();
        assert_eq!(r[4], 2);
        let mut sorted = r.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, p.frames);
    }

    proptest! {
        #[test]
        fn every_strategy_returns_t_frames(v in 30usize..120, t_frac in 0.0f64..1.0, half in 1usize..13, r in 0usize..13) {
            let len = 2 * half + 1;
            let target = ((v as f64) * t_frac) as usize % v;
            let r = r.min(half);
            for mode in [CompletionMode::Edge, CompletionMode::Expand, CompletionMode::Roll] {
                let p = plan_clip(v, target, len, CompletionPolicy { mode, threshold: r }).unwrap();
                prop_assert_eq!(p.frames.len(), len);
                if mode != CompletionMode::Expand {
                    prop_assert_eq!(p.frames[p.target_offset], target);
                }
                // originally present frames survive, in order
                let w = window(v, target, len).unwrap();
                let mut dedup = p.frames.clone();
                dedup.dedup();
                if mode != CompletionMode::Roll || !p.rolled {
                    prop_assert_eq!(dedup, w.frames);
                } else {
                    // rolled clips hold only real, distinct frames
                    prop_assert_eq!(dedup.len(), len);
                    prop_assert!(p.frames.windows(2).all(|f| f[1] == f[0] + 1));
                }
            }
        }
    }
}
