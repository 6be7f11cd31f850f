//! GOP partitioning, keyframe placement and reference assignment.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefMode {
    /// Each frame references the reconstruction one step closer to the
    /// keyframe.
    SingleRef,
    /// Each frame references its own keyframe and the keyframe of the
    /// neighboring GOP on its side.
    MultiRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyPlacement {
    /// `floor((first + last) / 2)`.
    #[default]
    Middle,
    /// First frame of the GOP; only used to compare placements.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gop {
    pub first: usize,
    pub last: usize,
    pub key: usize,
}

impl Gop {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.first..=self.last).contains(&frame)
    }

    pub fn frames(&self) -> core::ops::RangeInclusive<usize> {
        self.first..=self.last
    }

    /// Normalized time in `[-1, 1]` of a (possibly fractional) frame time.
    /// Each frame owns a unit cell, so frame `i` maps to the center of cell
    /// `i - first` and the GOP covers `[first - 0.5, last + 0.5]`.
    pub fn normalized_time(&self, time: f64) -> f64 {
        let len = self.len() as f64;
        (2.0 * (time - self.first as f64) + 1.0) / len - 1.0
    }

    /// Non-key frames ordered by distance from the keyframe, nearest first,
    /// earlier frame first on ties.
    pub fn frames_by_distance(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.frames().filter(|f| *f != self.key).collect();
        v.sort_by_key(|f| (f.abs_diff(self.key), *f));
        v
    }
}

/// What a frame is rebuilt from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameRefs {
    /// Stored directly.
    Key,
    /// Reconstruction of another frame (single-reference chain).
    Chain { reference: usize },
    /// Own keyframe plus, when one exists, the neighboring GOP's keyframe.
    Keys { own: usize, other: Option<usize> },
}

impl FrameRefs {
    pub fn count(&self) -> usize {
        match self {
            FrameRefs::Key => 0,
            FrameRefs::Chain { .. } => 1,
            FrameRefs::Keys { other: None, .. } => 1,
            FrameRefs::Keys { other: Some(_), .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GopPlan {
    pub gops: Vec<Gop>,
    pub mode: RefMode,
    pub refs: Vec<FrameRefs>,
}

impl GopPlan {
    pub fn frame_count(&self) -> usize {
        self.refs.len()
    }

    pub fn gop_of(&self, frame: usize) -> Option<usize> {
        self.gops.iter().position(|g| g.contains(frame))
    }

    pub fn keyframes(&self) -> Vec<usize> {
        self.gops.iter().map(|g| g.key).collect()
    }

    /// GOP owning a fractional time: the one whose cell span
    /// `[first - 0.5, last + 0.5)` contains it.
    pub fn gop_at_time(&self, time: f64) -> Option<usize> {
        let n = self.frame_count() as f64;
        if !(0.0..=n - 1.0).contains(&time) {
            return None;
        }
        self.gops
            .iter()
            .position(|g| time >= g.first as f64 - 0.5 && time < g.last as f64 + 0.5)
    }
}

pub fn plan_gops(frame_count: usize, gop_size: usize, mode: RefMode) -> Result<GopPlan> {
    plan_gops_with(frame_count, gop_size, mode, KeyPlacement::Middle)
}

pub fn plan_gops_with(frame_count: usize, gop_size: usize, mode: RefMode, placement: KeyPlacement) -> Result<GopPlan> {
    if gop_size < 2 {
        return Err(Error::InvalidConfig(format!(
            "GOP size must be at least 2, got {gop_size}"
        )));
    }
    if frame_count == 0 {
        return Err(Error::InvalidConfig("video has no frames".into()));
    }
    let mut gops = Vec::new();
    let mut first = 0;
    while first < frame_count {
        let last = (first + gop_size - 1).min(frame_count - 1);
        let key = match placement {
            KeyPlacement::Middle => (first + last) / 2,
            KeyPlacement::First => first,
        };
        gops.push(Gop { first, last, key });
        first = last + 1;
    }
    let mut refs = Vec::with_capacity(frame_count);
    for (gi, g) in gops.iter().enumerate() {
        for f in g.frames() {
            let r = if f == g.key {
                FrameRefs::Key
            } else {
                match mode {
                    RefMode::SingleRef => FrameRefs::Chain {
                        reference: if f < g.key { f + 1 } else { f - 1 },
                    },
                    RefMode::MultiRef => {
                        let other = if f < g.key {
                            gi.checked_sub(1).map(|p| gops[p].key)
                        } else {
                            gops.get(gi + 1).map(|n| n.key)
                        };
                        FrameRefs::Keys { own: g.key, other }
                    }
                }
            };
            refs.push(r);
        }
    }
    Ok(GopPlan { gops, mode, refs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ten_frames_gop_five() {
        let p = plan_gops(10, 5, RefMode::SingleRef).unwrap();
        assert_eq!(
            p.gops,
            vec![
                Gop {
                    first: 0,
                    last: 4,
                    key: 2
                },
                Gop {
                    first: 5,
                    last: 9,
                    key: 7
                }
            ]
        );
    }

    #[test]
    fn multi_ref_neighbors() {
        let p = plan_gops(10, 5, RefMode::MultiRef).unwrap();
        assert_eq!(p.refs[3], FrameRefs::Keys { own: 2, other: Some(7) });
        assert_eq!(p.refs[6], FrameRefs::Keys { own: 7, other: Some(2) });
        assert_eq!(p.refs[0], FrameRefs::Keys { own: 2, other: None });
        assert_eq!(p.refs[9], FrameRefs::Keys { own: 7, other: None });
        assert_eq!(p.refs[2], FrameRefs::Key);
    }

    #[test]
    fn single_ref_chain_toward_key() {
        let p = plan_gops(10, 5, RefMode::SingleRef).unwrap();
        assert_eq!(p.refs[0], FrameRefs::Chain { reference: 1 });
        assert_eq!(p.refs[1], FrameRefs::Chain { reference: 2 });
        assert_eq!(p.refs[4], FrameRefs::Chain { reference: 3 });
    }

    #[test]
    fn short_final_gop() {
        let p = plan_gops(7, 5, RefMode::SingleRef).unwrap();
        assert_eq!(
            p.gops[1],
            Gop {
                first: 5,
                last: 6,
                key: 5
            }
        );
        let p = plan_gops(1, 3, RefMode::MultiRef).unwrap();
        assert_eq!(
            p.gops,
            vec![Gop {
                first: 0,
                last: 0,
                key: 0
            }]
        );
    }

    #[test]
    fn invalid_sizes() {
        assert!(plan_gops(10, 1, RefMode::SingleRef).is_err());
        assert!(plan_gops(0, 5, RefMode::SingleRef).is_err());
    }

    #[test]
    fn first_placement() {
        let p = plan_gops_with(9, 9, RefMode::SingleRef, KeyPlacement::First).unwrap();
        assert_eq!(p.gops[0].key, 0);
        assert_eq!(p.refs[8], FrameRefs::Chain { reference: 7 });
    }

    #[test]
    fn normalized_time_cells() {
        let g = Gop {
            first: 5,
            last: 9,
            key: 7,
        };
        assert!((g.normalized_time(7.0)).abs() < 1e-12);
        assert!((g.normalized_time(5.0) + 0.8).abs() < 1e-12);
        assert!((g.normalized_time(4.5) + 1.0).abs() < 1e-12);
        assert!((g.normalized_time(9.5) - 1.0).abs() < 1e-12);
        let p = plan_gops(10, 5, RefMode::MultiRef).unwrap();
        assert_eq!(p.gop_at_time(4.49), Some(0));
        assert_eq!(p.gop_at_time(4.5), Some(1));
        assert_eq!(p.gop_at_time(9.0), Some(1));
        assert_eq!(p.gop_at_time(9.1), None);
    }
}
