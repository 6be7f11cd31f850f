use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Real, Result};

/// Named contiguous block of a [`ParamVector`], stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter storage plus the layout that names its pieces.
///
/// Segments are contiguous, disjoint, and cover `data` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T = f32> {
    data: Vec<T>,
    layout: Vec<Segment>,
}

impl<T: Real> ParamVector<T> {
    pub fn new(data: Vec<T>, layout: Vec<Segment>) -> Result<Self> {
        let mut next = 0;
        for seg in &layout {
            if seg.offset != next {
                return Err(Error::Dimensions(format!(
                    "segment {} starts at {} but previous segment ends at {}",
                    seg.name, seg.offset, next
                )));
            }
            next += seg.len();
        }
        if next != data.len() {
            return Err(Error::Dimensions(format!(
                "layout covers {} values but data has {}",
                next,
                data.len()
            )));
        }
        Ok(Self { data, layout })
    }

    pub fn zeros(layout: Vec<Segment>) -> Self {
        let len = layout.iter().map(Segment::len).sum();
        Self {
            data: alloc::vec![T::zero(); len],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn segment_data(&self, name: &str) -> Option<&[T]> {
        self.segment(name).map(|s| &self.data[s.offset..s.offset + s.len()])
    }

    pub fn segment_data_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let seg = self.segment(name)?.clone();
        Some(&mut self.data[seg.offset..seg.offset + seg.len()])
    }

    /// Appends `other` after `self`, prefixing its segment names.
    pub fn concat(mut self, other: &ParamVector<T>, prefix: &str) -> Self {
        let base = self.data.len();
        self.data.extend_from_slice(&other.data);
        for seg in &other.layout {
            self.layout.push(Segment {
                name: format!("{prefix}{}", seg.name),
                offset: base + seg.offset,
                rows: seg.rows,
                cols: seg.cols,
            });
        }
        self
    }

    /// Values in `offset..offset + len` as their own vector with a layout
    /// rebased to zero.
    pub fn slice(&self, offset: usize, len: usize) -> Result<Self> {
        let mut layout = Vec::new();
        for seg in &self.layout {
            if seg.offset >= offset && seg.offset + seg.len() <= offset + len {
                let mut s = seg.clone();
                s.offset -= offset;
                layout.push(s);
            }
        }
        Self::new(self.data[offset..offset + len].to_vec(), layout)
    }

    pub fn cast<U: Real>(&self) -> ParamVector<U> {
        ParamVector {
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            layout: self.layout.clone(),
        }
    }
}
