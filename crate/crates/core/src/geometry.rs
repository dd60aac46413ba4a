//! Axis-aligned boxes in relative center-size coordinates and the pairwise
//! localization costs built on them (l1, IoU, GIoU).

use crate::error::{MatchError, Result};

/// Axis-aligned bounding box in normalized center-size form.
///
/// `cx`, `cy` are the relative center coordinates in `[0, 1]`; `w`, `h` the
/// relative width and height in `(0, 1]`. Zero-area boxes are rejected at
/// construction so the cost functions never have to special-case them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        for (name, v) in [("cx", cx), ("cy", cy), ("w", w), ("h", h)] {
            if !v.is_finite() {
                return Err(MatchError::InvalidBox(format!("{name} = {v} is not finite")));
            }
        }
        if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
            return Err(MatchError::InvalidBox(format!(
                "center ({cx}, {cy}) outside [0,1]"
            )));
        }
        if w <= 0.0 || h <= 0.0 || w > 1.0 || h > 1.0 {
            return Err(MatchError::InvalidBox(format!(
                "size ({w}, {h}) outside (0,1]"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Corner form `(x0, y0, x1, y1)`, derived on demand.
    /// `w, h > 0` guarantees `x0 < x1` and `y0 < y1`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

// Intersection, union and areas all derive from the same corner form so
// that identical boxes give iou exactly 1.
fn overlap_terms(a: &BBox, b: &BBox) -> (f64, f64) {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    (inter, union)
}

/// Intersection over union, in `[0, 1]`. Returns 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (inter, union) = overlap_terms(a, b);
    inter / union
}

/// Generalized IoU: IoU minus the fraction of the enclosing hull not covered
/// by the union. Lies in `(-1, 1]` and equals IoU when the hull equals the
/// union.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let (inter, union) = overlap_terms(a, b);
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let hull = (ax1.max(bx1) - ax0.min(bx0)) * (ay1.max(by1) - ay0.min(by0));
    inter / union - (hull - union) / hull
}

/// l1 distance between the center-form coordinate vectors.
pub fn l1_box(a: &BBox, b: &BBox) -> f64 {
    (a.cx - b.cx).abs() + (a.cy - b.cy).abs() + (a.w - b.w).abs() + (a.h - b.h).abs()
}
