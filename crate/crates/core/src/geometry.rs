//! Axis-aligned boxes in center/size form, IoU, and 2D affine transforms.

use crate::error::{Error, Result};

/// Axis-aligned box stored as center and size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting non-finite values and non-positive sizes.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox { cx, cy, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::DegenerateBox(format!("({cx}, {cy}, {w}, {h})")))
        }
    }

    /// Builds a box from its top-left corner and size.
    pub fn from_tlwh(left: f64, top: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(left + w / 2.0, top + h / 2.0, w, h)
    }

    pub fn is_valid(&self) -> bool {
        [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    /// Corners in the order top-left, top-right, bottom-right, bottom-left.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (l, t, r, b) = (self.left(), self.top(), self.right(), self.bottom());
        [[l, t], [r, t], [r, b], [l, b]]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        BoundingBox { cx: self.cx + dx, cy: self.cy + dy, ..*self }
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, zero for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Row-major 2x3 affine matrix; the bottom row is implicitly `0 0 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub m11: f64,
    pub m12: f64,
    pub m13: f64,
    pub m21: f64,
    pub m22: f64,
    pub m23: f64,
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform =
        AffineTransform { m11: 1.0, m12: 0.0, m13: 0.0, m21: 0.0, m22: 1.0, m23: 0.0 };

    pub fn new(coeffs: [f64; 6]) -> Result<Self> {
        let t = Self::from_coeffs(coeffs);
        if coeffs.iter().all(|v| v.is_finite()) && t.determinant() != 0.0 {
            Ok(t)
        } else {
            Err(Error::DegenerateCorrespondence)
        }
    }

    fn from_coeffs(c: [f64; 6]) -> Self {
        AffineTransform { m11: c[0], m12: c[1], m13: c[2], m21: c[3], m22: c[4], m23: c[5] }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        AffineTransform { m13: dx, m23: dy, ..Self::IDENTITY }
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        AffineTransform { m11: sx, m22: sy, ..Self::IDENTITY }
    }

    pub fn coeffs(&self) -> [f64; 6] {
        [self.m11, self.m12, self.m13, self.m21, self.m22, self.m23]
    }

    /// Determinant of the 2x2 linear part.
    pub fn determinant(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn is_shear_free(&self) -> bool {
        self.m12 == 0.0 && self.m21 == 0.0
    }

    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        [self.m11 * p[0] + self.m12 * p[1] + self.m13, self.m21 * p[0] + self.m22 * p[1] + self.m23]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        AffineTransform {
            m11: self.m11 * other.m11 + self.m12 * other.m21,
            m12: self.m11 * other.m12 + self.m12 * other.m22,
            m13: self.m11 * other.m13 + self.m12 * other.m23 + self.m13,
            m21: self.m21 * other.m11 + self.m22 * other.m21,
            m22: self.m21 * other.m12 + self.m22 * other.m22,
            m23: self.m21 * other.m13 + self.m22 * other.m23 + self.m23,
        }
    }

    pub fn max_abs_diff(&self, other: &AffineTransform) -> f64 {
        self.coeffs().iter().zip(other.coeffs().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Least-squares affine fit mapping `src` onto `dst`.
///
/// Each correspondence contributes the two DLT rows
/// `[x y 1 0 0 0] · m = x'` and `[0 0 0 x y 1] · m = y'`; the x and y
/// halves decouple, so the normal system splits into two 3x3 solves that
/// share the matrix `Σ [x y 1]ᵀ[x y 1]`.
pub fn solve_affine(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Result<AffineTransform> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::DegenerateCorrespondence);
    }
    let mut ata = [[0.0f64; 3]; 3];
    let mut atx = [0.0f64; 3];
    let mut aty = [0.0f64; 3];
    for (p, q) in src.iter().zip(dst) {
        let row = [p[0], p[1], 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atx[i] += row[i] * q[0];
            aty[i] += row[i] * q[1];
        }
    }
    let sx = solve3(ata, atx).ok_or(Error::DegenerateCorrespondence)?;
    let sy = solve3(ata, aty).ok_or(Error::DegenerateCorrespondence)?;
    AffineTransform::new([sx[0], sx[1], sx[2], sy[0], sy[1], sy[2]])
}

/// Gaussian elimination with partial pivoting; `None` when singular.
#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let tol = scale * 1e-12;
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let mut s = b[r];
        for c in r + 1..3 {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

/// Transform aligning `src` onto `dst`: per-axis scale plus translation.
///
/// Agrees with `solve_affine` over the four corresponding corners but is
/// computed in closed form so the mapping is exact.
pub fn box_to_affine(src: &BoundingBox, dst: &BoundingBox) -> AffineTransform {
    let sx = dst.w / src.w;
    let sy = dst.h / src.h;
    AffineTransform { m11: sx, m12: 0.0, m13: dst.cx - sx * src.cx, m21: 0.0, m22: sy, m23: dst.cy - sy * src.cy }
}

/// Transforms the four corners and returns their axis-aligned hull.
pub fn apply_affine(t: &AffineTransform, b: &BoundingBox) -> BoundingBox {
    let pts = b.corners().map(|c| t.apply_point(c));
    let (mut l, mut r) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut top, mut bot) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        l = l.min(p[0]);
        r = r.max(p[0]);
        top = top.min(p[1]);
        bot = bot.max(p[1]);
    }
    BoundingBox { cx: (l + r) / 2.0, cy: (top + bot) / 2.0, w: r - l, h: bot - top }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx, cy, w, h).unwrap()
    }

    fn assert_affine(t: &AffineTransform, expected: [f64; 6], eps: f64) {
        for (a, e) in t.coeffs().iter().zip(expected) {
            assert_abs_diff_eq!(*a, e, epsilon = eps);
        }
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(10.0, 10.0, 2.0, 2.0)), 0.0);
        assert_abs_diff_eq!(iou(&a, &bx(1.0, 1.0, 2.0, 2.0)), 1.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        assert_eq!(iou(&bx(0.0, 0.0, 2.0, 2.0), &bx(2.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn solve_affine_examples() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert_affine(&solve_affine(&tri, &tri).unwrap(), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0], 1e-12);

        let shifted = tri.map(|p| [p[0] + 3.0, p[1] - 2.0]);
        assert_affine(&solve_affine(&tri, &shifted).unwrap(), [1.0, 0.0, 3.0, 0.0, 1.0, -2.0], 1e-12);

        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let scaled = square.map(|p| [2.0 * p[0], 2.0 * p[1]]);
        assert_affine(&solve_affine(&square, &scaled).unwrap(), [2.0, 0.0, 0.0, 0.0, 2.0, 0.0], 1e-12);
    }

    #[test]
    fn solve_affine_rejects_collinear_and_short_input() {
        let line = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert!(matches!(solve_affine(&line, &line), Err(Error::DegenerateCorrespondence)));
        let two = [[0.0, 0.0], [1.0, 0.0]];
        assert!(solve_affine(&two, &two).is_err());
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(solve_affine(&tri, &tri[..2]).is_err());
    }

    #[test]
    fn solve_affine_least_squares_residual_is_minimal() {
        // dst is not affine-reachable; the fit must beat nearby perturbations.
        let src = [[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0], [2.0, 1.0]];
        let dst = [[0.1, 0.0], [4.0, 0.2], [3.9, 3.0], [0.0, 3.1], [2.3, 0.8]];
        let t = solve_affine(&src, &dst).unwrap();
        let cost = |t: &AffineTransform| -> f64 {
            src.iter()
                .zip(dst.iter())
                .map(|(p, q)| {
                    let r = t.apply_point(*p);
                    (r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2)
                })
                .sum()
        };
        let base = cost(&t);
        for k in 0..6 {
            for d in [-1e-3, 1e-3] {
                let mut c = t.coeffs();
                c[k] += d;
                assert!(cost(&AffineTransform::from_coeffs(c)) > base);
            }
        }
    }

    #[test]
    fn box_to_affine_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_affine(&box_to_affine(&a, &a), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0], 0.0);
        assert_affine(&box_to_affine(&a, &bx(5.0, 5.0, 4.0, 2.0)), [2.0, 0.0, 5.0, 0.0, 1.0, 5.0], 0.0);
        assert_affine(&box_to_affine(&bx(1.0, 1.0, 2.0, 2.0), &a), [1.0, 0.0, -1.0, 0.0, 1.0, -1.0], 0.0);
    }

    #[test]
    fn box_to_affine_matches_corner_fit() {
        let s = bx(12.5, -3.0, 7.0, 11.0);
        let d = bx(-4.0, 20.0, 3.5, 19.0);
        let fit = solve_affine(&s.corners(), &d.corners()).unwrap();
        assert!(fit.max_abs_diff(&box_to_affine(&s, &d)) < 1e-9);
    }

    #[test]
    fn apply_affine_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(apply_affine(&AffineTransform::IDENTITY, &a), a);
        assert_eq!(apply_affine(&AffineTransform::translation(3.0, -2.0), &a), bx(3.0, -2.0, 2.0, 2.0));
        assert_eq!(apply_affine(&AffineTransform::scale(2.0, 1.0), &bx(1.0, 0.0, 2.0, 2.0)), bx(2.0, 0.0, 4.0, 2.0));
    }

    #[test]
    fn apply_affine_hull_under_rotation() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let rot = AffineTransform { m11: r, m12: -r, m13: 0.0, m21: r, m22: r, m23: 0.0 };
        let out = apply_affine(&rot, &bx(0.0, 0.0, 2.0, 2.0));
        assert_abs_diff_eq!(out.w, 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(out.h, 2.0 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let t = AffineTransform::translation(1.0, 2.0);
        let s = AffineTransform::scale(3.0, 4.0);
        assert_eq!(t.compose(&s).apply_point([1.0, 1.0]), [4.0, 6.0]);
        assert_eq!(s.compose(&t).apply_point([1.0, 1.0]), [6.0, 12.0]);
    }
}
