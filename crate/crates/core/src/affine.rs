//! 2-D affine maps on pixel coordinates.

use serde::{Deserialize, Serialize};

use crate::Point;

/// `x' = a·x + b·y + tx`, `y' = c·x + d·y + ty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0, tx: 0.0, ty: 0.0 };

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { tx, ty, ..Self::IDENTITY }
    }

    pub fn scaling(s: f64) -> Self {
        Self { a: s, d: s, ..Self::IDENTITY }
    }

    /// Rotation by `angle` radians (counter-clockwise on screen, since y points down
    /// this appears clockwise).
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { a: c, b: -s, c: s, d: c, tx: 0.0, ty: 0.0 }
    }

    /// Horizontal shear `x' = x + tan(angle)·y`.
    pub fn shear_x(angle: f64) -> Self {
        Self { b: angle.tan(), ..Self::IDENTITY }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Affine2) -> Affine2 {
        Affine2 {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
            tx: self.a * other.tx + self.b * other.ty + self.tx,
            ty: self.c * other.tx + self.d * other.ty + self.ty,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(self.a * p.x + self.b * p.y + self.tx, self.c * p.x + self.d * p.y + self.ty)
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn inverse(&self) -> Option<Affine2> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let (a, b, c, d) = (self.d / det, -self.b / det, -self.c / det, self.a / det);
        Some(Affine2 { a, b, c, d, tx: -(a * self.tx + b * self.ty), ty: -(c * self.tx + d * self.ty) })
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let m = Affine2::translation(3.0, -2.0)
            .compose(&Affine2::rotation(0.03))
            .compose(&Affine2::shear_x(0.05))
            .compose(&Affine2::scaling(0.9));
        let inv = m.inverse().unwrap();
        let p = Point::new(17.25, 101.5);
        let q = inv.apply(m.apply(p));
        assert!(p.distance(q) < 1e-12);
    }

    #[test]
    fn compose_order() {
        let t = Affine2::translation(1.0, 0.0);
        let s = Affine2::scaling(2.0);
        // scale first, then translate
        assert_eq!(t.compose(&s).apply(Point::new(1.0, 1.0)), Point::new(3.0, 2.0));
    }
}
