//! Ground-plane points and SE(2) rigid transforms.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Sub};

/// A point in the ground plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Heading of the vector from the origin to this point.
    pub fn angle(&self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Point2 {
    type Output = Point2;

    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;

    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta % TAU;
    if t <= -PI {
        t += TAU;
    } else if t > PI {
        t -= TAU;
    }
    t
}

/// Smallest absolute difference between two headings.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// Rigid transform in the plane: rotate by `theta`, then translate by
/// `(tx, ty)`. `theta` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub tx: f64,
    pub ty: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 { tx: 0.0, ty: 0.0, theta: 0.0 };

    pub fn new(tx: f64, ty: f64, theta: f64) -> Self {
        Self { tx, ty, theta: normalize_angle(theta) }
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.tx, self.ty)
    }

    pub fn is_finite(&self) -> bool {
        self.tx.is_finite() && self.ty.is_finite() && self.theta.is_finite()
    }

    fn rotate(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(c * p.x - s * p.y, s * p.x + c * p.y)
    }

    /// `R(theta)·p + t`.
    pub fn apply(&self, p: Point2) -> Point2 {
        self.rotate(p) + self.translation()
    }

    /// The transform equivalent to applying `other` first, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.apply(other.translation());
        Pose2::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        // R(-theta)·(-t)
        let tx = -(c * self.tx + s * self.ty);
        let ty = -(-s * self.tx + c * self.ty);
        Pose2::new(tx, ty, -self.theta)
    }
}

/// Free-function form of [`Pose2::apply`].
pub fn apply(pose: &Pose2, p: Point2) -> Point2 {
    pose.apply(p)
}

/// Free-function form of [`Pose2::compose`].
pub fn compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

/// Free-function form of [`Pose2::inverse`].
pub fn inverse(a: &Pose2) -> Pose2 {
    a.inverse()
}
