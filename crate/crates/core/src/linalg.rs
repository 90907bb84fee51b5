//! Fixed 2-vectors and 2x2 matrices over a generic [`Scalar`].

use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2<T>(pub [T; 2]);

/// Row-major 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T: Scalar> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Vec2([x, y])
    }

    pub fn zero() -> Self {
        Vec2([T::zero(), T::zero()])
    }

    pub fn splat(v: T) -> Self {
        Vec2([v, v])
    }

    pub fn dot(self, other: Self) -> T {
        self.0[0] * other.0[0] + self.0[1] * other.0[1]
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn scale(self, k: T) -> Self {
        Vec2([self.0[0] * k, self.0[1] * k])
    }

    /// Elementwise product.
    pub fn hadamard(self, other: Self) -> Self {
        Vec2([self.0[0] * other.0[0], self.0[1] * other.0[1]])
    }

    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Vec2([f(self.0[0]), f(self.0[1])])
    }

    pub fn cast<U: Scalar>(self, f: impl Fn(T) -> U) -> Vec2<U> {
        Vec2([f(self.0[0]), f(self.0[1])])
    }

    pub fn max_abs(self) -> T {
        self.0[0].abs().max_of(self.0[1].abs())
    }
}

impl<T: Scalar> Mat2<T> {
    pub fn new(m00: T, m01: T, m10: T, m11: T) -> Self {
        Mat2([[m00, m01], [m10, m11]])
    }

    pub fn from_rows(r0: Vec2<T>, r1: Vec2<T>) -> Self {
        Mat2([r0.0, r1.0])
    }

    pub fn zero() -> Self {
        Mat2([[T::zero(); 2]; 2])
    }

    pub fn identity() -> Self {
        Mat2([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    pub fn diag(d: Vec2<T>) -> Self {
        Mat2([[d.0[0], T::zero()], [T::zero(), d.0[1]]])
    }

    pub fn row(&self, i: usize) -> Vec2<T> {
        Vec2(self.0[i])
    }

    pub fn col(&self, j: usize) -> Vec2<T> {
        Vec2([self.0[0][j], self.0[1][j]])
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.0[i][j]
    }

    pub fn transpose(&self) -> Self {
        Mat2([[self.0[0][0], self.0[1][0]], [self.0[0][1], self.0[1][1]]])
    }

    pub fn det(&self) -> T {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1]
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == T::zero() {
            return None;
        }
        let [[a, b], [c, e]] = self.0;
        Some(Mat2([[e / d, -b / d], [-c / d, a / d]]))
    }

    pub fn mul_vec(&self, v: Vec2<T>) -> Vec2<T> {
        Vec2([self.row(0).dot(v), self.row(1).dot(v)])
    }

    /// `selfᵀ v` without materializing the transpose.
    pub fn tr_mul_vec(&self, v: Vec2<T>) -> Vec2<T> {
        Vec2([self.col(0).dot(v), self.col(1).dot(v)])
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|x| x * k)
    }

    /// Scales row `i` by `v_i` (the vector-matrix Hadamard product).
    pub fn scale_rows(&self, v: Vec2<T>) -> Self {
        Mat2([
            [self.0[0][0] * v.0[0], self.0[0][1] * v.0[0]],
            [self.0[1][0] * v.0[1], self.0[1][1] * v.0[1]],
        ])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Mat2([
            [f(self.0[0][0]), f(self.0[0][1])],
            [f(self.0[1][0]), f(self.0[1][1])],
        ])
    }

    pub fn cast<U: Scalar>(&self, f: impl Fn(T) -> U) -> Mat2<U> {
        Mat2([
            [f(self.0[0][0]), f(self.0[0][1])],
            [f(self.0[1][0]), f(self.0[1][1])],
        ])
    }

    pub fn max_abs(&self) -> T {
        self.row(0).max_abs().max_of(self.row(1).max_abs())
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> T {
        self.row(0).norm_sq() + self.row(1).norm_sq()
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec2([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec2([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec2([-self.0[0], -self.0[1]])
    }
}

impl<T: Scalar> Add for Mat2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Mat2([
            [self.0[0][0] + o.0[0][0], self.0[0][1] + o.0[0][1]],
            [self.0[1][0] + o.0[1][0], self.0[1][1] + o.0[1][1]],
        ])
    }
}

impl<T: Scalar> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Mat2([
            [self.0[0][0] - o.0[0][0], self.0[0][1] - o.0[0][1]],
            [self.0[1][0] - o.0[1][0], self.0[1][1] - o.0[1][1]],
        ])
    }
}

impl<T: Scalar> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let c0 = o.col(0);
        let c1 = o.col(1);
        Mat2([
            [self.row(0).dot(c0), self.row(0).dot(c1)],
            [self.row(1).dot(c0), self.row(1).dot(c1)],
        ])
    }
}

impl<T: Scalar> Mul<Vec2<T>> for Mat2<T> {
    type Output = Vec2<T>;
    fn mul(self, v: Vec2<T>) -> Vec2<T> {
        self.mul_vec(v)
    }
}
