//! Scalars the linearization is generic over: plain `f64`, and a forward-mode
//! dual number carrying derivatives along six directions.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    fn re(self) -> f64;
    fn scale(self, k: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

/// `re + Σ du[j] ε_j` with `ε_i ε_j = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual6 {
    pub re: f64,
    pub du: [f64; 6],
}

impl Dual6 {
    /// The `j`-th coordinate variable at value `re`.
    pub fn var(re: f64, j: usize) -> Self {
        let mut du = [0.0; 6];
        du[j] = 1.0;
        Self { re, du }
    }
}

impl Real for Dual6 {
    #[inline]
    fn cst(x: f64) -> Self {
        Self { re: x, du: [0.0; 6] }
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Self {
            re: self.re * k,
            du: self.du.map(|d| d * k),
        }
    }
}

impl Add for Dual6 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            re: self.re + o.re,
            du: std::array::from_fn(|j| self.du[j] + o.du[j]),
        }
    }
}

impl Sub for Dual6 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self {
            re: self.re - o.re,
            du: std::array::from_fn(|j| self.du[j] - o.du[j]),
        }
    }
}

impl Mul for Dual6 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self {
            re: self.re * o.re,
            du: std::array::from_fn(|j| self.du[j] * o.re + self.re * o.du[j]),
        }
    }
}

impl Div for Dual6 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.re;
        let q = self.re * inv;
        Self {
            re: q,
            du: std::array::from_fn(|j| (self.du[j] - q * o.du[j]) * inv),
        }
    }
}

impl Neg for Dual6 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

pub type V3<T> = [T; 3];
pub type M3<T> = [[T; 3]; 3];

#[inline]
pub fn mat_vec<T: Real>(m: &M3<T>, v: &V3<T>) -> V3<T> {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

#[inline]
pub fn mat_t_vec<T: Real>(m: &M3<T>, v: &V3<T>) -> V3<T> {
    std::array::from_fn(|i| m[0][i] * v[0] + m[1][i] * v[1] + m[2][i] * v[2])
}

#[inline]
pub fn mat_mul_t<T: Real>(a: &M3<T>, b: &M3<T>) -> M3<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[j][0] + a[i][1] * b[j][1] + a[i][2] * b[j][2]))
}

#[inline]
pub fn cross<T: Real>(a: &V3<T>, b: &V3<T>) -> V3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn add3<T: Real>(a: &V3<T>, b: &V3<T>) -> V3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Solves the symmetric positive definite system `a x = b` by `LDLᵀ`.
/// `None` when a pivot is not positive or the result is not finite.
pub fn solve_spd<T: Real, const N: usize>(a: &[[T; N]; N], b: &[T; N]) -> Option<[T; N]> {
    let mut l = [[T::cst(0.0); N]; N];
    let mut d = [T::cst(0.0); N];
    let scale = (0..N).map(|i| a[i][i].re().abs()).fold(0.0, f64::max);
    for j in 0..N {
        let mut dj = a[j][j];
        for k in 0..j {
            dj = dj - l[j][k] * l[j][k] * d[k];
        }
        if !(dj.re() > 1e-14 * scale && dj.re().is_finite()) {
            return None;
        }
        d[j] = dj;
        l[j][j] = T::cst(1.0);
        for i in j + 1..N {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k] * d[k];
            }
            l[i][j] = s / dj;
        }
    }
    let mut y = *b;
    for i in 0..N {
        for k in 0..i {
            y[i] = y[i] - l[i][k] * y[k];
        }
    }
    for i in 0..N {
        y[i] = y[i] / d[i];
    }
    for i in (0..N).rev() {
        for k in i + 1..N {
            y[i] = y[i] - l[k][i] * y[k];
        }
    }
    y.iter().all(|v| v.re().is_finite()).then_some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix6, Vector6};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dual_quotient_rule() {
        let x = Dual6::var(2.0, 0);
        let y = Dual6::var(3.0, 1);
        let f = (x * x + Dual6::cst(1.0)) / y;
        assert!((f.re - 5.0 / 3.0).abs() < 1e-15);
        assert!((f.du[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((f.du[1] + 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn ldlt_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let a = m * m.transpose() + Matrix6::identity() * 0.1;
        let b = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let arr: [[f64; 6]; 6] = std::array::from_fn(|i| std::array::from_fn(|j| a[(i, j)]));
        let x = solve_spd(&arr, &std::array::from_fn(|i| b[i])).unwrap();
        let want = a.lu().solve(&b).unwrap();
        for i in 0..6 {
            assert!((x[i] - want[i]).abs() < 1e-10);
        }
        let singular = [[1.0, 1.0], [1.0, 1.0]];
        assert!(solve_spd(&singular, &[1.0, 0.0]).is_none());
    }
}
