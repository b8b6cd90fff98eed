//! Second-order jets of bivariate functions.

use std::ops::{Add, Mul, Neg, Sub};

/// Value, gradient and Hessian of a scalar function of `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub du: f64,
    pub dv: f64,
    pub duu: f64,
    pub duv: f64,
    pub dvv: f64,
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Jet2 {
            v,
            ..Default::default()
        }
    }

    /// Jet of the coordinate function `u` (index 0) or `v` (index 1).
    pub fn coordinate(s: [f64; 2], index: usize) -> Self {
        let mut j = Jet2::constant(s[index]);
        if index == 0 {
            j.du = 1.0;
        } else {
            j.dv = 1.0;
        }
        j
    }

    pub fn scale(self, s: f64) -> Self {
        Jet2 {
            v: self.v * s,
            du: self.du * s,
            dv: self.dv * s,
            duu: self.duu * s,
            duv: self.duv * s,
            dvv: self.dvv * s,
        }
    }

    pub fn powi(self, r: u32) -> Self {
        match r {
            0 => Jet2::constant(1.0),
            1 => self,
            _ => {
                let rf = r as f64;
                let f = self.v;
                let p1 = rf * f.powi(r as i32 - 1);
                let p2 = rf * (rf - 1.0) * f.powi(r as i32 - 2);
                Jet2 {
                    v: f.powi(r as i32),
                    du: p1 * self.du,
                    dv: p1 * self.dv,
                    duu: p2 * self.du * self.du + p1 * self.duu,
                    duv: p2 * self.du * self.dv + p1 * self.duv,
                    dvv: p2 * self.dv * self.dv + p1 * self.dvv,
                }
            }
        }
    }

    pub fn recip(self) -> Self {
        let f = self.v;
        let p1 = -1.0 / (f * f);
        let p2 = 2.0 / (f * f * f);
        Jet2 {
            v: 1.0 / f,
            du: p1 * self.du,
            dv: p1 * self.dv,
            duu: p2 * self.du * self.du + p1 * self.duu,
            duv: p2 * self.du * self.dv + p1 * self.duv,
            dvv: p2 * self.dv * self.dv + p1 * self.dvv,
        }
    }

    /// Chain rule: `self` holds the derivatives of an outer function `f(s, t)`
    /// at `(s, t)`; the result is the jet of `f(s(u,v), t(u,v))`.
    pub fn compose(self, s: &Jet2, t: &Jet2) -> Jet2 {
        let (fs, ft, fss, fst, ftt) = (self.du, self.dv, self.duu, self.duv, self.dvv);
        Jet2 {
            v: self.v,
            du: fs * s.du + ft * t.du,
            dv: fs * s.dv + ft * t.dv,
            duu: fss * s.du * s.du + 2.0 * fst * s.du * t.du + ftt * t.du * t.du
                + fs * s.duu
                + ft * t.duu,
            duv: fss * s.du * s.dv + fst * (s.du * t.dv + s.dv * t.du) + ftt * t.du * t.dv
                + fs * s.duv
                + ft * t.duv,
            dvv: fss * s.dv * s.dv + 2.0 * fst * s.dv * t.dv + ftt * t.dv * t.dv
                + fs * s.dvv
                + ft * t.dvv,
        }
    }

    pub fn gradient(&self) -> [f64; 2] {
        [self.du, self.dv]
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            du: self.du + o.du,
            dv: self.dv + o.dv,
            duu: self.duu + o.duu,
            duv: self.duv + o.duv,
            dvv: self.dvv + o.dvv,
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            du: self.du * o.v + self.v * o.du,
            dv: self.dv * o.v + self.v * o.dv,
            duu: self.duu * o.v + 2.0 * self.du * o.du + self.v * o.duu,
            duv: self.duv * o.v + self.du * o.dv + self.dv * o.du + self.v * o.duv,
            dvv: self.dvv * o.v + 2.0 * self.dv * o.dv + self.v * o.dvv,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_power_agree() {
        let s = [0.3, -0.7];
        let u = Jet2::coordinate(s, 0);
        let v = Jet2::coordinate(s, 1);
        let f = u * u + v * u.scale(3.0) + Jet2::constant(1.0);
        let cube = f * f * f;
        let p = f.powi(3);
        for (a, b) in [
            (cube.v, p.v),
            (cube.du, p.du),
            (cube.duv, p.duv),
            (cube.dvv, p.dvv),
        ] {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reciprocal_times_self_is_one() {
        let s = [1.3, 0.4];
        let u = Jet2::coordinate(s, 0);
        let v = Jet2::coordinate(s, 1);
        let f = u * v + Jet2::constant(2.0);
        let one = f * f.recip();
        assert!((one.v - 1.0).abs() < 1e-14);
        assert!(one.du.abs() < 1e-14 && one.duu.abs() < 1e-13 && one.duv.abs() < 1e-13);
    }

    #[test]
    fn compose_with_identity() {
        let s = [0.2, 0.9];
        let u = Jet2::coordinate(s, 0);
        let v = Jet2::coordinate(s, 1);
        // outer f(s,t) = s^2 t evaluated through identity
        let outer = Jet2 {
            v: s[0] * s[0] * s[1],
            du: 2.0 * s[0] * s[1],
            dv: s[0] * s[0],
            duu: 2.0 * s[1],
            duv: 2.0 * s[0],
            dvv: 0.0,
        };
        let c = outer.compose(&u, &v);
        assert_eq!(c, outer);
    }
}
