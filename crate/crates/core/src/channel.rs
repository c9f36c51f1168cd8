//! Reduction of a real 2x2 channel with a unit-ball peak constraint to the
//! identity channel with an elliptical input constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real 2x2 channel matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    pub entries: [[f64; 2]; 2],
}

impl ChannelMatrix {
    pub fn new(entries: [[f64; 2]; 2]) -> Result<Self> {
        if entries.iter().flatten().all(|v| v.is_finite()) {
            Ok(Self { entries })
        } else {
            Err(Error::NonFiniteMatrix)
        }
    }

    /// Singular values in descending order, in closed form from the
    /// characteristic polynomial of `h^T h`. The smaller value is recovered
    /// from the determinant identity `s1 * s2 = |det h|`, which avoids the
    /// cancellation in `(t - disc) / 2` for near-rank-deficient matrices.
    pub fn singular_values(&self) -> (f64, f64) {
        let [[a, b], [c, d]] = self.entries;
        let frob2 = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0).sqrt();
        let s1 = (0.5 * (frob2 + disc)).sqrt();
        let s2 = if s1 > 0.0 { det.abs() / s1 } else { 0.0 };
        (s1, s2)
    }

    /// Equivalent elliptical input constraint: radii are the singular values.
    pub fn reduce(&self) -> EllipseConstraint {
        let (s1, s2) = self.singular_values();
        EllipseConstraint::new(s1, s2).expect("singular values are ordered and finite")
    }
}

/// The reduced input region: points with
/// `x1^2 / r_p^2 + x2^2 / r_m^2 <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseConstraint {
    r_p: f64,
    r_m: f64,
}

impl EllipseConstraint {
    pub fn new(r_p: f64, r_m: f64) -> Result<Self> {
        if r_p.is_finite() && r_m.is_finite() && r_p >= r_m && r_m >= 0.0 {
            Ok(Self { r_p, r_m })
        } else {
            Err(Error::InvalidRadii { r_p, r_m })
        }
    }

    /// Primary (major) radius.
    pub fn r_p(&self) -> f64 {
        self.r_p
    }

    /// Minor radius.
    pub fn r_m(&self) -> f64 {
        self.r_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn matmul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    fn rotation(theta: f64) -> [[f64; 2]; 2] {
        let (s, c) = theta.sin_cos();
        [[c, -s], [s, c]]
    }

    /// Brute-force eigenvalues of h^T h by scanning the characteristic
    /// polynomial sign changes; independent of the closed form under test.
    fn brute_force_singular_values(h: [[f64; 2]; 2]) -> (f64, f64) {
        let [[a, b], [c, d]] = h;
        let g = [
            [a * a + c * c, a * b + c * d],
            [a * b + c * d, b * b + d * d],
        ];
        let poly = |l: f64| (g[0][0] - l) * (g[1][1] - l) - g[0][1] * g[1][0];
        let hi = g[0][0] + g[1][1] + 1.0;
        let mut roots = Vec::new();
        let steps = 4_000_000usize;
        let mut prev = poly(0.0);
        for i in 1..=steps {
            let l = hi * i as f64 / steps as f64;
            let cur = poly(l);
            if prev == 0.0 || prev.signum() != cur.signum() {
                // bisect inside the bracket
                let (mut lo, mut up) = (hi * (i - 1) as f64 / steps as f64, l);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + up);
                    if poly(lo).signum() == poly(mid).signum() {
                        lo = mid;
                    } else {
                        up = mid;
                    }
                }
                roots.push(0.5 * (lo + up));
            }
            prev = cur;
        }
        roots.sort_by(|a, b| b.total_cmp(a));
        match roots.len() {
            0 => (0.0, 0.0),
            1 => (roots[0].sqrt(), roots[0].sqrt()), // double root
            _ => (roots[0].sqrt(), roots[1].sqrt()),
        }
    }

    #[test]
    fn diagonal_and_rotation_cases() {
        let h = ChannelMatrix::new([[2.0, 0.0], [0.0, 0.5]]).unwrap();
        assert_eq!(h.singular_values(), (2.0, 0.5));
        for theta in [0.0, 0.3, 1.2, -2.0] {
            let r = ChannelMatrix::new(rotation(theta)).unwrap();
            let (s1, s2) = r.singular_values();
            assert!((s1 - 1.0).abs() < 1e-15);
            assert!((s2 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shear_matches_characteristic_polynomial_oracle() {
        let h = [[1.0, 1.0], [0.0, 1.0]];
        let (s1, s2) = ChannelMatrix::new(h).unwrap().singular_values();
        let want1 = ((3.0 + 5.0f64.sqrt()) / 2.0).sqrt();
        let want2 = ((3.0 - 5.0f64.sqrt()) / 2.0).sqrt();
        assert!((s1 - want1).abs() < 1e-14, "{s1} vs {want1}");
        assert!((s2 - want2).abs() < 1e-14, "{s2} vs {want2}");
        assert!((s1 - 1.61803).abs() < 1e-5);
        assert!((s2 - 0.61803).abs() < 1e-5);

        let (b1, b2) = brute_force_singular_values(h);
        assert!((s1 - b1).abs() < 1e-7);
        assert!((s2 - b2).abs() < 1e-7);
    }

    #[test]
    fn reduce_examples() {
        let id = ChannelMatrix::new([[1.0, 0.0], [0.0, 1.0]]).unwrap().reduce();
        assert_eq!((id.r_p(), id.r_m()), (1.0, 1.0));
        let d = ChannelMatrix::new([[1.2, 0.0], [0.0, 0.4]]).unwrap().reduce();
        assert!((d.r_p() - 1.2).abs() < 1e-15);
        assert!((d.r_m() - 0.4).abs() < 1e-15);
        let zero = ChannelMatrix::new([[0.0; 2]; 2]).unwrap().reduce();
        assert_eq!((zero.r_p(), zero.r_m()), (0.0, 0.0));
    }

    #[test]
    fn orthogonal_invariance_homogeneity_and_det_frobenius() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let h: [[f64; 2]; 2] = [
                [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
            ];
            let m = ChannelMatrix::new(h).unwrap();
            let (s1, s2) = m.singular_values();

            let ht = ChannelMatrix::new([[h[0][0], h[1][0]], [h[0][1], h[1][1]]]).unwrap();
            let (t1, t2) = ht.singular_values();
            assert!((s1 - t1).abs() < 1e-12 && (s2 - t2).abs() < 1e-12);

            let q = rotation(rng.gen_range(-3.0..3.0));
            let r = rotation(rng.gen_range(-3.0..3.0));
            let qhr = ChannelMatrix::new(matmul(matmul(q, h), r)).unwrap();
            let (u1, u2) = qhr.singular_values();
            assert!((s1 - u1).abs() < 1e-12 && (s2 - u2).abs() < 1e-12);

            let scale: f64 = rng.gen_range(-3.0..3.0);
            let sh = ChannelMatrix::new(h.map(|row| row.map(|v| scale * v)))
                .unwrap()
                .reduce();
            assert!((sh.r_p() - scale.abs() * s1).abs() < 1e-12);
            assert!((sh.r_m() - scale.abs() * s2).abs() < 1e-12);

            let det = (h[0][0] * h[1][1] - h[0][1] * h[1][0]).abs();
            let frob2: f64 = h.iter().flatten().map(|v| v * v).sum();
            assert!((s1 * s2 - det).abs() < 1e-12);
            assert!((s1 * s1 + s2 * s2 - frob2).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ChannelMatrix::new([[f64::NAN, 0.0], [0.0, 1.0]]).is_err());
        assert!(EllipseConstraint::new(0.5, 1.0).is_err());
        assert!(EllipseConstraint::new(1.0, -0.1).is_err());
        assert!(EllipseConstraint::new(f64::INFINITY, 0.0).is_err());
    }
}
