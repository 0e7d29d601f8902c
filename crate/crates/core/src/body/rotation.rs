//! Axis-angle rotations (Rodrigues' formula) and their derivatives.
//!
//! With `K = [w]x` and `t = |w|`, `R = I + A(t) K + B(t) K^2` where
//! `A = sin t / t` and `B = (1 - cos t) / t^2`. The derivative uses
//! `C = A'(t) / t` and `D = B'(t) / t`. All four coefficients switch to Taylor
//! series near zero so the small-angle limit is evaluated without cancellation.

use nalgebra::{Matrix3, Vector3};

/// Below this angle the coefficients come from their Taylor series.
const SERIES_THRESHOLD: f64 = 5e-2;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

struct Coeffs {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

fn coeffs(t: f64) -> Coeffs {
    if t < SERIES_THRESHOLD {
        let t2 = t * t;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        Coeffs {
            a: 1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0,
            b: 0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0,
            c: -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0 + t6 / 45360.0,
            d: -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0 + t6 / 453600.0,
        }
    } else {
        let (s, co) = t.sin_cos();
        let t2 = t * t;
        Coeffs {
            a: s / t,
            b: (1.0 - co) / t2,
            c: (t * co - s) / (t2 * t),
            d: (t * s - 2.0 * (1.0 - co)) / (t2 * t2),
        }
    }
}

pub fn rodrigues(w: &Vector3<f64>) -> Matrix3<f64> {
    let k = coeffs(w.norm());
    let kx = skew(w);
    Matrix3::identity() + kx * k.a + kx * kx * k.b
}

/// Rotation matrix and its three partial derivatives `dR/dw_i`.
pub fn rodrigues_with_derivatives(w: &Vector3<f64>) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let k = coeffs(w.norm());
    let kx = skew(w);
    let kx2 = kx * kx;
    let r = Matrix3::identity() + kx * k.a + kx2 * k.b;
    let deriv = |i: usize| {
        let mut e = Vector3::zeros();
        e[i] = 1.0;
        let ex = skew(&e);
        ex * k.a + (ex * kx + kx * ex) * k.b + kx * (k.c * w[i]) + kx2 * (k.d * w[i])
    };
    (r, [deriv(0), deriv(1), deriv(2)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn identity_at_zero() {
        assert_eq!(rodrigues(&Vector3::zeros()), Matrix3::identity());
        let (_, d) = rodrigues_with_derivatives(&Vector3::zeros());
        for (i, di) in d.iter().enumerate() {
            let mut e = Vector3::zeros();
            e[i] = 1.0;
            assert_eq!(*di, skew(&e));
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues(&Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let v = r * Vector3::new(1.0, 2.0, 3.0);
        assert!(close(v.x, -2.0, 1e-14));
        assert!(close(v.y, 1.0, 1e-14));
        assert!(close(v.z, 3.0, 1e-14));
    }

    #[test]
    fn orthonormal_across_series_boundary() {
        for t in [1e-12, 1e-6, 2.5e-2, 4.99e-2, 5.01e-2, 0.3, 2.5] {
            let w = Vector3::new(0.3, -0.5, 0.81).normalize() * t;
            let r = rodrigues(&w);
            let e = (r.transpose() * r - Matrix3::identity()).abs().max();
            assert!(e < 1e-14, "t={t}: {e}");
            assert!(close(r.determinant(), 1.0, 1e-14));
        }
    }

    #[test]
    fn series_matches_closed_form_at_threshold() {
        let below = coeffs(SERIES_THRESHOLD * (1.0 - 1e-12));
        let above = coeffs(SERIES_THRESHOLD * (1.0 + 1e-12));
        assert!(close(below.a, above.a, 1e-12));
        assert!(close(below.b, above.b, 1e-12));
        assert!(close(below.c, above.c, 1e-11));
        assert!(close(below.d, above.d, 1e-11));
    }

    #[test]
    fn derivative_matches_central_differences() {
        let h = 1e-6;
        for w in [
            Vector3::new(0.2, -0.4, 0.7),
            Vector3::new(1e-3, 2e-3, -1e-3),
            Vector3::new(-1.9, 0.1, 1.2),
        ] {
            let (_, d) = rodrigues_with_derivatives(&w);
            for i in 0..3 {
                let mut wp = w;
                let mut wm = w;
                wp[i] += h;
                wm[i] -= h;
                let fd = (rodrigues(&wp) - rodrigues(&wm)) / (2.0 * h);
                assert!((fd - d[i]).abs().max() < 1e-8, "w={w:?} i={i}");
            }
        }
    }
}
