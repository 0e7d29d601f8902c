use crate::body::Joints3D;
use crate::{Error, Result};
use nalgebra::{Matrix3, Vector3};

/// `x -> scale * rotation * x + translation` with a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x * self.scale + self.translation
    }

    /// Sum of squared distances between the transformed `pred` and `gt`.
    pub fn residual(&self, pred: &Joints3D, gt: &Joints3D) -> f64 {
        pred.points
            .iter()
            .zip(&gt.points)
            .map(|(p, g)| (self.apply(&Vector3::from(*p)) - Vector3::from(*g)).norm_squared())
            .sum()
    }
}

fn centered(points: &[[f64; 3]]) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| Vector3::from(*p)).sum::<Vector3<f64>>() / n;
    (mean, points.iter().map(|p| Vector3::from(*p) - mean).collect())
}

fn check_rank(points: &[Vector3<f64>], what: &str) -> Result<()> {
    let scatter: Matrix3<f64> = points.iter().map(|p| p * p.transpose()).sum();
    let sv = scatter.singular_values();
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    if s[0] <= 0.0 || s[1] <= 1e-12 * s[0] {
        return Err(Error::Degenerate(format!("{what} points span fewer than two dimensions")));
    }
    Ok(())
}

/// Least-squares similarity transform taking `pred` onto `gt` (Umeyama's
/// closed form), with the rotation restricted to `det = +1`.
pub fn procrustes_align(pred: &Joints3D, gt: &Joints3D) -> Result<SimilarityTransform> {
    if pred.len() != gt.len() {
        return Err(Error::dim("joint count", gt.len(), pred.len()));
    }
    if pred.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 points, got {}", pred.len())));
    }
    let (mu_p, xs) = centered(&pred.points);
    let (mu_g, ys) = centered(&gt.points);
    check_rank(&xs, "predicted")?;
    check_rank(&ys, "ground-truth")?;

    let n = xs.len() as f64;
    let cov: Matrix3<f64> = xs.iter().zip(&ys).map(|(x, y)| y * x.transpose()).sum::<Matrix3<f64>>() / n;
    let var_p: f64 = xs.iter().map(|x| x.norm_squared()).sum::<f64>() / n;

    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let d = svd.singular_values;
    let sign = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let weakest = (0..3).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
    let mut flip = Vector3::new(1.0, 1.0, 1.0);
    flip[weakest] = sign;
    let rotation = u * Matrix3::from_diagonal(&flip) * v_t;
    let scale = d.dot(&flip) / var_p;
    let translation = mu_g - rotation * mu_p * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}
