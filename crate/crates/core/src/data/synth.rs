use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::rng;

use super::{LabeledDataset, Normalization};

/// Placement of the class means in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeansLayout {
    /// Class `c` of `k` sits at angle `2 pi c / k` on a circle.
    Circle { radius: f32 },
    Explicit { means: Vec<[f32; 2]> },
}

impl MeansLayout {
    pub fn means(&self, num_classes: usize) -> Result<Vec<[f32; 2]>> {
        match self {
            MeansLayout::Circle { radius } => Ok((0..num_classes)
                .map(|c| {
                    let a = 2.0 * std::f64::consts::PI * c as f64 / num_classes as f64;
                    let r = f64::from(*radius);
                    [(r * a.cos()) as f32, (r * a.sin()) as f32]
                })
                .collect()),
            MeansLayout::Explicit { means } => {
                if means.len() != num_classes {
                    return Err(Error::invalid(
                        "means",
                        format!("{} means given for {num_classes} classes", means.len()),
                    ));
                }
                Ok(means.clone())
            }
        }
    }
}

/// Isotropic 2-D Gaussian classes, `n_per_class` points each, class-major
/// order.
pub fn synth_gaussians(
    num_classes: usize,
    n_per_class: usize,
    layout: &MeansLayout,
    sigma: f32,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes < 2 {
        return Err(Error::invalid("num_classes", format!("{num_classes} must be >= 2")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("{sigma} must be > 0")));
    }
    let means = layout.means(num_classes)?;
    let mut rng = rng::rng(seed);
    let mut inputs = Vec::with_capacity(num_classes * n_per_class);
    let mut labels = Vec::with_capacity(num_classes * n_per_class);
    for (c, m) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            let dx: f32 = StandardNormal.sample(&mut rng);
            let dy: f32 = StandardNormal.sample(&mut rng);
            inputs.push(Tensor::new(vec![2], vec![m[0] + sigma * dx, m[1] + sigma * dy])?);
            labels.push(c);
        }
    }
    let declared: Vec<usize> = (0..num_classes).collect();
    LabeledDataset::new(inputs, labels, &declared, Normalization::identity())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_classes_still_declared() {
        let d = synth_gaussians(3, 0, &MeansLayout::Circle { radius: 1.0 }, 0.5, 1).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.class_set(), &[0, 1, 2]);
    }

    #[test]
    fn sample_means_within_standard_error_bound() {
        let (n, sigma) = (400usize, 0.5f32);
        let layout = MeansLayout::Circle { radius: 3.0 };
        let d = synth_gaussians(4, n, &layout, sigma, 11).unwrap();
        let bound = 4.0 * f64::from(sigma) / (n as f64).sqrt();
        for (c, m) in layout.means(4).unwrap().iter().enumerate() {
            let pts: Vec<&Tensor> = d.iter().filter(|(_, y)| *y == c).map(|(x, _)| x).collect();
            for axis in 0..2 {
                let mean = pts.iter().map(|p| f64::from(p.data()[axis])).sum::<f64>() / n as f64;
                assert!((mean - f64::from(m[axis])).abs() <= bound, "class {c} axis {axis}");
            }
        }
    }

    #[test]
    fn seeded() {
        let l = MeansLayout::Circle { radius: 2.0 };
        assert_eq!(synth_gaussians(3, 5, &l, 0.3, 9).unwrap(), synth_gaussians(3, 5, &l, 0.3, 9).unwrap());
        assert_ne!(synth_gaussians(3, 5, &l, 0.3, 9).unwrap(), synth_gaussians(3, 5, &l, 0.3, 10).unwrap());
    }

    #[test]
    fn invalid_parameters() {
        let l = MeansLayout::Circle { radius: 2.0 };
        assert!(synth_gaussians(1, 5, &l, 0.3, 0).is_err());
        assert!(synth_gaussians(3, 5, &l, 0.0, 0).is_err());
        let e = MeansLayout::Explicit { means: vec![[0.0, 0.0]] };
        assert!(synth_gaussians(2, 5, &e, 0.3, 0).is_err());
    }
}
