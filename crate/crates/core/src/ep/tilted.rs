use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::sigmoid;

/// Moments of the tilted distribution `cavity(w, gamma) p(w | gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedMoments {
    /// `log Z_slab - log Z_spike`.
    pub z_ratio_log: f64,
    pub mean: f64,
    pub var: f64,
    /// Tilted probability of the slab component.
    pub p_slab: f64,
}

/// Closed-form moments for a Gaussian cavity `N(mean, var)` on `w`, a
/// Bernoulli cavity with logit `logit_rho` on `gamma`, and the spike-and-slab
/// factor with slab variance `psi2`.
pub fn spike_slab_tilted_moments(
    cavity_mean: f64,
    cavity_var: f64,
    cavity_logit_rho: f64,
    psi2: f64,
) -> Result<TiltedMoments> {
    if !(cavity_mean.is_finite()
        && cavity_var.is_finite()
        && cavity_logit_rho.is_finite()
        && psi2.is_finite())
    {
        return Err(Error::NonFinite(format!(
            "tilted moments of ({cavity_mean}, {cavity_var}, {cavity_logit_rho}, {psi2})"
        )));
    }
    if cavity_var <= 0.0 || psi2 < 0.0 {
        return Err(Error::NonFinite(format!(
            "cavity variance {cavity_var} and slab variance {psi2} must be positive"
        )));
    }
    let total = cavity_var + psi2;
    // log N(m | 0, v + psi2) - log N(m | 0, v)
    let z_ratio_log = -0.5 * (psi2 / cavity_var).ln_1p()
        + 0.5 * cavity_mean * cavity_mean * psi2 / (cavity_var * total);
    let p_slab = sigmoid(cavity_logit_rho + z_ratio_log);
    let shrink = psi2 / total;
    let slab_mean = cavity_mean * shrink;
    let slab_var = cavity_var * shrink;
    let mean = p_slab * slab_mean;
    let var = (p_slab * (slab_var + slab_mean * slab_mean) - mean * mean).max(0.0);
    Ok(TiltedMoments {
        z_ratio_log,
        mean,
        var,
        p_slab,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Composite Simpson over [-20, 20] for the slab part; the spike part is a
    /// point mass at zero that adds to the normaliser only.
    fn quadrature(cm: f64, cv: f64, logit: f64, psi2: f64) -> TiltedMoments {
        let gauss = |x: f64, m: f64, v: f64| {
            (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
        };
        let steps = 40_000;
        let (a, b) = (-20.0f64, 20.0f64);
        let step = (b - a) / steps as f64;
        let (mut z1, mut m1, mut s1) = (0.0, 0.0, 0.0);
        for k in 0..=steps {
            let w = a + k as f64 * step;
            let weight = if k == 0 || k == steps {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let f = gauss(w, cm, cv) * gauss(w, 0.0, psi2);
            z1 += weight * f;
            m1 += weight * f * w;
            s1 += weight * f * w * w;
        }
        let scale = step / 3.0;
        let (z1, m1, s1) = (z1 * scale, m1 * scale, s1 * scale);
        let z0 = gauss(0.0, cm, cv);
        let rho = sigmoid(logit);
        let total = rho * z1 + (1.0 - rho) * z0;
        let mean = rho * m1 / total;
        TiltedMoments {
            z_ratio_log: z1.ln() - z0.ln(),
            mean,
            var: rho * s1 / total - mean * mean,
            p_slab: rho * z1 / total,
        }
    }

    #[test]
    fn symmetric_reference_point() {
        let t = spike_slab_tilted_moments(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!((t.p_slab - 0.414_213_562_373_095).abs() < 1e-12);
        assert!((t.z_ratio_log + 0.346_573_590_279_972_6).abs() < 1e-12);
        assert_eq!(t.mean, 0.0);
        let q = quadrature(0.0, 1.0, 0.0, 1.0);
        assert!((q.p_slab - t.p_slab).abs() < 1e-9);
        assert!((q.var - t.var).abs() < 1e-9);
    }

    #[test]
    fn vanishing_slab_collapses_to_spike() {
        let t = spike_slab_tilted_moments(1.3, 0.7, 0.4, 1e-14).unwrap();
        assert!((t.p_slab - sigmoid(0.4)).abs() < 1e-10);
        assert!(t.mean.abs() < 1e-12);
        assert!(t.var.abs() < 1e-12);
    }

    #[test]
    fn off_centre_matches_quadrature() {
        let t = spike_slab_tilted_moments(2.0, 0.5, 0.0, 1.0).unwrap();
        let q = quadrature(2.0, 0.5, 0.0, 1.0);
        assert!((t.mean - q.mean).abs() < 1e-8);
        assert!((t.var - q.var).abs() < 1e-8);
        assert!((t.p_slab - q.p_slab).abs() < 1e-8);
        assert!((t.z_ratio_log - q.z_ratio_log).abs() < 1e-8);
    }

    #[test]
    fn grid_matches_quadrature() {
        for cm in -3..=3 {
            for cv in [0.1, 1.0, 10.0] {
                for logit in [-2.0, 0.0, 2.0] {
                    for psi2 in [0.01, 1.0] {
                        let t = spike_slab_tilted_moments(cm as f64, cv, logit, psi2).unwrap();
                        let q = quadrature(cm as f64, cv, logit, psi2);
                        for (a, b) in [
                            (t.mean, q.mean),
                            (t.var, q.var),
                            (t.p_slab, q.p_slab),
                            (t.z_ratio_log, q.z_ratio_log),
                        ] {
                            assert!((a - b).abs() < 1e-8, "{cm} {cv} {logit} {psi2}: {a} vs {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(spike_slab_tilted_moments(f64::NAN, 1.0, 0.0, 1.0).is_err());
        assert!(spike_slab_tilted_moments(0.0, f64::INFINITY, 0.0, 1.0).is_err());
        assert!(spike_slab_tilted_moments(0.0, 1.0, f64::NEG_INFINITY, 1.0).is_err());
        assert!(spike_slab_tilted_moments(0.0, -1.0, 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn moments_are_valid(cm in -10.0..10.0f64, cv in 1e-3..100.0f64,
                             logit in -8.0..8.0f64, psi2 in 1e-4..10.0f64) {
            let t = spike_slab_tilted_moments(cm, cv, logit, psi2).unwrap();
            prop_assert!(t.var >= 0.0);
            prop_assert!((0.0..=1.0).contains(&t.p_slab));
            // The tilted mean lies between zero and the cavity mean.
            prop_assert!(t.mean.abs() <= cm.abs() + 1e-12);
            prop_assert!(t.mean * cm >= 0.0);
        }
    }
}
