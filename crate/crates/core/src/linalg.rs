//! Assembly of the Gaussian factor `q(w)` from its site precisions.
//!
//! The joint precision is `c * X^T X + diag(d)`. When `n < m` the covariance is
//! formed through the Woodbury identity,
//!
//! ```text
//! Sigma = D^-1 - D^-1 X^T (I/c + X D^-1 X^T)^-1 X D^-1,
//! ```
//!
//! so a sweep costs `O(n^2 m)` instead of `O(m^3)`. The identity is only used
//! when every diagonal site is positive: with negative entries the inner
//! matrix can be nearly singular while the precision itself is not, and the
//! dense Cholesky route is taken instead.

use std::cell::OnceCell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Diagonal sites below this force the dense route.
const WOODBURY_MIN_DIAG: f64 = 1e-6;

/// Design matrix with lazily cached Gram matrix.
pub(crate) struct Design<'a> {
    pub data: &'a Dataset,
    xtx: OnceCell<DMatrix<f64>>,
}

impl<'a> Design<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self {
            data,
            xtx: OnceCell::new(),
        }
    }

    pub fn xtx(&self) -> &DMatrix<f64> {
        self.xtx.get_or_init(|| self.data.x().tr_mul(self.data.x()))
    }

    pub fn xty(&self) -> DVector<f64> {
        self.data.x().tr_mul(self.data.y())
    }
}

/// Precision `c X^T X + diag(d)` and precision-adjusted mean `b`.
pub(crate) struct GaussianSites<'s> {
    pub scale: f64,
    pub diag: &'s DVector<f64>,
    pub shift: &'s DVector<f64>,
}

pub(crate) struct Marginals {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    /// `tr(X Sigma X^T)`.
    pub trace_xsx: f64,
}

enum Route {
    Diagonal,
    Woodbury,
    Dense,
}

fn route(design: &Design<'_>, g: &GaussianSites<'_>) -> Route {
    let (n, m) = (design.data.n(), design.data.m());
    if n == 0 || g.scale == 0.0 {
        Route::Diagonal
    } else if n < m && g.diag.iter().all(|d| *d >= WOODBURY_MIN_DIAG) {
        Route::Woodbury
    } else {
        Route::Dense
    }
}

struct WoodburyParts {
    dinv: DVector<f64>,
    w: DMatrix<f64>,
    g: DMatrix<f64>,
    kinv: DMatrix<f64>,
}

fn woodbury_parts(design: &Design<'_>, s: &GaussianSites<'_>) -> Result<WoodburyParts> {
    let x = design.data.x();
    let n = x.nrows();
    let dinv = s.diag.map(|d| 1.0 / d);
    let mut w = x.clone();
    for (j, mut col) in w.column_iter_mut().enumerate() {
        col *= dinv[j];
    }
    let g = &w * x.transpose();
    let mut k = g.clone();
    for i in 0..n {
        k[(i, i)] += 1.0 / s.scale;
    }
    let kinv = k
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("inner Woodbury factor".into()))?
        .inverse();
    Ok(WoodburyParts { dinv, w, g, kinv })
}

/// Means, marginal variances and the trace term, without the full covariance.
pub(crate) fn marginals(design: &Design<'_>, s: &GaussianSites<'_>) -> Result<Marginals> {
    let x = design.data.x();
    match route(design, s) {
        Route::Diagonal => {
            if let Some(d) = s.diag.iter().find(|d| **d <= 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "diagonal precision {d}"
                )));
            }
            let var = s.diag.map(|d| 1.0 / d);
            let mean = s.shift.component_mul(&var);
            let trace_xsx = x
                .column_iter()
                .zip(var.iter())
                .map(|(col, v)| col.norm_squared() * v)
                .sum();
            Ok(Marginals {
                mean,
                var,
                trace_xsx,
            })
        }
        Route::Woodbury => {
            let p = woodbury_parts(design, s)?;
            let z = &p.kinv * &p.w;
            let var = DVector::from_fn(p.dinv.len(), |j, _| {
                p.dinv[j] - p.w.column(j).dot(&z.column(j))
            });
            if let Some(v) = var.iter().find(|v| **v <= 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "marginal variance {v}"
                )));
            }
            let db = p.dinv.component_mul(s.shift);
            let mean = &db - z.tr_mul(&(x * &db));
            let kg = &p.kinv * &p.g;
            let trace_xsx = p.g.trace() - p.g.component_mul(&kg.transpose()).sum();
            Ok(Marginals {
                mean,
                var,
                trace_xsx,
            })
        }
        Route::Dense => {
            let (mean, sigma) = dense(design, s)?;
            let trace_xsx = design.xtx().component_mul(&sigma).sum();
            Ok(Marginals {
                mean,
                var: sigma.diagonal(),
                trace_xsx,
            })
        }
    }
}

/// Mean and full covariance.
pub(crate) fn full(design: &Design<'_>, s: &GaussianSites<'_>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    match route(design, s) {
        Route::Diagonal => {
            let m = marginals(design, s)?;
            Ok((m.mean, DMatrix::from_diagonal(&m.var)))
        }
        Route::Woodbury => {
            let x = design.data.x();
            let p = woodbury_parts(design, s)?;
            let z = &p.kinv * &p.w;
            let mut sigma = -(p.w.tr_mul(&z));
            for j in 0..p.dinv.len() {
                sigma[(j, j)] += p.dinv[j];
            }
            let sigma = symmetrize(sigma);
            if let Some(v) = sigma.diagonal().iter().find(|v| **v <= 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "marginal variance {v}"
                )));
            }
            let db = p.dinv.component_mul(s.shift);
            let mean = &db - z.tr_mul(&(x * &db));
            Ok((mean, sigma))
        }
        Route::Dense => dense(design, s),
    }
}

fn dense(design: &Design<'_>, s: &GaussianSites<'_>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut precision = design.xtx() * s.scale;
    for j in 0..s.diag.len() {
        precision[(j, j)] += s.diag[j];
    }
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky of the precision failed".into()))?;
    let sigma = symmetrize(chol.inverse());
    let mean = chol.solve(s.shift);
    Ok((mean, sigma))
}

pub(crate) fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}
