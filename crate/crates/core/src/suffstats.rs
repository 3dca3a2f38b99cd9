//! Running sufficient statistics with exact rank-one updates.
//!
//! All solvers see the data only through these accumulators. Symmetric
//! matrices are stored in full but each update touches the upper triangle
//! and mirrors it, so symmetry holds exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::special::lambda_jj;

/// `m += w · c cᵀ` on the upper triangle, mirrored.
fn rank_one_sym(m: &mut DMatrix<f64>, c: &DVector<f64>, w: f64) {
    let p = c.len();
    for j in 0..p {
        let cj = w * c[j];
        if cj == 0.0 {
            continue;
        }
        for i in 0..=j {
            m[(i, j)] += c[i] * cj;
        }
    }
    for j in 0..p {
        for i in (j + 1)..p {
            m[(i, j)] = m[(j, i)];
        }
    }
}

fn check_rows(context: &'static str, y: &[f64], c: &DMatrix<f64>) -> Result<()> {
    check_dim(context, y.len(), c.nrows())
}

/// `n`, `yᵀy`, `Cᵀy` and `CᵀC` for the Gaussian-response solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamingMoments {
    pub n: usize,
    pub yty: f64,
    pub cty: DVector<f64>,
    pub ctc: DMatrix<f64>,
}

impl StreamingMoments {
    pub fn new(p: usize) -> Self {
        StreamingMoments {
            n: 0,
            yty: 0.0,
            cty: DVector::zeros(p),
            ctc: DMatrix::zeros(p, p),
        }
    }

    pub fn dim(&self) -> usize {
        self.cty.len()
    }

    pub fn update(&mut self, y_new: f64, c_new: &DVector<f64>) -> Result<()> {
        check_dim("gaussian statistics update", self.dim(), c_new.len())?;
        self.n += 1;
        self.yty += y_new * y_new;
        self.cty.axpy(y_new, c_new, 1.0);
        rank_one_sym(&mut self.ctc, c_new, 1.0);
        Ok(())
    }

    /// Dense products `yᵀy`, `Cᵀy`, `CᵀC` over a whole batch.
    pub fn from_batch(y: &[f64], c: &DMatrix<f64>) -> Result<Self> {
        check_rows("batch statistics", y, c)?;
        let yv = DVector::from_column_slice(y);
        Ok(StreamingMoments {
            n: y.len(),
            yty: yv.dot(&yv),
            cty: c.tr_mul(&yv),
            ctc: crate::linalg::symmetrize(c.tr_mul(c)),
        })
    }
}

/// `n`, `Cᵀ(y - ½1)` and `Cᵀdiag{λ(ξ)}C` for the logistic solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticMoments {
    pub n: usize,
    pub cty_half: DVector<f64>,
    pub ct_lam_c: DMatrix<f64>,
}

pub(crate) fn check_binary(y: f64) -> Result<()> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::Domain(format!("binary response must be 0 or 1, got {y}")));
    }
    Ok(())
}

impl LogisticMoments {
    pub fn new(p: usize) -> Self {
        LogisticMoments {
            n: 0,
            cty_half: DVector::zeros(p),
            ct_lam_c: DMatrix::zeros(p, p),
        }
    }

    pub fn dim(&self) -> usize {
        self.cty_half.len()
    }

    pub fn update(&mut self, y_new: f64, c_new: &DVector<f64>, xi_new: f64) -> Result<()> {
        check_dim("logistic statistics update", self.dim(), c_new.len())?;
        check_binary(y_new)?;
        if !(xi_new >= 0.0) {
            return Err(Error::Domain(format!("xi must be non-negative, got {xi_new}")));
        }
        self.n += 1;
        self.cty_half.axpy(y_new - 0.5, c_new, 1.0);
        rank_one_sym(&mut self.ct_lam_c, c_new, lambda_jj(xi_new));
        Ok(())
    }

    pub fn from_batch(y: &[f64], c: &DMatrix<f64>, xi: &[f64]) -> Result<Self> {
        check_rows("batch logistic statistics", y, c)?;
        check_dim("batch logistic xi", y.len(), xi.len())?;
        for &v in y {
            check_binary(v)?;
        }
        let centred = DVector::from_iterator(y.len(), y.iter().map(|v| v - 0.5));
        let mut weighted = c.clone();
        for (i, &x) in xi.iter().enumerate() {
            let l = lambda_jj(x);
            weighted.row_mut(i).scale_mut(l);
        }
        Ok(LogisticMoments {
            n: y.len(),
            cty_half: c.tr_mul(&centred),
            ct_lam_c: crate::linalg::symmetrize(weighted.tr_mul(c)),
        })
    }
}

/// Statistics for the sparse-signal solver, with `C = [1 Z]`.
///
/// `ctc` carries `ztz` as its lower-right block and `cty` carries `zty` in
/// entries `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMoments {
    pub n: usize,
    pub yty: f64,
    pub zt1: DVector<f64>,
    pub zty: DVector<f64>,
    pub ztz: DMatrix<f64>,
    pub cty: DVector<f64>,
    pub ctc: DMatrix<f64>,
}

impl SparseMoments {
    pub fn new(k: usize) -> Self {
        SparseMoments {
            n: 0,
            yty: 0.0,
            zt1: DVector::zeros(k),
            zty: DVector::zeros(k),
            ztz: DMatrix::zeros(k, k),
            cty: DVector::zeros(k + 1),
            ctc: DMatrix::zeros(k + 1, k + 1),
        }
    }

    /// Number of sparse columns K.
    pub fn dim(&self) -> usize {
        self.zt1.len()
    }

    pub fn update(&mut self, y_new: f64, z_new: &DVector<f64>) -> Result<()> {
        let k = self.dim();
        check_dim("sparse statistics update", k, z_new.len())?;
        let mut c_new = DVector::zeros(k + 1);
        c_new[0] = 1.0;
        c_new.rows_mut(1, k).copy_from(z_new);

        self.n += 1;
        self.yty += y_new * y_new;
        self.zt1 += z_new;
        self.zty.axpy(y_new, z_new, 1.0);
        rank_one_sym(&mut self.ztz, z_new, 1.0);
        self.cty.axpy(y_new, &c_new, 1.0);
        rank_one_sym(&mut self.ctc, &c_new, 1.0);
        Ok(())
    }

    pub fn from_batch(y: &[f64], z: &DMatrix<f64>) -> Result<Self> {
        check_rows("batch sparse statistics", y, z)?;
        let (n, k) = z.shape();
        let mut c = DMatrix::zeros(n, k + 1);
        c.column_mut(0).fill(1.0);
        c.columns_mut(1, k).copy_from(z);
        let yv = DVector::from_column_slice(y);
        Ok(SparseMoments {
            n,
            yty: yv.dot(&yv),
            zt1: z.tr_mul(&DVector::from_element(n, 1.0)),
            zty: z.tr_mul(&yv),
            ztz: crate::linalg::symmetrize(z.tr_mul(z)),
            cty: c.tr_mul(&yv),
            ctc: crate::linalg::symmetrize(c.tr_mul(&c)),
        })
    }
}
