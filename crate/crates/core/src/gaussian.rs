//! Information-form Gaussian densities over stacked state sequences.
//!
//! A sequence `x_1, ..., x_l` of `n`-dimensional states with Markov dynamics
//! has a block-tridiagonal information matrix. [`InfoGaussian`] stores only
//! those blocks. All steps but the last are frozen into a shared,
//! reference-counted history list, because prediction only appends and the
//! measurement update only touches the final step. Cloning a sequence is
//! therefore O(1) in its length.
//!
//! The forward block elimination of the information matrix (the block
//! Cholesky / Thomas sweep in natural time order) is carried along
//! incrementally: its last pivot is the information form of the final-step
//! marginal, which is what likelihood evaluation and gating need.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted Cholesky pivot (squared diagonal of the factor).
pub const PIVOT_TOLERANCE: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factorization that rejects tiny pivots.
pub(crate) fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite(what))?;
    let l = chol.l_dirty();
    for i in 0..l.nrows() {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(pivot >= PIVOT_TOLERANCE) {
            return Err(Error::NotPositiveDefinite(what));
        }
    }
    Ok(chol)
}

pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, what)?.inverse()))
}

struct Pivot {
    pivot: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    reduced: DVector<f64>,
}

#[derive(Debug)]
struct FrozenStep {
    diag: DMatrix<f64>,
    info: DVector<f64>,
    /// Block coupling this step to the next one, `Y[i+1, i]`.
    cross: DMatrix<f64>,
    prev: Option<Arc<FrozenStep>>,
}

impl Drop for FrozenStep {
    // Unlink iteratively so that very long sequences do not recurse.
    fn drop(&mut self) {
        let mut next = self.prev.take();
        while let Some(node) = next {
            match Arc::try_unwrap(node) {
                Ok(mut n) => next = n.prev.take(),
                Err(_) => break,
            }
        }
    }
}

/// Gaussian over a state sequence in information form `(y, Y)`.
#[derive(Debug, Clone)]
pub struct InfoGaussian {
    dim: usize,
    len: usize,
    history: Option<Arc<FrozenStep>>,
    last_diag: DMatrix<f64>,
    last_info: DVector<f64>,
    // Last pivot of the forward elimination and the matching reduced vector.
    filt_matrix: DMatrix<f64>,
    filt_info: DVector<f64>,
}

/// Predicted measurement moments for one sequence density.
#[derive(Debug, Clone)]
pub struct Innovation {
    pub predicted: DVector<f64>,
    pub covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl Innovation {
    pub fn new(predicted: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let covariance = symmetrize(&covariance);
        let chol = cholesky(&covariance, "innovation covariance")?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            predicted,
            covariance,
            chol,
            log_det,
        })
    }

    /// Squared Mahalanobis distance of `z` from the predicted measurement.
    pub fn mahalanobis2(&self, z: &DVector<f64>) -> f64 {
        let v = z - &self.predicted;
        let w = self.chol.solve(&v);
        v.dot(&w)
    }

    /// `log N(z; predicted, covariance)`.
    pub fn log_pdf(&self, z: &DVector<f64>) -> f64 {
        let n = z.len() as f64;
        -0.5 * (self.mahalanobis2(z) + self.log_det + n * LN_2PI)
    }
}

impl InfoGaussian {
    /// Single-step density from moments.
    pub fn from_moments(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let info_matrix = spd_inverse(cov, "covariance")?;
        let info = &info_matrix * mean;
        Ok(Self::single(info, info_matrix))
    }

    /// Single-step density from information parameters.
    pub fn from_info(info: DVector<f64>, info_matrix: DMatrix<f64>) -> Result<Self> {
        if info_matrix.nrows() != info.len() || info_matrix.ncols() != info.len() {
            return Err(Error::Dimension("information vector/matrix mismatch".into()));
        }
        let info_matrix = symmetrize(&info_matrix);
        cholesky(&info_matrix, "information matrix")?;
        Ok(Self::single(info, info_matrix))
    }

    fn single(info: DVector<f64>, info_matrix: DMatrix<f64>) -> Self {
        Self {
            dim: info.len(),
            len: 1,
            history: None,
            filt_matrix: info_matrix.clone(),
            filt_info: info.clone(),
            last_diag: info_matrix,
            last_info: info,
        }
    }

    /// Builds a sequence density from its blocks, oldest first.
    ///
    /// `cross[i]` is the block `Y[i+1, i]`; there must be one fewer cross
    /// block than diagonal blocks.
    pub fn from_blocks(
        diag: Vec<DMatrix<f64>>,
        cross: Vec<DMatrix<f64>>,
        info: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let len = diag.len();
        if len == 0 || info.len() != len || cross.len() + 1 != len {
            return Err(Error::Dimension("inconsistent block counts".into()));
        }
        let dim = info[0].len();
        let square = |m: &DMatrix<f64>| m.nrows() == dim && m.ncols() == dim;
        if !diag.iter().all(square) || !cross.iter().all(square) || !info.iter().all(|v| v.len() == dim) {
            return Err(Error::Dimension("blocks must all be n_x sized".into()));
        }
        let mut history: Option<Arc<FrozenStep>> = None;
        let mut diag = diag.into_iter();
        let mut info = info.into_iter();
        for c in cross {
            history = Some(Arc::new(FrozenStep {
                diag: symmetrize(&diag.next().unwrap()),
                info: info.next().unwrap(),
                cross: c,
                prev: history,
            }));
        }
        let mut g = Self {
            dim,
            len,
            history,
            last_diag: symmetrize(&diag.next().unwrap()),
            last_info: info.next().unwrap(),
            filt_matrix: DMatrix::zeros(dim, dim),
            filt_info: DVector::zeros(dim),
        };
        let mut sweep = g.forward_eliminate()?;
        let last = sweep.pop().unwrap();
        g.filt_matrix = last.pivot;
        g.filt_info = last.reduced;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of time steps covered.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Appends one step under `x' = F x + w`, `w ~ N(0, Q)`.
    ///
    /// The former final diagonal block gains `FᵀQ⁻¹F`, the new coupling
    /// blocks are `-Q⁻¹F` and its transpose, and the new diagonal block is
    /// `Q⁻¹`. The information vector gains a zero block.
    pub fn predict(&self, f: &DMatrix<f64>, q_inv: &DMatrix<f64>) -> Result<Self> {
        let n = self.dim;
        if f.nrows() != n || f.ncols() != n || q_inv.nrows() != n || q_inv.ncols() != n {
            return Err(Error::Dimension(format!(
                "transition must be {n}x{n}, got F {}x{} and Q⁻¹ {}x{}",
                f.nrows(),
                f.ncols(),
                q_inv.nrows(),
                q_inv.ncols()
            )));
        }
        let qf = q_inv * f;
        let ftqf = symmetrize(&(f.transpose() * &qf));

        let pivot = symmetrize(&(&self.filt_matrix + &ftqf));
        let chol = cholesky(&pivot, "predicted pivot")?;
        // S_new = Q⁻¹ - Q⁻¹F (S + FᵀQ⁻¹F)⁻¹ FᵀQ⁻¹
        let solved = chol.solve(&qf.transpose());
        let filt_matrix = symmetrize(&(q_inv - &qf * &solved));
        let filt_info = &qf * chol.solve(&self.filt_info);

        let frozen = FrozenStep {
            diag: symmetrize(&(&self.last_diag + &ftqf)),
            info: self.last_info.clone(),
            cross: -qf,
            prev: self.history.clone(),
        };
        Ok(Self {
            dim: n,
            len: self.len + 1,
            history: Some(Arc::new(frozen)),
            last_diag: symmetrize(q_inv),
            last_info: DVector::zeros(n),
            filt_matrix,
            filt_info,
        })
    }

    /// Conditions the final step on `z = H x + v`, `v ~ N(0, R)`.
    pub fn update(&self, h: &DMatrix<f64>, r_inv: &DMatrix<f64>, z: &DVector<f64>) -> Result<Self> {
        if h.ncols() != self.dim || h.nrows() != z.len() || r_inv.nrows() != z.len() || r_inv.ncols() != z.len() {
            return Err(Error::Dimension(format!(
                "measurement model {}x{} with R⁻¹ {}x{} does not fit z of size {} and n_x = {}",
                h.nrows(),
                h.ncols(),
                r_inv.nrows(),
                r_inv.ncols(),
                z.len(),
                self.dim
            )));
        }
        let htr = h.transpose() * r_inv;
        let htrh = symmetrize(&(&htr * h));
        let htrz = &htr * z;
        Ok(self.update_with(&htrh, &htrz))
    }

    /// Measurement update with precomputed `HᵀR⁻¹H` and `HᵀR⁻¹z`.
    pub fn update_with(&self, htrh: &DMatrix<f64>, htrz: &DVector<f64>) -> Self {
        let mut out = self.clone();
        out.last_diag += htrh;
        out.last_info += htrz;
        out.filt_matrix += htrh;
        out.filt_info += htrz;
        out
    }

    /// Mean and covariance of the final step.
    pub fn marginal_last_step(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let chol = cholesky(&self.filt_matrix, "final-step information")?;
        let mean = chol.solve(&self.filt_info);
        Ok((mean, symmetrize(&chol.inverse())))
    }

    /// Information form of the final-step marginal.
    pub fn last_step_info(&self) -> (&DVector<f64>, &DMatrix<f64>) {
        (&self.filt_info, &self.filt_matrix)
    }

    /// Predicted measurement moments for the final step.
    pub fn innovation(&self, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Innovation> {
        if h.ncols() != self.dim || r.nrows() != h.nrows() || r.ncols() != h.nrows() {
            return Err(Error::Dimension("measurement model does not match state".into()));
        }
        let (m, p) = self.marginal_last_step()?;
        Innovation::new(h * m, h * p * h.transpose() + r)
    }

    /// `log ∫ N(z; H x_last, R) p(x) dx`.
    pub fn predictive_log_likelihood(&self, h: &DMatrix<f64>, r: &DMatrix<f64>, z: &DVector<f64>) -> Result<f64> {
        if z.len() != h.nrows() {
            return Err(Error::Dimension("measurement size".into()));
        }
        Ok(self.innovation(h, r)?.log_pdf(z))
    }

    /// Blocks oldest first: (diagonal, cross `Y[i+1,i]`, information).
    pub fn blocks(&self) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
        let mut diag = Vec::with_capacity(self.len);
        let mut cross = Vec::with_capacity(self.len.saturating_sub(1));
        let mut info = Vec::with_capacity(self.len);
        diag.push(self.last_diag.clone());
        info.push(self.last_info.clone());
        let mut node = self.history.as_deref();
        while let Some(step) = node {
            diag.push(step.diag.clone());
            info.push(step.info.clone());
            cross.push(step.cross.clone());
            node = step.prev.as_deref();
        }
        diag.reverse();
        cross.reverse();
        info.reverse();
        (diag, cross, info)
    }

    /// Forward block elimination in time order.
    fn forward_eliminate(&self) -> Result<Vec<Pivot>> {
        let (diag, cross, info) = self.blocks();
        let mut out: Vec<Pivot> = Vec::with_capacity(self.len);
        for i in 0..self.len {
            let (pivot, reduced) = if i == 0 {
                (diag[0].clone(), info[0].clone())
            } else {
                let prev = &out[i - 1];
                let l = &cross[i - 1];
                let pivot = &diag[i] - l * prev.chol.solve(&l.transpose());
                let s = &info[i] - l * prev.chol.solve(&prev.reduced);
                (symmetrize(&pivot), s)
            };
            let chol = cholesky(&pivot, "sequence pivot")?;
            out.push(Pivot { pivot, chol, reduced });
        }
        Ok(out)
    }

    /// Mean of the whole sequence, `Y⁻¹ y`, by block-tridiagonal
    /// factorization and back substitution. The inverse is never formed.
    pub fn recover_mean(&self) -> Result<DVector<f64>> {
        let blocks = self.recover_mean_blocks()?;
        let mut out = DVector::zeros(self.len * self.dim);
        for (i, b) in blocks.iter().enumerate() {
            out.rows_mut(i * self.dim, self.dim).copy_from(b);
        }
        Ok(out)
    }

    /// Mean of the sequence, one vector per time step.
    pub fn recover_mean_blocks(&self) -> Result<Vec<DVector<f64>>> {
        let sweep = self.forward_eliminate()?;
        let (_, cross, _) = self.blocks();
        let mut x: Vec<DVector<f64>> = vec![DVector::zeros(self.dim); self.len];
        let last = self.len - 1;
        x[last] = sweep[last].chol.solve(&sweep[last].reduced);
        for i in (0..last).rev() {
            let rhs = &sweep[i].reduced - cross[i].transpose() * &x[i + 1];
            x[i] = sweep[i].chol.solve(&rhs);
        }
        Ok(x)
    }

    /// Marginalizes out all but the most recent `lag` steps.
    pub fn truncate(&self, lag: usize) -> Result<Self> {
        let lag = lag.max(1);
        if self.len <= lag {
            return Ok(self.clone());
        }
        if lag == 1 {
            return Ok(Self::single(self.filt_info.clone(), self.filt_matrix.clone()));
        }
        let drop = self.len - lag;
        let (mut diag, mut cross, mut info) = self.blocks();
        // Eliminate the oldest `drop` steps into the first kept one.
        let sweep = self.forward_eliminate()?;
        let prev = &sweep[drop - 1];
        let l = &cross[drop - 1];
        diag[drop] = symmetrize(&(&diag[drop] - l * prev.chol.solve(&l.transpose())));
        info[drop] = &info[drop] - l * prev.chol.solve(&prev.reduced);
        let diag = diag.split_off(drop);
        let cross = cross.split_off(drop);
        let info = info.split_off(drop);
        Self::from_blocks(diag, cross, info)
    }

    /// Dense `(y, Y)`; for tests and debugging only.
    pub fn to_dense(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim;
        let (diag, cross, info) = self.blocks();
        let mut y = DVector::zeros(self.len * n);
        let mut big = DMatrix::zeros(self.len * n, self.len * n);
        for i in 0..self.len {
            y.rows_mut(i * n, n).copy_from(&info[i]);
            big.view_mut((i * n, i * n), (n, n)).copy_from(&diag[i]);
            if i + 1 < self.len {
                big.view_mut(((i + 1) * n, i * n), (n, n)).copy_from(&cross[i]);
                big.view_mut((i * n, (i + 1) * n), (n, n)).copy_from(&cross[i].transpose());
            }
        }
        (y, big)
    }

    /// Which `n_x × n_x` blocks of the dense information matrix are nonzero.
    pub fn block_pattern(&self) -> Vec<Vec<bool>> {
        let n = self.dim;
        let (_, dense) = self.to_dense();
        (0..self.len)
            .map(|i| {
                (0..self.len)
                    .map(|j| dense.view((i * n, j * n), (n, n)).iter().any(|v| *v != 0.0))
                    .collect()
            })
            .collect()
    }

    pub fn nonzero_block_count(&self) -> usize {
        self.block_pattern().iter().flatten().filter(|b| **b).count()
    }

    /// Text grid of the block pattern, `#` for nonzero and `.` for zero.
    pub fn pattern_string(&self) -> String {
        let mut s = String::new();
        for row in self.block_pattern() {
            for b in row {
                s.push(if b { '#' } else { '.' });
            }
            let _ = writeln!(s);
        }
        s
    }
}

/// Serialized form: row-major blocks, oldest step first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoGaussianRepr {
    pub info: Vec<Vec<f64>>,
    pub diag: Vec<Vec<Vec<f64>>>,
    pub cross: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl From<&InfoGaussian> for InfoGaussianRepr {
    fn from(g: &InfoGaussian) -> Self {
        let (diag, cross, info) = g.blocks();
        Self {
            info: info.iter().map(|v| v.iter().copied().collect()).collect(),
            diag: diag.iter().map(matrix_to_rows).collect(),
            cross: cross.iter().map(matrix_to_rows).collect(),
        }
    }
}

impl TryFrom<InfoGaussianRepr> for InfoGaussian {
    type Error = Error;

    fn try_from(r: InfoGaussianRepr) -> Result<Self> {
        let diag = r.diag.iter().map(|b| rows_to_matrix(b)).collect::<Result<Vec<_>>>()?;
        let cross = r.cross.iter().map(|b| rows_to_matrix(b)).collect::<Result<Vec<_>>>()?;
        let info = r.info.into_iter().map(DVector::from_vec).collect();
        InfoGaussian::from_blocks(diag, cross, info)
    }
}

impl Serialize for InfoGaussian {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InfoGaussianRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for InfoGaussian {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = InfoGaussianRepr::deserialize(d)?;
        InfoGaussian::try_from(repr).map_err(serde::de::Error::custom)
    }
}
