//! Functional calculus through a dense eigendecomposition.

use std::sync::{Arc, OnceLock};

use faer::Mat;
use num_complex::Complex64 as C64;

use super::psi::PsiFunction;
use super::{check_symbol, Calculus, Engine, Prepared};
use crate::error::{Error, Result};
use crate::operator::{spectral_oracle, SectorialOperator, SpectralOracle};

/// `φ(sL) = V diag(φ(sλ)) V⁻¹`.
pub struct SpectralCalculus {
    op: Arc<SectorialOperator>,
    oracle: Arc<SpectralOracle>,
    // factors of L* = (M⁻¹ W^H) diag(conj λ) (V^H M)
    adjoint: OnceLock<(Mat<C64>, Mat<C64>)>,
}

impl SpectralCalculus {
    /// Computes the oracle; fails when it is not trustworthy.
    pub fn new(op: &SectorialOperator) -> Result<SpectralCalculus> {
        let oracle = spectral_oracle(op)?;
        SpectralCalculus::from_oracle(op, oracle)
    }

    pub fn from_oracle(op: &SectorialOperator, oracle: SpectralOracle) -> Result<SpectralCalculus> {
        if !oracle.valid {
            return Err(Error::Unsupported(format!(
                "eigenvector condition {:.3e} or residual {:.3e} too large",
                oracle.condition, oracle.residual
            )));
        }
        if oracle.len() != op.len() {
            return Err(Error::InvalidArgument("oracle size mismatch".into()));
        }
        Ok(SpectralCalculus {
            op: Arc::new(op.clone()),
            oracle: Arc::new(oracle),
            adjoint: OnceLock::new(),
        })
    }

    pub fn oracle(&self) -> &SpectralOracle {
        &self.oracle
    }

    fn factors(&self, adjoint: bool) -> (&Mat<C64>, &Mat<C64>) {
        if !adjoint {
            return (&self.oracle.vectors, &self.oracle.inverse);
        }
        let (v, w) = self.adjoint.get_or_init(|| {
            let wts = self.op.weights();
            let n = self.op.len();
            let v = &self.oracle.vectors;
            let w = &self.oracle.inverse;
            let va = Mat::<C64>::from_fn(n, n, |i, j| w[(j, i)].conj() / wts[i]);
            let wa = Mat::<C64>::from_fn(n, n, |i, j| v[(j, i)].conj() * wts[j]);
            (va, wa)
        });
        (v, w)
    }

    fn lambdas(&self, adjoint: bool) -> Vec<C64> {
        self.oracle
            .eigenvalues
            .iter()
            .map(|l| if adjoint { l.conj() } else { *l })
            .collect()
    }
}

fn scale_rows(c: &Mat<C64>, d: &[C64]) -> Mat<C64> {
    Mat::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] * d[i])
}

struct SpectralPrepared<'a> {
    v: &'a Mat<C64>,
    c: Mat<C64>,
    lam: Vec<C64>,
    phi: PsiFunction,
}

impl Prepared for SpectralPrepared<'_> {
    fn at(&self, s: f64) -> Result<Mat<C64>> {
        let d: Vec<C64> = self.lam.iter().map(|l| self.phi.eval(l * s)).collect();
        Ok(self.v * scale_rows(&self.c, &d))
    }
}

impl Calculus for SpectralCalculus {
    fn operator(&self) -> &SectorialOperator {
        &self.op
    }

    fn engine(&self) -> Engine {
        Engine::Spectral
    }

    fn prepare(&self, phi: &PsiFunction, f: &Mat<C64>, adjoint: bool) -> Result<Box<dyn Prepared + '_>> {
        check_symbol(&self.op, phi)?;
        let (v, w) = self.factors(adjoint);
        Ok(Box::new(SpectralPrepared {
            v,
            c: w * f,
            lam: self.lambdas(adjoint),
            phi: phi.clone(),
        }))
    }

    fn apply_sum(
        &self,
        phi: &PsiFunction,
        scales: &[f64],
        weights: &[C64],
        adjoint: bool,
        terms: &mut dyn FnMut(usize) -> Result<Mat<C64>>,
    ) -> Result<Mat<C64>> {
        check_symbol(&self.op, phi)?;
        let (v, w) = self.factors(adjoint);
        let lam = self.lambdas(adjoint);
        let mut acc: Option<Mat<C64>> = None;
        for (k, (&s, &wk)) in scales.iter().zip(weights).enumerate() {
            let t = terms(k)?;
            let c = w * &t;
            let d: Vec<C64> = lam.iter().map(|l| phi.eval(l * s) * wk).collect();
            let term = scale_rows(&c, &d);
            match &mut acc {
                None => acc = Some(term),
                Some(a) => *a += &term,
            }
        }
        match acc {
            None => Err(Error::InvalidArgument("empty sum".into())),
            Some(a) => Ok(v * a),
        }
    }

    fn fractional_power(&self, gamma: f64, f: &Mat<C64>, adjoint: bool) -> Result<Mat<C64>> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("power {gamma} must be positive")));
        }
        let (v, w) = self.factors(adjoint);
        let d: Vec<C64> = self
            .lambdas(adjoint)
            .iter()
            .map(|l| {
                if l.norm() == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    (l.ln() * gamma).exp()
                }
            })
            .collect();
        Ok(v * scale_rows(&(w * f), &d))
    }
}
