//! Gram matrices for the supported design families and explicit design
//! matrices realizing them with unit-norm columns.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, gaussian_matrix, max_abs_diff};
use crate::seeds::{child_stream, derive_seed};

const GRAM_STREAM: u64 = 0x6772_616d;
const REALIZE_STREAM: u64 = 0x7265_616c;
const WISHART_MIN_EIGENVALUE: f64 = 1e-6;
const WISHART_MAX_ATTEMPTS: u64 = 64;

/// Correlation structure of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DesignKind {
    Orthogonal,
    /// 2x2 diagonal blocks with off-diagonal `rho`; a trailing 1x1 block when p is odd.
    Block2 {
        rho: f64,
    },
    /// d x d diagonal blocks with every off-diagonal equal to `rho`.
    BlockD {
        d: usize,
        rho: f64,
    },
    /// (BB' + I)/2 with unit rows of B drawn uniformly in dimension `k`.
    Factor {
        k: usize,
    },
    /// G_ij = rho^|i-j|.
    ExpDecay {
        rho: f64,
    },
    /// Sample correlation matrix of n standard normal p-vectors.
    Wishart,
}

impl DesignKind {
    /// Correlation parameter of the family, if it has one.
    pub fn rho(&self) -> Option<f64> {
        match *self {
            DesignKind::Block2 { rho }
            | DesignKind::BlockD { rho, .. }
            | DesignKind::ExpDecay { rho } => Some(rho),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            DesignKind::Orthogonal => "orthogonal".into(),
            DesignKind::Block2 { rho } => format!("block2(rho={rho})"),
            DesignKind::BlockD { d, rho } => format!("block{d}(rho={rho})"),
            DesignKind::Factor { k } => format!("factor(k={k})"),
            DesignKind::ExpDecay { rho } => format!("expdecay(rho={rho})"),
            DesignKind::Wishart => "wishart".into(),
        }
    }
}

/// Everything needed to generate a design reproducibly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
}

impl DesignSpec {
    pub fn new(kind: DesignKind, p: usize, n: usize, seed: u64) -> Self {
        DesignSpec { kind, p, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(invalid("p", format!("need p >= 2, got {}", self.p)));
        }
        if self.n < self.p {
            return Err(invalid(
                "n",
                format!("need n >= p = {}, got {}", self.p, self.n),
            ));
        }
        let check_rho = |rho: f64| {
            if rho.is_finite() && rho > -1.0 && rho < 1.0 {
                Ok(())
            } else {
                Err(invalid("rho", format!("must lie in (-1, 1), got {rho}")))
            }
        };
        match self.kind {
            DesignKind::Orthogonal | DesignKind::Wishart => Ok(()),
            DesignKind::Block2 { rho } | DesignKind::ExpDecay { rho } => check_rho(rho),
            DesignKind::BlockD { d, rho } => {
                check_rho(rho)?;
                if d < 2 || !self.p.is_multiple_of(d) {
                    return Err(invalid(
                        "d",
                        format!("need d >= 2 dividing p = {}, got {d}", self.p),
                    ));
                }
                Ok(())
            }
            DesignKind::Factor { k } => {
                if k == 0 {
                    Err(invalid("k", "need k >= 1"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Validate that knockoffs can be built on top of this design.
    pub fn validate_for_knockoffs(&self) -> Result<()> {
        self.validate()?;
        if self.n < 2 * self.p {
            return Err(invalid(
                "n",
                format!("knockoffs need n >= 2p = {}, got {}", 2 * self.p, self.n),
            ));
        }
        Ok(())
    }

    /// Generate the Gram matrix and realize it as a design matrix.
    pub fn build(&self) -> Result<DesignMatrix> {
        let gram = make_gram(self)?;
        realize_design(&gram, self.n, derive_seed(self.seed, &[REALIZE_STREAM]))
    }
}

/// Symmetric, unit-diagonal correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    /// Wrap a matrix after checking it is square, symmetric and unit-diagonal.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "Gram matrix is {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let p = m.nrows();
        for i in 0..p {
            if (m[(i, i)] - 1.0).abs() > 1e-9 {
                return Err(invalid(
                    "gram",
                    format!("diagonal entry {i} is {}, expected 1", m[(i, i)]),
                ));
            }
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 {
                    return Err(invalid("gram", format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(GramMatrix(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// An n x p matrix together with the Gram matrix it realizes.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    gram: GramMatrix,
}

impl DesignMatrix {
    /// Take an explicit matrix whose columns must have unit norm.
    pub fn from_matrix(x: DMatrix<f64>) -> Result<Self> {
        for j in 0..x.ncols() {
            let norm = x.column(j).norm();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(invalid(
                    "x",
                    format!("column {j} has norm {norm}, expected 1"),
                ));
            }
        }
        let g = linalg::symmetrize(x.tr_mul(&x));
        Ok(DesignMatrix {
            gram: GramMatrix::new(g)?,
            x,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Gram matrix of the requested family.
pub fn make_gram(spec: &DesignSpec) -> Result<GramMatrix> {
    spec.validate()?;
    let p = spec.p;
    let mut g = DMatrix::<f64>::identity(p, p);
    match spec.kind {
        DesignKind::Orthogonal => {}
        DesignKind::Block2 { rho } => {
            for b in (0..p.saturating_sub(1)).step_by(2) {
                g[(b, b + 1)] = rho;
                g[(b + 1, b)] = rho;
            }
        }
        DesignKind::BlockD { d, rho } => {
            if rho <= -1.0 / (d as f64 - 1.0) {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: 1.0 + (d as f64 - 1.0) * rho,
                });
            }
            for start in (0..p).step_by(d) {
                for i in start..start + d {
                    for j in start..start + d {
                        if i != j {
                            g[(i, j)] = rho;
                        }
                    }
                }
            }
        }
        DesignKind::ExpDecay { rho } => {
            for i in 0..p {
                for j in 0..p {
                    g[(i, j)] = rho.powi((i as i32 - j as i32).abs());
                }
            }
        }
        DesignKind::Factor { k } => {
            let mut rng = child_stream(spec.seed, &[GRAM_STREAM]);
            let b = unit_rows(&mut rng, p, k);
            g = (&b * b.transpose() + DMatrix::identity(p, p)) * 0.5;
            normalize_diagonal(&mut g);
        }
        DesignKind::Wishart => {
            g = wishart_correlation(spec)?;
        }
    }
    let gram = GramMatrix::new(g)?;
    let lam = linalg::min_eigenvalue(gram.matrix());
    if lam <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: lam,
        });
    }
    Ok(gram)
}

fn unit_rows<R: Rng>(rng: &mut R, p: usize, k: usize) -> DMatrix<f64> {
    if k == 2 {
        // Rows [cos a, sin a] with a uniform on [0, 2 pi].
        let mut b = DMatrix::zeros(p, 2);
        for i in 0..p {
            let angle = rng.random::<f64>() * 2.0 * PI;
            b[(i, 0)] = angle.cos();
            b[(i, 1)] = angle.sin();
        }
        return b;
    }
    let mut b = gaussian_matrix(rng, p, k);
    for i in 0..p {
        let norm = b.row(i).norm();
        if norm > 0.0 {
            b.row_mut(i).scale_mut(1.0 / norm);
        } else {
            b[(i, 0)] = 1.0;
        }
    }
    b
}

fn normalize_diagonal(g: &mut DMatrix<f64>) {
    let p = g.nrows();
    let scale: Vec<f64> = (0..p).map(|i| g[(i, i)].sqrt()).collect();
    for i in 0..p {
        for j in 0..p {
            g[(i, j)] /= scale[i] * scale[j];
        }
        g[(i, i)] = 1.0;
    }
    let sym = linalg::symmetrize(g.clone());
    *g = sym;
    for i in 0..p {
        g[(i, i)] = 1.0;
    }
}

fn wishart_correlation(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    let (n, p) = (spec.n, spec.p);
    let mut last = f64::NAN;
    for attempt in 0..WISHART_MAX_ATTEMPTS {
        let mut rng = child_stream(spec.seed, &[GRAM_STREAM, attempt]);
        let mut z = gaussian_matrix(&mut rng, n, p);
        for j in 0..p {
            let mean = z.column(j).mean();
            z.column_mut(j).add_scalar_mut(-mean);
        }
        let mut g = z.tr_mul(&z);
        normalize_diagonal(&mut g);
        last = linalg::min_eigenvalue(&g);
        if last > WISHART_MIN_EIGENVALUE {
            return Ok(g);
        }
    }
    Err(Error::NotPositiveDefinite {
        min_eigenvalue: last,
    })
}

/// Realize `gram` as X = Q L' with L the Cholesky factor of G and Q a random
/// n x p matrix with orthonormal columns.
pub fn realize_design(gram: &GramMatrix, n: usize, seed: u64) -> Result<DesignMatrix> {
    let p = gram.dim();
    if n < p {
        return Err(invalid("n", format!("need n >= p = {p}, got {n}")));
    }
    let chol = linalg::cholesky(gram.matrix())?;
    let mut rng = crate::seeds::stream(seed);
    let q = linalg::orthonormal_columns(gaussian_matrix(&mut rng, n, p))?;
    let x = q * chol.l().transpose();
    let err = max_abs_diff(&x.tr_mul(&x), gram.matrix());
    if err >= 1e-8 {
        return Err(Error::Invariant(format!(
            "realized design misses its Gram matrix by {err:.3e}"
        )));
    }
    Ok(DesignMatrix {
        x,
        gram: gram.clone(),
    })
}

/// Smallest eigenvalue of a Gram matrix.
pub fn min_eigenvalue(gram: &GramMatrix) -> f64 {
    linalg::min_eigenvalue(gram.matrix())
}
