use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::minsr::{self, CoefficientsFile, MinSrOptions};
use super::CollocationScheme;
use crate::error::{Result, SdcError};
use crate::linalg::DenseMatrix;

/// Which low-order approximation of `Q` drives the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QDeltaKind {
    /// Implicit Euler (left rectangle rule).
    ImplicitEuler,
    /// Explicit Euler (right rectangle rule).
    ExplicitEuler,
    /// The zero matrix.
    Picard,
    /// Transposed upper factor of the unpivoted LU decomposition of `Q^T`.
    Lu,
    /// Diagonal minimizing the stiff-limit spectral radius.
    MinSrS,
    /// Diagonal minimizing the non-stiff spectral radius.
    MinSrNs,
}

impl QDeltaKind {
    pub const ALL: [QDeltaKind; 6] = [
        QDeltaKind::ImplicitEuler,
        QDeltaKind::ExplicitEuler,
        QDeltaKind::Picard,
        QDeltaKind::Lu,
        QDeltaKind::MinSrS,
        QDeltaKind::MinSrNs,
    ];

    /// Command-line spelling.
    pub fn name(self) -> &'static str {
        match self {
            QDeltaKind::ImplicitEuler => "ie",
            QDeltaKind::ExplicitEuler => "ee",
            QDeltaKind::Picard => "picard",
            QDeltaKind::Lu => "lu",
            QDeltaKind::MinSrS => "min-sr-s",
            QDeltaKind::MinSrNs => "min-sr-ns",
        }
    }

    /// Spelling used in coefficient files.
    pub fn label(self) -> &'static str {
        match self {
            QDeltaKind::ImplicitEuler => "IE",
            QDeltaKind::ExplicitEuler => "EE",
            QDeltaKind::Picard => "Picard",
            QDeltaKind::Lu => "LU",
            QDeltaKind::MinSrS => "MIN-SR-S",
            QDeltaKind::MinSrNs => "MIN-SR-NS",
        }
    }

    /// Whether the matrix is diagonal, so node solves decouple.
    pub fn is_diagonal(self) -> bool {
        matches!(self, QDeltaKind::Picard | QDeltaKind::MinSrS | QDeltaKind::MinSrNs)
    }

    /// Whether the sweep is explicit (zero diagonal).
    pub fn is_explicit(self) -> bool {
        matches!(self, QDeltaKind::ExplicitEuler | QDeltaKind::Picard)
    }
}

impl fmt::Display for QDeltaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QDeltaKind {
    type Err = SdcError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        QDeltaKind::ALL
            .into_iter()
            .find(|k| k.name() == lower || k.label().to_ascii_lowercase() == lower)
            .ok_or_else(|| {
                SdcError::InvalidArgument(format!(
                    "unknown QDelta kind '{s}', expected one of: {}",
                    QDeltaKind::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

/// Where the entries of a [`QDeltaMatrix`] came from.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSource {
    Analytic,
    /// Produced by the spectral-radius optimizer. `converged` is false when
    /// the iteration budget ran out and the best point found was returned.
    Optimized {
        converged: bool,
        objective: f64,
    },
    LoadedFromFile,
}

/// Lower-triangular preconditioner for one collocation scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct QDeltaMatrix {
    kind: QDeltaKind,
    unit: DenseMatrix,
    matrix: DenseMatrix,
    source: CoefficientSource,
}

impl QDeltaMatrix {
    /// Builds the preconditioner of the given kind with default optimizer
    /// settings.
    pub fn new(kind: QDeltaKind, scheme: &CollocationScheme) -> Result<Self> {
        Self::with_options(kind, scheme, &MinSrOptions::default())
    }

    pub fn with_options(kind: QDeltaKind, scheme: &CollocationScheme, opts: &MinSrOptions) -> Result<Self> {
        let m = scheme.num_nodes();
        let c = scheme.unit_nodes();
        let (unit, source) = match kind {
            QDeltaKind::ImplicitEuler => {
                let d = unit_substeps(c);
                (
                    DenseMatrix::from_fn(m, m, |i, j| if j <= i { d[j] } else { 0.0 }),
                    CoefficientSource::Analytic,
                )
            }
            QDeltaKind::ExplicitEuler => {
                let d = unit_substeps(c);
                (
                    DenseMatrix::from_fn(m, m, |i, j| if j < i { d[j + 1] } else { 0.0 }),
                    CoefficientSource::Analytic,
                )
            }
            QDeltaKind::Picard => (DenseMatrix::zeros(m, m), CoefficientSource::Analytic),
            QDeltaKind::Lu => (lu_trick(scheme.unit_q())?, CoefficientSource::Analytic),
            QDeltaKind::MinSrS | QDeltaKind::MinSrNs => {
                let found = minsr::optimize(kind, c, scheme.unit_q(), opts)?;
                let source = if found.analytic {
                    CoefficientSource::Analytic
                } else {
                    CoefficientSource::Optimized {
                        converged: found.converged,
                        objective: found.objective,
                    }
                };
                if !found.converged {
                    log::warn!(
                        "{} optimizer hit its iteration budget for M = {m}; using best point (rho = {:e})",
                        kind.label(),
                        found.objective
                    );
                }
                (DenseMatrix::from_diagonal(&found.diagonal), source)
            }
        };
        Ok(Self::assemble(kind, unit, source, scheme.dt()))
    }

    /// Diagonal preconditioner from unit-interval coefficients.
    pub fn from_unit_diagonal(
        kind: QDeltaKind,
        scheme: &CollocationScheme,
        diagonal: &[f64],
        source: CoefficientSource,
    ) -> Result<Self> {
        if diagonal.len() != scheme.num_nodes() {
            return Err(SdcError::InvalidArgument(format!(
                "{} coefficients for {} nodes",
                diagonal.len(),
                scheme.num_nodes()
            )));
        }
        if !kind.is_diagonal() {
            return Err(SdcError::InvalidArgument(format!(
                "{} is not a diagonal kind",
                kind.label()
            )));
        }
        Ok(Self::assemble(
            kind,
            DenseMatrix::from_diagonal(diagonal),
            source,
            scheme.dt(),
        ))
    }

    /// Loads MIN-SR coefficients from a JSON sidecar.
    pub fn from_file(path: impl AsRef<Path>, scheme: &CollocationScheme) -> Result<Self> {
        let file = CoefficientsFile::load(path)?;
        let kind = file.validate_for(scheme)?;
        Self::from_unit_diagonal(kind, scheme, &file.diagonal, CoefficientSource::LoadedFromFile)
    }

    /// Serializable view of the unit-interval coefficients of a diagonal kind.
    pub fn to_coefficients_file(&self) -> Result<CoefficientsFile> {
        if !matches!(self.kind, QDeltaKind::MinSrS | QDeltaKind::MinSrNs) {
            return Err(SdcError::InvalidArgument(format!(
                "coefficient files only hold MIN-SR kinds, not {}",
                self.kind.label()
            )));
        }
        Ok(CoefficientsFile {
            m: self.unit.rows(),
            family: super::NodeFamily::RadauRight,
            kind: self.kind.label().to_string(),
            diagonal: self.unit.diagonal(),
        })
    }

    fn assemble(kind: QDeltaKind, unit: DenseMatrix, source: CoefficientSource, dt: f64) -> Self {
        Self {
            kind,
            matrix: unit.scaled(dt),
            unit,
            source,
        }
    }

    /// Same coefficients, scaled to the step size of `scheme`.
    pub fn for_scheme(&self, scheme: &CollocationScheme) -> Self {
        assert_eq!(scheme.num_nodes(), self.unit.rows(), "node count mismatch");
        Self {
            kind: self.kind,
            matrix: self.unit.scaled(scheme.dt()),
            unit: self.unit.clone(),
            source: self.source.clone(),
        }
    }

    pub fn kind(&self) -> QDeltaKind {
        self.kind
    }

    /// Entries for the current step size.
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// Entries for a unit step.
    pub fn unit_matrix(&self) -> &DenseMatrix {
        &self.unit
    }

    #[inline]
    pub fn entry(&self, m: usize, j: usize) -> f64 {
        self.matrix[(m, j)]
    }

    /// True iff every off-diagonal entry is zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.unit.rows();
        (0..n).all(|i| (0..n).all(|j| i == j || self.unit[(i, j)] == 0.0))
    }

    pub fn source(&self) -> &CoefficientSource {
        &self.source
    }

    /// Replaces the entries with an arbitrary (possibly full) matrix.
    #[cfg(test)]
    pub(crate) fn with_matrix_for_tests(mut self, matrix: DenseMatrix) -> Self {
        let dt = if self.unit.max_abs() > 0.0 {
            self.matrix.max_abs() / self.unit.max_abs()
        } else {
            1.0
        };
        self.unit = matrix.scaled(1.0 / dt);
        self.matrix = matrix;
        self
    }
}

fn unit_substeps(c: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    c.iter()
        .map(|&x| {
            let d = x - prev;
            prev = x;
            d
        })
        .collect()
}

/// `U^T` from the Doolittle factorization `Q^T = L U` without pivoting.
pub(crate) fn lu_trick(q: &DenseMatrix) -> Result<DenseMatrix> {
    let n = q.rows();
    let mut u = q.transpose();
    let scale = u.norm_inf();
    for k in 0..n {
        let pivot = u[(k, k)];
        if pivot.abs() <= 1e-14 * scale {
            return Err(SdcError::FactorizationFailure { pivot: k });
        }
        for i in k + 1..n {
            let l = u[(i, k)] / pivot;
            u[(i, k)] = 0.0;
            for j in k + 1..n {
                let v = u[(k, j)];
                u[(i, j)] -= l * v;
            }
        }
    }
    Ok(u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &DenseMatrix, b: &[f64], tol: f64) {
        for (x, y) in a.as_slice().iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn implicit_and_explicit_euler() {
        let s = CollocationScheme::radau_right(2, 0.0, 1.0).unwrap();
        let ie = QDeltaMatrix::new(QDeltaKind::ImplicitEuler, &s).unwrap();
        approx(ie.matrix(), &[1.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0], 1e-15);
        let ee = QDeltaMatrix::new(QDeltaKind::ExplicitEuler, &s).unwrap();
        approx(ee.matrix(), &[0.0, 0.0, 2.0 / 3.0, 0.0], 1e-15);
        assert!(!ie.is_diagonal());
    }

    #[test]
    fn lu_trick_two_nodes() {
        let s = CollocationScheme::radau_right(2, 0.0, 1.0).unwrap();
        let lu = QDeltaMatrix::new(QDeltaKind::Lu, &s).unwrap();
        approx(lu.matrix(), &[5.0 / 12.0, 0.0, 3.0 / 4.0, 2.0 / 5.0], 1e-14);
    }

    #[test]
    fn lu_trick_reports_zero_pivot() {
        let q = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(lu_trick(&q), Err(SdcError::FactorizationFailure { pivot: 0 }));
    }

    #[test]
    fn picard_is_zero_for_any_size() {
        for m in 1..=6 {
            let s = CollocationScheme::radau_right(m, 0.0, 0.7).unwrap();
            let p = QDeltaMatrix::new(QDeltaKind::Picard, &s).unwrap();
            assert!(p.matrix().as_slice().iter().all(|v| *v == 0.0));
            assert!(p.is_diagonal());
        }
    }

    #[test]
    fn structure_invariants() {
        for m in 1..=6 {
            let s = CollocationScheme::radau_right(m, 0.0, 0.5).unwrap();
            for kind in QDeltaKind::ALL {
                let qd = QDeltaMatrix::new(kind, &s).unwrap();
                let a = qd.matrix();
                for i in 0..m {
                    for j in i + 1..m {
                        assert_eq!(a[(i, j)], 0.0, "{kind} upper entry");
                    }
                    let d = a[(i, i)];
                    match kind {
                        QDeltaKind::ExplicitEuler | QDeltaKind::Picard => assert_eq!(d, 0.0),
                        _ => assert!(d > 0.0, "{kind} diagonal {d}"),
                    }
                }
                assert_eq!(qd.is_diagonal(), kind.is_diagonal() || m == 1);
            }
        }
    }

    #[test]
    fn rescaling_is_linear() {
        let s1 = CollocationScheme::radau_right(4, 0.0, 1.0).unwrap();
        let s2 = s1.remap(0.0, 0.25);
        let lu = QDeltaMatrix::new(QDeltaKind::Lu, &s1).unwrap();
        let lu2 = lu.for_scheme(&s2);
        assert_eq!(lu2.matrix(), &lu.matrix().scaled(0.25));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in QDeltaKind::ALL {
            assert_eq!(k.name().parse::<QDeltaKind>().unwrap(), k);
            assert_eq!(k.label().parse::<QDeltaKind>().unwrap(), k);
        }
        assert!("gauss".parse::<QDeltaKind>().is_err());
    }
}
