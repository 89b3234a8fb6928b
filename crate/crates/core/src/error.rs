use num_complex::Complex64;
use thiserror::Error;

use crate::reduction::Violation;

/// Which system of a full/reduced pair an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemRole {
    Full,
    Reduced,
}

impl std::fmt::Display for SystemRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemRole::Full => write!(f, "full-order system"),
            SystemRole::Reduced => write!(f, "reduced model"),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("resolvent (sI - A) is singular at s = {s} (rcond {rcond:.3e}){}", role_suffix(*.role))]
    SingularResolvent {
        s: Complex64,
        rcond: f64,
        role: Option<SystemRole>,
    },

    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),

    #[error("spectra overlap: minimum eigenvalue distance {distance:.3e} <= {threshold:.3e}")]
    SpectraOverlap { distance: f64, threshold: f64 },

    #[error("ill-conditioned problem: {0}")]
    IllConditioned(String),

    #[error("interpolation points are not closed under conjugation: {0}")]
    ConjugateClosureViolation(String),

    #[error("duplicate interpolation point {0}")]
    DuplicatePoint(Complex64),

    #[error("no non-singular canonical transform found: {0}")]
    TransformSingular(String),

    #[error("pole placement failed: achieved spectrum deviates by {deviation:.3e} (relative)")]
    PlacementFailure { deviation: f64 },

    #[error("selecting {count} eigenvalues would split a complex-conjugate pair")]
    PairSplit { count: usize },

    #[error("eigenvalue {0} is not simple")]
    DefectiveEigenvalue(Complex64),

    #[error("matrix is rank deficient (sigma_min/sigma_max = {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("inadmissible reduction parameters: {}", describe_violations(.0))]
    InadmissibleParameters(Vec<Violation>),

    #[error("generator matrix is not skew-symmetric (||S + S^T|| = {0:.3e})")]
    NotSkew(f64),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("degenerate random draw: {0}")]
    DegenerateDraw(String),

    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

fn role_suffix(role: Option<SystemRole>) -> String {
    role.map(|r| format!(" in {r}")).unwrap_or_default()
}

fn describe_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Short machine-readable name of the underlying failure.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidInput(_) => "InvalidInput",
            Error::SingularResolvent { .. } => "SingularResolvent",
            Error::EigenFailure(_) => "EigenFailure",
            Error::SpectraOverlap { .. } => "SpectraOverlap",
            Error::IllConditioned(_) => "IllConditioned",
            Error::ConjugateClosureViolation(_) => "ConjugateClosureViolation",
            Error::DuplicatePoint(_) => "DuplicatePoint",
            Error::TransformSingular(_) => "TransformSingular",
            Error::PlacementFailure { .. } => "PlacementFailure",
            Error::PairSplit { .. } => "PairSplit",
            Error::DefectiveEigenvalue(_) => "DefectiveEigenvalue",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::InadmissibleParameters(_) => "InadmissibleParameters",
            Error::NotSkew(_) => "NotSkew",
            Error::HypothesisViolated(_) => "HypothesisViolated",
            Error::DegenerateDraw(_) => "DegenerateDraw",
            Error::NumericalOverflow(_) => "NumericalOverflow",
            Error::Stage { source, .. } => source.reason(),
        }
    }

    /// Innermost stage label, if the error went through [`Error::at_stage`].
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, source } => source.stage().or(Some(stage)),
            _ => None,
        }
    }

    /// The error with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Errors caused by malformed input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::DimensionMismatch(_)
                | Error::InvalidInput(_)
                | Error::ConjugateClosureViolation(_)
                | Error::DuplicatePoint(_)
        )
    }

    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn with_role(self, role: SystemRole) -> Error {
        match self {
            Error::SingularResolvent { s, rcond, .. } => Error::SingularResolvent {
                s,
                rcond,
                role: Some(role),
            },
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Attach a stage label to the error side of a result.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
