use thiserror::Error;

/// Library-wide error type. Variants carry enough context to print an
/// actionable message; the CLI maps validation-shaped variants to exit
/// code 2 and numerical failures to exit code 3.
#[derive(Error, Debug)]
pub enum Error {
    #[error("grid validation: {0}")]
    GridValidation(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-real synthesis: relative imaginary residue {residue:.3e} exceeds 1e-10")]
    NonRealSynthesis { residue: f64 },

    #[error("weight truncates entire spectrum: R = {r} is at or above the grid Nyquist radius {nyquist}")]
    WeightTruncatesSpectrum { r: f64, nyquist: f64 },

    #[error("unresolved packet: width {width} below 3*max grid spacing {min_width}")]
    UnresolvedPacket { width: f64, min_width: f64 },

    #[error("packet wider than domain: 6*width = {support} exceeds half the smallest extent {half_extent}")]
    PacketTooWide { support: f64, half_extent: f64 },

    #[error("unstable step: CFL number {cfl:.4} exceeds 0.9; largest stable dt is {required_dt:.6e}")]
    UnstableStep { cfl: f64, required_dt: f64 },

    #[error("non-causal source: {0}")]
    NonCausalSource(String),

    #[error("speed validation: {0}")]
    SpeedValidation(String),

    #[error("nonlinearity blow-up: non-finite value while evaluating coefficients of degree {degree}")]
    BlowUp { degree: usize },

    #[error("outside small-data regime: successive-difference ratio {ratio:.4} >= 1 at iterate 3")]
    OutsideSmallDataRegime { ratio: f64 },

    #[error("source validation: {0}")]
    SourceValidation(String),

    #[error("nonlinearity validation: {0}")]
    NonlinearityValidation(String),

    #[error("finite-difference solve failed for sign pattern {pattern}: {source}")]
    SignPatternSolve {
        pattern: String,
        #[source]
        source: Box<Error>,
    },

    #[error("dyadic system validation: {0}")]
    DyadicValidation(String),

    #[error("not on the characteristic set: relative defect {defect:.3e} exceeds 1e-6")]
    OffCharacteristicSet { defect: f64 },

    #[error("step too large: Hamiltonian drift {drift:.3e} exceeds tolerance; retry with ds = {suggested_ds:.3e}")]
    StepTooLarge { drift: f64, suggested_ds: f64 },

    #[error("trajectory never reaches the target time slice t = {target}")]
    TargetSliceNotReached { target: f64 },

    #[error("glancing configuration: |det S| = {det:.3e} below 1e-9")]
    GlancingConfiguration { det: f64 },

    #[error("covering validation: {0}")]
    CoveringValidation(String),

    #[error("network validation: {0}")]
    NetworkValidation(String),

    #[error("empty observed set: cost needs at least one observed patch")]
    EmptyObservedSet,

    #[error("activation blow-up: non-finite value in paraproduct chain at depth {depth}")]
    ActivationBlowUp { depth: usize },

    #[error("training validation: {0}")]
    TrainValidation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fit domain: {0}")]
    FitDomain(String),

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by invalid configuration or inputs, as opposed
    /// to numerical failures discovered mid-computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::GridValidation(_)
                | Error::GridMismatch(_)
                | Error::WeightTruncatesSpectrum { .. }
                | Error::UnresolvedPacket { .. }
                | Error::PacketTooWide { .. }
                | Error::UnstableStep { .. }
                | Error::NonCausalSource(_)
                | Error::SpeedValidation(_)
                | Error::SourceValidation(_)
                | Error::NonlinearityValidation(_)
                | Error::DyadicValidation(_)
                | Error::CoveringValidation(_)
                | Error::NetworkValidation(_)
                | Error::EmptyObservedSet
                | Error::TrainValidation(_)
                | Error::Unsupported(_)
                | Error::FitDomain(_)
                | Error::Serialization(_)
                | Error::Format(_)
        )
    }
}
