use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not a prime")]
    InvalidPrime(u64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{0}: argument must be nonzero")]
    ZeroInput(&'static str),
    #[error("the zero polynomial is not supported here")]
    ZeroPolynomial,
    #[error("rv of the candidate does not match the requested class")]
    RvMismatch,
    #[error("the derivative vanishes at the root (non-simple root)")]
    NonSimpleRoot,
    #[error("decompositions live over different primes or domains")]
    DomainMismatch,
    #[error("inputs decompose different sets")]
    DifferentSets,
    #[error("cells overlap")]
    Overlap,
    #[error("cell carries no order law for {0}")]
    MissingLaw(String),
    #[error("cell center carries no term provenance")]
    NoProvenance,
    #[error("divergent measure: m-range is unbounded below")]
    DivergentRange,
    #[error("p divides a coefficient denominator")]
    PDenominator,
    #[error("internal bound exceeded: {0}")]
    BoundExceeded(String),
    #[error("syntax error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("quantifiers not supported")]
    QuantifierNotSupported,
}

pub type Result<T> = std::result::Result<T, Error>;
