use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation order k must be at least 2, got {0}")]
    InvalidRotationOrder(usize),

    #[error("unsupported dimension {0}; only 2 and 3 are available")]
    UnsupportedDimension(usize),

    #[error("unsupported group (k={k}, l={l}, m={m}); only l=1 with m in {{0,1}} is available")]
    UnsupportedGroup { k: usize, l: usize, m: usize },

    #[error("refinement would create {requested} nodes, above the budget of {budget}")]
    NodeBudgetExceeded { requested: usize, budget: usize },

    #[error("boundary facet {0} has zero measure")]
    DegenerateFacet(usize),

    #[error("cell {0} has non-positive volume")]
    InvertedCell(usize),

    #[error("mesh and group disagree: {0}")]
    GroupMismatch(String),

    #[error("field has {found} coefficients but the mesh has {expected} vertices")]
    FieldLength { expected: usize, found: usize },

    #[error("zero trace: the field vanishes on the boundary")]
    ZeroTrace,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("bubbles overlap: width {width} must stay below half the inter-peak distance {half_distance}")]
    OverlappingBubbles { width: f64, half_distance: f64 },

    #[error("energy evaluated to a non-finite value at iteration {0}")]
    NonFiniteEnergy(usize),

    #[error("oracle did not converge after {iterations} iterations (last quotient {quotient})")]
    NoConvergence { iterations: usize, quotient: f64 },

    #[error("malformed mesh document: {0}")]
    MalformedMesh(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
