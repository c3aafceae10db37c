use thiserror::Error;

/// Crate-wide error type. Variants carry enough context to print the
/// single-line machine-readable error the CLI emits on exit.
#[derive(Debug, Error)]
pub enum Error {
    /// Fewer than three tessellation seeds fell in the padded window, so
    /// no Voronoi diagram exists (or all seeds were collinear).
    #[error("degenerate tessellation: {0}")]
    DegenerateTessellation(String),

    /// The requested window/intensity combination would exceed the edge
    /// budget. Callers should shrink the window or the intensity.
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    /// A street-point or path query was issued against an empty or
    /// foreign street system.
    #[error("invalid street reference: {0}")]
    InvalidStreetReference(String),

    /// No path exists between the requested street points (distinct
    /// connected components).
    #[error("no route between the requested points")]
    NoRoute,

    /// The epidemic step size does not satisfy `dt < rho`.
    #[error("discretization contract violated: dt = {dt_s} s must be smaller than rho = {rho_s} s")]
    DiscretizationContract { dt_s: f64, rho_s: f64 },

    /// A connection-interval query was made for agents that do not share
    /// a street at the queried step.
    #[error("connection interval undefined: agents are not on a common street")]
    NotOnCommonStreet,

    /// Waypoint resampling exhausted its retry budget: every candidate
    /// destination fell in a street component unreachable from the agent.
    #[error("isolated agent: {0}")]
    IsolatedAgent(String),

    /// Parameter validation failed (non-positive intensity, u > H, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A flat config file or CLI override could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// Device placement produced no agents, so there is nothing to infect.
    #[error("empty placement: no devices were generated and mode requires one")]
    EmptyPlacement,

    /// Street-system text format violation.
    #[error("map format error: {0}")]
    MapFormat(String),

    /// Wrapped I/O error with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A sweep hit its run budget; the payload is the resume token.
    #[error("run budget exhausted; resume from token {0}")]
    BudgetExhausted(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
