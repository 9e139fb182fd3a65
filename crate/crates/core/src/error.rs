use thiserror::Error;

pub type Result<T> = std::result::Result<T, MarketError>;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("sale for user {user}: final price {lambda_f} is below the ISP price {g}")]
    PriceBelowIspFloor { user: String, lambda_f: f64, g: f64 },

    #[error("standalone ISP revenue {r_i} exceeds total revenue {r_total}")]
    IspRevenueExceedsTotal { r_total: f64, r_i: f64 },

    #[error("wfp {0} is not an individual provider")]
    NotIndividual(String),

    #[error("wfp {wfp}: sold volume {sold} exceeds unused quota {unused}")]
    QuotaExceeded { wfp: String, sold: f64, unused: f64 },

    #[error("sale for user {user} belongs to wfp {sale_wfp}, not {wfp}")]
    ForeignSale {
        user: String,
        sale_wfp: String,
        wfp: String,
    },

    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("unknown link {0}")]
    UnknownLink(String),

    #[error("characteristic function has no value for coalition {0}")]
    MissingCoalition(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenario mode {found} cannot be run as {expected}")]
    WrongMode {
        expected: &'static str,
        found: &'static str,
    },

    #[error("config parse error: {0}")]
    Parse(String),
}
