//! Named initializers as compared in the benchmark.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{bundle_adjust, init_dbscan, init_pnp_chain, BaInit, BaMode, DbscanConfig};
use crate::error::{Error, Result};
use crate::estimation::RansacConfig;
use crate::gpo::run_gpo_pipeline;
use crate::solver::SolverConfig;
use crate::window::{FrameWindow, InitializationResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GPO")]
    Gpo,
    #[serde(rename = "GPO_noRANSAC")]
    GpoNoRansac,
    #[serde(rename = "PNP_BA")]
    PnpBa,
    #[serde(rename = "BA")]
    Ba,
    #[serde(rename = "BA_noRANSAC")]
    BaNoRansac,
    #[serde(rename = "PBA")]
    Pba,
    #[serde(rename = "FPBA")]
    Fpba,
    #[serde(rename = "PNP_CHAIN")]
    PnpChain,
    #[serde(rename = "DBSCAN")]
    Dbscan,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Gpo,
        Method::GpoNoRansac,
        Method::PnpBa,
        Method::Ba,
        Method::BaNoRansac,
        Method::Pba,
        Method::Fpba,
        Method::PnpChain,
        Method::Dbscan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gpo => "GPO",
            Method::GpoNoRansac => "GPO_noRANSAC",
            Method::PnpBa => "PNP_BA",
            Method::Ba => "BA",
            Method::BaNoRansac => "BA_noRANSAC",
            Method::Pba => "PBA",
            Method::Fpba => "FPBA",
            Method::PnpChain => "PNP_CHAIN",
            Method::Dbscan => "DBSCAN",
        }
    }

    /// Whether homography-inlier track filtering is on by default.
    pub fn default_ransac(self) -> bool {
        !matches!(self, Method::GpoNoRansac | Method::BaNoRansac | Method::PnpBa)
    }

    /// Variants named `_noRANSAC` ignore an override.
    fn fixed_ransac(self) -> bool {
        matches!(self, Method::GpoNoRansac | Method::BaNoRansac)
    }

    pub fn bundle_adjustment(self) -> Option<(BaMode, BaInit)> {
        match self {
            Method::PnpBa => Some((BaMode::Ba, BaInit::Pnp)),
            Method::Ba | Method::BaNoRansac => Some((BaMode::Ba, BaInit::Dbscan)),
            Method::Pba => Some((BaMode::Pba, BaInit::Dbscan)),
            Method::Fpba => Some((BaMode::Fpba, BaInit::Dbscan)),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub solver: SolverConfig,
    pub ransac: RansacConfig,
    pub dbscan: DbscanConfig,
    /// Forces track filtering on or off for methods without a fixed variant.
    pub ransac_override: Option<bool>,
}

/// Runs one initializer on a window.
pub fn run_method(
    method: Method,
    window: &FrameWindow,
    config: &MethodConfig,
    seed: u64,
) -> Result<InitializationResult> {
    let filter = match config.ransac_override {
        Some(on) if !method.fixed_ransac() => on,
        _ => method.default_ransac(),
    };
    let mut result = match method {
        Method::Gpo | Method::GpoNoRansac => {
            run_gpo_pipeline(window, filter.then_some(&config.ransac), &config.solver, seed)?
        }
        Method::PnpChain => init_pnp_chain(window, &config.ransac, filter, seed)?,
        Method::Dbscan => init_dbscan(window, &config.ransac, &config.dbscan, filter, seed)?,
        _ => {
            let (mode, init) = method
                .bundle_adjustment()
                .ok_or(Error::InvalidConfig(format!("{method} is not a bundle adjustment")))?;
            let start = match init {
                BaInit::Pnp => init_pnp_chain(window, &config.ransac, filter, seed)?,
                BaInit::Dbscan => init_dbscan(window, &config.ransac, &config.dbscan, filter, seed)?,
            };
            bundle_adjust(window, &start, mode, &config.solver)?
        }
    };
    result.method = method.name().to_string();
    Ok(result)
}
