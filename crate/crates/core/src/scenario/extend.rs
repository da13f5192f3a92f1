//! Single-period to 24-hour scenario extension.
//!
//! Random draws come from xoshiro256** seeded through SplitMix64
//! (`seed_from_u64`). Sellers are visited in file order; a renewable seller
//! consumes one draw for its technology, a small conventional seller one draw
//! for its minimum uptime, and every other seller none.
//!
//! * technology: `next_u64() >> 63 == 0` selects wind, otherwise solar.
//! * uptime: `k = ((next_u64() >> 32) * 3) >> 32` indexes `[0, 4, 6]`.

use std::io::Read;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::Deserialize;
use thiserror::Error;

use super::{Scenario, Seller};

pub const DEFAULT_UPTIME_THRESHOLD: f64 = 1500.0;
pub const HOURS: usize = 24;
const UPTIME_CHOICES: [usize; 3] = [0, 4, 6];

/// Hourly availability factors, normalized so the base hour is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewableProfiles {
    pub wind: Vec<f64>,
    pub solar: Vec<f64>,
    /// 1-based hour whose factor reproduces the single-period data.
    pub base_hour: usize,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profiles CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("profiles must have exactly {HOURS} rows, found {0}")]
    RowCount(usize),
    #[error("hour {0} is missing or repeated")]
    Hours(usize),
    #[error("negative factor at hour {0}")]
    Negative(usize),
    #[error("base hour {hour} has zero {series} factor; cannot normalize")]
    ZeroBase { hour: usize, series: &'static str },
    #[error("base hour {0} outside 1..=24")]
    BaseHour(usize),
}

#[derive(Deserialize)]
struct Row {
    hour: usize,
    wind: f64,
    solar: f64,
}

/// Read `hour,wind,solar` rows and normalize both series at `base_hour`.
pub fn parse_profiles(reader: impl Read, base_hour: usize) -> Result<RenewableProfiles, ProfileError> {
    if !(1..=HOURS).contains(&base_hour) {
        return Err(ProfileError::BaseHour(base_hour));
    }
    let mut rows: Vec<Row> = csv::Reader::from_reader(reader).deserialize().collect::<Result<_, _>>()?;
    if rows.len() != HOURS {
        return Err(ProfileError::RowCount(rows.len()));
    }
    rows.sort_by_key(|r| r.hour);
    for (i, r) in rows.iter().enumerate() {
        if r.hour != i + 1 {
            return Err(ProfileError::Hours(i + 1));
        }
        if !(r.wind >= 0.0 && r.solar >= 0.0) {
            return Err(ProfileError::Negative(r.hour));
        }
    }
    let base = &rows[base_hour - 1];
    if base.wind == 0.0 {
        return Err(ProfileError::ZeroBase { hour: base_hour, series: "wind" });
    }
    if base.solar == 0.0 {
        return Err(ProfileError::ZeroBase { hour: base_hour, series: "solar" });
    }
    let (bw, bs) = (base.wind, base.solar);
    Ok(RenewableProfiles {
        wind: rows.iter().map(|r| r.wind / bw).collect(),
        solar: rows.iter().map(|r| r.solar / bs).collect(),
        base_hour,
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum ExtendError {
    #[error("horizon must be 1, scenario has {0} periods")]
    Horizon(usize),
}

fn scale_seller(s: &Seller, factors: &[f64]) -> Seller {
    Seller {
        pmin: factors.iter().map(|f| s.pmin[0] * f).collect(),
        pmax: factors.iter().map(|f| s.pmax[0] * f).collect(),
        bids: factors
            .iter()
            .map(|f| s.bids[0].iter().map(|b| super::SellerBid { q: b.q * f, c: b.c }).collect())
            .collect(),
        min_uptime: 0,
        ..s.clone()
    }
}

fn replicate<T: Clone>(v: &[T]) -> Vec<T> {
    vec![v[0].clone(); HOURS]
}

/// Expand a single-period scenario to 24 hours. Renewable output follows the
/// wind or solar profile; conventional units keep their capacity and small
/// ones receive a random minimum uptime.
pub fn extend_to_multiperiod(
    s: &Scenario,
    profiles: &RenewableProfiles,
    seed: u64,
    uptime_threshold: f64,
) -> Result<Scenario, ExtendError> {
    if s.horizon != 1 {
        return Err(ExtendError::Horizon(s.horizon));
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let sellers = s
        .sellers
        .iter()
        .map(|sel| {
            if sel.is_renewable() {
                let wind = rng.next_u64() >> 63 == 0;
                scale_seller(sel, if wind { &profiles.wind } else { &profiles.solar })
            } else {
                let min_uptime = if sel.pmax[0] < uptime_threshold {
                    let k = ((rng.next_u64() >> 32) * 3) >> 32;
                    UPTIME_CHOICES[k as usize]
                } else {
                    0
                };
                Seller {
                    pmin: replicate(&sel.pmin),
                    pmax: replicate(&sel.pmax),
                    bids: replicate(&sel.bids),
                    min_uptime,
                    ..sel.clone()
                }
            }
        })
        .collect();
    let buyers = s
        .buyers
        .iter()
        .map(|b| super::Buyer {
            inelastic: replicate(&b.inelastic),
            dmax: replicate(&b.dmax),
            bids: replicate(&b.bids),
            ..b.clone()
        })
        .collect();
    Ok(Scenario { horizon: HOURS, network: s.network.clone(), sellers, buyers })
}
