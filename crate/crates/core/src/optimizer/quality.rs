//! Layered quality model and cost-vector checks.

use std::fmt;

use crate::prlnc::VideoProfile;

/// Relative slack when comparing a cumulative rate against its threshold.
pub const RATE_TOL: f64 = 1e-6;

/// Highest layer whose cumulative threshold is met: the largest `l` with
/// `sum_{k<=l} rates[k] >= sum_{k<=l} R_k`. Nested coding means class-`m`
/// packets also count toward every lower layer, so the test is cumulative.
pub fn decodable_level(profile: &VideoProfile, rates: &[f64]) -> Option<usize> {
    let mut have = 0.0;
    let mut need = 0.0;
    let mut best = None;
    for l in 0..profile.layers() {
        have += rates.get(l).copied().unwrap_or(0.0);
        need += profile.rates[l];
        if have >= need * (1.0 - RATE_TOL) {
            best = Some(l);
        }
    }
    best
}

/// Per-client quality in dB for per-class delivered rates.
pub fn quality(profile: &VideoProfile, rates: &[f64]) -> f64 {
    profile.quality_of(decodable_level(profile, rates))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostViolation {
    /// `c_l <= 0` for the first class or `c_l <= c_{l-1}`.
    NotIncreasing { class: usize, value: f64, previous: f64 },
    /// `c_l` does not stay below the quality gain per unit of cumulative rate.
    AboveBound { class: usize, value: f64, bound: f64 },
    WrongLength { expected: usize, found: usize },
}

impl fmt::Display for CostViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostViolation::NotIncreasing { class, value, previous } => {
                write!(f, "c_{class} = {value} must exceed {previous}")
            }
            CostViolation::AboveBound { class, value, bound } => {
                write!(f, "c_{class} = {value} must be below {bound:.6}")
            }
            CostViolation::WrongLength { expected, found } => {
                write!(f, "cost vector has {found} entries, expected {expected}")
            }
        }
    }
}

/// Upper bound on `c_l` for `l >= 1`: `(q_l - q_{l-1}) / sum_{k<=l} R_k`.
pub fn cost_bound(profile: &VideoProfile, l: usize) -> f64 {
    (profile.quality[l] - profile.quality[l - 1]) / profile.cumulative_rate(l)
}

/// Every violated inequality; empty when the vector is admissible.
pub fn validate_costs(profile: &VideoProfile, costs: &[f64]) -> Vec<CostViolation> {
    let mut v = Vec::new();
    if costs.len() != profile.layers() {
        v.push(CostViolation::WrongLength { expected: profile.layers(), found: costs.len() });
        return v;
    }
    for (l, &c) in costs.iter().enumerate() {
        let previous = if l == 0 { 0.0 } else { costs[l - 1] };
        if !(c > previous) {
            v.push(CostViolation::NotIncreasing { class: l, value: c, previous });
        }
        if l >= 1 {
            let bound = cost_bound(profile, l);
            if !(c < bound) {
                v.push(CostViolation::AboveBound { class: l, value: c, bound });
            }
        }
    }
    v
}
