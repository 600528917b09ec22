//! Desk-scale model shapes. Only RMC3-mini follows published layer widths;
//! the NCF and Wide & Deep stand-ins are invented shapes of similar
//! character (few wide tables vs. many narrow ones).

use super::{ModelSpec, TableSpec};

pub fn rmc3_mini() -> ModelSpec {
    ModelSpec::new(
        "rmc3-mini",
        13,
        vec![64, 16],
        vec![64, 1],
        vec![TableSpec { rows: 20_000, ev_dim: 16 }; 8],
    )
    .expect("preset is valid")
}

pub fn ncf_mini() -> ModelSpec {
    ModelSpec::new(
        "ncf-mini",
        4,
        vec![32, 16],
        vec![64, 32, 1],
        vec![TableSpec { rows: 50_000, ev_dim: 32 }; 2],
    )
    .expect("preset is valid")
}

pub fn wnd_mini() -> ModelSpec {
    ModelSpec::new(
        "wnd-mini",
        8,
        vec![32, 8],
        vec![128, 64, 1],
        vec![TableSpec { rows: 10_000, ev_dim: 8 }; 16],
    )
    .expect("preset is valid")
}

pub fn by_name(name: &str) -> Option<ModelSpec> {
    match name {
        "rmc3-mini" => Some(rmc3_mini()),
        "ncf-mini" => Some(ncf_mini()),
        "wnd-mini" => Some(wnd_mini()),
        _ => None,
    }
}

pub const NAMES: [&str; 3] = ["rmc3-mini", "ncf-mini", "wnd-mini"];
