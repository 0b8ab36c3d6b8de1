//! Built-in public drive cycles, plus user cycles from a directory.
//!
//! Extra cycles are read from `$MIGP_CYCLE_DIR/<name>.csv` with velocities in
//! m/s. Built-in names take precedence.

use std::path::PathBuf;

use super::{central_difference, parse_cycle, DrivingCycle, VelocityUnit};
use crate::error::{Error, Result};

pub const FIXTURE_DIR_ENV: &str = "MIGP_CYCLE_DIR";

struct Builtin {
    name: &'static str,
    data: &'static str,
    unit: VelocityUnit,
}

const BUILTIN: &[Builtin] = &[
    Builtin {
        name: "wltc",
        data: include_str!("../../fixtures/cycles/wltc_class3b.csv"),
        unit: VelocityUnit::KilometersPerHour,
    },
    Builtin {
        name: "ftp75",
        data: include_str!("../../fixtures/cycles/ftp75.csv"),
        unit: VelocityUnit::MetersPerSecond,
    },
    Builtin {
        name: "hwfet",
        data: include_str!("../../fixtures/cycles/hwfet.csv"),
        unit: VelocityUnit::MetersPerSecond,
    },
    Builtin {
        name: "us06",
        data: include_str!("../../fixtures/cycles/us06.csv"),
        unit: VelocityUnit::MetersPerSecond,
    },
];

fn user_dir() -> Option<PathBuf> {
    std::env::var_os(FIXTURE_DIR_ENV).map(PathBuf::from)
}

/// Built-in names followed by any `*.csv` stems in the user directory.
pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = BUILTIN.iter().map(|b| b.name.to_string()).collect();
    if let Some(dir) = user_dir() {
        if let Ok(rd) = std::fs::read_dir(dir) {
            let mut extra: Vec<String> = rd
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .filter(|s| !names.contains(s))
                .collect();
            extra.sort();
            names.extend(extra);
        }
    }
    names
}

/// Load a named cycle with accelerations filled in.
pub fn load_fixture(name: &str) -> Result<DrivingCycle> {
    let raw = if let Some(b) = BUILTIN.iter().find(|b| b.name == name) {
        parse_cycle(b.data.as_bytes(), b.name, b.unit)?
    } else {
        let path = user_dir().map(|d| d.join(format!("{name}.csv")));
        match path {
            Some(p) if p.is_file() => super::load_cycle(&p, VelocityUnit::MetersPerSecond)?,
            _ => {
                return Err(Error::UnknownFixture {
                    name: name.to_string(),
                    available: fixture_names().join(", "),
                })
            }
        }
    };
    central_difference(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wltc_has_1801_samples() {
        let c = load_fixture("wltc").unwrap();
        assert_eq!(c.len(), 1801);
        let vmax = c.samples.iter().map(|s| s.v).fold(0.0, f64::max);
        assert!((vmax * 3.6 - 131.3).abs() < 0.05, "{vmax}");
    }

    #[test]
    fn wltc_acceleration_extrema_signs() {
        let c = load_fixture("wltc").unwrap();
        let a: Vec<f64> = c.samples.iter().map(|s| s.a.unwrap()).collect();
        let amax = a.iter().copied().fold(f64::MIN, f64::max);
        let amin = a.iter().copied().fold(f64::MAX, f64::min);
        assert!(amax > 1.0 && amax < 2.0, "{amax}");
        assert!(amin < -1.0 && amin > -2.0, "{amin}");
    }

    #[test]
    fn all_builtins_load() {
        for b in BUILTIN {
            let c = load_fixture(b.name).unwrap();
            assert!(c.len() > 500);
        }
    }

    #[test]
    fn unknown_fixture_lists_available() {
        let err = load_fixture("nope").unwrap_err().to_string();
        assert!(err.contains("wltc") && err.contains("ftp75"), "{err}");
    }
}
