//! Phase-space snapshot files.
//!
//! Plain text. Header lines start with `#` and carry `key = value` pairs
//! (unit conversions, seed, parameter hash, lattice depth and detuning). Each
//! slice opens with `# slice <k> time = <t>` and is followed by one
//! whitespace-separated row per atom:
//!
//! ```text
//! atomIndex x y z px py pz m
//! ```
//!
//! Positions are in `1/k`, momenta in `ħk`, and `m` is the adiabatic level
//! index (0 = lowest). Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::langevin::{AtomRow, SnapshotSlice};
use crate::units::Transition;

pub const FORMAT: &str = "sisyphus-snapshot 1";
pub const COLUMNS: &str = "atomIndex x y z px py pz m";

/// Everything needed to analyse a snapshot file on its own.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub seed: u64,
    pub params_hash: String,
    pub detuning: f64,
    pub depth: f64,
    /// Metres per internal length unit.
    pub length_unit: f64,
    /// m/s per internal momentum unit (`ħk/M`).
    pub velocity_unit: f64,
    /// Seconds per internal time unit.
    pub time_unit: f64,
    pub mass: f64,
}

impl SnapshotHeader {
    pub fn new(
        transition: &Transition,
        seed: u64,
        params_hash: &str,
        detuning: f64,
        depth: f64,
    ) -> Self {
        SnapshotHeader {
            seed,
            params_hash: params_hash.to_string(),
            detuning,
            depth,
            length_unit: transition.length_unit(),
            velocity_unit: transition.velocity_unit(),
            time_unit: transition.time_unit(),
            mass: transition.mass,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub slices: Vec<SnapshotSlice>,
}

impl Snapshot {
    /// All atom rows of all slices.
    pub fn rows(&self) -> impl Iterator<Item = &AtomRow> {
        self.slices.iter().flat_map(|s| s.atoms.iter())
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut s = String::new();
        let _ = writeln!(s, "# {FORMAT}");
        let _ = writeln!(s, "# seed = {}", h.seed);
        let _ = writeln!(s, "# params_hash = {}", h.params_hash);
        let _ = writeln!(s, "# detuning_Gamma = {:e}", h.detuning);
        let _ = writeln!(s, "# U0_Er = {:e}", h.depth);
        let _ = writeln!(s, "# length_unit_m = {:e}", h.length_unit);
        let _ = writeln!(s, "# velocity_unit_m_per_s = {:e}", h.velocity_unit);
        let _ = writeln!(s, "# time_unit_s = {:e}", h.time_unit);
        let _ = writeln!(s, "# mass_kg = {:e}", h.mass);
        let _ = writeln!(s, "# slices = {}", self.slices.len());
        let _ = writeln!(s, "# {COLUMNS}");
        for (k, slice) in self.slices.iter().enumerate() {
            let _ = writeln!(s, "# slice {k} time = {:e}", slice.time);
            for a in &slice.atoms {
                let _ = writeln!(
                    s,
                    "{} {:e} {:e} {:e} {:e} {:e} {:e} {}",
                    a.index,
                    a.position.x,
                    a.position.y,
                    a.position.z,
                    a.momentum.x,
                    a.momentum.y,
                    a.momentum.z,
                    a.level
                );
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Snapshot> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Snapshot::parse(&text).map_err(|reason| Error::Snapshot {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn parse(text: &str) -> std::result::Result<Snapshot, String> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_start_matches('#').trim() == FORMAT => {}
            _ => return Err(format!("missing `{FORMAT}` marker")),
        }
        let mut keys = BTreeMap::new();
        let mut slices: Vec<SnapshotSlice> = Vec::new();
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(rest) = comment.strip_prefix("slice ") {
                    let time = rest
                        .split_once("time =")
                        .and_then(|(_, t)| t.trim().parse::<f64>().ok())
                        .ok_or_else(|| format!("line {}: malformed slice marker", n + 1))?;
                    slices.push(SnapshotSlice {
                        time,
                        atoms: Vec::new(),
                    });
                } else if let Some((k, v)) = comment.split_once('=') {
                    keys.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let slice = slices
                .last_mut()
                .ok_or_else(|| format!("line {}: atom row before first slice", n + 1))?;
            slice
                .atoms
                .push(parse_row(line).map_err(|e| format!("line {}: {e}", n + 1))?);
        }
        let get = |k: &str| {
            keys.get(k)
                .ok_or_else(|| format!("missing header key `{k}`"))
        };
        let num = |k: &str| -> std::result::Result<f64, String> {
            get(k)?
                .parse()
                .map_err(|_| format!("header key `{k}` is not a number"))
        };
        let header = SnapshotHeader {
            seed: get("seed")?
                .parse()
                .map_err(|_| "seed is not an integer".to_string())?,
            params_hash: get("params_hash")?.clone(),
            detuning: num("detuning_Gamma")?,
            depth: num("U0_Er")?,
            length_unit: num("length_unit_m")?,
            velocity_unit: num("velocity_unit_m_per_s")?,
            time_unit: num("time_unit_s")?,
            mass: num("mass_kg")?,
        };
        let declared: usize = get("slices")?
            .parse()
            .map_err(|_| "slice count is not an integer".to_string())?;
        if declared != slices.len() {
            return Err(format!(
                "header declares {declared} slices, file holds {}",
                slices.len()
            ));
        }
        Ok(Snapshot { header, slices })
    }

    /// Cloud in SI units pooled over all slices.
    pub fn cloud(&self) -> crate::thermometry::Cloud {
        let mut cloud = crate::thermometry::Cloud::default();
        for r in self.rows() {
            cloud.positions.push(r.position * self.header.length_unit);
            cloud
                .velocities
                .push(r.momentum * self.header.velocity_unit);
        }
        cloud
    }
}

fn parse_row(line: &str) -> std::result::Result<AtomRow, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 8 {
        return Err(format!("expected 8 columns, found {}", fields.len()));
    }
    let f = |k: usize| -> std::result::Result<f64, String> {
        fields[k]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("column {} is not a finite number", k + 1))
    };
    let int = |k: usize| -> std::result::Result<usize, String> {
        fields[k]
            .parse()
            .map_err(|_| format!("column {} is not an index", k + 1))
    };
    Ok(AtomRow {
        index: int(0)?,
        position: Vector3::new(f(1)?, f(2)?, f(3)?),
        momentum: Vector3::new(f(4)?, f(5)?, f(6)?),
        level: int(7)?,
    })
}
