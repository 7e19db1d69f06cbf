//! Run orchestration and CSV output.
//!
//! Every CSV starts with `#` comment lines naming the code version, the
//! configuration hash and the seed, followed by a column header and the body.
//! Bodies depend only on (configuration, seed).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::adiabatic::Lattice;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::langevin::{record_seed, run_ensemble, SimParams, TemperatureRecord};
use crate::snapshot::{Snapshot, SnapshotHeader};
use crate::thermometry::{
    image_cloud, linear_scaling_fit, AxisThermometry, ImagingOptions, Measurement, ScalingFit,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const AXES: [&str; 3] = ["x", "y", "z"];
pub const TEMPERATURE_COLUMNS: &str = "detuning_Gamma,U0_Er,axis,T_uK,T_err_uK,method";
pub const RECORD_COLUMNS: &str = "detuning_Gamma,U0_Er,n_atoms,dt_recoil,jumps_per_atom,drift_sigma,equilibrated,Ek_over_U0_x,Ek_over_U0_y,Ek_over_U0_z,non_gaussian";
pub const SCALING_COLUMNS: &str =
    "detuning_Gamma,axis,method,xi_nK_per_Er,xi_err_nK_per_Er,T0_uK,T0_err_uK,points";

/// Temperature estimators written to the CSV `method` column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Time- and ensemble-averaged `M⟨v²⟩/k_B` from the run.
    Kinetic,
    /// `M⟨v²⟩/k_B` over the pooled snapshot atoms.
    Snapshot,
    /// Two-time time-of-flight estimator on the pooled snapshot atoms.
    TimeOfFlight,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Kinetic => "kinetic",
            Method::Snapshot => "snapshot",
            Method::TimeOfFlight => "tof",
        }
    }
}

/// One temperature row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperatureRow {
    pub detuning: f64,
    pub depth: f64,
    pub axis: usize,
    /// Kelvin.
    pub temperature: Measurement,
    pub method: Method,
}

#[derive(Clone, Debug)]
pub struct RecordAnalysis {
    pub record: TemperatureRecord,
    pub imaging: std::result::Result<[AxisThermometry; 3], String>,
}

impl RecordAnalysis {
    pub fn non_gaussian(&self) -> bool {
        match &self.imaging {
            Ok(axes) => axes.iter().any(AxisThermometry::non_gaussian),
            Err(_) => false,
        }
    }

    /// Reasons the record should not be trusted.
    pub fn flags(&self) -> Vec<String> {
        let mut flags = Vec::new();
        let r = &self.record;
        if !r.equilibrated {
            flags.push(format!(
                "detuning {} Γ, U0 {} E_R: kinetic energy drifts by {:.2} sigma",
                r.detuning, r.depth, r.drift_sigma
            ));
        }
        if let Err(e) = &self.imaging {
            flags.push(format!(
                "detuning {} Γ, U0 {} E_R: imaging failed: {e}",
                r.detuning, r.depth
            ));
        }
        flags
    }

    pub fn rows(&self) -> Vec<TemperatureRow> {
        let r = &self.record;
        let row = |axis, temperature, method| TemperatureRow {
            detuning: r.detuning,
            depth: r.depth,
            axis,
            temperature,
            method,
        };
        let mut rows: Vec<TemperatureRow> = (0..3)
            .map(|i| {
                row(
                    i,
                    Measurement {
                        value: r.temperature[i],
                        error: r.temperature_err[i],
                    },
                    Method::Kinetic,
                )
            })
            .collect();
        if let Ok(axes) = &self.imaging {
            rows.extend(axes.iter().map(|a| row(a.axis, a.direct, Method::Snapshot)));
            rows.extend(
                axes.iter()
                    .map(|a| row(a.axis, a.time_of_flight, Method::TimeOfFlight)),
            );
        }
        rows
    }
}

/// Scaling fit of one axis and estimator, per detuning or pooled (`None`).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub detuning: Option<f64>,
    pub axis: usize,
    pub method: Method,
    pub fit: ScalingFit,
}

#[derive(Clone, Debug)]
pub struct ResultBundle {
    pub config_hash: String,
    pub seed: u64,
    pub records: Vec<RecordAnalysis>,
    pub scaling: Vec<ScalingRow>,
}

impl ResultBundle {
    pub fn flags(&self) -> Vec<String> {
        self.records
            .iter()
            .flat_map(RecordAnalysis::flags)
            .collect()
    }

    pub fn temperature_rows(&self) -> Vec<TemperatureRow> {
        self.records.iter().flat_map(RecordAnalysis::rows).collect()
    }

    fn preamble(&self) -> String {
        preamble(&self.config_hash, self.seed)
    }

    pub fn temperatures_csv(&self) -> String {
        self.preamble() + &temperature_body(&self.temperature_rows())
    }

    pub fn records_csv(&self) -> String {
        let mut s = self.preamble();
        s.push_str(RECORD_COLUMNS);
        s.push('\n');
        for a in &self.records {
            let r = &a.record;
            let _ = writeln!(
                s,
                "{},{},{},{:.6e},{:.3},{:.3},{},{:.5},{:.5},{:.5},{}",
                r.detuning,
                r.depth,
                r.n_atoms,
                r.timestep,
                r.jumps_per_atom,
                r.drift_sigma,
                r.equilibrated,
                r.kinetic_over_depth[0],
                r.kinetic_over_depth[1],
                r.kinetic_over_depth[2],
                a.non_gaussian()
            );
        }
        s
    }

    pub fn scaling_csv(&self) -> String {
        let mut s = self.preamble();
        s.push_str(SCALING_COLUMNS);
        s.push('\n');
        for row in &self.scaling {
            let xi = row.fit.slope_nk_per_er();
            let t0 = row.fit.intercept_uk();
            let detuning = row.detuning.map_or("pooled".to_string(), |d| d.to_string());
            let _ = writeln!(
                s,
                "{detuning},{},{},{:.4},{:.4},{:.4},{:.4},{}",
                AXES[row.axis],
                row.method.label(),
                xi.value,
                xi.error,
                t0.value,
                t0.error,
                row.fit.points
            );
        }
        s
    }

    /// Write `temperatures.csv`, `records.csv`, `scaling.csv` and the
    /// effective configuration into `dir`.
    pub fn write(&self, dir: &Path, config: &RunConfig) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("temperatures.csv", self.temperatures_csv()),
            ("records.csv", self.records_csv()),
            ("scaling.csv", self.scaling_csv()),
            (
                "config.toml",
                format!(
                    "# config_hash = {}\n{}",
                    self.config_hash,
                    RunConfig {
                        seed: self.seed,
                        ..config.clone()
                    }
                    .to_toml()
                ),
            ),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn preamble(config_hash: &str, seed: u64) -> String {
    format!("# sisyphus {VERSION}\n# config_hash = {config_hash}\n# seed = {seed}\n")
}

pub fn temperature_body(rows: &[TemperatureRow]) -> String {
    let mut s = String::from(TEMPERATURE_COLUMNS);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{}",
            r.detuning,
            r.depth,
            AXES[r.axis],
            r.temperature.value * 1e6,
            r.temperature.error * 1e6,
            r.method.label()
        );
    }
    s
}

/// CSV body without the `#` preamble.
pub fn body(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Linear fits `T = T₀ + ξU₀` per detuning (when it has at least three
/// depths) and pooled over detunings, for each axis and estimator.
pub fn scaling_fits(rows: &[TemperatureRow]) -> Vec<ScalingRow> {
    let mut detunings: Vec<f64> = Vec::new();
    for r in rows {
        if !detunings.contains(&r.detuning) {
            detunings.push(r.detuning);
        }
    }
    let mut groups: Vec<Option<f64>> = detunings.iter().copied().map(Some).collect();
    if detunings.len() > 1 {
        groups.push(None);
    }
    let mut out = Vec::new();
    for group in groups {
        for method in [Method::Kinetic, Method::TimeOfFlight] {
            for axis in 0..3 {
                let points: Vec<(f64, Measurement)> = rows
                    .iter()
                    .filter(|r| r.axis == axis && r.method == method)
                    .filter(|r| group.is_none_or(|d| r.detuning == d))
                    .map(|r| (r.depth, r.temperature))
                    .collect();
                if let Ok(fit) = linear_scaling_fit(&points) {
                    out.push(ScalingRow {
                        detuning: group,
                        axis,
                        method,
                        fit,
                    });
                }
            }
        }
    }
    out
}

/// Run one record: ensemble simulation, then synthetic imaging of the pooled
/// snapshots.
pub fn analyze_record(
    lattice: &Lattice,
    params: &SimParams,
    imaging: &ImagingOptions,
    pool: &rayon::ThreadPool,
) -> Result<(RecordAnalysis, crate::langevin::EnsembleRun)> {
    let run = run_ensemble(lattice, params, pool)?;
    let t = &lattice.config.transition;
    let header = SnapshotHeader::new(t, params.seed, "", run.record.detuning, run.record.depth);
    let snapshot = Snapshot {
        header,
        slices: run.snapshots.clone(),
    };
    let imaging = if params.snapshots == 0 {
        Err("no snapshots requested".to_string())
    } else {
        image_cloud(&snapshot.cloud(), t.mass, imaging).map_err(|e| e.to_string())
    };
    Ok((
        RecordAnalysis {
            record: run.record.clone(),
            imaging,
        },
        run,
    ))
}

/// Execute every (detuning, depth) record of `config` with the given seed.
/// Snapshot files are written to `snapshot_dir` when given.
pub fn execute(
    config: &RunConfig,
    seed: u64,
    pool: &rayon::ThreadPool,
    snapshot_dir: Option<&Path>,
) -> Result<ResultBundle> {
    config.validate()?;
    let hash = config.hash();
    let transition = config.transition()?;
    let base = SimParams {
        seed,
        ..config.sim_params()
    };
    let imaging = config.imaging();
    if let Some(dir) = snapshot_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut records = Vec::new();
    for &detuning in &config.lattice.detunings_Gamma {
        for &depth in &config.lattice.depths_Er {
            let k = records.len();
            let lattice = Lattice::new(config.beam(&transition, detuning, depth)?)?;
            let params = SimParams {
                seed: record_seed(seed, k),
                ..base.clone()
            };
            let (mut analysis, run) = analyze_record(&lattice, &params, &imaging, pool)?;
            // report the requested depth rather than its round-trip through
            // the beam irradiance
            analysis.record.depth = depth;
            if let Some(dir) = snapshot_dir {
                let snapshot = Snapshot {
                    header: SnapshotHeader::new(&transition, params.seed, &hash, detuning, depth),
                    slices: run.snapshots,
                };
                snapshot.write(&dir.join(format!("record_{k:03}.snap")))?;
            }
            records.push(analysis);
        }
    }
    let rows: Vec<TemperatureRow> = records.iter().flat_map(RecordAnalysis::rows).collect();
    Ok(ResultBundle {
        config_hash: hash,
        seed,
        scaling: scaling_fits(&rows),
        records,
    })
}

/// Imaging of one snapshot file: direct and time-of-flight rows.
pub fn analyze_snapshot(
    snapshot: &Snapshot,
    imaging: &ImagingOptions,
) -> Result<Vec<TemperatureRow>> {
    let axes = image_cloud(&snapshot.cloud(), snapshot.header.mass, imaging)?;
    let h = &snapshot.header;
    let mut rows = Vec::new();
    for method in [Method::Snapshot, Method::TimeOfFlight] {
        for a in &axes {
            rows.push(TemperatureRow {
                detuning: h.detuning,
                depth: h.depth,
                axis: a.axis,
                temperature: if method == Method::Snapshot {
                    a.direct
                } else {
                    a.time_of_flight
                },
                method,
            });
        }
    }
    Ok(rows)
}
