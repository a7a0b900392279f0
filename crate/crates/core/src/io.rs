//! Output directory layout and CSV/JSON emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CapError, Result};
use crate::experiment::{RunSummary, Series};
use crate::interface::CapState;

pub const SERIES_HEADER: &str =
    "t,perimeter,stretch,confinement,l1,area_drift,gauss,gauss_bound,eps_disc,nodes";
pub const TRAJECTORY_HEADER: &str = "t,point_id,theta,phi_lifted";
pub const INTERFACE_HEADER: &str = "frame,curve_label,node_index,theta,phi_lifted";

fn out_err(path: &Path, e: impl std::fmt::Display) -> CapError {
    CapError::Output(format!("{}: {e}", path.display()))
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| out_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| out_err(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| out_err(path, e))
}

pub fn write_series(path: &Path, s: &Series) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from(SERIES_HEADER);
    body.push('\n');
    for i in 0..s.len() {
        let row = [
            s.t[i],
            s.perimeter[i],
            s.stretch[i],
            s.confinement[i],
            s.l1[i],
            s.area_drift[i],
            s.gauss[i],
            s.gauss_bound[i],
            s.eps_disc[i],
        ]
        .map(num)
        .join(",");
        body.push_str(&format!("{row},{}\n", s.nodes[i]));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| out_err(path, e))
}

pub fn write_interfaces(path: &Path, frame: usize, state: &CapState) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| out_err(path, e);
    writeln!(w, "{INTERFACE_HEADER}").map_err(io)?;
    for c in &state.curves {
        for (i, p) in c.nodes.iter().enumerate() {
            writeln!(w, "{frame},{},{i},{},{}", c.label, num(p.theta), num(p.phi)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Streams per-frame output of one run into `dir`.
pub struct RunWriter {
    dir: PathBuf,
    interface_every: usize,
    trajectory: Option<BufWriter<File>>,
}

impl RunWriter {
    /// Creates `dir` and writes `config.resolved.toml`.
    pub fn create(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
        let resolved = dir.join("config.resolved.toml");
        fs::write(&resolved, cfg.to_toml()).map_err(|e| out_err(&resolved, e))?;
        if cfg.output.interface_every > 0 {
            let d = dir.join("interfaces");
            fs::create_dir_all(&d).map_err(|e| out_err(&d, e))?;
        }
        let trajectory = if cfg.output.trajectory {
            let p = dir.join("trajectory.csv");
            let mut w = create(&p)?;
            writeln!(w, "{TRAJECTORY_HEADER}").map_err(|e| out_err(&p, e))?;
            Some(w)
        } else {
            None
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            interface_every: cfg.output.interface_every,
            trajectory,
        })
    }

    pub fn frame(&mut self, frame: usize, state: &CapState) -> Result<()> {
        if self.interface_every > 0 && frame.is_multiple_of(self.interface_every) {
            let p = self.dir.join("interfaces").join(format!("frame_{frame:05}.csv"));
            write_interfaces(&p, frame, state)?;
        }
        if let Some(w) = &mut self.trajectory {
            for m in &state.markers {
                let p = state.curves[m.curve].nodes[m.node];
                writeln!(w, "{},{},{},{}", num(state.t), m.name, num(p.theta), num(p.phi))
                    .map_err(|e| CapError::Output(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Writes `summary.json` and `series.csv`, flushing the trajectory.
    pub fn finish(mut self, summary: &RunSummary) -> Result<()> {
        if let Some(w) = &mut self.trajectory {
            w.flush().map_err(|e| CapError::Output(e.to_string()))?;
        }
        write_json(&self.dir.join("summary.json"), summary)?;
        write_series(&self.dir.join("series.csv"), &summary.series)
    }
}

/// Header-checked numeric rows of a CSV file written by this module.
pub fn read_csv(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| out_err(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(out_err(path, "unexpected header"));
    }
    Ok(lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}
