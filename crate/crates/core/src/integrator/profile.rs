use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dopri::{DenseSegment, Trajectory};
use crate::error::{Error, Result};
use crate::io::{atomic_write, fmt17};
use crate::params::ProblemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    Smooth,
    Singular,
    EmdenFowler,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ZeroCrossing,
    MagnitudeCap,
    Upturn,
    DecayFloor,
    Overflow,
    StepUnderflow,
    MaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalEvent {
    pub kind: EventKind,
    pub r: f64,
}

#[derive(Debug, Clone)]
enum Interp {
    Dense(Vec<DenseSegment<2>>),
    Hermite,
}

/// Radial trajectory `(r, u, u')` on a strictly increasing grid with a
/// continuous extension between nodes.
#[derive(Debug, Clone)]
pub struct Profile {
    pub params: ProblemParams,
    pub lambda: f64,
    pub kind: ProfileKind,
    pub event: Option<TerminalEvent>,
    pub notes: Vec<String>,
    grid: Vec<f64>,
    values: Vec<f64>,
    derivatives: Vec<f64>,
    interp: Interp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub params: ProblemParams,
    pub lambda: f64,
    pub kind: ProfileKind,
    pub event: Option<TerminalEvent>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub points: usize,
}

impl Profile {
    /// Builds a profile from an integrator trajectory in either direction.
    pub fn from_trajectory(
        params: ProblemParams,
        lambda: f64,
        kind: ProfileKind,
        traj: Trajectory<2>,
        event: Option<TerminalEvent>,
    ) -> Result<Self> {
        let Trajectory { x, y, mut segments, .. } = traj;
        let mut grid = x;
        let mut values: Vec<f64> = y.iter().map(|s| s[0]).collect();
        let mut derivatives: Vec<f64> = y.iter().map(|s| s[1]).collect();
        segments.truncate(grid.len().saturating_sub(1));
        if grid.len() >= 2 && grid[1] < grid[0] {
            grid.reverse();
            values.reverse();
            derivatives.reverse();
            segments.reverse();
        }
        // drop zero-length intervals (stop exactly on a node)
        let mut i = 1;
        while i < grid.len() {
            if grid[i] <= grid[i - 1] {
                grid.remove(i);
                values.remove(i);
                derivatives.remove(i);
                segments.remove(i - 1);
            } else {
                i += 1;
            }
        }
        if grid.len() < 2 {
            return Err(Error::domain("profile needs at least two grid points"));
        }
        Ok(Self {
            params,
            lambda,
            kind,
            event,
            notes: Vec::new(),
            grid,
            values,
            derivatives,
            interp: Interp::Dense(segments),
        })
    }

    /// Builds a profile from samples; cubic Hermite interpolation between nodes.
    pub fn from_samples(
        params: ProblemParams,
        lambda: f64,
        kind: ProfileKind,
        grid: Vec<f64>,
        values: Vec<f64>,
        derivatives: Vec<f64>,
    ) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() || grid.len() != derivatives.len() {
            return Err(Error::domain("profile arrays must have equal length >= 2"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("profile grid must be strictly increasing"));
        }
        Ok(Self {
            params,
            lambda,
            kind,
            event: None,
            notes: Vec::new(),
            grid,
            values,
            derivatives,
            interp: Interp::Hermite,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.derivatives
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.grid.last().expect("non-empty")
    }

    pub fn has_dense_output(&self) -> bool {
        matches!(self.interp, Interp::Dense(_))
    }

    fn check_range(&self, r: f64) -> Result<()> {
        let (lo, hi) = (self.r_min(), self.r_max());
        let slack = 1e-12 * hi.abs().max(1.0);
        if !(r >= lo - slack && r <= hi + slack) {
            return Err(Error::Extrapolation { r, lo, hi });
        }
        Ok(())
    }

    fn interval(&self, r: f64) -> usize {
        let i = self.grid.partition_point(|&x| x <= r);
        i.clamp(1, self.grid.len() - 1) - 1
    }

    /// `(u, u')` at `r`; stored values at the nodes themselves.
    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        self.check_range(r)?;
        let i = self.interval(r);
        if self.grid[i] == r {
            return Ok((self.values[i], self.derivatives[i]));
        }
        if self.grid[i + 1] == r {
            return Ok((self.values[i + 1], self.derivatives[i + 1]));
        }
        match &self.interp {
            Interp::Dense(segs) => {
                let y = segs[i].eval(r);
                Ok((y[0], y[1]))
            }
            Interp::Hermite => {
                let (u, du, _) = self.hermite(i, r);
                Ok((u, du))
            }
        }
    }

    pub fn u(&self, r: f64) -> Result<f64> {
        Ok(self.eval(r)?.0)
    }

    /// Derivative of the interpolated `u'`, i.e. `u''`.
    pub fn second_derivative(&self, r: f64) -> Result<f64> {
        self.check_range(r)?;
        let i = self.interval(r);
        match &self.interp {
            Interp::Dense(segs) => Ok(segs[i].eval_derivative(r)[1]),
            Interp::Hermite => Ok(self.hermite(i, r).2),
        }
    }

    fn hermite(&self, i: usize, r: f64) -> (f64, f64, f64) {
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let h = x1 - x0;
        let t = (r - x0) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivatives[i] * h, self.derivatives[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let u =
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let du = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        let ddu =
            ((12.0 * t - 6.0) * y0 + (6.0 * t - 4.0) * m0 + (-12.0 * t + 6.0) * y1 + (6.0 * t - 2.0) * m1) / (h * h);
        (u, du, ddu)
    }

    /// Keeps nodes with `r <= r_cut`.
    pub fn truncate_after(&mut self, r_cut: f64) {
        let keep = self.grid.partition_point(|&x| x <= r_cut).max(2);
        self.grid.truncate(keep);
        self.values.truncate(keep);
        self.derivatives.truncate(keep);
        if let Interp::Dense(segs) = &mut self.interp {
            segs.truncate(keep - 1);
        }
    }

    /// Keeps the leading run of nodes with `u > 0`.
    pub fn truncate_to_positive(&mut self) {
        let first_bad = self.values.iter().position(|&u| u <= 0.0).unwrap_or(self.len());
        if first_bad < self.len() {
            let r_cut = self.grid[first_bad.max(2) - 1];
            self.truncate_after(r_cut);
        }
    }

    /// Multiplies the solution by `factor` (linear equations only).
    pub fn scale(&mut self, factor: f64) {
        for v in self.values.iter_mut().chain(self.derivatives.iter_mut()) {
            *v *= factor;
        }
        if let Interp::Dense(segs) = &mut self.interp {
            for s in segs.iter_mut() {
                s.scale(factor);
            }
        }
    }

    /// Concatenates two dense profiles of the same problem sharing an endpoint.
    pub fn join(lower: Profile, upper: Profile) -> Result<Profile> {
        let (Interp::Dense(mut s1), Interp::Dense(s2)) = (lower.interp, upper.interp) else {
            return Err(Error::domain("join needs dense profiles"));
        };
        let mut grid = lower.grid;
        let mut values = lower.values;
        let mut derivatives = lower.derivatives;
        let skip = usize::from(upper.grid[0] <= *grid.last().expect("non-empty"));
        grid.extend_from_slice(&upper.grid[skip..]);
        values.extend_from_slice(&upper.values[skip..]);
        derivatives.extend_from_slice(&upper.derivatives[skip..]);
        s1.extend(s2);
        if s1.len() + 1 != grid.len() || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("profiles do not join on a common node"));
        }
        let mut notes = lower.notes;
        notes.extend(upper.notes);
        Ok(Profile {
            params: lower.params,
            lambda: lower.lambda,
            kind: lower.kind,
            event: upper.event,
            notes,
            grid,
            values,
            derivatives,
            interp: Interp::Dense(s1),
        })
    }

    pub fn meta(&self) -> ProfileMeta {
        ProfileMeta {
            params: self.params.clone(),
            lambda: self.lambda,
            kind: self.kind,
            event: self.event,
            notes: self.notes.clone(),
            points: self.len(),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(self.len() * 72);
        s.push_str("r,u,du\n");
        for i in 0..self.len() {
            s.push_str(&fmt17(self.grid[i]));
            s.push(',');
            s.push_str(&fmt17(self.values[i]));
            s.push(',');
            s.push_str(&fmt17(self.derivatives[i]));
            s.push('\n');
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>.json` next to each other.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        atomic_write(&csv, self.to_csv_string().as_bytes())?;
        atomic_write(&json, serde_json::to_string_pretty(&self.meta())?.as_bytes())?;
        Ok(vec![csv, json])
    }

    /// Reads a profile written by [`Profile::write`]; interpolation is cubic Hermite.
    pub fn read(dir: &Path, stem: &str) -> Result<Profile> {
        let meta: ProfileMeta = serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.json")))?)?;
        let file = std::fs::File::open(dir.join(format!("{stem}.csv")))?;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        let mut derivs = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if n == 0 {
                if line.trim() != "r,u,du" {
                    return Err(Error::Csv(format!("unexpected header {line:?}")));
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Csv(format!("line {}: expected 3 columns", n + 1)));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Csv(format!("line {}: {e}", n + 1)));
            grid.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
            derivs.push(parse(cols[2])?);
        }
        let mut p = Profile::from_samples(meta.params, meta.lambda, meta.kind, grid, values, derivs)?;
        p.event = meta.event;
        p.notes = meta.notes;
        Ok(p)
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(self.to_csv_string().as_bytes())
    }
}
