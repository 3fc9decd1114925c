//! CSV readers and writers. Floats are written in shortest round-trip form.
//!
//! Spatial files use one row per grid point with `i,j,k` indices; averaged
//! files drop them. Pulse times appear twice: the stored left limit first,
//! then the post-jump value.

use std::fs::File;
use std::path::Path;

use crate::adjoint::AdjointTrajectory;
use crate::averaged::AveragedTrajectory;
use crate::engine::Jump;
use crate::error::{Error, Result};
use crate::model::{
    ContinuousControl, CostBreakdown, ModelParams, PulseStrategy, ScalarField, SpaceGrid,
};
use crate::optimizer::Certificate;
use crate::pde::FieldTrajectory;

type Writer = csv::Writer<File>;

fn open(path: &Path, header: &[&str]) -> Result<Writer> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn spatial(grid: SpaceGrid) -> bool {
    grid.len() > 1
}

/// Leading columns, then `i,j,k` on spatial grids, then the rest.
fn header<'a>(grid: SpaceGrid, lead: &[&'a str], rest: &[&'a str]) -> Vec<&'a str> {
    let mut h = lead.to_vec();
    if spatial(grid) {
        h.extend(["i", "j", "k"]);
    }
    h.extend(rest);
    h
}

/// One row per grid point: `lead`, indices, then `cols(point)`.
fn write_points(
    w: &mut Writer,
    grid: SpaceGrid,
    lead: &[String],
    cols: impl Fn(usize) -> Vec<f64>,
) -> Result<()> {
    for p in 0..grid.len() {
        let mut row = lead.to_vec();
        if spatial(grid) {
            row.extend(grid.coords(p).iter().map(|c| c.to_string()));
        }
        row.extend(cols(p).into_iter().map(num));
        w.write_record(&row)?;
    }
    Ok(())
}

/// Output row in time order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    /// Stored sample number.
    Stored(usize),
    /// Jump number; `with_pre` when its left limit is not a stored row.
    Jump { index: usize, with_pre: bool },
}

/// Interleaves stored steps and jump steps: a jump on a stored step follows
/// that row, any other jump is placed by its step.
fn merge_rows(stored_steps: &[usize], jump_steps: impl IntoIterator<Item = usize>) -> Vec<Row> {
    let jumps: Vec<usize> = jump_steps.into_iter().collect();
    let mut out = Vec::with_capacity(stored_steps.len() + jumps.len());
    let mut next = 0;
    for (row, &step) in stored_steps.iter().enumerate() {
        while next < jumps.len() && jumps[next] < step {
            out.push(Row::Jump { index: next, with_pre: true });
            next += 1;
        }
        out.push(Row::Stored(row));
        while next < jumps.len() && jumps[next] == step {
            out.push(Row::Jump { index: next, with_pre: false });
            next += 1;
        }
    }
    out.extend((next..jumps.len()).map(|index| Row::Jump { index, with_pre: true }));
    out
}

/// `t,theta,is_pulse,v_applied`; `v_applied` is 1 on rows without a pulse.
pub fn write_averaged_trajectory(path: &Path, traj: &AveragedTrajectory) -> Result<()> {
    let mut w = open(path, &["t", "theta", "is_pulse", "v_applied"])?;
    for row in merge_rows(&traj.stored_steps(), traj.jumps.iter().map(|j| j.step)) {
        match row {
            Row::Stored(r) => {
                w.write_record([num(traj.times[r]), num(traj.values[r]), "0".into(), "1".into()])?
            }
            Row::Jump { index, with_pre } => {
                let j = &traj.jumps[index];
                if with_pre {
                    w.write_record([num(j.time), num(j.pre), "0".into(), "1".into()])?;
                }
                w.write_record([num(j.time), num(j.post), "1".into(), num(j.v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes stored fields and jump fields of any trajectory in time order.
fn write_field_rows<'a>(
    w: &mut Writer,
    grid: SpaceGrid,
    stored_steps: &[usize],
    stored: impl Fn(usize) -> (f64, &'a ScalarField),
    jumps: &[Jump<ScalarField>],
) -> Result<()> {
    for row in merge_rows(stored_steps, jumps.iter().map(|j| j.step)) {
        match row {
            Row::Stored(r) => {
                let (t, f) = stored(r);
                write_points(w, grid, &[num(t)], |p| vec![f.get(p)])?;
            }
            Row::Jump { index, with_pre } => {
                let j = &jumps[index];
                let t = [num(j.time)];
                if with_pre {
                    write_points(w, grid, &t, |p| vec![j.pre.get(p)])?;
                }
                write_points(w, grid, &t, |p| vec![j.post.get(p)])?;
            }
        }
    }
    Ok(())
}

/// `t,i,j,k,theta` for every stored field and every post-jump field.
pub fn write_field_trajectory(path: &Path, traj: &FieldTrajectory) -> Result<()> {
    let grid = traj.grid();
    let mut w = open(path, &header(grid, &["t"], &["theta"]))?;
    let times = traj.times();
    let fields = traj.fields();
    write_field_rows(&mut w, grid, traj.stored_steps(), |r| (times[r], &fields[r]), traj.jumps())?;
    w.flush()?;
    Ok(())
}

/// `t,mean_theta,l2_norm,is_pulse` at every integration step, plus one
/// post-jump row per pulse.
pub fn write_field_summary(path: &Path, traj: &FieldTrajectory) -> Result<()> {
    let mut w = open(path, &["t", "mean_theta", "l2_norm", "is_pulse"])?;
    let times = traj.step_times();
    let means = traj.means();
    let norms = traj.l2_norms();
    let steps: Vec<usize> = (0..times.len()).collect();
    let dv = traj.grid().cell_volume();
    for row in merge_rows(&steps, traj.jumps().iter().map(|j| j.step)) {
        match row {
            Row::Stored(n) => {
                w.write_record([num(times[n]), num(means[n]), num(norms[n]), "0".into()])?
            }
            Row::Jump { index, .. } => {
                let j = &traj.jumps()[index];
                let l2 = (j.post.values().iter().map(|x| x * x).sum::<f64>() * dv).sqrt();
                w.write_record([num(j.time), num(j.post.mean()), num(l2), "1".into()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,p` or `t,i,j,k,p` at every `store_every`-th step and the last one;
/// pulse times carry `p(tau^-)` then `p(tau^+)`.
pub fn write_adjoint(path: &Path, adj: &AdjointTrajectory, store_every: usize) -> Result<()> {
    if store_every == 0 {
        return Err(Error::InvalidParameter("store_every must be at least 1".into()));
    }
    let grid = adj.grid();
    let mut w = open(path, &header(grid, &["t"], &["p"]))?;
    let last = adj.times.len() - 1;
    let steps: Vec<usize> = (0..=last)
        .filter(|n| n % store_every == 0 || *n == last)
        .collect();
    write_field_rows(
        &mut w,
        grid,
        &steps,
        |r| (adj.times[steps[r]], &adj.values[steps[r]]),
        &adj.jumps,
    )?;
    w.flush()?;
    Ok(())
}

/// `tau_i,v_i` or `tau_i,i,j,k,v`, one block per pulse.
pub fn write_strategy(path: &Path, times: &[f64], pulses: &PulseStrategy) -> Result<()> {
    let grid = pulses
        .values()
        .first()
        .map_or(SpaceGrid::single(), |f| f.grid());
    let rest: &[&str] = if spatial(grid) { &["v"] } else { &["v_i"] };
    let mut w = open(path, &header(grid, &["tau_i"], rest))?;
    for (t, v) in times.iter().zip(pulses.values()) {
        write_points(&mut w, grid, &[num(*t)], |p| vec![v.get(p)])?;
    }
    w.flush()?;
    Ok(())
}

/// `tau_i,p_plus,c_i,v_i,margin` (with `i,j,k` after `tau_i` on spatial grids).
pub fn write_certificate(path: &Path, cert: &Certificate) -> Result<()> {
    let grid = cert
        .pulses
        .first()
        .map_or(SpaceGrid::single(), |c| c.p_plus.grid());
    let mut w = open(
        path,
        &header(grid, &["tau_i"], &["p_plus", "c_i", "v_i", "margin"]),
    )?;
    for c in &cert.pulses {
        write_points(&mut w, grid, &[num(c.time)], |p| {
            let pp = c.p_plus.get(p);
            let ci = c.unit_cost.get(p);
            vec![pp, ci, c.v.get(p), pp - ci]
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `t,margin,u` (with `i,j,k` on spatial grids) for every control sample.
pub fn write_control_certificate(path: &Path, cert: &Certificate) -> Result<()> {
    let grid = cert
        .controls
        .first()
        .map_or(SpaceGrid::single(), |c| c.u.grid());
    let mut w = open(path, &header(grid, &["t"], &["margin", "u"]))?;
    for c in &cert.controls {
        write_points(&mut w, grid, &[num(c.time)], |p| vec![c.margin.get(p), c.u.get(p)])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,u` or `t,i,j,k,u`; sample `n` is held on `[t_n, t_{n+1})`.
pub fn write_control(path: &Path, params: &ModelParams, control: &ContinuousControl) -> Result<()> {
    let grid = params.space;
    let mut w = open(path, &header(grid, &["t"], &["u"]))?;
    for (n, u) in control.samples().iter().enumerate() {
        write_points(&mut w, grid, &[num(params.time.time(n))], |p| vec![u.get(p)])?;
    }
    w.flush()?;
    Ok(())
}

/// `component,value`.
pub fn write_cost(path: &Path, cost: &CostBreakdown) -> Result<()> {
    let mut w = open(path, &["component", "value"])?;
    for (name, value) in [
        ("running_state", cost.running_state),
        ("running_control", cost.running_control),
        ("pulse", cost.pulse),
        ("terminal", cost.terminal),
        ("total", cost.total),
    ] {
        w.write_record([name.to_string(), num(value)])?;
    }
    w.flush()?;
    Ok(())
}

/// `iteration,cost`.
pub fn write_cost_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = open(path, &["iteration", "cost"])?;
    for (i, c) in history.iter().enumerate() {
        w.write_record([i.to_string(), num(*c)])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,alpha` on the integration grid; spatial grids report the grid mean.
pub fn emit_alpha_profile(params: &ModelParams, path: &Path) -> Result<()> {
    let mut w = open(path, &["t", "alpha"])?;
    let mut buf = vec![0.0; params.space.len()];
    for t in params.time.times() {
        params.alpha.eval_field(t, &mut buf);
        let mean = buf.iter().sum::<f64>() / buf.len() as f64;
        w.write_record([num(t), num(mean)])?;
    }
    w.flush()?;
    Ok(())
}

/// `i,j,k,value`.
pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    let grid = field.grid();
    let mut w = open(path, &["i", "j", "k", "value"])?;
    for p in 0..grid.len() {
        let c = grid.coords(p);
        w.write_record([c[0].to_string(), c[1].to_string(), c[2].to_string(), num(field.get(p))])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `i,j,k,value` file that lists every point of `grid` once.
pub fn read_field(path: &Path, grid: SpaceGrid) -> Result<ScalarField> {
    let mut r = csv::Reader::from_path(path)?;
    let expected = ["i", "j", "k", "value"];
    let headers = r.headers()?.clone();
    if headers.iter().map(str::trim).ne(expected) {
        return Err(Error::Config(format!(
            "{}: header must be i,j,k,value",
            path.display()
        )));
    }
    let dims = grid.dims();
    let mut values = vec![f64::NAN; grid.len()];
    let mut seen = vec![false; grid.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Config(format!("{}: bad row {}", path.display(), line + 2));
        let idx: Vec<usize> = (0..3)
            .map(|c| rec.get(c).and_then(|s| s.trim().parse().ok()).ok_or_else(bad))
            .collect::<Result<_>>()?;
        let value: f64 = rec.get(3).and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        if (0..3).any(|a| idx[a] >= dims[a]) {
            return Err(Error::GridMismatch(format!(
                "{}: index {:?} outside grid {:?}",
                path.display(),
                idx,
                dims
            )));
        }
        let p = grid.index(idx[0], idx[1], idx[2]);
        if seen[p] {
            return Err(Error::Config(format!("{}: duplicate point {:?}", path.display(), idx)));
        }
        seen[p] = true;
        values[p] = value;
    }
    if let Some(p) = seen.iter().position(|s| !s) {
        return Err(Error::Config(format!(
            "{}: missing point {:?}",
            path.display(),
            grid.coords(p)
        )));
    }
    ScalarField::new(grid, values)
}
