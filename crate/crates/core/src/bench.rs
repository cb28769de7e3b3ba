//! Rates, benchmark records and the (kc, nc) grid sweep.

use serde::Serialize;

use crate::dsl::Dims;
use crate::error::{Error, Result};
use crate::exec::Operands;
use crate::plan::CompiledTask;
use crate::tiled::TileParams;
use crate::tune::{adaptive_execute, fixed_execute, MonotonicClock, TuneReport};

/// Scaled processing rate, `M*K*N / (1e9 * T)`.
pub fn spr(m: usize, k: usize, n: usize, seconds: f64) -> Result<f64> {
    if seconds <= 0.0 || seconds.is_nan() {
        return Err(Error::NonPositiveTime(seconds));
    }
    let work = m as u128 * k as u128 * n as u128;
    Ok(work as f64 / (1e9 * seconds))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub task: String,
    pub dims: Dims,
    pub mode: String,
    pub elapsed: f64,
    pub spr: f64,
    pub chosen: Option<TileParams>,
    pub verification: Option<String>,
}

/// Power-of-two values from 16 up to `limit`.
pub fn pow2_grid(limit: usize) -> Vec<usize> {
    std::iter::successors(Some(16usize), |v| Some(v * 2)).take_while(|v| *v <= limit.max(16)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub kcs: Vec<usize>,
    pub ncs: Vec<usize>,
    /// `elapsed[kc index][nc index]`, minimum over trials.
    pub elapsed: Vec<Vec<f64>>,
    pub adaptive_elapsed: f64,
    pub adaptive: TuneReport,
}

impl GridResult {
    pub fn best(&self) -> (TileParams, f64) {
        let mut best = (TileParams { kc: 0, nc: 0 }, f64::INFINITY);
        for (a, row) in self.elapsed.iter().enumerate() {
            for (b, &e) in row.iter().enumerate() {
                if e < best.1 {
                    best = (TileParams { kc: self.kcs[a], nc: self.ncs[b] }, e);
                }
            }
        }
        best
    }

    /// Table-shaped CSV: a header of nc values, one row per kc, then
    /// `adaptive,<elapsed>,<kc>,<nc>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kc\\nc");
        for nc in &self.ncs {
            s.push_str(&format!(",{nc}"));
        }
        s.push('\n');
        for (kc, row) in self.kcs.iter().zip(&self.elapsed) {
            s.push_str(&kc.to_string());
            for e in row {
                s.push_str(&format!(",{e:.6}"));
            }
            s.push('\n');
        }
        let c = self.adaptive.chosen;
        s.push_str(&format!("adaptive,{:.6},{},{}\n", self.adaptive_elapsed, c.kc, c.nc));
        s
    }
}

/// Time every (kc, nc) pair on fresh copies of `operands`, then the adaptive
/// run. Each figure is the minimum over `trials`.
pub fn grid_sweep(
    ct: &CompiledTask,
    dims: &Dims,
    operands: &Operands,
    kcs: &[usize],
    ncs: &[usize],
    trials: usize,
    packing: bool,
) -> Result<GridResult> {
    let trials = trials.max(1);
    let mut elapsed = Vec::with_capacity(kcs.len());
    for &kc in kcs {
        let mut row = Vec::with_capacity(ncs.len());
        for &nc in ncs {
            let mut best = f64::INFINITY;
            for _ in 0..trials {
                let mut ops = operands.clone();
                best = best.min(fixed_execute(ct, dims, &mut ops, TileParams { kc, nc }, packing)?);
            }
            row.push(best);
        }
        elapsed.push(row);
    }
    let mut adaptive = None;
    let mut adaptive_elapsed = f64::INFINITY;
    for _ in 0..trials {
        let mut ops = operands.clone();
        let (report, e) = adaptive_execute(ct, dims, &mut ops, &mut MonotonicClock::new(), packing)?;
        if e < adaptive_elapsed {
            adaptive_elapsed = e;
            adaptive = Some(report);
        }
    }
    Ok(GridResult {
        kcs: kcs.to_vec(),
        ncs: ncs.to_vec(),
        elapsed,
        adaptive_elapsed,
        adaptive: adaptive.expect("at least one trial"),
    })
}
