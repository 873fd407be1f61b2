//! Subordinator skeletons, their inverses, and the noise streams that run on
//! the inverse clock.
//!
//! Two flavours of driving noise are provided. [`simulate_tc_brownian`] and
//! [`simulate_jump_stream`] draw increments directly on a given `E_t` path.
//! [`OperationalNoise`] instead draws Brownian increments and Poisson jumps on
//! the operational (τ) grid together with `D`, so that an integrator on the
//! t-grid and one on the τ-grid consume exactly the same randomness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::levy::{JumpSampler, LevyMeasure, QuadratureConfig, SubordinatorSpec};

/// Master seed plus per-path stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master: u64,
    pub stream: u64,
}

/// Independent random substreams derived from one [`SeedSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    Subordinator = 0,
    Brownian = 1,
    Jumps = 2,
    Auxiliary = 3,
}

const SUBSTREAMS: u64 = 4;

impl SeedSpec {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self, sub: Substream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream.wrapping_mul(SUBSTREAMS).wrapping_add(sub as u64));
        rng
    }
}

/// Skeleton of an RCLL path on a finite grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::Malformed(format!(
                "grid ({}) and values ({}) must be nonempty and of equal length",
                grid.len(),
                values.len()
            )));
        }
        if grid[0] != 0.0 {
            return Err(Error::Malformed(format!("grid must start at 0, starts at {}", grid[0])));
        }
        if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Malformed(format!(
                "grid not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Malformed(format!("non-finite path value {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().expect("nonempty path")
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("nonempty path")
    }

    /// Right-continuous step evaluation: the value at the last grid point `<= t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.grid.partition_point(|&g| g <= t);
        self.values[i.saturating_sub(1)]
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }
}

/// Uniform grid `0, h, 2h, …, n h` with exact multiples.
pub fn uniform_grid(step: f64, horizon: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && horizon > 0.0 && step.is_finite() && horizon.is_finite()) {
        return Err(Error::Domain(format!(
            "grid needs positive step and horizon, got {step}, {horizon}"
        )));
    }
    let n = (horizon / step - 1e-9).ceil().max(1.0) as usize;
    Ok((0..=n).map(|i| i as f64 * step).collect())
}

fn subordinator_values<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    dtau: f64,
    from: usize,
    to: usize,
    last: f64,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    let mut acc = last;
    for j in from..to {
        match *spec {
            SubordinatorSpec::Deterministic { slope } => {
                acc = slope * ((j + 1) as f64 * dtau);
            }
            _ => acc += spec.sample_increment(dtau, rng),
        }
        out.push(acc);
    }
}

/// Simulates `τ ↦ D(τ)` on the grid `{0, Δτ, …}` up to `T_op`.
///
/// Stable, tempered-stable and deterministic paths are strictly increasing.
/// Gamma increments can underflow to zero for small `Δτ` and compound Poisson
/// paths are flat between jumps, so those are only nondecreasing.
pub fn simulate_subordinator(spec: &SubordinatorSpec, dtau: f64, horizon: f64, seed: SeedSpec) -> Result<SamplePath> {
    spec.validate()?;
    let grid = uniform_grid(dtau, horizon)?;
    let mut rng = seed.rng(Substream::Subordinator);
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    subordinator_values(spec, dtau, 0, grid.len() - 1, 0.0, &mut rng, &mut values);
    SamplePath::new(grid, values)
}

/// Simulates `D` on the `Δτ` grid, doubling the operational horizon until
/// `D` exceeds `t_horizon`. Extension continues the same random stream, so the
/// result equals a single run at the final horizon.
pub fn simulate_subordinator_until(
    spec: &SubordinatorSpec,
    dtau: f64,
    t_horizon: f64,
    seed: SeedSpec,
    max_steps: usize,
) -> Result<SamplePath> {
    spec.validate()?;
    if !(dtau > 0.0 && t_horizon >= 0.0) {
        return Err(Error::Domain(format!(
            "need dtau > 0 and t_horizon >= 0, got {dtau}, {t_horizon}"
        )));
    }
    let mut rng = seed.rng(Substream::Subordinator);
    let guess = match spec.mean_rate() {
        Some(m) => 1.25 * t_horizon / m,
        None => t_horizon.max(1.0),
    };
    let mut target = ((guess / dtau).ceil() as usize).clamp(16, max_steps.max(1));
    let mut values = Vec::with_capacity(target + 1);
    values.push(0.0);
    loop {
        let have = values.len() - 1;
        let last = *values.last().unwrap();
        subordinator_values(spec, dtau, have, target, last, &mut rng, &mut values);
        if *values.last().unwrap() > t_horizon {
            break;
        }
        if target >= max_steps {
            return Err(Error::Horizon {
                op_horizon: target as f64 * dtau,
                reached: *values.last().unwrap(),
                needed: t_horizon,
            });
        }
        target = (target * 2).min(max_steps);
    }
    let grid = (0..values.len()).map(|j| j as f64 * dtau).collect();
    SamplePath::new(grid, values)
}

/// Grid indices `j(t)` of the first operational grid point with `D(τ_j) > t`.
pub fn inverse_indices(d: &SamplePath, t_grid: &[f64]) -> Result<Vec<usize>> {
    if let Some(w) = t_grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::Malformed(format!(
            "t-grid not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    let t_max = t_grid.last().copied().unwrap_or(0.0);
    if !(t_max < d.last_value()) {
        return Err(Error::Horizon {
            op_horizon: d.horizon(),
            reached: d.last_value(),
            needed: t_max,
        });
    }
    let vals = d.values();
    Ok(t_grid.iter().map(|&t| vals.partition_point(|&v| v <= t)).collect())
}

/// `t ↦ E_t = inf{τ : D(τ) > t}`, estimated by the first grid τ with `D(τ) > t`.
pub fn invert_path(d: &SamplePath, t_grid: &[f64]) -> Result<SamplePath> {
    let idx = inverse_indices(d, t_grid)?;
    let values = idx.iter().map(|&j| d.grid()[j]).collect();
    SamplePath::new(t_grid.to_vec(), values)
}

/// `t ↦ B_{E_t}`: independent centered Gaussian increments of variance `ΔE`.
pub fn simulate_tc_brownian(e: &SamplePath, seed: SeedSpec) -> Result<SamplePath> {
    let mut rng = seed.rng(Substream::Brownian);
    let mut values = Vec::with_capacity(e.len());
    let mut b = 0.0;
    values.push(b);
    for de in e.increments() {
        if de < 0.0 {
            return Err(Error::Malformed(format!("time change decreases by {de}")));
        }
        if de > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            b += de.sqrt() * z;
        }
        values.push(b);
    }
    SamplePath::new(e.grid().to_vec(), values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    /// time on the t-clock
    pub time: f64,
    pub mark: f64,
    /// t-step the jump belongs to
    pub step: usize,
}

/// Poisson random measure realized on the `E_t` clock.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpStream {
    pub jumps: Vec<Jump>,
    /// `ΔE` of every t-step, for compensator use
    pub clock_increments: Vec<f64>,
}

impl JumpStream {
    pub fn jumps_in_step(&self, step: usize) -> impl Iterator<Item = &Jump> {
        let lo = self.jumps.partition_point(|j| j.step < step);
        let hi = self.jumps.partition_point(|j| j.step <= step);
        self.jumps[lo..hi].iter()
    }
}

/// Per t-step jump counts `Poisson(ν(ε ≤ |y| < c) ΔE)` with i.i.d. marks from
/// the normalized truncated measure.
pub fn simulate_jump_stream(
    nu: &LevyMeasure,
    e: &SamplePath,
    seed: SeedSpec,
    q: &QuadratureConfig,
) -> Result<JumpStream> {
    let sampler = nu.sampler(q)?;
    let rate = sampler.total_mass();
    if !rate.is_finite() {
        return Err(Error::Precondition("truncated Lévy mass is not finite".into()));
    }
    let mut rng = seed.rng(Substream::Jumps);
    let grid = e.grid();
    let mut jumps = Vec::new();
    let mut clock_increments = Vec::with_capacity(e.len().saturating_sub(1));
    for (n, de) in e.increments().enumerate() {
        if de < 0.0 {
            return Err(Error::Malformed(format!("time change decreases by {de}")));
        }
        clock_increments.push(de);
        let mean = rate * de;
        if mean <= 0.0 {
            continue;
        }
        let count = Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize;
        let (t0, t1) = (grid[n], grid[n + 1]);
        let mut times: Vec<f64> = (0..count)
            .map(|_| t0 + (t1 - t0) * (1.0 - rng.random::<f64>()))
            .collect();
        times.sort_by(f64::total_cmp);
        for time in times {
            jumps.push(Jump {
                time,
                mark: sampler.sample(&mut rng),
                step: n,
            });
        }
    }
    Ok(JumpStream {
        jumps,
        clock_increments,
    })
}

/// Driving noise generated once on the operational grid.
///
/// Cell `j` (1-based) is `(τ_{j−1}, τ_j]`. Each cell carries a Brownian
/// increment of variance `Δτ` and a Poisson number of marks with mean
/// `ν(ε ≤ |y| < c) Δτ`.
#[derive(Debug, Clone)]
pub struct OperationalNoise {
    pub dtau: f64,
    pub subordinator: SamplePath,
    dw: Vec<f64>,
    jump_offsets: Vec<usize>,
    marks: Vec<f64>,
}

impl OperationalNoise {
    pub fn simulate(
        spec: &SubordinatorSpec,
        sampler: Option<&JumpSampler>,
        dtau: f64,
        t_horizon: f64,
        seed: SeedSpec,
        max_steps: usize,
    ) -> Result<Self> {
        let d = simulate_subordinator_until(spec, dtau, t_horizon, seed, max_steps)?;
        let cells = d.len() - 1;
        let sd = dtau.sqrt();
        let mut brng = seed.rng(Substream::Brownian);
        let dw = (0..cells)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut brng);
                sd * z
            })
            .collect();
        let mut jump_offsets = Vec::with_capacity(cells + 1);
        let mut marks = Vec::new();
        jump_offsets.push(0);
        let mut jrng = seed.rng(Substream::Jumps);
        let poisson = match sampler {
            Some(s) if s.total_mass() > 0.0 => Some(
                Poisson::new(s.total_mass() * dtau)
                    .map_err(|e| Error::Configuration(format!("jump intensity {} unusable: {e}", s.total_mass())))?,
            ),
            _ => None,
        };
        for _ in 0..cells {
            if let (Some(p), Some(s)) = (&poisson, sampler) {
                let count = p.sample(&mut jrng) as usize;
                for _ in 0..count {
                    marks.push(s.sample(&mut jrng));
                }
            }
            jump_offsets.push(marks.len());
        }
        Ok(Self {
            dtau,
            subordinator: d,
            dw,
            jump_offsets,
            marks,
        })
    }

    pub fn cells(&self) -> usize {
        self.dw.len()
    }

    /// Operational time of grid index `j`.
    pub fn tau(&self, j: usize) -> f64 {
        self.subordinator.grid()[j]
    }

    pub fn brownian_increment(&self, cell: usize) -> f64 {
        self.dw[cell - 1]
    }

    pub fn marks_in_cell(&self, cell: usize) -> &[f64] {
        &self.marks[self.jump_offsets[cell - 1]..self.jump_offsets[cell]]
    }

    /// Marks of all cells in `(τ_from, τ_to]`, in time order.
    pub fn marks_between(&self, from: usize, to: usize) -> &[f64] {
        &self.marks[self.jump_offsets[from]..self.jump_offsets[to]]
    }

    /// Brownian increment `B(τ_to) − B(τ_from)` summed cell by cell.
    pub fn brownian_between(&self, from: usize, to: usize) -> f64 {
        self.dw[from..to].iter().fold(0.0, |acc, w| acc + w)
    }

    /// Inverse clock on a t-grid.
    pub fn time_change(&self, t_grid: &[f64]) -> Result<TimeChange> {
        let indices = inverse_indices(&self.subordinator, t_grid)?;
        Ok(TimeChange {
            t_grid: t_grid.to_vec(),
            indices,
            dtau: self.dtau,
        })
    }
}

/// `E_t` on a t-grid, stored as operational grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    pub t_grid: Vec<f64>,
    pub indices: Vec<usize>,
    pub dtau: f64,
}

impl TimeChange {
    pub fn value(&self, n: usize) -> f64 {
        self.indices[n] as f64 * self.dtau
    }

    pub fn increment(&self, n: usize) -> f64 {
        (self.indices[n + 1] - self.indices[n]) as f64 * self.dtau
    }

    pub fn as_path(&self) -> Result<SamplePath> {
        SamplePath::new(
            self.t_grid.clone(),
            (0..self.indices.len()).map(|n| self.value(n)).collect(),
        )
    }
}
