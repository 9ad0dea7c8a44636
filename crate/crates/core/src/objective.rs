//! Weighted absorption over a velocity grid and its constrained maximization.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::potential::{weak_driving_ratio, LaserProfile, Segment};
use crate::scatter::{absorption_gradient, solve_profile, GradientRecord};
use crate::sqp::{minimize, Nlp, SqpOptions, SqpOutcome};
use crate::units::AtomSpecies;

/// Wavenumbers k_j (μm⁻¹) with weights W_j summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub points: Vec<(f64, f64)>,
}

impl KGrid {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let grid = Self { points };
        grid.validate()?;
        Ok(grid)
    }

    /// Rescales arbitrary non-negative weights to unit sum.
    pub fn normalized(points: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = points.iter().map(|p| p.1).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(invalid("grid weights must have a positive finite sum"));
        }
        Self::new(points.into_iter().map(|(k, w)| (k, w / total)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(invalid("empty wavenumber grid"));
        }
        for &(k, w) in &self.points {
            if !(k > 0.0) || !k.is_finite() {
                return Err(invalid(format!(
                    "grid wavenumber must be positive, got {k}"
                )));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(invalid(format!(
                    "grid weight must be non-negative, got {w}"
                )));
            }
        }
        let total: f64 = self.points.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("grid weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest kinetic energy on the grid (μs⁻¹).
    pub fn max_energy(&self, species: &AtomSpecies<f64>) -> f64 {
        self.points
            .iter()
            .map(|p| species.kinetic_energy(p.0))
            .fold(0.0, f64::max)
    }
}

/// `n` equally spaced velocities (cm/s, endpoints included), equal weights.
pub fn uniform_velocity_grid(
    v_min: f64,
    v_max: f64,
    n: usize,
    species: &AtomSpecies<f64>,
) -> Result<KGrid> {
    if !(v_min > 0.0 && v_min < v_max && v_max.is_finite()) {
        return Err(invalid(format!(
            "velocity range [{v_min}, {v_max}] must satisfy 0 < v_min < v_max"
        )));
    }
    if n < 2 {
        return Err(invalid("velocity grid needs at least two points"));
    }
    let step = (v_max - v_min) / (n - 1) as f64;
    let points = (0..n)
        .map(|j| {
            let v = if j == n - 1 {
                v_max
            } else {
                v_min + step * j as f64
            };
            let v = crate::units::si::cm_per_s_to_internal(v);
            Ok((species.velocity_to_wavenumber(v)?, 1.0 / n as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    KGrid::new(points)
}

/// A(k_j) for every grid point, in grid order.
pub fn absorption_curve(profile: &LaserProfile<f64>, grid: &KGrid) -> Result<Vec<f64>> {
    grid.points
        .par_iter()
        .map(|&(k, _)| solve_profile(k, profile).map(|a| a.absorption))
        .collect()
}

/// Ā = Σ_j A(k_j) W_j.
pub fn objective_value(profile: &LaserProfile<f64>, grid: &KGrid) -> Result<f64> {
    let curve = absorption_curve(profile, grid)?;
    Ok(curve.iter().zip(&grid.points).map(|(a, p)| a * p.1).sum())
}

fn gradient_records(profile: &LaserProfile<f64>, grid: &KGrid) -> Result<Vec<GradientRecord<f64>>> {
    grid.points
        .par_iter()
        .map(|&(k, _)| absorption_gradient(k, profile))
        .collect()
}

/// ∂Ā/∂(Δ₁, Ω₁, …, Δ_n, Ω_n).
pub fn objective_gradient(profile: &LaserProfile<f64>, grid: &KGrid) -> Result<Vec<f64>> {
    let records = gradient_records(profile, grid)?;
    let mut grad = vec![0.0; 2 * profile.segments.len()];
    for (rec, &(_, w)) in records.iter().zip(&grid.points) {
        for j in 0..profile.segments.len() {
            grad[2 * j] += w * rec.d_detuning[j];
            grad[2 * j + 1] += w * rec.d_rabi[j];
        }
    }
    Ok(grad)
}

/// Box bounds (μs⁻¹) shared by all segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub detuning: (f64, f64),
    pub rabi: (f64, f64),
}

impl Bounds {
    /// Δ ∈ [−20γ, 20γ], Ω ∈ [0, 10γ].
    pub fn default_for(species: &AtomSpecies<f64>) -> Self {
        let g = species.gamma;
        Self {
            detuning: (-20.0 * g, 20.0 * g),
            rabi: (0.0, 10.0 * g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub species: AtomSpecies<f64>,
    pub grid: KGrid,
    pub n_segments: usize,
    pub total_length: f64,
    pub kappa: f64,
    pub bounds: Bounds,
    pub multistart: usize,
    pub seed: u64,
    /// One detuning shared by all segments.
    pub tie_detuning: bool,
    /// Optimize the widths too (their sum stays `total_length`).
    pub free_widths: bool,
}

impl OptimizationProblem {
    /// Defaults: κ = 0.2, 16 restarts, seed 0, default bounds.
    pub fn new(
        species: AtomSpecies<f64>,
        grid: KGrid,
        n_segments: usize,
        total_length: f64,
    ) -> Self {
        let bounds = Bounds::default_for(&species);
        Self {
            species,
            grid,
            n_segments,
            total_length,
            kappa: 0.2,
            bounds,
            multistart: 16,
            seed: 0,
            tie_detuning: false,
            free_widths: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.species.validate()?;
        self.grid.validate()?;
        if self.n_segments == 0 {
            return Err(invalid("n_segments must be at least 1"));
        }
        if !(self.total_length > 0.0) || !self.total_length.is_finite() {
            return Err(invalid("total_length must be positive"));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(invalid(format!(
                "kappa must lie in (0, 1), got {}",
                self.kappa
            )));
        }
        let (dl, dh) = self.bounds.detuning;
        let (rl, rh) = self.bounds.rabi;
        if !(dl < dh)
            || !(rl < rh)
            || !(rh > 0.0)
            || [dl, dh, rl, rh].iter().any(|b| !b.is_finite())
        {
            return Err(invalid(
                "bounds must be finite with lower < upper and a positive Rabi upper bound",
            ));
        }
        Ok(())
    }

    pub fn max_energy(&self) -> f64 {
        self.grid.max_energy(&self.species)
    }
}

/// Outcome of one start point; index 0 is the deterministic start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub objective: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub violation: f64,
    pub message: Option<String>,
}

/// Constraint slacks of one segment at the optimum; all non-negative when feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSlack {
    /// κ − Ω/|2Δ + iγ|
    pub r_omega: f64,
    /// κ − E_max/(|2Δ + iγ|/2)
    pub r_energy: f64,
    pub rabi_lower: f64,
    pub rabi_upper: f64,
    pub detuning_lower: f64,
    pub detuning_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub profile: LaserProfile<f64>,
    pub objective: f64,
    pub per_k_absorption: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_summary: Vec<RestartSummary>,
    pub slacks: Vec<SegmentSlack>,
    pub max_energy: f64,
}

const MIN_WIDTH_FRACTION: f64 = 1e-6;

/// Variables are scaled by γ (laser parameters) and by L (widths):
/// detunings, then Rabi frequencies, then the first n − 1 width fractions.
struct LaserNlp<'a> {
    problem: &'a OptimizationProblem,
    /// 4E_max²/(κ²γ²)
    energy_floor: f64,
}

impl<'a> LaserNlp<'a> {
    fn new(problem: &'a OptimizationProblem) -> Self {
        let e = problem.max_energy() / problem.species.gamma;
        Self {
            problem,
            energy_floor: 4.0 * e * e / (problem.kappa * problem.kappa),
        }
    }

    fn n(&self) -> usize {
        self.problem.n_segments
    }

    fn n_detunings(&self) -> usize {
        if self.problem.tie_detuning {
            1
        } else {
            self.n()
        }
    }

    fn n_widths(&self) -> usize {
        if self.problem.free_widths {
            self.n() - 1
        } else {
            0
        }
    }

    fn detuning_index(&self, segment: usize) -> usize {
        if self.problem.tie_detuning {
            0
        } else {
            segment
        }
    }

    fn rabi_index(&self, segment: usize) -> usize {
        self.n_detunings() + segment
    }

    fn width_fractions(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n();
        if !self.problem.free_widths {
            return vec![1.0 / n as f64; n];
        }
        let head = &y[self.n_detunings() + n..];
        let mut u = head.to_vec();
        u.push(1.0 - head.iter().sum::<f64>());
        u
    }

    fn profile(&self, y: &[f64]) -> Result<LaserProfile<f64>> {
        let g = self.problem.species.gamma;
        let l = self.problem.total_length;
        let u = self.width_fractions(y);
        let segments = (0..self.n())
            .map(|j| {
                let rabi = (y[self.rabi_index(j)] * g).max(0.0);
                Segment::new(u[j] * l, y[self.detuning_index(j)] * g, rabi)
            })
            .collect::<Result<Vec<_>>>()?;
        LaserProfile::new(self.problem.species.clone(), 0.0, segments)
    }

    fn encode(&self, profile: &LaserProfile<f64>) -> Vec<f64> {
        let g = self.problem.species.gamma;
        let mut y = vec![0.0; self.dim()];
        for (j, s) in profile.segments.iter().enumerate() {
            y[self.detuning_index(j)] = s.detuning / g;
            y[self.rabi_index(j)] = s.rabi / g;
        }
        for j in 0..self.n_widths() {
            y[self.n_detunings() + self.n() + j] =
                profile.segments[j].width / self.problem.total_length;
        }
        y
    }

    /// Scaled feasible intervals for the detuning: the kappa energy floor
    /// excludes a band around zero.
    fn detuning_intervals(&self) -> Vec<(f64, f64)> {
        let g = self.problem.species.gamma;
        let (lo, hi) = (
            self.problem.bounds.detuning.0 / g,
            self.problem.bounds.detuning.1 / g,
        );
        let floor = (self.energy_floor - 1.0).max(0.0).sqrt() / 2.0;
        if floor == 0.0 {
            return vec![(lo, hi)];
        }
        let margin = 1e-6 * (1.0 + floor);
        [(lo, hi.min(-floor - margin)), (lo.max(floor + margin), hi)]
            .into_iter()
            .filter(|(a, b)| a < b)
            .collect()
    }

    /// Largest admissible scaled Rabi frequency for a scaled detuning.
    fn rabi_cap(&self, y_delta: f64) -> f64 {
        let g = self.problem.species.gamma;
        let kappa_cap = self.problem.kappa * (4.0 * y_delta * y_delta + 1.0).sqrt();
        kappa_cap.min(self.problem.bounds.rabi.1 / g)
    }

    fn rabi_floor(&self) -> f64 {
        self.problem.bounds.rabi.0.max(0.0) / self.problem.species.gamma
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let intervals = self.detuning_intervals();
        let total: f64 = intervals.iter().map(|(a, b)| b - a).sum();
        if intervals.is_empty() || !(total > 0.0) {
            return Err(Error::NoFeasibleStart(
                "the detuning bounds exclude every detuning allowed by the kappa energy condition"
                    .into(),
            ));
        }
        let mut y = vec![0.0; self.dim()];
        for i in 0..self.n_detunings() {
            let mut s = rng.gen::<f64>() * total;
            let mut value = intervals[0].0;
            for &(a, b) in &intervals {
                if s <= b - a {
                    value = a + s;
                    break;
                }
                s -= b - a;
            }
            y[i] = value;
        }
        let floor = self.rabi_floor();
        for j in 0..self.n() {
            let cap = self.rabi_cap(y[self.detuning_index(j)]);
            if cap <= floor {
                return Err(Error::NoFeasibleStart(
                    "Rabi lower bound exceeds the kappa limit".into(),
                ));
            }
            y[self.rabi_index(j)] = floor + (cap - floor) * (0.001 + 0.998 * rng.gen::<f64>());
        }
        if self.problem.free_widths {
            let raw: Vec<f64> = (0..self.n())
                .map(|_| 0.2 + 0.8 * rng.gen::<f64>())
                .collect();
            let sum: f64 = raw.iter().sum();
            for j in 0..self.n_widths() {
                y[self.n_detunings() + self.n() + j] = raw[j] / sum;
            }
        }
        Ok(y)
    }

    /// Δ = 0 with Ω tuned to 90 % single-pass absorption at the median k,
    /// moved onto the feasible set (negative detuning side first).
    fn deterministic_start(&self) -> Result<Vec<f64>> {
        let p = self.problem;
        let mut ks = p.grid.wavenumbers();
        ks.sort_by(f64::total_cmp);
        let k_med = ks[ks.len() / 2];
        let b = (10.0_f64).ln() / (2.0 * p.total_length);
        let im_v = b * (k_med * k_med + b * b).sqrt() / p.species.mass_over_hbar;
        let mut delta = 0.0;
        let mut rabi = (2.0 * p.species.gamma * im_v).sqrt() / p.species.gamma;

        let intervals = self.detuning_intervals();
        if !intervals.iter().any(|&(a, bnd)| a <= delta && delta <= bnd) {
            let nearest = intervals
                .iter()
                .map(|&(a, bnd)| if bnd <= 0.0 { bnd } else { a })
                .min_by(|x, y| x.abs().total_cmp(&y.abs()).then(x.total_cmp(y)))
                .ok_or_else(|| {
                    Error::NoFeasibleStart(
                        "no detuning satisfies both the bounds and the kappa energy condition"
                            .into(),
                    )
                })?;
            delta = nearest;
        }
        let floor = self.rabi_floor();
        let cap = self.rabi_cap(delta);
        if cap <= floor {
            return Err(Error::NoFeasibleStart(
                "Rabi lower bound exceeds the kappa limit".into(),
            ));
        }
        rabi = rabi.clamp(floor, floor + (cap - floor) * 0.999);

        let segments = (0..p.n_segments)
            .map(|_| {
                Segment::new(
                    p.total_length / p.n_segments as f64,
                    delta * p.species.gamma,
                    rabi * p.species.gamma,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.encode(&LaserProfile::new(p.species.clone(), 0.0, segments)?))
    }
}

impl Nlp for LaserNlp<'_> {
    fn dim(&self) -> usize {
        self.n_detunings() + self.n() + self.n_widths()
    }

    fn n_constraints(&self) -> usize {
        // detuning box + energy per detuning, Rabi box + kappa per segment, widths
        3 * self.n_detunings()
            + 3 * self.n()
            + if self.problem.free_widths {
                self.n()
            } else {
                0
            }
    }

    fn objective(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let profile = self.profile(y)?;
        let records = gradient_records(&profile, &self.problem.grid)?;
        let g = self.problem.species.gamma;
        let l = self.problem.total_length;
        let n = self.n();
        let mut value = 0.0;
        let mut grad = vec![0.0; self.dim()];
        let mut d_width = vec![0.0; n];
        for (rec, &(_, w)) in records.iter().zip(&self.problem.grid.points) {
            value += w * rec.amplitudes.absorption;
            for j in 0..n {
                grad[self.detuning_index(j)] += w * rec.d_detuning[j] * g;
                grad[self.rabi_index(j)] += w * rec.d_rabi[j] * g;
                d_width[j] += w * rec.d_width[j];
            }
        }
        for j in 0..self.n_widths() {
            grad[self.n_detunings() + n + j] = l * (d_width[j] - d_width[n - 1]);
        }
        Ok((-value, grad.into_iter().map(|v| -v).collect()))
    }

    fn constraints(&self, y: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let g = self.problem.species.gamma;
        let kappa2 = self.problem.kappa * self.problem.kappa;
        let (dl, dh) = (
            self.problem.bounds.detuning.0 / g,
            self.problem.bounds.detuning.1 / g,
        );
        let (rl, rh) = (self.rabi_floor(), self.problem.bounds.rabi.1 / g);
        let m = self.n_constraints();
        let mut c = Vec::with_capacity(m);
        let mut jac = DMatrix::zeros(m, self.dim());
        let mut row = 0;
        let mut push = |c: &mut Vec<f64>, value: f64, entries: &[(usize, f64)]| {
            for &(col, v) in entries {
                jac[(row, col)] += v;
            }
            c.push(value);
            row += 1;
        };
        for i in 0..self.n_detunings() {
            let d = y[i];
            push(&mut c, d - dl, &[(i, 1.0)]);
            push(&mut c, dh - d, &[(i, -1.0)]);
            push(
                &mut c,
                4.0 * d * d + 1.0 - self.energy_floor,
                &[(i, 8.0 * d)],
            );
        }
        for j in 0..self.n() {
            let (id, ir) = (self.detuning_index(j), self.rabi_index(j));
            let (d, r) = (y[id], y[ir]);
            push(&mut c, r - rl, &[(ir, 1.0)]);
            push(&mut c, rh - r, &[(ir, -1.0)]);
            push(
                &mut c,
                kappa2 * (4.0 * d * d + 1.0) - r * r,
                &[(id, 8.0 * kappa2 * d), (ir, -2.0 * r)],
            );
        }
        if self.problem.free_widths {
            let base = self.n_detunings() + self.n();
            let nw = self.n_widths();
            for j in 0..nw {
                push(&mut c, y[base + j] - MIN_WIDTH_FRACTION, &[(base + j, 1.0)]);
            }
            let last = 1.0 - y[base..base + nw].iter().sum::<f64>() - MIN_WIDTH_FRACTION;
            let entries: Vec<(usize, f64)> = (0..nw).map(|j| (base + j, -1.0)).collect();
            push(&mut c, last, &entries);
        }
        (c, jac)
    }
}

fn slacks(
    profile: &LaserProfile<f64>,
    problem: &OptimizationProblem,
    e_max: f64,
) -> Vec<SegmentSlack> {
    profile
        .segments
        .iter()
        .map(|s| {
            let r = weak_driving_ratio(s, e_max, &problem.species);
            SegmentSlack {
                r_omega: problem.kappa - r.r_omega,
                r_energy: problem.kappa - r.r_energy,
                rabi_lower: s.rabi - problem.bounds.rabi.0.max(0.0),
                rabi_upper: problem.bounds.rabi.1 - s.rabi,
                detuning_lower: s.detuning - problem.bounds.detuning.0,
                detuning_upper: problem.bounds.detuning.1 - s.detuning,
            }
        })
        .collect()
}

/// Maximizes Ā from one deterministic and `multistart` seeded random starts.
pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let nlp = LaserNlp::new(problem);
    let options = SqpOptions::default();
    // structural infeasibility is reported up front, not once per restart
    nlp.random_start(&mut ChaCha8Rng::seed_from_u64(problem.seed))?;

    let runs: Vec<(RestartSummary, Option<SqpOutcome>)> = (0..=problem.multistart)
        .into_par_iter()
        .map(|index| {
            let start = if index == 0 {
                nlp.deterministic_start()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(problem.seed.wrapping_add(index as u64));
                nlp.random_start(&mut rng)
            };
            let outcome = start.and_then(|y0| minimize(&nlp, &y0, &options));
            match outcome {
                Ok(out) => (
                    RestartSummary {
                        index,
                        objective: Some(-out.f),
                        converged: out.converged,
                        iterations: out.iterations,
                        kkt_residual: out.kkt,
                        violation: out.violation,
                        message: None,
                    },
                    Some(out),
                ),
                Err(e) => (
                    RestartSummary {
                        index,
                        objective: None,
                        converged: false,
                        iterations: 0,
                        kkt_residual: f64::NAN,
                        violation: f64::NAN,
                        message: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let best = runs
        .iter()
        .filter_map(|(s, o)| {
            o.as_ref()
                .filter(|o| o.converged && o.violation < options.feasibility_tolerance)
                .map(|o| (s, o))
        })
        .max_by(|a, b| (-a.1.f).total_cmp(&-b.1.f).then(b.0.index.cmp(&a.0.index)));
    let restarts_summary: Vec<RestartSummary> = runs.iter().map(|(s, _)| s.clone()).collect();
    let Some((_, best)) = best else {
        let detail: Vec<String> = restarts_summary
            .iter()
            .map(|s| match &s.message {
                Some(m) => format!("#{}: {m}", s.index),
                None => format!(
                    "#{}: kkt {:.2e}, violation {:.2e}",
                    s.index, s.kkt_residual, s.violation
                ),
            })
            .collect();
        return Err(Error::OptimizationFailed(format!(
            "no restart converged ({})",
            detail.join("; ")
        )));
    };

    let profile = nlp.profile(&best.x)?;
    let per_k_absorption = absorption_curve(&profile, &problem.grid)?;
    let objective = per_k_absorption
        .iter()
        .zip(&problem.grid.points)
        .map(|(a, p)| a * p.1)
        .sum();
    let e_max = problem.max_energy();
    Ok(OptimizationResult {
        slacks: slacks(&profile, problem, e_max),
        profile,
        objective,
        per_k_absorption,
        iterations: best.iterations,
        converged: true,
        restarts_summary,
        max_energy: e_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::cesium_default;

    fn cs() -> AtomSpecies<f64> {
        cesium_default()
    }

    #[test]
    fn velocity_grid() {
        let g = uniform_velocity_grid(0.2, 9.0, 100, &cs()).unwrap();
        assert_eq!(g.len(), 100);
        assert!(g.points.iter().all(|p| (p.1 - 0.01).abs() < 1e-15));
        let sum: f64 = g.points.iter().map(|p| p.1).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let v_last = cs().wavenumber_to_velocity(g.points[99].0).unwrap();
        assert!((v_last - 0.09).abs() < 1e-15);
        assert!(uniform_velocity_grid(1.0, 1.0, 10, &cs()).is_err());
        assert!(uniform_velocity_grid(1.0, 2.0, 1, &cs()).is_err());
        assert!(uniform_velocity_grid(0.0, 2.0, 5, &cs()).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(KGrid::new(vec![(1.0, 0.5)]).is_err());
        assert!(KGrid::new(vec![(-1.0, 1.0)]).is_err());
        let g = KGrid::normalized(vec![(1.0, 2.0), (2.0, 2.0)]).unwrap();
        assert_eq!(g.points[0].1, 0.5);
    }

    #[test]
    fn dark_profile_is_zero() {
        let grid = uniform_velocity_grid(0.2, 9.0, 20, &cs()).unwrap();
        let p = LaserProfile::uniform(cs(), 10.0, 3, -40.0, 0.0).unwrap();
        assert!(objective_value(&p, &grid).unwrap().abs() < 1e-14);
        let grad = objective_gradient(&p, &grid).unwrap();
        assert_eq!(grad.len(), 6);
        for j in 0..3 {
            assert_eq!(grad[2 * j + 1], 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = uniform_velocity_grid(0.2, 9.0, 15, &cs()).unwrap();
        let p = LaserProfile::new(
            cs(),
            0.0,
            vec![
                Segment::new(4.0, -45.0, 9.0).unwrap(),
                Segment::new(6.0, -70.0, 20.0).unwrap(),
            ],
        )
        .unwrap();
        let grad = objective_gradient(&p, &grid).unwrap();
        for (i, &an) in grad.iter().enumerate() {
            let h = 1e-4;
            let shifted = |delta: f64| {
                let mut q = p.clone();
                let s = &mut q.segments[i / 2];
                if i % 2 == 0 {
                    s.detuning += delta;
                } else {
                    s.rabi += delta;
                }
                objective_value(&q, &grid).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            assert!(
                (an - fd).abs() < 1e-7 * (1.0 + an.abs()),
                "{i}: {an} vs {fd}"
            );
        }
    }

    fn nlp_gradient_check(problem: &OptimizationProblem, y: &[f64]) {
        let nlp = LaserNlp::new(problem);
        let (_, g) = nlp.objective(y).unwrap();
        for i in 0..y.len() {
            let h = 1e-6;
            let mut yp = y.to_vec();
            yp[i] += h;
            let mut ym = y.to_vec();
            ym[i] -= h;
            let fd = (nlp.objective(&yp).unwrap().0 - nlp.objective(&ym).unwrap().0) / (2.0 * h);
            assert!(
                (g[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                "{i}: {} vs {fd}",
                g[i]
            );
        }
        let (_, jac) = nlp.constraints(y);
        for i in 0..y.len() {
            let h = 1e-6;
            let mut yp = y.to_vec();
            yp[i] += h;
            let mut ym = y.to_vec();
            ym[i] -= h;
            let (cp, _) = nlp.constraints(&yp);
            let (cm, _) = nlp.constraints(&ym);
            for r in 0..cp.len() {
                let fd = (cp[r] - cm[r]) / (2.0 * h);
                assert!((jac[(r, i)] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn scaled_problem_derivatives() {
        let grid = uniform_velocity_grid(0.2, 9.0, 10, &cs()).unwrap();
        let mut problem = OptimizationProblem::new(cs(), grid, 3, 10.0);
        nlp_gradient_check(&problem, &[-1.5, -2.0, -1.2, 0.2, 0.5, 0.3]);
        problem.tie_detuning = true;
        problem.free_widths = true;
        nlp_gradient_check(&problem, &[-1.5, 0.2, 0.5, 0.3, 0.2, 0.5]);
    }

    #[test]
    fn starts_are_feasible() {
        let grid = uniform_velocity_grid(0.2, 9.0, 100, &cs()).unwrap();
        let problem = OptimizationProblem::new(cs(), grid, 4, 10.0);
        let nlp = LaserNlp::new(&problem);
        let y = nlp.deterministic_start().unwrap();
        assert!(y[0] < 0.0);
        assert!(nlp.constraints(&y).0.iter().all(|&c| c >= 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let y = nlp.random_start(&mut rng).unwrap();
            assert!(nlp.constraints(&y).0.iter().all(|&c| c >= 0.0));
        }
    }

    #[test]
    fn infeasible_problem_reported() {
        let grid = uniform_velocity_grid(0.2, 9.0, 10, &cs()).unwrap();
        let mut problem = OptimizationProblem::new(cs(), grid, 1, 10.0);
        let g = problem.species.gamma;
        problem.bounds.detuning = (-0.5 * g, 0.5 * g);
        problem.multistart = 2;
        assert!(matches!(optimize(&problem), Err(Error::NoFeasibleStart(_))));
    }

    #[test]
    fn single_segment_optimum_is_consistent() {
        let grid = uniform_velocity_grid(0.2, 9.0, 30, &cs()).unwrap();
        let mut problem = OptimizationProblem::new(cs(), grid.clone(), 1, 10.0);
        problem.multistart = 4;
        let res = optimize(&problem).unwrap();
        assert!(res.converged);
        let again = objective_value(&res.profile, &grid).unwrap();
        assert!((again - res.objective).abs() < 1e-10);
        assert!(res
            .slacks
            .iter()
            .all(|s| s.r_omega >= -1e-8 && s.r_energy >= -1e-8));
        assert_eq!(res.restarts_summary.len(), 5);
        let twice = optimize(&problem).unwrap();
        assert_eq!(res.objective.to_bits(), twice.objective.to_bits());
    }
}
