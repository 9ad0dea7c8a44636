//! Two-channel stationary scattering under the conditional Hamiltonian
//!
//! ```text
//! H = p²/2m + ½ [[0, Ω(x)], [Ω(x), −2Δ − iγ]]      (ħ = 1)
//! ```
//!
//! with the ground state incident from the left. In every segment the
//! constant 2×2 potential matrix is diagonalized and each eigenmode carries
//! its own complex wavenumber; the amplitudes of all modes in all regions
//! are then fixed at once by continuity of both components and their
//! derivatives at every interface. Each mode is written relative to the
//! edge it decays away from, so no exponential in the system exceeds 1.
//!
//! Conventions: ground-channel waves use absolute x (e^{ikx} + R₁e^{−ikx},
//! T₁e^{ikx}); excited-channel waves are referenced to the nearest edge of
//! the illuminated region, R₂e^{−iq(x−x_start)} and T₂e^{iq(x−x_end)}, since
//! e^{iqx} itself over- or underflows for realistic Im q. Outside the laser
//! the excited channel obeys q² = 2(m/ħ)(E + Δ + iγ/2) with Δ taken from the
//! adjacent segment.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::solve_in_place;
use crate::oracle::{solve_two_channel_oracle, OracleConfig};
use crate::potential::{
    profile_to_potential, profile_weak_driving_ratio, LaserProfile, Segment, WeakDrivingRatios,
};
use crate::scalar::{cone, cplx, czero, sqrt_upper, Cplx, Real};
use crate::scatter::solve_one_channel;
use crate::units::AtomSpecies;

/// Eigenvector conditioning above which a segment is treated as defective.
pub const DEFECTIVE_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoChannelAmplitudes<T> {
    pub k: T,
    /// Excited-channel wavenumber left of the laser (Im q > 0).
    pub q_left: Cplx<T>,
    /// Excited-channel wavenumber right of the laser (Im q > 0).
    pub q_right: Cplx<T>,
    pub r1: Cplx<T>,
    pub r2: Cplx<T>,
    pub t1: Cplx<T>,
    pub t2: Cplx<T>,
    /// Detection probability 1 − |R₁|² − |T₁|².
    pub absorption: T,
}

impl<T: Real> TwoChannelAmplitudes<T> {
    pub(crate) fn new(
        k: T,
        q_left: Cplx<T>,
        q_right: Cplx<T>,
        r1: Cplx<T>,
        r2: Cplx<T>,
        t1: Cplx<T>,
        t2: Cplx<T>,
    ) -> Self {
        Self {
            k,
            q_left,
            q_right,
            r1,
            r2,
            t1,
            t2,
            absorption: T::one() - r1.norm_sqr() - t1.norm_sqr(),
        }
    }
}

/// Excited-channel asymptotic wavenumbers (left, right).
pub fn lead_wavenumbers<T: Real>(k: T, profile: &LaserProfile<T>) -> (Cplx<T>, Cplx<T>) {
    let sp = &profile.species;
    let two_m = T::lit(2.0) * sp.mass_over_hbar;
    let e = sp.kinetic_energy(k);
    let q = |detuning: T| sqrt_upper(cplx(e + detuning, sp.gamma / T::lit(2.0)) * two_m);
    let left = profile.segments.first().map_or(T::zero(), |s| s.detuning);
    let right = profile.segments.last().map_or(T::zero(), |s| s.detuning);
    (q(left), q(right))
}

/// Eigenmodes of one region: unit vectors and wavenumbers.
#[derive(Debug, Clone, Copy)]
struct Modes<T> {
    u: [[Cplx<T>; 2]; 2],
    kappa: [Cplx<T>; 2],
}

/// Diagonalizes [[0, Ω/2], [Ω/2, −(Δ + iγ/2)]]. Returns the modes and the
/// eigenvector condition number.
fn segment_modes<T: Real>(seg: &Segment<T>, e: T, species: &AtomSpecies<T>) -> (Modes<T>, T) {
    let two_m = T::lit(2.0) * species.mass_over_hbar;
    let half = T::lit(0.5);
    let c = cplx(seg.detuning, species.gamma * half);
    let wavenumber = |lambda: Cplx<T>| sqrt_upper((cplx(e, T::zero()) - lambda) * two_m);
    if seg.rabi == T::zero() {
        let modes = Modes {
            u: [[cone(), czero()], [czero(), cone()]],
            kappa: [wavenumber(czero()), wavenumber(-c)],
        };
        return (modes, T::one());
    }
    let h = seg.rabi * half;
    let disc = (c * c + cplx(seg.rabi * seg.rabi, T::zero())).sqrt();
    let la = (-c - disc) * half;
    let lb = (-c + disc) * half;
    let big = if la.norm() >= lb.norm() { la } else { lb };
    let small = cplx(-h * h, T::zero()) / big;
    let vector = |lambda: Cplx<T>| {
        let v1 = [cplx(h, T::zero()), lambda];
        let v2 = [lambda + c, cplx(h, T::zero())];
        let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
        let n2 = (v2[0].norm_sqr() + v2[1].norm_sqr()).sqrt();
        if n1 >= n2 {
            [v1[0] / n1, v1[1] / n1]
        } else {
            [v2[0] / n2, v2[1] / n2]
        }
    };
    let ua = vector(small);
    let ub = vector(big);
    let det = ua[0] * ub[1] - ub[0] * ua[1];
    let condition = T::lit(2.0) / det.norm();
    let modes = Modes {
        u: [ua, ub],
        kappa: [wavenumber(small), wavenumber(big)],
    };
    (modes, condition)
}

/// Forward (a) and backward (b) amplitudes of the two modes of one segment.
type Coefficients<T> = ([Cplx<T>; 2], [Cplx<T>; 2]);

/// Mode amplitudes of the whole system, relative to the local references.
struct Solution<T> {
    modes: Vec<Modes<T>>,
    coefficients: Vec<Coefficients<T>>,
    amplitudes: TwoChannelAmplitudes<T>,
}

fn solve_global<T: Real>(k: T, profile: &LaserProfile<T>) -> Result<Solution<T>> {
    if !(k > T::zero()) || !k.is_finite() {
        return Err(invalid(format!("wavenumber must be positive, got {k}")));
    }
    let sp = &profile.species;
    let e = sp.kinetic_energy(k);
    let n_seg = profile.segments.len();
    let (q_left, q_right) = lead_wavenumbers(k, profile);
    let lead = |q: Cplx<T>| Modes {
        u: [[cone(), czero()], [czero(), cone()]],
        kappa: [cplx(k, T::zero()), q],
    };
    let mut modes = Vec::with_capacity(n_seg + 2);
    modes.push(lead(q_left));
    for seg in &profile.segments {
        let (m, condition) = segment_modes(seg, e, sp);
        if !(condition < T::lit(DEFECTIVE_CONDITION)) {
            return Err(Error::NearDefective {
                condition: condition.to_f64_lossy(),
            });
        }
        modes.push(m);
    }
    modes.push(lead(q_right));

    let s = modes
        .iter()
        .flat_map(|m| m.kappa.iter())
        .fold(T::zero(), |a, z| a.max(z.norm()));
    let inv_s = T::one() / s;
    let dim = 4 * n_seg + 4;
    let mut a = vec![czero::<T>(); dim * dim];
    let mut rhs = vec![czero::<T>(); dim];
    // columns: left lead backward (0,1); segment j forward (2+4j+m), backward (4+4j+m); right lead forward (4n+2+m)
    let widths: Vec<T> = profile.segments.iter().map(|s| s.width).collect();
    let growth = |region: usize, m: usize| -> Cplx<T> {
        if region == 0 || region == n_seg + 1 {
            cone()
        } else {
            let kk = modes[region].kappa[m];
            (cplx(-kk.im, kk.re) * widths[region - 1]).exp()
        }
    };
    let fwd_col = |region: usize, m: usize| -> Option<usize> {
        match region {
            0 => None,
            r if r == n_seg + 1 => Some(4 * n_seg + 2 + m),
            r => Some(2 + 4 * (r - 1) + m),
        }
    };
    let bwd_col = |region: usize, m: usize| -> Option<usize> {
        match region {
            0 => Some(m),
            r if r == n_seg + 1 => None,
            r => Some(4 + 4 * (r - 1) + m),
        }
    };
    for iface in 0..=n_seg {
        let row0 = 4 * iface;
        let left = iface;
        let right = iface + 1;
        // sign +1 for the left region, −1 for the right region
        for (region, sign, at_right_end) in [(left, T::one(), true), (right, -T::one(), false)] {
            let md = modes[region];
            for m in 0..2 {
                let ik = cplx(-md.kappa[m].im, md.kappa[m].re);
                let g = growth(region, m);
                // forward wave e^{iκ(x − x_left)}: value g at the right end, 1 at the left end
                let fval = if at_right_end { g } else { cone() };
                // backward wave e^{−iκ(x − x_right)}: value 1 at the right end, g at the left end
                let bval = if at_right_end { cone() } else { g };
                let entries = [
                    (fwd_col(region, m), fval, ik),
                    (bwd_col(region, m), bval, -ik),
                ];
                for (col, val, dfac) in entries {
                    for comp in 0..2 {
                        let v = md.u[m][comp] * val * sign;
                        let d = v * dfac * inv_s;
                        match col {
                            Some(c) => {
                                a[(row0 + comp) * dim + c] = a[(row0 + comp) * dim + c] + v;
                                a[(row0 + 2 + comp) * dim + c] = a[(row0 + 2 + comp) * dim + c] + d;
                            }
                            None if region == 0 && m == 0 => {
                                // incident ground wave with unit amplitude
                                rhs[row0 + comp] = rhs[row0 + comp] - v;
                                rhs[row0 + 2 + comp] = rhs[row0 + 2 + comp] - d;
                            }
                            None => {}
                        }
                    }
                }
            }
        }
    }
    solve_in_place(dim, &mut a, &mut rhs)?;

    let coefficients = (0..n_seg)
        .map(|j| {
            let base = 2 + 4 * j;
            ([rhs[base], rhs[base + 1]], [rhs[base + 2], rhs[base + 3]])
        })
        .collect();
    let phase = |t: T| cplx(t.cos(), t.sin());
    let inc = phase(k * profile.x_start);
    let r1 = rhs[0] * inc * inc;
    let r2 = rhs[1] * inc;
    let t1 = rhs[4 * n_seg + 2] * phase(-k * profile.total_length());
    let t2 = rhs[4 * n_seg + 3] * inc;
    Ok(Solution {
        modes,
        coefficients,
        amplitudes: TwoChannelAmplitudes::new(k, q_left, q_right, r1, r2, t1, t2),
    })
}

/// Two-channel amplitudes; near-defective segments fall back to direct integration.
pub fn solve_two_channel<T: Real>(
    k: T,
    profile: &LaserProfile<T>,
) -> Result<TwoChannelAmplitudes<T>> {
    profile.validate()?;
    match solve_global(k, profile) {
        Ok(sol) => Ok(sol.amplitudes),
        Err(Error::NearDefective { .. }) => {
            solve_two_channel_oracle(k, profile, &OracleConfig::default())
        }
        Err(e) => Err(e),
    }
}

/// Stationary two-channel state normalized to an incoming ground e^{ikx}.
#[derive(Debug, Clone)]
pub struct TwoChannelState<T> {
    pub amplitudes: TwoChannelAmplitudes<T>,
    x_start: T,
    x_end: T,
    edges: Vec<T>,
    widths: Vec<T>,
    modes: Vec<Modes<T>>,
    coefficients: Vec<Coefficients<T>>,
}

/// Near-defective segments are reported as errors here.
pub fn stationary_state_two_channel<T: Real>(
    k: T,
    profile: &LaserProfile<T>,
) -> Result<TwoChannelState<T>> {
    profile.validate()?;
    let sol = solve_global(k, profile)?;
    Ok(TwoChannelState {
        amplitudes: sol.amplitudes,
        x_start: profile.x_start,
        x_end: profile.x_end(),
        edges: profile.edges(),
        widths: profile.segments.iter().map(|s| s.width).collect(),
        modes: sol.modes[1..sol.modes.len() - 1].to_vec(),
        coefficients: sol.coefficients,
    })
}

impl<T: Real> TwoChannelState<T> {
    /// Largest |κ| of any mode, i.e. the finest spatial structure.
    pub fn max_wavenumber(&self) -> T {
        let amp = &self.amplitudes;
        self.modes
            .iter()
            .flat_map(|m| m.kappa.iter())
            .chain([amp.q_left, amp.q_right].iter())
            .fold(amp.k, |a, z| a.max(z.norm()))
    }

    pub fn eval(&self, x: T) -> [Cplx<T>; 2] {
        let amp = &self.amplitudes;
        let k = amp.k;
        let phase = |t: T| cplx(t.cos(), t.sin());
        let iq = |q: Cplx<T>| cplx(-q.im, q.re);
        if x <= self.x_start {
            return [
                phase(k * x) + amp.r1 * phase(-k * x),
                amp.r2 * (-iq(amp.q_left) * (x - self.x_start)).exp(),
            ];
        }
        if x >= self.x_end {
            return [
                amp.t1 * phase(k * x),
                amp.t2 * (iq(amp.q_right) * (x - self.x_end)).exp(),
            ];
        }
        let j = self.edges.partition_point(|&e| e <= x).saturating_sub(1);
        let x_l = self.edges[j];
        let x_r = x_l + self.widths[j];
        let md = &self.modes[j];
        let (fa, fb) = self.coefficients[j];
        let inc = phase(k * self.x_start);
        let mut out = [czero::<T>(); 2];
        for m in 0..2 {
            let ik = iq(md.kappa[m]);
            let amp_m = fa[m] * (ik * (x - x_l)).exp() + fb[m] * (-ik * (x - x_r)).exp();
            for (o, u) in out.iter_mut().zip(&md.u[m]) {
                *o = *o + *u * amp_m * inc;
            }
        }
        out
    }
}

/// Per-wavenumber comparison of the one- and two-channel detection probabilities.
#[derive(Debug, Clone)]
pub struct ChannelComparison<T> {
    /// (k, A one-channel, A two-channel, |difference|)
    pub rows: Vec<(T, T, T, T)>,
    pub max_diff: T,
    pub ratios: WeakDrivingRatios<T>,
    /// Whether the profile satisfies the weak-driving condition at `kappa`.
    pub valid: bool,
}

pub fn compare_channels<T: Real>(
    k_grid: &[T],
    profile: &LaserProfile<T>,
    kappa: T,
) -> Result<ChannelComparison<T>> {
    let potential = profile_to_potential(profile);
    let rows = k_grid
        .par_iter()
        .map(|&k| {
            let one = solve_one_channel(k, &potential, &profile.species)?.absorption;
            let two = solve_two_channel(k, profile)?.absorption;
            Ok((k, one, two, (one - two).abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_diff = rows.iter().fold(T::zero(), |a, r| a.max(r.3));
    let e_max = k_grid
        .iter()
        .fold(T::zero(), |a, &k| a.max(profile.species.kinetic_energy(k)));
    let ratios = profile_weak_driving_ratio(profile, e_max);
    Ok(ChannelComparison {
        rows,
        max_diff,
        valid: ratios.is_valid(kappa),
        ratios,
    })
}
