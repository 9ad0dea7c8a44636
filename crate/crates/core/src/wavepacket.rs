//! Conditional time evolution of an incident wavepacket, assembled from
//! stationary scattering states, and the resulting photon statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::potential::{profile_to_potential, LaserProfile};
use crate::scalar::{cplx, Cplx};
use crate::scatter::{stationary_state, OneChannelState};
use crate::twochannel::{lead_wavenumbers, stationary_state_two_channel, TwoChannelState};
use crate::units::{si, AtomSpecies};

/// Momentum-space weight allowed outside the quadrature window (and at k ≤ 0).
pub const K_TRUNCATION: f64 = 1e-8;
/// Probability allowed to leak through the ends of the spatial box.
pub const BOX_TOLERANCE: f64 = 1e-8;

const POINTS_PER_WAVELENGTH: f64 = 16.0;
const EDGE_LAYER_DECAYS: f64 = 25.0;
const CHUNK: usize = 512;

/// Gaussian packet ψ̃(k) = (2σ²/π)^{1/4} e^{−σ²(k−k₀)²} e^{−ikx₀}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavepacketSpec {
    /// Mean velocity (cm/s).
    pub v_mean: f64,
    /// Position spread σ (μm); |ψ(x)|² has standard deviation σ.
    pub sigma_x: f64,
    /// Initial centre (μm).
    pub x0: f64,
}

impl WavepacketSpec {
    /// Rejects packets with more than [`K_TRUNCATION`] weight at k ≤ 0.
    pub fn new(v_mean: f64, sigma_x: f64, x0: f64, species: &AtomSpecies<f64>) -> Result<Self> {
        let spec = Self {
            v_mean,
            sigma_x,
            x0,
        };
        spec.validate(species)?;
        Ok(spec)
    }

    pub fn validate(&self, species: &AtomSpecies<f64>) -> Result<()> {
        if !(self.v_mean > 0.0) || !self.v_mean.is_finite() {
            return Err(invalid("packet mean velocity must be positive"));
        }
        if !(self.sigma_x > 0.0) || !self.sigma_x.is_finite() || !self.x0.is_finite() {
            return Err(invalid(
                "packet width must be positive and the centre finite",
            ));
        }
        let negative = 0.5
            * libm::erfc(std::f64::consts::SQRT_2 * self.sigma_x * self.mean_wavenumber(species));
        if negative >= K_TRUNCATION {
            return Err(Error::Truncation {
                what: "packet weight at k <= 0",
                residual: negative,
                tolerance: K_TRUNCATION,
            });
        }
        Ok(())
    }

    pub fn mean_wavenumber(&self, species: &AtomSpecies<f64>) -> f64 {
        species.mass_over_hbar * si::cm_per_s_to_internal(self.v_mean)
    }

    /// Half-width of the k window holding all but [`K_TRUNCATION`] of |ψ̃|².
    pub fn k_half_width(&self) -> f64 {
        // erfc(√2 σ a) = tolerance, solved by bisection
        let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if libm::erfc(mid) > K_TRUNCATION {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi / (std::f64::consts::SQRT_2 * self.sigma_x)
    }

    pub fn amplitude(&self, k: f64, species: &AtomSpecies<f64>) -> Cplx<f64> {
        let s = self.sigma_x;
        let dk = k - self.mean_wavenumber(species);
        let mag = (2.0 * s * s / std::f64::consts::PI).powf(0.25) * (-s * s * dk * dk).exp();
        Cplx::from_polar(mag, -k * self.x0)
    }

    /// |ψ̃(k)|².
    pub fn density(&self, k: f64, species: &AtomSpecies<f64>) -> f64 {
        self.amplitude(k, species).norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OneChannel,
    TwoChannel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    /// μs
    pub t: f64,
    /// No-photon probability.
    pub n_t: f64,
    /// First-photon density (μs⁻¹).
    pub pi_t: f64,
    /// Excited population, two-channel mode only.
    pub p2_t: Option<f64>,
}

enum State {
    One(OneChannelState<f64>),
    Two(TwoChannelState<f64>),
}

impl State {
    fn eval(&self, x: f64) -> [Cplx<f64>; 2] {
        match self {
            State::One(s) => [s.eval(x), Cplx::new(0.0, 0.0)],
            State::Two(s) => s.eval(x),
        }
    }
}

/// Composite Simpson nodes over consecutive regions, each with spacing ≤ its `dx`.
fn simpson_grid(regions: &[(f64, f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut xs: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for &(a, b, dx) in regions {
        if !(b > a) {
            continue;
        }
        let mut panels = ((b - a) / dx).ceil() as usize;
        panels += panels % 2;
        let panels = panels.max(2);
        let h = (b - a) / panels as f64;
        let first = xs.len();
        let shared = first > 0 && (xs[first - 1] - a).abs() <= 1e-12 * (1.0 + a.abs());
        for i in 0..=panels {
            let w = if i == 0 || i == panels {
                h / 3.0
            } else if i % 2 == 1 {
                4.0 * h / 3.0
            } else {
                2.0 * h / 3.0
            };
            if i == 0 && shared {
                *ws.last_mut().unwrap() += w;
                continue;
            }
            xs.push(if i == panels { b } else { a + h * i as f64 });
            ws.push(w);
        }
    }
    (xs, ws)
}

struct Layout {
    k_nodes: Vec<f64>,
    k_weight: f64,
    box_left: f64,
    box_right: f64,
    regions: Vec<(f64, f64, f64)>,
}

fn layout(
    spec: &WavepacketSpec,
    profile: &LaserProfile<f64>,
    t_max: f64,
    mode: Mode,
) -> Result<Layout> {
    let species = &profile.species;
    let m = species.mass_over_hbar;
    let k0 = spec.mean_wavenumber(species);
    let half = spec.k_half_width();
    // validation bounds the weight at k ≤ 0, so the window may be clipped there
    let (k_lo, k_hi) = ((k0 - half).max(1e-6 * k0), k0 + half);
    let v_max = k_hi / m;
    let (xs, xe) = (profile.x_start, profile.x_end());
    let box_left = spec.x0 - 8.0 * spec.sigma_x - v_max * t_max;
    let box_right = xe + 8.0 * spec.sigma_x + v_max * t_max;

    // trapezoid images sit 2π/Δk apart; keep them two box lengths away
    let span = box_right - box_left;
    let n_k = ((k_hi - k_lo) / (std::f64::consts::PI / span)).ceil() as usize + 1;
    let n_k = n_k.max(16);
    let dk = (k_hi - k_lo) / (n_k - 1) as f64;
    let k_nodes: Vec<f64> = (0..n_k).map(|i| k_lo + dk * i as f64).collect();

    let coarse = 2.0 * std::f64::consts::PI / k_hi / POINTS_PER_WAVELENGTH;
    let mut regions = Vec::new();
    if profile.segments.is_empty() {
        regions.push((box_left, box_right, coarse));
    } else {
        let (fastest, layer) = match mode {
            Mode::OneChannel => {
                let pot = profile_to_potential(profile);
                let fastest = pot
                    .values
                    .iter()
                    .map(|&(_, v)| (cplx(k_hi * k_hi, 0.0) - v * (2.0 * m)).sqrt().norm())
                    .fold(k_hi, f64::max);
                (fastest, 0.0)
            }
            Mode::TwoChannel => {
                let mut fastest = k_hi;
                let mut slowest_decay = f64::INFINITY;
                for k in [k_lo, k_hi] {
                    let state = stationary_state_two_channel(k, profile)?;
                    fastest = fastest.max(state.max_wavenumber());
                    let (ql, qr) = lead_wavenumbers(k, profile);
                    slowest_decay = slowest_decay.min(ql.im).min(qr.im);
                }
                (fastest, EDGE_LAYER_DECAYS / slowest_decay)
            }
        };
        let fine = 2.0 * std::f64::consts::PI / fastest / POINTS_PER_WAVELENGTH;
        let inner_left = (xs - layer).max(box_left);
        let inner_right = (xe + layer).min(box_right);
        regions.push((box_left, inner_left, coarse));
        regions.push((inner_left, inner_right, fine));
        regions.push((inner_right, box_right, coarse));
    }
    Ok(Layout {
        k_nodes,
        k_weight: dk,
        box_left,
        box_right,
        regions,
    })
}

/// Evolves the packet under the conditional dynamics and reports N_t, Π(t)
/// and (two-channel) P₂(t) at the requested times.
///
/// Π is γP₂ in two-channel mode and −dN/dt (centred differences, one-sided at
/// the ends) in one-channel mode.
pub fn propagate(
    spec: &WavepacketSpec,
    profile: &LaserProfile<f64>,
    times: &[f64],
    mode: Mode,
) -> Result<Vec<DetectionRecord>> {
    profile.validate()?;
    let species = &profile.species;
    spec.validate(species)?;
    if times.len() < 2 {
        return Err(invalid("at least two times are needed"));
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite())
        || times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(invalid(
            "times must be non-negative and strictly increasing",
        ));
    }
    if spec.x0 > profile.x_start - 5.0 * spec.sigma_x {
        return Err(invalid(format!(
            "packet centre {} must lie at least 5 widths left of the laser edge {}",
            spec.x0, profile.x_start
        )));
    }
    let t_max = *times.last().unwrap();
    let lay = layout(spec, profile, t_max, mode)?;
    let m = species.mass_over_hbar;

    let potential = profile_to_potential(profile);
    let states: Vec<State> = lay
        .k_nodes
        .par_iter()
        .map(|&k| match mode {
            Mode::OneChannel => stationary_state(k, &potential, species).map(State::One),
            Mode::TwoChannel => stationary_state_two_channel(k, profile).map(State::Two),
        })
        .collect::<Result<_>>()?;

    // c_k(t) = ψ̃(k) Δk e^{−iħk²t/2m}/√(2π), trapezoid end weights halved
    let n_k = lay.k_nodes.len();
    let norm = lay.k_weight / (2.0 * std::f64::consts::PI).sqrt();
    let coeffs: Vec<Vec<Cplx<f64>>> = times
        .iter()
        .map(|&t| {
            lay.k_nodes
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    let end = if i == 0 || i == n_k - 1 { 0.5 } else { 1.0 };
                    spec.amplitude(k, species)
                        * Cplx::from_polar(end * norm, -k * k * t / (2.0 * m))
                })
                .collect()
        })
        .collect();

    let (xs, ws) = simpson_grid(&lay.regions);
    let n_t = times.len();
    // per time: ∫|Ψ₁|², ∫|Ψ₂|²
    let partial: Vec<Vec<[f64; 2]>> = xs
        .par_chunks(CHUNK)
        .zip(ws.par_chunks(CHUNK))
        .map(|(xc, wc)| {
            let mut acc = vec![[0.0; 2]; n_t];
            let mut phi = vec![[Cplx::new(0.0, 0.0); 2]; n_k];
            for (&x, &w) in xc.iter().zip(wc) {
                for (p, s) in phi.iter_mut().zip(&states) {
                    *p = s.eval(x);
                }
                for (a, c) in acc.iter_mut().zip(&coeffs) {
                    let mut psi = [Cplx::new(0.0, 0.0); 2];
                    for (ck, p) in c.iter().zip(&phi) {
                        psi[0] += ck * p[0];
                        psi[1] += ck * p[1];
                    }
                    a[0] += w * psi[0].norm_sqr();
                    a[1] += w * psi[1].norm_sqr();
                }
            }
            acc
        })
        .collect();
    let mut integrals = vec![[0.0; 2]; n_t];
    for chunk in &partial {
        for (tot, a) in integrals.iter_mut().zip(chunk) {
            tot[0] += a[0];
            tot[1] += a[1];
        }
    }

    // probability at the box ends, over one packet width
    let mut leak = 0.0_f64;
    for &x in &[lay.box_left, lay.box_right] {
        let phi: Vec<[Cplx<f64>; 2]> = states.iter().map(|s| s.eval(x)).collect();
        for c in &coeffs {
            let mut psi = [Cplx::new(0.0, 0.0); 2];
            for (ck, p) in c.iter().zip(&phi) {
                psi[0] += ck * p[0];
                psi[1] += ck * p[1];
            }
            leak = leak.max((psi[0].norm_sqr() + psi[1].norm_sqr()) * spec.sigma_x);
        }
    }
    if leak > BOX_TOLERANCE {
        return Err(Error::Truncation {
            what: "probability at the spatial box edge",
            residual: leak,
            tolerance: BOX_TOLERANCE,
        });
    }

    let survival: Vec<f64> = integrals.iter().map(|a| a[0] + a[1]).collect();
    let records = (0..n_t)
        .map(|i| {
            let (pi_t, p2_t) = match mode {
                Mode::TwoChannel => (species.gamma * integrals[i][1], Some(integrals[i][1])),
                Mode::OneChannel => {
                    let (a, b) = if i == 0 {
                        (0, 1)
                    } else if i == n_t - 1 {
                        (n_t - 2, n_t - 1)
                    } else {
                        (i - 1, i + 1)
                    };
                    (-(survival[b] - survival[a]) / (times[b] - times[a]), None)
                }
            };
            DetectionRecord {
                t: times[i],
                n_t: survival[i],
                pi_t,
                p2_t,
            }
        })
        .collect();
    Ok(records)
}

/// Trapezoid ∫Π dt over the records.
pub fn total_detection(records: &[DetectionRecord]) -> f64 {
    records
        .windows(2)
        .map(|w| 0.5 * (w[0].pi_t + w[1].pi_t) * (w[1].t - w[0].t))
        .sum()
}
