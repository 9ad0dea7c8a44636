//! One-channel scattering off a piecewise-constant complex potential.
//!
//! Inside a segment with local wavenumber k (k² = 2(m/ħ)(E − V)) the pair
//! (ψ, ψ′) is carried across a width w by
//!
//! ```text
//! P(w) = [[ cos kw,    sin kw / k ],
//!         [ −k sin kw, cos kw     ]]
//! ```
//!
//! P depends on k² only, so the branch of the square root never matters.
//! Every factor is stored scaled by e^{−Im(k)w} with the exponent kept
//! separately, so strongly absorbing or evanescent segments cannot overflow.
//! Boundary conditions are e^{ikx} + R e^{−ikx} on the left and T e^{ikx}
//! on the right.

use crate::error::{invalid, Error, Result};
use crate::potential::{
    potential_derivatives, profile_to_potential, ComplexPotentialProfile, LaserProfile,
};
use crate::scalar::{cone, cplx, czero, exp_shifted, sqrt_upper, Cplx, Real};
use crate::units::AtomSpecies;

/// 2×2 complex matrix, row-major.
pub type Mat2<T> = [[Cplx<T>; 2]; 2];

pub(crate) fn mat2_identity<T: Real>() -> Mat2<T> {
    [[cone(), czero()], [czero(), cone()]]
}

pub(crate) fn mat2_mul<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Reflection and transmission amplitudes at one incident wavenumber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringAmplitudes<T> {
    pub k: T,
    pub r1: Cplx<T>,
    pub t1: Cplx<T>,
    /// 1 − |R₁|² − |T₁|²
    pub absorption: T,
}

impl<T: Real> ScatteringAmplitudes<T> {
    fn new(k: T, r1: Cplx<T>, t1: Cplx<T>) -> Self {
        Self {
            k,
            r1,
            t1,
            absorption: T::one() - r1.norm_sqr() - t1.norm_sqr(),
        }
    }

    pub fn reflection(&self) -> T {
        self.r1.norm_sqr()
    }

    pub fn transmission(&self) -> T {
        self.t1.norm_sqr()
    }
}

/// Unscaled (ψ, ψ′) propagation matrix across a segment of constant local wavenumber.
pub fn transfer_matrix_segment<T: Real>(k_local: Cplx<T>, width: T) -> Mat2<T> {
    let p = Propagator::new(k_local * k_local, width, false);
    let scale = p.log_scale.exp();
    p.mat.map(|row| row.map(|e| e * scale))
}

/// Scaled propagator of one segment plus its derivatives in k² and in the width.
struct Propagator<T> {
    mat: Mat2<T>,
    d_ksq: Mat2<T>,
    d_width: Mat2<T>,
    log_scale: T,
}

impl<T: Real> Propagator<T> {
    fn new(ksq: Cplx<T>, w: T, with_derivatives: bool) -> Self {
        let k = sqrt_upper(ksq);
        let z = k * w;
        let z2 = ksq * (w * w);
        let two = T::lit(2.0);
        let (c, s_over_k, k_sin, log_scale) = if z.norm() < T::lit(1e-6) {
            let sinc = cone::<T>() - z2 / T::lit(6.0);
            (cone::<T>() - z2 / two, sinc * w, ksq * sinc * w, T::zero())
        } else {
            let beta = z.im;
            let iz = cplx(-z.im, z.re);
            let ep = exp_shifted(iz, beta);
            let em = exp_shifted(-iz, beta);
            let c = (ep + em) / two;
            let s = (ep - em) / cplx(T::zero(), two);
            (c, s / k, k * s, beta)
        };
        let mat = [[c, s_over_k], [-k_sin, c]];
        if !with_derivatives {
            return Self {
                mat,
                d_ksq: [[czero(); 2]; 2],
                d_width: [[czero(); 2]; 2],
                log_scale,
            };
        }
        let d_c = -s_over_k * (w / two);
        let d_s_over_k = if z.norm() < T::lit(0.1) {
            // w³ Σ_{n≥1} (−1)ⁿ n (k²w²)^{n−1} / (2n+1)!
            let mut term = cplx(-T::one() / T::lit(6.0), T::zero());
            let mut sum = term;
            for n in 2..12 {
                let nf = T::from_usize(n).unwrap();
                let ratio = -(nf / (nf - T::one())) / ((two * nf) * (two * nf + T::one()));
                term = term * z2 * ratio;
                sum = sum + term;
            }
            sum * (w * w * w) * (-log_scale).exp()
        } else {
            (c * w - s_over_k) / (ksq * two)
        };
        let d_k_sin = -(s_over_k / two + c * (w / two));
        let d_ksq = [[d_c, d_s_over_k], [d_k_sin, d_c]];
        let d_width = [[-k_sin, c], [-(ksq * c), -k_sin]];
        Self {
            mat,
            d_ksq,
            d_width,
            log_scale,
        }
    }
}

/// Local k² = 2(m/ħ)(E − V) for each segment.
fn local_ksq<T: Real>(
    k: T,
    potential: &ComplexPotentialProfile<T>,
    species: &AtomSpecies<T>,
) -> Vec<Cplx<T>> {
    let two_m = T::lit(2.0) * species.mass_over_hbar;
    potential
        .values
        .iter()
        .map(|(_, v)| cplx(k * k, T::zero()) - *v * two_m)
        .collect()
}

/// (N₁₁, N₁₂, N₂₁, N₂₂) of N = Q⁻¹ M Q with Q = [[1, 1], [ik, −ik]], i.e. M in
/// the basis of free waves (e^{ikx}, e^{−ikx}).
fn wave_basis<T: Real>(k: T, m: &Mat2<T>) -> [Cplx<T>; 4] {
    let half = T::lit(0.5);
    let ik = cplx(T::zero(), k);
    let i_over_k = cplx(T::zero(), T::one() / k);
    let n11 = (m[0][0] + m[1][1] + ik * m[0][1] - i_over_k * m[1][0]) * half;
    let n12 = (m[0][0] - m[1][1] - ik * m[0][1] - i_over_k * m[1][0]) * half;
    let n21 = (m[0][0] - m[1][1] + ik * m[0][1] + i_over_k * m[1][0]) * half;
    let n22 = (m[0][0] + m[1][1] - ik * m[0][1] + i_over_k * m[1][0]) * half;
    [n11, n12, n21, n22]
}

struct Chain<T> {
    props: Vec<Propagator<T>>,
    product: Mat2<T>,
    log_scale: T,
}

fn build_chain<T: Real>(
    k: T,
    potential: &ComplexPotentialProfile<T>,
    species: &AtomSpecies<T>,
    with_derivatives: bool,
) -> Result<Chain<T>> {
    if !(k > T::zero()) || !k.is_finite() {
        return Err(invalid(format!("wavenumber must be positive, got {k}")));
    }
    let props: Vec<_> = local_ksq(k, potential, species)
        .into_iter()
        .zip(&potential.values)
        .map(|(ksq, (w, _))| Propagator::new(ksq, *w, with_derivatives))
        .collect();
    let mut product = mat2_identity();
    let mut log_scale = T::zero();
    for p in &props {
        product = mat2_mul(&p.mat, &product);
        log_scale = log_scale + p.log_scale;
    }
    Ok(Chain {
        props,
        product,
        log_scale,
    })
}

/// Local (relative to the region edges) reflection and right-going amplitude.
struct LocalAmplitudes<T> {
    r_loc: Cplx<T>,
    c_loc: Cplx<T>,
    n22: Cplx<T>,
}

fn local_amplitudes<T: Real>(k: T, chain: &Chain<T>) -> Result<LocalAmplitudes<T>> {
    let n = wave_basis(k, &chain.product);
    let biggest = n.iter().fold(T::zero(), |acc, z| acc.max(z.norm()));
    let n22 = n[3];
    if n22.norm() == T::zero()
        || !(biggest / n22.norm()).is_finite()
        || biggest / n22.norm() > T::lit(1e12)
    {
        let condition = if n22.norm() == T::zero() {
            f64::INFINITY
        } else {
            (biggest / n22.norm()).to_f64_lossy()
        };
        return Err(Error::IllConditioned { condition });
    }
    Ok(LocalAmplitudes {
        r_loc: -n[2] / n22,
        c_loc: n22.inv() * (-chain.log_scale).exp(),
        n22,
    })
}

fn phase<T: Real>(theta: T) -> Cplx<T> {
    cplx(theta.cos(), theta.sin())
}

/// Solves for R₁, T₁ and A at incident wavenumber `k` (μm⁻¹).
pub fn solve_one_channel<T: Real>(
    k: T,
    potential: &ComplexPotentialProfile<T>,
    species: &AtomSpecies<T>,
) -> Result<ScatteringAmplitudes<T>> {
    let chain = build_chain(k, potential, species, false)?;
    let loc = local_amplitudes(k, &chain)?;
    let two = T::lit(2.0);
    let r1 = loc.r_loc * phase(two * k * potential.x_start);
    let t1 = loc.c_loc * phase(-k * potential.total_length());
    Ok(ScatteringAmplitudes::new(k, r1, t1))
}

/// Convenience wrapper: solve for a laser profile through the effective potential.
pub fn solve_profile<T: Real>(k: T, profile: &LaserProfile<T>) -> Result<ScatteringAmplitudes<T>> {
    solve_one_channel(k, &profile_to_potential(profile), &profile.species)
}

/// Derivatives of A with respect to each segment's potential and width.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialGradient<T> {
    pub amplitudes: ScatteringAmplitudes<T>,
    /// ∂A/∂(Re V_j)
    pub d_re_v: Vec<T>,
    /// ∂A/∂(Im V_j)
    pub d_im_v: Vec<T>,
    /// ∂A/∂w_j, with the total length growing with w_j.
    pub d_width: Vec<T>,
}

/// Analytic gradient of A by the product rule over the chain of segment matrices.
pub fn potential_gradient<T: Real>(
    k: T,
    potential: &ComplexPotentialProfile<T>,
    species: &AtomSpecies<T>,
) -> Result<PotentialGradient<T>> {
    let chain = build_chain(k, potential, species, true)?;
    let loc = local_amplitudes(k, &chain)?;
    let two = T::lit(2.0);
    let r_phase = phase(two * k * potential.x_start);
    let t_phase = phase(-k * potential.total_length());
    let r1 = loc.r_loc * r_phase;
    let t1 = loc.c_loc * t_phase;
    let amplitudes = ScatteringAmplitudes::new(k, r1, t1);

    let n = chain.props.len();
    let mut prefix = Vec::with_capacity(n);
    let mut acc = mat2_identity();
    for p in &chain.props {
        prefix.push(acc);
        acc = mat2_mul(&p.mat, &acc);
    }
    let mut suffix = vec![mat2_identity(); n];
    let mut acc = mat2_identity();
    for j in (0..n).rev() {
        suffix[j] = acc;
        acc = mat2_mul(&acc, &chain.props[j].mat);
    }

    // dR_loc and dc_loc from a derivative of the scaled product.
    let amplitude_derivatives = |dm: &Mat2<T>| {
        let dn = wave_basis(k, dm);
        let dr = -(dn[2] + loc.r_loc * dn[3]) / loc.n22;
        let dc = -loc.c_loc * dn[3] / loc.n22;
        (dr * r_phase, dc * t_phase)
    };

    let minus_two_m = -two * species.mass_over_hbar;
    let mut d_re_v = Vec::with_capacity(n);
    let mut d_im_v = Vec::with_capacity(n);
    let mut d_width = Vec::with_capacity(n);
    for j in 0..n {
        let p = &chain.props[j];
        let dm_ksq = mat2_mul(&suffix[j], &mat2_mul(&p.d_ksq, &prefix[j]));
        let (dr, dt) = amplitude_derivatives(&dm_ksq);
        // dk²/dV = −2m/ħ; R and T are holomorphic in V
        let s = (r1.conj() * dr + t1.conj() * dt) * minus_two_m;
        d_re_v.push(-two * s.re);
        d_im_v.push(two * s.im);

        let dm_w = mat2_mul(&suffix[j], &mat2_mul(&p.d_width, &prefix[j]));
        let (dr, dt) = amplitude_derivatives(&dm_w);
        let dt = dt - t1 * cplx(T::zero(), k);
        d_width.push(-two * (r1.conj() * dr + t1.conj() * dt).re);
    }
    Ok(PotentialGradient {
        amplitudes,
        d_re_v,
        d_im_v,
        d_width,
    })
}

/// Gradient of A for a laser profile, in potential and in laser parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord<T> {
    pub amplitudes: ScatteringAmplitudes<T>,
    pub d_re_v: Vec<T>,
    pub d_im_v: Vec<T>,
    pub d_detuning: Vec<T>,
    pub d_rabi: Vec<T>,
    pub d_width: Vec<T>,
}

pub fn absorption_gradient<T: Real>(k: T, profile: &LaserProfile<T>) -> Result<GradientRecord<T>> {
    if profile.segments.is_empty() {
        return Err(invalid("gradient needs at least one segment"));
    }
    let g = potential_gradient(k, &profile_to_potential(profile), &profile.species)?;
    let (d_detuning, d_rabi) = profile
        .segments
        .iter()
        .zip(g.d_re_v.iter().zip(&g.d_im_v))
        .map(|(seg, (&dre, &dim))| {
            let (vd, vr) = potential_derivatives(seg, &profile.species);
            (dre * vd.re + dim * vd.im, dre * vr.re + dim * vr.im)
        })
        .unzip();
    Ok(GradientRecord {
        amplitudes: g.amplitudes,
        d_re_v: g.d_re_v,
        d_im_v: g.d_im_v,
        d_detuning,
        d_rabi,
        d_width: g.d_width,
    })
}

/// ψ(x) = a·e^{ik(x − x_left)} + b·e^{−ik(x − x_right)} inside one segment.
#[derive(Debug, Clone, Copy)]
enum Piece<T> {
    Waves {
        x_left: T,
        x_right: T,
        k: Cplx<T>,
        a: Cplx<T>,
        b: Cplx<T>,
    },
    /// k ≈ 0: ψ(x) = ψ_r + ψ′_r (x − x_right)
    Linear {
        x_right: T,
        psi: Cplx<T>,
        dpsi: Cplx<T>,
    },
}

/// Stationary scattering state Φ_k(x) normalized to an incoming e^{ikx}
/// (no 1/√(2π) factor).
#[derive(Debug, Clone)]
pub struct OneChannelState<T> {
    pub amplitudes: ScatteringAmplitudes<T>,
    x_start: T,
    x_end: T,
    pieces: Vec<Piece<T>>,
}

/// Builds Φ_k by propagating the outgoing solution from the right edge
/// leftwards, which is the growing direction in absorbing segments.
pub fn stationary_state<T: Real>(
    k: T,
    potential: &ComplexPotentialProfile<T>,
    species: &AtomSpecies<T>,
) -> Result<OneChannelState<T>> {
    let amplitudes = solve_one_channel(k, potential, species)?;
    let ksq = local_ksq(k, potential, species);
    let n = ksq.len();
    let x_end = potential.x_start + potential.total_length();
    let ik = cplx(T::zero(), k);

    let mut psi = cone::<T>();
    let mut dpsi = ik;
    let mut log_scale = T::zero();
    let mut right_data = vec![(czero::<T>(), czero::<T>(), T::zero()); n];
    for j in (0..n).rev() {
        right_data[j] = (psi, dpsi, log_scale);
        let w = potential.values[j].0;
        let p = Propagator::new(ksq[j], w, false);
        // P(−w) = [[c, −s/k], [k s, c]]
        let m = p.mat;
        let new_psi = m[0][0] * psi - m[0][1] * dpsi;
        let new_dpsi = -m[1][0] * psi + m[1][1] * dpsi;
        let norm = new_psi.norm().max(new_dpsi.norm() / k.max(T::one()));
        let norm = if norm > T::zero() { norm } else { T::one() };
        psi = new_psi / norm;
        dpsi = new_dpsi / norm;
        log_scale = log_scale + p.log_scale + norm.ln();
    }
    let incoming = (psi + dpsi / ik) / T::lit(2.0);
    if incoming.norm() == T::zero() {
        return Err(Error::Singular);
    }
    // physical state = raw · e^{ik x_start} / (incoming · e^{log_scale})
    let norm_factor = phase(k * potential.x_start) / incoming;
    let log0 = log_scale;

    let mut pieces = Vec::with_capacity(n);
    let mut x_left = potential.x_start;
    for j in 0..n {
        let w = potential.values[j].0;
        let x_r = x_left + w;
        let (psi_r, dpsi_r, log_r) = right_data[j];
        let kk = sqrt_upper(ksq[j]);
        let rel = log_r - log0;
        if (kk * w).norm() < T::lit(1e-6) {
            let f = norm_factor * rel.exp();
            pieces.push(Piece::Linear {
                x_right: x_r,
                psi: psi_r * f,
                dpsi: dpsi_r * f,
            });
        } else {
            let ikk = cplx(-kk.im, kk.re);
            let fwd = (psi_r + dpsi_r / ikk) / T::lit(2.0) * norm_factor;
            let bwd = (psi_r - dpsi_r / ikk) / T::lit(2.0) * norm_factor;
            // a = fwd·e^{−ik w}·e^{rel}, b = bwd·e^{rel}
            let a = fwd * exp_shifted(-ikk * w, -rel);
            let b = bwd * rel.exp();
            pieces.push(Piece::Waves {
                x_left,
                x_right: x_r,
                k: kk,
                a,
                b,
            });
        }
        x_left = x_r;
    }
    Ok(OneChannelState {
        amplitudes,
        x_start: potential.x_start,
        x_end,
        pieces,
    })
}

impl<T: Real> OneChannelState<T> {
    pub fn eval(&self, x: T) -> Cplx<T> {
        let k = self.amplitudes.k;
        if x <= self.x_start {
            return phase(k * x) + self.amplitudes.r1 * phase(-k * x);
        }
        if x >= self.x_end {
            return self.amplitudes.t1 * phase(k * x);
        }
        let idx = self
            .pieces
            .partition_point(|p| match p {
                Piece::Waves { x_right, .. } | Piece::Linear { x_right, .. } => *x_right < x,
            })
            .min(self.pieces.len() - 1);
        match self.pieces[idx] {
            Piece::Waves {
                x_left,
                x_right,
                k,
                a,
                b,
            } => {
                let ik = cplx(-k.im, k.re);
                a * (ik * (x - x_left)).exp() + b * (-ik * (x - x_right)).exp()
            }
            Piece::Linear { x_right, psi, dpsi } => psi + dpsi * (x - x_right),
        }
    }
}
