//! Piecewise-constant laser profiles and the map to the effective complex
//! potential of the adiabatically eliminated excited state.
//!
//! With ħ = 1 a segment with detuning Δ and Rabi frequency Ω acts on the
//! ground state as
//!
//! ```text
//! V = Ω² / (2(2Δ + iγ)) = ΔΩ²/(4Δ² + γ²) − i (γΩ²/2)/(4Δ² + γ²)
//! ```
//!
//! so Re V follows the sign of Δ and Im V ≤ 0 always.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{cplx, Cplx, Real};
use crate::units::AtomSpecies;

/// One square barrier of constant laser parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment<T> {
    /// μm
    pub width: T,
    /// Δ = ω_L − ω in μs⁻¹.
    pub detuning: T,
    /// Ω ≥ 0 in μs⁻¹.
    pub rabi: T,
}

impl<T: Real> Segment<T> {
    pub fn new(width: T, detuning: T, rabi: T) -> Result<Self> {
        let s = Self {
            width,
            detuning,
            rabi,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > T::zero()) || !self.width.is_finite() {
            return Err(invalid(format!(
                "segment width must be positive, got {}",
                self.width
            )));
        }
        if !(self.rabi >= T::zero()) || !self.rabi.is_finite() {
            return Err(invalid(format!(
                "Rabi frequency must be non-negative, got {}",
                self.rabi
            )));
        }
        if !self.detuning.is_finite() {
            return Err(invalid("detuning must be finite"));
        }
        Ok(())
    }

    /// 2Δ + iγ
    pub fn complex_detuning(&self, gamma: T) -> Cplx<T> {
        cplx(T::lit(2.0) * self.detuning, gamma)
    }
}

/// Contiguous segments starting at `x_start`; Ω = 0 outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserProfile<T> {
    pub species: AtomSpecies<T>,
    pub x_start: T,
    pub segments: Vec<Segment<T>>,
}

impl<T: Real> LaserProfile<T> {
    pub fn new(species: AtomSpecies<T>, x_start: T, segments: Vec<Segment<T>>) -> Result<Self> {
        let p = Self {
            species,
            x_start,
            segments,
        };
        p.validate()?;
        Ok(p)
    }

    /// `n` equal-width segments over `total_length`, all with the same Δ and Ω.
    pub fn uniform(
        species: AtomSpecies<T>,
        total_length: T,
        n: usize,
        detuning: T,
        rabi: T,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("segment count must be at least 1"));
        }
        let width = total_length / T::from_usize(n).unwrap();
        let segments = (0..n)
            .map(|_| Segment {
                width,
                detuning,
                rabi,
            })
            .collect();
        Self::new(species, T::zero(), segments)
    }

    pub fn validate(&self) -> Result<()> {
        self.species.validate()?;
        if !self.x_start.is_finite() {
            return Err(invalid("x_start must be finite"));
        }
        self.segments.iter().try_for_each(Segment::validate)
    }

    pub fn total_length(&self) -> T {
        self.segments.iter().fold(T::zero(), |acc, s| acc + s.width)
    }

    pub fn x_end(&self) -> T {
        self.x_start + self.total_length()
    }

    /// Left edges of the segments.
    pub fn edges(&self) -> Vec<T> {
        let mut x = self.x_start;
        self.segments
            .iter()
            .map(|s| {
                let left = x;
                x = x + s.width;
                left
            })
            .collect()
    }
}

/// Piecewise-constant complex potential: (width μm, V in μs⁻¹) per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexPotentialProfile<T> {
    pub x_start: T,
    pub values: Vec<(T, Cplx<T>)>,
}

impl<T: Real> ComplexPotentialProfile<T> {
    pub fn new(x_start: T, values: Vec<(T, Cplx<T>)>) -> Result<Self> {
        for (w, v) in &values {
            if !(*w > T::zero()) || !w.is_finite() {
                return Err(invalid(format!("segment width must be positive, got {w}")));
            }
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(invalid("potential values must be finite"));
            }
        }
        Ok(Self { x_start, values })
    }

    pub fn total_length(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, (w, _)| acc + *w)
    }

    pub fn is_absorbing(&self) -> bool {
        self.values.iter().all(|(_, v)| v.im <= T::zero())
    }
}

/// Effective potential of one segment.
pub fn potential_from_laser<T: Real>(segment: &Segment<T>, species: &AtomSpecies<T>) -> Cplx<T> {
    let g = species.gamma;
    let d = segment.detuning;
    let w2 = segment.rabi * segment.rabi;
    let denom = T::lit(4.0) * d * d + g * g;
    cplx(d * w2 / denom, -(g * w2 / T::lit(2.0)) / denom)
}

/// (∂V/∂Δ, ∂V/∂Ω) for one segment.
pub fn potential_derivatives<T: Real>(
    segment: &Segment<T>,
    species: &AtomSpecies<T>,
) -> (Cplx<T>, Cplx<T>) {
    let z = segment.complex_detuning(species.gamma);
    let w = segment.rabi;
    let d_delta = -(z * z).inv() * (w * w);
    let d_rabi = z.inv() * w;
    (d_delta, d_rabi)
}

/// Inverse map V → (Δ, Ω). Requires Im V < 0.
pub fn laser_from_potential<T: Real>(v: Cplx<T>, species: &AtomSpecies<T>) -> Result<(T, T)> {
    if !(v.im < T::zero()) {
        return Err(Error::NonAbsorbing {
            im_v: v.im.to_f64_lossy(),
        });
    }
    let g = species.gamma;
    let detuning = -g * v.re / (T::lit(2.0) * v.im);
    let rabi = v.norm() * (T::lit(2.0) * g / (-v.im)).sqrt();
    Ok((detuning, rabi))
}

/// Ratios that must be small for the one-channel reduction to hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakDrivingRatios<T> {
    /// Ω / |2Δ + iγ|
    pub r_omega: T,
    /// E_max / (|2Δ + iγ|/2)
    pub r_energy: T,
}

impl<T: Real> WeakDrivingRatios<T> {
    pub fn is_valid(&self, kappa: T) -> bool {
        self.r_omega <= kappa && self.r_energy <= kappa
    }

    pub fn max(&self) -> T {
        self.r_omega.max(self.r_energy)
    }
}

pub fn weak_driving_ratio<T: Real>(
    segment: &Segment<T>,
    e_max: T,
    species: &AtomSpecies<T>,
) -> WeakDrivingRatios<T> {
    let scale = segment.complex_detuning(species.gamma).norm();
    WeakDrivingRatios {
        r_omega: segment.rabi / scale,
        r_energy: e_max / (scale / T::lit(2.0)),
    }
}

/// Worst ratios over all segments of a profile.
pub fn profile_weak_driving_ratio<T: Real>(
    profile: &LaserProfile<T>,
    e_max: T,
) -> WeakDrivingRatios<T> {
    profile.segments.iter().fold(
        WeakDrivingRatios {
            r_omega: T::zero(),
            r_energy: T::zero(),
        },
        |acc, s| {
            let r = weak_driving_ratio(s, e_max, &profile.species);
            WeakDrivingRatios {
                r_omega: acc.r_omega.max(r.r_omega),
                r_energy: acc.r_energy.max(r.r_energy),
            }
        },
    )
}

pub fn profile_to_potential<T: Real>(profile: &LaserProfile<T>) -> ComplexPotentialProfile<T> {
    ComplexPotentialProfile {
        x_start: profile.x_start,
        values: profile
            .segments
            .iter()
            .map(|s| (s.width, potential_from_laser(s, &profile.species)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::cesium_default;

    fn close(a: Cplx<f64>, b: Cplx<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1e-300)
    }

    #[test]
    fn resonant_potential_is_purely_imaginary() {
        let cs = cesium_default::<f64>();
        let s = Segment::new(1.0, 0.0, 2.0).unwrap();
        let v = potential_from_laser(&s, &cs);
        assert!(close(v, cplx(0.0, -4.0 / (2.0 * cs.gamma)), 1e-15));
    }

    #[test]
    fn half_gamma_detuning() {
        let cs = cesium_default::<f64>();
        let omega = 3.0;
        let s = Segment::new(1.0, cs.gamma / 2.0, omega).unwrap();
        let v = potential_from_laser(&s, &cs);
        let expect = cplx(1.0, -1.0) * (omega * omega / (4.0 * cs.gamma));
        assert!(close(v, expect, 1e-15));
        let (d, o) = laser_from_potential(expect, &cs).unwrap();
        assert!((d - cs.gamma / 2.0).abs() < 1e-12 && (o - omega).abs() < 1e-12);
    }

    #[test]
    fn zero_rabi_gives_zero_potential() {
        let cs = cesium_default::<f64>();
        let v = potential_from_laser(&Segment::new(1.0, 5.0, 0.0).unwrap(), &cs);
        assert_eq!(v, cplx(0.0, 0.0));
    }

    #[test]
    fn purely_imaginary_inverse() {
        let cs = cesium_default::<f64>();
        let c = 0.25;
        let (d, o) = laser_from_potential(cplx(0.0, -c), &cs).unwrap();
        assert_eq!(d, 0.0);
        assert!((o - (2.0 * cs.gamma * c).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gain_medium_rejected() {
        let cs = cesium_default::<f64>();
        assert!(matches!(
            laser_from_potential(cplx(0.1, 1e-3), &cs),
            Err(Error::NonAbsorbing { .. })
        ));
        assert!(laser_from_potential(cplx(0.1, 0.0), &cs).is_err());
    }

    #[test]
    fn weak_driving_ratios() {
        let cs = cesium_default::<f64>();
        let g = cs.gamma;
        let r = weak_driving_ratio(&Segment::new(1.0, 0.0, 0.1 * g).unwrap(), 0.0, &cs);
        assert!((r.r_omega - 0.1).abs() < 1e-15 && r.r_energy == 0.0);
        let strong = weak_driving_ratio(&Segment::new(1.0, 0.0, 5.0 * g).unwrap(), 0.0, &cs);
        assert!((strong.r_omega - 5.0).abs() < 1e-14);
        assert!(!strong.is_valid(0.99));
        let far = weak_driving_ratio(&Segment::new(1.0, -1e9, 5.0 * g).unwrap(), 0.0, &cs);
        assert!(far.r_omega < 1e-6);
        let e = weak_driving_ratio(&Segment::new(1.0, 0.0, 0.0).unwrap(), g / 4.0, &cs);
        assert!((e.r_energy - 0.5).abs() < 1e-15);
    }

    #[test]
    fn profile_mapping() {
        let cs = cesium_default::<f64>();
        let empty = LaserProfile::new(cs.clone(), 0.0, vec![]).unwrap();
        assert!(profile_to_potential(&empty).values.is_empty());

        let one = LaserProfile::new(cs.clone(), 0.0, vec![Segment::new(10.0, 0.0, 0.5).unwrap()])
            .unwrap();
        let p = profile_to_potential(&one);
        assert_eq!(p.values.len(), 1);
        assert!(close(
            p.values[0].1,
            cplx(0.0, -0.25 / (2.0 * cs.gamma)),
            1e-15
        ));

        let two = LaserProfile::new(
            cs.clone(),
            1.0,
            vec![
                Segment::new(2.0, 1.0, 0.5).unwrap(),
                Segment::new(3.0, -1.0, 0.7).unwrap(),
            ],
        )
        .unwrap();
        let p = profile_to_potential(&two);
        assert_eq!(p.values[0].0, 2.0);
        assert_eq!(p.values[1].0, 3.0);
        assert!(p.values[0].1.re > 0.0 && p.values[1].1.re < 0.0);
        assert_eq!(two.edges(), vec![1.0, 3.0]);
        assert_eq!(two.x_end(), 6.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cs = cesium_default::<f64>();
        let s = Segment::new(1.0, -12.0, 7.0).unwrap();
        let (dd, dr) = potential_derivatives(&s, &cs);
        let h = 1e-6;
        let fd = |f: &dyn Fn(f64) -> Segment<f64>| {
            (potential_from_laser(&f(h), &cs) - potential_from_laser(&f(-h), &cs)) / (2.0 * h)
        };
        let fdd = fd(&|e| Segment {
            detuning: s.detuning + e,
            ..s
        });
        let fdr = fd(&|e| Segment {
            rabi: s.rabi + e,
            ..s
        });
        assert!((fdd - dd).norm() < 1e-8 * dd.norm());
        assert!((fdr - dr).norm() < 1e-8 * dr.norm());
    }

    #[test]
    fn invalid_segments_rejected() {
        assert!(Segment::new(0.0, 0.0, 1.0).is_err());
        assert!(Segment::new(1.0, 0.0, -1.0).is_err());
        assert!(Segment::new(1.0, f64::NAN, 1.0).is_err());
    }
}
