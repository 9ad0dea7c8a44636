//! Run configuration: TOML in experimentalist units (cm/s, s⁻¹, μm).
//!
//! Every validated leaf keeps its source span so errors can name the line.

use std::fmt;
use std::ops::Range;

use atomdet_core::objective::{Bounds, KGrid};
use atomdet_core::units::si;
use atomdet_core::wavepacket::Mode;
use atomdet_core::{AtomSpecies, LaserProfile, OptimizationProblem, Segment, WavepacketSpec};
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<SpeciesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavepacket: Option<WavepacketConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

/// A named preset (`"cesium"`) and/or explicit constants; constants win.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<Spanned<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_kg: Option<Spanned<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_per_s: Option<Spanned<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_nm: Option<Spanned<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_start_um: Option<Spanned<f64>>,
    #[serde(default)]
    pub segments: Vec<SegmentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub width_um: Spanned<f64>,
    pub detuning_per_s: Spanned<f64>,
    pub rabi_per_s: Spanned<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub v_min_cm_per_s: Spanned<f64>,
    pub v_max_cm_per_s: Spanned<f64>,
    pub n: Spanned<usize>,
    /// Optional per-velocity weights, normalized on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub n_segments: Spanned<usize>,
    pub length_um: Spanned<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Spanned<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistart: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<Spanned<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_bounds_per_s: Option<Spanned<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi_bounds_per_s: Option<Spanned<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_detuning: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_widths: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavepacketConfig {
    pub v_mean_cm_per_s: Spanned<f64>,
    pub sigma_um: Spanned<f64>,
    pub x0_um: Spanned<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start_us: Option<Spanned<f64>>,
    pub t_end_us: Spanned<f64>,
    pub n_times: Spanned<usize>,
    /// `"one_channel"` or `"two_channel"` (default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Spanned<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

pub const DEFAULT_KAPPA: f64 = 0.2;

/// Wraps a value with an empty span, for configs built in code.
pub fn unlocated<T>(value: T) -> Spanned<T> {
    Spanned::new(0..0, value)
}

/// Parsed config together with its source, for locating errors.
pub struct LoadedConfig {
    pub config: RunConfig,
    source: String,
}

fn line_of(source: &str, span: Range<usize>) -> Option<usize> {
    if span.is_empty() && span.start == 0 {
        return None;
    }
    let offset = span.start.min(source.len());
    Some(source[..offset].matches('\n').count() + 1)
}

impl LoadedConfig {
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(source).map_err(|e| ConfigError {
            line: e.span().and_then(|s| line_of(source, s)),
            message: e.message().trim().to_string(),
        })?;
        Ok(Self {
            config,
            source: source.to_string(),
        })
    }

    fn error_at<T>(&self, at: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: line_of(&self.source, at.span()),
            message: message.into(),
        }
    }

    fn missing(section: &str) -> ConfigError {
        ConfigError {
            line: None,
            message: format!("missing [{section}] section"),
        }
    }

    fn positive(&self, v: &Spanned<f64>, what: &str) -> Result<f64, ConfigError> {
        let x = *v.get_ref();
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(self.error_at(v, format!("{what} must be positive, got {x}")))
        }
    }

    fn finite(&self, v: &Spanned<f64>, what: &str) -> Result<f64, ConfigError> {
        let x = *v.get_ref();
        if x.is_finite() {
            Ok(x)
        } else {
            Err(self.error_at(v, format!("{what} must be finite")))
        }
    }

    pub fn species(&self) -> Result<AtomSpecies, ConfigError> {
        let Some(sc) = &self.config.species else {
            return Ok(AtomSpecies::cesium());
        };
        let preset = match &sc.name {
            Some(name) => match name.get_ref().to_ascii_lowercase().as_str() {
                "cesium" | "caesium" | "cs" | "cs133" => Some(AtomSpecies::cesium()),
                _ => None,
            },
            None => Some(AtomSpecies::cesium()),
        };
        let name = sc
            .name
            .as_ref()
            .map(|n| n.get_ref().clone())
            .unwrap_or_else(|| "cesium".to_string());
        let pick = |field: &Option<Spanned<f64>>,
                    what: &str,
                    from_preset: Option<f64>|
         -> Result<f64, ConfigError> {
            match field {
                Some(v) => self.positive(v, what),
                None => from_preset.ok_or_else(|| ConfigError {
                    line: sc
                        .name
                        .as_ref()
                        .and_then(|n| line_of(&self.source, n.span())),
                    message: format!("species `{name}` is not a preset; `{what}` must be given"),
                }),
            }
        };
        let mass_kg = pick(
            &sc.mass_kg,
            "mass_kg",
            preset
                .as_ref()
                .map(|p| si::mass_kg_from_mass_over_hbar(p.mass_over_hbar)),
        )?;
        let gamma = pick(
            &sc.gamma_per_s,
            "gamma_per_s",
            preset.as_ref().map(|p| si::internal_to_per_s(p.gamma)),
        )?;
        let lambda = pick(
            &sc.wavelength_nm,
            "wavelength_nm",
            preset.as_ref().map(|p| si::internal_to_nm(p.lambda_laser)),
        )?;
        if let Some(p) = preset.filter(|_| {
            sc.mass_kg.is_none() && sc.gamma_per_s.is_none() && sc.wavelength_nm.is_none()
        }) {
            return Ok(p);
        }
        AtomSpecies::new(
            name,
            si::mass_over_hbar_from_kg(mass_kg),
            si::per_s_to_internal(gamma),
            si::nm_to_internal(lambda),
        )
        .map_err(|e| ConfigError {
            line: None,
            message: e.to_string(),
        })
    }

    pub fn profile(&self) -> Result<LaserProfile, ConfigError> {
        let pc = self
            .config
            .profile
            .as_ref()
            .ok_or_else(|| Self::missing("profile"))?;
        let x_start = match &pc.x_start_um {
            Some(x) => self.finite(x, "x_start_um")?,
            None => 0.0,
        };
        let mut segments = Vec::with_capacity(pc.segments.len());
        for s in &pc.segments {
            let width = self.positive(&s.width_um, "width_um")?;
            let detuning = self.finite(&s.detuning_per_s, "detuning_per_s")?;
            let rabi = *s.rabi_per_s.get_ref();
            if !(rabi >= 0.0) || !rabi.is_finite() {
                return Err(self.error_at(
                    &s.rabi_per_s,
                    format!("rabi_per_s must be non-negative, got {rabi}"),
                ));
            }
            segments.push(
                Segment::new(
                    width,
                    si::per_s_to_internal(detuning),
                    si::per_s_to_internal(rabi),
                )
                .map_err(|e| ConfigError {
                    line: line_of(&self.source, s.width_um.span()),
                    message: e.to_string(),
                })?,
            );
        }
        LaserProfile::new(self.species()?, x_start, segments).map_err(|e| ConfigError {
            line: None,
            message: e.to_string(),
        })
    }

    /// Velocities (cm/s) and the matching wavenumber grid.
    pub fn grid(&self) -> Result<(Vec<f64>, KGrid), ConfigError> {
        let gc = self
            .config
            .grid
            .as_ref()
            .ok_or_else(|| Self::missing("grid"))?;
        let v_min = self.positive(&gc.v_min_cm_per_s, "v_min_cm_per_s")?;
        let v_max = self.positive(&gc.v_max_cm_per_s, "v_max_cm_per_s")?;
        let n = *gc.n.get_ref();
        if !(v_min < v_max) {
            return Err(self.error_at(
                &gc.v_max_cm_per_s,
                "v_max_cm_per_s must exceed v_min_cm_per_s",
            ));
        }
        if n < 2 {
            return Err(self.error_at(&gc.n, "n must be at least 2"));
        }
        let species = self.species()?;
        let velocities: Vec<f64> = (0..n)
            .map(|j| {
                if j == n - 1 {
                    v_max
                } else {
                    v_min + (v_max - v_min) * j as f64 / (n - 1) as f64
                }
            })
            .collect();
        let ks = velocities
            .iter()
            .map(|&v| species.velocity_to_wavenumber(si::cm_per_s_to_internal(v)))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| ConfigError {
                line: None,
                message: e.to_string(),
            })?;
        let weights = match &gc.weights {
            None => vec![1.0; n],
            Some(w) => {
                let w_ref = w.get_ref();
                if w_ref.len() != n {
                    return Err(self.error_at(
                        w,
                        format!("weights has {} entries, expected n = {n}", w_ref.len()),
                    ));
                }
                if w_ref.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return Err(self.error_at(w, "weights must be non-negative"));
                }
                if !(w_ref.iter().sum::<f64>() > 0.0) {
                    return Err(self.error_at(w, "weights must not all be zero"));
                }
                w_ref.clone()
            }
        };
        let grid =
            KGrid::normalized(ks.into_iter().zip(weights).collect()).map_err(|e| ConfigError {
                line: None,
                message: e.to_string(),
            })?;
        Ok((velocities, grid))
    }

    pub fn kappa(&self) -> Result<f64, ConfigError> {
        match self.config.optimize.as_ref().and_then(|o| o.kappa.as_ref()) {
            None => Ok(DEFAULT_KAPPA),
            Some(k) => {
                let x = *k.get_ref();
                if x > 0.0 && x < 1.0 {
                    Ok(x)
                } else {
                    Err(self.error_at(k, format!("kappa must lie in (0, 1), got {x}")))
                }
            }
        }
    }

    fn bounds_pair(&self, v: &Spanned<Vec<f64>>, what: &str) -> Result<(f64, f64), ConfigError> {
        match v.get_ref().as_slice() {
            &[lo, hi] if lo < hi && lo.is_finite() && hi.is_finite() => {
                Ok((si::per_s_to_internal(lo), si::per_s_to_internal(hi)))
            }
            _ => Err(self.error_at(
                v,
                format!("{what} must be [lower, upper] with lower < upper"),
            )),
        }
    }

    /// `seed_override` comes from the command line or environment.
    pub fn problem(&self, seed_override: Option<u64>) -> Result<OptimizationProblem, ConfigError> {
        let oc = self
            .config
            .optimize
            .as_ref()
            .ok_or_else(|| Self::missing("optimize"))?;
        let species = self.species()?;
        let (_, grid) = self.grid()?;
        let n = *oc.n_segments.get_ref();
        if n == 0 {
            return Err(self.error_at(&oc.n_segments, "n_segments must be at least 1"));
        }
        let length = self.positive(&oc.length_um, "length_um")?;
        let mut problem = OptimizationProblem::new(species.clone(), grid, n, length);
        problem.kappa = self.kappa()?;
        let mut bounds = Bounds::default_for(&species);
        if let Some(b) = &oc.detuning_bounds_per_s {
            bounds.detuning = self.bounds_pair(b, "detuning_bounds_per_s")?;
        }
        if let Some(b) = &oc.rabi_bounds_per_s {
            bounds.rabi = self.bounds_pair(b, "rabi_bounds_per_s")?;
            if bounds.rabi.1 <= 0.0 {
                return Err(self.error_at(b, "rabi upper bound must be positive"));
            }
        }
        problem.bounds = bounds;
        if let Some(m) = &oc.multistart {
            problem.multistart = *m.get_ref();
        }
        problem.seed = seed_override
            .or(oc.seed.as_ref().map(|s| *s.get_ref()))
            .unwrap_or(0);
        problem.tie_detuning = oc.tie_detuning.unwrap_or(false);
        problem.free_widths = oc.free_widths.unwrap_or(false);
        Ok(problem)
    }

    pub fn wavepacket(&self) -> Result<(WavepacketSpec, Vec<f64>, Mode), ConfigError> {
        let wc = self
            .config
            .wavepacket
            .as_ref()
            .ok_or_else(|| Self::missing("wavepacket"))?;
        let species = self.species()?;
        let v = self.positive(&wc.v_mean_cm_per_s, "v_mean_cm_per_s")?;
        let sigma = self.positive(&wc.sigma_um, "sigma_um")?;
        let x0 = self.finite(&wc.x0_um, "x0_um")?;
        let spec = WavepacketSpec::new(v, sigma, x0, &species)
            .map_err(|e| self.error_at(&wc.sigma_um, e.to_string()))?;
        let t0 = match &wc.t_start_us {
            Some(t) => {
                let x = *t.get_ref();
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(self.error_at(t, "t_start_us must be non-negative"));
                }
                x
            }
            None => 0.0,
        };
        let t1 = self.positive(&wc.t_end_us, "t_end_us")?;
        if !(t1 > t0) {
            return Err(self.error_at(&wc.t_end_us, "t_end_us must exceed t_start_us"));
        }
        let n = *wc.n_times.get_ref();
        if n < 2 {
            return Err(self.error_at(&wc.n_times, "n_times must be at least 2"));
        }
        let times = (0..n)
            .map(|i| {
                if i == n - 1 {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        let mode = match &wc.mode {
            None => Mode::TwoChannel,
            Some(m) => match m.get_ref().as_str() {
                "one_channel" => Mode::OneChannel,
                "two_channel" => Mode::TwoChannel,
                other => {
                    return Err(self.error_at(
                        m,
                        format!("mode must be \"one_channel\" or \"two_channel\", got \"{other}\""),
                    ))
                }
            },
        };
        Ok((spec, times, mode))
    }

    pub fn output_dir(&self) -> Option<String> {
        self.config.output.as_ref().and_then(|o| o.dir.clone())
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values are always representable")
    }
}

/// Profile section (species included) in config units, for writing results back out.
pub fn profile_section(profile: &LaserProfile) -> (SpeciesConfig, ProfileConfig) {
    let s = &profile.species;
    let species = if *s == AtomSpecies::cesium() {
        SpeciesConfig {
            name: Some(unlocated(s.name.clone())),
            ..Default::default()
        }
    } else {
        SpeciesConfig {
            name: Some(unlocated(s.name.clone())),
            mass_kg: Some(unlocated(si::mass_kg_from_mass_over_hbar(s.mass_over_hbar))),
            gamma_per_s: Some(unlocated(si::internal_to_per_s(s.gamma))),
            wavelength_nm: Some(unlocated(si::internal_to_nm(s.lambda_laser))),
        }
    };
    let profile = ProfileConfig {
        x_start_um: Some(unlocated(profile.x_start)),
        segments: profile
            .segments
            .iter()
            .map(|seg| SegmentConfig {
                width_um: unlocated(seg.width),
                detuning_per_s: unlocated(si::internal_to_per_s(seg.detuning)),
                rabi_per_s: unlocated(si::internal_to_per_s(seg.rabi)),
            })
            .collect(),
    };
    (species, profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = include_str!("../../../configs/atomdet.toml");

    #[test]
    fn shipped_example_parses() {
        let cfg = LoadedConfig::parse(EXAMPLE).unwrap();
        let p = cfg.profile().unwrap();
        assert_eq!(p.segments.len(), 2);
        let (v, grid) = cfg.grid().unwrap();
        assert_eq!(v.len(), 100);
        assert_eq!(grid.len(), 100);
        let problem = cfg.problem(None).unwrap();
        assert_eq!(problem.n_segments, 2);
        assert_eq!(cfg.problem(Some(9)).unwrap().seed, 9);
        cfg.wavepacket().unwrap();
    }

    #[test]
    fn round_trip() {
        let cfg = LoadedConfig::parse(EXAMPLE).unwrap();
        let text = cfg.config.to_toml();
        let again = LoadedConfig::parse(&text).unwrap();
        assert_eq!(cfg.config, again.config);
        assert_eq!(cfg.profile().unwrap(), again.profile().unwrap());
        assert_eq!(cfg.problem(None).unwrap(), again.problem(None).unwrap());
    }

    #[test]
    fn generated_profile_round_trips() {
        let cfg = LoadedConfig::parse(EXAMPLE).unwrap();
        let p = cfg.profile().unwrap();
        let (species, profile) = profile_section(&p);
        let out = RunConfig {
            species: Some(species),
            profile: Some(profile),
            ..Default::default()
        };
        let back = LoadedConfig::parse(&out.to_toml())
            .unwrap()
            .profile()
            .unwrap();
        for (a, b) in p.segments.iter().zip(&back.segments) {
            assert!((a.detuning - b.detuning).abs() <= 1e-12 * a.detuning.abs().max(1.0));
            assert!((a.rabi - b.rabi).abs() <= 1e-12 * a.rabi.abs().max(1.0));
        }
    }

    #[test]
    fn errors_name_the_line() {
        let text = "[profile]\nx_start_um = 0.0\n\n[[profile.segments]]\nwidth_um = -5.0\ndetuning_per_s = 0.0\nrabi_per_s = 1e6\n";
        let err = LoadedConfig::parse(text).unwrap().profile().unwrap_err();
        assert_eq!(err.line, Some(5), "{err}");

        let text = "[grid]\nv_min_cm_per_s = 0.2\nv_max_cm_per_s = 9.0\nn = \"many\"\n";
        let err = LoadedConfig::parse(text).err().unwrap();
        assert_eq!(err.line, Some(4), "{err}");

        let text = "[grid]\nv_min_cm_per_s = 0.2\nv_max_cm_per_s = 9.0\nn = 10\nbogus = 1\n";
        let err = LoadedConfig::parse(text).err().unwrap();
        assert_eq!(err.line, Some(5), "{err}");

        let text = "[wavepacket]\nv_mean_cm_per_s = 2.0\nsigma_um = 5.0\nx0_um = -45.0\nt_end_us = 10.0\nn_times = 5\nmode = \"three\"\n";
        let err = LoadedConfig::parse(text).unwrap().wavepacket().unwrap_err();
        assert_eq!(err.line, Some(7), "{err}");
    }

    #[test]
    fn missing_sections_and_species() {
        let cfg = LoadedConfig::parse("").unwrap();
        assert!(cfg.profile().is_err());
        assert!(cfg.grid().is_err());
        assert_eq!(cfg.species().unwrap(), AtomSpecies::cesium());
        let cfg = LoadedConfig::parse("[species]\nname = \"rubidium\"\n").unwrap();
        assert!(cfg.species().is_err());
        let cfg = LoadedConfig::parse(
            "[species]\nname = \"rb87\"\nmass_kg = 1.443e-25\ngamma_per_s = 38.1e6\nwavelength_nm = 780.2\n",
        )
        .unwrap();
        assert_eq!(cfg.species().unwrap().name, "rb87");
    }
}
