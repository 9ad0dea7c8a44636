//! The five subcommands. Each writes its files into the output directory and
//! prints a short summary to stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use atomdet_core::objective::{self, absorption_curve};
use atomdet_core::potential::{
    potential_from_laser, profile_weak_driving_ratio, weak_driving_ratio,
};
use atomdet_core::twochannel::{compare_channels, solve_two_channel};
use atomdet_core::units::si;
use atomdet_core::wavepacket::{self, Mode};
use atomdet_core::{Error, LaserProfile};
use rayon::prelude::*;

use crate::config::{profile_section, ConfigError, LoadedConfig, RunConfig};
use crate::output::{csv, indexed_csv, number};
use crate::Common;

pub const DEFAULT_OUT: &str = "atomdet_out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(#[from] Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Numerical(Error::InvalidParameter(_)) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

pub struct Context {
    config: LoadedConfig,
    out: PathBuf,
    seed: Option<u64>,
}

impl Context {
    pub fn load(common: &Common) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(&common.config).map_err(|e| {
            CliError::Config(ConfigError {
                line: None,
                message: format!("cannot read {}: {e}", common.config.display()),
            })
        })?;
        let config = LoadedConfig::parse(&text).map_err(|e| {
            CliError::Config(ConfigError {
                line: e.line,
                message: format!("{}: {}", common.config.display(), e.message),
            })
        })?;
        let out = common
            .out
            .clone()
            .or_else(|| config.output_dir().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        Ok(Self {
            config,
            out,
            seed: common.seed,
        })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Io(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn warn_if_strong(profile: &LaserProfile, e_max: f64, kappa: f64) {
    let r = profile_weak_driving_ratio(profile, e_max);
    if !r.is_valid(kappa) {
        eprintln!(
            "warning: weak-driving condition violated (r_omega = {:.3}, r_energy = {:.3}, kappa = {kappa}); \
             one-channel absorption may be inaccurate, compare with `detect` or `validate`",
            r.r_omega, r.r_energy
        );
    }
}

pub fn scan(ctx: &Context) -> Result<(), CliError> {
    let profile = ctx.config.profile()?;
    let (velocities, grid) = ctx.config.grid()?;
    warn_if_strong(
        &profile,
        grid.max_energy(&profile.species),
        ctx.config.kappa()?,
    );
    let a = absorption_curve(&profile, &grid)?;
    let rows = velocities.iter().zip(&a).map(|(&v, &a)| vec![v, a]);
    announce(&ctx.write("scan.csv", &csv(&["v_cm_per_s", "absorption"], rows))?);
    let mean: f64 = grid.points.iter().zip(&a).map(|(p, a)| p.1 * a).sum();
    println!("mean absorption {}", number(mean));
    Ok(())
}

pub fn detect(ctx: &Context) -> Result<(), CliError> {
    let profile = ctx.config.profile()?;
    let (velocities, grid) = ctx.config.grid()?;
    let p = grid
        .points
        .par_iter()
        .map(|&(k, _)| solve_two_channel(k, &profile).map(|a| a.absorption))
        .collect::<Result<Vec<f64>, Error>>()?;
    let rows = velocities.iter().zip(&p).map(|(&v, &p)| vec![v, p]);
    announce(&ctx.write(
        "detect.csv",
        &csv(&["v_cm_per_s", "detection_probability"], rows),
    )?);
    Ok(())
}

fn flag(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

pub fn optimize(ctx: &Context) -> Result<(), CliError> {
    let problem = ctx.config.problem(ctx.seed)?;
    let (velocities, _) = ctx.config.grid()?;
    let result = objective::optimize(&problem)?;
    let profile = &result.profile;
    let species = &profile.species;

    let edges = profile.edges();
    let segment_rows = profile.segments.iter().enumerate().map(|(j, seg)| {
        let v = potential_from_laser(seg, species);
        let values = vec![
            edges[j],
            seg.width,
            si::internal_to_per_s(seg.detuning),
            si::internal_to_per_s(seg.rabi),
            si::internal_to_per_s(v.re),
            si::internal_to_per_s(v.im),
        ];
        (Some(j), values)
    });
    let header = [
        "segment",
        "x_left_um",
        "width_um",
        "detuning_per_s",
        "rabi_per_s",
        "re_v_per_s",
        "im_v_per_s",
    ];
    announce(&ctx.write("optimized_profile.csv", &indexed_csv(&header, segment_rows))?);

    let (species_cfg, profile_cfg) = profile_section(profile);
    let loadable = RunConfig {
        species: Some(species_cfg),
        profile: Some(profile_cfg),
        grid: ctx.config.config.grid.clone(),
        ..Default::default()
    };
    announce(&ctx.write("optimized_profile.toml", &loadable.to_toml())?);

    let rows = velocities
        .iter()
        .zip(&result.per_k_absorption)
        .map(|(&v, &a)| vec![v, a]);
    announce(&ctx.write(
        "optimized_absorption.csv",
        &csv(&["v_cm_per_s", "absorption"], rows),
    )?);

    let detuning_negative = profile.segments.iter().all(|s| s.detuning < 0.0);
    let rabi_non_decreasing = profile.segments.windows(2).all(|w| w[1].rabi >= w[0].rabi);
    let mut report = String::new();
    let _ = writeln!(report, "mean_absorption {}", number(result.objective));
    let _ = writeln!(report, "converged {}", flag(result.converged));
    let _ = writeln!(report, "iterations {}", result.iterations);
    let _ = writeln!(report, "seed {}", problem.seed);
    let _ = writeln!(report, "n_segments {}", problem.n_segments);
    let _ = writeln!(report, "length_um {}", number(problem.total_length));
    let _ = writeln!(report, "kappa {}", number(problem.kappa));
    let _ = writeln!(report, "multistart {}", problem.multistart);
    let _ = writeln!(report, "tie_detuning {}", flag(problem.tie_detuning));
    let _ = writeln!(report, "free_widths {}", flag(problem.free_widths));
    let _ = writeln!(
        report,
        "max_energy_per_s {}",
        number(si::internal_to_per_s(result.max_energy))
    );
    let _ = writeln!(report, "detuning_all_negative {}", flag(detuning_negative));
    let _ = writeln!(report, "rabi_non_decreasing {}", flag(rabi_non_decreasing));
    let _ = writeln!(report, "\n[restarts]");
    let _ = writeln!(
        report,
        "index,objective,converged,iterations,kkt_residual,violation,message"
    );
    for r in &result.restarts_summary {
        let _ = writeln!(
            report,
            "{},{},{},{},{},{},{}",
            r.index,
            r.objective.map(number).unwrap_or_else(|| "nan".into()),
            flag(r.converged),
            r.iterations,
            number(r.kkt_residual),
            number(r.violation),
            r.message.as_deref().unwrap_or("").replace(['\n', ','], " ")
        );
    }
    let _ = writeln!(report, "\n[slacks]");
    let _ = writeln!(
        report,
        "segment,r_omega,r_energy,rabi_lower,rabi_upper,detuning_lower,detuning_upper"
    );
    for (j, s) in result.slacks.iter().enumerate() {
        let _ = writeln!(
            report,
            "{j},{},{},{},{},{},{}",
            number(s.r_omega),
            number(s.r_energy),
            number(s.rabi_lower),
            number(s.rabi_upper),
            number(s.detuning_lower),
            number(s.detuning_upper)
        );
    }
    announce(&ctx.write("report.txt", &report)?);
    println!("mean absorption {}", number(result.objective));
    Ok(())
}

pub fn propagate(ctx: &Context) -> Result<(), CliError> {
    let profile = ctx.config.profile()?;
    let (spec, times, mode) = ctx.config.wavepacket()?;
    let records = wavepacket::propagate(&spec, &profile, &times, mode)?;
    let text = match mode {
        Mode::TwoChannel => csv(
            &["t_us", "N_t", "Pi_per_us", "P2"],
            records
                .iter()
                .map(|r| vec![r.t, r.n_t, r.pi_t, r.p2_t.unwrap_or(f64::NAN)]),
        ),
        Mode::OneChannel => csv(
            &["t_us", "N_t", "Pi_per_us"],
            records.iter().map(|r| vec![r.t, r.n_t, r.pi_t]),
        ),
    };
    announce(&ctx.write("propagate.csv", &text)?);
    println!("detected {}", number(wavepacket::total_detection(&records)));
    Ok(())
}

pub fn validate(ctx: &Context) -> Result<(), CliError> {
    let profile = ctx.config.profile()?;
    let (velocities, grid) = ctx.config.grid()?;
    let kappa = ctx.config.kappa()?;
    let comparison = compare_channels(&grid.wavenumbers(), &profile, kappa)?;
    let rows = velocities
        .iter()
        .zip(&comparison.rows)
        .map(|(&v, r)| vec![v, r.1, r.2, r.3]);
    announce(&ctx.write(
        "validate.csv",
        &csv(
            &["v_cm_per_s", "A_one_channel", "A_two_channel", "abs_diff"],
            rows,
        ),
    )?);
    let e_max = grid.max_energy(&profile.species);
    let mut summary = format!(
        "max_abs_diff {} r_omega {} r_energy {} kappa {} valid {}\n",
        number(comparison.max_diff),
        number(comparison.ratios.r_omega),
        number(comparison.ratios.r_energy),
        number(kappa),
        flag(comparison.valid)
    );
    for (j, seg) in profile.segments.iter().enumerate() {
        let r = weak_driving_ratio(seg, e_max, &profile.species);
        let _ = writeln!(
            summary,
            "segment {j} r_omega {} r_energy {}",
            number(r.r_omega),
            number(r.r_energy)
        );
    }
    announce(&ctx.write("validate_summary.txt", &summary)?);
    print!("{}", summary.lines().next().unwrap_or_default());
    println!();
    if !comparison.valid {
        eprintln!("warning: weak-driving condition violated at kappa = {kappa}");
    }
    Ok(())
}
