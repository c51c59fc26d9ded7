//! Canned experiments: DEF-normalised energy tables, parameter sweeps and
//! cooperation time series.

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::dense::{self, DenseParams};
use crate::engine::{median, run_simulation, SimulationResult};
use crate::error::ConfigError;
use crate::geometry::Architecture;
use crate::strategies::{Placement, Strategy};

/// Equal-width radius bins used for radial energy profiles.
pub const RADIAL_BINS: usize = 10;

/// Energy statistics of one strategy in units of the DEF mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedEnergyReport {
    pub strategy: Strategy,
    pub mean_energy: f64,
    pub std_energy: f64,
    /// `(bin centre, mean energy)`; NaN where a bin holds no node.
    pub per_radius_bins: Vec<(f64, f64)>,
    /// `(iteration, cooperator fraction)`.
    pub coop_fraction_series: Vec<(usize, f64)>,
}

impl NormalizedEnergyReport {
    /// Builds the report for `result`, dividing every energy by `unit`.
    pub fn from_result(result: &SimulationResult, unit: f64) -> Self {
        NormalizedEnergyReport {
            strategy: result.config.strategy,
            mean_energy: result.mean_energy() / unit,
            std_energy: result.std_energy() / unit,
            per_radius_bins: result
                .radial_profile(RADIAL_BINS)
                .into_iter()
                .map(|(c, e)| (c, e / unit))
                .collect(),
            coop_fraction_series: result
                .coop_fraction_series()
                .into_iter()
                .enumerate()
                .collect(),
        }
    }
}

/// Runs DEF once and every requested strategy on the same traffic, and
/// normalises all of them by the DEF mean.
pub fn run_table(
    architecture: Architecture,
    strategies: &[Strategy],
    config: &SimConfig,
) -> Result<Vec<NormalizedEnergyReport>, ConfigError> {
    if !strategies.contains(&Strategy::Def) {
        return Err(ConfigError::invalid(
            "strategy",
            "table needs DEF in the strategy list for normalisation",
        ));
    }
    let base = SimConfig {
        architecture,
        ..config.clone()
    };
    for &s in strategies {
        base.with_strategy(s).validate()?;
    }
    let def = run_simulation(&base.with_strategy(Strategy::Def))?;
    let unit = def.mean_energy();
    strategies
        .iter()
        .map(|&s| {
            if s == Strategy::Def {
                Ok(NormalizedEnergyReport::from_result(&def, unit))
            } else {
                let result = run_simulation(&base.with_strategy(s))?;
                Ok(NormalizedEnergyReport::from_result(&result, unit))
            }
        })
        .collect()
}

/// The default `0.05, 0.10, ..., 0.95` grid used by both sweeps.
pub fn default_grid() -> Vec<f64> {
    (1..20).map(|k| k as f64 * 0.05).collect()
}

/// `(x, y)` pair with the smallest `y`; earlier entries win ties.
pub fn argmin(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    points
        .iter()
        .copied()
        .filter(|p| !p.1.is_nan())
        .fold(None, |best: Option<(f64, f64)>, p| match best {
            Some(b) if b.1 <= p.1 => Some(b),
            _ => Some(p),
        })
}

fn def_unit(config: &SimConfig) -> Result<f64, ConfigError> {
    Ok(run_simulation(&config.with_strategy(Strategy::Def))?.mean_energy())
}

/// DEF-normalised energy of `strategy` for each `nu` in the grid.
pub fn sweep_nu(
    architecture: Architecture,
    strategy: Strategy,
    nu_grid: &[f64],
    config: &SimConfig,
) -> Result<Vec<(f64, f64)>, ConfigError> {
    if let Some(&bad) = nu_grid.iter().find(|&&nu| !(nu > 0.0 && nu <= 1.0)) {
        return Err(ConfigError::invalid(
            "nu",
            format!("sweep value {bad} is outside (0, 1]"),
        ));
    }
    let base = SimConfig {
        architecture,
        strategy,
        ..config.clone()
    };
    base.validate()?;
    // DEF energy does not depend on nu.
    let unit = def_unit(&base)?;
    nu_grid
        .iter()
        .map(|&nu| {
            let cfg = SimConfig { nu, ..base.clone() };
            Ok((nu, run_simulation(&cfg)?.mean_energy() / unit))
        })
        .collect()
}

/// DEF-normalised TFT energy with the seed cooperator placed at each radius.
pub fn sweep_initial_cooperator(
    radius_grid: &[f64],
    config: &SimConfig,
) -> Result<Vec<(f64, f64)>, ConfigError> {
    if config.architecture != Architecture::CentralSink {
        return Err(ConfigError::Combination(
            "the initial-cooperator sweep requires the central-sink architecture".into(),
        ));
    }
    let base = config.with_strategy(Strategy::Tft);
    let unit = def_unit(&base)?;
    Ok(r0_runs(radius_grid, &base)?
        .iter()
        .map(|(r0, result)| (*r0, result.mean_energy() / unit))
        .collect())
}

fn r0_runs(
    radius_grid: &[f64],
    base: &SimConfig,
) -> Result<Vec<(f64, SimulationResult)>, ConfigError> {
    radius_grid
        .iter()
        .map(|&r0| {
            let cfg = SimConfig {
                placement: Placement::AtRadius(r0),
                ..base.clone()
            };
            Ok((r0, run_simulation(&cfg)?))
        })
        .collect()
}

/// Central-sink table rows plus the side results behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralTable {
    /// DEF, COOP, MINIMAL, TFT, WSLS in that order. The TFT row is the
    /// run at `tft_best_r0`.
    pub reports: Vec<NormalizedEnergyReport>,
    pub tft_r0_sweep: Vec<(f64, f64)>,
    pub tft_best_r0: f64,
    /// Dense-limit MINIMAL energy relative to DEF, `E_min` over the
    /// direct-transmission integral.
    pub minimal_prediction: f64,
}

/// Central-sink table. TFT is reported at the seed radius that minimises
/// its energy over `r0_grid`.
pub fn central_table(config: &SimConfig, r0_grid: &[f64]) -> Result<CentralTable, ConfigError> {
    if r0_grid.is_empty() {
        return Err(ConfigError::invalid("r0", "radius grid is empty"));
    }
    let base = SimConfig {
        architecture: Architecture::CentralSink,
        ..config.clone()
    };
    for s in Strategy::ALL {
        base.with_strategy(s).validate()?;
    }
    let def = run_simulation(&base.with_strategy(Strategy::Def))?;
    let unit = def.mean_energy();
    let report = |s: Strategy| -> Result<NormalizedEnergyReport, ConfigError> {
        let result = run_simulation(&base.with_strategy(s))?;
        Ok(NormalizedEnergyReport::from_result(&result, unit))
    };
    let coop = report(Strategy::Coop)?;
    let minimal = report(Strategy::Minimal)?;
    let wsls = report(Strategy::Wsls)?;

    let runs = r0_runs(r0_grid, &base.with_strategy(Strategy::Tft))?;
    let tft_r0_sweep: Vec<(f64, f64)> = runs
        .iter()
        .map(|(r0, r)| (*r0, r.mean_energy() / unit))
        .collect();
    let (tft_best_r0, _) = argmin(&tft_r0_sweep).expect("grid is non-empty");
    let best = &runs
        .iter()
        .find(|(r0, _)| *r0 == tft_best_r0)
        .expect("argmin comes from the grid")
        .1;
    let tft = NormalizedEnergyReport::from_result(best, unit);

    Ok(CentralTable {
        reports: vec![
            NormalizedEnergyReport::from_result(&def, unit),
            coop,
            minimal,
            tft,
            wsls,
        ],
        tft_r0_sweep,
        tft_best_r0,
        minimal_prediction: minimal_prediction(base.radius, base.path_loss_exp)?,
    })
}

/// `E_min / E_direct` for a dense central-sink disk: the analytical MINIMAL
/// energy in units of everyone transmitting straight to the sink.
pub fn minimal_prediction(radius: f64, alpha: f64) -> Result<f64, ConfigError> {
    let params = DenseParams::new(radius, alpha, 1.0)
        .map_err(|e| ConfigError::invalid("alpha", e.to_string()))?;
    let e_min = dense::minimal_total_energy(&params)
        .map_err(|e| ConfigError::invalid("alpha", e.to_string()))?;
    let direct = radius.powf(alpha + 1.0) / (alpha + 1.0);
    Ok(e_min / direct)
}

/// Cooperator fractions of a TFT or WSLS run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub strategy: Strategy,
    pub architecture: Architecture,
    /// Mean fraction per iteration.
    pub series: Vec<f64>,
    /// Fraction in the final iteration, one per replication.
    pub final_fractions: Vec<f64>,
}

impl DynamicsReport {
    pub fn median_final(&self) -> f64 {
        median(&self.final_fractions)
    }
}

pub fn cooperation_dynamics(
    strategy: Strategy,
    architecture: Architecture,
    config: &SimConfig,
) -> Result<DynamicsReport, ConfigError> {
    if !matches!(strategy, Strategy::Tft | Strategy::Wsls) {
        return Err(ConfigError::invalid(
            "strategy",
            format!("dynamics are defined for TFT and WSLS, not {strategy}"),
        ));
    }
    let cfg = SimConfig {
        architecture,
        strategy,
        ..config.clone()
    };
    let result = run_simulation(&cfg)?;
    Ok(DynamicsReport {
        strategy,
        architecture,
        series: result.coop_fraction_series(),
        final_fractions: result.final_fractions(),
    })
}

/// Least-squares slope of energy against bin centre, skipping empty bins.
pub fn radial_slope(bins: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = bins.iter().copied().filter(|p| p.1.is_finite()).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
