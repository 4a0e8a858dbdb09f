//! Sweep drivers. Every trial draws its channel, data, pilots and noise from
//! streams keyed by the trial index, so all sweep points and pilot kinds see
//! the same random numbers for a given trial.

use crate::basis::{BasisConfig, BasisKind, MeasurementMatrix};
use crate::canceller::LsEstimator;
use crate::error::Result;
use crate::pilot::{
    criterion, ensemble_member, gram_spectrum, select_pilot, select_pilot_with_diagnostics, CandidateDiagnostics,
    PilotCandidate, PilotDistribution,
};
use crate::rng::Stream;
use crate::signals::ComplexSequence;

use super::config::ExperimentConfig;
use super::sim::{
    evaluate_canceller, gaussian_per_antenna, propagate, system_matrix, DataSide, Frontend, Phase, Received, Scenario,
    TrialChannels, TrialMetrics,
};
use super::table::{ResultRow, ResultTable};

/// Pilot strategies compared by the sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PilotKind {
    /// Fixed low-PAPR multitone.
    Multitone,
    /// Fresh Gaussian pilot every trial.
    RandomGaussian,
    /// Best of a Gaussian ensemble under the Shannon-rank criterion.
    OptimizedGaussian,
    /// Best of a chi-square-amplitude ensemble.
    OptimizedChisq,
    /// The data sequence itself serves as pilot.
    GlobalLs,
}

impl PilotKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Multitone => "multitone",
            Self::RandomGaussian => "random_gaussian",
            Self::OptimizedGaussian => "optimized_gaussian",
            Self::OptimizedChisq => "optimized_chisq",
            Self::GlobalLs => "global_ls",
        }
    }
}

/// One canceller configuration evaluated on every trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub basis: BasisConfig,
    pub pilot_length: usize,
    pub pilot: PilotKind,
}

enum PilotPlan {
    Fixed {
        sequences: Vec<ComplexSequence>,
        estimator: LsEstimator,
        criterion: f64,
    },
    RandomGaussian,
    GlobalLs,
}

fn fixed_plan(sequences: Vec<ComplexSequence>, basis: &BasisConfig) -> Result<PilotPlan> {
    let matrix = system_matrix(&sequences, basis)?;
    let criterion = criterion(&gram_spectrum(&matrix)?);
    Ok(PilotPlan::Fixed {
        estimator: LsEstimator::new(&matrix)?,
        sequences,
        criterion,
    })
}

fn plan(point: &SweepPoint, config: &ExperimentConfig) -> Result<PilotPlan> {
    let optimized = |dist| -> Result<PilotPlan> {
        let cand = select_pilot(config.ensemble_size, point.pilot_length, dist, &point.basis, config.master_seed)?;
        fixed_plan(vec![cand.sequence], &point.basis)
    };
    match point.pilot {
        PilotKind::Multitone => fixed_plan(
            vec![ensemble_member(PilotDistribution::Multitone, point.pilot_length, config.master_seed, 0)?],
            &point.basis,
        ),
        PilotKind::OptimizedGaussian => optimized(PilotDistribution::Gaussian),
        PilotKind::OptimizedChisq => optimized(PilotDistribution::Chisq),
        PilotKind::RandomGaussian => Ok(PilotPlan::RandomGaussian),
        PilotKind::GlobalLs => Ok(PilotPlan::GlobalLs),
    }
}

/// Channel, data and received data of one trial.
pub struct TrialData {
    pub channels: TrialChannels,
    pub data: Vec<ComplexSequence>,
    pub received: Received,
}

impl TrialData {
    pub fn draw(frontend: &Frontend, seed: u64, trial: u64, data_length: usize) -> Result<Self> {
        let channels = TrialChannels::draw(frontend, seed, trial)?;
        let data = gaussian_per_antenna(seed, Stream::Data, trial, frontend.antennas(), data_length)?;
        let received = propagate(frontend, &channels, &data, Phase::Data, seed, trial)?;
        Ok(Self {
            channels,
            data,
            received,
        })
    }
}

fn run_point(
    frontend: &Frontend,
    point: &SweepPoint,
    plan: &PilotPlan,
    trial_data: &TrialData,
    data_matrix: &MeasurementMatrix,
    seed: u64,
    trial: u64,
) -> Result<TrialMetrics> {
    let data = DataSide {
        channels: &trial_data.channels,
        matrix: data_matrix,
        received: &trial_data.received,
    };
    match plan {
        PilotPlan::Fixed {
            sequences,
            estimator,
            criterion,
        } => {
            let rx = propagate(frontend, &trial_data.channels, sequences, Phase::Pilot, seed, trial)?;
            evaluate_canceller(frontend, estimator, &rx, &data, trial, *criterion)
        }
        PilotPlan::RandomGaussian => {
            let seqs = gaussian_per_antenna(seed, Stream::Pilot, trial, frontend.antennas(), point.pilot_length)?;
            let matrix = system_matrix(&seqs, &point.basis)?;
            let crit = criterion(&gram_spectrum(&matrix)?);
            let estimator = LsEstimator::new(&matrix)?;
            let rx = propagate(frontend, &trial_data.channels, &seqs, Phase::Pilot, seed, trial)?;
            evaluate_canceller(frontend, &estimator, &rx, &data, trial, crit)
        }
        PilotPlan::GlobalLs => {
            let crit = criterion(&gram_spectrum(data_matrix)?);
            let estimator = LsEstimator::new(data_matrix)?;
            evaluate_canceller(frontend, &estimator, &trial_data.received, &data, trial, crit)
        }
    }
}

fn run_trial(
    frontend: &Frontend,
    points: &[SweepPoint],
    plans: &[PilotPlan],
    config: &ExperimentConfig,
    trial: u64,
) -> Result<Vec<TrialMetrics>> {
    let seed = config.master_seed;
    let td = TrialData::draw(frontend, seed, trial, config.data_length())?;
    let mut matrices: Vec<(BasisConfig, MeasurementMatrix)> = Vec::new();
    let mut out = Vec::with_capacity(points.len());
    for (point, plan) in points.iter().zip(plans) {
        let basis = BasisConfig {
            antennas: frontend.antennas(),
            ..point.basis
        };
        if !matrices.iter().any(|(b, _)| *b == basis) {
            matrices.push((basis, system_matrix(&td.data, &basis)?));
        }
        let data_matrix = &matrices.iter().find(|(b, _)| *b == basis).expect("inserted above").1;
        out.push(run_point(frontend, point, plan, &td, data_matrix, seed, trial)?);
    }
    Ok(out)
}

/// Run every sweep point on `trials` common trials; returns the per-trial
/// metrics of each point in trial order.
///
/// Trials run on worker threads; results do not depend on the thread count.
pub fn run_points(frontend: &Frontend, points: &[SweepPoint], config: &ExperimentConfig) -> Result<Vec<Vec<TrialMetrics>>> {
    let plans = points.iter().map(|p| plan(p, config)).collect::<Result<Vec<_>>>()?;
    let trials = config.trials;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(trials.max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let per_trial: Vec<(usize, Result<Vec<TrialMetrics>>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let t = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if t >= trials {
                            break done;
                        }
                        done.push((t, run_trial(frontend, points, &plans, config, t as u64)));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("trial worker panicked")).collect()
    });
    let mut ordered: Vec<Option<Vec<TrialMetrics>>> = (0..trials).map(|_| None).collect();
    for (t, r) in per_trial {
        ordered[t] = Some(r?);
    }
    let mut out = vec![Vec::with_capacity(trials); points.len()];
    for metrics in ordered.into_iter().flatten() {
        for (k, m) in metrics.into_iter().enumerate() {
            out[k].push(m);
        }
    }
    Ok(out)
}

fn frontend_for(config: &ExperimentConfig, scenario: Scenario) -> Result<Frontend> {
    let max_order = config.orders.iter().copied().chain([config.order, config.iq_order]).max().unwrap_or(1);
    Frontend::new(scenario, max_order, config.master_seed)
}

fn glp(order: usize, config: &ExperimentConfig) -> Result<BasisConfig> {
    BasisConfig::new(order, config.memory, BasisKind::Glp)
}

fn pilot_table(
    config: &ExperimentConfig,
    kinds: &[PilotKind],
    orders: &[usize],
    lengths: &[usize],
    sweep_name: &str,
    sweep_by_length: bool,
) -> Result<ResultTable> {
    config.validate()?;
    let frontend = frontend_for(config, config.scenario())?;
    let mut points = Vec::new();
    for &kind in kinds {
        for &order in orders {
            for &len in lengths {
                points.push(SweepPoint {
                    basis: glp(order, config)?,
                    pilot_length: len,
                    pilot: kind,
                });
            }
        }
    }
    let metrics = run_points(&frontend, &points, config)?;
    let mut table = ResultTable::new(config.experiment.name(), sweep_name);
    for (point, m) in points.iter().zip(&metrics) {
        let x = if sweep_by_length {
            point.pilot_length as f64
        } else {
            point.basis.order as f64
        };
        table.rows.push(ResultRow::from_trials(point.pilot.name(), x, m));
    }
    Ok(table)
}

/// RSI and components versus canceller order for several pilot kinds.
pub fn run_order_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    let kinds = [
        PilotKind::Multitone,
        PilotKind::RandomGaussian,
        PilotKind::OptimizedGaussian,
        PilotKind::GlobalLs,
    ];
    pilot_table(config, &kinds, &config.orders, &[config.pilot_length()], "order", false)
}

/// All pilot kinds at the fixed order and pilot length.
pub fn run_pilot_compare(config: &ExperimentConfig) -> Result<ResultTable> {
    let kinds = [
        PilotKind::Multitone,
        PilotKind::RandomGaussian,
        PilotKind::OptimizedGaussian,
        PilotKind::OptimizedChisq,
        PilotKind::GlobalLs,
    ];
    pilot_table(config, &kinds, &[config.order], &[config.pilot_length()], "order", false)
}

/// Optimized Gaussian and chi-square pilots versus pilot length.
pub fn run_pilot_length_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    let lengths: Vec<usize> = config.pilot_symbol_list.iter().map(|s| s * config.symbol_length).collect();
    let kinds = [PilotKind::OptimizedGaussian, PilotKind::OptimizedChisq];
    pilot_table(config, &kinds, &[config.order], &lengths, "pilot_length", true)
}

/// Order sweep for each Tx antenna count at fixed total Tx power, with
/// random Gaussian pilots. Series are named `m<M>`.
pub fn run_mimo_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let mut table = ResultTable::new(config.experiment.name(), "order");
    for &m in &config.antennas {
        let scenario = Scenario {
            antennas: m,
            ..config.scenario()
        };
        let frontend = frontend_for(config, scenario)?;
        let points = config
            .orders
            .iter()
            .map(|&p| {
                Ok(SweepPoint {
                    basis: BasisConfig::with_antennas(p, config.memory, BasisKind::Glp, m)?,
                    pilot_length: config.pilot_length(),
                    pilot: PilotKind::RandomGaussian,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let metrics = run_points(&frontend, &points, config)?;
        for (point, mt) in points.iter().zip(&metrics) {
            table.rows.push(ResultRow::from_trials(&format!("m{m}"), point.basis.order as f64, mt));
        }
    }
    Ok(table)
}

/// Order with the lowest median RSI in a series.
pub fn optimal_order(table: &ResultTable, series: &str) -> Option<usize> {
    table
        .series(series)
        .into_iter()
        .min_by(|a, b| a.rsi_dbm.median.total_cmp(&b.rsi_dbm.median))
        .map(|r| r.sweep_variable as usize)
}

/// PH (GLP-implemented) versus PH+IQ cancellers across Tx IRR, with the
/// same random Gaussian pilots. Series `ph` and `ph_iq`.
pub fn run_iq_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let mut table = ResultTable::new(config.experiment.name(), "irr_db");
    let ph = glp(config.iq_order, config)?;
    let points = [
        SweepPoint {
            basis: ph,
            pilot_length: config.pilot_length(),
            pilot: PilotKind::RandomGaussian,
        },
        SweepPoint {
            basis: ph.with_kind(BasisKind::PhIq),
            pilot_length: config.pilot_length(),
            pilot: PilotKind::RandomGaussian,
        },
    ];
    let mut rows: [Vec<ResultRow>; 2] = [Vec::new(), Vec::new()];
    for &irr in &config.irr_db {
        let scenario = Scenario {
            irr_db: Some(irr),
            ..config.scenario()
        };
        let frontend = frontend_for(config, scenario)?;
        let metrics = run_points(&frontend, &points, config)?;
        rows[0].push(ResultRow::from_trials("ph", irr, &metrics[0]));
        rows[1].push(ResultRow::from_trials("ph_iq", irr, &metrics[1]));
    }
    let [a, b] = rows;
    table.rows.extend(a);
    table.rows.extend(b);
    Ok(table)
}

/// Ensemble pilot selection at the configured order, length and distribution.
pub fn run_select_pilot(config: &ExperimentConfig) -> Result<(PilotCandidate, Vec<CandidateDiagnostics>)> {
    config.validate()?;
    select_pilot_with_diagnostics(
        config.ensemble_size,
        config.pilot_length(),
        config.pilot_distribution,
        &glp(config.order, config)?,
        config.master_seed,
    )
}
