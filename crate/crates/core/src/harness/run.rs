//! One Monte-Carlo trial: drop UEs, project, pre-select, group, precode and
//! evaluate every UE over the SNR sweep.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ScenarioConfig;
use crate::beamspace::{preselect, project, vcm_basis, PreselectionResult, VirtualChannel};
use crate::channel::{sample_cell, CellChannel};
use crate::error::{Error, Result};
use crate::grouping::{decorrelate, correlation_matrix, partition_cfsdm, strongest_beams, subgroup, GroupPlan, SubgroupMode};
use crate::interference::mai_report;
use crate::linalg::{select_rows, CMat};
use crate::mi::Constellation;
use crate::opgpa::{opgpa_gains, snr_required, QosTarget};
use crate::precoding::{effective_singular_values, link_mi, precoder_structure, PrecoderFactors, PrecoderKind};

/// Record flavor: finite-alphabet MI of a precoder, or the Gaussian-input
/// MI over the same links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKind {
    pub precoder: PrecoderKind,
    pub gaussian: bool,
}

impl RecordKind {
    pub fn name(&self) -> String {
        if self.gaussian {
            format!("{}_GAUSS", self.precoder.name())
        } else {
            self.precoder.name().to_string()
        }
    }

    pub fn parse(s: &str) -> Option<RecordKind> {
        let (base, gaussian) = match s.strip_suffix("_GAUSS") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let precoder = match base {
            "ZFP" => PrecoderKind::Zfp,
            "ZF_PGP" => PrecoderKind::ZfPgp,
            "VAAC_PGP" => PrecoderKind::VaacPgp,
            _ => return None,
        };
        Some(RecordKind { precoder, gaussian })
    }
}

/// One row per (trial, UE, SNR point, record kind).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub group: usize,
    pub subgroup: usize,
    pub ue: usize,
    pub snr0_db: f64,
    pub kind: RecordKind,
    pub mi_bits: f64,
    /// MI divided by the number of frequency groups sharing the band.
    pub se_contribution: f64,
    /// Interference power relative to unit noise.
    pub mai_power: f64,
    pub opgpa_gain: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub plan: GroupPlan,
    pub captured_fraction: f64,
    pub n_blocked: usize,
    /// Largest `|trace(P P^H) - budget|` over every precoder built.
    pub max_trace_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrialFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub trials: Vec<TrialOutput>,
    pub failures: Vec<TrialFailure>,
}

impl RunOutput {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.trials.iter().flat_map(|t| t.records.iter())
    }
}

pub(crate) fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Seed of trial `t`; rerunning with this seed and one trial reproduces it.
pub fn trial_seed(cfg: &ScenarioConfig, trial: usize) -> u64 {
    cfg.seed.wrapping_add(trial as u64)
}

/// Channel draw shared by the scenario run and the OPGPA sweep.
pub struct Drop {
    pub cell: CellChannel,
    pub h_v: CMat,
    pub ps: PreselectionResult,
}

pub fn draw(cfg: &ScenarioConfig, seed: u64) -> Result<Drop> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = sample_cell(cfg.n_ue, &cfg.geometry, &cfg.propagation, &mut rng)?;
    let h_v = project(&cell.h, &vcm_basis(&cfg.geometry))?;
    let ps = preselect(&h_v, cfg.n_v_init)?;
    Ok(Drop { cell, h_v, ps })
}

struct Link {
    factors: PrecoderFactors,
    gains: Vec<f64>,
}

pub fn run_trial(cfg: &ScenarioConfig, c: &Constellation, seed: u64) -> Result<TrialOutput> {
    let Drop { cell, h_v, ps } = draw(cfg, seed)?;
    let mut plan = partition_cfsdm(&cell, &h_v, &ps, &cfg.grouping)?;
    for g in plan.groups.iter_mut() {
        g.mode = match cfg.mode_for(g.id) {
            SubgroupMode::JsdmFa { n_sub } if n_sub > g.ue_indices.len() => {
                plan.warnings.push(format!(
                    "G{}: {} UEs cannot form {n_sub} sub-groups",
                    g.id,
                    g.ue_indices.len()
                ));
                if g.ue_indices.len() >= 2 {
                    SubgroupMode::JsdmFa {
                        n_sub: g.ue_indices.len(),
                    }
                } else {
                    SubgroupMode::Sg
                }
            }
            mode => mode,
        };
        let (subs, warnings) = subgroup(&h_v, &g.ue_indices, &ps, g.mode, cfg.geometry.n_ux)?;
        g.subgroups = subs;
        plan.warnings.extend(warnings);
    }
    let n_groups = plan.n_g() as f64;
    let snr_req = match cfg.opgpa_target {
        Some(t) => Some(snr_required(t, c, cfg.gh_order)?),
        None => None,
    };

    let mut records = Vec::new();
    let mut max_trace_error: f64 = 0.0;
    for g in &plan.groups {
        for &kind in &cfg.precoders {
            let links: Vec<Link> = g
                .subgroups
                .iter()
                .map(|s| {
                    precoder_structure(kind, &s.hv).map(|(factors, gains)| Link { factors, gains })
                })
                .collect::<Result<_>>()?;
            for l in &links {
                max_trace_error = max_trace_error.max(l.factors.trace_error() / l.factors.power_budget);
            }
            let pmats: Vec<CMat> = links.iter().map(|l| l.factors.matrix()).collect();

            for &snr_db in &cfg.snr_sweep_db {
                let snr0 = db_to_lin(snr_db + g.snr0_boost_db);
                for (si, sub) in g.subgroups.iter().enumerate() {
                    let sources: Vec<(CMat, CMat)> = if matches!(g.mode, SubgroupMode::JsdmFa { .. }) {
                        g.subgroups
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != si)
                            .map(|(j, other)| {
                                let rows = select_rows(&h_v, &sub.ue_indices);
                                let cross = CMat::from_fn(rows.nrows(), other.vcmb_set.len(), |r, b| {
                                    rows[(r, other.vcmb_set[b])]
                                });
                                (cross, pmats[j].clone())
                            })
                            .collect()
                    } else {
                        Vec::new()
                    };
                    let mai = mai_report(snr0, &sources, sub.ue_indices.len(), cfg.mai_convention)?;
                    let link = &links[si];
                    let snrs: Vec<f64> = link.gains.iter().zip(&mai.snr_eff).map(|(a, s)| a * s).collect();
                    let mut mi: Vec<f64> = snrs
                        .par_iter()
                        .map(|&s| link_mi(kind, s, c, cfg.gh_order))
                        .collect::<Result<_>>()?;
                    let mut gauss: Vec<f64> = snrs.iter().map(|s| (1.0 + s).log2()).collect();
                    if cfg.vaac_rotate && kind == PrecoderKind::VaacPgp {
                        let n = mi.len() as f64;
                        let (m1, m2) = (mi.iter().sum::<f64>() / n, gauss.iter().sum::<f64>() / n);
                        mi.iter_mut().for_each(|x| *x = m1);
                        gauss.iter_mut().for_each(|x| *x = m2);
                    }
                    for (m, &ue) in sub.ue_indices.iter().enumerate() {
                        let opgpa_gain = match (kind, snr_req) {
                            (PrecoderKind::ZfPgp, Some(req)) => Some(req / snrs[m]),
                            _ => None,
                        };
                        let mut push = |gaussian: bool, bits: f64| {
                            records.push(RunRecord {
                                seed,
                                group: g.id,
                                subgroup: si + 1,
                                ue,
                                snr0_db: snr_db,
                                kind: RecordKind { precoder: kind, gaussian },
                                mi_bits: bits,
                                se_contribution: bits / n_groups,
                                mai_power: mai.totals[m] * snr0,
                                opgpa_gain,
                            })
                        };
                        push(false, mi[m]);
                        if cfg.gaussian {
                            push(true, gauss[m]);
                        }
                    }
                }
            }
        }
    }
    Ok(TrialOutput {
        seed,
        records,
        n_blocked: cell.blocked().len(),
        plan,
        captured_fraction: ps.captured_fraction,
        max_trace_error,
    })
}

/// Runs every trial; a failing trial is reported and the others proceed.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let c = cfg.constellation()?;
    let results: Vec<(u64, Result<TrialOutput>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg, t);
            (seed, run_trial(cfg, &c, seed))
        })
        .collect();
    let mut out = RunOutput::default();
    for (seed, r) in results {
        match r {
            Ok(t) => out.trials.push(t),
            Err(e) => out.failures.push(TrialFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Groups of exactly `cfg.opgpa_group_size` unblocked UEs, formed by the
/// decorrelation rule, each on its strongest beams.
pub fn opgpa_groups(cfg: &ScenarioConfig, d: &Drop) -> Result<Vec<VirtualChannel>> {
    let los = d.cell.unblocked();
    let size = cfg.opgpa_group_size;
    if los.len() < size {
        return Ok(Vec::new());
    }
    let corr = correlation_matrix(&d.h_v, &los, &d.ps.beams)?;
    let parts = decorrelate(&corr, los.len().div_ceil(size));
    let mut out = Vec::new();
    for p in parts.into_iter().filter(|p| p.len() == size) {
        let ues: Vec<usize> = p.into_iter().map(|i| los[i]).collect();
        let beams = strongest_beams(&d.h_v, &ues, &d.ps.beams, size);
        let hv = VirtualChannel::from_beamspace(&d.h_v, &ues, &beams);
        if hv.svd.check_full_rank().is_ok() {
            out.push(hv);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpgpaRow {
    pub seed: u64,
    pub group: usize,
    pub i_s: f64,
    pub snr_req_db: f64,
    pub snr_opgpa_db: f64,
    pub snr_nopgpa_db: f64,
    pub savings_db: f64,
    pub feasible: bool,
    /// Per-UE MI with the gains applied.
    pub ue_mi: Vec<f64>,
}

pub fn opgpa_sweep(cfg: &ScenarioConfig, is_grid: &[f64]) -> Result<(Vec<OpgpaRow>, Vec<TrialFailure>)> {
    cfg.validate()?;
    if is_grid.is_empty() {
        return Err(crate::error::invalid("is_grid", "no QoS targets given"));
    }
    let c = cfg.constellation()?;
    let snr0 = db_to_lin(cfg.opgpa_snr0_db);
    let snr1 = cfg.opgpa_snr1_db.map(db_to_lin);
    let targets = is_grid
        .iter()
        .map(|&i_s| {
            let t = QosTarget::new(i_s, snr0, snr1, &c)?;
            Ok((t, snr_required(i_s, &c, cfg.gh_order)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let per_trial: Vec<(u64, Result<Vec<OpgpaRow>>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg, t);
            let rows = (|| {
                let d = draw(cfg, seed)?;
                let mut rows = Vec::new();
                for (gi, hv) in opgpa_groups(cfg, &d)?.iter().enumerate() {
                    let eff = effective_singular_values(hv)?;
                    for (target, req) in &targets {
                        let r = opgpa_gains(&eff, target, *req)?;
                        let ue_mi = r
                            .k
                            .iter()
                            .zip(eff.at_snr(snr0))
                            .map(|(k, s)| link_mi(PrecoderKind::ZfPgp, 2.0 * k * s * s, &c, cfg.gh_order))
                            .collect::<Result<Vec<_>>>()?;
                        let db = |x: f64| 10.0 * x.log10();
                        rows.push(OpgpaRow {
                            seed,
                            group: gi + 1,
                            i_s: target.i_s,
                            snr_req_db: db(r.snr_req),
                            snr_opgpa_db: db(r.snr_opgpa),
                            snr_nopgpa_db: db(r.snr_nopgpa),
                            savings_db: r.savings_db(),
                            feasible: r.feasible,
                            ue_mi,
                        });
                    }
                }
                Ok::<_, Error>(rows)
            })();
            (seed, rows)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in per_trial {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => failures.push(TrialFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok((rows, failures))
}
