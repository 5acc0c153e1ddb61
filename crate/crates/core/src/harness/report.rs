//! Aggregation, audits and CSV emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ScenarioConfig;
use super::run::{OpgpaRow, RecordKind, RunOutput, RunRecord, TrialFailure};
use crate::error::{Error, Result};

pub const RECORD_HEADER: [&str; 10] = [
    "seed",
    "group",
    "subgroup",
    "ue",
    "snr0_db",
    "precoder",
    "mi_bits",
    "se_contribution",
    "mai_power",
    "opgpa_gain",
];

/// Gaussian-input MI may undercut the finite-alphabet value by at most this
/// much (quadrature error).
pub const GAUSSIAN_AUDIT_TOL: f64 = 1e-4;
pub const TRACE_AUDIT_TOL: f64 = 1e-9;

/// Six significant digits, fixed notation where it stays short.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (mant, e) = s.split_once('e').expect("scientific format");
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        return format!("{mant}e{e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn record_row(r: &RunRecord) -> Vec<String> {
    vec![
        r.seed.to_string(),
        r.group.to_string(),
        r.subgroup.to_string(),
        r.ue.to_string(),
        fmt_num(r.snr0_db),
        r.kind.name(),
        fmt_num(r.mi_bits),
        fmt_num(r.se_contribution),
        fmt_num(r.mai_power),
        r.opgpa_gain.map(fmt_num).unwrap_or_default(),
    ]
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_rows(path, &RECORD_HEADER, records.iter().map(record_row))
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let bad = |line: usize, what: &str| Error::Config {
        line,
        reason: format!("{}: bad {what}", path.display()),
    };
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let line = i + 2;
        let get = |k: usize| row.get(k).ok_or_else(|| bad(line, RECORD_HEADER[k]));
        let num = |k: usize| -> Result<f64> { get(k)?.parse().map_err(|_| bad(line, RECORD_HEADER[k])) };
        let int = |k: usize| -> Result<u64> { get(k)?.parse().map_err(|_| bad(line, RECORD_HEADER[k])) };
        let gain = get(9)?;
        out.push(RunRecord {
            seed: int(0)?,
            group: int(1)? as usize,
            subgroup: int(2)? as usize,
            ue: int(3)? as usize,
            snr0_db: num(4)?,
            kind: RecordKind::parse(get(5)?).ok_or_else(|| bad(line, "precoder"))?,
            mi_bits: num(6)?,
            se_contribution: num(7)?,
            mai_power: num(8)?,
            opgpa_gain: if gain.is_empty() { None } else { Some(num(9)?) },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeRow {
    pub kind: RecordKind,
    pub snr0_db: f64,
    pub se_mean: f64,
    pub se_median: f64,
    pub seua_median: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCurve {
    pub group: usize,
    pub kind: RecordKind,
    pub snr0_db: f64,
    /// Mean per-UE MI over all trials.
    pub mi_per_ue: f64,
    /// Mean over trials of the group's summed MI.
    pub sum_mi: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub se: Vec<SeRow>,
    pub curves: Vec<GroupCurve>,
    pub area: f64,
}

impl Summary {
    pub fn se_at(&self, kind: RecordKind, snr0_db: f64) -> Option<&SeRow> {
        self.se.iter().find(|r| r.kind == kind && r.snr0_db == snr0_db)
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// SNR key with exact float identity (values come from the same sweep list).
fn key(x: f64) -> u64 {
    x.to_bits()
}

/// Per-trial SE is the sum of SE contributions; SEUA divides by `area`.
pub fn aggregate(records: &[RunRecord], area: f64) -> Summary {
    let mut per_trial: BTreeMap<(RecordKind, u64, u64), f64> = BTreeMap::new();
    let mut snr_of: BTreeMap<u64, f64> = BTreeMap::new();
    let mut group_sums: BTreeMap<(usize, RecordKind, u64, u64), (f64, usize)> = BTreeMap::new();
    for r in records {
        snr_of.insert(key(r.snr0_db), r.snr0_db);
        *per_trial.entry((r.kind, key(r.snr0_db), r.seed)).or_default() += r.se_contribution;
        let e = group_sums.entry((r.group, r.kind, key(r.snr0_db), r.seed)).or_default();
        e.0 += r.mi_bits;
        e.1 += 1;
    }

    let mut se_groups: BTreeMap<(RecordKind, u64), Vec<f64>> = BTreeMap::new();
    for ((kind, snr, _), v) in per_trial {
        se_groups.entry((kind, snr)).or_default().push(v);
    }
    let mut se: Vec<SeRow> = se_groups
        .into_iter()
        .map(|((kind, snr), mut v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let med = median(&mut v);
            SeRow {
                kind,
                snr0_db: snr_of[&snr],
                se_mean: mean,
                se_median: med,
                seua_median: med / area,
                trials: v.len(),
            }
        })
        .collect();
    se.sort_by(|a, b| a.kind.cmp(&b.kind).then(a.snr0_db.total_cmp(&b.snr0_db)));

    let mut curves_acc: BTreeMap<(usize, RecordKind, u64), (f64, usize, f64, usize)> = BTreeMap::new();
    for ((group, kind, snr, _), (sum, n)) in group_sums {
        let e = curves_acc.entry((group, kind, snr)).or_default();
        e.0 += sum;
        e.1 += n;
        e.2 += sum;
        e.3 += 1;
    }
    let mut curves: Vec<GroupCurve> = curves_acc
        .into_iter()
        .map(|((group, kind, snr), (sum, n, sum_tr, trials))| GroupCurve {
            group,
            kind,
            snr0_db: snr_of[&snr],
            mi_per_ue: sum / n as f64,
            sum_mi: sum_tr / trials as f64,
            samples: n,
        })
        .collect();
    curves.sort_by(|a, b| {
        (a.group, a.kind)
            .cmp(&(b.group, b.kind))
            .then(a.snr0_db.total_cmp(&b.snr0_db))
    });
    Summary { se, curves, area }
}

/// Re-checks power constraints and Gaussian dominance before anything is written.
pub fn audit(out: &RunOutput) -> Result<()> {
    for t in &out.trials {
        if t.max_trace_error > TRACE_AUDIT_TOL {
            return Err(Error::Audit(format!(
                "trial {}: precoder power off by {:.3e} of budget",
                t.seed, t.max_trace_error
            )));
        }
        let mut gauss = BTreeMap::new();
        for r in t.records.iter().filter(|r| r.kind.gaussian) {
            gauss.insert((r.group, r.subgroup, r.ue, key(r.snr0_db), r.kind.precoder), r.mi_bits);
        }
        for r in t.records.iter().filter(|r| !r.kind.gaussian) {
            if let Some(g) = gauss.get(&(r.group, r.subgroup, r.ue, key(r.snr0_db), r.kind.precoder)) {
                if g + GAUSSIAN_AUDIT_TOL < r.mi_bits {
                    return Err(Error::Audit(format!(
                        "trial {} UE {} at {} dB: Gaussian {} < finite alphabet {} ({})",
                        t.seed,
                        r.ue,
                        r.snr0_db,
                        g,
                        r.mi_bits,
                        r.kind.name()
                    )));
                }
            }
        }
    }
    Ok(())
}

fn figure_path(dir: &Path, scenario: &str, group: usize, kind: RecordKind) -> PathBuf {
    dir.join(format!("fig_{scenario}_G{group}_{}.csv", kind.name()))
}

fn groups_report(out: &RunOutput) -> String {
    let mut s = String::new();
    for t in &out.trials {
        let _ = writeln!(
            s,
            "trial seed={} blocked={} captured_fraction={}",
            t.seed,
            t.n_blocked,
            fmt_num(t.captured_fraction)
        );
        for g in &t.plan.groups {
            let _ = writeln!(
                s,
                "  G{} {} mode={} boost_db={} ues={:?}",
                g.id,
                if g.nlos { "blocked" } else { "clear" },
                g.mode.name(),
                fmt_num(g.snr0_boost_db),
                g.ue_indices
            );
            for (i, sub) in g.subgroups.iter().enumerate() {
                let _ = writeln!(s, "    sub{} ues={:?} beams={:?}", i + 1, sub.ue_indices, sub.vcmb_set);
            }
        }
        for w in &t.plan.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
    }
    s
}

fn diagnostics(failures: &[TrialFailure]) -> String {
    failures
        .iter()
        .map(|f| format!("seed={} error={}\n", f.seed, f.error))
        .collect()
}

/// Writes records, per-group figure data, the SE summary, the reference
/// comparison, the group plans and failed-trial diagnostics into `dir`.
pub fn emit(cfg: &ScenarioConfig, out: &RunOutput, dir: &Path) -> Result<Summary> {
    audit(out)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let records: Vec<RunRecord> = out.records().cloned().collect();
    write_records(&dir.join("records.csv"), &records)?;
    let summary = aggregate(&records, cfg.geometry.area());

    let mut by_figure: BTreeMap<(usize, RecordKind), Vec<&GroupCurve>> = BTreeMap::new();
    for c in &summary.curves {
        by_figure.entry((c.group, c.kind)).or_default().push(c);
    }
    for ((group, kind), curves) in by_figure {
        let path = figure_path(dir, &cfg.name, group, kind);
        write_rows(
            &path,
            &["snr0_db", "mi_per_ue", "sum_mi", "samples"],
            curves.iter().map(|c| {
                vec![
                    fmt_num(c.snr0_db),
                    fmt_num(c.mi_per_ue),
                    fmt_num(c.sum_mi),
                    c.samples.to_string(),
                ]
            }),
        )?;
    }

    write_rows(
        &dir.join("summary.csv"),
        &["precoder", "snr0_db", "se_mean", "se_median", "seua_median", "trials"],
        summary.se.iter().map(|r| {
            vec![
                r.kind.name(),
                fmt_num(r.snr0_db),
                fmt_num(r.se_mean),
                fmt_num(r.se_median),
                fmt_num(r.seua_median),
                r.trials.to_string(),
            ]
        }),
    )?;

    if cfg.reference_se.is_some() || cfg.reference_seua.is_some() {
        let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
        write_rows(
            &dir.join("reference.csv"),
            &[
                "precoder",
                "snr0_db",
                "se_median",
                "seua_median",
                "reference_se",
                "reference_seua",
                "reference_se_over_area",
            ],
            summary
                .se
                .iter()
                .filter(|r| r.snr0_db == cfg.se_snr_db)
                .map(|r| {
                    vec![
                        r.kind.name(),
                        fmt_num(r.snr0_db),
                        fmt_num(r.se_median),
                        fmt_num(r.seua_median),
                        opt(cfg.reference_se),
                        opt(cfg.reference_seua),
                        opt(cfg.reference_se.map(|s| s / summary.area)),
                    ]
                }),
        )?;
    }

    let groups = dir.join("groups.txt");
    fs::write(&groups, groups_report(out)).map_err(io_err(&groups))?;
    let diag = dir.join("diagnostics.txt");
    fs::write(&diag, diagnostics(&out.failures)).map_err(io_err(&diag))?;
    Ok(summary)
}

/// `fig_opgpa.csv` holds the per-target medians over groups; the per-group
/// rows go to `opgpa_groups.csv`.
pub fn emit_opgpa(rows: &[OpgpaRow], failures: &[TrialFailure], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut by_target: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let e = by_target.entry(key(r.i_s)).or_insert((r.i_s, Vec::new(), Vec::new()));
        e.1.push(r.snr_opgpa_db);
        e.2.push(r.snr_nopgpa_db);
    }
    let mut targets: Vec<_> = by_target.into_values().collect();
    targets.sort_by(|a, b| a.0.total_cmp(&b.0));
    write_rows(
        &dir.join("fig_opgpa.csv"),
        &["i_s", "snr_opgpa_db", "snr_nopgpa_db"],
        targets.into_iter().map(|(i_s, mut a, mut b)| {
            vec![fmt_num(i_s), fmt_num(median(&mut a)), fmt_num(median(&mut b))]
        }),
    )?;
    write_rows(
        &dir.join("opgpa_groups.csv"),
        &[
            "seed",
            "group",
            "i_s",
            "snr_req_db",
            "snr_opgpa_db",
            "snr_nopgpa_db",
            "savings_db",
            "feasible",
            "min_ue_mi",
            "max_ue_mi",
        ],
        rows.iter().map(|r| {
            let min = r.ue_mi.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = r.ue_mi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            vec![
                r.seed.to_string(),
                r.group.to_string(),
                fmt_num(r.i_s),
                fmt_num(r.snr_req_db),
                fmt_num(r.snr_opgpa_db),
                fmt_num(r.snr_nopgpa_db),
                fmt_num(r.savings_db),
                r.feasible.to_string(),
                fmt_num(min),
                fmt_num(max),
            ]
        }),
    )?;
    let diag = dir.join("diagnostics.txt");
    fs::write(&diag, diagnostics(failures)).map_err(io_err(&diag))
}

/// Plain-text SE table for the `report` command.
pub fn render_summary(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>8} {:>10} {:>10} {:>12} {:>6}", "precoder", "snr0_db", "se_mean", "se_median", "seua_median", "trials");
    for r in &summary.se {
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>10} {:>10} {:>12} {:>6}",
            r.kind.name(),
            fmt_num(r.snr0_db),
            fmt_num(r.se_mean),
            fmt_num(r.se_median),
            fmt_num(r.seua_median),
            r.trials
        );
    }
    s
}
