//! Frequency groups (blocked UEs together, unblocked UEs spread by
//! decorrelation) and the beam sets each group or sub-group transmits on.

use num_complex::Complex64;

use crate::beamspace::{rank_beams, PreselectionResult, VirtualChannel};
use crate::channel::CellChannel;
use crate::error::{invalid, Error, Result};
use crate::linalg::CMat;

pub const DEFAULT_NLOS_BOOST_DB: f64 = 13.0;
pub const DEFAULT_SPLIT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubgroupMode {
    Tg,
    Sg,
    JsdmFa { n_sub: usize },
}

impl SubgroupMode {
    pub fn name(self) -> &'static str {
        match self {
            SubgroupMode::Tg => "TG",
            SubgroupMode::Sg => "SG",
            SubgroupMode::JsdmFa { .. } => "JSDM_FA",
        }
    }

    pub fn parse(s: &str, n_sub: usize) -> Result<SubgroupMode> {
        match s.to_ascii_uppercase().as_str() {
            "TG" => Ok(SubgroupMode::Tg),
            "SG" => Ok(SubgroupMode::Sg),
            "JSDM_FA" | "JSDM-FA" | "JSDM" => Ok(SubgroupMode::JsdmFa { n_sub }),
            other => Err(invalid("mode", format!("unknown sub-grouping mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubGroup {
    pub ue_indices: Vec<usize>,
    pub vcmb_set: Vec<usize>,
    pub hv: VirtualChannel,
}

#[derive(Debug, Clone)]
pub struct Group {
    /// 1-based label in reports.
    pub id: usize,
    pub ue_indices: Vec<usize>,
    pub snr0_boost_db: f64,
    pub nlos: bool,
    pub mode: SubgroupMode,
    pub subgroups: Vec<SubGroup>,
}

#[derive(Debug, Clone)]
pub struct GroupPlan {
    pub groups: Vec<Group>,
    pub warnings: Vec<String>,
}

impl GroupPlan {
    pub fn n_g(&self) -> usize {
        self.groups.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingParams {
    pub n_g: usize,
    pub nlos_boost_db: f64,
    /// Split the most correlated unblocked group while its mean pairwise
    /// correlation exceeds this, up to `max_groups` groups in total.
    pub split_threshold: Option<f64>,
    pub max_groups: usize,
}

impl Default for GroupingParams {
    fn default() -> Self {
        GroupingParams {
            n_g: 3,
            nlos_boost_db: DEFAULT_NLOS_BOOST_DB,
            split_threshold: None,
            max_groups: 4,
        }
    }
}

/// `|<a, b>| / (|a| |b|)`.
pub fn correlation(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("rows of length {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if na == 0.0 {
        return Err(Error::ZeroRow(0));
    }
    if nb == 0.0 {
        return Err(Error::ZeroRow(1));
    }
    let dot: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    Ok((dot.norm() / (na * nb)).min(1.0))
}

/// Pairwise correlations of the given UEs' rows restricted to `beams`.
pub fn correlation_matrix(h_v: &CMat, ues: &[usize], beams: &[usize]) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<Complex64>> = ues
        .iter()
        .map(|&u| beams.iter().map(|&b| h_v[(u, b)]).collect())
        .collect();
    let n = ues.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        c[i][i] = 1.0;
        for j in i + 1..n {
            let v = correlation(&rows[i], &rows[j]).map_err(|e| match e {
                Error::ZeroRow(0) => Error::ZeroRow(ues[i]),
                Error::ZeroRow(_) => Error::ZeroRow(ues[j]),
                other => other,
            })?;
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    Ok(c)
}

/// Greedy max-min decorrelation of `n` items into `groups` balanced groups.
/// Returns positions into the correlation matrix.
pub fn decorrelate(corr: &[Vec<f64>], groups: usize) -> Vec<Vec<usize>> {
    let n = corr.len();
    let groups = groups.clamp(1, n.max(1));
    let cap = n.div_ceil(groups);
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); groups];
    if n == 0 {
        return out;
    }
    let mut placed = vec![false; n];
    if groups >= 2 && n >= 2 {
        let mut best = (0, 1, f64::NEG_INFINITY);
        for i in 0..n {
            for j in i + 1..n {
                if corr[i][j] > best.2 {
                    best = (i, j, corr[i][j]);
                }
            }
        }
        out[0].push(best.0);
        out[1].push(best.1);
        placed[best.0] = true;
        placed[best.1] = true;
    }
    // hardest UEs (largest worst-case correlation) first
    let mut order: Vec<usize> = (0..n).filter(|&i| !placed[i]).collect();
    let worst = |i: usize| (0..n).filter(|&j| j != i).map(|j| corr[i][j]).fold(0.0, f64::max);
    order.sort_by(|&a, &b| worst(b).total_cmp(&worst(a)).then(a.cmp(&b)));
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, members) in out.iter().enumerate() {
            if members.len() >= cap {
                continue;
            }
            let cost = members.iter().map(|&j| corr[i][j]).fold(0.0, f64::max);
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((g, cost));
            }
        }
        let g = best.expect("capacity covers every item").0;
        out[g].push(i);
    }
    for g in out.iter_mut() {
        g.sort_unstable();
    }
    out
}

fn mean_pairwise(corr: &[Vec<f64>], members: &[usize]) -> f64 {
    let n = members.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            acc += corr[members[a]][members[b]];
        }
    }
    acc / (n * (n - 1) / 2) as f64
}

/// Blocked UEs form the first group (with the SNR boost); unblocked UEs are
/// spread over the remaining groups. Sub-groups are left empty.
pub fn partition_cfsdm(
    cell: &CellChannel,
    h_v: &CMat,
    ps: &PreselectionResult,
    params: &GroupingParams,
) -> Result<GroupPlan> {
    if !(2..=4).contains(&params.n_g) {
        return Err(invalid("n_g", format!("{} groups requested, expected 2..=4", params.n_g)));
    }
    let mut warnings = Vec::new();
    let nlos = cell.blocked();
    let los = cell.unblocked();
    let los_groups = params.n_g - 1;
    if nlos.is_empty() {
        warnings.push(format!(
            "no blocked UEs: blocked group omitted, {los_groups} groups in use"
        ));
    }
    if los.len() < los_groups {
        return Err(invalid(
            "n_g",
            format!("{} unblocked UEs cannot fill {los_groups} groups", los.len()),
        ));
    }
    let corr = correlation_matrix(h_v, &los, &ps.beams)?;
    let mut parts = decorrelate(&corr, los_groups);

    if let Some(threshold) = params.split_threshold {
        while parts.len() + usize::from(!nlos.is_empty()) < params.max_groups {
            let candidate = parts
                .iter()
                .enumerate()
                .filter(|(_, p)| p.len() >= 2)
                .map(|(i, p)| (i, mean_pairwise(&corr, p)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            match candidate {
                Some((i, mean)) if mean > threshold => {
                    let members = parts.remove(i);
                    let sub: Vec<Vec<f64>> = members
                        .iter()
                        .map(|&a| members.iter().map(|&b| corr[a][b]).collect())
                        .collect();
                    let halves = decorrelate(&sub, 2);
                    for (k, h) in halves.into_iter().enumerate() {
                        parts.insert(i + k, h.into_iter().map(|p| members[p]).collect());
                    }
                    warnings.push(format!(
                        "unblocked group split: mean correlation {mean:.3} above {threshold}"
                    ));
                }
                _ => break,
            }
        }
    }

    let mut groups = Vec::new();
    if !nlos.is_empty() {
        groups.push(Group {
            id: 1,
            ue_indices: nlos,
            snr0_boost_db: params.nlos_boost_db,
            nlos: true,
            mode: SubgroupMode::Tg,
            subgroups: Vec::new(),
        });
    }
    for p in parts {
        groups.push(Group {
            id: groups.len() + 1,
            ue_indices: p.into_iter().map(|i| los[i]).collect(),
            snr0_boost_db: 0.0,
            nlos: false,
            mode: SubgroupMode::Tg,
            subgroups: Vec::new(),
        });
    }
    Ok(GroupPlan { groups, warnings })
}

fn group_powers(h_v: &CMat, ues: &[usize], beams: &[usize]) -> Vec<f64> {
    beams
        .iter()
        .map(|&b| ues.iter().map(|&u| h_v[(u, b)].norm_sqr()).sum())
        .collect()
}

/// The `n` strongest of `candidates` by power over `ues`, strongest first.
pub fn strongest_beams(h_v: &CMat, ues: &[usize], candidates: &[usize], n: usize) -> Vec<usize> {
    let powers = group_powers(h_v, ues, candidates);
    rank_beams(&powers)
        .into_iter()
        .take(n)
        .map(|i| candidates[i])
        .collect()
}

fn tg_beams(h_v: &CMat, ues: &[usize], ps: &PreselectionResult) -> Vec<usize> {
    let powers = group_powers(h_v, ues, &ps.beams);
    let max = powers.iter().cloned().fold(0.0, f64::max);
    ps.beams
        .iter()
        .zip(&powers)
        .filter(|(_, p)| **p > 1e-12 * max && **p > 0.0)
        .map(|(b, _)| *b)
        .collect()
}

/// Sub-groups of one group. `n_ux` is the horizontal array size, used to read
/// a beam index as `(x, z)` bins for the JSDM-FA clustering key.
pub fn subgroup(
    h_v: &CMat,
    ues: &[usize],
    ps: &PreselectionResult,
    mode: SubgroupMode,
    n_ux: usize,
) -> Result<(Vec<SubGroup>, Vec<String>)> {
    if ues.is_empty() {
        return Err(invalid("group", "no UEs to sub-group"));
    }
    let mut warnings = Vec::new();
    let make = |members: &[usize], beams: Vec<usize>| SubGroup {
        ue_indices: members.to_vec(),
        hv: VirtualChannel::from_beamspace(h_v, members, &beams),
        vcmb_set: beams,
    };
    match mode {
        SubgroupMode::Tg => Ok((vec![make(ues, tg_beams(h_v, ues, ps))], warnings)),
        SubgroupMode::Sg => {
            let beams = strongest_beams(h_v, ues, &ps.beams, ues.len());
            let usable = group_powers(h_v, ues, &beams).iter().filter(|p| **p > 0.0).count();
            let sg = make(ues, beams);
            if usable < ues.len() || sg.hv.svd.check_full_rank().is_err() {
                warnings.push(format!(
                    "strongest-beam selection for UEs {ues:?} is rank deficient; keeping all pre-selected beams"
                ));
                return Ok((vec![make(ues, tg_beams(h_v, ues, ps))], warnings));
            }
            Ok((vec![sg], warnings))
        }
        SubgroupMode::JsdmFa { n_sub } => {
            if n_sub == 0 || n_sub > ues.len() {
                return Err(invalid("n_sub", format!("{n_sub} sub-groups for {} UEs", ues.len())));
            }
            let key = |u: usize| {
                let b = ps.per_ue_order[u][0];
                (b % n_ux, b / n_ux, u)
            };
            let mut sorted = ues.to_vec();
            sorted.sort_by_key(|&u| key(u));
            let base = sorted.len() / n_sub;
            let extra = sorted.len() % n_sub;
            let mut subs = Vec::with_capacity(n_sub);
            let mut start = 0;
            for l in 0..n_sub {
                let len = base + usize::from(l < extra);
                let mut members = sorted[start..start + len].to_vec();
                members.sort_unstable();
                start += len;
                let beams = strongest_beams(h_v, &members, &ps.beams, members.len());
                subs.push(make(&members, beams));
            }
            Ok((subs, warnings))
        }
    }
}
