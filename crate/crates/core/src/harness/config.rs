//! Flat `key = value` scenario files. `#` starts a comment; blank lines are
//! ignored; every key may appear at most once.
//!
//! ```text
//! name = scenario1
//! n_ue = 10
//! snr_sweep_db = 0, 10, 20, 30
//! mode = SG
//! mode.2 = JSDM_FA     # override for group 2
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use crate::channel::{CellGeometry, PropagationParams};
use crate::error::{invalid, Error, Result};
use crate::grouping::{GroupingParams, SubgroupMode};
use crate::interference::SnrConvention;
use crate::mi::Constellation;
use crate::precoding::PrecoderKind;

pub const SCENARIO1: &str = include_str!("../../presets/scenario1.conf");
pub const SCENARIO2: &str = include_str!("../../presets/scenario2.conf");

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub geometry: CellGeometry,
    pub propagation: PropagationParams,
    pub n_ue: usize,
    pub grouping: GroupingParams,
    pub mode: SubgroupMode,
    /// Per-group overrides keyed by 1-based group id.
    pub mode_overrides: BTreeMap<usize, SubgroupMode>,
    pub jsdm_subgroups: usize,
    pub constellation: usize,
    pub snr_sweep_db: Vec<f64>,
    pub gh_order: usize,
    pub n_v_init: usize,
    pub trials: usize,
    pub seed: u64,
    pub precoders: Vec<PrecoderKind>,
    pub gaussian: bool,
    pub vaac_rotate: bool,
    pub opgpa_target: Option<f64>,
    pub opgpa_snr1_db: Option<f64>,
    pub opgpa_group_size: usize,
    pub opgpa_snr0_db: f64,
    pub mai_convention: SnrConvention,
    pub se_snr_db: f64,
    pub reference_se: Option<f64>,
    pub reference_seua: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            geometry: CellGeometry::default(),
            propagation: PropagationParams::default(),
            n_ue: 10,
            grouping: GroupingParams::default(),
            mode: SubgroupMode::Sg,
            mode_overrides: BTreeMap::new(),
            jsdm_subgroups: 2,
            constellation: 16,
            snr_sweep_db: vec![20.0],
            gh_order: 10,
            n_v_init: 20,
            trials: 1,
            seed: 1,
            precoders: vec![PrecoderKind::Zfp, PrecoderKind::ZfPgp, PrecoderKind::VaacPgp],
            gaussian: true,
            vaac_rotate: false,
            opgpa_target: None,
            opgpa_snr1_db: None,
            opgpa_group_size: 4,
            opgpa_snr0_db: 20.0,
            mai_convention: SnrConvention::Harmonic,
            se_snr_db: 30.0,
            reference_se: None,
            reference_seua: None,
        }
    }
}

fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ScenarioConfig {
    pub fn preset(name: &str) -> Option<ScenarioConfig> {
        let text = match name {
            "scenario1" => SCENARIO1,
            "scenario2" => SCENARIO2,
            _ => return None,
        };
        Some(ScenarioConfig::parse(text).expect("shipped presets parse"))
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        ScenarioConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config { line: line_no, reason };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(|e| match e {
                Error::Config { reason, .. } => err(reason),
                other => err(other.to_string()),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config {
            line: 0,
            reason: format!("`{key}`: cannot read {value:?} as {what}"),
        };
        let f = |v: &str| v.parse::<f64>().map_err(|_| bad("a number"));
        let u = |v: &str| v.parse::<usize>().map_err(|_| bad("a count"));
        let b = |v: &str| match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(bad("a boolean")),
        };
        let opt = |v: &str| -> Result<Option<f64>> {
            if v.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                f(v).map(Some)
            }
        };
        if let Some(id) = key.strip_prefix("mode.") {
            let id = id.parse::<usize>().map_err(|_| bad("a group id"))?;
            // the sub-group count is resolved at validation time
            self.mode_overrides.insert(id, SubgroupMode::parse(value, 0)?);
            return Ok(());
        }
        match key {
            "name" => self.name = value.to_string(),
            "n_ue" => self.n_ue = u(value)?,
            "r_inner" => self.geometry.r_inner = f(value)?,
            "r_outer" => self.geometry.r_outer = f(value)?,
            "height" => self.geometry.height = f(value)?,
            "n_ux" => self.geometry.n_ux = u(value)?,
            "n_uz" => self.geometry.n_uz = u(value)?,
            "spacing" => self.geometry.spacing = f(value)?,
            "snr0_db" => self.propagation.snr0 = db_to_lin(f(value)?),
            "r_break" => self.propagation.r_break = f(value)?,
            "k_los" => self.propagation.k_los = f(value)?,
            "k_nlos" => self.propagation.k_nlos = f(value)?,
            "m_los" => self.propagation.m_los = f(value)?,
            "m_nlos" => self.propagation.m_nlos = f(value)?,
            "p_block" => self.propagation.p_block = f(value)?,
            "n_g" => self.grouping.n_g = u(value)?,
            "nlos_boost_db" => self.grouping.nlos_boost_db = f(value)?,
            "split_threshold" => self.grouping.split_threshold = opt(value)?,
            "max_groups" => self.grouping.max_groups = u(value)?,
            "mode" => self.mode = SubgroupMode::parse(value, 0)?,
            "jsdm_subgroups" => self.jsdm_subgroups = u(value)?,
            "constellation" => self.constellation = u(value)?,
            "snr_sweep_db" => {
                self.snr_sweep_db = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(f)
                    .collect::<Result<_>>()?
            }
            "gh_order" => self.gh_order = u(value)?,
            "n_v_init" => self.n_v_init = u(value)?,
            "trials" => self.trials = u(value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad("a seed"))?,
            "precoders" => {
                self.precoders = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| match s.to_ascii_uppercase().replace('-', "_").as_str() {
                        "ZFP" => Ok(PrecoderKind::Zfp),
                        "ZF_PGP" => Ok(PrecoderKind::ZfPgp),
                        "VAAC_PGP" => Ok(PrecoderKind::VaacPgp),
                        _ => Err(bad("a precoder list")),
                    })
                    .collect::<Result<_>>()?
            }
            "gaussian" => self.gaussian = b(value)?,
            "vaac_rotate" => self.vaac_rotate = b(value)?,
            "opgpa_target" => self.opgpa_target = opt(value)?,
            "opgpa_snr1_db" => self.opgpa_snr1_db = opt(value)?,
            "opgpa_group_size" => self.opgpa_group_size = u(value)?,
            "opgpa_snr0_db" => self.opgpa_snr0_db = f(value)?,
            "mai_convention" => {
                self.mai_convention = match value.to_ascii_lowercase().as_str() {
                    "harmonic" => SnrConvention::Harmonic,
                    "sinr" => SnrConvention::Sinr,
                    _ => return Err(bad("`harmonic` or `sinr`")),
                }
            }
            "se_snr_db" => self.se_snr_db = f(value)?,
            "reference_se" => self.reference_se = opt(value)?,
            "reference_seua" => self.reference_seua = opt(value)?,
            _ => {
                return Err(Error::Config {
                    line: 0,
                    reason: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }

    /// Mode for a group, with the JSDM-FA sub-group count filled in.
    pub fn mode_for(&self, group_id: usize) -> SubgroupMode {
        let mode = self.mode_overrides.get(&group_id).copied().unwrap_or(self.mode);
        match mode {
            SubgroupMode::JsdmFa { .. } => SubgroupMode::JsdmFa {
                n_sub: self.jsdm_subgroups,
            },
            other => other,
        }
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Constellation::qam(self.constellation)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.propagation.validate()?;
        if self.snr_sweep_db.is_empty() {
            return Err(invalid("snr_sweep_db", "sweep is empty"));
        }
        if self.snr_sweep_db.iter().any(|x| !x.is_finite()) {
            return Err(invalid("snr_sweep_db", "sweep has a non-finite entry"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        if self.n_ue == 0 {
            return Err(invalid("n_ue", "need at least one UE"));
        }
        if self.n_v_init == 0 || self.n_v_init > self.geometry.n_t() {
            return Err(invalid("n_v_init", format!("{} outside 1..={}", self.n_v_init, self.geometry.n_t())));
        }
        if !(2..=4).contains(&self.grouping.n_g) {
            return Err(invalid("n_g", "expected 2..=4"));
        }
        if self.grouping.max_groups < self.grouping.n_g || self.grouping.max_groups > 4 {
            return Err(invalid("max_groups", "must lie in n_g..=4"));
        }
        if self.jsdm_subgroups == 0 {
            return Err(invalid("jsdm_subgroups", "need at least one sub-group"));
        }
        if self.precoders.is_empty() {
            return Err(invalid("precoders", "no precoder selected"));
        }
        if self.opgpa_group_size == 0 {
            return Err(invalid("opgpa_group_size", "must be positive"));
        }
        let c = self.constellation()?;
        crate::mi::gh_rule(self.gh_order)?;
        if let Some(t) = self.opgpa_target {
            if !(0.0..2.0 * c.bits()).contains(&t) {
                return Err(invalid("opgpa_target", format!("{t} bits outside [0, {})", 2.0 * c.bits())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_differ() {
        let s1 = ScenarioConfig::preset("scenario1").unwrap();
        let s2 = ScenarioConfig::preset("scenario2").unwrap();
        assert_eq!(s1.n_ue, 10);
        assert_eq!(s1.geometry.n_t(), 100);
        assert_eq!(s1.constellation, 16);
        assert_eq!(s2.n_ue, 20);
        assert_eq!(s2.geometry.r_outer, 20.0);
        assert!(s2.grouping.split_threshold.is_some());
        assert!(ScenarioConfig::preset("nope").is_none());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = ScenarioConfig::parse("n_ue = 4\nbogus = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = ScenarioConfig::parse("n_ue = 4\n\nn_ue = 5\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }));
        let e = ScenarioConfig::parse("n_ue = four\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }));
        assert!(ScenarioConfig::parse("just words\n").is_err());
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let e = ScenarioConfig::parse("snr_sweep_db =\n").unwrap_err();
        assert!(matches!(e, Error::InvalidParameter { name: "snr_sweep_db", .. }));
        assert!(ScenarioConfig::parse("trials = 0\n").is_err());
    }

    #[test]
    fn comments_overrides_and_lists() {
        let cfg = ScenarioConfig::parse(
            "# header\nmode = SG   # default\nmode.2 = jsdm_fa\njsdm_subgroups = 3\nsnr_sweep_db = 0, 10,20\nprecoders = ZFP, zf-pgp\nopgpa_target = none\n",
        )
        .unwrap();
        assert_eq!(cfg.mode_for(1), SubgroupMode::Sg);
        assert_eq!(cfg.mode_for(2), SubgroupMode::JsdmFa { n_sub: 3 });
        assert_eq!(cfg.snr_sweep_db, vec![0.0, 10.0, 20.0]);
        assert_eq!(cfg.precoders, vec![PrecoderKind::Zfp, PrecoderKind::ZfPgp]);
        assert_eq!(cfg.opgpa_target, None);
    }
}
