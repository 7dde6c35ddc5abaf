//! Run configuration in a flat `key = value` text format.
//!
//! Every key has a default; parsing materializes all of them so that the
//! emitted file describes the run completely and parses back to the same
//! value.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapt::AdaptationSchedule;
use crate::cusp::{CuspHyper, SlabForm};
use crate::error::{Error, Result};
use crate::ibp::{IbpHyper, PriorOdds};
use crate::mgp::MgpHyper;
use crate::model::CorePriors;
use crate::runner::ChainSettings;
use crate::sampler::{PriorConfig, PriorHyper};
use crate::synth::SimDesign;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorKind {
    Mgp,
    Cusp,
    Ibp,
}

impl PriorKind {
    pub fn name(self) -> &'static str {
        match self {
            PriorKind::Mgp => "mgp",
            PriorKind::Cusp => "cusp",
            PriorKind::Ibp => "ibp",
        }
    }

    /// Chain length and burn-in used when the configuration does not set them.
    pub fn default_iterations(self) -> (usize, usize) {
        match self {
            PriorKind::Mgp => (30_000, 10_000),
            PriorKind::Cusp | PriorKind::Ibp => (15_000, 5_000),
        }
    }
}

impl FromStr for PriorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mgp" => Ok(PriorKind::Mgp),
            "cusp" => Ok(PriorKind::Cusp),
            "ibp" => Ok(PriorKind::Ibp),
            other => Err(Error::Config(format!(
                "prior: expected mgp, cusp or ibp, got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Adaptation settings; `None` fields are chosen from the prior and the
/// data shape when the schedule is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptSettings {
    pub enabled: bool,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub gate: Option<usize>,
}

impl Default for AdaptSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha0: None,
            alpha1: None,
            gate: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub prior: PriorKind,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub chains: usize,
    pub replicates: usize,
    /// Benchmark grid as `(p, K_true)` pairs.
    pub designs: Vec<(usize, usize)>,
    /// Observations per synthetic dataset.
    pub observations: usize,
    pub loading_variance: f64,
    pub idio_true_shape: f64,
    pub idio_true_scale: f64,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub checkpoint_every: usize,
    pub write_traces: bool,
    pub sigma_prior: CorePriors,
    pub adapt: AdaptSettings,
    pub mgp: MgpHyper,
    pub cusp: CuspHyper,
    pub ibp: IbpHyper,
}

impl RunConfig {
    pub fn defaults(prior: PriorKind) -> Self {
        let (iterations, burn_in) = prior.default_iterations();
        Self {
            prior,
            iterations,
            burn_in,
            seed: 20_240_601,
            chains: 1,
            replicates: 10,
            designs: vec![(6, 2), (10, 3), (30, 5)],
            observations: 100,
            loading_variance: 9.0,
            idio_true_shape: 1.0,
            idio_true_scale: 0.25,
            data: None,
            out: PathBuf::from("infact-out"),
            checkpoint_every: 1000,
            write_traces: true,
            sigma_prior: CorePriors::default(),
            adapt: AdaptSettings::default(),
            mgp: MgpHyper::default(),
            cusp: CuspHyper::default(),
            ibp: IbpHyper::default(),
        }
    }

    /// Resolves a configuration from ordered `(key, value)` pairs; later
    /// pairs override earlier ones. The prior is read first because it picks
    /// the iteration defaults.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let prior = pairs
            .iter()
            .rev()
            .find(|(k, _)| k.as_ref().trim() == "prior")
            .map(|(_, v)| v.as_ref().parse())
            .transpose()?
            .unwrap_or(PriorKind::Cusp);
        let mut cfg = Self::defaults(prior);
        let mut unknown = BTreeSet::new();
        for (k, v) in pairs {
            let (k, v) = (k.as_ref().trim(), v.as_ref().trim());
            match cfg.set(k, v) {
                Ok(true) => {}
                Ok(false) => {
                    unknown.insert(k.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        if !unknown.is_empty() {
            let list: Vec<String> = unknown.into_iter().collect();
            return Err(Error::Config(format!("unknown keys: {}", list.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(field_err("iterations", "must be >= 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(field_err(
                "burn_in",
                &format!(
                    "must be smaller than iterations ({} >= {})",
                    self.burn_in, self.iterations
                ),
            ));
        }
        if self.chains == 0 {
            return Err(field_err("chains", "must be >= 1"));
        }
        if self.replicates == 0 {
            return Err(field_err("replicates", "must be >= 1"));
        }
        if self.checkpoint_every == 0 {
            return Err(field_err("checkpoint_every", "must be >= 1"));
        }
        if self.observations < 2 {
            return Err(field_err("observations", "must be >= 2"));
        }
        for &(p, k) in &self.designs {
            if p < 2 || k == 0 || k > p {
                return Err(field_err("designs", &format!("({p},{k}) needs p >= 2 and 1 <= K <= p")));
            }
        }
        for (name, v) in [
            ("loading_variance", self.loading_variance),
            ("idio_true_shape", self.idio_true_shape),
            ("idio_true_scale", self.idio_true_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field_err(name, "must be > 0"));
            }
        }
        if let Some(a1) = self.adapt.alpha1 {
            if a1.is_nan() || a1 >= 0.0 {
                return Err(field_err("adapt_alpha1", "must be < 0"));
            }
        }
        self.sigma_prior
            .validate()
            .map_err(|e| field_err("sigma_shape/sigma_scale", &e.to_string()))?;
        self.mgp.validate().map_err(|e| field_err("mgp_*", &e.to_string()))?;
        self.cusp.validate().map_err(|e| field_err("cusp_*", &e.to_string()))?;
        self.ibp.validate().map_err(|e| field_err("ibp_*", &e.to_string()))?;
        Ok(())
    }

    /// The selected prior with its hyperparameters.
    pub fn prior_config(&self) -> PriorConfig {
        let hyper = match self.prior {
            PriorKind::Mgp => PriorHyper::Mgp(self.mgp.clone()),
            PriorKind::Cusp => PriorHyper::Cusp(self.cusp.clone()),
            PriorKind::Ibp => PriorHyper::Ibp(self.ibp.clone()),
        };
        PriorConfig {
            hyper,
            core: self.sigma_prior.clone(),
        }
    }

    /// Adaptation schedule for data with `p` variables and `t` observations.
    /// MGP uses `(-0.5, -3e-4)` when `p < T` and `(-1, -5e-4)` otherwise;
    /// CUSP uses `(-1, -5e-4)`; the gate defaults to the burn-in. IBP has no
    /// schedule.
    pub fn schedule(&self, p: usize, t: usize) -> Option<AdaptationSchedule> {
        if !self.adapt.enabled || self.prior == PriorKind::Ibp {
            return None;
        }
        let (a0, a1) = match self.prior {
            PriorKind::Mgp if p < t => (-0.5, -3e-4),
            _ => (-1.0, -5e-4),
        };
        Some(AdaptationSchedule {
            alpha0: self.adapt.alpha0.unwrap_or(a0),
            alpha1: self.adapt.alpha1.unwrap_or(a1),
            burn_in_gate: self.adapt.gate.unwrap_or(self.burn_in),
        })
    }

    pub fn chain_settings(&self, p: usize, t: usize) -> ChainSettings {
        ChainSettings {
            prior: self.prior_config(),
            iterations: self.iterations,
            burn_in: self.burn_in,
            schedule: self.schedule(p, t),
        }
    }

    /// Benchmark designs carrying the configured data-generation settings.
    pub fn sim_designs(&self) -> Vec<SimDesign> {
        self.designs
            .iter()
            .map(|&(p, k)| SimDesign {
                p,
                k_true: k,
                observations: self.observations,
                loading_variance: self.loading_variance,
                idio_shape: self.idio_true_shape,
                idio_scale: self.idio_true_scale,
                replicates: self.replicates,
            })
            .collect()
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let m = &self.mgp;
        let c = &self.cusp;
        let b = &self.ibp;
        vec![
            ("prior", self.prior.to_string()),
            ("iterations", self.iterations.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("seed", self.seed.to_string()),
            ("chains", self.chains.to_string()),
            ("replicates", self.replicates.to_string()),
            ("designs", format_designs(&self.designs)),
            ("observations", self.observations.to_string()),
            ("loading_variance", self.loading_variance.to_string()),
            ("idio_true_shape", self.idio_true_shape.to_string()),
            ("idio_true_scale", self.idio_true_scale.to_string()),
            (
                "data",
                self.data.as_ref().map_or("none".into(), |p| p.display().to_string()),
            ),
            ("out", self.out.display().to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("write_traces", self.write_traces.to_string()),
            ("sigma_shape", self.sigma_prior.shape.to_string()),
            ("sigma_scale", self.sigma_prior.scale.to_string()),
            (
                "sigma_per_variable",
                format_per_variable(&self.sigma_prior.per_variable),
            ),
            ("adapt", self.adapt.enabled.to_string()),
            ("adapt_alpha0", opt(self.adapt.alpha0)),
            ("adapt_alpha1", opt(self.adapt.alpha1)),
            ("adapt_gate", opt(self.adapt.gate)),
            ("mgp_nu1", m.nu1.to_string()),
            ("mgp_nu2", m.nu2.to_string()),
            ("mgp_b1", m.b1.to_string()),
            ("mgp_b2", m.b2.to_string()),
            ("mgp_a_prior_shape", m.a_prior_shape.to_string()),
            ("mgp_a_prior_rate", m.a_prior_rate.to_string()),
            ("mgp_step_a1", m.s1.to_string()),
            ("mgp_step_a2", m.s2.to_string()),
            ("mgp_epsilon", m.epsilon.to_string()),
            ("mgp_prop_required", m.prop_required.to_string()),
            ("mgp_a1_init", m.a1_init.to_string()),
            ("mgp_a2_init", m.a2_init.to_string()),
            ("mgp_update_shapes", m.update_shapes.to_string()),
            ("mgp_max_factors", opt(m.max_factors)),
            ("mgp_initial_factors", opt(m.initial_factors)),
            ("cusp_alpha", c.alpha.to_string()),
            ("cusp_a_theta", c.a_theta.to_string()),
            ("cusp_b_theta", c.b_theta.to_string()),
            ("cusp_theta_inf", c.theta_inf.to_string()),
            (
                "cusp_slab",
                match c.slab {
                    SlabForm::Joint => "joint".into(),
                    SlabForm::Product => "product".into(),
                },
            ),
            ("cusp_initial_columns", opt(c.initial_columns)),
            ("cusp_max_columns", opt(c.max_columns)),
            ("ibp_a_beta", b.a_beta.to_string()),
            ("ibp_b_beta", b.b_beta.to_string()),
            ("ibp_a_alpha", b.a_alpha.to_string()),
            ("ibp_b_alpha", b.b_alpha.to_string()),
            ("ibp_nu", b.nu.to_string()),
            (
                "ibp_odds",
                match b.odds {
                    PriorOdds::OthersComplement => "others".into(),
                    PriorOdds::Exchangeable => "exchangeable".into(),
                    PriorOdds::Observations => "observations".into(),
                },
            ),
            ("ibp_initial_factors", opt(b.initial_factors)),
            ("ibp_alpha_init", opt(b.alpha_init)),
            ("ibp_update_alpha", b.update_alpha.to_string()),
            ("ibp_finite_pool", opt(b.finite_pool)),
        ]
    }

    /// Text form accepted by [`RunConfig::parse_str`].
    pub fn emit(&self) -> String {
        let mut s = String::from("# resolved run configuration\n");
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    // Ok(false) for an unknown key.
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "prior" => self.prior = v.parse()?,
            "iterations" => self.iterations = num(key, v)?,
            "burn_in" => self.burn_in = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "chains" => self.chains = num(key, v)?,
            "replicates" => self.replicates = num(key, v)?,
            "designs" => self.designs = parse_designs(v)?,
            "observations" => self.observations = num(key, v)?,
            "loading_variance" => self.loading_variance = num(key, v)?,
            "idio_true_shape" => self.idio_true_shape = num(key, v)?,
            "idio_true_scale" => self.idio_true_scale = num(key, v)?,
            "data" => self.data = if is_none(v) { None } else { Some(PathBuf::from(v)) },
            "out" => self.out = PathBuf::from(v),
            "checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "write_traces" => self.write_traces = num(key, v)?,
            "sigma_shape" => self.sigma_prior.shape = num(key, v)?,
            "sigma_scale" => self.sigma_prior.scale = num(key, v)?,
            "sigma_per_variable" => self.sigma_prior.per_variable = parse_per_variable(v)?,
            "adapt" => self.adapt.enabled = num(key, v)?,
            "adapt_alpha0" => self.adapt.alpha0 = opt_num(key, v)?,
            "adapt_alpha1" => self.adapt.alpha1 = opt_num(key, v)?,
            "adapt_gate" => self.adapt.gate = opt_num(key, v)?,
            "mgp_nu1" => self.mgp.nu1 = num(key, v)?,
            "mgp_nu2" => self.mgp.nu2 = num(key, v)?,
            "mgp_b1" => self.mgp.b1 = num(key, v)?,
            "mgp_b2" => self.mgp.b2 = num(key, v)?,
            "mgp_a_prior_shape" => self.mgp.a_prior_shape = num(key, v)?,
            "mgp_a_prior_rate" => self.mgp.a_prior_rate = num(key, v)?,
            "mgp_step_a1" => self.mgp.s1 = num(key, v)?,
            "mgp_step_a2" => self.mgp.s2 = num(key, v)?,
            "mgp_epsilon" => self.mgp.epsilon = num(key, v)?,
            "mgp_prop_required" => self.mgp.prop_required = num(key, v)?,
            "mgp_a1_init" => self.mgp.a1_init = num(key, v)?,
            "mgp_a2_init" => self.mgp.a2_init = num(key, v)?,
            "mgp_update_shapes" => self.mgp.update_shapes = num(key, v)?,
            "mgp_max_factors" => self.mgp.max_factors = opt_num(key, v)?,
            "mgp_initial_factors" => self.mgp.initial_factors = opt_num(key, v)?,
            "cusp_alpha" => self.cusp.alpha = num(key, v)?,
            "cusp_a_theta" => self.cusp.a_theta = num(key, v)?,
            "cusp_b_theta" => self.cusp.b_theta = num(key, v)?,
            "cusp_theta_inf" => self.cusp.theta_inf = num(key, v)?,
            "cusp_slab" => {
                self.cusp.slab = match v {
                    "joint" => SlabForm::Joint,
                    "product" => SlabForm::Product,
                    _ => return Err(field_err(key, &format!("expected joint or product, got '{v}'"))),
                }
            }
            "cusp_initial_columns" => self.cusp.initial_columns = opt_num(key, v)?,
            "cusp_max_columns" => self.cusp.max_columns = opt_num(key, v)?,
            "ibp_a_beta" => self.ibp.a_beta = num(key, v)?,
            "ibp_b_beta" => self.ibp.b_beta = num(key, v)?,
            "ibp_a_alpha" => self.ibp.a_alpha = num(key, v)?,
            "ibp_b_alpha" => self.ibp.b_alpha = num(key, v)?,
            "ibp_nu" => self.ibp.nu = num(key, v)?,
            "ibp_odds" => {
                self.ibp.odds = match v {
                    "others" => PriorOdds::OthersComplement,
                    "exchangeable" => PriorOdds::Exchangeable,
                    "observations" => PriorOdds::Observations,
                    _ => {
                        return Err(field_err(
                            key,
                            &format!("expected others, exchangeable or observations, got '{v}'"),
                        ))
                    }
                }
            }
            "ibp_initial_factors" => self.ibp.initial_factors = opt_num(key, v)?,
            "ibp_alpha_init" => self.ibp.alpha_init = opt_num(key, v)?,
            "ibp_update_alpha" => self.ibp.update_alpha = num(key, v)?,
            "ibp_finite_pool" => self.ibp.finite_pool = opt_num(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses `6:2, 10:3` (also accepts `6x2`).
pub fn parse_designs(v: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for item in v.split(|c: char| c == ',' || c == ';' || c.is_whitespace()) {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let (p, k) = item
            .split_once([':', 'x'])
            .ok_or_else(|| field_err("designs", &format!("expected p:K, got '{item}'")))?;
        out.push((num("designs", p.trim())?, num("designs", k.trim())?));
    }
    Ok(out)
}

pub fn format_designs(d: &[(usize, usize)]) -> String {
    d.iter().map(|(p, k)| format!("{p}:{k}")).collect::<Vec<_>>().join(",")
}

fn format_per_variable(pv: &Option<Vec<(f64, f64)>>) -> String {
    match pv {
        None => "none".into(),
        Some(v) => v.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(","),
    }
}

fn parse_per_variable(v: &str) -> Result<Option<Vec<(f64, f64)>>> {
    if is_none(v) {
        return Ok(None);
    }
    let mut out = Vec::new();
    for item in v.split(',') {
        let (a, b) = item
            .trim()
            .split_once(':')
            .ok_or_else(|| field_err("sigma_per_variable", &format!("expected shape:scale, got '{item}'")))?;
        out.push((
            num("sigma_per_variable", a.trim())?,
            num("sigma_per_variable", b.trim())?,
        ));
    }
    Ok(Some(out))
}

fn is_none(v: &str) -> bool {
    matches!(v, "" | "none" | "auto")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or("auto".into(), |x| x.to_string())
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| field_err(key, &format!("cannot parse '{v}'")))
}

fn opt_num<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if is_none(v) {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn field_err(field: &str, msg: &str) -> Error {
    Error::Config(format!("{field}: {msg}"))
}
