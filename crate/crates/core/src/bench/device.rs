//! Device, coupling, disorder and loss sections of a run configuration.

use crate::bench::config::RunConfig;
use crate::circuit::{derive_tight_binding, CircuitParams, DiagonalMode};
use crate::error::{Error, Result};
use crate::lattice::{CouplingProfile, DisorderRealization, LatticeModel, TightBindingParams};
use crate::openloss::{rate_from_t1, CrossTerm, LossModel};

#[derive(Debug, Clone)]
pub struct Device {
    pub model: LatticeModel,
    pub loss: LossModel,
    pub circuit: Option<CircuitParams>,
    pub warnings: Vec<String>,
}

impl Device {
    /// Same device without disorder.
    pub fn clean(&self) -> Result<LatticeModel> {
        LatticeModel::new(self.model.n, self.model.tb.clone(), self.model.profile.clone(), None)
    }
}

fn circuit_section(cfg: &RunConfig) -> Result<CircuitParams> {
    let s = "circuit";
    cfg.require(&[(s, "n"), (s, "l_g"), (s, "c_g"), (s, "c1"), (s, "c2")])?;
    let diagonal = match cfg.get_or(s, "diagonal", "site-dependent".to_string())?.as_str() {
        "site-dependent" => DiagonalMode::SiteDependent,
        "uniform" => DiagonalMode::Uniform,
        other => return Err(Error::validation(format!("circuit.diagonal: unknown mode '{other}'"))),
    };
    let p = CircuitParams {
        n: cfg.get(s, "n")?,
        l_g: cfg.get(s, "l_g")?,
        c_g: cfg.get(s, "c_g")?,
        c1: cfg.get(s, "c1")?,
        c2: cfg.get(s, "c2")?,
        c_long: cfg.list_or(s, "c_long", vec![])?,
        diagonal,
    };
    p.validate()?;
    Ok(p)
}

fn tight_binding_section(cfg: &RunConfig) -> Result<(usize, TightBindingParams)> {
    let s = "tight-binding";
    cfg.require(&[(s, "n"), (s, "omega_r"), (s, "j1"), (s, "j2")])?;
    let tb = TightBindingParams {
        omega_r: cfg.get(s, "omega_r")?,
        j1: cfg.get(s, "j1")?,
        j2: cfg.get(s, "j2")?,
        j_long: cfg.list_or(s, "j_long", vec![])?,
        z_r: cfg.get_opt(s, "z_r")?,
        c_sigma: cfg.get_opt(s, "c_sigma")?,
    };
    tb.validate()?;
    Ok((cfg.get(s, "n")?, tb))
}

pub fn coupling_section(cfg: &RunConfig) -> Result<CouplingProfile> {
    let s = "coupling";
    if !cfg.has_section(s) {
        return Err(Error::validation("missing config section [coupling]"));
    }
    match cfg.get_or(s, "profile", "explicit".to_string())?.as_str() {
        "explicit" => {
            cfg.require(&[(s, "start"), (s, "g")])?;
            CouplingProfile::new(cfg.get(s, "start")?, cfg.list(s, "g")?)
        }
        "gaussian" => {
            cfg.require(&[(s, "center"), (s, "width"), (s, "sigma"), (s, "g_bar")])?;
            CouplingProfile::truncated_gaussian(
                cfg.get(s, "center")?,
                cfg.get(s, "width")?,
                cfg.get(s, "sigma")?,
                cfg.get(s, "g_bar")?,
            )
        }
        other => Err(Error::validation(format!("coupling.profile: unknown kind '{other}'"))),
    }
}

pub fn loss_section(cfg: &RunConfig) -> Result<LossModel> {
    let s = "loss";
    cfg.require(&[(s, "kappa_int"), (s, "kappa_ext_l"), (s, "kappa_ext_r")])?;
    let kappa_q = match (cfg.has(s, "kappa_q"), cfg.has(s, "t1_q")) {
        (true, false) => cfg.get(s, "kappa_q")?,
        (false, true) => {
            let t1: f64 = cfg.get(s, "t1_q")?;
            if !(t1 > 0.0) {
                return Err(Error::validation("loss.t1_q must be positive"));
            }
            rate_from_t1(t1)
        }
        (true, true) => return Err(Error::validation("give either loss.kappa_q or loss.t1_q, not both")),
        (false, false) => return Err(Error::validation("missing config keys: loss.kappa_q (or loss.t1_q)")),
    };
    let cross = match cfg.get_or(s, "cross", "verbatim".to_string())?.as_str() {
        "verbatim" => CrossTerm::Verbatim,
        "textbook" => CrossTerm::Textbook,
        other => return Err(Error::validation(format!("loss.cross: unknown value '{other}'"))),
    };
    let loss = LossModel {
        kappa_int: cfg.get(s, "kappa_int")?,
        kappa_q,
        kappa_ext_l: cfg.get(s, "kappa_ext_l")?,
        kappa_ext_r: cfg.get(s, "kappa_ext_r")?,
        kappa_ext_lp: cfg.get_or(s, "kappa_ext_lp", 0.0)?,
        kappa_ext_rp: cfg.get_or(s, "kappa_ext_rp", 0.0)?,
        cross,
    };
    loss.validate()?;
    Ok(loss)
}

/// Build the device; `seed` is only needed when static disorder is requested.
pub fn load_device(cfg: &RunConfig, seed: Option<u64>) -> Result<Device> {
    let mut warnings = Vec::new();
    let (n, tb, circuit) = match (cfg.has_section("circuit"), cfg.has_section("tight-binding")) {
        (true, true) => {
            return Err(Error::validation("config defines both [circuit] and [tight-binding]; keep exactly one"))
        }
        (false, false) => return Err(Error::validation("config needs a [circuit] or a [tight-binding] section")),
        (true, false) => {
            let p = circuit_section(cfg)?;
            let red = derive_tight_binding(&p)?;
            warnings.extend(red.warnings.iter().cloned());
            (p.n, red.params, Some(p))
        }
        (false, true) => {
            let (n, tb) = tight_binding_section(cfg)?;
            (n, tb, None)
        }
    };
    let profile = coupling_section(cfg)?;
    let sigma = cfg.get_or("disorder", "sigma", 0.0)?;
    let disorder = if sigma > 0.0 {
        let seed = seed.ok_or_else(|| Error::validation("disorder.sigma > 0 needs a seed (run.seed or --seed)"))?;
        Some(DisorderRealization::gaussian(n, sigma, seed)?)
    } else {
        None
    };
    let model = LatticeModel::new(n, tb, profile, disorder)?;
    let loss = loss_section(cfg)?;
    Ok(Device { model, loss, circuit, warnings })
}
