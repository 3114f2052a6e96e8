use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taylor_lab::cross_section::{CrossSectionSpec, Family, Profile};
use taylor_lab::evolution::InitialDatum;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output root; TAYLOR_LAB_OUT and --out take precedence.
    pub out: String,
    /// Worker threads, 0 for the global pool.
    pub threads: usize,
    pub nu: f64,
    /// Center-manifold order N, also used for the remainder fit.
    pub order: usize,
    pub cross_section: CrossSectionCfg,
    pub shear: Profile,
    pub spectrum: SpectrumCfg,
    pub manifold: ManifoldCfg,
    pub grid: GridCfg,
    pub datum: InitialDatum,
    pub hypo: HypoCfg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossSectionCfg {
    /// "interval" or "rectangle".
    pub family: String,
    pub aspect: f64,
    pub modes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumCfg {
    pub points: usize,
    /// Sweep extent as a multiple of κ₀.
    pub extent: f64,
    pub eigenvalues: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldCfg {
    pub probes: usize,
    /// Attraction window is T_max = t_factor/μ₁.
    pub t_factor: f64,
    pub samples: usize,
    pub tau_max: f64,
    /// Viscosities whose coefficient tables must agree bit for bit.
    pub nu_pair: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridCfg {
    pub k: usize,
    /// X-extent; 0 sizes it from ν_td and T_max.
    pub length: f64,
    pub t0: f64,
    pub rho: f64,
    pub t_max: f64,
    /// Further viscosities run alongside `nu` for the ν_td comparison.
    pub extra_nu: Vec<f64>,
    pub regime_t_max: f64,
    pub regime_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypoCfg {
    /// 0 takes the spectral default.
    pub kappa0: f64,
    pub delta: f64,
    pub kappa1: f64,
    pub nus: Vec<f64>,
    pub samples: usize,
    pub t_max: f64,
    pub steps: usize,
    pub probes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            out: "runs".into(),
            threads: 0,
            nu: 0.1,
            order: 4,
            cross_section: CrossSectionCfg::default(),
            shear: Profile::cosine(),
            spectrum: SpectrumCfg::default(),
            manifold: ManifoldCfg::default(),
            grid: GridCfg::default(),
            datum: InitialDatum::Modulated {
                mass: 1.0,
                width: 1.0,
                amplitude: 0.5,
            },
            hypo: HypoCfg::default(),
        }
    }
}

impl Default for CrossSectionCfg {
    fn default() -> Self {
        CrossSectionCfg {
            family: "interval".into(),
            aspect: 1.0,
            modes: 16,
        }
    }
}

impl Default for SpectrumCfg {
    fn default() -> Self {
        SpectrumCfg {
            points: 64,
            extent: 2.0,
            eigenvalues: 6,
        }
    }
}

impl Default for ManifoldCfg {
    fn default() -> Self {
        ManifoldCfg {
            probes: 100,
            t_factor: 40.0,
            samples: 80,
            tau_max: 40.0,
            nu_pair: [0.05, 0.2],
        }
    }
}

impl Default for GridCfg {
    fn default() -> Self {
        GridCfg {
            k: 1024,
            length: 0.0,
            t0: 0.1,
            rho: 1.25,
            t_max: 100.0,
            extra_nu: vec![0.05],
            regime_t_max: 4.0,
            regime_steps: 40,
        }
    }
}

impl Default for HypoCfg {
    fn default() -> Self {
        HypoCfg {
            kappa0: 0.0,
            delta: 0.1,
            kappa1: 1.0,
            nus: vec![0.02, 0.05, 0.1],
            samples: 32,
            t_max: 50.0,
            steps: 50,
            probes: 1000,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Command-line values that override file keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub nu: Option<f64>,
    pub modes: Option<usize>,
    pub order: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.nu {
            self.nu = v;
        }
        if let Some(v) = o.modes {
            self.cross_section.modes = v;
        }
        if let Some(v) = o.order {
            self.order = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.threads {
            self.threads = v;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        let positive = |name: &str, v: f64| -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError(format!("{name} must be positive, got {v}")))
            }
        };
        positive("nu", self.nu)?;
        for v in self
            .grid
            .extra_nu
            .iter()
            .chain(&self.hypo.nus)
            .chain(&self.manifold.nu_pair)
        {
            positive("viscosity", *v)?;
        }
        if self.cross_section.modes == 0 || self.cross_section.modes > 256 {
            return err(format!(
                "modes must lie in 1..=256, got {}",
                self.cross_section.modes
            ));
        }
        match self.cross_section.family.as_str() {
            "interval" => {}
            "rectangle" => positive("cross_section.aspect", self.cross_section.aspect)?,
            other => return err(format!("unknown cross-section family {other:?}")),
        }
        if self.order == 0 || self.order > 12 {
            return err(format!("order must lie in 1..=12, got {}", self.order));
        }
        if self.spectrum.points < 2 || self.spectrum.eigenvalues == 0 {
            return err("spectrum.points >= 2 and spectrum.eigenvalues >= 1 required".into());
        }
        positive("spectrum.extent", self.spectrum.extent)?;
        if self.manifold.probes == 0 || self.manifold.samples < 4 {
            return err("manifold.probes >= 1 and manifold.samples >= 4 required".into());
        }
        if self.manifold.t_factor < 20.0 {
            return err(format!(
                "manifold.t_factor must be at least 20, got {}",
                self.manifold.t_factor
            ));
        }
        if self.manifold.tau_max < 10.0 {
            return err(format!(
                "manifold.tau_max must be at least 10, got {}",
                self.manifold.tau_max
            ));
        }
        if self.grid.k < 8 || self.grid.k % 2 != 0 {
            return err(format!(
                "grid.k must be even and at least 8, got {}",
                self.grid.k
            ));
        }
        if self.grid.length < 0.0 {
            return err("grid.length must be nonnegative".into());
        }
        positive("grid.t0", self.grid.t0)?;
        if !(self.grid.rho > 1.0) {
            return err(format!("grid.rho must exceed 1, got {}", self.grid.rho));
        }
        if !(self.grid.t_max >= 10.0 * self.grid.t0) {
            return err("grid.t_max must span at least a decade beyond grid.t0".into());
        }
        positive("grid.regime_t_max", self.grid.regime_t_max)?;
        if self.grid.regime_steps < 2 {
            return err("grid.regime_steps must be at least 2".into());
        }
        let width = match &self.datum {
            InitialDatum::Blob { width, mass }
            | InitialDatum::Modulated { width, mass, .. }
            | InitialDatum::Shifted { width, mass, .. } => {
                positive("datum.mass", *mass)?;
                *width
            }
        };
        positive("datum.width", width)?;
        if !(self.hypo.delta > 0.0 && self.hypo.delta < 0.25) {
            return err(format!(
                "hypo.delta must lie in (0, 1/4), got {}",
                self.hypo.delta
            ));
        }
        if self.hypo.kappa0 < 0.0 {
            return err("hypo.kappa0 must be nonnegative".into());
        }
        positive("hypo.kappa1", self.hypo.kappa1)?;
        positive("hypo.t_max", self.hypo.t_max)?;
        if self.hypo.samples < 2 || self.hypo.steps == 0 || self.hypo.probes == 0 {
            return err("hypo.samples >= 2, hypo.steps >= 1, hypo.probes >= 1 required".into());
        }
        Ok(())
    }

    pub fn cross_section_spec(&self) -> CrossSectionSpec {
        let mut spec = CrossSectionSpec::interval(self.cross_section.modes);
        if self.cross_section.family == "rectangle" {
            spec.family = Family::Rectangle {
                aspect: self.cross_section.aspect,
            };
        }
        spec
    }

    pub fn kappa0_override(&self) -> Option<f64> {
        (self.hypo.kappa0 > 0.0).then_some(self.hypo.kappa0)
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
