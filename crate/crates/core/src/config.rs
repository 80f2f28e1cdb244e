//! Problem configuration and its flat `key = value` file format.
//!
//! Every key is optional; missing keys take the benchmark defaults (1 m bar,
//! E = 1 GPa, ρ = 1000 kg/m³, h = 1 mm, Δt = 0.25 µs, t ∈ [0, 1 ms], interface
//! at 0.6 m). Unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem1d::{build_uniform_mesh, MaterialParams, Mesh1D};
use crate::newmark::NewmarkParams;

/// How the interface traction is recovered from a full-order subdomain state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TractionMethod {
    #[default]
    ElementStress,
    ResidualReaction,
}

/// Which element's stress supplies the traction series a reduced model trains on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingTraction {
    /// Minus the traction of the element across Γ, as received online.
    #[default]
    NeighborElement,
    /// The subdomain's own element next to Γ.
    OwnElement,
}

/// When the transmission data λ is zeroed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaReset {
    /// At the first Schwarz iteration of every time window.
    #[default]
    EveryWindow,
    /// Only before the first window; later windows start from the last λ.
    InitialOnly,
}

/// Treatment of a subdomain whose interface node is prescribed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirichletInterface {
    /// The prescribed node enters the free equations through stiffness only;
    /// its velocity and acceleration are taken from the neighbor's interface node.
    #[default]
    Condensed,
    /// Full effective-stiffness coupling; velocity and acceleration follow
    /// from the Newmark corrector.
    Consistent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub youngs_modulus: f64,
    pub density: f64,
    pub area: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub h: f64,
    pub dt: f64,
    pub t0: f64,
    pub tf: f64,
    pub ic_amplitude: f64,
    pub ic_center: f64,
    pub ic_width: f64,
    pub dirichlet_left: f64,
    pub dirichlet_right: f64,
    pub interface: f64,
    pub schwarz_tol: f64,
    pub max_schwarz_iters: usize,
    pub traction_method: TractionMethod,
    pub lambda_reset: LambdaReset,
    pub dirichlet_interface: DirichletInterface,
    pub training_traction: TrainingTraction,
    pub lambda_reg: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            youngs_modulus: 1.0e9,
            density: 1000.0,
            area: 1.0,
            x_left: 0.0,
            x_right: 1.0,
            h: 1.0e-3,
            dt: 2.5e-7,
            t0: 0.0,
            tf: 1.0e-3,
            ic_amplitude: 0.005,
            ic_center: 0.5,
            ic_width: 0.02,
            dirichlet_left: 0.0,
            dirichlet_right: 0.0,
            interface: 0.6,
            schwarz_tol: 1.0e-8,
            max_schwarz_iters: 100,
            traction_method: TractionMethod::ElementStress,
            lambda_reset: LambdaReset::EveryWindow,
            dirichlet_interface: DirichletInterface::Condensed,
            training_traction: TrainingTraction::NeighborElement,
            lambda_reg: 1.0e-4,
        }
    }
}

impl ProblemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn material(&self) -> MaterialParams {
        MaterialParams {
            youngs_modulus: self.youngs_modulus,
            density: self.density,
            area: self.area,
        }
    }

    pub fn newmark(&self) -> Result<NewmarkParams> {
        NewmarkParams::average_acceleration(self.dt)
    }

    /// Number of time windows `(tf - t0) / dt`.
    pub fn n_steps(&self) -> usize {
        ((self.tf - self.t0) / self.dt).round() as usize
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        self.material()
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if !(self.t0 <= self.tf) {
            return Err(Error::InvalidConfig(format!(
                "t0 ({}) must not exceed tf ({})",
                self.t0, self.tf
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        let ratio = (self.tf - self.t0) / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "(tf - t0) / dt = {ratio} is not an integer"
            )));
        }
        if !(self.schwarz_tol > 0.0) {
            return Err(Error::InvalidConfig("schwarz_tol must be positive".into()));
        }
        if self.max_schwarz_iters == 0 {
            return Err(Error::InvalidConfig("max_schwarz_iters must be at least 1".into()));
        }
        if !(self.ic_width > 0.0) {
            return Err(Error::InvalidConfig("ic_width must be positive".into()));
        }
        if !(self.lambda_reg >= 0.0) {
            return Err(Error::InvalidConfig("lambda_reg must be non-negative".into()));
        }
        let mesh = self.full_mesh()?;
        if !(self.interface > self.x_left && self.interface < self.x_right) {
            return Err(Error::InvalidConfig(format!(
                "interface {} must lie strictly inside the bar",
                self.interface
            )));
        }
        if mesh.node_at(self.interface).is_none() {
            return Err(Error::InvalidConfig(format!(
                "interface {} does not coincide with a mesh node",
                self.interface
            )));
        }
        Ok(())
    }

    pub fn full_mesh(&self) -> Result<Mesh1D> {
        build_uniform_mesh(self.x_left, self.x_right, self.h)
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Meshes of the left and right subdomains; both contain the interface node.
    pub fn subdomain_meshes(&self) -> Result<(Mesh1D, Mesh1D)> {
        Ok((
            build_uniform_mesh(self.x_left, self.interface, self.h)?,
            build_uniform_mesh(self.interface, self.x_right, self.h)?,
        ))
    }

    /// Global node offset of each subdomain.
    pub fn subdomain_offsets(&self) -> Result<(usize, usize)> {
        let mesh = self.full_mesh()?;
        let gamma = mesh.node_at(self.interface).ok_or_else(|| {
            Error::InvalidConfig("interface does not coincide with a mesh node".into())
        })?;
        Ok((0, gamma))
    }

    /// Short stable digest of the configuration, used to tag outputs.
    pub fn digest(&self) -> String {
        crate::io::sha256_hex(self.to_toml_string().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_benchmark_defaults() {
        let cfg = ProblemConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ProblemConfig::default());
        assert_eq!(cfg.n_steps(), 4000);
        assert!((cfg.material().wave_speed() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = ProblemConfig::from_toml_str("alpha_12 = 1.0").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn overrides_and_enums_parse() {
        let cfg = ProblemConfig::from_toml_str(
            "tf = 2.5e-6\ntraction_method = \"residual-reaction\"\nlambda_reset = \"initial-only\"\ndirichlet_interface = \"consistent\"\ntraining_traction = \"own-element\"\n",
        )
        .unwrap();
        assert_eq!(cfg.n_steps(), 10);
        assert_eq!(cfg.traction_method, TractionMethod::ResidualReaction);
        assert_eq!(cfg.lambda_reset, LambdaReset::InitialOnly);
        assert_eq!(cfg.dirichlet_interface, DirichletInterface::Consistent);
        assert_eq!(cfg.training_traction, TrainingTraction::OwnElement);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ProblemConfig::from_toml_str("tf = -1.0").is_err());
        assert!(ProblemConfig::from_toml_str("dt = 3e-7").is_err());
        assert!(ProblemConfig::from_toml_str("interface = 0.6005").is_err());
        assert!(ProblemConfig::from_toml_str("schwarz_tol = 0.0").is_err());
        assert!(ProblemConfig::from_toml_str("density = 0.0").is_err());
    }

    #[test]
    fn zero_length_horizon_is_allowed() {
        let cfg = ProblemConfig::from_toml_str("tf = 0.0").unwrap();
        assert_eq!(cfg.n_steps(), 0);
    }

    #[test]
    fn round_trips_through_text() {
        let cfg = ProblemConfig {
            tf: 5e-4,
            ..ProblemConfig::default()
        };
        let back = ProblemConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn subdomain_meshes_share_interface() {
        let cfg = ProblemConfig::default();
        let (left, right) = cfg.subdomain_meshes().unwrap();
        assert_eq!(left.n_nodes(), 601);
        assert_eq!(right.n_nodes(), 401);
        assert_eq!(cfg.subdomain_offsets().unwrap(), (0, 600));
    }
}
