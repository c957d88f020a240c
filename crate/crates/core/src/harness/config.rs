use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::OmpBudgets;
use crate::channel::{AngleLayout, GainModel, GroupScenario};
use crate::error::{Error, Result};
use crate::offgrid::OffgridStepConfig;
use crate::steering::ArrayGeometry;
use crate::vbi::{GammaVShape, Hyperparams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GeometrySpec {
    Ula { n: usize, spacing: f64 },
    Rect { nx: usize, ny: usize, dx: f64, dy: f64 },
}

impl GeometrySpec {
    pub fn build(&self) -> Result<ArrayGeometry> {
        match *self {
            GeometrySpec::Ula { n, spacing } => ArrayGeometry::ula(n, spacing),
            GeometrySpec::Rect { nx, ny, dx, dy } => ArrayGeometry::rectangular(nx, ny, dx, dy),
        }
    }

    pub fn n_antennas(&self) -> usize {
        match *self {
            GeometrySpec::Ula { n, .. } => n,
            GeometrySpec::Rect { nx, ny, .. } => nx * ny,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    Pilots,
    SnrDb,
    Groups,
    AngularSpread,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Pilots => "T",
            SweepVar::SnrDb => "snr_db",
            SweepVar::Groups => "G",
            SweepVar::AngularSpread => "angular_spread",
        }
    }
}

impl FromStr for SweepVar {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "T" | "pilots" => Ok(SweepVar::Pilots),
            "snr_db" | "snr" => Ok(SweepVar::SnrDb),
            "G" | "groups" => Ok(SweepVar::Groups),
            "angular_spread" => Ok(SweepVar::AngularSpread),
            _ => Err(format!("unknown sweep variable '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Proposed,
    GroupOnly,
    Common,
    IndividualSbl,
    JointOmp,
    Genie,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Proposed,
        Method::GroupOnly,
        Method::Common,
        Method::IndividualSbl,
        Method::JointOmp,
        Method::Genie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::GroupOnly => "group_only",
            Method::Common => "common",
            Method::IndividualSbl => "individual_sbl",
            Method::JointOmp => "joint_omp",
            Method::Genie => "genie",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

/// Everything needed to reproduce one Monte Carlo sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: GroupScenario,
    pub geometry: GeometrySpec,
    pub n_pilots: usize,
    pub snr_db: f64,
    pub power: f64,
    /// Engine settings; `mode` is overridden per method.
    pub hyper: Hyperparams,
    /// Budgets for the joint OMP baseline; `None` derives them from the scenario.
    pub omp: Option<OmpBudgets>,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub n_trials: usize,
    pub base_seed: u64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    /// Desk-scale profile.
    fn default() -> Self {
        ExperimentConfig {
            scenario: GroupScenario::default(),
            geometry: GeometrySpec::Ula { n: 32, spacing: 0.5 },
            n_pilots: 24,
            snr_db: 10.0,
            power: 1.0,
            hyper: Hyperparams {
                offgrid: Some(OffgridStepConfig::default()),
                ..Hyperparams::default()
            },
            omp: None,
            sweep: SweepVar::Pilots,
            values: vec![24.0],
            methods: vec![Method::Proposed, Method::GroupOnly, Method::IndividualSbl],
            n_trials: 200,
            base_seed: 0,
            output: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep value list is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        for &v in &self.values {
            let integral = matches!(self.sweep, SweepVar::Pilots | SweepVar::Groups);
            if !v.is_finite() || (integral && (v < 1.0 || v.fract() != 0.0)) {
                return Err(Error::Config(format!("bad {} value {v}", self.sweep.name())));
            }
        }
        self.scenario.validate()?;
        self.hyper.validate()?;
        self.geometry.build()?;
        Ok(())
    }

    /// Copy with the sweep variable set to `value`.
    pub fn at(&self, value: f64) -> ExperimentConfig {
        let mut c = self.clone();
        match self.sweep {
            SweepVar::Pilots => c.n_pilots = value as usize,
            SweepVar::SnrDb => c.snr_db = value,
            SweepVar::Groups => c.hyper.n_groups = value as usize,
            SweepVar::AngularSpread => c.scenario.angular_spread_deg = value,
        }
        c
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parse `key = value` lines over the desk-scale defaults. `#` starts a
    /// comment; lists are comma-separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            c.set(key, value).map_err(err)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse '{v}'"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        fn flag(key: &str, v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "on" | "yes" => Ok(true),
                "false" | "off" | "no" => Ok(false),
                _ => Err(format!("{key}: expected true or false, got '{v}'")),
            }
        }
        let s = &mut self.scenario;
        let h = &mut self.hyper;
        match key {
            "geometry" => {
                let f: Vec<&str> = value.split_whitespace().collect();
                self.geometry = match f.as_slice() {
                    ["ula", n] => GeometrySpec::Ula { n: num(key, n)?, spacing: 0.5 },
                    ["ula", n, d] => GeometrySpec::Ula { n: num(key, n)?, spacing: num(key, d)? },
                    ["rect", nx, ny] => GeometrySpec::Rect { nx: num(key, nx)?, ny: num(key, ny)?, dx: 0.5, dy: 0.5 },
                    ["rect", nx, ny, dx, dy] => GeometrySpec::Rect {
                        nx: num(key, nx)?,
                        ny: num(key, ny)?,
                        dx: num(key, dx)?,
                        dy: num(key, dy)?,
                    },
                    _ => return Err(format!("geometry: expected 'ula N [d]' or 'rect NX NY [DX DY]', got '{value}'")),
                }
            }
            "true_groups" => s.n_groups = num(key, value)?,
            "users" => s.n_users = num(key, value)?,
            "shared_clusters" => s.shared_clusters = num(key, value)?,
            "individual_clusters" => s.individual_clusters = num(key, value)?,
            "subpaths" => s.subpaths_per_cluster = num(key, value)?,
            "angular_spread" => s.angular_spread_deg = num(key, value)?,
            "max_elevation" => s.max_elevation_deg = num(key, value)?,
            "layout" => {
                let f: Vec<&str> = value.split_whitespace().collect();
                s.layout = match f.as_slice() {
                    ["clustered"] => AngleLayout::Clustered,
                    ["on_grid", n] => AngleLayout::OnGrid { grid_points: num(key, n)? },
                    ["off_grid", n] => AngleLayout::OffGrid { grid_points: num(key, n)? },
                    _ => return Err(format!("layout: expected clustered, 'on_grid N' or 'off_grid N', got '{value}'")),
                }
            }
            "gains" => {
                s.gains = match value {
                    "gaussian" => GainModel::ComplexGaussian,
                    "unit" => GainModel::UnitModulus,
                    _ => return Err(format!("gains: expected gaussian or unit, got '{value}'")),
                }
            }
            "pilots" => self.n_pilots = num(key, value)?,
            "snr_db" => self.snr_db = num(key, value)?,
            "power" => self.power = num(key, value)?,
            "groups" => h.n_groups = num(key, value)?,
            "grid_points" => h.grid_points = Some(num(key, value)?),
            "max_iters" => h.max_iters = num(key, value)?,
            "tol" => h.tol = num(key, value)?,
            "a" => h.a = num(key, value)?,
            "b" => h.b = num(key, value)?,
            "rho" => h.rho = num(key, value)?,
            "support_threshold" => h.support_threshold = num(key, value)?,
            "gamma_v_shape" => {
                h.gamma_v_shape = match value {
                    "per_user" => GammaVShape::PerUser,
                    "pooled" => GammaVShape::Pooled,
                    _ => return Err(format!("gamma_v_shape: expected per_user or pooled, got '{value}'")),
                }
            }
            "offgrid" => h.offgrid = flag(key, value)?.then(OffgridStepConfig::default),
            "omp_budgets" => {
                let b: Vec<usize> = list(key, value)?;
                let [common, individual] = b[..] else {
                    return Err("omp_budgets: expected 'common, individual'".into());
                };
                self.omp = Some(OmpBudgets { common, individual });
            }
            "sweep" => self.sweep = value.parse()?,
            "values" => self.values = list(key, value)?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(|m| m.trim().parse())
                    .collect::<std::result::Result<_, _>>()?
            }
            "trials" => self.n_trials = num(key, value)?,
            "seed" => self.base_seed = num(key, value)?,
            "output" => self.output = PathBuf::from(value),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }
}

/// Named large-scale sweeps.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let large = ExperimentConfig {
        scenario: GroupScenario {
            n_groups: 3,
            n_users: 60,
            ..GroupScenario::default()
        },
        geometry: GeometrySpec::Ula { n: 80, spacing: 0.5 },
        n_pilots: 60,
        snr_db: 0.0,
        hyper: Hyperparams {
            n_groups: 3,
            offgrid: Some(OffgridStepConfig::default()),
            ..Hyperparams::default()
        },
        sweep: SweepVar::Pilots,
        values: (30..=70).step_by(5).map(f64::from).collect(),
        methods: vec![
            Method::Proposed,
            Method::GroupOnly,
            Method::Common,
            Method::IndividualSbl,
            Method::JointOmp,
            Method::Genie,
        ],
        output: PathBuf::from(format!("results/{name}")),
        ..ExperimentConfig::default()
    };
    let snr = |ls, lv| {
        let mut c = large.clone();
        c.scenario.n_groups = 4;
        c.scenario.n_users = 50;
        c.scenario.shared_clusters = ls;
        c.scenario.individual_clusters = lv;
        c.hyper.n_groups = 4;
        c.sweep = SweepVar::SnrDb;
        c.values = vec![-10.0, -6.0, -2.0, 2.0, 6.0, 10.0];
        c
    };
    let cfg = match name {
        "fig2a" => ExperimentConfig {
            scenario: GroupScenario {
                shared_clusters: 4,
                individual_clusters: 0,
                ..large.scenario.clone()
            },
            ..large
        },
        "fig2b" => ExperimentConfig {
            scenario: GroupScenario {
                shared_clusters: 2,
                individual_clusters: 2,
                ..large.scenario.clone()
            },
            ..large
        },
        "fig3a" => snr(3, 0),
        "fig3b" => snr(2, 1),
        "fig6" => {
            let mut c = large.clone();
            c.geometry = GeometrySpec::Ula { n: 100, spacing: 0.5 };
            c.scenario.n_groups = 4;
            c.scenario.n_users = 50;
            c.scenario.shared_clusters = 2;
            c.scenario.individual_clusters = 1;
            c.sweep = SweepVar::Groups;
            c.values = vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0];
            c
        }
        _ => return Err(Error::Config(format!("unknown preset '{name}' (fig2a, fig2b, fig3a, fig3b, fig6)"))),
    };
    cfg.validate()?;
    Ok(cfg)
}
