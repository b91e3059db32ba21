//! JSON run configuration and the assembled problem it describes.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::SimConfig;
use crate::field::ScalarField;
use crate::geometry::{build_domain, build_domain_with_samples, BoundaryData, DomainSpec, Point, Shape};
use crate::grid::{build_grid, Grid};
use crate::projection::ProjectionOptions;
use crate::source::{discretize_source, SourceSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: DomainConfig,
    #[serde(default)]
    pub phi: PhiSpec,
    pub source: SourceConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Inferred from the shape when absent (intervals are 1D, everything else 2D).
    #[serde(default)]
    pub dimension: Option<usize>,
    pub shape: Shape,
    /// Boundary sample count; defaults to `max(256, ceil(perimeter / h))` in 2D.
    #[serde(default)]
    pub m: Option<usize>,
}

/// Wall heights on the boundary samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiSpec {
    Constant { value: f64 },
    /// One height per boundary sample, in sampling order.
    Samples { values: Vec<f64> },
    /// `offset + slope . y`.
    Affine { offset: f64, slope: Point },
}

impl Default for PhiSpec {
    fn default() -> Self {
        PhiSpec::Constant { value: 0.0 }
    }
}

/// A named analytic density, or per-cell values from a CSV file with rows
/// `x[,y],value` (a header line is allowed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceConfig {
    Csv { csv: String },
    Named(SourceSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Defaults to `h / 4`.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub snapshot_stride: usize,
    pub steady_tol: f64,
    pub stop_at_steady: bool,
    pub max_sweeps: usize,
    pub tol_change: f64,
    pub extrapolate_every: usize,
    /// Number of randomly chosen cells recorded after every step.
    pub probes: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        let p = ProjectionOptions::default();
        Self {
            dt: None,
            t_end: 1.0,
            snapshot_stride: 10,
            steady_tol: 1e-8,
            stop_at_steady: true,
            max_sweeps: p.max_sweeps,
            tol_change: p.tol_change,
            extrapolate_every: p.extrapolate_every,
            probes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Exponent used for the lower density estimate.
    pub alpha: f64,
    pub dens_upper: Option<f64>,
    /// Sup-norm distance to `u_phi` that counts as arrival; defaults to `3h`.
    pub finite_time_tol: Option<f64>,
    /// Number of seeded trigonometric test functions for residual checks.
    pub test_functions: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            dens_upper: None,
            finite_time_tol: None,
            test_functions: 10,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension.unwrap_or(match self.domain.shape {
            Shape::Interval { .. } => 1,
            _ => 2,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.grid.h;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("grid.h = {h} must be positive")));
        }
        if let Some(dt) = self.evolution.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("evolution.dt = {dt} must be positive")));
            }
        }
        let e = &self.evolution;
        if !(e.t_end >= 0.0 && e.t_end.is_finite()) {
            return Err(Error::Config(format!("evolution.t_end = {} must be nonnegative", e.t_end)));
        }
        if e.snapshot_stride == 0 || e.max_sweeps == 0 {
            return Err(Error::Config("snapshot_stride and max_sweeps must be positive".into()));
        }
        if !(e.tol_change > 0.0 && e.steady_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if let PhiSpec::Constant { value } = self.phi {
            if !(value >= 0.0) {
                return Err(Error::Config(format!("phi = {value} must be nonnegative")));
            }
        }
        if let SourceConfig::Named(s) = &self.source {
            s.validate(self.dimension()).map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(0.0..1.0).contains(&self.analysis.alpha) {
            return Err(Error::Config(format!("analysis.alpha = {} must lie in [0, 1)", self.analysis.alpha)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.evolution.dt.unwrap_or(self.grid.h / 4.0)
    }

    pub fn finite_time_tol(&self) -> f64 {
        self.analysis.finite_time_tol.unwrap_or(3.0 * self.grid.h)
    }

    pub fn projection_options(&self) -> ProjectionOptions {
        ProjectionOptions {
            max_sweeps: self.evolution.max_sweeps,
            tol_change: self.evolution.tol_change,
            extrapolate_every: self.evolution.extrapolate_every,
            ..Default::default()
        }
    }

    /// Evolution settings with probes drawn from `seed`.
    pub fn sim_config(&self, grid: &Grid, seed: u64) -> SimConfig {
        use rand::seq::index::sample;
        use rand::SeedableRng;
        let e = &self.evolution;
        let mut c = SimConfig::new(self.dt(), e.t_end);
        c.snapshot_stride = e.snapshot_stride;
        c.steady_tol = e.steady_tol;
        c.stop_at_steady = e.stop_at_steady;
        c.projection = self.projection_options();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = e.probes.min(grid.len());
        let mut cells = sample(&mut rng, grid.len(), k).into_vec();
        cells.sort_unstable();
        c.probe_cells = cells;
        c
    }
}

/// Domain, boundary data, grid and source assembled from a [`Config`].
#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: DomainSpec,
    pub boundary: BoundaryData,
    pub grid: Arc<Grid>,
    pub f: ScalarField,
    /// The analytic source, when one was named.
    pub source: Option<SourceSpec>,
}

impl Problem {
    /// `base` resolves relative CSV paths.
    pub fn build(config: &Config, base: &Path) -> Result<Self> {
        config.validate()?;
        let n = config.dimension();
        let h = config.grid.h;
        let probe = DomainSpec {
            dimension: n,
            shape: config.domain.shape.clone(),
            boundary_samples: 2,
        };
        probe.validate()?;
        let m = match n {
            1 => 2,
            _ => config.domain.m.unwrap_or_else(|| probe.default_sample_count(h)),
        };
        let spec = DomainSpec::new(n, config.domain.shape.clone(), m)?;
        let (domain, boundary) = match &config.phi {
            PhiSpec::Constant { value } => build_domain(spec, |_| *value)?,
            PhiSpec::Affine { offset, slope } => build_domain(spec, |y| offset + slope[0] * y[0] + slope[1] * y[1])?,
            PhiSpec::Samples { values } => build_domain_with_samples(spec, values.clone())?,
        };
        let grid = Arc::new(build_grid(&domain, h)?);
        let (f, source) = match &config.source {
            SourceConfig::Named(s) => (discretize_source(&domain, &grid, |p| s.eval(n, p))?, Some(s.clone())),
            SourceConfig::Csv { csv } => (read_source_csv(&base.join(csv), &grid)?, None),
        };
        Ok(Self {
            domain,
            boundary,
            grid,
            f,
            source,
        })
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension
    }

    /// Pointwise density when the source is analytic.
    pub fn f_fn(&self) -> Option<impl Fn(Point) -> f64 + '_> {
        let n = self.dimension();
        self.source.as_ref().map(move |s| move |p: Point| s.eval(n, p))
    }

    /// Radial profile when the problem is a radial case: unit ball (or
    /// interval `(-1, 1)`) centred at the origin, zero walls, radial source.
    pub fn radial_profile(&self) -> Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>> {
        let unit = match &self.domain.shape {
            Shape::Interval { a, b } => *a == -1.0 && *b == 1.0,
            Shape::Ball { center, radius } => *center == [0.0, 0.0] && *radius == 1.0,
            _ => false,
        };
        if !unit || self.boundary.phi.iter().any(|&p| p != 0.0) {
            return None;
        }
        self.source.as_ref()?.radial_profile(self.dimension())
    }
}

fn read_source_csv(path: &Path, grid: &Arc<Grid>) -> Result<ScalarField> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read source file {}: {e}", path.display())))?;
    let dim = grid.dimension();
    let mut values = vec![f64::NAN; grid.len()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let Ok(fields) = fields else {
            if lineno == 0 {
                continue; // header
            }
            return Err(Error::Config(format!("{}:{}: not numeric", path.display(), lineno + 1)));
        };
        if fields.len() != dim + 1 {
            return Err(Error::Config(format!("{}:{}: expected {} columns", path.display(), lineno + 1, dim + 1)));
        }
        let p = [fields[0], if dim == 2 { fields[1] } else { 0.0 }];
        let cell = grid
            .locate(p)
            .ok_or_else(|| Error::Config(format!("{}:{}: point {p:?} is not a grid cell", path.display(), lineno + 1)))?;
        values[cell] = fields[dim];
    }
    if let Some(c) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Config(format!("{}: no value for cell at {:?}", path.display(), grid.coord(c))));
    }
    if let Some(v) = values.iter().find(|&&v| v < 0.0) {
        return Err(Error::Data(format!("source value {v} is negative")));
    }
    ScalarField::new(grid.clone(), values)
}
