use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use sketch_ipm::ipm::{InnerIterPolicy, IpmConfig};
use sketch_ipm::sketch::SketchKind;
use sketch_ipm::solvers::InnerSolverKind;

/// Solver settings shared by `solve` and `compare`.
///
/// Precedence is flag, then config file, then built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Inner solver: pcg, cg, richardson, sd or direct
    #[arg(long)]
    pub solver: Option<InnerSolverKind>,
    /// Centering parameter, in (0, 0.8)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Neighborhood width, in (0, 1)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Stop once mu falls to this value
    #[arg(long)]
    pub eps: Option<f64>,
    /// Relative tolerance of the inner solver
    #[arg(long = "tol-cg")]
    pub tol_cg: Option<f64>,
    /// Sketch width
    #[arg(long)]
    pub w: Option<usize>,
    /// Nonzeros per sketch row
    #[arg(long)]
    pub s: Option<usize>,
    /// Target preconditioner distortion, in (0, 1)
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Sketch RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Outer iteration limit
    #[arg(long = "max-outer")]
    pub max_outer: Option<usize>,
    /// Sketch family: sparse or gaussian
    #[arg(long)]
    pub sketch: Option<SketchKind>,
    /// Fixed inner iteration count instead of the derived one
    #[arg(long = "inner-iters")]
    pub inner_iters: Option<usize>,
    /// Stop on mu <= eps * mu0 instead of mu <= eps
    #[arg(long = "relative-eps")]
    pub relative_eps: bool,
    /// Leave wall_ms empty so that metrics are reproducible byte for byte
    #[arg(long)]
    pub deterministic: bool,
    /// File of key = value lines using the flag names above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl SolverArgs {
    pub fn build(&self) -> Result<IpmConfig> {
        let mut cfg = IpmConfig::default();
        if let Some(path) = &self.config {
            apply_file(&mut cfg, path)?;
        }
        self.apply_flags(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_flags(&self, cfg: &mut IpmConfig) {
        if let Some(v) = self.solver {
            cfg.solver = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.eps {
            cfg.epsilon = v;
        }
        if let Some(v) = self.tol_cg {
            cfg.tol_cg = v;
        }
        if let Some(v) = self.w {
            cfg.sketch_w = Some(v);
        }
        if let Some(v) = self.s {
            cfg.sketch_s = Some(v);
        }
        if let Some(v) = self.zeta {
            cfg.zeta = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_outer {
            cfg.max_outer = v;
        }
        if let Some(v) = self.sketch {
            cfg.sketch_kind = v;
        }
        if let Some(v) = self.inner_iters {
            cfg.inner_iters = InnerIterPolicy::Fixed(v);
        }
        if self.relative_eps {
            cfg.relative_epsilon = true;
        }
        if self.deterministic {
            cfg.record_wall_time = false;
        }
    }
}

fn apply_file(cfg: &mut IpmConfig, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    apply_text(cfg, &text).with_context(|| format!("in config {}", path.display()))
}

pub fn apply_text(cfg: &mut IpmConfig, text: &str) -> Result<()> {
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`", idx + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        apply_key(cfg, &key, value).with_context(|| format!("line {}: key `{key}`", idx + 1))?;
    }
    Ok(())
}

fn apply_key(cfg: &mut IpmConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "solver" => cfg.solver = value.parse()?,
        "sigma" => cfg.sigma = value.parse()?,
        "gamma" => cfg.gamma = value.parse()?,
        "eps" | "epsilon" => cfg.epsilon = value.parse()?,
        "tol-cg" => cfg.tol_cg = value.parse()?,
        "w" => cfg.sketch_w = Some(value.parse()?),
        "s" => cfg.sketch_s = Some(value.parse()?),
        "zeta" => cfg.zeta = value.parse()?,
        "delta" => cfg.delta = Some(value.parse()?),
        "seed" => cfg.seed = value.parse()?,
        "max-outer" => cfg.max_outer = value.parse()?,
        "sketch" => cfg.sketch_kind = value.parse()?,
        "inner-iters" => cfg.inner_iters = InnerIterPolicy::Fixed(value.parse()?),
        "cg-max-iters" => cfg.cg_max_iters = Some(value.parse()?),
        "initial-y" => cfg.initial_y = value.parse()?,
        "relative-eps" => cfg.relative_epsilon = value.parse()?,
        "deterministic" => cfg.record_wall_time = !value.parse::<bool>()?,
        _ => bail!("unknown key"),
    }
    Ok(())
}
