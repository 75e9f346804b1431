//! Run configuration, read from flat dotted-key TOML such as
//! `geometry.L = 6.283185307179586`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use torsionlab::adiabatic_lab::{Discretization, LabConfig, LabGeometry, RectangleParams, SweepGrid, REPORT_TAGS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    #[serde(rename = "L")]
    pub length: f64,
    pub k: usize,
    pub tau: f64,
    pub alpha: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = LabGeometry::default();
        Self {
            length: g.length,
            k: g.k,
            tau: g.tau,
            alpha: g.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationSection {
    #[serde(rename = "N")]
    pub nodes: usize,
    #[serde(rename = "fiberBasisSize")]
    pub fiber_basis: usize,
    #[serde(rename = "maxMode")]
    pub max_mode: usize,
    pub cutoff: usize,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        let d = Discretization::default();
        Self {
            nodes: d.nodes,
            fiber_basis: d.fiber_basis,
            max_mode: d.max_mode,
            cutoff: d.cutoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub epsilons: Vec<f64>,
    pub times: Vec<f64>,
    pub taus: Vec<f64>,
    pub verticals: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = SweepGrid::default();
        Self {
            epsilons: g.epsilons,
            times: g.times,
            taus: g.taus,
            verticals: g.verticals,
            sigmas: g.sigmas,
            alphas: g.alphas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RectangleSection {
    #[serde(rename = "A")]
    pub a_top: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub sigma: f64,
}

impl Default for RectangleSection {
    fn default() -> Self {
        let r = RectangleParams::default();
        Self {
            a_top: r.a_top,
            t0: r.t0,
            sigma: r.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    /// Fixed time of the large-time, supertrace and index checks.
    pub time: f64,
    /// Circle lengths of the torsion comparison.
    pub lengths: Vec<f64>,
}

impl Default for ChecksSection {
    fn default() -> Self {
        let c = LabConfig::default();
        Self {
            time: c.time,
            lengths: c.main_lengths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub discretization: DiscretizationSection,
    pub grids: GridSection,
    pub rectangle: RectangleSection,
    pub checks: ChecksSection,
    /// Per-check tolerance overrides keyed `"<tag>.<quantity>"`.
    pub tolerances: BTreeMap<String, f64>,
    pub output: OutputSection,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometrySection::default(),
            discretization: DiscretizationSection::default(),
            grids: GridSection::default(),
            rectangle: RectangleSection::default(),
            checks: ChecksSection::default(),
            tolerances: BTreeMap::new(),
            output: OutputSection::default(),
            seed: 7,
        }
    }
}

/// Tags of reports that only the `verify` command runs.
pub const VERIFY_ONLY_TAGS: [&str; 2] = ["clifford", "circle-torsion"];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("malformed configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn lab(&self) -> LabConfig {
        let g = &self.geometry;
        let d = &self.discretization;
        let s = &self.grids;
        LabConfig {
            geometry: LabGeometry {
                length: g.length,
                k: g.k,
                tau: g.tau,
                alpha: g.alpha,
            },
            discretization: Discretization {
                nodes: d.nodes,
                fiber_basis: d.fiber_basis,
                max_mode: d.max_mode,
                cutoff: d.cutoff,
            },
            grid: SweepGrid {
                epsilons: s.epsilons.clone(),
                times: s.times.clone(),
                taus: s.taus.clone(),
                verticals: s.verticals.clone(),
                sigmas: s.sigmas.clone(),
                alphas: s.alphas.clone(),
            },
            rectangle: RectangleParams {
                a_top: self.rectangle.a_top,
                t0: self.rectangle.t0,
                sigma: self.rectangle.sigma,
            },
            time: self.checks.time,
            main_lengths: self.checks.lengths.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lab = self.lab();
        lab.geometry.validate()?;
        lab.discretization.validate()?;
        lab.grid.validate()?;
        let r = &lab.rectangle;
        if !(r.sigma > 0.0 && r.a_top > r.sigma && r.t0 >= 1.0) {
            bail!("rectangle needs 0 < sigma < A and T0 >= 1");
        }
        if !(lab.time > 0.0 && lab.time.is_finite()) {
            bail!("checks.time must be positive");
        }
        if lab.main_lengths.is_empty() || lab.main_lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            bail!("checks.lengths must be a non-empty list of positive lengths");
        }
        for (key, tol) in &self.tolerances {
            let tag = key.split_once('.').map(|(t, _)| t).unwrap_or("");
            if !REPORT_TAGS.contains(&tag) && !VERIFY_ONLY_TAGS.contains(&tag) {
                bail!("tolerance key {key:?} must look like \"<report tag>.<quantity>\"");
            }
            if !(*tol >= 0.0 && tol.is_finite()) {
                bail!("tolerance {key:?} must be a non-negative number");
            }
        }
        Ok(())
    }
}
