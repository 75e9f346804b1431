//! Closed-form spectra of the circle Hodge Laplacian, the fiber Witten
//! oscillator on ℝᵏ with h = ½|y|², their products under metric scalings, and
//! the rotation-twisted k = 2 bundle over the circle.
//!
//! Every spectrum is finite and carries a [`TailModel`] describing what was
//! truncated, so heat supertraces come with rigorous tail bounds.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::KahanSum;

/// Eigenvalues with |λ| at or below this are treated as kernel.
pub const KERNEL_TOL: f64 = 1e-12;

/// Flat circle of length L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleGeometry {
    length: f64,
}

impl CircleGeometry {
    pub fn new(length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Domain(format!("circle length must be positive, got {length}")));
        }
        Ok(Self { length })
    }

    pub fn length(&self) -> f64 {
        self.length
    }
}

/// Witten oscillator on ℝᵏ with potential τ²|y|², truncated at energy |n| + q ≤ cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberModel {
    k: usize,
    tau: f64,
    cutoff: usize,
}

impl FiberModel {
    pub fn new(k: usize, tau: f64, cutoff: usize) -> Result<Self> {
        if !k.is_multiple_of(2) {
            return Err(Error::Domain(format!("fiber rank must be even, got k = {k}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { k, tau, cutoff })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.k, tau, self.cutoff)
    }

    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        Self { cutoff, ..*self }
    }
}

/// Horizontal scale ε, vertical scale T, conformal scale t and holonomy angle α.
///
/// The total metric is t⁻²(ε⁻² g_M + T⁻² g_Y), so a product eigenvalue is
/// t²(ε²μ + T²ν) for base eigenvalue μ and fiber eigenvalue ν.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    epsilon: f64,
    vertical: f64,
    time: f64,
    alpha: f64,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            vertical: 1.0,
            time: 1.0,
            alpha: 0.0,
        }
    }
}

impl ScalingParams {
    pub fn new(epsilon: f64, vertical: f64, time: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("epsilon", epsilon), ("T", vertical), ("t", time)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !alpha.is_finite() {
            return Err(Error::Domain("holonomy angle must be finite".into()));
        }
        Ok(Self {
            epsilon,
            vertical,
            time,
            alpha: normalize_angle(alpha),
        })
    }

    pub fn adiabatic(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 1.0, 1.0, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn vertical(&self) -> f64 {
        self.vertical
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            alpha: normalize_angle(alpha),
            ..*self
        }
    }

    /// Multiplier of base eigenvalues.
    pub fn base_factor(&self) -> f64 {
        let s = self.time * self.epsilon;
        s * s
    }

    /// Multiplier of fiber eigenvalues.
    pub fn fiber_factor(&self) -> f64 {
        let s = self.time * self.vertical;
        s * s
    }

    pub fn is_twisted(&self) -> bool {
        self.alpha != 0.0
    }
}

/// Reduces an angle to [0, 2π).
pub fn normalize_angle(alpha: f64) -> f64 {
    let a = alpha.rem_euclid(2.0 * PI);
    if a >= 2.0 * PI {
        0.0
    } else {
        a
    }
}

/// One eigenvalue of a graded operator with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLine {
    pub degree: usize,
    /// (base degree, fiber degree) when known.
    pub split: Option<(usize, usize)>,
    pub eigenvalue: f64,
    pub multiplicity: u64,
}

/// Degree weight inserted into heat supertraces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Weight {
    One,
    Total,
    Base,
    Fiber,
}

impl Weight {
    fn of(self, line: &SpectrumLine) -> Result<f64> {
        match self {
            Weight::One => Ok(1.0),
            Weight::Total => Ok(line.degree as f64),
            Weight::Base | Weight::Fiber => {
                let (b, f) = line.split.ok_or_else(|| {
                    Error::Contract(
                        "base/fiber number weights need split-degree annotations".into(),
                    )
                })?;
                Ok(if self == Weight::Base { b } else { f } as f64)
            }
        }
    }
}

/// What was omitted when a spectrum was truncated.
#[derive(Debug, Clone, PartialEq)]
pub enum TailModel {
    /// Nothing omitted.
    Complete,
    /// Circle modes m > max_mode omitted; eigenvalue of mode m is unit·m².
    Circle { unit: f64, max_mode: usize },
    /// Fiber energies E > cutoff omitted; eigenvalue of energy E is unit·E.
    Fiber { k: usize, unit: f64, cutoff: usize },
    /// Product of two truncated factors with eigenvalue base_factor·μ + fiber_factor·ν.
    Product {
        base: Box<Spectrum>,
        fiber: Box<Spectrum>,
        base_factor: f64,
        fiber_factor: f64,
    },
    /// Twisted k = 2 bundle: |m| > max_mode or N + q > cutoff omitted.
    Twisted {
        base_unit: f64,
        fiber_unit: f64,
        max_mode: usize,
        cutoff: usize,
        /// Upper bound on |j·α|/2π over retained sectors, rounded up.
        sector_shift: usize,
    },
}

/// Σ_{m>M} e^{−c m²}.
fn gaussian_tail(c: f64, max_mode: usize) -> f64 {
    let m1 = (max_mode + 1) as f64;
    let ratio = (-2.0 * c * m1).exp();
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    (-c * m1 * m1).exp() / (1.0 - ratio)
}

/// Σ_{E>C} x^E.
fn geometric_tail(x: f64, cutoff: usize) -> f64 {
    if x >= 1.0 {
        return f64::INFINITY;
    }
    x.powi(cutoff as i32 + 1) / (1.0 - x)
}

impl TailModel {
    fn scaled(&self, s: f64) -> TailModel {
        match self {
            TailModel::Complete => TailModel::Complete,
            TailModel::Circle { unit, max_mode } => TailModel::Circle {
                unit: unit * s,
                max_mode: *max_mode,
            },
            TailModel::Fiber { k, unit, cutoff } => TailModel::Fiber {
                k: *k,
                unit: unit * s,
                cutoff: *cutoff,
            },
            TailModel::Product {
                base,
                fiber,
                base_factor,
                fiber_factor,
            } => TailModel::Product {
                base: base.clone(),
                fiber: fiber.clone(),
                base_factor: base_factor * s,
                fiber_factor: fiber_factor * s,
            },
            TailModel::Twisted {
                base_unit,
                fiber_unit,
                max_mode,
                cutoff,
                sector_shift,
            } => TailModel::Twisted {
                base_unit: base_unit * s,
                fiber_unit: fiber_unit * s,
                max_mode: *max_mode,
                cutoff: *cutoff,
                sector_shift: *sector_shift,
            },
        }
    }

    /// Upper bound on |Σ over omitted lines of (−1)^q w mult e^{−tλ}|.
    pub fn bound(&self, weight: Weight, t: f64) -> Result<f64> {
        Ok(match self {
            TailModel::Complete => 0.0,
            // Each omitted mode contributes 2e in degree 0 and −2e in degree 1.
            TailModel::Circle { unit, max_mode } => match weight {
                Weight::One | Weight::Fiber => 0.0,
                Weight::Total | Weight::Base => 2.0 * gaussian_tail(t * unit, *max_mode),
            },
            // Each omitted energy level is an exact Koszul complex with index 0
            // and N-weighted supertrace −k.
            TailModel::Fiber { k, unit, cutoff } => match weight {
                Weight::One | Weight::Base => 0.0,
                Weight::Total | Weight::Fiber => {
                    *k as f64 * geometric_tail((-t * unit).exp(), *cutoff)
                }
            },
            TailModel::Product {
                base,
                fiber,
                base_factor,
                fiber_factor,
            } => {
                let tb = t * base_factor;
                let tf = t * fiber_factor;
                let term = |wb: Weight, wf: Weight| -> Result<f64> {
                    let kb = base.kept_sum(wb, tb, false)?.abs();
                    let kf = fiber.kept_sum(wf, tf, false)?.abs();
                    let bb = base.tail.bound(wb, tb)?;
                    let bf = fiber.tail.bound(wf, tf)?;
                    Ok(bb * (kf + bf) + kb * bf)
                };
                match weight {
                    Weight::One => term(Weight::One, Weight::One)?,
                    Weight::Base => term(Weight::Base, Weight::One)?,
                    Weight::Fiber => term(Weight::One, Weight::Fiber)?,
                    Weight::Total => {
                        term(Weight::Base, Weight::One)? + term(Weight::One, Weight::Fiber)?
                    }
                }
            }
            // Every energy level of every angular-momentum sector is an exact
            // fiber complex, so omitted fiber states cancel and only the
            // unshifted j = 0 base modes leave a remainder. One and N_Y cancel
            // between base degrees.
            TailModel::Twisted {
                base_unit, max_mode, ..
            } => match weight {
                Weight::One | Weight::Fiber => 0.0,
                Weight::Total | Weight::Base => 2.0 * gaussian_tail(t * base_unit, *max_mode),
            },
        })
    }
}

/// A finite list of spectrum lines and a model of the omitted tail.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    lines: Vec<SpectrumLine>,
    tail: TailModel,
}

/// Merge key: degree, split, bit pattern of λ.
type LineKey = (usize, Option<(usize, usize)>, u64);

fn merge_lines(raw: impl IntoIterator<Item = SpectrumLine>) -> Vec<SpectrumLine> {
    let mut acc: BTreeMap<LineKey, u64> = BTreeMap::new();
    for l in raw {
        if l.multiplicity == 0 {
            continue;
        }
        // −0.0 and 0.0 merge
        let lam = if l.eigenvalue == 0.0 { 0.0 } else { l.eigenvalue };
        *acc.entry((l.degree, l.split, lam.to_bits())).or_insert(0) += l.multiplicity;
    }
    let mut lines: Vec<SpectrumLine> = acc
        .into_iter()
        .map(|((degree, split, bits), multiplicity)| SpectrumLine {
            degree,
            split,
            eigenvalue: f64::from_bits(bits),
            multiplicity,
        })
        .collect();
    lines.sort_by(|a, b| {
        a.degree
            .cmp(&b.degree)
            .then(a.eigenvalue.total_cmp(&b.eigenvalue))
            .then(a.split.cmp(&b.split))
    });
    lines
}

impl Spectrum {
    /// Builds a spectrum from arbitrary lines; lines are merged and sorted.
    pub fn from_lines(lines: impl IntoIterator<Item = SpectrumLine>, tail: TailModel) -> Result<Self> {
        let lines: Vec<SpectrumLine> = lines.into_iter().collect();
        for l in &lines {
            if !l.eigenvalue.is_finite() || l.eigenvalue < -KERNEL_TOL {
                return Err(Error::Domain(format!("invalid eigenvalue {}", l.eigenvalue)));
            }
            if let Some((b, f)) = l.split {
                if b + f != l.degree {
                    return Err(Error::Contract(format!(
                        "split ({b}, {f}) does not add up to degree {}",
                        l.degree
                    )));
                }
            }
        }
        Ok(Self {
            lines: merge_lines(lines),
            tail,
        })
    }

    pub fn lines(&self) -> &[SpectrumLine] {
        &self.lines
    }

    pub fn tail(&self) -> &TailModel {
        &self.tail
    }

    pub fn max_degree(&self) -> usize {
        self.lines.iter().map(|l| l.degree).max().unwrap_or(0)
    }

    /// Every eigenvalue multiplied by `s` (metric scaled by 1/s).
    pub fn scaled(&self, s: f64) -> Spectrum {
        Spectrum {
            lines: merge_lines(self.lines.iter().map(|l| SpectrumLine {
                eigenvalue: l.eigenvalue * s,
                ..*l
            })),
            tail: self.tail.scaled(s),
        }
    }

    /// Lines with the split annotation dropped and merged by total degree.
    pub fn collapsed(&self) -> Spectrum {
        Spectrum {
            lines: merge_lines(self.lines.iter().map(|l| SpectrumLine { split: None, ..*l })),
            tail: self.tail.clone(),
        }
    }

    /// Total multiplicity of kernel lines per degree, indexed 0..=max_degree.
    pub fn kernel_dimensions(&self) -> Vec<u64> {
        let mut dims = vec![0u64; self.max_degree() + 1];
        for l in &self.lines {
            if l.eigenvalue.abs() <= KERNEL_TOL {
                dims[l.degree] += l.multiplicity;
            }
        }
        dims
    }

    /// Smallest eigenvalue above the kernel threshold.
    pub fn first_nonzero(&self) -> Option<f64> {
        self.lines
            .iter()
            .map(|l| l.eigenvalue)
            .filter(|&e| e > KERNEL_TOL)
            .min_by(f64::total_cmp)
    }

    /// Σ over retained lines of (−1)^q w mult e^{−tλ}.
    pub fn kept_sum(&self, weight: Weight, t: f64, remove_kernel: bool) -> Result<f64> {
        let mut acc = KahanSum::new();
        for l in &self.lines {
            if remove_kernel && l.eigenvalue.abs() <= KERNEL_TOL {
                continue;
            }
            let w = weight.of(l)?;
            if w == 0.0 {
                continue;
            }
            let sign = if l.degree % 2 == 0 { 1.0 } else { -1.0 };
            acc.add(sign * w * l.multiplicity as f64 * (-t * l.eigenvalue).exp());
        }
        Ok(acc.value())
    }

    /// CSV with header `degree,q_base,q_fiber,eigenvalue,multiplicity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("degree,q_base,q_fiber,eigenvalue,multiplicity\n");
        for l in &self.lines {
            let (b, f) = match l.split {
                Some((b, f)) => (b.to_string(), f.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{:.16e},{}",
                l.degree, b, f, l.eigenvalue, l.multiplicity
            );
        }
        out
    }
}

/// A heat supertrace value with a bound on the truncated tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatTrace {
    pub value: f64,
    pub bound: f64,
}

/// Σ (−1)^q w(q) mult e^{−tλ} over the spectrum, with a truncation bound.
pub fn heat_supertrace(spec: &Spectrum, t: f64, weight: Weight, remove_kernel: bool) -> Result<HeatTrace> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("heat time must be positive, got {t}")));
    }
    Ok(HeatTrace {
        value: spec.kept_sum(weight, t, remove_kernel)?,
        bound: spec.tail.bound(weight, t)?,
    })
}

/// ((2πm + shift)/L)².
pub fn circle_eigenvalue(m: i64, shift: f64, length: f64) -> f64 {
    let w = (2.0 * PI * m as f64 + shift) / length;
    w * w
}

/// Hodge spectrum of the flat circle, modes 0..=max_mode.
pub fn circle_hodge_spectrum(geom: &CircleGeometry, max_mode: usize) -> Result<Spectrum> {
    if max_mode < 1 {
        return Err(Error::Domain("max_mode must be at least 1".into()));
    }
    let mut lines = Vec::with_capacity(2 * (max_mode + 1));
    for q in 0..=1usize {
        lines.push(SpectrumLine {
            degree: q,
            split: Some((q, 0)),
            eigenvalue: 0.0,
            multiplicity: 1,
        });
        for m in 1..=max_mode as i64 {
            lines.push(SpectrumLine {
                degree: q,
                split: Some((q, 0)),
                eigenvalue: circle_eigenvalue(m, 0.0, geom.length),
                multiplicity: 2,
            });
        }
    }
    let unit = circle_eigenvalue(1, 0.0, geom.length);
    Spectrum::from_lines(lines, TailModel::Circle { unit, max_mode })
}

fn binomial(n: usize, r: usize) -> u64 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u64 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Number of occupation vectors n ∈ ℕᵏ with |n| = level.
pub fn oscillator_degeneracy(k: usize, level: usize) -> u64 {
    if k == 0 {
        return u64::from(level == 0);
    }
    binomial(level + k - 1, k - 1)
}

/// Witten spectrum 2τ(|n| + q) on ℝᵏ, truncated at |n| + q ≤ cutoff.
pub fn fiber_witten_spectrum(fiber: &FiberModel) -> Result<Spectrum> {
    let k = fiber.k;
    let unit = 2.0 * fiber.tau;
    let mut lines = Vec::new();
    for q in 0..=k {
        for energy in q..=fiber.cutoff {
            let mult = oscillator_degeneracy(k, energy - q) * binomial(k, q);
            lines.push(SpectrumLine {
                degree: q,
                split: Some((0, q)),
                eigenvalue: unit * energy as f64,
                multiplicity: mult,
            });
        }
    }
    Spectrum::from_lines(
        lines,
        TailModel::Fiber {
            k,
            unit,
            cutoff: fiber.cutoff,
        },
    )
}

/// Untwisted product with eigenvalues t²(ε²μ + T²ν).
pub fn product_spectrum(base: &Spectrum, fiber: &Spectrum, scaling: &ScalingParams) -> Result<Spectrum> {
    if scaling.is_twisted() {
        return Err(Error::Contract(
            "twisted geometries go through holonomy_twisted_spectrum".into(),
        ));
    }
    if !matches!(base.tail, TailModel::Circle { .. }) {
        return Err(Error::Contract("product base must be a circle spectrum".into()));
    }
    let a = scaling.base_factor();
    let b = scaling.fiber_factor();
    let mut raw = Vec::with_capacity(base.lines.len() * fiber.lines.len());
    for lb in &base.lines {
        let (bb, _) = lb.split.unwrap_or((lb.degree, 0));
        for lf in &fiber.lines {
            let (_, ff) = lf.split.unwrap_or((0, lf.degree));
            raw.push(SpectrumLine {
                degree: lb.degree + lf.degree,
                split: Some((bb, ff)),
                eigenvalue: a * lb.eigenvalue + b * lf.eigenvalue,
                multiplicity: lb.multiplicity * lf.multiplicity,
            });
        }
    }
    Ok(Spectrum {
        lines: merge_lines(raw),
        tail: TailModel::Product {
            base: Box::new(base.clone()),
            fiber: Box::new(fiber.clone()),
            base_factor: a,
            fiber_factor: b,
        },
    })
}

/// Fock states of the k = 2 oscillator at level N with form degree q,
/// labelled by total angular momentum j = ℓ + s.
fn twisted_fiber_sectors(level: usize, q: usize) -> Vec<i64> {
    let n = level as i64;
    let spins: &[i64] = match q {
        0 | 2 => &[0],
        1 => &[-1, 1],
        _ => &[],
    };
    let mut out = Vec::new();
    for &s in spins {
        let mut l = -n;
        while l <= n {
            out.push(l + s);
            l += 2;
        }
    }
    out
}

/// Spectrum of the k = 2 Witten bundle over the circle glued by rotation R_α.
///
/// A fiber state with angular momentum j picks up base frequencies
/// (2πm + jα)/L, m ∈ [−max_mode, max_mode].
pub fn holonomy_twisted_spectrum(
    geom: &CircleGeometry,
    fiber: &FiberModel,
    scaling: &ScalingParams,
    max_mode: usize,
) -> Result<Spectrum> {
    if fiber.k != 2 {
        return Err(Error::Domain(format!(
            "holonomy twist is implemented for k = 2, got k = {}",
            fiber.k
        )));
    }
    if max_mode < 1 {
        return Err(Error::Domain("max_mode must be at least 1".into()));
    }
    let alpha = scaling.alpha();
    let a = scaling.base_factor();
    let b = scaling.fiber_factor();
    let unit = 2.0 * fiber.tau;
    let mut raw = Vec::new();
    let mut max_j = 0i64;
    for q in 0..=2usize {
        for energy in q..=fiber.cutoff {
            let nu = unit * energy as f64;
            for j in twisted_fiber_sectors(energy - q, q) {
                max_j = max_j.max(j.abs());
                let shift = j as f64 * alpha;
                for m in -(max_mode as i64)..=max_mode as i64 {
                    let mu = circle_eigenvalue(m, shift, geom.length);
                    for qb in 0..=1usize {
                        raw.push(SpectrumLine {
                            degree: qb + q,
                            split: Some((qb, q)),
                            eigenvalue: a * mu + b * nu,
                            multiplicity: 1,
                        });
                    }
                }
            }
        }
    }
    let sector_shift = (max_j as f64 * alpha / (2.0 * PI)).ceil() as usize;
    Ok(Spectrum {
        lines: merge_lines(raw),
        tail: TailModel::Twisted {
            base_unit: a * circle_eigenvalue(1, 0.0, geom.length),
            fiber_unit: b * unit,
            max_mode,
            cutoff: fiber.cutoff,
            sector_shift,
        },
    })
}
