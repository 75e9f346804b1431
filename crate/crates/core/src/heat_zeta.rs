//! Torsion zeta functions ζ_T(s) = Σ_q (−1)^q q Σ_{λ>0} λ^{−s} and log T = −½ζ′_T(0).
//!
//! Two independent routes are provided: analytic continuation through
//! Riemann/Hurwitz zeta values for circle-type spectra, and a Mellin split of
//! the heat supertrace at t = 1 with a fitted small-time expansion.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_spectra::{heat_supertrace, HeatTrace, Spectrum, Weight, KERNEL_TOL};
use crate::quadrature::integrate;
use crate::special::{hurwitz_zeta_dual, EULER_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZetaMethod {
    #[serde(rename = "spectral-closed-form")]
    SpectralClosedForm,
    #[serde(rename = "heat-split")]
    HeatSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaResult {
    pub zeta_at_zero: f64,
    pub zeta_prime_at_zero: f64,
    pub log_torsion: f64,
    pub method: ZetaMethod,
    pub error_budget: f64,
}

impl ZetaResult {
    fn new(zeta_at_zero: f64, zeta_prime_at_zero: f64, method: ZetaMethod, error_budget: f64) -> Self {
        Self {
            zeta_at_zero,
            zeta_prime_at_zero,
            log_torsion: -0.5 * zeta_prime_at_zero,
            method,
            error_budget,
        }
    }
}

/// Σ (−1)^p p b_p.
pub fn secondary_euler_characteristic(betti: &[u64]) -> f64 {
    betti
        .iter()
        .enumerate()
        .map(|(p, &b)| {
            let s = if p % 2 == 0 { 1.0 } else { -1.0 };
            s * p as f64 * b as f64
        })
        .sum()
}

/// χ₂ from the kernel lines of a spectrum.
pub fn chi2_from_spectrum(spec: &Spectrum) -> f64 {
    secondary_euler_characteristic(&spec.kernel_dimensions())
}

/// Net (−1)^q q weight per positive eigenvalue.
fn net_weights(spec: &Spectrum) -> Vec<(f64, f64)> {
    let mut acc: BTreeMap<u64, f64> = BTreeMap::new();
    for l in spec.lines() {
        if l.eigenvalue <= KERNEL_TOL || l.degree == 0 {
            continue;
        }
        let s = if l.degree % 2 == 0 { 1.0 } else { -1.0 };
        *acc.entry(l.eigenvalue.to_bits()).or_insert(0.0) += s * l.degree as f64 * l.multiplicity as f64;
    }
    acc.into_iter()
        .map(|(b, w)| (f64::from_bits(b), w))
        .filter(|(_, w)| *w != 0.0)
        .collect()
}

/// Closed-form ζ_T for spectra λ = u·(a + j)², j = 0, 1, 2, … in finitely many
/// classes a ∈ (0, 1] with a constant net weight per class. The unit is read
/// from a circle tail model.
pub fn torsion_zeta_closed_form(spec: &Spectrum) -> Result<ZetaResult> {
    match spec.tail() {
        crate::model_spectra::TailModel::Circle { unit, .. } => {
            torsion_zeta_closed_form_with_unit(spec, *unit)
        }
        _ => Err(Error::UnsupportedStructure(
            "closed form needs a circle spectrum; use the heat-split path".into(),
        )),
    }
}

/// As [`torsion_zeta_closed_form`] with an explicit frequency unit u.
pub fn torsion_zeta_closed_form_with_unit(spec: &Spectrum, unit: f64) -> Result<ZetaResult> {
    if !(unit > 0.0) {
        return Err(Error::Domain(format!("frequency unit must be positive, got {unit}")));
    }
    let weights = net_weights(spec);
    if weights.is_empty() {
        return Ok(ZetaResult::new(0.0, 0.0, ZetaMethod::SpectralClosedForm, 0.0));
    }
    // group x = √(λ/u) by fractional part
    let tol = 1e-8;
    let mut classes: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for (lam, w) in weights {
        let x = (lam / unit).sqrt();
        let mut frac = x - x.floor();
        if frac > 1.0 - tol {
            frac = 0.0;
        }
        match classes.iter_mut().find(|(f, _)| (f - frac).abs() <= tol) {
            Some((_, v)) => v.push((x, w)),
            None => classes.push((frac, vec![(x, w)])),
        }
    }
    let mut zeta0 = 0.0;
    let mut zeta_prime = 0.0;
    let log_u = unit.ln();
    for (_, mut members) in classes {
        members.sort_by(|a, b| a.0.total_cmp(&b.0));
        if members.len() < 3 {
            return Err(Error::UnsupportedStructure(format!(
                "frequency class starting at {} has only {} members",
                members[0].0,
                members.len()
            )));
        }
        let w = members[0].1;
        for pair in members.windows(2) {
            if ((pair[1].0 - pair[0].0) - 1.0).abs() > 1e-7 {
                return Err(Error::UnsupportedStructure(format!(
                    "frequencies {} and {} are not consecutive",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if members.iter().any(|m| (m.1 - w).abs() > 1e-9 * w.abs()) {
            return Err(Error::UnsupportedStructure(
                "net weight varies within a frequency class".into(),
            ));
        }
        let a = members[0].0;
        if a <= 1e-12 {
            return Err(Error::UnsupportedStructure("zero frequency outside the kernel".into()));
        }
        // Σ_j (u (a + j)²)^{−s} = u^{−s} ζ_H(2s, a)
        let z = hurwitz_zeta_dual(0.0, a);
        zeta0 += w * z.re;
        zeta_prime += w * (-log_u * z.re + 2.0 * z.eps);
    }
    Ok(ZetaResult::new(zeta0, zeta_prime, ZetaMethod::SpectralClosedForm, 1e-12))
}

/// Least-squares fit θ(t) ≈ Σ c_p t^p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub powers: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// Relative RMS residual ‖Ac − θ‖/‖θ‖.
    pub residual: f64,
    #[serde(skip, default)]
    pub window: (f64, f64),
    #[serde(skip, default)]
    pub absolute_residual: f64,
}

impl ExpansionFit {
    pub fn coefficient(&self, power: f64) -> Option<f64> {
        self.powers
            .iter()
            .position(|p| (p - power).abs() < 1e-12)
            .map(|i| self.coefficients[i])
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.powers
            .iter()
            .zip(&self.coefficients)
            .map(|(p, c)| c * t.powf(*p))
            .sum()
    }
}

/// Powers −½, 0, ½, 3/2, 5/2.
pub fn default_powers() -> Vec<f64> {
    vec![-0.5, 0.0, 0.5, 1.5, 2.5]
}

/// `count` log-spaced times in [t_min, t_max].
pub fn log_spaced(t_min: f64, t_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![t_min];
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

pub fn fit_small_time_expansion(samples: &[(f64, f64)], powers: &[f64]) -> Result<ExpansionFit> {
    if samples.len() < 8 {
        return Err(Error::FitRefused(format!(
            "need at least 8 samples, got {}",
            samples.len()
        )));
    }
    if samples.len() < powers.len() {
        return Err(Error::FitRefused("fewer samples than fit powers".into()));
    }
    let t_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let t_max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if !(t_min > 0.0 && t_max < 1.0) {
        return Err(Error::FitRefused(format!(
            "fit window [{t_min}, {t_max}] must lie inside (0, 1)"
        )));
    }
    let rows = samples.len();
    let cols = powers.len();
    let mut a = DMatrix::from_fn(rows, cols, |i, j| samples[i].0.powf(powers[j]));
    let y = DVector::from_fn(rows, |i, _| samples[i].1);
    let scales: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(Error::FitRefused(format!(
            "design matrix condition {:.3e} too large; adjust the window",
            smax / smin
        )));
    }
    let sol = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::FitRefused(format!("least-squares solve failed: {e}")))?;
    let fitted = &a * &sol;
    let abs_res = (&fitted - &y).norm() / (rows as f64).sqrt();
    let residual = (&fitted - &y).norm() / y.norm().max(1e-300);
    let coefficients = (0..cols).map(|j| sol[j] / scales[j]).collect();
    Ok(ExpansionFit {
        powers: powers.to_vec(),
        coefficients,
        residual,
        window: (t_min, t_max),
        absolute_residual: abs_res,
    })
}

/// Options for the heat-split evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatSplitOptions {
    /// Fit residual above which the method refuses.
    pub residual_threshold: f64,
    /// Whether the full supertrace must have no t⁰ term.
    pub constant_forbidden: bool,
    /// Allowed |c₀| relative to |c_{−½}| when the constant is forbidden.
    pub constant_tolerance: f64,
    pub quadrature_tolerance: f64,
}

impl Default for HeatSplitOptions {
    fn default() -> Self {
        Self {
            residual_threshold: 1e-6,
            constant_forbidden: true,
            constant_tolerance: 1e-3,
            quadrature_tolerance: 1e-11,
        }
    }
}

/// Samples the full supertrace θ(t) = θ̲(t) + χ₂ on the window.
pub fn sample_full_trace(
    theta_reduced: &dyn Fn(f64) -> Result<HeatTrace>,
    chi2: f64,
    window: (f64, f64),
    count: usize,
) -> Result<Vec<(f64, f64)>> {
    log_spaced(window.0, window.1, count)
        .into_iter()
        .map(|t| Ok((t, theta_reduced(t)?.value + chi2)))
        .collect()
}

/// Checks a fit against the no-constant-term statement.
pub fn check_constant_term(fit: &ExpansionFit, tolerance: f64) -> Result<()> {
    let c0 = fit.coefficient(0.0).unwrap_or(0.0);
    let lead = fit.coefficient(-0.5).unwrap_or(0.0);
    if c0.abs() > tolerance * lead.abs() {
        return Err(Error::TheoremViolation(format!(
            "fitted constant term {c0:.3e} exceeds {tolerance:.1e} × |a_-1/2| = {:.3e}",
            tolerance * lead.abs()
        )));
    }
    Ok(())
}

/// ζ′(0) = ∫₀¹ (θ̲ − Σ_{p≤0} c_p t^p) dt/t + ∫₁^∞ θ̲ dt/t + Σ_{p<0} c_p/p + γ c₀,
/// ζ(0) = c₀, with c_p the small-time coefficients of θ̲ = θ − χ₂.
///
/// `fit` is the expansion of the full trace θ; below its window the integrand
/// is replaced by the fitted positive powers.
pub fn torsion_zeta_heat_split(
    theta_reduced: &dyn Fn(f64) -> Result<HeatTrace>,
    fit: &ExpansionFit,
    chi2: f64,
    options: &HeatSplitOptions,
) -> Result<ZetaResult> {
    if fit.residual > options.residual_threshold {
        return Err(Error::FitRefused(format!(
            "fit residual {:.3e} above threshold {:.1e}",
            fit.residual, options.residual_threshold
        )));
    }
    if options.constant_forbidden {
        check_constant_term(fit, options.constant_tolerance)?;
    }
    let mut coeffs: Vec<(f64, f64)> = fit.powers.iter().copied().zip(fit.coefficients.iter().copied()).collect();
    let mut c0 = -chi2;
    for (p, c) in coeffs.iter_mut() {
        if p.abs() < 1e-12 {
            if !options.constant_forbidden {
                c0 += *c;
            }
            *c = 0.0;
        }
    }
    let singular: Vec<(f64, f64)> = coeffs.iter().copied().filter(|(p, _)| *p < 0.0).collect();
    let regular: Vec<(f64, f64)> = coeffs.iter().copied().filter(|(p, _)| *p > 0.0).collect();
    let t_min = fit.window.0;
    if !(t_min > 0.0 && t_min < 1.0) {
        return Err(Error::FitRefused("fit window is missing".into()));
    }

    let mut failure: Option<Error> = None;
    let mut max_bound = 0.0f64;
    let mut eval = |t: f64| -> f64 {
        match theta_reduced(t) {
            Ok(h) => {
                max_bound = max_bound.max(h.bound);
                h.value
            }
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };

    // (0, t_min]: fitted positive powers
    let below: f64 = regular.iter().map(|(p, c)| c * t_min.powf(*p) / p).sum();
    // [t_min, 1] in u = ln t
    let singular_part = |t: f64| -> f64 { singular.iter().map(|(p, c)| c * t.powf(*p)).sum::<f64>() + c0 };
    let small = integrate(
        |u| {
            let t = u.exp();
            eval(t) - singular_part(t)
        },
        t_min.ln(),
        0.0,
        options.quadrature_tolerance,
        options.quadrature_tolerance,
        400,
    );
    // [1, t_end] in u = ln t
    let mut t_end = 2.0;
    while eval(t_end).abs() > 1e-16 && t_end < 1e8 {
        t_end *= 2.0;
    }
    let large = integrate(|u| eval(u.exp()), 0.0, t_end.ln(), options.quadrature_tolerance, options.quadrature_tolerance, 400);
    if let Some(e) = failure {
        return Err(e);
    }
    let boundary: f64 = singular.iter().map(|(p, c)| c / p).sum();
    let zeta_prime = below + small.value + large.value + boundary + EULER_GAMMA * c0;
    let fit_error = fit.absolute_residual * (1.0 + (1.0 / t_min).ln());
    let trunc = max_bound * (t_end / t_min).ln();
    let budget = small.error + large.error + fit_error + trunc;
    Ok(ZetaResult::new(c0, zeta_prime, ZetaMethod::HeatSplit, budget))
}

/// Fit window [0.02, 0.5]·(L/2π)², the natural-time window of a circle of
/// length L, capped so that it stays below the split point t = 1.
pub fn circle_fit_window(length: f64) -> (f64, f64) {
    let s = (length / (2.0 * std::f64::consts::PI)).powi(2).min(1.8);
    (0.02 * s, 0.5 * s)
}

/// A heat-split evaluation directly from a spectrum.
#[derive(Debug, Clone)]
pub struct HeatSplitRun {
    pub fit: ExpansionFit,
    pub result: ZetaResult,
    pub chi2: f64,
}

/// Fits the N-weighted supertrace of `spec` on `window` and evaluates ζ′(0).
pub fn heat_split_from_spectrum(
    spec: &Spectrum,
    window: (f64, f64),
    samples: usize,
    powers: &[f64],
    options: &HeatSplitOptions,
) -> Result<HeatSplitRun> {
    let chi2 = chi2_from_spectrum(spec);
    let theta = |t: f64| heat_supertrace(spec, t, Weight::Total, true);
    let run = |w: (f64, f64)| -> Result<(ExpansionFit, ZetaResult)> {
        let data = sample_full_trace(&theta, chi2, w, samples)?;
        let fit = fit_small_time_expansion(&data, powers)?;
        let result = torsion_zeta_heat_split(&theta, &fit, chi2, options)?;
        Ok((fit, result))
    };
    let (fit, mut result) = run(window)?;
    // model error of the truncated expansion: sensitivity to the window
    let (_, narrow) = run((window.0, window.0.max(0.6 * window.1)))?;
    result.error_budget += (narrow.zeta_prime_at_zero - result.zeta_prime_at_zero).abs();
    Ok(HeatSplitRun { fit, result, chi2 })
}

/// Σ (−1)^q mult e^{−tλ} at several times.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexCheck {
    pub values: Vec<f64>,
    pub index: f64,
    pub drift: f64,
}

pub fn mckean_singer_index(spec: &Spectrum, times: &[f64], tolerance: f64) -> Result<IndexCheck> {
    let values = times
        .iter()
        .map(|&t| heat_supertrace(spec, t, Weight::One, false).map(|h| h.value))
        .collect::<Result<Vec<f64>>>()?;
    let first = values.first().copied().unwrap_or(0.0);
    let drift = values.iter().map(|v| (v - first).abs()).fold(0.0, f64::max);
    if drift > tolerance {
        return Err(Error::TheoremViolation(format!(
            "supertrace drifts by {drift:.3e} over the time grid; supersymmetry is broken"
        )));
    }
    Ok(IndexCheck {
        values,
        index: first,
        drift,
    })
}

/// Per-degree Gram matrices of harmonic representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DetLineNorm {
    pub grams: Vec<DMatrix<f64>>,
    /// Σ_q (−1)^q ½ log det Gram_q.
    pub log_norm: f64,
}

/// Gram_q = w_q Hᵀ M H with H the harmonic basis in degree q.
pub fn det_line_log_norm(
    harmonics: &[DMatrix<f64>],
    mass: &DVector<f64>,
    degree_weights: Option<&[f64]>,
    expected_betti: Option<&[usize]>,
) -> Result<DetLineNorm> {
    if let Some(b) = expected_betti {
        let got: Vec<usize> = harmonics.iter().map(|h| h.ncols()).collect();
        let n = b.len().max(got.len());
        for q in 0..n {
            let have = got.get(q).copied().unwrap_or(0);
            let want = b.get(q).copied().unwrap_or(0);
            if have != want {
                return Err(Error::CohomologyViolation(format!(
                    "degree {q}: {have} harmonic forms, expected {want}"
                )));
            }
        }
    }
    let m = DMatrix::from_diagonal(mass);
    let mut grams = Vec::with_capacity(harmonics.len());
    let mut log_norm = 0.0;
    for (q, h) in harmonics.iter().enumerate() {
        if h.ncols() == 0 {
            grams.push(DMatrix::zeros(0, 0));
            continue;
        }
        if h.nrows() != mass.len() {
            return Err(Error::Contract("harmonic vectors and mass differ in size".into()));
        }
        let w = degree_weights.map(|w| w[q]).unwrap_or(1.0);
        let g = (h.transpose() * &m * h) * w;
        let chol = g.clone().cholesky().ok_or_else(|| {
            Error::NumericalRank(format!("degree {q} Gram matrix is not positive definite"))
        })?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let s = if q % 2 == 0 { 1.0 } else { -1.0 };
        log_norm += s * 0.5 * logdet;
        grams.push(g);
    }
    Ok(DetLineNorm { grams, log_norm })
}

/// M-orthogonal projection of reference vectors onto the span of the
/// M-orthonormal kernel basis `kernel`.
pub fn project_onto_kernel(kernel: &DMatrix<f64>, mass: &DVector<f64>, reference: &DMatrix<f64>) -> DMatrix<f64> {
    let m = DMatrix::from_diagonal(mass);
    kernel * (kernel.transpose() * m * reference)
}
