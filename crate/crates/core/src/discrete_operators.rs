//! Finite-dimensional surrogates of the Witten complex on S¹ × ℝᵏ.
//!
//! The base is a nodes/edges difference complex on a periodic grid with a
//! diagonal mass matrix. The fiber is the Hermite–Galerkin Witten complex
//! truncated at oscillator energy |n| + q ≤ cutoff, which keeps d_{τh}
//! invariant. The total Dirac operator is a·(D_M ⊗ 1) + b·(Γ_M ⊗ D_Y), with an
//! optional rotation seam on the last edge.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{require_symmetric, sym_eigen, sym_function, sym_norm};
use crate::model_spectra::{FiberModel, ScalingParams, Spectrum, SpectrumLine, TailModel};

/// Periodic grid θ_j = 2πj/N with metric samples g(θ_j) = (dℓ/dθ)².
#[derive(Debug, Clone, PartialEq)]
pub struct CircleGrid {
    metric: Vec<f64>,
}

impl CircleGrid {
    pub fn new(metric: Vec<f64>) -> Result<Self> {
        if metric.len() < 8 {
            return Err(Error::Domain(format!(
                "circle grid needs at least 8 nodes, got {}",
                metric.len()
            )));
        }
        if let Some(g) = metric.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Domain(format!("metric sample {g} is not positive")));
        }
        Ok(Self { metric })
    }

    /// Constant metric (L/2π)², total length L.
    pub fn uniform(nodes: usize, length: f64) -> Result<Self> {
        let g = (length / (2.0 * PI)).powi(2);
        Self::new(vec![g; nodes])
    }

    pub fn from_fn(nodes: usize, g: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..nodes).map(|j| g(2.0 * PI * j as f64 / nodes as f64)).collect())
    }

    pub fn nodes(&self) -> usize {
        self.metric.len()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.nodes() as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    /// Σ √g Δθ.
    pub fn length(&self) -> f64 {
        self.metric.iter().map(|g| g.sqrt()).sum::<f64>() * self.spacing()
    }
}

/// Difference complex Ω⁰ → Ω¹ on the circle with diagonal masses.
#[derive(Debug, Clone)]
pub struct DiscreteComplex {
    pub d0: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub m1: DVector<f64>,
    pub d_star: DMatrix<f64>,
    pub dirac: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
}

impl DiscreteComplex {
    pub fn nodes(&self) -> usize {
        self.m0.len()
    }

    /// Block mass diag(M0, M1).
    pub fn mass(&self) -> DVector<f64> {
        let n = self.nodes();
        DVector::from_fn(2 * n, |i, _| if i < n { self.m0[i] } else { self.m1[i - n] })
    }

    /// S L S⁻¹ with S = √mass, symmetric.
    pub fn symmetric_laplacian(&self) -> DMatrix<f64> {
        conjugate_by_mass(&self.laplacian, &self.mass())
    }

    /// Eigenvalues of the Laplacian on 0-forms then on 1-forms, each ascending.
    pub fn laplacian_eigenvalues(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.nodes();
        let s = self.symmetric_laplacian();
        let idx0: Vec<usize> = (0..n).collect();
        let idx1: Vec<usize> = (n..2 * n).collect();
        (
            sym_eigen(&crate::linalg::submatrix(&s, &idx0)).0.iter().copied().collect(),
            sym_eigen(&crate::linalg::submatrix(&s, &idx1)).0.iter().copied().collect(),
        )
    }
}

/// S A S⁻¹ with S = diag(√mass).
pub fn conjugate_by_mass(a: &DMatrix<f64>, mass: &DVector<f64>) -> DMatrix<f64> {
    let s: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| s[i] * a[(i, j)] / s[j])
}

/// M⁻¹ Aᵀ M for diagonal M.
fn mass_adjoint(a: &DMatrix<f64>, row_mass: &DVector<f64>, col_mass: &DVector<f64>) -> DMatrix<f64> {
    // a maps col space → row space; the adjoint maps row space → col space.
    DMatrix::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)] * row_mass[j] / col_mass[i])
}

pub fn build_circle_complex(grid: &CircleGrid) -> Result<DiscreteComplex> {
    let n = grid.nodes();
    let h = grid.spacing();
    let g = grid.metric();
    let mut d0 = DMatrix::zeros(n, n);
    for j in 0..n {
        d0[(j, j)] = -1.0 / h;
        d0[(j, (j + 1) % n)] += 1.0 / h;
    }
    let m0 = DVector::from_fn(n, |j, _| g[j].sqrt() * h);
    let m1 = DVector::from_fn(n, |j, _| {
        let edge = 0.5 * (g[j] + g[(j + 1) % n]);
        h / edge.sqrt()
    });
    let d_star = mass_adjoint(&d0, &m1, &m0);
    let mut dirac = DMatrix::zeros(2 * n, 2 * n);
    dirac.view_mut((0, n), (n, n)).copy_from(&d_star);
    dirac.view_mut((n, 0), (n, n)).copy_from(&d0);
    let laplacian = &dirac * &dirac;
    Ok(DiscreteComplex {
        d0,
        m0,
        m1,
        d_star,
        dirac,
        laplacian,
    })
}

/// A Hermite–Galerkin basis state: occupation numbers and a form mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FiberState {
    pub occupation: Vec<usize>,
    pub forms: u32,
}

impl FiberState {
    pub fn degree(&self) -> usize {
        self.forms.count_ones() as usize
    }

    pub fn energy(&self) -> usize {
        self.occupation.iter().sum::<usize>() + self.degree()
    }
}

/// Galerkin matrices of d_{τh} = √(2τ) Σ dy^j ∧ a_j and D_Y = d + dᵀ.
#[derive(Debug, Clone)]
pub struct FiberOperator {
    model: FiberModel,
    states: Vec<FiberState>,
    pub differential: DMatrix<f64>,
    pub dirac: DMatrix<f64>,
}

fn occupations(k: usize, total: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in occupations(k - 1, total - first) {
            let mut v = vec![first];
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

#[inline]
fn wedge_sign(mask: u32, bit: usize) -> f64 {
    if (mask & ((1u32 << bit) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn build_fiber_operator(model: &FiberModel) -> Result<FiberOperator> {
    let k = model.k();
    if model.cutoff() < 1 {
        return Err(Error::Domain("fiber Galerkin space needs cutoff >= 1".into()));
    }
    let mut states = Vec::new();
    for q in 0..=k.min(model.cutoff()) {
        let masks: Vec<u32> = (0..(1u32 << k)).filter(|m| m.count_ones() as usize == q).collect();
        for &forms in &masks {
            for level in 0..=model.cutoff() - q {
                for occupation in occupations(k, level) {
                    states.push(FiberState { occupation, forms });
                }
            }
        }
    }
    let index: HashMap<FiberState, usize> =
        states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let dim = states.len();
    let c = (2.0 * model.tau()).sqrt();
    let mut d = DMatrix::zeros(dim, dim);
    for (col, s) in states.iter().enumerate() {
        for j in 0..k {
            if s.occupation[j] == 0 || s.forms & (1 << j) != 0 {
                continue;
            }
            let mut occ = s.occupation.clone();
            occ[j] -= 1;
            let target = FiberState {
                occupation: occ,
                forms: s.forms | (1 << j),
            };
            if let Some(&row) = index.get(&target) {
                d[(row, col)] += c * (s.occupation[j] as f64).sqrt() * wedge_sign(s.forms, j);
            }
        }
    }
    let dirac = &d + d.transpose();
    Ok(FiberOperator {
        model: *model,
        states,
        differential: d,
        dirac,
    })
}

impl FiberOperator {
    pub fn model(&self) -> &FiberModel {
        &self.model
    }

    pub fn states(&self) -> &[FiberState] {
        &self.states
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.states.iter().map(FiberState::degree).collect()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        &self.dirac * &self.dirac
    }

    /// Eigenvalues of D_Y² grouped by fiber degree.
    pub fn degree_eigenvalues(&self) -> Vec<Vec<f64>> {
        let lap = self.laplacian();
        let degs = self.degrees();
        (0..=self.model.k())
            .map(|q| {
                let idx: Vec<usize> = (0..self.dim()).filter(|&i| degs[i] == q).collect();
                sym_eigen(&crate::linalg::submatrix(&lap, &idx)).0.iter().copied().collect()
            })
            .collect()
    }

    /// Numerical kernel of D_Y² (columns orthonormal).
    pub fn kernel(&self, tol: f64) -> DMatrix<f64> {
        let (vals, vecs) = sym_eigen(&self.laplacian());
        let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() <= tol).collect();
        DMatrix::from_fn(self.dim(), cols.len(), |i, j| vecs[(i, cols[j])])
    }

    pub fn vacuum_index(&self) -> usize {
        self.states
            .iter()
            .position(|s| s.forms == 0 && s.occupation.iter().all(|&n| n == 0))
            .expect("vacuum is always retained")
    }

    /// Generator of rotations in the (y¹, y²) plane on Fock states and forms.
    pub fn rotation_generator(&self) -> Result<DMatrix<f64>> {
        if self.model.k() != 2 {
            return Err(Error::Domain("rotation holonomy needs k = 2".into()));
        }
        let index: HashMap<&FiberState, usize> =
            self.states.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let dim = self.dim();
        let mut g = DMatrix::zeros(dim, dim);
        for (col, s) in self.states.iter().enumerate() {
            let (n1, n2) = (s.occupation[0], s.occupation[1]);
            // a₂†a₁ − a₁†a₂
            if n1 > 0 {
                let t = FiberState {
                    occupation: vec![n1 - 1, n2 + 1],
                    forms: s.forms,
                };
                if let Some(&row) = index.get(&t) {
                    g[(row, col)] += ((n1 * (n2 + 1)) as f64).sqrt();
                }
            }
            if n2 > 0 {
                let t = FiberState {
                    occupation: vec![n1 + 1, n2 - 1],
                    forms: s.forms,
                };
                if let Some(&row) = index.get(&t) {
                    g[(row, col)] -= ((n2 * (n1 + 1)) as f64).sqrt();
                }
            }
            // dy¹ → dy², dy² → −dy¹
            let swapped = match s.forms {
                0b01 => Some((0b10, 1.0)),
                0b10 => Some((0b01, -1.0)),
                _ => None,
            };
            if let Some((forms, sign)) = swapped {
                let t = FiberState {
                    occupation: s.occupation.clone(),
                    forms,
                };
                if let Some(&row) = index.get(&t) {
                    g[(row, col)] += sign;
                }
            }
        }
        Ok(g)
    }

    /// Orthogonal action of the rotation R_α.
    pub fn rotation(&self, alpha: f64) -> Result<DMatrix<f64>> {
        Ok((self.rotation_generator()? * alpha).exp())
    }
}

/// Normalized Hermite functions φ_0..φ_{count−1} at frequency τ, evaluated at y.
pub fn hermite_functions(tau: f64, y: f64, count: usize) -> Vec<f64> {
    let xi = tau.sqrt() * y;
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push((tau / PI).powf(0.25) * (-0.5 * xi * xi).exp());
    if count > 1 {
        out.push(2f64.sqrt() * xi * out[0]);
    }
    for n in 1..count.saturating_sub(1) {
        let next = (2.0 / (n + 1) as f64).sqrt() * xi * out[n] - (n as f64 / (n + 1) as f64).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// Eigenpairs of −u″ + τ²y²u on [−w, w] by a fourth-order difference scheme
/// with homogeneous Dirichlet ends; `points` interior nodes.
pub fn fd_oscillator_1d(tau: f64, half_width: f64, points: usize) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let h = 2.0 * half_width / (points + 1) as f64;
    let y: Vec<f64> = (1..=points).map(|i| -half_width + i as f64 * h).collect();
    let c = 1.0 / (12.0 * h * h);
    let mut a = DMatrix::zeros(points, points);
    for i in 0..points {
        a[(i, i)] = 30.0 * c + tau * tau * y[i] * y[i];
        if i >= 1 {
            a[(i, i - 1)] = -16.0 * c;
            a[(i - 1, i)] = -16.0 * c;
        }
        if i >= 2 {
            a[(i, i - 2)] = c;
            a[(i - 2, i)] = c;
        }
    }
    let (vals, vecs) = sym_eigen(&a);
    (vals.iter().copied().collect(), vecs, y)
}

/// Finite-difference reference spectrum and ground state of the fiber complex.
#[derive(Debug, Clone)]
pub struct FiberOracle {
    /// (degree, eigenvalue, multiplicity), ascending in eigenvalue then degree.
    pub lines: Vec<(usize, f64, u64)>,
    /// Relative grid-norm distance of the ground state from e^{−τ|y|²/2}.
    pub ground_state_error: f64,
    /// Number of degree-0 eigenvalues below 10⁻⁶.
    pub kernel_dimension: usize,
}

fn binomial(n: usize, r: usize) -> u64 {
    if r > n {
        return 0;
    }
    let mut acc = 1u64;
    for i in 0..r {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Merges sorted values into (value, count) clusters with relative tolerance.
pub fn cluster_values(values: &[f64], rel_tol: f64, abs_tol: f64) -> Vec<(f64, u64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, u64, f64)> = Vec::new();
    for v in sorted {
        if let Some(last) = out.last_mut() {
            let mean = last.2 / last.1 as f64;
            if (v - mean).abs() <= abs_tol + rel_tol * mean.abs() {
                last.1 += 1;
                last.2 += v;
                continue;
            }
        }
        out.push((v, 1, v));
    }
    out.into_iter().map(|(_, c, s)| (s / c as f64, c)).collect()
}

/// Kronecker-sum oracle of −Δ − kτ + τ²|y|² + 2τq on [−w, w]ᵏ.
pub fn fd_fiber_oracle(model: &FiberModel, half_width: f64, points: usize, modes: usize) -> FiberOracle {
    let k = model.k();
    let tau = model.tau();
    let (vals, vecs, y) = fd_oscillator_1d(tau, half_width, points);
    let vals = &vals[..modes.min(vals.len())];
    let mut sums = vec![0.0f64];
    for _ in 0..k {
        let mut next = Vec::with_capacity(sums.len() * vals.len());
        for s in &sums {
            for v in vals {
                next.push(s + v);
            }
        }
        next.sort_by(f64::total_cmp);
        next.truncate(4 * modes * modes);
        sums = next;
    }
    let mut lines = Vec::new();
    let ceiling = sums.last().copied().unwrap_or(0.0) - k as f64 * tau;
    for q in 0..=k {
        let shifted: Vec<f64> = sums
            .iter()
            .map(|s| s - k as f64 * tau + 2.0 * tau * q as f64)
            .filter(|&v| v <= ceiling)
            .collect();
        for (v, c) in cluster_values(&shifted, 1e-6, 1e-7) {
            lines.push((q, v, c * binomial(k, q)));
        }
    }
    lines.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let kernel_dimension = lines
        .iter()
        .filter(|l| l.0 == 0 && l.1.abs() < 1e-6)
        .map(|l| l.2 as usize)
        .sum();

    // ground state along each axis is the lowest 1-D mode; compare with e^{−τy²/2}
    let mut g1: Vec<f64> = vecs.column(0).iter().copied().collect();
    if g1.iter().sum::<f64>() < 0.0 {
        g1.iter_mut().for_each(|v| *v = -*v);
    }
    let gauss: Vec<f64> = y.iter().map(|v| (-0.5 * tau * v * v).exp()).collect();
    let ground_state_error = product_grid_distance(&g1, &gauss, k);
    FiberOracle {
        lines,
        ground_state_error,
        kernel_dimension,
    }
}

/// Relative ℓ² distance between the k-fold products u⊗…⊗u and v⊗…⊗v after
/// normalizing both.
fn product_grid_distance(u: &[f64], v: &[f64], k: usize) -> f64 {
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let overlap: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv);
    // ‖U − V‖² = 2 − 2⟨u, v⟩ᵏ for unit vectors
    (2.0 - 2.0 * overlap.powi(k as i32)).max(0.0).sqrt()
}

/// Hermite-path ground state of D_Y² evaluated on a tensor grid, compared with
/// e^{−τ|y|²/2} in the relative grid norm (k = 2).
pub fn hermite_ground_state_error(op: &FiberOperator, half_width: f64, points: usize) -> Result<f64> {
    if op.model().k() != 2 {
        return Err(Error::Domain("grid comparison implemented for k = 2".into()));
    }
    let ker = op.kernel(1e-9);
    if ker.ncols() != 1 {
        return Err(Error::NumericalRank(format!(
            "fiber kernel has dimension {}, expected 1",
            ker.ncols()
        )));
    }
    let tau = op.model().tau();
    let levels = op.model().cutoff() + 1;
    let h = 2.0 * half_width / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| -half_width + i as f64 * h).collect();
    let phis: Vec<Vec<f64>> = grid.iter().map(|&y| hermite_functions(tau, y, levels)).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut psi = Vec::with_capacity(points * points);
    let mut gauss = Vec::with_capacity(points * points);
    for (a, ya) in grid.iter().enumerate() {
        for (b, yb) in grid.iter().enumerate() {
            let mut v = 0.0;
            for (i, s) in op.states().iter().enumerate() {
                if s.forms != 0 {
                    continue;
                }
                v += ker[(i, 0)] * phis[a][s.occupation[0]] * phis[b][s.occupation[1]];
            }
            psi.push(v);
            gauss.push((-0.5 * tau * (ya * ya + yb * yb)).exp());
        }
    }
    let sign = if psi.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let np: f64 = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ng: f64 = gauss.iter().map(|v| v * v).sum::<f64>().sqrt();
    for (p, g) in psi.iter().zip(&gauss) {
        let d = sign * p / np - g / ng;
        num += d * d;
        den += (g / ng).powi(2);
    }
    Ok((num / den).sqrt())
}

/// Index layout of the total space (base degree, node, fiber state).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TotalLayout {
    pub nodes: usize,
    pub fiber_dim: usize,
}

impl TotalLayout {
    pub fn dim(&self) -> usize {
        2 * self.nodes * self.fiber_dim
    }

    pub fn index(&self, base_degree: usize, node: usize, fiber: usize) -> usize {
        (base_degree * self.nodes + node) * self.fiber_dim + fiber
    }
}

/// Assembled total Dirac operator D = a·(D_M ⊗ 1) + b·(Γ_M ⊗ D_Y), a = tε, b = tT.
#[derive(Debug, Clone)]
pub struct WittenAssembly {
    pub layout: TotalLayout,
    pub scaling: ScalingParams,
    pub tau: f64,
    /// a·d_M + b·Γ d_Y.
    pub differential: DMatrix<f64>,
    /// Unscaled d_M ⊗ 1 (with seam twist).
    pub base_differential: DMatrix<f64>,
    /// Unscaled Γ_M ⊗ d_Y.
    pub fiber_differential: DMatrix<f64>,
    pub dirac: DMatrix<f64>,
    pub mass: DVector<f64>,
    /// Unscaled base part D_M ⊗ 1 (with seam twist).
    pub base_part: DMatrix<f64>,
    /// Unscaled fiber part Γ_M ⊗ D_Y.
    pub fiber_part: DMatrix<f64>,
    pub base_degree: Vec<usize>,
    pub fiber_degree: Vec<usize>,
    /// Rotation applied across the seam edge.
    pub seam: DMatrix<f64>,
    fiber: FiberOperator,
}

pub fn assemble_total_dirac(
    complex: &DiscreteComplex,
    fiber: &FiberOperator,
    scaling: &ScalingParams,
) -> Result<WittenAssembly> {
    let n = complex.nodes();
    if complex.d0.nrows() != n || complex.m1.len() != n {
        return Err(Error::Contract("base complex blocks have mismatched sizes".into()));
    }
    let f = fiber.dim();
    let layout = TotalLayout { nodes: n, fiber_dim: f };
    let dim = layout.dim();
    let seam = if scaling.is_twisted() {
        fiber.rotation(scaling.alpha())?
    } else {
        DMatrix::identity(f, f)
    };
    let a = scaling.time() * scaling.epsilon();
    let b = scaling.time() * scaling.vertical();

    let mass = DVector::from_fn(dim, |i, _| {
        let q = i / (n * f);
        let node = (i / f) % n;
        if q == 0 {
            complex.m0[node]
        } else {
            complex.m1[node]
        }
    });

    // base differential with the seam: (du)_j = (u_{j+1} − u_j)/h, u_N := U u_0
    let mut base_d = DMatrix::zeros(dim, dim);
    for row_node in 0..n {
        for col_node in 0..n {
            let c = complex.d0[(row_node, col_node)];
            if c == 0.0 {
                continue;
            }
            let wraps = row_node == n - 1 && col_node == 0;
            for fr in 0..f {
                let r = layout.index(1, row_node, fr);
                if wraps {
                    for fc in 0..f {
                        let u = seam[(fr, fc)];
                        if u != 0.0 {
                            base_d[(r, layout.index(0, col_node, fc))] += c * u;
                        }
                    }
                } else {
                    base_d[(r, layout.index(0, col_node, fr))] += c;
                }
            }
        }
    }
    let mut fiber_d = DMatrix::zeros(dim, dim);
    for q in 0..2 {
        let sign = if q == 0 { 1.0 } else { -1.0 };
        for node in 0..n {
            for c in 0..f {
                for r in 0..f {
                    let v = fiber.differential[(r, c)];
                    if v != 0.0 {
                        fiber_d[(layout.index(q, node, r), layout.index(q, node, c))] = sign * v;
                    }
                }
            }
        }
    }
    let base_part = &base_d + mass_adjoint(&base_d, &mass, &mass);
    let fiber_part = &fiber_d + mass_adjoint(&fiber_d, &mass, &mass);
    let differential = &base_d * a + &fiber_d * b;
    let dirac = &base_part * a + &fiber_part * b;
    let fdeg = fiber.degrees();
    let base_degree = (0..dim).map(|i| i / (n * f)).collect();
    let fiber_degree = (0..dim).map(|i| fdeg[i % f]).collect();
    Ok(WittenAssembly {
        layout,
        scaling: *scaling,
        tau: fiber.model().tau(),
        differential,
        base_differential: base_d,
        fiber_differential: fiber_d,
        dirac,
        mass,
        base_part,
        fiber_part,
        base_degree,
        fiber_degree,
        seam,
        fiber: fiber.clone(),
    })
}

/// Eigen-decomposition of D² on one (base degree, fiber degree) block.
#[derive(Debug, Clone)]
pub struct SplitBlock {
    pub split: (usize, usize),
    pub indices: Vec<usize>,
    pub eigenvalues: Vec<f64>,
}

impl WittenAssembly {
    pub fn fiber(&self) -> &FiberOperator {
        &self.fiber
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn total_degree(&self, i: usize) -> usize {
        self.base_degree[i] + self.fiber_degree[i]
    }

    /// S D S⁻¹, symmetric.
    pub fn symmetric_dirac(&self) -> DMatrix<f64> {
        conjugate_by_mass(&self.dirac, &self.mass)
    }

    /// Reassembles at a new scaling without rebuilding the parts.
    pub fn rescaled(&self, scaling: &ScalingParams) -> Result<WittenAssembly> {
        if scaling.alpha() != self.scaling.alpha() {
            return Err(Error::Contract("rescaling cannot change the holonomy".into()));
        }
        let a = scaling.time() * scaling.epsilon();
        let b = scaling.time() * scaling.vertical();
        Ok(WittenAssembly {
            scaling: *scaling,
            differential: &self.base_differential * a + &self.fiber_differential * b,
            dirac: &self.base_part * a + &self.fiber_part * b,
            ..self.clone()
        })
    }

    /// Relative size of d∘d.
    pub fn differential_square_residual(&self) -> f64 {
        let d2 = &self.differential * &self.differential;
        let scale = self.differential.amax().powi(2).max(1e-300);
        d2.amax() / scale
    }

    /// Indices of a (base degree, fiber degree) block.
    pub fn split_indices(&self, split: (usize, usize)) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.base_degree[i] == split.0 && self.fiber_degree[i] == split.1)
            .collect()
    }

    pub fn splits(&self) -> Vec<(usize, usize)> {
        let k = self.fiber.model().k();
        let mut out = Vec::new();
        for qb in 0..=1 {
            for qf in 0..=k {
                if !self.split_indices((qb, qf)).is_empty() {
                    out.push((qb, qf));
                }
            }
        }
        out
    }

    /// D̂² restricted to a block, computed as R Rᵀ with R the block rows of D̂.
    pub fn laplacian_block(&self, dhat: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
        let dim = self.dim();
        let cols: Vec<usize> = (0..dim)
            .filter(|&c| idx.iter().any(|&r| dhat[(r, c)] != 0.0))
            .collect();
        let r = DMatrix::from_fn(idx.len(), cols.len(), |i, j| dhat[(idx[i], cols[j])]);
        &r * r.transpose()
    }

    /// Largest entry of D̂² coupling different (base, fiber) degree blocks,
    /// relative to the largest entry of D̂².
    pub fn block_leakage(&self) -> f64 {
        let dhat = self.symmetric_dirac();
        let sq = &dhat * &dhat;
        let scale = sq.amax().max(1e-300);
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if self.base_degree[i] != self.base_degree[j] || self.fiber_degree[i] != self.fiber_degree[j] {
                    worst = worst.max(sq[(i, j)].abs());
                }
            }
        }
        worst / scale
    }

    /// Eigenvalues of D² per (base, fiber) degree block, computed in parallel.
    pub fn laplacian_blocks(&self) -> Vec<SplitBlock> {
        let dhat = self.symmetric_dirac();
        self.splits()
            .into_par_iter()
            .map(|split| {
                let indices = self.split_indices(split);
                let block = self.laplacian_block(&dhat, &indices);
                let eigenvalues = sym_eigen(&block).0.iter().copied().collect();
                SplitBlock {
                    split,
                    indices,
                    eigenvalues,
                }
            })
            .collect()
    }

    /// Spectrum of D² with split-degree annotations and no truncation tail.
    pub fn spectrum(&self) -> Result<Spectrum> {
        let mut lines = Vec::new();
        for block in self.laplacian_blocks() {
            for &v in &block.eigenvalues {
                lines.push(SpectrumLine {
                    degree: block.split.0 + block.split.1,
                    split: Some(block.split),
                    eigenvalue: v.max(0.0),
                    multiplicity: 1,
                });
            }
        }
        Spectrum::from_lines(lines, TailModel::Complete)
    }

    /// Kernel dimension of D² per total degree, counting eigenvalues below `tol`.
    pub fn kernel_dimensions(&self, tol: f64) -> Vec<usize> {
        let k = self.fiber.model().k();
        let mut dims = vec![0usize; k + 2];
        for block in self.laplacian_blocks() {
            dims[block.split.0 + block.split.1] += block.eigenvalues.iter().filter(|v| v.abs() <= tol).count();
        }
        dims
    }

    /// Eigenvalues of the symmetric form of (1/ε)D, ascending.
    pub fn scaled_dirac_eigenvalues(&self) -> Vec<f64> {
        let a = self.symmetric_dirac() / self.scaling.epsilon();
        sym_eigen(&a).0.iter().copied().collect()
    }
}

/// Mass-orthonormal kernel vectors of a symmetric block on `idx`, as columns
/// of a `dim`-row matrix.
fn block_kernel(block: &DMatrix<f64>, idx: &[usize], mass: &DVector<f64>, dim: usize, tol: f64) -> Vec<DVector<f64>> {
    let (vals, vecs) = sym_eigen(block);
    (0..vals.len())
        .filter(|&c| vals[c].abs() <= tol)
        .map(|c| {
            let mut x = DVector::zeros(dim);
            for (r, &i) in idx.iter().enumerate() {
                x[i] = vecs[(r, c)] / mass[i].sqrt();
            }
            x
        })
        .collect()
}

fn columns(dim: usize, vs: &[DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(dim, vs.len(), |i, j| vs[j][i])
}

impl DiscreteComplex {
    /// Mass-orthonormal bases of the discrete harmonic 0- and 1-forms.
    pub fn harmonic_basis(&self, tol: f64) -> Vec<DMatrix<f64>> {
        let n = self.nodes();
        let mass = self.mass();
        let s = self.symmetric_laplacian();
        (0..2)
            .map(|q| {
                let idx: Vec<usize> = (q * n..(q + 1) * n).collect();
                let block = crate::linalg::submatrix(&s, &idx);
                columns(2 * n, &block_kernel(&block, &idx, &mass, 2 * n, tol))
            })
            .collect()
    }
}

impl WittenAssembly {
    /// Mass-orthonormal bases of ker D² per total degree 0..=k+1.
    pub fn harmonic_basis(&self, tol: f64) -> Vec<DMatrix<f64>> {
        let dhat = self.symmetric_dirac();
        let dim = self.dim();
        let k = self.fiber.model().k();
        let mut per_degree: Vec<Vec<DVector<f64>>> = vec![Vec::new(); k + 2];
        for split in self.splits() {
            let idx = self.split_indices(split);
            let block = self.laplacian_block(&dhat, &idx);
            per_degree[split.0 + split.1].extend(block_kernel(&block, &idx, &self.mass, dim, tol));
        }
        per_degree.iter().map(|vs| columns(dim, vs)).collect()
    }
}

/// Projection p = 1 ⊗ P₀ onto base forms tensor the fiber kernel.
#[derive(Debug, Clone)]
pub struct KernelProjection {
    pub p: DMatrix<f64>,
    pub complement: DMatrix<f64>,
    pub fiber_kernel: DVector<f64>,
    /// dim range(p) per total degree.
    pub range_dims: Vec<usize>,
}

pub fn kernel_projection(assembly: &WittenAssembly) -> Result<KernelProjection> {
    if assembly.mass.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::NumericalRank("mass matrix is degenerate".into()));
    }
    let fiber = assembly.fiber();
    let ker = fiber.kernel(1e-9);
    if ker.ncols() != 1 {
        return Err(Error::NumericalRank(format!(
            "fiber kernel has dimension {}, expected 1",
            ker.ncols()
        )));
    }
    let v = ker.column(0).into_owned();
    let p0 = &v * v.transpose();
    let layout = assembly.layout;
    let f = layout.fiber_dim;
    let dim = layout.dim();
    let mut p = DMatrix::zeros(dim, dim);
    for block in 0..(2 * layout.nodes) {
        p.view_mut((block * f, block * f), (f, f)).copy_from(&p0);
    }
    let complement = DMatrix::identity(dim, dim) - &p;
    let k = fiber.model().k();
    let mut range_dims = vec![0usize; k + 2];
    let fdeg = fiber.degrees();
    let kernel_degree = (0..f)
        .filter(|&i| v[i].abs() > 1e-8)
        .map(|i| fdeg[i])
        .max()
        .unwrap_or(0);
    for q in 0..2 {
        range_dims[q + kernel_degree] += layout.nodes;
    }
    Ok(KernelProjection {
        p,
        complement,
        fiber_kernel: v,
        range_dims,
    })
}

/// Blocks of A = (1/ε)D̂ against range(p)^⊥ ⊕ range(p).
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub a3: DMatrix<f64>,
    /// p (D̂_M ⊗ 1) p.
    pub d0: DMatrix<f64>,
    pub reassembly_error: f64,
}

pub fn block_decompose(assembly: &WittenAssembly, proj: &KernelProjection) -> BlockDecomposition {
    let eps = assembly.scaling.epsilon();
    let a = assembly.symmetric_dirac() / eps;
    let p = &proj.p;
    let q = &proj.complement;
    let ap = &a * p;
    let aq = &a * q;
    let a1 = q * &aq;
    let a2 = q * &ap;
    let a3 = p * &ap;
    let base = conjugate_by_mass(&assembly.base_part, &assembly.mass);
    let d0 = p * &base * p;
    let re = &a1 + &a2 + a2.transpose() + &a3;
    let reassembly_error = (&re - &a).amax() / a.amax().max(1e-300);
    BlockDecomposition {
        a1,
        a2,
        a3,
        d0,
        reassembly_error,
    }
}

/// e^{−tH} for symmetric H by eigendecomposition.
pub fn heat_operator(h: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("heat time must be nonnegative, got {t}")));
    }
    require_symmetric(h, 1e-10, "heat generator")?;
    Ok(sym_function(h, |x| (-t * x).exp()))
}

/// Two-line contour {x ± ib : |x| ≤ x_max} sampled at `nodes` trapezoid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub offset: f64,
    pub x_max: f64,
    pub nodes: usize,
}

impl Default for Contour {
    fn default() -> Self {
        Self {
            offset: 2.0,
            x_max: 40.0,
            nodes: 512,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContourHeat {
    pub matrix: DMatrix<f64>,
    /// Quadrature plus truncation estimate.
    pub error_bound: f64,
    /// Largest observed resolvent Frobenius norm along the contour.
    pub max_resolvent_norm: f64,
}

/// e^{−tD²} = (1/π) Im ∫ e^{−t(x−ib)²} (x − ib − D)⁻¹ dx for real D with
/// spectrum inside the strip |Im λ| < b.
pub fn contour_heat_operator(d: &DMatrix<f64>, t: f64, contour: &Contour) -> Result<ContourHeat> {
    if !d.is_square() {
        return Err(Error::Contract("contour heat operator needs a square matrix".into()));
    }
    if !(t > 0.0) || !(contour.offset > 0.0) || !(contour.x_max > 0.0) {
        return Err(Error::Domain("t, offset and x_max must be positive".into()));
    }
    if contour.nodes < 64 {
        return Err(Error::Domain(format!(
            "contour quadrature needs at least 64 nodes, got {}",
            contour.nodes
        )));
    }
    let n = d.nrows();
    let symmetric = crate::linalg::asymmetry(d) <= 1e-12;
    let b = contour.offset;
    let limit = if symmetric {
        (n as f64).sqrt() / b * (1.0 + 1e-8)
    } else {
        (n as f64).sqrt() / b * 1e6
    };
    let h = 2.0 * contour.x_max / (contour.nodes - 1) as f64;
    let dc: DMatrix<Complex64> = d.map(|v| Complex64::new(v, 0.0));
    let parts: Vec<Result<(DMatrix<f64>, f64)>> = (0..contour.nodes)
        .into_par_iter()
        .map(|i| {
            let x = -contour.x_max + i as f64 * h;
            let lam = Complex64::new(x, -b);
            let w = if i == 0 || i == contour.nodes - 1 { 0.5 } else { 1.0 };
            let f = (-t * lam * lam).exp() * w * h / PI;
            let shifted = DMatrix::<Complex64>::identity(n, n) * lam - &dc;
            let res = shifted.lu().try_inverse().ok_or_else(|| {
                Error::ResolventBlowUp(format!("resolvent is singular at λ = {x} − {b}i"))
            })?;
            let norm = res.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > limit {
                return Err(Error::ResolventBlowUp(format!(
                    "‖(λ − D)⁻¹‖ = {norm:.3e} at λ = {x} − {b}i exceeds {limit:.3e}"
                )));
            }
            Ok((res.map(|z| (z * f).im), norm))
        })
        .collect();
    let mut acc = DMatrix::zeros(n, n);
    let mut max_norm = 0.0f64;
    for p in parts {
        let (m, norm) = p?;
        acc += m;
        max_norm = max_norm.max(norm);
    }
    // truncation: ∫_{|x|>X} |e^{−t(x−ib)²}| ‖R‖ dx / π
    let x = contour.x_max;
    let trunc = 2.0 / PI * (t * b * b).exp() / b * (-t * x * x).exp() / (2.0 * t * x);
    // trapezoid in a strip of half-width b/2
    let strip = (2.0 / (PI * b)) * (2.25 * t * b * b).exp() * (PI / t).sqrt();
    let decay = (-PI * b / h).exp();
    let quad = 2.0 * strip * decay / (1.0 - decay);
    Ok(ContourHeat {
        matrix: acc,
        error_bound: trunc + quad,
        max_resolvent_norm: max_norm,
    })
}

/// Coordinate text `row col value` for nonzero entries.
pub fn matrix_coordinate_text(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{i} {j} {v:.16e}");
            }
        }
    }
    out
}

/// Sidecar description of an exported matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDescriptor {
    pub rows: usize,
    pub cols: usize,
    pub degree_labels: Vec<usize>,
    pub parameters: BTreeMap<String, f64>,
}

impl WittenAssembly {
    pub fn descriptor(&self) -> MatrixDescriptor {
        let mut parameters = BTreeMap::new();
        parameters.insert("epsilon".into(), self.scaling.epsilon());
        parameters.insert("T".into(), self.scaling.vertical());
        parameters.insert("t".into(), self.scaling.time());
        parameters.insert("alpha".into(), self.scaling.alpha());
        parameters.insert("tau".into(), self.tau);
        parameters.insert("nodes".into(), self.layout.nodes as f64);
        parameters.insert("fiber_dim".into(), self.layout.fiber_dim as f64);
        MatrixDescriptor {
            rows: self.dim(),
            cols: self.dim(),
            degree_labels: (0..self.dim()).map(|i| self.total_degree(i)).collect(),
            parameters,
        }
    }
}

/// ‖e^{−tA²} − p e^{−t D₀²} p‖ for the blocks of (1/ε)D.
pub fn large_time_difference(blocks: &BlockDecomposition, proj: &KernelProjection, t: f64) -> f64 {
    let a = &blocks.a1 + &blocks.a2 + blocks.a2.transpose() + &blocks.a3;
    let heat = sym_function(&a, |x| (-t * x * x).exp());
    let limit = &proj.p * sym_function(&blocks.d0, |x| (-t * x * x).exp()) * &proj.p;
    sym_norm(&(heat - limit))
}

/// Block-wise ‖e^{−(t/ε²)D²} − p e^{−tD₀²} p‖ with D₀ = p D̂_M p.
///
/// e^{−(t/ε²)D²} is evaluated on each (base, fiber) degree block of D̂² and the
/// limit on range(p) in the basis e_node ⊗ v, v the fiber kernel vector. The
/// result also reports the p-block heat eigenvalues.
#[derive(Debug, Clone)]
pub struct LargeTimeComparison {
    pub difference: f64,
    /// Eigenvalues of e^{−tD₀²} on range(p), descending.
    pub limit_heat: Vec<f64>,
    /// Largest entry of D̂² coupling different blocks, relative.
    pub leakage: f64,
}

pub fn large_time_comparison(assembly: &WittenAssembly, proj: &KernelProjection, t: f64) -> LargeTimeComparison {
    let eps = assembly.scaling.epsilon();
    let layout = assembly.layout;
    let f = layout.fiber_dim;
    let dim = layout.dim();
    let n_range = 2 * layout.nodes;
    let v = &proj.fiber_kernel;
    let basis = DMatrix::from_fn(dim, n_range, |i, j| if i / f == j { v[i % f] } else { 0.0 });
    let base = conjugate_by_mass(&assembly.base_part, &assembly.mass);
    let d0 = basis.transpose() * base * &basis;
    let (vals, vecs) = sym_eigen(&d0);
    let limit_coeff = DMatrix::from_fn(n_range, n_range, |i, j| {
        (0..n_range).map(|c| vecs[(i, c)] * (-t * vals[c] * vals[c]).exp() * vecs[(j, c)]).sum()
    });
    let limit = &basis * limit_coeff * basis.transpose();
    let mut limit_heat: Vec<f64> = vals.iter().map(|x| (-t * x * x).exp()).collect();
    limit_heat.sort_by(|a, b| b.total_cmp(a));

    let dhat = assembly.symmetric_dirac();
    let splits = assembly.splits();
    let diffs: Vec<f64> = splits
        .par_iter()
        .map(|&split| {
            let idx = assembly.split_indices(split);
            let block = assembly.laplacian_block(&dhat, &idx) / (eps * eps);
            let heat = sym_function(&block, |x| (-t * x).exp());
            let lim = crate::linalg::submatrix(&limit, &idx);
            sym_norm(&(heat - lim))
        })
        .collect();
    // the limit must not couple different blocks either
    let mut off = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            if assembly.base_degree[i] != assembly.base_degree[j] || assembly.fiber_degree[i] != assembly.fiber_degree[j] {
                off = off.max(limit[(i, j)].abs());
            }
        }
    }
    LargeTimeComparison {
        difference: diffs.into_iter().fold(0.0, f64::max).max(off),
        limit_heat,
        leakage: assembly.block_leakage(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;

    #[test]
    fn circle_complex_constant_metric() {
        let l = 2.0 * PI;
        let grid = CircleGrid::uniform(64, l).unwrap();
        let c = build_circle_complex(&grid).unwrap();
        assert!((&c.d0 * DVector::from_element(64, 1.0)).amax() < 1e-12);
        let (e0, e1) = c.laplacian_eigenvalues();
        assert!(e0[0].abs() < 1e-10 && e1[0].abs() < 1e-10);
        let h = grid.spacing();
        for m in 1..4 {
            let exact = (4.0 / (h * h)) * (m as f64 * h / 2.0).sin().powi(2);
            assert!((e0[2 * m - 1] - exact).abs() < 1e-9 * exact);
            assert!((e1[2 * m] - exact).abs() < 1e-9 * exact);
        }
        assert!(CircleGrid::new(vec![1.0; 5]).is_err());
        assert!(CircleGrid::new(vec![1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn dirac_is_mass_symmetric() {
        let grid = CircleGrid::from_fn(32, |th| 1.0 + 0.3 * th.cos()).unwrap();
        let c = build_circle_complex(&grid).unwrap();
        let m = DMatrix::from_diagonal(&c.mass());
        let md = &m * &c.dirac;
        assert!(crate::linalg::asymmetry(&md) < 1e-13);
        let vals = sym_eigenvalues(&c.symmetric_laplacian());
        assert!(vals[0] > -1e-10);
    }

    #[test]
    fn fiber_galerkin_spectrum() {
        let model = FiberModel::new(2, 1.0, 6).unwrap();
        let op = build_fiber_operator(&model).unwrap();
        assert!((&op.differential * &op.differential).amax() < 1e-13);
        let by_degree = op.degree_eigenvalues();
        let expect0 = [0.0, 2.0, 2.0, 4.0, 4.0, 4.0];
        for (a, b) in by_degree[0].iter().zip(expect0) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((by_degree[1][0] - 2.0).abs() < 1e-10);
        assert!((by_degree[2][0] - 4.0).abs() < 1e-10);
        let ker = op.kernel(1e-9);
        assert_eq!(ker.ncols(), 1);
        assert!((ker[(op.vacuum_index(), 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fiber_tau_rescaling() {
        let m1 = FiberModel::new(2, 1.0, 4).unwrap();
        let op1 = build_fiber_operator(&m1).unwrap();
        let op2 = build_fiber_operator(&m1.with_tau(2.0).unwrap()).unwrap();
        assert!((&op1.dirac * 2f64.sqrt() - &op2.dirac).amax() < 1e-13);
    }

    #[test]
    fn rotation_commutes_with_fiber_dirac() {
        let model = FiberModel::new(2, 1.0, 4).unwrap();
        let op = build_fiber_operator(&model).unwrap();
        let u = op.rotation(0.7).unwrap();
        let id = DMatrix::identity(op.dim(), op.dim());
        assert!((u.transpose() * &u - &id).amax() < 1e-12);
        assert!((&u * &op.differential - &op.differential * &u).amax() < 1e-12);
        let upi = op.rotation(PI).unwrap();
        assert!((&upi * &upi - &id).amax() < 1e-12);
    }

    #[test]
    fn hermite_recursion_orthonormal() {
        let tau = 1.5;
        let h = 0.01;
        let mut gram = [[0.0; 5]; 5];
        let mut y = -10.0;
        while y <= 10.0 {
            let p = hermite_functions(tau, y, 5);
            for i in 0..5 {
                for j in 0..5 {
                    gram[i][j] += p[i] * p[j] * h;
                }
            }
            y += h;
        }
        for i in 0..5 {
            for j in 0..5 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i][j] - e).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn oracle_agrees_with_hermite_path() {
        let model = FiberModel::new(2, 1.0, 8).unwrap();
        let oracle = fd_fiber_oracle(&model, 8.0, 400, 12);
        assert_eq!(oracle.kernel_dimension, 1);
        assert!(oracle.ground_state_error < 1e-3);
        assert!((oracle.lines[0].1).abs() < 1e-6);
        assert_eq!((oracle.lines[1].0, oracle.lines[1].2), (0, 2));
        assert!((oracle.lines[1].1 - 2.0).abs() < 1e-5);
        let op = build_fiber_operator(&model).unwrap();
        assert!(hermite_ground_state_error(&op, 8.0, 81).unwrap() < 1e-12);
    }

    fn small_assembly(alpha: f64, eps: f64) -> WittenAssembly {
        let grid = CircleGrid::uniform(16, 2.0 * PI).unwrap();
        let c = build_circle_complex(&grid).unwrap();
        let op = build_fiber_operator(&FiberModel::new(2, 1.0, 2).unwrap()).unwrap();
        let sc = ScalingParams::new(eps, 1.0, 1.0, alpha).unwrap();
        assemble_total_dirac(&c, &op, &sc).unwrap()
    }

    #[test]
    fn assembly_structure() {
        for alpha in [0.0, PI, 1.3] {
            let asm = small_assembly(alpha, 0.5);
            assert!(asm.differential_square_residual() < 1e-12);
            let md = DMatrix::from_diagonal(&asm.mass) * &asm.dirac;
            assert!(crate::linalg::asymmetry(&md) < 1e-12);
            assert!(asm.block_leakage() < 1e-12);
            let dims = asm.kernel_dimensions(1e-9);
            assert_eq!(&dims[..4], &[1, 1, 0, 0], "alpha = {alpha}");
        }
    }

    #[test]
    fn rescaling_is_linear_in_epsilon() {
        let asm = small_assembly(0.0, 1.0);
        let half = asm.rescaled(&ScalingParams::adiabatic(0.5).unwrap()).unwrap();
        let direct = small_assembly(0.0, 0.5);
        assert!((&half.dirac - &direct.dirac).amax() < 1e-13);
        assert!((&half.differential - &direct.differential).amax() < 1e-13);
    }

    #[test]
    fn blocks_of_untwisted_product() {
        let asm = small_assembly(0.0, 0.5);
        let proj = kernel_projection(&asm).unwrap();
        assert_eq!(&proj.range_dims[..4], &[16, 16, 0, 0]);
        let pp = &proj.p * &proj.p;
        assert!((&pp - &proj.p).amax() < 1e-12);
        let blocks = block_decompose(&asm, &proj);
        assert!(blocks.reassembly_error < 1e-12);
        assert!(blocks.a2.amax() < 1e-12);
        assert!((&blocks.a3 - &blocks.d0).amax() < 1e-12);
    }

    #[test]
    fn contour_matches_exponential() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let c = contour_heat_operator(&d, 1.0, &Contour { offset: 2.0, x_max: 40.0, nodes: 256 }).unwrap();
        assert!((c.matrix[(0, 0)] - (-1.0f64).exp()).abs() < 1e-8);
        assert!((c.matrix[(1, 1)] - (-9.0f64).exp()).abs() < 1e-8);
        assert!(c.matrix[(0, 1)].abs() < 1e-8);
        let z = contour_heat_operator(&DMatrix::zeros(3, 3), 0.5, &Contour::default()).unwrap();
        assert!((z.matrix - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn contour_detects_blow_up() {
        let b = 1.0;
        let d = DMatrix::from_row_slice(2, 2, &[0.0, -b, b, 0.0]);
        let r = contour_heat_operator(&d, 1.0, &Contour { offset: b, x_max: 10.0, nodes: 65 });
        assert!(matches!(r, Err(Error::ResolventBlowUp(_))));
    }

    #[test]
    fn heat_semigroup() {
        let d = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let h = &d * d.transpose();
        let e1 = heat_operator(&h, 0.3).unwrap();
        let e2 = heat_operator(&h, 0.5).unwrap();
        let e3 = heat_operator(&h, 0.8).unwrap();
        assert!((&e1 * &e2 - e3).amax() < 1e-10);
        assert!((heat_operator(&h, 0.0).unwrap() - DMatrix::identity(6, 6)).amax() < 1e-12);
        assert!(heat_operator(&d, 1.0).is_err());
    }

    #[test]
    fn blockwise_large_time_matches_dense() {
        let grid = CircleGrid::uniform(12, 2.0 * PI).unwrap();
        let complex = build_circle_complex(&grid).unwrap();
        let fiber = build_fiber_operator(&FiberModel::new(2, 1.0, 1).unwrap()).unwrap();
        for (eps, alpha) in [(1.0, 0.0), (0.5, 0.0), (0.7, PI)] {
            let scaling = ScalingParams::new(eps, 1.0, 1.0, alpha).unwrap();
            let asm = assemble_total_dirac(&complex, &fiber, &scaling).unwrap();
            let proj = kernel_projection(&asm).unwrap();
            let dense = large_time_difference(&block_decompose(&asm, &proj), &proj, 0.8);
            let fast = large_time_comparison(&asm, &proj, 0.8);
            assert!((dense - fast.difference).abs() < 1e-10, "{dense} vs {}", fast.difference);
            assert!(fast.leakage < 1e-13);
        }
    }
}
