//! The discrete spectrum, the measure ν, atom eigenfunctions and the
//! Green kernel, for `z = 1`.
//!
//! Normalisation of ν: the continuous part has density
//! `(1−q)·W(e^{iθ})/(2πK)` in θ ∈ (0,π), and an atom λ carries mass
//! `(1−q)·(−Res_λ)/K` where `Res_λ` is the residue of `1/(λ′c(λ′)c(1/λ′))`.
//! With this choice `∫ dν = 1/w(−1)` and the moment polynomials have norms
//! `a^{2n}/(qⁿ w(−qⁿ))`. The transform pairs against `ν/(1−q)`, see
//! [`crate::transform`].

use crate::eigenfun::{
    c_one, c_theta, l_coefficients, ln_c_theta, moment_polys, phi_on, psi_big_hyp, psi_big_on, psi_big_series_ok,
    psi_small_on,
};
use crate::lattice::{weight_w, Branch, Grid, GridFunction, Point, QParams, SRegime};
use crate::qcore::{qpoch, qpoch_inf, qpoch_inf_prod, theta, theta_prod, QBase};
use crate::{Error, Result, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Atoms below this fraction of the accumulated mass are dropped when only
/// mass-level accuracy matters.
pub const ATOM_TOL_MASS: f64 = 1e-14;

/// Default truncation for measures used with polynomial moments. Degree-n
/// moments draw on atoms far below the mass scale, so keep everything
/// representable in double precision.
pub const ATOM_TOL_MOMENTS: f64 = 1e-300;

pub const DEFAULT_N_QUAD: usize = 200;

/// Trapezoid nodes of the residue oracle.
pub const RESIDUE_NODES: usize = 64;

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

fn require_z_one(p: &QParams) -> Result<()> {
    if (p.z - 1.0).abs() > 1e-15 {
        return Err(Error::Domain(format!("spectral data needs z = 1, got {}", p.z)));
    }
    Ok(())
}

/// Which branch of the spectrum an atom belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AtomKind {
    /// sign·a·q^{m+1/2}
    Family { sign: i8, m: i64 },
    /// s/a, present for real s with |s/a| < 1
    SOverA,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub lambda: f64,
    pub kind: AtomKind,
    /// Closed-form Ŵ as displayed in the literature.
    pub w_hat: f64,
    /// Residue of 1/(λ′c(λ′)c(1/λ′)) at λ, from the closed form.
    pub residue: f64,
    /// Mass in ν.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSpectrum {
    pub atoms: Vec<Atom>,
    pub truncation_tol: f64,
}

/// sign·a·q^{m+1/2}, with the sign of a kept: L changes sign with a.
fn family_lambda(sign: i8, m: i64, p: &QParams) -> f64 {
    sign as f64 * p.a * p.q.pow_half(2 * m + 1)
}

/// Closed-form Ŵ(±aq^{m+1/2}); numerically it is the residue itself.
pub fn family_w_hat(sign: i8, m: i64, p: &QParams) -> Result<f64> {
    let q = p.q;
    let q2 = q.squared();
    let (a, s) = (p.a, p.s);
    let a2 = a * a;
    let sq = q.get().sqrt();
    let e = sign as f64;
    let r = |x: f64| C64::new(x, 0.0);
    let num = qpoch_inf(r(a2), q).powi(2)
        * qpoch_inf_prod(&[r(a2 * q.get()), r(1.0 / (a2 * q.get()))], q)
        * theta_prod(&[q.get() * s * s, q.get() / (s * s)], q2)?;
    let den = 2.0
        * qpoch_inf(r(q.get() * q.get()), q2).powi(2)
        * qpoch_inf_prod(&[e * a2 * sq * s, e * a2 * sq / s, e * s / sq, e / (s * sq)], q)
        * theta(r(a2 * a2 * q.get() * q.get()), q2)?;
    let fin = (1.0 - a2 * q.pow(2 * m + 1)) / (1.0 - a2 * q.get())
        * qpoch(e * a2 * sq * s, q, m)?
        * qpoch(e * a2 * sq / s, q, m)?
        / (qpoch(e * q.get() * sq * s, q, m)? * qpoch(e * q.get() * sq / s, q, m)?)
        * q.pow(m * (m + 1));
    Ok((num / den * fin).re)
}

/// Closed-form Ŵ(s/a) = (a², s²/a²;q)_∞ θ(s²q;q²) / [(q, s²;q)_∞ θ(a⁴q/s²;q²)].
pub fn s_over_a_w_hat(p: &QParams) -> Result<f64> {
    let q = p.q;
    let q2 = q.squared();
    let (a, s) = (C64::new(p.a, 0.0), p.s);
    let num = qpoch_inf_prod(&[a * a, s * s / (a * a)], q) * theta(s * s * q.get(), q2)?;
    let den = qpoch_inf_prod(&[C64::new(q.get(), 0.0), s * s], q) * theta(a.powi(4) * q.get() / (s * s), q2)?;
    Ok((num / den).re)
}

/// The ν-mass that goes with a residue.
pub fn mass_from_residue(residue: f64, p: &QParams) -> f64 {
    -(1.0 - p.q.get()) * residue / p.k_z()
}

fn make_atom(kind: AtomKind, p: &QParams) -> Result<Atom> {
    let (lambda, w_hat, residue) = match kind {
        AtomKind::Family { sign, m } => {
            let w = family_w_hat(sign, m, p)?;
            (family_lambda(sign, m, p), w, w)
        }
        AtomKind::SOverA => {
            let w = s_over_a_w_hat(p)?;
            (p.s.re / p.a, w, -w)
        }
    };
    let mass = mass_from_residue(residue, p);
    if !mass.is_finite() {
        return Err(Error::Degenerate(format!("closed-form mass at {lambda} is not finite")));
    }
    Ok(Atom { lambda, kind, w_hat, residue, mass })
}

pub(crate) fn s_over_a_present(p: &QParams) -> Result<bool> {
    if p.regime() != Some(SRegime::Real) {
        return Ok(false);
    }
    let r = (p.s.re / p.a).abs();
    if (r - 1.0).abs() <= 1e-12 {
        return Err(Error::Config("|s/a| = 1 is a boundary case".into()));
    }
    Ok(r < 1.0)
}

/// Every point of S with |λ| ≥ `floor`, masses not computed.
pub fn atom_locations(p: &QParams, floor: f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    if s_over_a_present(p)? && (p.s.re / p.a).abs() >= floor {
        out.push(p.s.re / p.a);
    }
    let a = p.a.abs();
    let mut m = 0i64;
    while a * p.q.pow_half(2 * m - 1) < 1.0 {
        m -= 1;
    }
    loop {
        let v = a * p.q.pow_half(2 * m + 1);
        if v < floor {
            break;
        }
        out.extend([v, -v]);
        m += 1;
    }
    Ok(out)
}

/// The atoms ±aq^{m+1/2} ∈ (−1,1), plus s/a when present, with masses.
pub fn discrete_spectrum(p: &QParams, tol: f64) -> Result<DiscreteSpectrum> {
    require_z_one(p)?;
    // θ(a⁴q²;q²) = 0: atoms of the family collide and the closed forms break down
    let k = (p.a * p.a).ln() / p.q.get().ln();
    if (k - k.round()).abs() <= 1e-10 {
        return Err(Error::Degenerate(format!("a^2 = q^{} gives colliding atoms", k.round())));
    }
    let mut atoms = Vec::new();
    if s_over_a_present(p)? {
        atoms.push(make_atom(AtomKind::SOverA, p)?);
    }
    // smallest m with |a| q^{m+1/2} < 1
    let mut m = ((1.0 / p.a.abs()).ln() / p.q.get().ln() - 0.5).floor() as i64;
    while family_lambda(1, m, p).abs() >= 1.0 {
        m += 1;
    }
    let mut total: f64 = atoms.iter().map(|a| a.mass).sum();
    let mut peaked = false;
    let mut prev_max = 0.0f64;
    loop {
        let pair = [make_atom(AtomKind::Family { sign: 1, m }, p)?, make_atom(AtomKind::Family { sign: -1, m }, p)?];
        let biggest = pair[0].mass.max(pair[1].mass);
        peaked |= biggest < prev_max;
        prev_max = biggest;
        if peaked && (biggest < tol * total || biggest < f64::MIN_POSITIVE) {
            break;
        }
        for at in pair {
            total += at.mass;
            atoms.push(at);
        }
        m += 1;
    }
    Ok(DiscreteSpectrum { atoms, truncation_tol: tol })
}

/// Closed-form ν-mass of a point of S.
pub fn atom_mass(lambda: f64, p: &QParams) -> Result<f64> {
    require_z_one(p)?;
    Ok(make_atom(classify_atom(lambda, p)?, p)?.mass)
}

/// Identify λ as a member of S.
pub fn classify_atom(lambda: f64, p: &QParams) -> Result<AtomKind> {
    if lambda.abs() >= 1.0 || lambda == 0.0 {
        return Err(Error::Domain(format!("{lambda} is not in S")));
    }
    if s_over_a_present(p)? && (lambda - p.s.re / p.a).abs() <= 1e-12 * lambda.abs() {
        return Ok(AtomKind::SOverA);
    }
    let t = (lambda.abs() / p.a.abs()).ln() / p.q.get().ln() - 0.5;
    let m = t.round() as i64;
    let sign = if lambda * p.a > 0.0 { 1 } else { -1 };
    if (family_lambda(sign, m, p) - lambda).abs() <= 1e-12 * lambda.abs() {
        Ok(AtomKind::Family { sign, m })
    } else {
        Err(Error::Domain(format!("{lambda} is not in S")))
    }
}

/// W(e^{iθ}) = 1/|c₁(e^{iθ})|².
pub fn density_w(theta_: f64, p: &QParams) -> Result<f64> {
    if theta_.sin().abs() < 1e-14 {
        return Err(Error::Pole(format!("W at theta = {theta_}")));
    }
    Ok(1.0 / c_one(C64::from_polar(1.0, theta_), p)?.norm_sqr())
}

fn residue_integrand(l: C64, p: &QParams) -> Result<C64> {
    Ok(1.0 / (l * c_one(l, p)? * c_one(1.0 / l, p)?))
}

/// Distance from λ to the nearest other pole of 1/(λ′c(λ′)c(1/λ′)).
fn singularity_gap(lambda: C64, p: &QParams) -> f64 {
    let q = p.q;
    let (a, s) = (p.a, p.s);
    let mut seeds: Vec<C64> = vec![C64::new(0.0, 0.0)];
    for j in -60..=60i64 {
        let qj = q.pow(j);
        let qh = q.pow_half(2 * j + 1);
        for sign in [1.0, -1.0] {
            seeds.push(C64::new(sign * a * qh, 0.0));
            seeds.push(C64::new(sign * qh / a, 0.0));
        }
        seeds.push(a * s * qj);
        seeds.push(a / s * qj);
        seeds.push(s / a * qj);
        seeds.push(qj / (a * s));
    }
    seeds
        .into_iter()
        .map(|z| (z - lambda).norm())
        .filter(|&d| d > 1e-9 * lambda.norm())
        .fold(f64::INFINITY, f64::min)
}

fn trapezoid_residue(lambda: C64, r: f64, p: &QParams) -> Result<(C64, f64)> {
    let mut acc = C64::new(0.0, 0.0);
    let mut peak = 0.0f64;
    for k in 0..RESIDUE_NODES {
        let e = C64::from_polar(1.0, 2.0 * PI * k as f64 / RESIDUE_NODES as f64);
        let g = residue_integrand(lambda + r * e, p)?;
        peak = peak.max(g.norm());
        acc += g * r * e;
    }
    Ok((acc / RESIDUE_NODES as f64, peak * r))
}

/// Res_{λ′=λ} 1/(λ′c(λ′)c(1/λ′)) by a 64-node trapezoid rule on a circle.
///
/// The default radius is q/4 of the distance to the nearest other pole. The
/// value is recomputed at half the radius and must agree.
pub fn residue_oracle(lambda: C64, p: &QParams, radius: Option<f64>) -> Result<C64> {
    require_z_one(p)?;
    let r = radius.unwrap_or_else(|| p.q.get() * singularity_gap(lambda, p) / 4.0);
    let (full, scale) = trapezoid_residue(lambda, r, p)?;
    let (half, _) = trapezoid_residue(lambda, r / 2.0, p)?;
    if (full - half).norm() > 1e-6 * full.norm() + 1e-12 * scale {
        return Err(Error::Contour(format!("radius {r} at {lambda}: {full} vs {half}")));
    }
    Ok(full)
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadNode {
    pub theta: f64,
    /// Gauss–Legendre weight in θ.
    pub weight: f64,
    /// dν/dθ at the node.
    pub density: f64,
}

/// ν: Gauss–Legendre samples of the density on (0,π) plus atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub params: QParams,
    #[serde(rename = "K")]
    pub k: f64,
    pub nodes: Vec<QuadNode>,
    pub atoms: DiscreteSpectrum,
}

pub fn build_measure(p: &QParams, n_quad: usize, tol: f64) -> Result<SpectralMeasure> {
    require_z_one(p)?;
    if n_quad == 0 {
        return Err(Error::Config("n_quad must be positive".into()));
    }
    let k = p.k_z();
    let (x, w) = gauss_legendre(n_quad);
    let scale = (1.0 - p.q.get()) / (2.0 * PI * k);
    let nodes = x
        .par_iter()
        .zip(w.par_iter())
        .map(|(&xi, &wi)| {
            let theta_ = PI * (xi + 1.0) / 2.0;
            Ok(QuadNode { theta: theta_, weight: wi * PI / 2.0, density: scale * density_w(theta_, p)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralMeasure { params: *p, k, nodes, atoms: discrete_spectrum(p, tol)? })
}

impl SpectralMeasure {
    pub fn continuous_mass(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight * n.density).sum()
    }

    pub fn discrete_mass(&self) -> f64 {
        self.atoms.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.continuous_mass() + self.discrete_mass()
    }

    pub fn node_lambdas(&self) -> impl Iterator<Item = C64> + '_ {
        self.nodes.iter().map(|n| C64::from_polar(1.0, n.theta))
    }

    /// The measure with the atom at λ removed.
    pub fn without_atom(&self, lambda: f64) -> SpectralMeasure {
        let mut m = self.clone();
        m.atoms.atoms.retain(|a| (a.lambda - lambda).abs() > 1e-12 * lambda.abs());
        m
    }

    pub fn to_json(&self) -> Result<String> {
        let out = MeasureExport::from(self);
        Ok(serde_json::to_string_pretty(&out)?)
    }

    /// Flat CSV: one row per node, then one per atom.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for n in &self.nodes {
            w.serialize(CsvRow { kind: "node", theta: Some(n.theta), weight: Some(n.weight), density: Some(n.density), lambda: None, mass: None })?;
        }
        for a in &self.atoms.atoms {
            w.serialize(CsvRow { kind: "atom", theta: None, weight: None, density: None, lambda: Some(a.lambda), mass: Some(a.mass) })?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    kind: &'static str,
    theta: Option<f64>,
    weight: Option<f64>,
    density: Option<f64>,
    lambda: Option<f64>,
    mass: Option<f64>,
}

/// JSON form `{K, nodes:[{theta, weight, density}], atoms:[{lambda, mass}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureExport {
    #[serde(rename = "K")]
    pub k: f64,
    pub total_mass: f64,
    pub nodes: Vec<QuadNode>,
    pub atoms: Vec<AtomExport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomExport {
    pub lambda: f64,
    pub mass: f64,
}

impl From<&SpectralMeasure> for MeasureExport {
    fn from(m: &SpectralMeasure) -> Self {
        MeasureExport {
            k: m.k,
            total_mass: m.total_mass(),
            nodes: m.nodes.clone(),
            atoms: m.atoms.atoms.iter().map(|a| AtomExport { lambda: a.lambda, mass: a.mass }).collect(),
        }
    }
}

/// ∫ f dν for f with f(λ) = f(1/λ); the symmetry is checked at every atom.
pub fn integrate_nu(f: impl Fn(C64) -> C64 + Sync, m: &SpectralMeasure) -> Result<C64> {
    let mut acc = crate::qcore::CompensatedSum::new();
    for n in &m.nodes {
        acc.add(f(C64::from_polar(1.0, n.theta)) * (n.weight * n.density));
    }
    for at in &m.atoms.atoms {
        let l = C64::new(at.lambda, 0.0);
        let (v, vi) = (f(l), f(1.0 / l));
        if (v - vi).norm() > 1e-8 * v.norm().max(vi.norm()).max(1e-300) {
            return Err(Error::Symmetry(format!("lambda = {}", at.lambda)));
        }
        acc.add(v * at.mass);
    }
    Ok(acc.value())
}

/// Gram matrix ∫ P_n P_{n′} dν, 0 ≤ n, n′ ≤ N.
pub fn orthogonality_matrix(n: usize, m: &SpectralMeasure) -> Result<Vec<Vec<C64>>> {
    if n > 20 {
        return Err(Error::Range(format!("N = {n} exceeds 20")));
    }
    let p = &m.params;
    let mut g = vec![vec![C64::new(0.0, 0.0); n + 1]; n + 1];
    let mut add = |polys: &[C64], wt: f64| {
        for i in 0..=n {
            for j in 0..=n {
                g[i][j] += polys[i] * polys[j].conj() * wt;
            }
        }
    };
    for node in &m.nodes {
        add(&moment_polys(n, C64::from_polar(1.0, node.theta), p)?, node.weight * node.density);
    }
    for at in &m.atoms.atoms {
        add(&moment_polys(n, C64::new(at.lambda, 0.0), p)?, at.mass);
    }
    Ok(g)
}

/// a^{2n}/(qⁿ w(−qⁿ)), the squared norm of P_n.
pub fn moment_norm(n: usize, p: &QParams) -> f64 {
    p.a.powi(2 * n as i32) / (p.q.pow(n as i64) * weight_w(Point::neg(n as i64), p))
}

/// φ_λ for λ ∈ S, evaluated without the cancellations of the ψ-expansion.
///
/// On I⁻ the eigen-relation is stepped down from φ(−1) = 1. On I⁺ φ equals
/// c(λ)Ψ_λ, summed as a series for large x and carried towards 0 by the
/// eigen-relation, the direction in which Ψ_λ dominates. Scales are kept
/// in logarithms because c(λ) and Ψ_λ separately leave double range for
/// small atoms.
pub fn atom_phi_on(grid: &Grid, lambda: f64) -> Result<GridFunction> {
    atom_phi_scaled(grid, lambda, 0.0)
}

/// Running solution of a three-term recursion, stored as exp(base)·(prev, cur).
struct Scaled {
    base: C64,
    prev: C64,
    cur: C64,
}

impl Scaled {
    fn push(&mut self, next: C64) {
        self.prev = self.cur;
        self.cur = next;
        let size = self.cur.norm();
        if size > 1e100 || (size < 1e-100 && size > 0.0) {
            self.prev /= size;
            self.cur /= size;
            self.base += size.ln();
        }
    }

    fn value(&self) -> C64 {
        if self.cur.norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        (self.base + self.cur.ln()).exp()
    }
}

/// exp(ln_scale)·φ_λ for λ ∈ S. The scale is applied before exponentiating,
/// so √mass·φ_λ stays finite where φ_λ alone would not.
pub fn atom_phi_scaled(grid: &Grid, lambda: f64, ln_scale: f64) -> Result<GridFunction> {
    let p = *grid.params();
    classify_atom(lambda, &p)?;
    let l = C64::new(lambda, 0.0);
    let mu = l + 1.0 / l;
    let mut f = GridFunction::zeros(grid);

    let mut run = Scaled { base: C64::new(ln_scale, 0.0), prev: C64::new(0.0, 0.0), cur: ONE };
    f.set(Point::MINUS_ONE, run.value())?;
    for n in 0..grid.k_max() as i64 {
        let pt = Point::neg(n);
        let c = l_coefficients(pt, &p);
        run.push(((mu - c.mid) * run.cur - c.up * run.prev) / c.down);
        f.set(pt.down(), run.value())?;
    }

    let ln_c = ln_c_theta(l, &p)? + ln_scale;
    let ln_al = (p.a * l).ln();
    let lo = -(grid.l_max() as i64);
    let hi = grid.m_max() as i64;
    if !psi_big_series_ok(Point::pos(lo), &p) {
        return Err(Error::Range(format!("grid reaches only z q^-{}, too shallow for the Psi series", grid.l_max())));
    }
    let mut n0 = lo;
    while n0 < hi && psi_big_series_ok(Point::pos(n0 + 1), &p) {
        n0 += 1;
    }
    // φ(zqⁿ) = exp(ln c − n ln(aλ))·₂φ₁(…) on the series range
    for n in lo..=n0 {
        let h = psi_big_hyp(l, Point::pos(n), &p)?;
        let v = if h.norm() == 0.0 { C64::new(0.0, 0.0) } else { (ln_c - n as f64 * ln_al + h.ln()).exp() };
        f.set(Point::pos(n), v)?;
    }
    let mut run = Scaled {
        base: ln_c - n0 as f64 * ln_al,
        prev: psi_big_hyp(l, Point::pos(n0 - 1), &p)? * (p.a * l),
        cur: psi_big_hyp(l, Point::pos(n0), &p)?,
    };
    for n in n0..hi {
        let pt = Point::pos(n);
        let c = l_coefficients(pt, &p);
        run.push(((mu - c.mid) * run.cur - c.up * run.prev) / c.down);
        f.set(pt.down(), run.value())?;
    }
    Ok(f)
}

/// Kernel φ_λ(min(x,y))Ψ_λ(max(x,y))/D_λ with D_λ = K_z c_z(1/λ)(1/λ − λ).
#[derive(Debug, Clone)]
pub struct GreenKernel {
    pub lambda: C64,
    pub phi: GridFunction,
    pub psi: GridFunction,
    pub casorati: C64,
}

impl GreenKernel {
    pub fn new(lambda: C64, grid: &Grid) -> Result<Self> {
        let p = *grid.params();
        if lambda.norm() >= 1.0 || lambda.im.abs() <= 1e-12 {
            return Err(Error::Domain(format!("Green kernel needs |lambda| < 1 off the real axis, got {lambda}")));
        }
        let cm = c_theta(1.0 / lambda, &p)?;
        let d = p.k_z() * cm * (1.0 / lambda - lambda);
        if d.norm() <= 1e-300 {
            return Err(Error::Pole(format!("c(1/lambda) = 0 at {lambda}")));
        }
        let ps = psi_small_on(grid, lambda, p.s)?;
        let psi_ = psi_small_on(grid, lambda, 1.0 / p.s)?;
        let phi = phi_on(grid, lambda)?;
        let psi = psi_big_on(grid, lambda, &ps, &psi_)?;
        Ok(GreenKernel { lambda, phi, psi, casorati: d })
    }

    pub fn eval(&self, x: Point, y: Point) -> Result<C64> {
        let p = self.phi.grid().params();
        let (lo, hi) = if x.position(p) <= y.position(p) { (x, y) } else { (y, x) };
        Ok(self.phi.value(lo)? * self.psi.value(hi)? / self.casorati)
    }
}

pub fn green_kernel(lambda: C64, x: Point, y: Point, grid: &Grid) -> Result<C64> {
    GreenKernel::new(lambda, grid)?.eval(x, y)
}

/// (L − μ(λ))⁻¹ f. With the Casorati convention used here the kernel
/// integral gives −(L − μ)⁻¹, hence the sign.
pub fn resolvent_apply(f: &GridFunction, lambda: C64) -> Result<GridFunction> {
    let grid = f.grid();
    let gk = GreenKernel::new(lambda, grid)?;
    let support: Vec<(usize, Point)> = (0..grid.len()).map(|i| (i, grid.point(i))).filter(|(i, _)| f.values()[*i].norm() != 0.0).collect();
    let mut out = GridFunction::zeros(grid);
    for j in 0..grid.len() {
        let y = grid.point(j);
        let mut acc = C64::new(0.0, 0.0);
        for &(i, x) in &support {
            acc += f.values()[i] * gk.eval(x, y)? * grid.mass(i);
        }
        out.values_mut()[j] = -acc;
    }
    Ok(out)
}

/// Σ|f|²·(1−q)|x|w over the grid, split by branch.
pub fn branch_norms(f: &GridFunction) -> (f64, f64) {
    let g = f.grid();
    let mut neg = 0.0;
    let mut pos = 0.0;
    for i in 0..g.len() {
        let v = f.values()[i].norm_sqr() * g.mass(i);
        match g.point(i).branch {
            Branch::Neg => neg += v,
            Branch::Pos => pos += v,
        }
    }
    (neg, pos)
}

/// First moment check value: ((s + 1/s)/a)·∫dν.
pub fn first_moment_target(m: &SpectralMeasure) -> f64 {
    m.params.sigma() / m.params.a * m.total_mass()
}

/// (a²;q)_∞/(q;q)_∞ = 1/w(−1).
pub fn total_mass_target(p: &QParams) -> f64 {
    let q: QBase = p.q;
    (qpoch_inf(C64::new(p.a * p.a, 0.0), q) / qpoch_inf(C64::new(q.get(), 0.0), q)).re
}

/// φ_λ on a grid for any admissible λ: the atom path at atoms, ψ-expansion otherwise.
pub fn phi_for(grid: &Grid, lambda: C64) -> Result<GridFunction> {
    if lambda.im == 0.0 && classify_atom(lambda.re, grid.params()).is_ok() {
        atom_phi_on(grid, lambda.re)
    } else {
        phi_on(grid, lambda)
    }
}
