//! The operator `L`, the q⁻¹-Al-Salam–Chihara polynomials and the
//! eigenfunctions ψ, Ψ, φ with their connection coefficients.

use crate::lattice::{casorati_values, Branch, Grid, GridFunction, Point, QParams};
use crate::qcore::{ln_qpoch_inf, ln_theta, negative_power_index, phi21, qpoch_inf_prod, theta, theta_prod, QBase};
use crate::{Error, Result, C64};

/// Ψ is summed as a series while |q/(a²x)| stays below this.
pub const PSI_BIG_SERIES_MAX: f64 = 0.5;

/// Degree cap for the base q⁻¹ recurrence, where q^{-n} overflows soon after.
pub const POLY_DEGREE_CAP: usize = 60;

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// λ with μ(λ) = λ + 1/λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub lambda: C64,
    pub mu: C64,
}

impl SpectralPoint {
    pub fn new(lambda: C64) -> Result<Self> {
        if lambda.norm() == 0.0 || !lambda.re.is_finite() || !lambda.im.is_finite() {
            return Err(Error::Domain(format!("lambda = {lambda}")));
        }
        Ok(SpectralPoint { lambda, mu: lambda + 1.0 / lambda })
    }
}

/// Coefficients of `(Lf)(x) = up·f(x/q) + mid·f(x) + down·f(qx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LCoefficients {
    pub up: f64,
    pub mid: f64,
    pub down: f64,
}

pub fn l_coefficients(pt: Point, p: &QParams) -> LCoefficients {
    let x = pt.position(p);
    let a = p.a;
    let up = if pt == Point::MINUS_ONE { 0.0 } else { (1.0 + 1.0 / x) / a };
    LCoefficients { up, mid: -p.sigma() / (a * x), down: a * (1.0 + 1.0 / (a * a * x)) }
}

/// Result of [`apply_l`]: the image plus the points where a neighbour fell off the grid.
#[derive(Debug, Clone)]
pub struct LApplied {
    pub value: GridFunction,
    pub truncated: Vec<Point>,
}

/// (Lf)(x) at one grid point, or `None` if a needed neighbour is off the grid.
pub fn apply_l_at(f: &GridFunction, pt: Point) -> Option<C64> {
    let c = l_coefficients(pt, f.grid().params());
    let mut v = c.mid * f.get(pt)? + c.down * f.get(pt.down())?;
    if let Some(up) = pt.up() {
        v += c.up * f.get(up)?;
    }
    Some(v)
}

pub fn apply_l(f: &GridFunction) -> LApplied {
    let grid = f.grid();
    let p = grid.params();
    let mut truncated = Vec::new();
    let value = GridFunction::from_fn(grid, |pt| {
        let c = l_coefficients(pt, p);
        let here = f.get(pt).unwrap();
        let mut v = c.mid * here;
        match f.get(pt.down()) {
            Some(d) => v += c.down * d,
            None => truncated.push(pt),
        }
        if let Some(up) = pt.up() {
            match f.get(up) {
                Some(u) => v += c.up * u,
                None => truncated.push(pt),
            }
        }
        v
    });
    truncated.dedup();
    LApplied { value, truncated }
}

/// max |(Lf)(x) − μ f(x)| over the given points.
pub fn eigen_residual(f: &GridFunction, mu: C64, points: impl IntoIterator<Item = Point>) -> f64 {
    points
        .into_iter()
        .filter_map(|pt| Some((apply_l_at(f, pt)? - mu * f.get(pt)?).norm()))
        .fold(0.0, f64::max)
}

fn q_neg_pow(q: QBase, k: usize) -> f64 {
    (-(k as f64) * q.get().ln()).exp()
}

/// P_0..P_n of P_n(λ; b, c; q⁻¹) by the three-term recurrence.
pub fn asc_poly_rec_all(n: usize, lambda: C64, b: C64, c: C64, q: QBase) -> Result<Vec<C64>> {
    if n > POLY_DEGREE_CAP {
        return Err(Error::Range(format!("degree {n} exceeds {POLY_DEGREE_CAP}")));
    }
    let mu = lambda + 1.0 / lambda;
    let mut out = Vec::with_capacity(n + 1);
    out.push(ONE);
    let (mut prev, mut cur) = (C64::new(0.0, 0.0), ONE);
    for k in 0..n {
        let qk = q_neg_pow(q, k);
        let lead = 1.0 - b * c * qk;
        if lead.norm() <= 1e-14 * (b * c * qk).norm().max(1.0) {
            return Err(Error::Pole(format!("1 - bc q^-{k} vanishes")));
        }
        let next = ((mu - (b + c) * qk) * cur - (1.0 - qk) * prev) / lead;
        prev = cur;
        cur = next;
        out.push(cur);
    }
    Ok(out)
}

pub fn asc_poly_rec(n: usize, lambda: C64, b: C64, c: C64, q: QBase) -> Result<C64> {
    Ok(*asc_poly_rec_all(n, lambda, b, c, q)?.last().unwrap())
}

/// b^{-n} ₃φ₂(qⁿ, bλ, b/λ; bc, 0; q⁻¹, q⁻¹) as an explicit (n+1)-term sum.
pub fn asc_poly_hyp(n: usize, lambda: C64, b: C64, c: C64, q: QBase) -> Result<C64> {
    if n > POLY_DEGREE_CAP {
        return Err(Error::Range(format!("degree {n} exceeds {POLY_DEGREE_CAP}")));
    }
    let qn = q.pow(n as i64);
    let mut sum = ONE;
    let mut term = ONE;
    for k in 0..n {
        let pk = q_neg_pow(q, k);
        let den_bc = 1.0 - b * c * pk;
        if den_bc.norm() <= 1e-14 * (b * c * pk).norm().max(1.0) {
            return Err(Error::Pole(format!("(bc; 1/q)_{} vanishes", k + 1)));
        }
        let p1 = q_neg_pow(q, k + 1);
        term *= (1.0 - qn * pk) * (1.0 - b * lambda * pk) * (1.0 - b / lambda * pk) / ((1.0 - p1) * den_bc)
            * (1.0 / q.get());
        sum += term;
    }
    Ok(sum / b.powi(n as i32))
}

/// The polynomials of the moment problem, P_n(λ; s/a, 1/(sa); q⁻¹), n = 0..=n_max.
pub fn moment_polys(n_max: usize, lambda: C64, p: &QParams) -> Result<Vec<C64>> {
    asc_poly_rec_all(n_max, lambda, p.s / p.a, 1.0 / (p.s * p.a), p.q)
}

fn check_lambda(lambda: C64) -> Result<()> {
    SpectralPoint::new(lambda).map(|_| ())
}

/// ψ_λ(x; s) at |x| ≤ 1 from its ₂φ₁ series.
fn psi_series(lambda: C64, pt: Point, s: C64, p: &QParams) -> Result<C64> {
    let x = pt.position(p);
    debug_assert!(x.abs() <= 1.0 + 1e-15);
    let q = p.q;
    let a = p.a;
    let f = phi21(a * lambda / s, a / (lambda * s), q.get() / (s * s), q, C64::new(-q.get() * x, 0.0))?;
    Ok(f * s.powi(-(pt.n as i32)))
}

/// Step the eigen-relation upward: f(x/q) from f(x) and f(qx).
fn step_up(pt: Point, fx: C64, fqx: C64, mu: C64, p: &QParams) -> C64 {
    let c = l_coefficients(pt, p);
    ((mu - c.mid) * fx - c.down * fqx) / c.up
}

/// Values on zqⁿ for n = 1, 0, −1, …, −l, seeded at n = 1, 0.
fn run_up(f1: C64, f0: C64, l: usize, mu: C64, p: &QParams) -> Vec<C64> {
    let mut out = vec![f1, f0];
    for j in 0..l {
        let pt = Point::pos(-(j as i64));
        let next = step_up(pt, out[j + 1], out[j], mu, p);
        out.push(next);
    }
    out
}

/// ψ_λ(x; s) on all of I: the series for |x| ≤ 1, the eigen-relation beyond.
pub fn psi_small(lambda: C64, pt: Point, s: C64, p: &QParams) -> Result<C64> {
    check_lambda(lambda)?;
    if pt.branch == Branch::Neg || pt.n >= 0 {
        return psi_series(lambda, pt, s, p);
    }
    let mu = lambda + 1.0 / lambda;
    let f1 = psi_series(lambda, Point::pos(1), s, p)?;
    let f0 = psi_series(lambda, Point::pos(0), s, p)?;
    Ok(*run_up(f1, f0, (-pt.n) as usize, mu, p).last().unwrap())
}

pub fn psi_big_series_ok(pt: Point, p: &QParams) -> bool {
    pt.branch == Branch::Pos && p.q.get() / (p.a * p.a * pt.position(p)) <= PSI_BIG_SERIES_MAX
}

/// The ₂φ₁ factor of Ψ_λ(zqⁿ), without the (aλ)^{−n} prefactor.
pub(crate) fn psi_big_hyp(lambda: C64, pt: Point, p: &QParams) -> Result<C64> {
    let q = p.q;
    let (a, s) = (p.a, p.s);
    let x = pt.position(p);
    phi21(a * lambda / s, a * s * lambda, q.get() * lambda * lambda, q, C64::new(-q.get() / (a * a * x), 0.0))
}

fn psi_big_series(lambda: C64, pt: Point, p: &QParams) -> Result<C64> {
    Ok(psi_big_hyp(lambda, pt, p)? * (p.a * lambda).powi(-(pt.n as i32)))
}

fn check_psi_big(lambda: C64, q: QBase) -> Result<()> {
    check_lambda(lambda)?;
    if (lambda * lambda - 1.0).norm() <= 1e-14 {
        return Err(Error::Pole(format!("Psi at lambda = {lambda}")));
    }
    if let Some(m) = negative_power_index(q.get() * lambda * lambda, q) {
        return Err(Error::Pole(format!("Psi at lambda^2 = q^-{}", m + 1)));
    }
    Ok(())
}

/// Coefficients expressing Ψ_λ through ψ(·;s) and ψ(·;1/s).
#[derive(Debug, Clone, Copy)]
struct PsiInversion {
    along_s: C64,
    along_sinv: C64,
}

impl PsiInversion {
    fn new(lambda: C64, p: &QParams) -> Result<Self> {
        let sinv = 1.0 / p.s;
        let bp = b_coeff(lambda, p.s, p)?;
        let bm = b_coeff(1.0 / lambda, p.s, p)?;
        let bpi = b_coeff(lambda, sinv, p)?;
        let bmi = b_coeff(1.0 / lambda, sinv, p)?;
        let det = bp * bmi - bm * bpi;
        let scale = (bp * bmi).norm().max((bm * bpi).norm());
        if det.norm() <= 1e-13 * scale {
            return Err(Error::Degenerate(format!("b-system singular at lambda = {lambda}")));
        }
        Ok(PsiInversion { along_s: bmi / det, along_sinv: -bm / det })
    }

    fn apply(&self, psi_s: C64, psi_sinv: C64) -> C64 {
        self.along_s * psi_s + self.along_sinv * psi_sinv
    }
}

/// Ψ_λ(x): the series where it converges fast, the inverted b-expansion elsewhere.
pub fn psi_big(lambda: C64, pt: Point, p: &QParams) -> Result<C64> {
    check_psi_big(lambda, p.q)?;
    if psi_big_series_ok(pt, p) {
        return psi_big_series(lambda, pt, p);
    }
    let inv = PsiInversion::new(lambda, p)?;
    Ok(inv.apply(psi_small(lambda, pt, p.s, p)?, psi_small(lambda, pt, 1.0 / p.s, p)?))
}

/// φ_λ(−qⁿ) for 0 ≤ n ≤ k, stepped from φ(−1) = 1. Near −1 the
/// d-expansion below can cancel to nothing (terms of 1e15 summing to 1),
/// while the recursion toward 0 follows the dominant solution.
fn phi_neg_run(lambda: C64, k: usize, p: &QParams) -> Vec<C64> {
    let mu = lambda + 1.0 / lambda;
    let mut out = vec![ONE];
    let mut prev = C64::new(0.0, 0.0);
    for n in 0..k {
        let c = l_coefficients(Point::neg(n as i64), p);
        let next = ((mu - c.mid) * out[n] - c.up * prev) / c.down;
        prev = out[n];
        out.push(next);
    }
    out
}

/// φ_λ(x): stepped from −1 on I⁻; d(λ;s)ψ_λ(x;s) + d(λ;1/s)ψ_λ(x;1/s) on I⁺.
pub fn phi(lambda: C64, pt: Point, p: &QParams) -> Result<C64> {
    check_lambda(lambda)?;
    if pt.branch == Branch::Neg {
        return Ok(*phi_neg_run(lambda, pt.n as usize, p).last().unwrap());
    }
    let ds = d_coeff(lambda, p.s, p);
    let dsi = d_coeff(lambda, 1.0 / p.s, p);
    let at = |pt| -> Result<C64> { Ok(ds * psi_series(lambda, pt, p.s, p)? + dsi * psi_series(lambda, pt, 1.0 / p.s, p)?) };
    if pt.n >= 0 {
        return at(pt);
    }
    let mu = lambda + 1.0 / lambda;
    Ok(*run_up(at(Point::pos(1))?, at(Point::pos(0))?, (-pt.n) as usize, mu, p).last().unwrap())
}

/// b_z(λ;s) = (q/(asλ), a/(sλ);q)_∞ / (λ⁻², q/s²;q)_∞ · θ(−qazλ/s)/θ(−qz).
pub fn b_coeff(lambda: C64, s: C64, p: &QParams) -> Result<C64> {
    check_lambda(lambda)?;
    let q = p.q;
    let (a, z) = (p.a, p.z);
    let inv2 = 1.0 / (lambda * lambda);
    if negative_power_index(inv2, q).is_some() {
        return Err(Error::Pole(format!("(lambda^-2;q) vanishes at lambda = {lambda}")));
    }
    let num = qpoch_inf_prod(&[q.get() / (a * s * lambda), a / (s * lambda)], q);
    let den = qpoch_inf_prod(&[inv2, q.get() / (s * s)], q);
    let th = theta(-q.get() * a * z * lambda / s, q)? / theta(C64::new(-q.get() * z, 0.0), q)?;
    Ok(num / den * th)
}

/// d(λ;s) = (asλ, as/λ;q)_∞ / (a², s²;q)_∞.
pub fn d_coeff(lambda: C64, s: C64, p: &QParams) -> C64 {
    let q = p.q;
    let a = p.a;
    qpoch_inf_prod(&[a * s * lambda, a * s / lambda], q) / qpoch_inf_prod(&[C64::new(a * a, 0.0), s * s], q)
}

/// c_z(λ) as the two-term theta expression.
pub fn c_theta(lambda: C64, p: &QParams) -> Result<C64> {
    check_lambda(lambda)?;
    let q = p.q;
    let (a, s, z) = (p.a, p.s, p.z);
    let inv2 = 1.0 / (lambda * lambda);
    if negative_power_index(inv2, q).is_some() {
        return Err(Error::Pole(format!("c at lambda = {lambda}")));
    }
    let pref = qpoch_inf_prod(&[a * s / lambda, a / (s * lambda)], q)
        / (qpoch_inf_prod(&[C64::new(a * a, 0.0), inv2], q) * theta(C64::new(-q.get() * z, 0.0), q)?);
    let t1 = theta_prod(&[a * s * lambda, -q.get() * a * z * lambda / s], q)? / theta(s * s, q)?;
    let t2 = theta_prod(&[a * lambda / s, -q.get() * a * s * z * lambda], q)? / theta(1.0 / (s * s), q)?;
    Ok(pref * (t1 + t2))
}

/// ln c_z(λ), for λ so small that c_z(λ) itself leaves double range.
pub fn ln_c_theta(lambda: C64, p: &QParams) -> Result<C64> {
    check_lambda(lambda)?;
    let q = p.q;
    let (a, s, z) = (p.a, p.s, p.z);
    let inv2 = 1.0 / (lambda * lambda);
    if negative_power_index(inv2, q).is_some() {
        return Err(Error::Pole(format!("c at lambda = {lambda}")));
    }
    let lq = |x: C64| ln_qpoch_inf(x, q);
    let lt = |x: C64| ln_theta(x, q);
    let pref = lq(a * s / lambda) + lq(a / (s * lambda)) - lq(C64::new(a * a, 0.0)) - lq(inv2) - lt(C64::new(-q.get() * z, 0.0))?;
    let t1 = lt(a * s * lambda)? + lt(-q.get() * a * z * lambda / s)? - lt(s * s)?;
    let t2 = lt(a * lambda / s)? + lt(-q.get() * a * s * z * lambda)? - lt(1.0 / (s * s))?;
    let top = t1.re.max(t2.re);
    Ok(pref + top + ((t1 - top).exp() + (t2 - top).exp()).ln())
}

/// c₁(λ) = (as/λ, a/(sλ);q)_∞ θ(a²λ²q;q²) / [(a², λ⁻²;q)_∞ θ(qs²;q²)], for z = 1 only.
pub fn c_one(lambda: C64, p: &QParams) -> Result<C64> {
    if (p.z - 1.0).abs() > 1e-15 {
        return Err(Error::Domain(format!("c_one needs z = 1, got {}", p.z)));
    }
    check_lambda(lambda)?;
    let q = p.q;
    let q2 = q.squared();
    let (a, s) = (p.a, p.s);
    let inv2 = 1.0 / (lambda * lambda);
    if negative_power_index(inv2, q).is_some() {
        return Err(Error::Pole(format!("c_one at lambda = {lambda}")));
    }
    let num = qpoch_inf_prod(&[a * s / lambda, a / (s * lambda)], q) * theta(a * a * lambda * lambda * q.get(), q2)?;
    let den = qpoch_inf_prod(&[C64::new(a * a, 0.0), inv2], q) * theta(q.get() * s * s, q2)?;
    Ok(num / den)
}

/// All connection coefficients at one λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionCoeffs {
    /// b_z(λ; s)
    pub b_plus: C64,
    /// b_z(1/λ; s)
    pub b_minus: C64,
    /// b_z(λ; 1/s)
    pub b_plus_inv: C64,
    /// b_z(1/λ; 1/s)
    pub b_minus_inv: C64,
    pub d_s: C64,
    pub d_sinv: C64,
    /// c_z(λ)
    pub c_plus: C64,
    /// c_z(1/λ)
    pub c_minus: C64,
}

impl ExpansionCoeffs {
    /// c_z(λ) rebuilt as d(λ;s)b_z(λ;s) + d(λ;1/s)b_z(λ;1/s).
    pub fn c_plus_from_db(&self) -> C64 {
        self.d_s * self.b_plus + self.d_sinv * self.b_plus_inv
    }

    pub fn c_minus_from_db(&self) -> C64 {
        self.d_s * self.b_minus + self.d_sinv * self.b_minus_inv
    }
}

pub fn expansion_coefficients(lambda: C64, p: &QParams) -> Result<ExpansionCoeffs> {
    check_lambda(lambda)?;
    if (lambda * lambda - 1.0).norm() <= 1e-14 {
        return Err(Error::Pole(format!("lambda = {lambda}")));
    }
    let (s, si) = (p.s, 1.0 / p.s);
    let li = 1.0 / lambda;
    Ok(ExpansionCoeffs {
        b_plus: b_coeff(lambda, s, p)?,
        b_minus: b_coeff(li, s, p)?,
        b_plus_inv: b_coeff(lambda, si, p)?,
        b_minus_inv: b_coeff(li, si, p)?,
        d_s: d_coeff(lambda, s, p),
        d_sinv: d_coeff(lambda, si, p),
        c_plus: c_theta(lambda, p)?,
        c_minus: c_theta(li, p)?,
    })
}

/// ψ_λ(·; s) on a whole grid.
pub fn psi_small_on(grid: &Grid, lambda: C64, s: C64) -> Result<GridFunction> {
    check_lambda(lambda)?;
    let p = *grid.params();
    let mut f = GridFunction::zeros(grid);
    for pt in grid.points().filter(|pt| pt.branch == Branch::Neg || pt.n >= 0) {
        f.set(pt, psi_series(lambda, pt, s, &p)?)?;
    }
    let f1 = psi_series(lambda, Point::pos(1), s, &p)?;
    let f0 = psi_series(lambda, Point::pos(0), s, &p)?;
    let mu = lambda + 1.0 / lambda;
    for (j, v) in run_up(f1, f0, grid.l_max(), mu, &p).into_iter().enumerate().skip(2) {
        f.set(Point::pos(1 - j as i64), v)?;
    }
    Ok(f)
}

/// Ψ_λ on a whole grid; `psi_s`/`psi_sinv` feed the inverted expansion.
pub fn psi_big_on(grid: &Grid, lambda: C64, psi_s: &GridFunction, psi_sinv: &GridFunction) -> Result<GridFunction> {
    let p = *grid.params();
    check_psi_big(lambda, p.q)?;
    let mut inv = None;
    let mut f = GridFunction::zeros(grid);
    for pt in grid.points() {
        let v = if psi_big_series_ok(pt, &p) {
            psi_big_series(lambda, pt, &p)?
        } else {
            if inv.is_none() {
                inv = Some(PsiInversion::new(lambda, &p)?);
            }
            inv.unwrap().apply(psi_s.value(pt)?, psi_sinv.value(pt)?)
        };
        f.set(pt, v)?;
    }
    Ok(f)
}

/// φ_λ on a whole grid.
pub fn phi_on(grid: &Grid, lambda: C64) -> Result<GridFunction> {
    let p = *grid.params();
    let ps = psi_small_on(grid, lambda, p.s)?;
    let psi = psi_small_on(grid, lambda, 1.0 / p.s)?;
    let mut f = ps.scale(d_coeff(lambda, p.s, &p)).axpy(d_coeff(lambda, 1.0 / p.s, &p), &psi)?;
    set_phi_neg(&mut f, lambda)?;
    Ok(f)
}

fn set_phi_neg(f: &mut GridFunction, lambda: C64) -> Result<()> {
    let p = *f.grid().params();
    for (n, v) in phi_neg_run(lambda, f.grid().k_max(), &p).into_iter().enumerate() {
        f.set(Point::neg(n as i64), v)?;
    }
    Ok(())
}

/// Every eigenfunction at one λ, tabulated on a grid.
#[derive(Debug, Clone)]
pub struct EigenFamily {
    pub point: SpectralPoint,
    pub params: QParams,
    pub psi_s: GridFunction,
    pub psi_sinv: GridFunction,
    /// Ψ_λ
    pub psi_plus: GridFunction,
    /// Ψ_{1/λ}
    pub psi_minus: GridFunction,
    pub phi: GridFunction,
    pub coeffs: ExpansionCoeffs,
}

impl EigenFamily {
    pub fn new(lambda: C64, grid: &Grid) -> Result<Self> {
        let point = SpectralPoint::new(lambda)?;
        let params = *grid.params();
        let coeffs = expansion_coefficients(lambda, &params)?;
        let psi_s = psi_small_on(grid, lambda, params.s)?;
        let psi_sinv = psi_small_on(grid, lambda, 1.0 / params.s)?;
        let psi_plus = psi_big_on(grid, lambda, &psi_s, &psi_sinv)?;
        // ψ_λ = ψ_{1/λ}, so the same pair feeds Ψ_{1/λ}.
        let psi_minus = psi_big_on(grid, 1.0 / lambda, &psi_s, &psi_sinv)?;
        let mut phi = psi_s.scale(coeffs.d_s).axpy(coeffs.d_sinv, &psi_sinv)?;
        set_phi_neg(&mut phi, lambda)?;
        Ok(EigenFamily { point, params, psi_s, psi_sinv, psi_plus, psi_minus, phi, coeffs })
    }

    /// c_z(λ)Ψ_λ + c_z(1/λ)Ψ_{1/λ}.
    pub fn phi_from_c(&self) -> GridFunction {
        self.psi_plus.scale(self.coeffs.c_plus).axpy(self.coeffs.c_minus, &self.psi_minus).unwrap()
    }
}

/// D(f,g)(x) for grid functions at a point whose lower neighbour is on the grid.
pub fn casorati_on(f: &GridFunction, g: &GridFunction, pt: Point) -> Option<C64> {
    let p = f.grid().params();
    Some(casorati_values(f.get(pt)?, f.get(pt.down())?, g.get(pt)?, g.get(pt.down())?, pt, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> QParams {
        QParams::new(0.5, 0.6, C64::from_polar(1.0, PI / 3.0), 1.0).unwrap()
    }

    #[test]
    fn l_at_minus_one_indicator() {
        let p = params();
        let g = Grid::new(p, 6, 3, 6);
        let f = GridFunction::indicator(&g, Point::MINUS_ONE).unwrap();
        let lf = apply_l(&f).value;
        let s = p.s;
        assert!((lf.value(Point::MINUS_ONE).unwrap() - (s + 1.0 / s) / p.a).norm() < 1e-15);
        let want = (1.0 - 1.0 / p.q.get()) / p.a;
        assert!((lf.value(Point::neg(1)).unwrap().re - want).abs() < 1e-14);
    }

    #[test]
    fn apply_l_flags_edges() {
        let g = Grid::new(params(), 4, 2, 3);
        let f = GridFunction::from_fn(&g, |_| ONE);
        let out = apply_l(&f);
        assert!(out.truncated.contains(&Point::neg(4)));
        assert!(out.truncated.contains(&Point::pos(3)));
        assert!(out.truncated.contains(&Point::pos(-2)));
        assert!(!out.truncated.contains(&Point::MINUS_ONE));
    }

    #[test]
    fn low_degree_polynomials() {
        let q = QBase::new(0.5).unwrap();
        let (l, b, c) = (C64::new(0.7, 0.2), C64::new(0.3, 0.4), C64::new(-0.5, 0.1));
        assert_eq!(asc_poly_rec(0, l, b, c, q).unwrap(), ONE);
        let p1 = (l + 1.0 / l - b - c) / (1.0 - b * c);
        assert!((asc_poly_rec(1, l, b, c, q).unwrap() - p1).norm() < 1e-15);
        assert_eq!(asc_poly_hyp(0, l, b, c, q).unwrap(), ONE);
        assert!(asc_poly_rec(61, l, b, c, q).is_err());
    }

    #[test]
    fn degree_five_both_ways() {
        let p = params();
        let l = C64::new(0.7, 0.2);
        let (b, c) = (p.s / p.a, 1.0 / (p.s * p.a));
        let r = asc_poly_rec(5, l, b, c, p.q).unwrap();
        let h = asc_poly_hyp(5, l, b, c, p.q).unwrap();
        assert!((r - h).norm() < 1e-12 * r.norm());
    }

    #[test]
    fn c_one_vanishes_on_gamma() {
        let p = params();
        let lam = p.a * p.q.get().sqrt();
        let scale = c_one(C64::new(0.3, 0.2), &p).unwrap().norm();
        assert!(c_one(C64::new(1.0 / lam, 0.0), &p).unwrap().norm() < 1e-13 * scale);
        let pr = QParams::new(0.5, 0.9, C64::new(0.8, 0.0), 1.0).unwrap();
        let sa = 0.8 / 0.9;
        assert!(c_one(C64::new(1.0 / sa, 0.0), &pr).unwrap().norm() < 1e-13);
        let pz = QParams::new(0.5, 0.6, p.s, 0.8).unwrap();
        assert!(matches!(c_one(C64::new(0.3, 0.1), &pz), Err(Error::Domain(_))));
    }

    #[test]
    fn log_c_matches_direct() {
        let p = params();
        for l in [C64::new(0.3, 0.2), C64::new(-0.05, 0.0), C64::from_polar(1.0, 2.0)] {
            let d = ln_c_theta(l, &p).unwrap().exp() - c_theta(l, &p).unwrap();
            assert!(d.norm() < 1e-11 * c_theta(l, &p).unwrap().norm());
        }
    }

    #[test]
    fn phi_at_minus_one_is_one() {
        let p = params();
        for l in [C64::from_polar(1.0, 0.7), C64::new(0.4, 0.0), C64::new(-0.3, 0.2)] {
            assert!((phi(l, Point::MINUS_ONE, &p).unwrap() - ONE).norm() < 1e-13);
        }
    }

    #[test]
    fn psi_big_poles() {
        let p = params();
        assert!(matches!(psi_big(ONE, Point::pos(-5), &p), Err(Error::Pole(_))));
        let l = C64::new(2.0f64.sqrt(), 0.0); // λ² = q^{-1}
        assert!(matches!(psi_big(l, Point::pos(-5), &p), Err(Error::Pole(_))));
    }
}
