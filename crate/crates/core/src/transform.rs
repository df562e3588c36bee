//! The transform F: finitely supported functions on the lattice → 𝓗, and
//! its inverse G.
//!
//! 𝓗 is L²(ν/(1−q)): with the measure of [`crate::spectral`],
//! `⟨g,h⟩_𝓗 = (1−q)⁻¹ ∫ g h̄ dν`. Then `(Ff)(λ) = Σ f(x)φ_λ(x)w(x)(1−q)|x|`
//! is an isometry from ⟨·,·⟩_z and the function mapped to φ_λ(x) is
//! `δ_x/((1−q)w(x)|x|)`.

use crate::eigenfun::{apply_l, c_theta, casorati_on, l_coefficients, phi_on};
use crate::lattice::{truncated_inner, Grid, GridFunction, Point};
use crate::qcore::CompensatedSum;
use crate::spectral::{atom_phi_scaled, phi_for, SpectralMeasure};
use crate::{Error, Result, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirclePoint {
    pub theta: f64,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomPoint {
    pub lambda: f64,
    pub re: f64,
    pub im: f64,
}

/// An element of 𝓗, sampled at the quadrature nodes on θ ∈ (0,π) and at the atoms.
/// Invariance under λ ↔ 1/λ is built in by storing only these points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HFunction {
    pub circle: Vec<CirclePoint>,
    pub atoms: Vec<AtomPoint>,
}

impl HFunction {
    fn from_parts(m: &SpectralMeasure, circle: &[C64], atoms: &[C64]) -> Self {
        HFunction {
            circle: m.nodes.iter().zip(circle).map(|(n, v)| CirclePoint { theta: n.theta, re: v.re, im: v.im }).collect(),
            atoms: m.atoms.atoms.iter().zip(atoms).map(|(a, v)| AtomPoint { lambda: a.lambda, re: v.re, im: v.im }).collect(),
        }
    }

    /// Samples g(λ) of a function on the spectrum, taken at the nodes and atoms of `m`.
    pub fn sample(m: &SpectralMeasure, g: impl Fn(C64) -> C64) -> Self {
        let circle: Vec<C64> = m.node_lambdas().map(&g).collect();
        let atoms: Vec<C64> = m.atoms.atoms.iter().map(|a| g(C64::new(a.lambda, 0.0))).collect();
        Self::from_parts(m, &circle, &atoms)
    }

    pub fn circle_values(&self) -> Vec<C64> {
        self.circle.iter().map(|c| C64::new(c.re, c.im)).collect()
    }

    pub fn atom_values(&self) -> Vec<C64> {
        self.atoms.iter().map(|c| C64::new(c.re, c.im)).collect()
    }

    fn matches(&self, m: &SpectralMeasure) -> bool {
        self.circle.len() == m.nodes.len()
            && self.atoms.len() == m.atoms.atoms.len()
            && self.circle.iter().zip(&m.nodes).all(|(c, n)| (c.theta - n.theta).abs() <= 1e-12)
            && self.atoms.iter().zip(&m.atoms.atoms).all(|(c, a)| (c.lambda - a.lambda).abs() <= 1e-12 * a.lambda.abs())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Point masses whose Parseval identity fails by more than this are outside
/// what the truncated atom set and the quadrature can represent.
pub const PARSEVAL_TOL: f64 = 1e-8;

/// F and G on a fixed grid and measure, with φ_λ tabulated at every node and atom.
///
/// Atom rows hold √mass·φ_λ: small atoms have φ_λ far outside double range
/// deep in I⁻, while the scaled product stays bounded.
#[derive(Debug, Clone)]
pub struct Transform {
    grid: Grid,
    measure: SpectralMeasure,
    nodes: Vec<GridFunction>,
    atoms: Vec<GridFunction>,
    atom_root_mass: Vec<f64>,
    /// |1 − m(x)‖F d_x‖²| per grid point.
    parseval_deficit: Vec<f64>,
}

impl Transform {
    pub fn new(grid: &Grid, measure: &SpectralMeasure) -> Result<Self> {
        if grid.params() != &measure.params {
            return Err(Error::Config("grid and measure have different parameters".into()));
        }
        let lambdas: Vec<C64> = measure.node_lambdas().collect();
        let nodes = lambdas.par_iter().map(|&l| phi_on(grid, l)).collect::<Result<Vec<_>>>()?;
        let atoms = measure
            .atoms
            .atoms
            .par_iter()
            .map(|a| atom_phi_scaled(grid, a.lambda, 0.5 * a.mass.ln()))
            .collect::<Result<Vec<_>>>()?;
        let atom_root_mass = measure.atoms.atoms.iter().map(|a| a.mass.sqrt()).collect();
        let scale = 1.0 / (1.0 - measure.params.q.get());
        let cw: Vec<f64> = measure.nodes.iter().map(|n| n.weight * n.density).collect();
        let parseval_deficit = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = CompensatedSum::new();
                for (row, w) in nodes.iter().zip(&cw) {
                    acc.add(C64::new(row.values()[i].norm_sqr() * w, 0.0));
                }
                for row in &atoms {
                    acc.add(C64::new(row.values()[i].norm_sqr(), 0.0));
                }
                (1.0 - acc.value().re * scale * grid.mass(i)).abs()
            })
            .collect();
        Ok(Transform { grid: grid.clone(), measure: measure.clone(), nodes, atoms, atom_root_mass, parseval_deficit })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// |1 − m(x)‖F d_x‖²_𝓗| at `pt`. Nonzero where the retained atoms or the
    /// quadrature cannot represent a point mass at `pt`.
    pub fn parseval_deficit(&self, pt: Point) -> Result<f64> {
        Ok(self.parseval_deficit[self.grid.index(pt).ok_or(Error::GridMismatch)?])
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    fn check_grid(&self, f: &GridFunction) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Σ f(x)·row(x)·(1−q)|x|w(x) over the support.
    fn pair(&self, f: &GridFunction, row: &GridFunction, support: &[usize]) -> C64 {
        let mut acc = CompensatedSum::new();
        for &i in support {
            acc.add(f.values()[i] * row.values()[i] * self.grid.mass(i));
        }
        acc.value()
    }

    /// Unchecked forward sum, usable on functions that reach the grid edge.
    fn forward_raw(&self, f: &GridFunction) -> Result<HFunction> {
        self.check_grid(f)?;
        let support: Vec<usize> = (0..self.grid.len()).filter(|&i| f.values()[i].norm() != 0.0).collect();
        let circle: Vec<C64> = self.nodes.par_iter().map(|row| self.pair(f, row, &support)).collect();
        let atoms: Vec<C64> =
            self.atoms.par_iter().zip(&self.atom_root_mass).map(|(row, r)| self.pair(f, row, &support) / r).collect();
        if circle.iter().chain(&atoms).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Range("F f left double range at an atom".into()));
        }
        Ok(HFunction::from_parts(&self.measure, &circle, &atoms))
    }

    /// Whether the retained spectrum represents d_x at `pt` to PARSEVAL_TOL.
    pub fn is_complete_at(&self, pt: Point) -> bool {
        self.parseval_deficit(pt).is_ok_and(|d| d <= PARSEVAL_TOL)
    }

    /// (Ff)(λ) at every node and atom. The support must stay off the grid
    /// edges and inside the region where the retained spectrum is complete.
    pub fn forward(&self, f: &GridFunction) -> Result<HFunction> {
        self.check_grid(f)?;
        for pt in f.support() {
            if self.grid.is_edge(pt) {
                return Err(Error::Support(format!("support reaches the grid edge at {pt:?}")));
            }
            if !self.is_complete_at(pt) {
                let d = self.parseval_deficit(pt)?;
                return Err(Error::Support(format!("spectrum incomplete at {pt:?}: Parseval deficit {d:.1e}")));
            }
        }
        self.forward_raw(f)
    }

    /// (Gg)(x) = (1−q)⁻¹ ∫ g(λ) conj(φ_λ(x)) dν(λ) at every grid point.
    pub fn inverse(&self, g: &HFunction) -> Result<GridFunction> {
        if !g.matches(&self.measure) {
            return Err(Error::GridMismatch);
        }
        let scale = 1.0 / (1.0 - self.measure.params.q.get());
        let gc = g.circle_values();
        let ga = g.atom_values();
        let cw: Vec<f64> = self.measure.nodes.iter().map(|n| n.weight * n.density).collect();
        let values: Vec<C64> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = CompensatedSum::new();
                for (k, row) in self.nodes.iter().enumerate() {
                    acc.add(gc[k] * row.values()[i].conj() * cw[k]);
                }
                for (k, row) in self.atoms.iter().enumerate() {
                    acc.add(ga[k] * self.atom_root_mass[k] * row.values()[i].conj());
                }
                acc.value() * scale
            })
            .collect();
        GridFunction::from_values(&self.grid, values)
    }

    /// ⟨g,h⟩_𝓗 = (1−q)⁻¹ ∫ g h̄ dν.
    pub fn h_inner(&self, g: &HFunction, h: &HFunction) -> Result<C64> {
        h_inner(g, h, &self.measure)
    }

    /// The function with F d_x = φ_•(x): δ_x/((1−q)w(x)|x|).
    pub fn point_mass(&self, pt: Point) -> Result<GridFunction> {
        let idx = self.grid.index(pt).ok_or_else(|| Error::Range(format!("{pt:?} not on grid")))?;
        let mut f = GridFunction::zeros(&self.grid);
        f.values_mut()[idx] = C64::new(1.0 / self.grid.mass(idx), 0.0);
        Ok(f)
    }

    /// sup over nodes and atoms of |F(Lf)(λ) − μ(λ)(Ff)(λ)|, with a matching scale:
    /// the same sup taken over the absolute values of every term.
    pub fn diagonalization_check(&self, f: &GridFunction) -> Result<(f64, f64)> {
        // off-grid neighbours only meet the zero extension of f, since the
        // support is kept off the edges
        self.forward(f)?;
        let lf = apply_l(f);
        let flf = self.forward_raw(&lf.value)?;
        let ff = self.forward_raw(f)?;
        let p = *self.grid.params();
        let support = f.support();
        let mut resid = 0.0f64;
        let mut scale = 0.0f64;
        let mut visit = |lambda: C64, a: C64, b: C64, row: &GridFunction, factor: f64| {
            let mu = lambda + 1.0 / lambda;
            resid = resid.max((a - mu * b).norm());
            let mut s = 0.0;
            for &pt in &support {
                let i = self.grid.index(pt).unwrap();
                let c = l_coefficients(pt, &p);
                let mut t = (mu.norm() + c.mid.abs()) * row.values()[i].norm();
                if let Some(u) = pt.up().and_then(|u| row.get(u)) {
                    t += c.up.abs() * u.norm();
                }
                if let Some(d) = row.get(pt.down()) {
                    t += c.down.abs() * d.norm();
                }
                s += f.values()[i].norm() * self.grid.mass(i) * t;
            }
            scale = scale.max(s / factor);
        };
        for (k, lam) in self.measure.node_lambdas().enumerate() {
            visit(lam, flf.circle_values()[k], ff.circle_values()[k], &self.nodes[k], 1.0);
        }
        for (k, at) in self.measure.atoms.atoms.iter().enumerate() {
            let lam = C64::new(at.lambda, 0.0);
            visit(lam, flf.atom_values()[k], ff.atom_values()[k], &self.atoms[k], self.atom_root_mass[k]);
        }
        Ok((resid, scale))
    }
}

pub fn h_inner(g: &HFunction, h: &HFunction, m: &SpectralMeasure) -> Result<C64> {
    if !g.matches(m) || !h.matches(m) {
        return Err(Error::GridMismatch);
    }
    let mut acc = CompensatedSum::new();
    for ((a, b), n) in g.circle_values().iter().zip(h.circle_values()).zip(&m.nodes) {
        acc.add(a * b.conj() * (n.weight * n.density));
    }
    for ((a, b), at) in g.atom_values().iter().zip(h.atom_values()).zip(&m.atoms.atoms) {
        acc.add(a * b.conj() * at.mass);
    }
    Ok(acc.value() / (1.0 - m.params.q.get()))
}

pub fn forward_f(f: &GridFunction, m: &SpectralMeasure) -> Result<HFunction> {
    Transform::new(f.grid(), m)?.forward(f)
}

pub fn inverse_g(g: &HFunction, grid: &Grid, m: &SpectralMeasure) -> Result<GridFunction> {
    Transform::new(grid, m)?.inverse(g)
}

fn check_distinct(lambda: C64, lambda_p: C64) -> Result<C64> {
    let d = lambda + 1.0 / lambda - (lambda_p + 1.0 / lambda_p).conj();
    if d.norm() <= 1e-12 * (lambda + 1.0 / lambda).norm().max(1.0) {
        return Err(Error::Degenerate(format!("mu({lambda}) equals conj mu({lambda_p})")));
    }
    Ok(d)
}

/// lim_k ⟨φ_λ, φ_λ′⟩_{k,l,k} = D(φ_λ, φ̄_λ′)(q^{−l−1})/(μ(λ) − μ(λ′)‾).
/// On the circle and at atoms φ_λ′ is real and the bars drop out.
pub fn phi_inner_l(lambda: C64, lambda_p: C64, l: usize, grid: &Grid) -> Result<C64> {
    let d = check_distinct(lambda, lambda_p)?;
    if l + 1 > grid.l_max() {
        return Err(Error::Range(format!("level {l} needs l_max > {l}")));
    }
    let f = phi_for(grid, lambda)?;
    let g = phi_for(grid, lambda_p)?.conj();
    let pt = Point::pos(-(l as i64) - 1);
    Ok(casorati_on(&f, &g, pt).ok_or_else(|| Error::Range(format!("{pt:?} off grid")))? / d)
}

/// ⟨φ_λ, φ_λ′⟩_{k,l,k} summed directly, k = min(k_max, m_max).
pub fn phi_inner_direct(lambda: C64, lambda_p: C64, l: usize, grid: &Grid) -> Result<C64> {
    let f = phi_for(grid, lambda)?;
    let g = phi_for(grid, lambda_p)?;
    let k = grid.k_max().min(grid.m_max());
    truncated_inner(&f, &g, k, l, k)
}

/// K Σ_{ε,η=±1} (λ^ε − λ′^η)(λ^ε λ′^η)^l c(λ^ε) c(λ′^η) / (μ(λ) − μ(λ′)), with λ′ → λ̄′
/// as in [`phi_inner_l`]. Accurate to a relative O(q^l).
pub fn phi_inner_asymptotic(lambda: C64, lambda_p: C64, l: usize, grid: &Grid) -> Result<C64> {
    let d = check_distinct(lambda, lambda_p)?;
    let p = grid.params();
    let lp = lambda_p.conj();
    let mut acc = C64::new(0.0, 0.0);
    for le in [lambda, 1.0 / lambda] {
        for lh in [lp, 1.0 / lp] {
            acc += (le - lh) * (le * lh).powi(l as i32) * c_theta(le, p)? * c_theta(lh, p)?;
        }
    }
    Ok(acc * p.k_z() / d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{inner_product, QParams};
    use crate::spectral::{build_measure, ATOM_TOL_MOMENTS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup() -> (Grid, Transform) {
        let p = QParams::new(0.5, 0.6, C64::from_polar(1.0, PI / 3.0), 1.0).unwrap();
        let grid = Grid::default_for(p);
        let m = build_measure(&p, 200, ATOM_TOL_MOMENTS).unwrap();
        let t = Transform::new(&grid, &m).unwrap();
        (grid, t)
    }

    fn random_f(grid: &Grid, rng: &mut ChaCha8Rng) -> GridFunction {
        let mut f = GridFunction::zeros(grid);
        for _ in 0..5 {
            let pt = if rng.random_bool(0.5) { Point::neg(rng.random_range(0..12)) } else { Point::pos(rng.random_range(-12..20)) };
            f.set(pt, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap();
        }
        f
    }

    #[test]
    fn point_mass_maps_to_phi() {
        let (grid, t) = setup();
        let x = Point::pos(-3);
        let ff = t.forward(&t.point_mass(x).unwrap()).unwrap();
        let lam = t.measure().node_lambdas().nth(17).unwrap();
        let direct = phi_on(&grid, lam).unwrap().value(x).unwrap();
        assert!((ff.circle_values()[17] - direct).norm() < 1e-12 * direct.norm().max(1.0));
    }

    #[test]
    fn roundtrip_and_isometry() {
        let (grid, t) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let f = random_f(&grid, &mut rng);
            let g = random_f(&grid, &mut rng);
            let (ff, fg) = (t.forward(&f).unwrap(), t.forward(&g).unwrap());
            let back = t.inverse(&ff).unwrap();
            let err = inner_product(&back.axpy(C64::new(-1.0, 0.0), &f).unwrap(), &back.axpy(C64::new(-1.0, 0.0), &f).unwrap()).unwrap();
            let nf = inner_product(&f, &f).unwrap().re;
            assert!(err.re.sqrt() < 1e-8 * nf.sqrt(), "{}", err.re.sqrt() / nf.sqrt());
            let lhs = t.h_inner(&ff, &fg).unwrap();
            let rhs = inner_product(&f, &g).unwrap();
            let ng = inner_product(&g, &g).unwrap().re;
            assert!((lhs - rhs).norm() < 1e-8 * (nf * ng).sqrt());
        }
    }

    #[test]
    fn edge_support_is_rejected() {
        let (grid, t) = setup();
        let f = GridFunction::indicator(&grid, Point::neg(grid.k_max() as i64)).unwrap();
        assert!(matches!(t.forward(&f), Err(Error::Support(_))));
    }

    #[test]
    fn diagonalises_l() {
        let (grid, t) = setup();
        let f = GridFunction::indicator(&grid, Point::MINUS_ONE).unwrap();
        let (r, s) = t.diagonalization_check(&f).unwrap();
        assert!(r <= 1e-9 * s, "{r} vs {s}");
        let (r, _) = t.diagonalization_check(&GridFunction::zeros(&grid)).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn h_function_json_round_trip() {
        let (_, t) = setup();
        let h = HFunction::sample(t.measure(), |l| l + 1.0 / l);
        assert_eq!(HFunction::from_json(&h.to_json().unwrap()).unwrap(), h);
    }

    #[test]
    fn three_ways_to_the_truncated_inner_product() {
        let (grid, _) = setup();
        let (l1, l2) = (C64::from_polar(1.0, PI / 5.0), C64::from_polar(1.0, 2.0 * PI / 5.0));
        for l in [4, 8] {
            let cas = phi_inner_l(l1, l2, l, &grid).unwrap();
            let dir = phi_inner_direct(l1, l2, l, &grid).unwrap();
            assert!((cas - dir).norm() < 1e-9 * cas.norm().max(1.0), "l={l}: {cas} {dir}");
        }
        let cas = phi_inner_l(l1, l2, 30, &grid).unwrap();
        let asy = phi_inner_asymptotic(l1, l2, 30, &grid).unwrap();
        assert!((cas - asy).norm() < 1e-6 * asy.norm().max(1.0));
        assert!(matches!(phi_inner_l(l1, l1, 5, &grid), Err(Error::Degenerate(_))));
    }
}
