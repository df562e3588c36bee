//! The lattice `I = I⁻ ∪ I⁺`, its weight, q-integration and the Casorati
//! determinant.

use crate::qcore::{qpoch_inf, sum_by_magnitude, theta, QBase};
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const UNIT_TOL: f64 = 1e-12;

/// Operator parameters (q, a, s, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QParams {
    pub q: QBase,
    pub a: f64,
    pub s: C64,
    pub z: f64,
}

/// The two admissible regimes for s.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SRegime {
    UnitCircle,
    Real,
}

impl QParams {
    pub fn new(q: f64, a: f64, s: C64, z: f64) -> Result<Self> {
        let q = QBase::new(q)?;
        if !(a.is_finite() && a != 0.0 && a * a < 1.0) {
            return Err(Error::Config(format!("a = {a} violates 0 < a^2 < 1")));
        }
        if !(z > q.get() && z <= 1.0) {
            return Err(Error::Config(format!("z = {z} is not in (q, 1]")));
        }
        if !(s.re.is_finite() && s.im.is_finite()) {
            return Err(Error::Config("s is not finite".into()));
        }
        let p = QParams { q, a, s, z };
        match p.regime() {
            Some(SRegime::UnitCircle) => {
                if (s - 1.0).norm() <= UNIT_TOL || (s + 1.0).norm() <= UNIT_TOL {
                    return Err(Error::Config(format!("s = {s} must avoid -1 and 1")));
                }
                Ok(p)
            }
            Some(SRegime::Real) => Ok(QParams { s: C64::new(s.re, 0.0), ..p }),
            None => Err(Error::Config(format!(
                "s = {s} is neither unimodular nor real with q < s^2 < 1"
            ))),
        }
    }

    pub fn regime(&self) -> Option<SRegime> {
        let s = self.s;
        if (s.norm() - 1.0).abs() <= UNIT_TOL {
            Some(SRegime::UnitCircle)
        } else if s.im.abs() <= UNIT_TOL && s.re * s.re > self.q.get() && s.re * s.re < 1.0 {
            Some(SRegime::Real)
        } else {
            None
        }
    }

    /// s + 1/s, real in both regimes.
    pub fn sigma(&self) -> f64 {
        (self.s + 1.0 / self.s).re
    }

    /// K_z = (1-q) θ(-z;q) / θ(-z a²;q).
    pub fn k_z(&self) -> f64 {
        let q = self.q;
        let num = theta(C64::new(-self.z, 0.0), q).expect("z > 0");
        let den = theta(C64::new(-self.z * self.a * self.a, 0.0), q).expect("a != 0");
        (1.0 - q.get()) * (num / den).re
    }

    /// Same parameters with s replaced by 1/s.
    pub fn with_s_inverted(&self) -> QParams {
        QParams { s: 1.0 / self.s, ..*self }
    }
}

/// Which half of the lattice a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    /// −qⁿ, n ≥ 0.
    #[serde(rename = "-1")]
    Neg,
    /// z qⁿ, n ∈ ℤ.
    #[serde(rename = "z")]
    Pos,
}

/// A lattice point `t qⁿ` with `t ∈ {-1, z}`, stored by its integer index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub branch: Branch,
    pub n: i64,
}

impl Point {
    pub const MINUS_ONE: Point = Point { branch: Branch::Neg, n: 0 };

    pub fn neg(n: i64) -> Point {
        Point { branch: Branch::Neg, n }
    }

    pub fn pos(n: i64) -> Point {
        Point { branch: Branch::Pos, n }
    }

    pub fn position(&self, p: &QParams) -> f64 {
        match self.branch {
            Branch::Neg => -p.q.pow(self.n),
            Branch::Pos => p.z * p.q.pow(self.n),
        }
    }

    /// The neighbour q·x.
    pub fn down(&self) -> Point {
        Point { n: self.n + 1, ..*self }
    }

    /// The neighbour x/q, absent for x = −1.
    pub fn up(&self) -> Option<Point> {
        match (self.branch, self.n) {
            (Branch::Neg, 0) => None,
            _ => Some(Point { n: self.n - 1, ..*self }),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.branch == Branch::Pos || self.n >= 0
    }

    /// Recover the lattice point at a real position.
    pub fn locate(x: f64, p: &QParams) -> Result<Point> {
        let (branch, t) = if x < 0.0 { (Branch::Neg, -x) } else { (Branch::Pos, x / p.z) };
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("{x} is not a lattice point")));
        }
        let n = (t.ln() / p.q.get().ln()).round() as i64;
        let pt = Point { branch, n };
        let back = pt.position(p);
        if !pt.is_valid() || (back - x).abs() > 1e-12 * x.abs() {
            return Err(Error::Domain(format!("{x} is not a lattice point")));
        }
        Ok(pt)
    }
}

/// w(x) = (−qx;q)_∞ / (−a²x;q)_∞ on the lattice.
pub fn weight_w(pt: Point, p: &QParams) -> f64 {
    let q = p.q;
    let a2 = p.a * p.a;
    match pt.branch {
        Branch::Neg => {
            let x = q.pow(pt.n);
            (qpoch_inf(C64::new(q.get() * x, 0.0), q) / qpoch_inf(C64::new(a2 * x, 0.0), q)).re
        }
        Branch::Pos if pt.n >= 0 => {
            let x = p.z * q.pow(pt.n);
            (qpoch_inf(C64::new(-q.get() * x, 0.0), q) / qpoch_inf(C64::new(-a2 * x, 0.0), q)).re
        }
        Branch::Pos => {
            // w(x/q) = w(x)(1+x)/(1+a²x/q), stepped out from x = z.
            let mut w = weight_w(Point::pos(0), p);
            let mut x = p.z;
            for _ in 0..(-pt.n) {
                w *= (1.0 + x) / (1.0 + a2 * x / q.get());
                x /= q.get();
            }
            w
        }
    }
}

/// Weight at a real position, rejecting non-lattice points.
pub fn weight_at(x: f64, p: &QParams) -> Result<f64> {
    Ok(weight_w(Point::locate(x, p)?, p))
}

/// q-integration mass of a point, (1−q)|x|.
#[inline]
pub fn jackson_mass(pt: Point, p: &QParams) -> f64 {
    (1.0 - p.q.get()) * pt.position(p).abs()
}

/// a⁻¹(1−q)(1+a²x)w(x), the factor in the Casorati determinant.
pub fn casorati_factor(pt: Point, p: &QParams) -> f64 {
    let x = pt.position(p);
    (1.0 - p.q.get()) * (1.0 + p.a * p.a * x) * weight_w(pt, p) / p.a
}

/// D(f,g)(x) from the four values f(x), f(qx), g(x), g(qx).
pub fn casorati_values(fx: C64, fqx: C64, gx: C64, gqx: C64, pt: Point, p: &QParams) -> C64 {
    (fx * gqx - fqx * gx) * casorati_factor(pt, p)
}

/// Finite window of the lattice: −qⁿ for 0 ≤ n ≤ k_max and zqⁿ for −l_max ≤ n ≤ m_max.
#[derive(Debug, Clone)]
pub struct Grid {
    params: QParams,
    k_max: usize,
    l_max: usize,
    m_max: usize,
    weights: Arc<Vec<f64>>,
}

impl PartialEq for Grid {
    fn eq(&self, o: &Self) -> bool {
        self.params == o.params && self.k_max == o.k_max && self.l_max == o.l_max && self.m_max == o.m_max
    }
}

impl Grid {
    pub fn new(params: QParams, k_max: usize, l_max: usize, m_max: usize) -> Grid {
        let mut g = Grid { params, k_max, l_max, m_max, weights: Arc::new(Vec::new()) };
        let w: Vec<f64> = (0..g.len()).map(|i| weight_w(g.point(i), &params)).collect();
        g.weights = Arc::new(w);
        g
    }

    /// Depths (60, 40, 60) at q = 0.5, rescaled so qⁿ reaches the same size for other q.
    pub fn default_for(params: QParams) -> Grid {
        let scale = 0.5f64.ln() / params.q.get().ln();
        let d = |n: f64| ((n * scale).ceil() as usize).clamp(8, 2000);
        Grid::new(params, d(60.0), d(40.0), d(60.0))
    }

    pub fn params(&self) -> &QParams {
        &self.params
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn len(&self) -> usize {
        self.k_max + 1 + self.l_max + self.m_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, idx: usize) -> Point {
        if idx <= self.k_max {
            Point::neg(idx as i64)
        } else {
            Point::pos((idx - self.k_max - 1) as i64 - self.l_max as i64)
        }
    }

    pub fn index(&self, pt: Point) -> Option<usize> {
        match pt.branch {
            Branch::Neg if pt.n >= 0 && pt.n as usize <= self.k_max => Some(pt.n as usize),
            Branch::Pos if pt.n >= -(self.l_max as i64) && pt.n <= self.m_max as i64 => {
                Some(self.k_max + 1 + (pt.n + self.l_max as i64) as usize)
            }
            _ => None,
        }
    }

    pub fn contains(&self, pt: Point) -> bool {
        self.index(pt).is_some()
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Points with a neighbour off the grid.
    pub fn is_edge(&self, pt: Point) -> bool {
        match pt.branch {
            Branch::Neg => pt.n as usize == self.k_max,
            Branch::Pos => pt.n == self.m_max as i64 || pt.n == -(self.l_max as i64),
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }

    /// (1−q)|x|w(x): the mass of a point in ⟨·,·⟩_z.
    pub fn mass(&self, idx: usize) -> f64 {
        jackson_mass(self.point(idx), &self.params) * self.weights[idx]
    }

    pub fn position(&self, idx: usize) -> f64 {
        self.point(idx).position(&self.params)
    }
}

/// A complex function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<C64>,
}

/// One JSON record of a grid function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub t: Branch,
    pub n: i64,
    pub re: f64,
    pub im: f64,
}

impl GridFunction {
    pub fn zeros(grid: &Grid) -> Self {
        GridFunction { grid: grid.clone(), values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(Point) -> C64) -> Self {
        let values = grid.points().map(&mut f).collect();
        GridFunction { grid: grid.clone(), values }
    }

    pub fn from_values(grid: &Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(GridFunction { grid: grid.clone(), values })
    }

    /// δ at a point.
    pub fn indicator(grid: &Grid, pt: Point) -> Result<Self> {
        let idx = grid.index(pt).ok_or_else(|| Error::Range(format!("{pt:?} not on grid")))?;
        let mut f = Self::zeros(grid);
        f.values[idx] = C64::new(1.0, 0.0);
        Ok(f)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn get(&self, pt: Point) -> Option<C64> {
        self.grid.index(pt).map(|i| self.values[i])
    }

    pub fn value(&self, pt: Point) -> Result<C64> {
        self.get(pt).ok_or_else(|| Error::Range(format!("{pt:?} not on grid")))
    }

    pub fn set(&mut self, pt: Point, v: C64) -> Result<()> {
        let i = self.grid.index(pt).ok_or_else(|| Error::Range(format!("{pt:?} not on grid")))?;
        self.values[i] = v;
        Ok(())
    }

    pub fn support(&self) -> Vec<Point> {
        self.grid
            .points()
            .zip(&self.values)
            .filter(|(_, v)| v.norm() != 0.0)
            .map(|(p, _)| p)
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn scale(&self, c: C64) -> Self {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn axpy(&self, c: C64, other: &GridFunction) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + c * y).collect();
        Ok(GridFunction { grid: self.grid.clone(), values })
    }

    pub fn conj(&self) -> Self {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| v.conj()).collect() }
    }

    /// Records for every point with a nonzero value.
    pub fn to_records(&self) -> Vec<GridRecord> {
        self.grid
            .points()
            .zip(&self.values)
            .filter(|(_, v)| v.norm() != 0.0)
            .map(|(p, v)| GridRecord { t: p.branch, n: p.n, re: v.re, im: v.im })
            .collect()
    }

    /// Points absent from the records are zero; points off the grid are rejected.
    pub fn from_records(grid: &Grid, records: &[GridRecord]) -> Result<Self> {
        let mut f = Self::zeros(grid);
        for r in records {
            f.set(Point { branch: r.t, n: r.n }, C64::new(r.re, r.im))?;
        }
        Ok(f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_records())?)
    }

    pub fn from_json(grid: &Grid, json: &str) -> Result<Self> {
        let records: Vec<GridRecord> = serde_json::from_str(json)?;
        Self::from_records(grid, &records)
    }
}

/// ∫ f d_qx over the grid window.
pub fn q_integral(f: &GridFunction) -> C64 {
    let g = f.grid();
    let terms = (0..g.len()).map(|i| f.values[i] * jackson_mass(g.point(i), g.params())).collect();
    sum_by_magnitude(terms)
}

/// ⟨f,g⟩_z = ∫ f ḡ w d_qx.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<C64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    let terms = (0..grid.len()).map(|i| f.values[i] * g.values[i].conj() * grid.mass(i)).collect();
    Ok(sum_by_magnitude(terms))
}

/// ⟨f,g⟩_{k,l,m}: the sum over −qⁿ, n ≤ k, and zqⁿ, −l ≤ n ≤ m.
pub fn truncated_inner(f: &GridFunction, g: &GridFunction, k: usize, l: usize, m: usize) -> Result<C64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    if k > grid.k_max || l > grid.l_max || m > grid.m_max {
        return Err(Error::Range(format!("({k},{l},{m}) exceeds grid")));
    }
    let keep = |pt: Point| match pt.branch {
        Branch::Neg => pt.n <= k as i64,
        Branch::Pos => pt.n >= -(l as i64) && pt.n <= m as i64,
    };
    let terms = (0..grid.len())
        .filter(|&i| keep(grid.point(i)))
        .map(|i| f.values[i] * g.values[i].conj() * grid.mass(i))
        .collect();
    Ok(sum_by_magnitude(terms))
}

/// D(f,g)(x) = (f(x)g(qx) − f(qx)g(x)) a⁻¹(1−q)(1+a²x)w(x).
pub fn casorati(f: &GridFunction, g: &GridFunction, pt: Point) -> Result<C64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    let here = f.value(pt)?;
    let below = f.get(pt.down()).ok_or_else(|| Error::Range(format!("q x for {pt:?} is off the grid")))?;
    Ok(casorati_values(here, below, g.value(pt)?, g.value(pt.down())?, pt, f.grid.params()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> QParams {
        QParams::new(0.5, 0.6, C64::from_polar(1.0, std::f64::consts::FRAC_PI_3), 1.0).unwrap()
    }

    #[test]
    fn parameter_validation() {
        let s = C64::new(0.0, 1.0);
        assert!(QParams::new(0.5, 1.0, s, 1.0).is_err());
        assert!(QParams::new(0.5, 0.6, C64::new(1.0, 0.0), 1.0).is_err());
        assert!(QParams::new(0.5, 0.6, C64::new(0.6, 0.0), 1.0).is_err());
        assert!(QParams::new(0.5, 0.6, C64::new(0.8, 0.0), 1.0).is_ok());
        assert!(QParams::new(0.5, 0.6, s, 0.4).is_err());
        assert!(QParams::new(0.5, 0.6, C64::new(0.5, 0.5), 1.0).is_err());
    }

    #[test]
    fn grid_indexing_is_bijective() {
        let g = Grid::new(params(), 5, 3, 4);
        assert_eq!(g.len(), 6 + 3 + 5);
        for i in 0..g.len() {
            assert_eq!(g.index(g.point(i)), Some(i));
        }
        assert!(!g.contains(Point::neg(6)));
        assert!(!g.contains(Point::pos(-4)));
        assert!(g.is_edge(Point::pos(-3)) && g.is_edge(Point::pos(4)) && g.is_edge(Point::neg(5)));
    }

    #[test]
    fn locate_round_trips() {
        let p = params();
        for pt in [Point::neg(0), Point::neg(7), Point::pos(-5), Point::pos(3)] {
            assert_eq!(Point::locate(pt.position(&p), &p).unwrap(), pt);
        }
        assert!(matches!(weight_at(0.3, &p), Err(Error::Domain(_))));
        assert!(matches!(weight_at(-2.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn weight_at_minus_one() {
        let p = params();
        let q = p.q;
        let want = (qpoch_inf(q.get().into(), q) / qpoch_inf((p.a * p.a).into(), q)).re;
        assert!((weight_w(Point::MINUS_ONE, &p) - want).abs() < 1e-15);
    }

    #[test]
    fn single_point_integral() {
        let g = Grid::new(params(), 4, 2, 4);
        let pt = Point::pos(-2);
        let f = GridFunction::indicator(&g, pt).unwrap();
        assert!((q_integral(&f).re - 0.5 * 4.0).abs() < 1e-15);
        assert_eq!(q_integral(&GridFunction::zeros(&g)), C64::new(0.0, 0.0));
    }

    #[test]
    fn truncated_inner_small_case() {
        let p = params();
        let g = Grid::new(p, 3, 3, 3);
        let f = GridFunction::from_fn(&g, |pt| C64::new(1.0 + pt.n as f64, 0.5));
        let got = truncated_inner(&f, &f, 0, 0, 0).unwrap();
        let want: f64 = [Point::neg(0), Point::pos(0)]
            .iter()
            .map(|&pt| f.value(pt).unwrap().norm_sqr() * weight_w(pt, &p) * jackson_mass(pt, &p))
            .sum();
        assert!((got.re - want).abs() < 1e-14 * want);
        assert!(truncated_inner(&f, &f, 4, 0, 0).is_err());
    }

    #[test]
    fn casorati_needs_lower_neighbour() {
        let g = Grid::new(params(), 3, 3, 3);
        let f = GridFunction::from_fn(&g, |pt| C64::new(pt.n as f64, 1.0));
        assert!(matches!(casorati(&f, &f, Point::pos(3)), Err(Error::Range(_))));
        assert!(casorati(&f, &f, Point::pos(1)).unwrap().norm() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let g = Grid::new(params(), 3, 3, 3);
        let f = GridFunction::from_fn(&g, |pt| C64::new(pt.n as f64, -0.25));
        let back = GridFunction::from_json(&g, &f.to_json().unwrap()).unwrap();
        assert_eq!(f, back);
        let bad = r#"[{"t":"-1","n":-2,"re":1.0,"im":0.0}]"#;
        assert!(GridFunction::from_json(&g, bad).is_err());
    }
}
