//! Run configuration, verification suites and exports behind the `ascm` binary.

use crate::crosscheck::{fusion_depth, matrix_crosscheck, ATOM_MATCH_TOL};
use crate::eigenfun::{eigen_residual, EigenFamily};
use crate::lattice::{casorati_factor, casorati_values, inner_product, Grid, GridFunction, Point, QParams};
use crate::qcore::{phi21, qpoch, qpoch_inf, theta, theta_prod, QBase};
use crate::spectral::{
    build_measure, moment_norm, orthogonality_matrix, phi_for, residue_oracle, total_mass_target, SpectralMeasure,
    ATOM_TOL_MOMENTS, DEFAULT_N_QUAD,
};
use crate::transform::{phi_inner_asymptotic, phi_inner_l, Transform};
use crate::{Error, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::time::Instant;

pub const DEFAULT_SEED: u64 = 20_240_601;
/// Size of the truncated matrix in the cross-check.
pub const CROSSCHECK_POINTS: usize = 300;

/// CROSSCHECK_POINTS, or more when q is so close to 1 that the fused path
/// needs them.
pub fn crosscheck_points(p: &QParams) -> usize {
    CROSSCHECK_POINTS.max(2 * crate::crosscheck::fusion_depth(p) + 102)
}

/// Tolerances of the verification suites.
pub mod tol {
    pub const IDENTITY: f64 = 1e-12;
    pub const EIGEN: f64 = 1e-10;
    pub const CASORATI: f64 = 1e-10;
    /// Casorati points whose two products exceed the target by more than
    /// this factor are not judged: the subtraction alone would lose
    /// log10 of it in digits.
    pub const CASORATI_COND: f64 = 1e4;
    pub const ORTHOGONALITY: f64 = 1e-8;
    pub const TOTAL_MASS: f64 = 1e-10;
    pub const RESIDUE: f64 = 1e-8;
    /// Atoms lighter than this are not residue-checked.
    pub const RESIDUE_MIN_MASS: f64 = 1e-10;
    pub const ROUNDTRIP: f64 = 1e-8;
    pub const ISOMETRY: f64 = 1e-8;
    pub const DIAGONAL: f64 = 1e-9;
    /// Fitted decay rate of the asymptotic error, relative to q.
    pub const DECAY_RATE: f64 = 0.05;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Preset {
    Generic,
    /// s = i
    Symmetric,
    /// (a, s) = (q^{−α/2−1/4}, q^{1/4})
    Laguerre { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: QParams,
    pub preset: Preset,
    /// Atom truncation tolerance of the measure.
    pub tol: f64,
    pub n_quad: usize,
    /// (k_max, l_max, m_max)
    pub depths: (usize, usize, usize),
    pub seed: u64,
}

impl RunConfig {
    /// Applies the preset on top of (q, a, s, z) and validates the result.
    pub fn new(q: f64, a: f64, s: C64, z: f64, preset: Preset) -> Result<Self> {
        let (a, s) = match preset {
            Preset::Generic => (a, s),
            Preset::Symmetric => (a, C64::new(0.0, 1.0)),
            Preset::Laguerre { alpha } => {
                let qb = QBase::new(q)?;
                let a = qb.get().powf(-alpha / 2.0 - 0.25);
                if a * a >= 1.0 {
                    return Err(Error::Config(format!("laguerre alpha = {alpha} gives a^2 = {} >= 1", a * a)));
                }
                (a, C64::new(qb.get().powf(0.25), 0.0))
            }
        };
        let params = QParams::new(q, a, s, z)?;
        let g = Grid::default_for(params);
        Ok(RunConfig {
            params,
            preset,
            tol: ATOM_TOL_MOMENTS,
            n_quad: DEFAULT_N_QUAD,
            depths: (g.k_max(), g.l_max(), g.m_max()),
            seed: DEFAULT_SEED,
        })
    }

    /// q = 0.5, a = 0.6, s = e^{iπ/3}, z = 1.
    pub fn default_generic() -> Self {
        Self::new(0.5, 0.6, C64::from_polar(1.0, PI / 3.0), 1.0, Preset::Generic).unwrap()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.params, self.depths.0, self.depths.1, self.depths.2)
    }

    pub fn measure(&self) -> Result<SpectralMeasure> {
        build_measure(&self.params, self.n_quad, self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

impl SuiteEntry {
    /// Passes iff residual ≤ tol (NaN fails).
    pub fn check(name: &str, residual: f64, tol: f64) -> Self {
        SuiteEntry { name: name.into(), residual, tol, pass: residual <= tol, detail: None }
    }

    fn failed(name: &str, err: &Error) -> Self {
        SuiteEntry { name: name.into(), residual: f64::INFINITY, tol: 0.0, pass: false, detail: Some(err.to_string()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub suite: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: Vec<SuiteEntry>,
    pub params: RunConfig,
    pub timing: Vec<Timing>,
}

impl VerificationReport {
    pub fn passes(&self) -> bool {
        self.suite.iter().all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&SuiteEntry> {
        self.suite.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn rel(a: C64, b: C64, scale: f64) -> f64 {
    (a - b).norm() / scale.max(f64::MIN_POSITIVE)
}

fn random_c(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> C64 {
    C64::from_polar(rng.random_range(lo..hi), rng.random_range(-PI..PI))
}

/// Theta identities and the ₂φ₁ q-difference equation at random arguments.
pub fn identity_suite(q: QBase, seed: u64) -> Vec<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qv = q.get();
    let th = |x: C64| theta(x, q).unwrap();
    let (mut quasi, mut split, mut fund, mut shift, mut heine) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let x = random_c(&mut rng, 0.2, 5.0);
        for k in -3i32..=3 {
            let lhs = th(x * qv.powi(k));
            let rhs = (-x).powi(-k) * qv.powf(-(k * (k - 1)) as f64 / 2.0) * th(x);
            quasi = quasi.max(rel(lhs, rhs, lhs.norm().max(rhs.norm())));
        }
        let q2 = q.squared();
        let a = theta(-x, q).unwrap() * th(x);
        let b = theta(x * x, q2).unwrap();
        split = split.max(rel(a, b, a.norm().max(b.norm())));
        let c = theta(x, q2).unwrap() * theta(qv * x, q2).unwrap();
        split = split.max(rel(th(x), c, c.norm().max(th(x).norm())));

        let [y, v, w] = [0; 3].map(|_| random_c(&mut rng, 0.2, 5.0));
        let t1 = theta_prod(&[x * v, x / v, y * w, y / w], q).unwrap();
        let t2 = theta_prod(&[x * w, x / w, y * v, y / v], q).unwrap();
        let t3 = y / v * theta_prod(&[x * y, x / y, v * w, v / w], q).unwrap();
        fund = fund.max(rel(t1 - t2, t3, t1.norm() + t2.norm()));

        let n = rng.random_range(1..8i64);
        let lhs = qpoch_inf(x * q.pow(n), q);
        let rhs = qpoch_inf(x, q) / qpoch(x, q, n).unwrap();
        shift = shift.max(rel(lhs, rhs, lhs.norm().max(rhs.norm())));
        let lhs = qpoch(x * q.pow(-n), q, n).unwrap();
        let rhs = (-x).powi(n as i32) * q.pow(-n * (n + 1) / 2) * qpoch(qv / x, q, n).unwrap();
        shift = shift.max(rel(lhs, rhs, lhs.norm().max(rhs.norm())));

        // (1−T)(1−(C/q)T)y = x(1−AT)(1−BT)y with Ty(x) = y(qx), taken at x/q
        let [aa, bb, cc] = [0; 3].map(|_| random_c(&mut rng, 0.1, 0.9));
        let xx = random_c(&mut rng, 0.05, 0.9 * qv);
        let y = |t: C64| phi21(aa, bb, cc, q, t).unwrap();
        let (y0, y1, y2) = (y(xx / qv), y(xx), y(xx * qv));
        let left = [y0, -(1.0 + cc / qv) * y1, cc / qv * y2];
        let right = [xx / qv * y0, -xx / qv * (aa + bb) * y1, xx / qv * aa * bb * y2];
        let total: C64 = left.iter().sum::<C64>() - right.iter().sum::<C64>();
        let scale: f64 = left.iter().chain(&right).map(|t| t.norm()).sum();
        heine = heine.max(total.norm() / scale);
    }
    vec![
        SuiteEntry::check("identity.theta_quasi_periodicity", quasi, tol::IDENTITY),
        SuiteEntry::check("identity.theta_splitting", split, tol::IDENTITY),
        SuiteEntry::check("identity.theta_fundamental", fund, tol::IDENTITY),
        SuiteEntry::check("identity.qpoch_shifts", shift, tol::IDENTITY),
        SuiteEntry::check("identity.phi21_difference_equation", heine, tol::IDENTITY),
    ]
}

/// Interior points for eigen-residuals: both neighbours on the grid and
/// |x| ≥ 1e-5, where the size of the coefficients of L (~1/|x|) still
/// leaves room for the tolerance.
pub fn residual_points(grid: &Grid) -> Vec<Point> {
    let p = grid.params();
    grid.points()
        .filter(|&pt| !grid.is_edge(pt) && pt.position(p).abs() >= 1e-5)
        .collect()
}

/// 20 random λ: 8 on the circle, 6 real in ±[0.2, 0.95], 6 complex inside the disc.
pub fn random_lambdas(seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..8 {
        out.push(C64::from_polar(1.0, rng.random_range(0.05..PI - 0.05)));
    }
    for _ in 0..6 {
        let r: f64 = rng.random_range(0.2..0.95);
        out.push(C64::new(if rng.random_bool(0.5) { r } else { -r }, 0.0));
    }
    for _ in 0..6 {
        out.push(C64::from_polar(rng.random_range(0.3..0.95), rng.random_range(0.1..PI - 0.1)));
    }
    out
}

/// D(ψ(·;s), ψ(·;1/s)) = a⁻¹(1−q)(s − s⁻¹), read off from x → 0 where
/// ψ(x;s) → s^{−n}. The form a(1−q)(s⁻¹ − s) found in the literature
/// differs from this by the factor −a⁻².
pub fn psi_casorati_constant(p: &QParams) -> C64 {
    (1.0 - p.q.get()) * (p.s - 1.0 / p.s) / p.a
}

/// Worst relative Casorati error against `want`, with the number of
/// points judged and skipped as ill-conditioned.
pub fn casorati_error(f: &GridFunction, g: &GridFunction, want: C64, pts: &[Point]) -> (f64, usize, usize) {
    let p = f.grid().params();
    let (mut worst, mut judged, mut skipped) = (0.0f64, 0, 0);
    for &pt in pts {
        let vals = (f.get(pt), f.get(pt.down()), g.get(pt), g.get(pt.down()));
        let (Some(f0), Some(f1), Some(g0), Some(g1)) = vals else { continue };
        let size = ((f0 * g1).norm() + (f1 * g0).norm()) * casorati_factor(pt, p).abs();
        if size > tol::CASORATI_COND * want.norm() {
            skipped += 1;
            continue;
        }
        judged += 1;
        worst = worst.max(rel(casorati_values(f0, f1, g0, g1, pt, p), want, want.norm()));
    }
    (worst, judged, skipped)
}

pub fn eigen_suite(cfg: &RunConfig) -> Vec<SuiteEntry> {
    let grid = cfg.grid();
    let p = cfg.params;
    let pts = residual_points(&grid);
    let mut eig = 0.0f64;
    let (mut cas_small, mut cas_big) = (0.0f64, 0.0f64);
    let (mut judged, mut skipped) = ([0usize; 2], [0usize; 2]);
    for lam in random_lambdas(cfg.seed) {
        let phi = match phi_for(&grid, lam) {
            Ok(f) => f,
            Err(e) => return vec![SuiteEntry::failed("eigen.phi_residual", &e)],
        };
        let r = eigen_residual(&phi, lam + 1.0 / lam, pts.iter().copied());
        eig = eig.max(r / phi.max_abs());
        let fam = match EigenFamily::new(lam, &grid) {
            Ok(f) => f,
            Err(e) => return vec![SuiteEntry::failed("eigen.casorati", &e)],
        };
        // Off the circle both ψ's grow like Ψ_{1/λ} and the pair cancels
        // almost everywhere; for s near ±1 they are nearly proportional.
        // The conditioning filter covers both.
        let (e, j, s) = casorati_error(&fam.psi_s, &fam.psi_sinv, psi_casorati_constant(&p), &pts);
        cas_small = cas_small.max(if j == 0 && (lam.norm() - 1.0).abs() <= 1e-12 { f64::INFINITY } else { e });
        judged[0] += j;
        skipped[0] += s;
        let want_c = p.k_z() * fam.coeffs.c_minus * (1.0 / lam - lam);
        let (e, j, s) = casorati_error(&fam.phi, &fam.psi_plus, want_c, &pts);
        cas_big = cas_big.max(if j == 0 { f64::INFINITY } else { e });
        judged[1] += j;
        skipped[1] += s;
    }
    let note = |k: usize| Some(format!("{} points judged, {} skipped as ill-conditioned", judged[k], skipped[k]));
    let mut small = SuiteEntry::check("eigen.casorati_psi", cas_small, tol::CASORATI);
    small.detail = note(0);
    let mut big = SuiteEntry::check("eigen.casorati_phi_Psi", cas_big, tol::CASORATI);
    big.detail = note(1);
    vec![SuiteEntry::check("eigen.phi_residual", eig, tol::EIGEN), small, big]
}

/// max |G_{nn′} − δ N_n| / √(N_n N_{n′}) over 0 ≤ n, n′ ≤ N.
pub fn orthogonality_residual(m: &SpectralMeasure, n: usize) -> Result<f64> {
    let g = orthogonality_matrix(n, m)?;
    let norms: Vec<f64> = (0..=n).map(|k| moment_norm(k, &m.params)).collect();
    let mut worst = 0.0f64;
    for i in 0..=n {
        for j in 0..=n {
            let want = if i == j { norms[i] } else { 0.0 };
            worst = worst.max((g[i][j] - want).norm() / (norms[i] * norms[j]).sqrt());
        }
    }
    Ok(worst)
}

pub fn total_mass_residual(m: &SpectralMeasure) -> f64 {
    let t = total_mass_target(&m.params);
    (m.total_mass() - t).abs() / t
}

/// Closed-form residues against contour quadrature, atoms with mass > RESIDUE_MIN_MASS.
pub fn residue_residual(m: &SpectralMeasure) -> Result<f64> {
    let mut worst = 0.0f64;
    for at in m.atoms.atoms.iter().filter(|a| a.mass > tol::RESIDUE_MIN_MASS) {
        let r = residue_oracle(C64::new(at.lambda, 0.0), &m.params, None)?;
        worst = worst.max((r - at.residue).norm() / at.residue.abs());
    }
    Ok(worst)
}

pub fn measure_suite(cfg: &RunConfig) -> Vec<SuiteEntry> {
    let m = match cfg.measure() {
        Ok(m) => m,
        Err(e) => return vec![SuiteEntry::failed("measure.build", &e)],
    };
    let mut out = vec![match orthogonality_residual(&m, 10) {
        Ok(r) => SuiteEntry::check("measure.orthogonality", r, tol::ORTHOGONALITY),
        Err(e) => SuiteEntry::failed("measure.orthogonality", &e),
    }];
    out.push(SuiteEntry::check("measure.total_mass", total_mass_residual(&m), tol::TOTAL_MASS));
    out.push(match residue_residual(&m) {
        Ok(r) => SuiteEntry::check("measure.residues", r, tol::RESIDUE),
        Err(e) => SuiteEntry::failed("measure.residues", &e),
    });
    out
}

/// A random function on five points away from the grid edges.
pub fn random_finite(grid: &Grid, rng: &mut ChaCha8Rng, allowed: impl Fn(Point) -> bool) -> GridFunction {
    let kn = (grid.k_max() / 5).max(1) as i64;
    let (lo, hi) = (-((grid.l_max() / 3) as i64), (grid.m_max() / 3) as i64);
    let mut f = GridFunction::zeros(grid);
    let mut placed = 0;
    for _ in 0..1000 {
        let pt = if rng.random_bool(0.4) { Point::neg(rng.random_range(0..kn)) } else { Point::pos(rng.random_range(lo..=hi)) };
        if allowed(pt) {
            f.set(pt, random_c(rng, 0.1, 1.0)).unwrap();
            placed += 1;
            if placed == 5 {
                break;
            }
        }
    }
    f
}

fn z_norm(f: &GridFunction) -> f64 {
    inner_product(f, f).map(|v| v.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
}

/// (roundtrip, isometry, diagonalisation) worst relative residuals over `count` random functions.
pub fn transform_battery(t: &Transform, count: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let grid = t.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rt, mut iso, mut diag) = (0.0f64, 0.0f64, 0.0f64);
    let mut prev: Option<GridFunction> = None;
    for _ in 0..count {
        let f = random_finite(&grid, &mut rng, |pt| t.is_complete_at(pt));
        let ff = t.forward(&f)?;
        let back = t.inverse(&ff)?;
        // G F f is only meaningful where the retained spectrum is complete
        let diff = back.axpy(C64::new(-1.0, 0.0), &f)?;
        let kept: Vec<C64> =
            grid.points().zip(diff.values()).map(|(pt, &v)| if t.is_complete_at(pt) { v } else { C64::new(0.0, 0.0) }).collect();
        rt = rt.max(z_norm(&GridFunction::from_values(&grid, kept)?) / z_norm(&f));
        if let Some(g) = &prev {
            let fg = t.forward(g)?;
            let lhs = t.h_inner(&ff, &fg)?;
            let rhs = inner_product(&f, g)?;
            iso = iso.max((lhs - rhs).norm() / (z_norm(&f) * z_norm(g)));
        }
        let (r, s) = t.diagonalization_check(&f)?;
        diag = diag.max(r / s);
        prev = Some(f);
    }
    let (r, s) = t.diagonalization_check(&t.point_mass(Point::MINUS_ONE)?)?;
    diag = diag.max(r / s);
    Ok((rt, iso, diag))
}

/// Least-squares rate r in err_l ≈ C rˡ over the given levels, for the
/// asymptotic form of ⟨φ_λ, φ_λ′⟩_l.
pub fn asymptotic_decay_rate(lambda: C64, lambda_p: C64, levels: std::ops::RangeInclusive<usize>, grid: &Grid) -> Result<(f64, Vec<f64>)> {
    let mut errs = Vec::new();
    for l in levels.clone() {
        let exact = phi_inner_l(lambda, lambda_p, l, grid)?;
        let asy = phi_inner_asymptotic(lambda, lambda_p, l, grid)?;
        errs.push((exact - asy).norm());
    }
    let xs: Vec<f64> = levels.map(|l| l as f64).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(((sxy / sxx).exp(), errs))
}

/// Levels 10..=25, shifted down for small q so that qˡ stays above 1e-10
/// and the error is not swamped by rounding.
pub fn asymptotic_levels(q: QBase) -> std::ops::RangeInclusive<usize> {
    let top = ((10.0 / -q.get().log10()).floor() as usize).min(25);
    top.saturating_sub(15).max(top.div_ceil(3)).max(1)..=top.max(6)
}

pub fn transform_suite(cfg: &RunConfig) -> Vec<SuiteEntry> {
    let run = || -> Result<Vec<SuiteEntry>> {
        let grid = cfg.grid();
        let t = Transform::new(&grid, &cfg.measure()?)?;
        let (rt, iso, diag) = transform_battery(&t, 50, cfg.seed)?;
        let incomplete = grid.points().filter(|&pt| !t.is_complete_at(pt)).count();
        let mut roundtrip = SuiteEntry::check("transform.roundtrip", rt, tol::ROUNDTRIP);
        roundtrip.detail = Some(format!("{incomplete} of {} grid points outside the complete region", grid.len()));
        let mut out = vec![
            roundtrip,
            SuiteEntry::check("transform.isometry", iso, tol::ISOMETRY),
            SuiteEntry::check("transform.diagonalization", diag, tol::DIAGONAL),
        ];
        let (l1, l2) = (C64::from_polar(1.0, PI / 5.0), C64::from_polar(1.0, 2.0 * PI / 5.0));
        let levels = asymptotic_levels(cfg.params.q);
        let deep = Grid::new(cfg.params, grid.k_max(), grid.l_max().max(levels.end() + 2), grid.m_max());
        let (rate, _) = asymptotic_decay_rate(l1, l2, levels, &deep)?;
        out.push(SuiteEntry::check("transform.asymptotic_rate", (rate / cfg.params.q.get() - 1.0).abs(), tol::DECAY_RATE));
        Ok(out)
    };
    run().unwrap_or_else(|e| vec![SuiteEntry::failed("transform", &e)])
}

/// (q/s²)^G for real s, q^G on the circle: what the matrix truncation cuts off.
pub fn truncation_tail(p: &QParams) -> f64 {
    let s2 = p.s.norm_sqr();
    (p.q.get() / s2.min(1.0 / s2)).powi(fusion_depth(p) as i32)
}

pub fn crosscheck_suite(cfg: &RunConfig) -> Vec<SuiteEntry> {
    match matrix_crosscheck(&cfg.params, crosscheck_points(&cfg.params)) {
        Ok(r) => {
            let mut band = SuiteEntry::check("crosscheck.band", r.strays.len() as f64, 0.0);
            if !r.strays.is_empty() {
                band.detail = Some(format!("{:?}", r.strays));
            }
            let mut atoms = SuiteEntry::check("crosscheck.atoms", r.worst_atom_distance(), ATOM_MATCH_TOL);
            let tail = truncation_tail(&cfg.params);
            if tail > 1e-8 {
                atoms.detail = Some(format!("eigenvectors keep a tail of about {tail:.1e} beyond the fused node"));
            }
            vec![
                atoms,
                band,
                SuiteEntry::check("crosscheck.gap_shrinks", r.max_gap / r.max_gap_half, 1.0),
            ]
        }
        Err(e) => vec![SuiteEntry::failed("crosscheck", &e)],
    }
}

/// Every suite, run concurrently.
pub fn run_verify(cfg: &RunConfig) -> VerificationReport {
    type Suite<'a> = (&'static str, Box<dyn Fn() -> Vec<SuiteEntry> + Send + Sync + 'a>);
    let suites: Vec<Suite> = vec![
        ("identity", Box::new(|| identity_suite(cfg.params.q, cfg.seed))),
        ("eigen", Box::new(|| eigen_suite(cfg))),
        ("measure", Box::new(|| measure_suite(cfg))),
        ("transform", Box::new(|| transform_suite(cfg))),
        ("crosscheck", Box::new(|| crosscheck_suite(cfg))),
    ];
    let results: Vec<(Vec<SuiteEntry>, Timing)> = std::thread::scope(|s| {
        let handles: Vec<_> = suites
            .iter()
            .map(|(name, f)| {
                s.spawn(move || {
                    let t0 = Instant::now();
                    let out = f();
                    (out, Timing { suite: name.to_string(), seconds: t0.elapsed().as_secs_f64() })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("suite panicked")).collect()
    });
    let mut suite = Vec::new();
    let mut timing = Vec::new();
    for (s, t) in results {
        suite.extend(s);
        timing.push(t);
    }
    VerificationReport { suite, params: cfg.clone(), timing }
}

pub fn export_measure(m: &SpectralMeasure, format: Format) -> Result<String> {
    match format {
        Format::Json => m.to_json(),
        Format::Csv => m.to_csv(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub lambda: f64,
    pub mu: f64,
    pub mass: f64,
    pub w_hat: f64,
    pub residue: f64,
}

pub fn export_spectrum(m: &SpectralMeasure, format: Format) -> Result<String> {
    let rows: Vec<SpectrumRow> = m
        .atoms
        .atoms
        .iter()
        .map(|a| SpectrumRow { lambda: a.lambda, mu: a.lambda + 1.0 / a.lambda, mass: a.mass, w_hat: a.w_hat, residue: a.residue })
        .collect();
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(&serde_json::json!({
            "continuous": [-2.0, 2.0],
            "continuous_mass": m.continuous_mass(),
            "atoms": rows,
        }))?),
        Format::Csv => to_csv(&rows),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoEntry {
    pub n: usize,
    pub m: usize,
    pub re: f64,
    pub im: f64,
    pub expected: f64,
}

pub fn export_ortho(m: &SpectralMeasure, n: usize, format: Format) -> Result<String> {
    let g = orthogonality_matrix(n, m)?;
    let mut rows = Vec::new();
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let expected = if i == j { moment_norm(i, &m.params) } else { 0.0 };
            rows.push(OrthoEntry { n: i, m: j, re: v.re, im: v.im, expected });
        }
    }
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(&rows)?),
        Format::Csv => to_csv(&rows),
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))
}

/// F applied to a grid function given as JSON records.
pub fn transform_json(cfg: &RunConfig, input: &str, format: Format) -> Result<String> {
    let grid = cfg.grid();
    let f = GridFunction::from_json(&grid, input)?;
    let t = Transform::new(&grid, &cfg.measure()?)?;
    let h = t.forward(&f)?;
    match format {
        Format::Json => h.to_json(),
        Format::Csv => {
            #[derive(Serialize)]
            struct Row {
                kind: &'static str,
                at: f64,
                re: f64,
                im: f64,
            }
            let mut rows: Vec<Row> = h.circle.iter().map(|c| Row { kind: "theta", at: c.theta, re: c.re, im: c.im }).collect();
            rows.extend(h.atoms.iter().map(|a| Row { kind: "atom", at: a.lambda, re: a.re, im: a.im }));
            to_csv(&rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let s = RunConfig::new(0.5, 0.6, C64::new(0.3, 0.0), 1.0, Preset::Symmetric).unwrap();
        assert_eq!(s.params.s, C64::new(0.0, 1.0));
        let l = RunConfig::new(0.5, 0.0, C64::new(0.0, 0.0), 1.0, Preset::Laguerre { alpha: -0.75 }).unwrap();
        assert!((l.params.a - 0.5f64.powf(0.125)).abs() < 1e-15);
        assert!((l.params.s.re - 0.5f64.powf(0.25)).abs() < 1e-15);
        assert!(matches!(RunConfig::new(0.5, 0.6, C64::new(0.0, 0.0), 1.0, Preset::Laguerre { alpha: 0.4 }), Err(Error::Config(_))));
        assert!(matches!(RunConfig::new(0.5, 0.6, C64::new(1.0, 0.0), 1.0, Preset::Generic), Err(Error::Config(_))));
    }

    #[test]
    fn identities_hold() {
        for e in identity_suite(QBase::new(0.5).unwrap(), 1) {
            assert!(e.pass, "{e:?}");
        }
    }

    #[test]
    fn report_json_shape() {
        let r = VerificationReport {
            suite: vec![SuiteEntry::check("x", 0.5, 1.0)],
            params: RunConfig::default_generic(),
            timing: vec![],
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["suite"][0]["pass"], true);
        assert!(v["params"].is_object());
        assert!(r.passes());
        assert!(!SuiteEntry::check("nan", f64::NAN, 1.0).pass);
    }
}
