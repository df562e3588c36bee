//! Finite-matrix check of the spectrum of L, independent of the q-series.
//!
//! L is truncated to a path: −1, −q, …, −q^{G−1} on I⁻, one node standing
//! for both ±q^G, then q^{G−1}, …, q^{−M} on I⁺. With G chosen so that
//! q^G is below double resolution the two sides of 0 are fused into a
//! single node whose mass is the sum of both. Conjugating by √mass makes
//! the matrix symmetric tridiagonal and its eigenvalues are found by
//! Sturm-count bisection.

use crate::eigenfun::l_coefficients;
use crate::lattice::{jackson_mass, weight_w, Point, QParams};
use crate::spectral::{atom_locations, discrete_spectrum, ATOM_TOL_MASS, ATOM_TOL_MOMENTS};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Atom images must be matched this closely.
pub const ATOM_MATCH_TOL: f64 = 1e-3;
/// Slack around [−2, 2].
pub const BAND_SLACK: f64 = 1e-2;
/// Relative size of the neighbourhood accepted around an atom image.
pub const ATOM_WINDOW: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// off[i] couples i and i+1.
    pub off: Vec<f64>,
}

/// Eigenvalues of size ~q^{−n} live near x ~ ±qⁿ. Beyond q^{−G/2} they sit
/// too close to the fused node to mean anything and are not judged.
pub fn resolution_limit(p: &QParams) -> f64 {
    p.q.pow_half(-(fusion_depth(p) as i64))
}

/// Depth on I⁻ at which q^G falls below 1e-16.
///
/// For real s the eigenvectors decay towards 0 only like (q/s²)ⁿ, so the
/// cut at q^G leaves a tail of order (q/s²)^G. Going deeper does not help:
/// the bridge diagonal is a difference of two entries of size q^{−G} and
/// its O(1) remainder is lost once q^{−G} passes 1/ε.
pub fn fusion_depth(p: &QParams) -> usize {
    (1e-16f64.ln() / p.q.get().ln()).ceil() as usize
}

/// The symmetrised truncation with `n` nodes.
pub fn assemble(p: &QParams, n: usize) -> Result<Tridiagonal> {
    let g = fusion_depth(p);
    if n < 2 * g + 2 {
        return Err(Error::Config(format!("{n} nodes cannot hold the fused path (need {})", 2 * g + 2)));
    }
    let m_depth = (n - 2 * g - 1) as i64;
    let mut pts: Vec<Point> = (0..g as i64).map(Point::neg).collect();
    let bridge = pts.len();
    pts.push(Point::neg(g as i64));
    pts.extend((-m_depth..g as i64).rev().map(Point::pos));
    let mass = |pt: Point| jackson_mass(pt, p) * weight_w(pt, p);
    let (bn, bp) = (Point::neg(g as i64), Point::pos(g as i64));
    let bridge_mass = mass(bn) + mass(bp);

    let mut diag = Vec::with_capacity(n);
    for (i, &pt) in pts.iter().enumerate() {
        if i == bridge {
            let d = (mass(bn) * l_coefficients(bn, p).mid + mass(bp) * l_coefficients(bp, p).mid) / bridge_mass;
            diag.push(d);
        } else {
            diag.push(l_coefficients(pt, p).mid);
        }
    }
    let mut off = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        // the member of the pair nearer to −1 or to +∞ steps to the other by x → qx
        let (outer, inner_mass) = if i < bridge {
            (pts[i], if i + 1 == bridge { bridge_mass } else { mass(pts[i + 1]) })
        } else {
            (pts[i + 1], if i == bridge { bridge_mass } else { mass(pts[i]) })
        };
        off.push(l_coefficients(outer, p).down * (mass(outer) / inner_mass).sqrt());
    }
    Ok(Tridiagonal { diag, off })
}

impl Tridiagonal {
    /// Number of eigenvalues below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0f64;
        for i in 0..self.diag.len() {
            let b2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            d = self.diag[i] - x - if i == 0 { 0.0 } else { b2 / d };
            if d == 0.0 {
                d = -f64::EPSILON * (self.diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let (lo0, hi0) = self.gershgorin();
        (0..self.diag.len())
            .map(|k| {
                let (mut lo, mut hi) = (lo0, hi0);
                for _ in 0..2000 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi || hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                        break;
                    }
                    if self.count_below(mid) > k {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomMatch {
    pub lambda: f64,
    pub mu: f64,
    pub mass: f64,
    pub nearest: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub n_points: usize,
    pub fraction_in_band: f64,
    /// Atoms with mass ≥ ATOM_TOL_MASS of the total.
    pub retained: Vec<AtomMatch>,
    /// Resolved eigenvalues outside the band and outside every atom neighbourhood.
    pub strays: Vec<f64>,
    /// Eigenvalues beyond [`resolution_limit`].
    pub unresolved: usize,
    /// Largest gap between consecutive eigenvalues covering [−2, 2], at n and at n/2.
    pub max_gap: f64,
    pub max_gap_half: f64,
}

impl CrossCheckReport {
    pub fn worst_atom_distance(&self) -> f64 {
        self.retained.iter().map(|a| a.distance).fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.worst_atom_distance() <= ATOM_MATCH_TOL && self.strays.is_empty()
    }
}

fn max_band_gap(eigs: &[f64]) -> f64 {
    let mut inside: Vec<f64> = eigs.iter().copied().filter(|e| e.abs() <= 2.0).collect();
    inside.insert(0, -2.0);
    inside.push(2.0);
    inside.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

pub fn matrix_crosscheck(p: &QParams, n: usize) -> Result<CrossCheckReport> {
    let eigs = assemble(p, n)?.eigenvalues();
    let half = assemble(p, (n / 2).max(2 * fusion_depth(p) + 2))?.eigenvalues();
    let all = discrete_spectrum(p, ATOM_TOL_MOMENTS)?;
    let total: f64 = all.atoms.iter().map(|a| a.mass).sum();
    let nearest = |mu: f64| eigs.iter().copied().min_by(|a, b| (a - mu).abs().total_cmp(&(b - mu).abs())).unwrap();
    let retained = all
        .atoms
        .iter()
        .filter(|a| a.mass >= ATOM_TOL_MASS * total)
        .map(|a| {
            let mu = a.lambda + 1.0 / a.lambda;
            let e = nearest(mu);
            AtomMatch { lambda: a.lambda, mu, mass: a.mass, nearest: e, distance: (e - mu).abs() }
        })
        .collect();
    let limit = resolution_limit(p);
    // all of S, including atoms whose mass underflows
    let images: Vec<f64> = atom_locations(p, 0.25 / limit)?.iter().map(|l| l + 1.0 / l).collect();
    let in_band = |e: f64| e.abs() <= 2.0 + BAND_SLACK;
    let strays = eigs
        .iter()
        .copied()
        .filter(|&e| e.abs() <= limit)
        .filter(|&e| !in_band(e) && !images.iter().any(|&mu| (e - mu).abs() <= ATOM_WINDOW * mu.abs().max(1.0)))
        .collect();
    Ok(CrossCheckReport {
        n_points: n,
        fraction_in_band: eigs.iter().filter(|&&e| in_band(e)).count() as f64 / n as f64,
        retained,
        strays,
        unresolved: eigs.iter().filter(|e| e.abs() > limit).count(),
        max_gap: max_band_gap(&eigs),
        max_gap_half: max_band_gap(&half),
    })
}
