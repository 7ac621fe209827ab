//! Low-dimensional numerical checks of the iso-perimetric inequality for
//! Gaussian-times-log-β-concave densities, and concave upper envelopes of
//! grid functions.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::quadrature;
use crate::rng::StreamRng;

const QUAD_TOL: f64 = 1e-10;
const QUAD_TOL_2D: f64 = 1e-9;
const MARGIN: f64 = 1e-6;

/// Sorted, disjoint closed intervals.
pub type Intervals = Vec<(f64, f64)>;

fn check_intervals(set: &[(f64, f64)], lo: f64, hi: f64, name: &str) -> Result<()> {
    for (i, &(a, b)) in set.iter().enumerate() {
        if !(a <= b) || a < lo || b > hi {
            return arg(format!("{name} interval [{a}, {b}] is empty or leaves [{lo}, {hi}]"));
        }
        if i > 0 && a < set[i - 1].1 {
            return arg(format!("{name} intervals must be sorted and disjoint"));
        }
    }
    Ok(())
}

fn set_distance(s1: &[(f64, f64)], s2: &[(f64, f64)]) -> f64 {
    let mut d = f64::INFINITY;
    for &(a1, b1) in s1 {
        for &(a2, b2) in s2 {
            d = d.min((a2 - b1).max(a1 - b2).max(0.0));
        }
    }
    d
}

/// A partition of `K = [a, b]` into `S1`, `S2` and the rest `S3`, with `S1`
/// and `S2` at distance at least `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition1D {
    pub a: f64,
    pub b: f64,
    pub s1: Intervals,
    pub s2: Intervals,
    pub t: f64,
}

impl Partition1D {
    pub fn new(a: f64, b: f64, s1: Intervals, s2: Intervals, t: f64) -> Result<Self> {
        if !(a < b && a.is_finite() && b.is_finite()) {
            return arg(format!("K = [{a}, {b}] is not a bounded interval"));
        }
        if !(t >= 0.0) {
            return arg(format!("separation t must be nonnegative, got {t}"));
        }
        check_intervals(&s1, a, b, "S1")?;
        check_intervals(&s2, a, b, "S2")?;
        let gap = set_distance(&s1, &s2);
        if gap < t {
            return arg(format!("S1 and S2 are {gap} apart, less than t = {t}"));
        }
        Ok(Self { a, b, s1, s2, t })
    }

    /// `S3 = K \ (S1 ∪ S2)` as closed intervals (boundaries have measure zero).
    pub fn s3(&self) -> Intervals {
        let mut taken: Intervals = self.s1.iter().chain(&self.s2).copied().collect();
        taken.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut out = Vec::new();
        let mut cur = self.a;
        for (lo, hi) in taken {
            if lo > cur {
                out.push((cur, lo));
            }
            cur = cur.max(hi);
        }
        if cur < self.b {
            out.push((cur, self.b));
        }
        out
    }

    fn endpoints(&self) -> Vec<f64> {
        self.s1.iter().chain(&self.s2).flat_map(|&(a, b)| [a, b]).collect()
    }
}

/// Outcome of one inequality check: `holds = lhs ≥ rhs − 1e-6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl IsoCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs >= rhs - MARGIN,
        }
    }

    pub fn margin(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// A multiplicative factor `m` with known discontinuity lines `{x : n·x = o}`
/// (points in one dimension), used as quadrature breakpoints.
#[derive(Clone)]
pub struct Factor {
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub lines: Vec<(Vec<f64>, f64)>,
}

impl std::fmt::Debug for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factor").field("lines", &self.lines).finish_non_exhaustive()
    }
}

impl Factor {
    pub fn new(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, lines: Vec<(Vec<f64>, f64)>) -> Self {
        Self {
            eval: Arc::new(eval),
            lines,
        }
    }

    pub fn one() -> Self {
        Self::new(|_| 1.0, Vec::new())
    }

    /// `β` on the half-space `{n·x ≥ o}` and 1 elsewhere.
    pub fn step(normal: Vec<f64>, offset: f64, beta: f64) -> Self {
        let n = normal.clone();
        Self::new(
            move |x| if dot(&n, x) >= offset { beta } else { 1.0 },
            vec![(normal, offset)],
        )
    }

    /// `max(β, exp(−a‖x − c‖²))`.
    pub fn truncated_bump(center: Vec<f64>, a: f64, beta: f64) -> Self {
        Self::new(
            move |x| {
                let r2: f64 = x.iter().zip(&center).map(|(u, v)| (u - v) * (u - v)).sum();
                (-a * r2).exp().max(beta)
            },
            Vec::new(),
        )
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    fn breaks_1d(&self) -> Vec<f64> {
        self.lines
            .iter()
            .filter(|(n, _)| n[0] != 0.0)
            .map(|(n, o)| o / n[0])
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mass_1d(f: &dyn Fn(f64) -> f64, set: &[(f64, f64)], breaks: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &(a, b) in set {
        total += quadrature::integrate(f, a, b, breaks, QUAD_TOL)?;
    }
    Ok(total)
}

/// `(Q(S1), Q(S2), Q(S3))` for the density proportional to `f` on `K`.
fn masses_1d(f: &dyn Fn(f64) -> f64, p: &Partition1D, extra_breaks: &[f64]) -> Result<(f64, f64, f64)> {
    let mut breaks = p.endpoints();
    breaks.extend_from_slice(extra_breaks);
    let z = mass_1d(f, &[(p.a, p.b)], &breaks)?;
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Numerical(format!("density integrates to {z} on K")));
    }
    Ok((
        mass_1d(f, &p.s1, &breaks)? / z,
        mass_1d(f, &p.s2, &breaks)? / z,
        mass_1d(f, &p.s3(), &breaks)? / z,
    ))
}

/// `Q(S3) ≥ β·(2t·e^{−t²/4}/√π)·min{Q(S1), Q(S2)}` for `f = e^{−x²}·m`.
pub fn iso_check_1d(m: &Factor, beta: f64, partition: &Partition1D) -> Result<IsoCheck> {
    check_beta(beta)?;
    let f = |x: f64| (-x * x).exp() * m.eval(&[x]);
    let (q1, q2, q3) = masses_1d(&f, partition, &m.breaks_1d())?;
    let t = partition.t;
    let c = 2.0 * t * (-t * t / 4.0).exp() / std::f64::consts::PI.sqrt();
    Ok(IsoCheck::new(q3, beta * c * q1.min(q2)))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return arg(format!("beta must lie in (0, 1], got {beta}"));
    }
    Ok(())
}

/// A partition of the ball `{‖x‖ ≤ radius}` into slabs along a unit
/// direction `u`: `S1 = {x ∈ K : u·x ∈ s1}` and likewise `S2`. Distances
/// between slabs are at least the gaps between their projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabPartition {
    pub direction: Vec<f64>,
    pub radius: f64,
    pub s1: Intervals,
    pub s2: Intervals,
    pub t: f64,
}

impl SlabPartition {
    pub fn new(direction: Vec<f64>, radius: f64, s1: Intervals, s2: Intervals, t: f64) -> Result<Self> {
        let n = dot(&direction, &direction).sqrt();
        if direction.is_empty() || !(n > 0.0) {
            return arg("slab direction must be a nonzero vector");
        }
        let direction: Vec<f64> = direction.iter().map(|v| v / n).collect();
        // validation shared with the interval case
        let p = Partition1D::new(-radius, radius, s1, s2, t)?;
        Ok(Self {
            direction,
            radius,
            s1: p.s1,
            s2: p.s2,
            t,
        })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    fn projected(&self) -> Partition1D {
        Partition1D {
            a: -self.radius,
            b: self.radius,
            s1: self.s1.clone(),
            s2: self.s2.clone(),
            t: self.t,
        }
    }
}

/// `Q(S3) ≥ β·sqrt(λ_min)·t·e^{−λ_min t²/8}·sqrt(2/π)·min{Q(S1), Q(S2)}`
/// for `f = e^{−½x'Jx}·m` on a ball in one or two dimensions.
pub fn iso_check_gauss(j: &nalgebra::DMatrix<f64>, beta: f64, partition: &SlabPartition, m: &Factor) -> Result<IsoCheck> {
    check_beta(beta)?;
    let d = partition.dim();
    if d > 2 {
        return Err(Error::Unsupported(format!("iso-perimetric quadrature needs d ≤ 2, got {d}")));
    }
    if j.nrows() != d || j.ncols() != d {
        return arg("J does not match the partition dimension");
    }
    let ev = j.clone().symmetric_eigen().eigenvalues;
    let lmin = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lmin > 0.0) || (j - j.transpose()).amax() > 1e-12 {
        return arg("J must be symmetric positive definite");
    }
    let (q1, q2, q3) = if d == 1 {
        let u = partition.direction[0];
        let jj = j[(0, 0)];
        // slab coordinate s = u·x with u = ±1
        let f = |s: f64| (-0.5 * jj * s * s).exp() * m.eval(&[u * s]);
        let breaks: Vec<f64> = m.breaks_1d().iter().map(|b| b * u).collect();
        masses_1d(&f, &partition.projected(), &breaks)?
    } else {
        masses_2d(j, partition, m)?
    };
    let t = partition.t;
    let c = lmin.sqrt() * t * (-lmin * t * t / 8.0).exp() * (2.0 / std::f64::consts::PI).sqrt();
    Ok(IsoCheck::new(q3, beta * c * q1.min(q2)))
}

/// Slab masses in the plane, in coordinates `(s, w)` along `u` and its normal.
fn masses_2d(j: &nalgebra::DMatrix<f64>, p: &SlabPartition, m: &Factor) -> Result<(f64, f64, f64)> {
    let (u0, u1) = (p.direction[0], p.direction[1]);
    let to_x = move |s: f64, w: f64| [u0 * s - u1 * w, u1 * s + u0 * w];
    let r = p.radius;
    let f = |s: f64, w: f64| {
        let x = to_x(s, w);
        let q = j[(0, 0)] * x[0] * x[0] + 2.0 * j[(0, 1)] * x[0] * x[1] + j[(1, 1)] * x[1] * x[1];
        (-0.5 * q).exp() * m.eval(&x)
    };
    // factor discontinuities n·x = o become lines a·s + b·w = o
    let lines: Vec<(f64, f64, f64)> = m
        .lines
        .iter()
        .map(|(n, o)| (n[0] * u0 + n[1] * u1, -n[0] * u1 + n[1] * u0, *o))
        .collect();
    let chord = |s: f64| (r * r - s * s).max(0.0).sqrt();
    let w_breaks = |s: f64| -> Vec<f64> {
        let h = chord(s);
        let mut v = vec![-h, h];
        for &(a, b, o) in &lines {
            if b.abs() > 1e-14 {
                v.push((o - a * s) / b);
            }
        }
        v
    };
    let mut s_breaks = p.projected().endpoints();
    for &(a, b, o) in &lines {
        if b.abs() <= 1e-14 && a != 0.0 {
            s_breaks.push(o / a);
        } else {
            // where the line meets the circle: (a s + b w = o) ∩ (s² + w² = r²)
            let nn = (a * a + b * b).sqrt();
            let (na, nb, no) = (a / nn, b / nn, o / nn);
            let h2 = r * r - no * no;
            if h2 > 0.0 {
                let h = h2.sqrt();
                s_breaks.push(na * no + nb * h);
                s_breaks.push(na * no - nb * h);
            }
        }
    }
    let region = |set: &[(f64, f64)]| -> Result<f64> {
        let mut total = 0.0;
        for &(a, b) in set {
            total += quadrature::integrate_2d(
                |s, w| if s * s + w * w <= r * r { f(s, w) } else { 0.0 },
                (a, b),
                (-r, r),
                &s_breaks,
                w_breaks,
                QUAD_TOL_2D,
            )?;
        }
        Ok(total)
    };
    let z = region(&[(-r, r)])?;
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Numerical(format!("density integrates to {z} on K")));
    }
    let pp = p.projected();
    Ok((region(&pp.s1)? / z, region(&pp.s2)? / z, region(&pp.s3())? / z))
}

/// Strictly increasing abscissae with finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    x: Vec<f64>,
    h: Vec<f64>,
}

impl GridFunction {
    pub fn new(x: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if x.len() != h.len() {
            return arg("abscissae and values differ in length");
        }
        if x.len() < 2 {
            return arg("a grid function needs at least 2 points");
        }
        if x.iter().chain(&h).any(|v| !v.is_finite()) {
            return arg("grid values must be finite");
        }
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return arg("abscissae must be strictly increasing");
        }
        Ok(Self { x, h })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }
}

/// Smallest concave function above the points, evaluated on the same grid.
pub fn concave_upper_envelope(h: &GridFunction) -> GridFunction {
    let (x, y) = (&h.x, &h.h);
    // monotone chain, upper hull, left to right
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..x.len() {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let (dxa, dxi) = (x[a] - x[o], x[i] - x[o]);
            let (l1, l2) = (dxa * (y[i] - y[o]), (y[a] - y[o]) * dxi);
            // near-collinear points stay, so a concave input comes back
            // unchanged; rounding in the differences scales with |y|, not
            // with the differences themselves
            let scale = dxa.abs() * (y[i].abs() + y[o].abs()) + dxi.abs() * (y[a].abs() + y[o].abs());
            if l1 - l2 > 1e-12 * scale {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut m = y.clone();
    for w in hull.windows(2) {
        let (l, r) = (w[0], w[1]);
        for i in l + 1..r {
            let v = y[l] + (y[r] - y[l]) * (x[i] - x[l]) / (x[r] - x[l]);
            m[i] = v.max(y[i]);
        }
    }
    GridFunction { x: x.clone(), h: m }
}

/// `exp(−max_i(m(x_i) − h(x_i)))` for the concave envelope `m` of `h`.
pub fn beta_from_envelope(h: &GridFunction) -> f64 {
    let m = concave_upper_envelope(h);
    let gap = m.h.iter().zip(&h.h).map(|(a, b)| a - b).fold(0.0, f64::max);
    (-gap).exp()
}

/// Random slab partition of the ball of radius `r` in `dim` dimensions.
///
/// Alternating `S1`/`S2` blocks along a random direction, separated by gaps
/// of at least `t`; `t` itself is random, up to `t_max`.
pub fn random_slab_partition(dim: usize, r: f64, t_max: f64, rng: &mut StreamRng) -> Result<SlabPartition> {
    let direction: Vec<f64> = loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if dot(&v, &v) > 1e-12 {
            break v;
        }
    };
    let blocks = rng.random_range(2..=5usize);
    let labels: Vec<bool> = (0..blocks).map(|_| rng.random::<bool>()).collect();
    let changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
    let mut t = rng.random::<f64>() * t_max;
    if changes > 0 {
        t = t.min(1.6 * r / changes as f64);
    }
    // lengths: leading gap, then block / gap pairs, trailing gap
    let free = 2.0 * r - changes as f64 * t;
    let weights: Vec<f64> = (0..2 * blocks + 1).map(|_| rng.random::<f64>().powi(2)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut s1 = Vec::new();
    let mut s2 = Vec::new();
    let mut pos = -r + free * weights[0] / wsum;
    for b in 0..blocks {
        let len = free * weights[1 + 2 * b] / wsum;
        let end = (pos + len).min(r);
        if labels[b] { &mut s1 } else { &mut s2 }.push((pos, end));
        pos = end;
        if b + 1 < blocks {
            let forced = if labels[b] != labels[b + 1] { t } else { 0.0 };
            pos = (pos + forced + free * weights[2 + 2 * b] / wsum).min(r);
        }
    }
    merge(&mut s1);
    merge(&mut s2);
    SlabPartition::new(direction, r, s1, s2, t)
}

fn merge(set: &mut Intervals) {
    let mut out: Intervals = Vec::with_capacity(set.len());
    for &(a, b) in set.iter() {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    *set = out;
}

/// Random concave piecewise-linear function on a grid, pushed down by at most
/// `gap` away from its kinks, with the full `gap` reached at one point.
/// Returns the perturbed function and the concave function it came from.
pub fn random_gapped_concave(points: usize, gap: f64, rng: &mut StreamRng) -> Result<(GridFunction, GridFunction)> {
    if points < 3 {
        return arg("need at least 3 grid points to hide a gap");
    }
    let mut x = Vec::with_capacity(points);
    let mut acc = 0.0;
    for _ in 0..points {
        x.push(acc);
        acc += 0.1 + rng.random::<f64>();
    }
    // kinks at random grid points, including both ends
    let mut kinks: Vec<usize> = vec![0, points - 1];
    for i in 1..points - 1 {
        if rng.random::<f64>() < 0.2 {
            kinks.push(i);
        }
    }
    kinks.sort_unstable();
    kinks.dedup();
    if kinks.len() == points {
        kinks.remove(1 + rng.random_range(0..points - 2));
    }
    let mut slope = rng.random_range(-1.0..3.0);
    let mut c = vec![0.0; points];
    c[0] = rng.random_range(-2.0..2.0);
    for w in kinks.windows(2) {
        for i in w[0] + 1..=w[1] {
            c[i] = c[w[0]] + slope * (x[i] - x[w[0]]);
        }
        slope -= 0.05 + rng.random::<f64>();
    }
    let free: Vec<usize> = (0..points).filter(|i| !kinks.contains(i)).collect();
    let peak = free[rng.random_range(0..free.len())];
    let h: Vec<f64> = (0..points)
        .map(|i| {
            if kinks.contains(&i) {
                c[i]
            } else if i == peak {
                c[i] - gap
            } else {
                c[i] - gap * rng.random::<f64>()
            }
        })
        .collect();
    Ok((GridFunction::new(x.clone(), h)?, GridFunction::new(x, c)?))
}

/// Factor families used by the partition fuzzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// Indicator-type step across a random hyperplane.
    Step,
    /// Smooth bump truncated to a ball.
    Bump,
}

impl std::str::FromStr for FactorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Self::Step),
            "bump" => Ok(Self::Bump),
            other => arg(format!("unknown factor family {other:?} (expected step or bump)")),
        }
    }
}

/// Random SPD matrix in one or two dimensions with eigenvalues in `[0.25, 4)`.
pub fn random_spd(dim: usize, rng: &mut StreamRng) -> Result<nalgebra::DMatrix<f64>> {
    use nalgebra::{DMatrix, DVector};
    if !(1..=2).contains(&dim) {
        return Err(Error::Unsupported(format!("random_spd in dimension {dim}")));
    }
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let ev: Vec<f64> = (0..dim).map(|_| rng.random_range(0.25..4.0)).collect();
    if dim == 1 {
        return Ok(DMatrix::from_element(1, 1, ev[0]));
    }
    let (c, s) = (angle.cos(), angle.sin());
    let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    Ok(&q * DMatrix::from_diagonal(&DVector::from_vec(ev)) * q.transpose())
}

/// Random member of a factor family on the ball of radius `radius`.
pub fn random_factor(kind: FactorKind, dim: usize, radius: f64, beta: f64, rng: &mut StreamRng) -> Factor {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    match kind {
        FactorKind::Step => {
            let n = dot(&v, &v).sqrt().max(1e-3);
            let normal: Vec<f64> = v.iter().map(|x| x / n).collect();
            Factor::step(normal, rng.random_range(-0.5 * radius..0.5 * radius), beta)
        }
        FactorKind::Bump => {
            let center: Vec<f64> = v.iter().map(|x| x * radius * 0.7).collect();
            Factor::truncated_bump(center, rng.random_range(0.1..3.0), beta)
        }
    }
}

/// One random case: radius `U(1, 4)`, a slab partition with `t ≤ 2`, a random
/// factor and a random `J`. In one dimension the same partition is also
/// checked in the `e^{-x²}` form, so two checks come back.
pub fn fuzz_case(kind: FactorKind, beta: f64, dim: usize, rng: &mut StreamRng) -> Result<Vec<IsoCheck>> {
    let radius = rng.random_range(1.0..4.0);
    let part = random_slab_partition(dim, radius, 2.0, rng)?;
    let m = random_factor(kind, dim, radius, beta, rng);
    let j = random_spd(dim, rng)?;
    let mut checks = vec![iso_check_gauss(&j, beta, &part, &m)?];
    if dim == 1 {
        let u = part.direction[0];
        let flip = |set: &[(f64, f64)]| -> Intervals {
            let mut v: Intervals = set.iter().map(|&(a, b)| if u > 0.0 { (a, b) } else { (-b, -a) }).collect();
            v.sort_by(|p, q| p.0.total_cmp(&q.0));
            v
        };
        let p1 = Partition1D::new(-radius, radius, flip(&part.s1), flip(&part.s2), part.t)?;
        checks.push(iso_check_1d(&m, beta, &p1)?);
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn erf(x: f64) -> f64 {
        statrs::function::erf::erf(x)
    }

    #[test]
    fn lemma_example_with_unit_factor() {
        let p = Partition1D::new(-3.0, 3.0, vec![(-3.0, -0.5)], vec![(0.5, 3.0)], 1.0).unwrap();
        let c = iso_check_1d(&Factor::one(), 1.0, &p).unwrap();
        let q3 = erf(0.5) / erf(3.0);
        let q1 = (erf(3.0) - erf(0.5)) / (2.0 * erf(3.0));
        assert!((c.lhs - q3).abs() < 1e-9);
        assert!((c.lhs - 0.5205).abs() < 1e-4);
        let rhs = 2.0 * (-0.25f64).exp() / std::f64::consts::PI.sqrt() * q1;
        assert!((c.rhs - rhs).abs() < 1e-9);
        assert!((c.rhs - 0.2107).abs() < 1e-4);
        assert!(c.holds);
    }

    #[test]
    fn trivial_partitions() {
        let p = Partition1D::new(-3.0, 3.0, vec![], vec![(0.5, 3.0)], 1.0).unwrap();
        let c = iso_check_1d(&Factor::one(), 1.0, &p).unwrap();
        assert_eq!(c.rhs, 0.0);
        assert!(c.holds);
        let p = Partition1D::new(-3.0, 3.0, vec![(-3.0, 0.0)], vec![(0.0, 3.0)], 0.0).unwrap();
        let c = iso_check_1d(&Factor::one(), 1.0, &p).unwrap();
        assert_eq!(c.rhs, 0.0);
        assert!(c.holds);
        let s = SlabPartition::new(vec![1.0, 1.0], 2.0, vec![(-2.0, 0.0)], vec![], 0.5).unwrap();
        let c = iso_check_gauss(&DMatrix::identity(2, 2), 1.0, &s, &Factor::one()).unwrap();
        assert!(c.holds && c.rhs == 0.0);
    }

    #[test]
    fn partition_validation() {
        assert!(Partition1D::new(-1.0, 1.0, vec![(-1.0, 0.0)], vec![(0.2, 1.0)], 0.5).is_err());
        assert!(Partition1D::new(-1.0, 1.0, vec![(-1.5, 0.0)], vec![], 0.0).is_err());
        assert!(Partition1D::new(-1.0, 1.0, vec![(0.0, 0.5), (-0.5, 0.1)], vec![], 0.0).is_err());
        let p = Partition1D::new(-1.0, 1.0, vec![(-1.0, -0.5)], vec![(0.0, 0.5)], 0.5).unwrap();
        assert_eq!(p.s3(), vec![(-0.5, 0.0), (0.5, 1.0)]);
    }

    #[test]
    fn corollary_reduces_to_lemma_for_j_two() {
        let p = Partition1D::new(-2.5, 2.5, vec![(-2.5, -0.3)], vec![(0.4, 1.0), (1.8, 2.5)], 0.7).unwrap();
        let m = Factor::step(vec![1.0], 0.2, 0.6);
        let a = iso_check_1d(&m, 0.6, &p).unwrap();
        let s = SlabPartition::new(vec![1.0], 2.5, p.s1.clone(), p.s2.clone(), p.t).unwrap();
        let b = iso_check_gauss(&DMatrix::from_element(1, 1, 2.0), 0.6, &s, &m).unwrap();
        assert!((a.lhs - b.lhs).abs() < 1e-6 && (a.rhs - b.rhs).abs() < 1e-6);
    }

    #[test]
    fn two_dimensional_masses_sum_to_one() {
        let s = SlabPartition::new(vec![0.6, 0.8], 3.0, vec![(-3.0, -1.0)], vec![(0.0, 3.0)], 1.0).unwrap();
        let p = s.projected();
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let m = Factor::step(vec![1.0, -1.0], 0.3, 0.5);
        let (q1, q2, q3) = masses_2d(&j, &s, &m).unwrap();
        assert!((q1 + q2 + q3 - 1.0).abs() < 1e-8);
        assert_eq!(p.s3(), vec![(-1.0, 0.0)]);
    }

    #[test]
    fn two_dimensional_unit_factor_matches_closed_form() {
        // J = I on a large ball: slab masses are normal probabilities
        let s = SlabPartition::new(vec![1.0, 0.0], 9.0, vec![(-9.0, -0.5)], vec![(0.5, 9.0)], 1.0).unwrap();
        let (q1, _, q3) = masses_2d(&DMatrix::identity(2, 2), &s, &Factor::one()).unwrap();
        let phi = |z: f64| 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
        assert!((q1 - phi(-0.5)).abs() < 1e-8);
        assert!((q3 - (phi(0.5) - phi(-0.5))).abs() < 1e-8);
    }

    #[test]
    fn gauss_check_rejects_high_dimension() {
        let s = SlabPartition::new(vec![1.0, 0.0, 0.0], 1.0, vec![], vec![], 0.0).unwrap();
        assert!(matches!(
            iso_check_gauss(&DMatrix::identity(3, 3), 1.0, &s, &Factor::one()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn envelope_examples() {
        let x: Vec<f64> = (-2..=2).map(f64::from).collect();
        let concave = GridFunction::new(x.clone(), x.iter().map(|v| -v * v).collect()).unwrap();
        assert_eq!(concave_upper_envelope(&concave), concave);
        assert_eq!(beta_from_envelope(&concave), 1.0);

        let h = GridFunction::new(x, vec![-2.0, -1.0, 0.0, -1.3, -2.0]).unwrap();
        let m = concave_upper_envelope(&h);
        assert_eq!(m.values(), &[-2.0, -1.0, 0.0, -1.0, -2.0]);
        assert!((beta_from_envelope(&h) - (-0.3f64).exp()).abs() < 1e-12);
        assert!((beta_from_envelope(&h) - 0.7408).abs() < 1e-4);

        let two = GridFunction::new(vec![0.0, 1.0], vec![3.0, -1.0]).unwrap();
        assert_eq!(concave_upper_envelope(&two), two);
        assert!(GridFunction::new(vec![0.0], vec![1.0]).is_err());
        assert!(GridFunction::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn gapped_generator_hits_its_gap() {
        let mut g = rng::stream(3);
        for _ in 0..50 {
            let (h, c) = random_gapped_concave(12, 0.4, &mut g).unwrap();
            let m = concave_upper_envelope(&c);
            assert!(m.values().iter().zip(c.values()).all(|(a, b)| (a - b).abs() < 1e-12));
            assert!((beta_from_envelope(&h) - (-0.4f64).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn random_partitions_are_admissible() {
        let mut g = rng::stream(8);
        for dim in [1, 2] {
            for _ in 0..200 {
                let p = random_slab_partition(dim, 2.0, 1.5, &mut g).unwrap();
                assert!(set_distance(&p.s1, &p.s2) >= p.t);
            }
        }
    }

    proptest! {
        #[test]
        fn envelope_dominates_and_is_idempotent(vals in prop::collection::vec(-5.0f64..5.0, 2..30)) {
            let x: Vec<f64> = (0..vals.len()).map(|i| i as f64 * 0.5).collect();
            let h = GridFunction::new(x, vals).unwrap();
            let m = concave_upper_envelope(&h);
            for (a, b) in m.values().iter().zip(h.values()) {
                prop_assert!(a >= b);
            }
            prop_assert_eq!(concave_upper_envelope(&m), m.clone());
            // concave on the grid
            let (xs, ms) = (m.x(), m.values());
            for i in 1..xs.len() - 1 {
                let s1 = (ms[i] - ms[i - 1]) / (xs[i] - xs[i - 1]);
                let s2 = (ms[i + 1] - ms[i]) / (xs[i + 1] - xs[i]);
                prop_assert!(s2 <= s1 + 1e-9);
            }
        }

        #[test]
        fn refining_the_grid_never_raises_beta(coarse in prop::collection::vec(0usize..2, 40), shift in -1.0f64..1.0) {
            let h = |x: f64| -(x - shift).powi(2) + 0.4 * (5.0 * x).sin() - 0.3 * f64::from(u8::from(x > 0.0));
            let fine_x: Vec<f64> = (0..40).map(|i| -2.0 + i as f64 * 0.1).collect();
            let mut sub: Vec<f64> = fine_x.iter().zip(&coarse).filter(|(_, k)| **k == 1).map(|(x, _)| *x).collect();
            if sub.len() < 2 {
                sub = vec![fine_x[0], fine_x[39]];
            }
            let fine = GridFunction::new(fine_x.clone(), fine_x.iter().map(|x| h(*x)).collect()).unwrap();
            let coarse = GridFunction::new(sub.clone(), sub.iter().map(|x| h(*x)).collect()).unwrap();
            prop_assert!(beta_from_envelope(&fine) <= beta_from_envelope(&coarse) + 1e-15);
        }
    }
}
