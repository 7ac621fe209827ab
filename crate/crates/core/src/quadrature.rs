//! Globally adaptive Gauss–Kronrod (7/15 points) integration on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{arg, Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`, splitting first at
/// the sorted `breaks` that fall inside the interval.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return arg("integration limits must be finite");
    }
    if b <= a {
        return Ok(0.0);
    }
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);

    let mut heap = BinaryHeap::new();
    let mut err = 0.0;
    for w in pts.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        err += e;
        heap.push(Piece { a: w[0], b: w[1], value: v, error: e });
    }
    let mut iters = 0;
    loop {
        if err <= tol {
            // the running total drifts; confirm against a fresh sum
            err = heap.iter().map(|p| p.error).sum();
            if err <= tol {
                break;
            }
        }
        // below this level the error estimate is rounding noise
        if iters % 64 == 0 {
            let scale: f64 = heap.iter().map(|p| p.value.abs()).sum();
            if err <= 1e-14 * scale {
                break;
            }
        }
        iters += 1;
        if iters > 20_000 {
            return Err(Error::Numerical(format!(
                "quadrature did not reach tolerance {tol:e} (estimated error {err:e})"
            )));
        }
        let p = heap.pop().expect("heap is never empty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // interval cannot be split further; accept it
            err -= p.error;
            heap.push(Piece { error: 0.0, ..p });
            continue;
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        err += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2 });
    }
    Ok(heap.iter().map(|p| p.value).sum())
}

/// Iterated integral over the rectangle `[ax, bx] × [ay, by]`.
/// `ybreaks(x)` gives breakpoints of the inner integrand at a fixed `x`.
pub fn integrate_2d<F, B>(
    f: F,
    (ax, bx): (f64, f64),
    (ay, by): (f64, f64),
    xbreaks: &[f64],
    ybreaks: B,
    tol: f64,
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Vec<f64>,
{
    let width = (bx - ax).max(f64::MIN_POSITIVE);
    let inner_tol = tol / (4.0 * width);
    let mut failure = None;
    let v = integrate(
        |x| {
            let yb = ybreaks(x);
            match integrate(|y| f(x, y), ay, by, &yb, inner_tol) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        ax,
        bx,
        xbreaks,
        tol / 2.0,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_gaussian() {
        let v = integrate(|x| x * x, 0.0, 3.0, &[], 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate(|x| (-x * x / 2.0).exp(), -10.0, 10.0, &[], 1e-12).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn discontinuity_with_breakpoint() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { 2.0 };
        let v = integrate(f, 0.0, 1.0, &[0.3], 1e-12).unwrap();
        assert!((v - 1.7).abs() < 1e-12);
        let v = integrate(f, 0.0, 1.0, &[], 1e-9).unwrap();
        assert!((v - 1.7).abs() < 1e-8);
    }

    #[test]
    fn disc_area() {
        let v = integrate_2d(
            |x, y| if x * x + y * y <= 1.0 { 1.0 } else { 0.0 },
            (-1.0, 1.0),
            (-1.0, 1.0),
            &[],
            |x| {
                let r = (1.0 - x * x).max(0.0).sqrt();
                vec![-r, r]
            },
            1e-9,
        )
        .unwrap();
        assert!((v - std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn empty_interval() {
        assert_eq!(integrate(|_| 1.0, 1.0, 1.0, &[], 1e-9).unwrap(), 0.0);
        assert!(integrate(|_| 1.0, 0.0, f64::INFINITY, &[], 1e-9).is_err());
    }
}
