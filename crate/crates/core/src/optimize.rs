//! One-dimensional minimizers used by the estimators and scenario searches.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimum of `f` on `[lo, hi]`, stopping once the bracket
/// is narrower than `tol`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    // 200 iterations shrink any finite bracket below f64 resolution
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section maximum of `f` on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    golden_min(|x| -f(x), lo, hi, tol)
}

/// Maximizes `f` over `[lo, hi]` by a uniform coarse scan of `points`
/// samples followed by golden-section refinement in the neighbouring cells.
///
/// Among equal coarse maxima the one closest to the interval midpoint wins.
/// Returns `(argmax, max, coarse_values)`.
pub fn grid_then_golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize, tol: f64) -> (f64, f64, Vec<f64>) {
    assert!(points >= 2 && hi > lo, "grid_then_golden_max: bad interval");
    let step = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|k| lo + k as f64 * step).collect();
    let values: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mid = 0.5 * (lo + hi);
    let mut best = 0;
    for k in 1..points {
        let better =
            values[k] > values[best] || (values[k] == values[best] && (xs[k] - mid).abs() < (xs[best] - mid).abs());
        if better {
            best = k;
        }
    }
    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(points - 1)];
    let x = golden_max(&f, a, b, tol);
    let fx = f(x);
    if fx >= values[best] {
        (x, fx, values)
    } else {
        (xs[best], values[best], values)
    }
}
