//! One-dimensional search routines shared by the dual solver, best-response
//! steps, and the price-bound root finder.

pub(crate) const INV_PHI: f64 = 0.618_033_988_749_894_8;

pub(crate) struct GoldenResult {
    pub x: f64,
    pub fx: f64,
    pub evals: usize,
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
///
/// Stops when the bracket width drops below `xtol`, or (after a few
/// iterations) when the objective spread across the interior probes falls
/// below `obj_rtol * (1 + |f|)`. Ties move the bracket toward `lo`.
pub(crate) fn golden_min(
    f: &mut impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    xtol: f64,
    obj_rtol: f64,
) -> GoldenResult {
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evals = 2usize;
    loop {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        evals += 1;
        if b - a <= xtol {
            break;
        }
        if obj_rtol > 0.0
            && evals >= 12
            && (f1 - f2).abs() <= obj_rtol * (1.0 + f1.abs().min(f2.abs()))
        {
            break;
        }
        if evals >= 300 {
            break;
        }
    }
    if f1 <= f2 {
        GoldenResult { x: x1, fx: f1, evals }
    } else {
        GoldenResult { x: x2, fx: f2, evals }
    }
}

/// One bounded quadratic-fit polish step for a maximization problem.
///
/// Fits a parabola through `x` and two flanking probes, evaluates the
/// clamped vertex, and keeps whichever point is best (ties toward lower x).
pub(crate) fn quadratic_polish_max(
    f: &mut impl FnMut(f64) -> f64,
    x: f64,
    fx: f64,
    lo: f64,
    hi: f64,
) -> (f64, f64) {
    let h = (1e-6 * (hi - lo)).max(1e-9);
    let xm = (x - h).max(lo);
    let xp = (x + h).min(hi);
    if xp - xm < 0.5 * h {
        return (x, fx);
    }
    let fm = f(xm);
    let fp = f(xp);
    // Vertex of the parabola through (xm, fm), (x, fx), (xp, fp).
    let d1 = (fx - fm) / (x - xm);
    let d2 = (fp - fx) / (xp - x);
    let curv = (d2 - d1) / (xp - xm);
    let mut best = [(x, fx), (xm, fm), (xp, fp)]
        .into_iter()
        .fold((x, fx), |acc, (cx, cf)| pick_max(acc, (cx, cf)));
    if curv < 0.0 {
        let vertex = 0.5 * (xm + x) - 0.5 * d1 / curv;
        if vertex.is_finite() {
            let v = vertex.clamp(lo, hi);
            let fv = f(v);
            best = pick_max(best, (v, fv));
        }
    }
    best
}

fn pick_max(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
        b
    } else {
        a
    }
}

/// Bisection for a root of `f` on a bracket with `f(lo) < 0 < f(hi)`.
/// Stops once `|f(mid)| <= ftol` or the bracket collapses.
pub(crate) fn bisect_root(
    f: &mut impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    ftol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let mut mid = 0.5 * (lo + hi);
    let mut fmid = f(mid);
    for _ in 0..max_iter {
        if fmid.abs() <= ftol || hi - lo <= f64::EPSILON * mid.abs() {
            return (mid, fmid);
        }
        if fmid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        fmid = f(mid);
    }
    (mid, fmid)
}
