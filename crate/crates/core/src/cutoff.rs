//! The smooth even low-pass symbol `h`: equal to 1 on `[-1/2, 1/2]`,
//! vanishing outside `(-1, 1)`, with a C-infinity bump-quotient transition.

fn bump(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// `h(t)`. The transition on `1/2 < |t| < 1` is
/// `g(2(1-|t|)) / (g(2(1-|t|)) + g(2(|t|-1/2)))` with `g(s) = exp(-1/s)`,
/// which gives `h(3/4) = 1/2` exactly and `h(t) + h(3/2 - t) = 1`.
pub fn h(t: f64) -> f64 {
    let s = t.abs();
    if s <= 0.5 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let up = bump(2.0 * (1.0 - s));
        let down = bump(2.0 * (s - 0.5));
        up / (up + down)
    }
}
