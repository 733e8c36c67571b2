/// Outcome of searching a bracket for a zero of a scalar event function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventLocation {
    /// The function changes sign at this time.
    Crossing(f64),
    /// The function reaches zero at an endpoint without changing sign.
    Touch(f64),
    None,
}

impl EventLocation {
    pub fn time(&self) -> Option<f64> {
        match *self {
            EventLocation::Crossing(t) | EventLocation::Touch(t) => Some(t),
            EventLocation::None => None,
        }
    }
}

/// Finds a zero of `g` on `[a, b]` by bisection. A sign change yields a
/// crossing located to within `tol`; an endpoint with `|g| <= tol` and no sign
/// change is reported as a touch.
pub fn locate_event<G: Fn(f64) -> f64>(a: f64, b: f64, g: G, tol: f64) -> EventLocation {
    let ga = g(a);
    let gb = g(b);
    if ga == 0.0 {
        return if gb == 0.0 || ga.signum() == gb.signum() { EventLocation::Touch(a) } else { EventLocation::Crossing(a) };
    }
    if ga * gb < 0.0 {
        let (mut lo, mut hi) = (a, b);
        while hi - lo > tol {
            let m = 0.5 * (lo + hi);
            if m <= lo || m >= hi {
                break;
            }
            let gm = g(m);
            if gm == 0.0 {
                return EventLocation::Crossing(m);
            }
            if gm.signum() == ga.signum() {
                lo = m;
            } else {
                hi = m;
            }
        }
        return EventLocation::Crossing(0.5 * (lo + hi));
    }
    if gb.abs() <= tol {
        return EventLocation::Touch(b);
    }
    if ga.abs() <= tol {
        return EventLocation::Touch(a);
    }
    EventLocation::None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_root() {
        let t = locate_event(0.0, 10.0, |t| t - 3.0, 1e-12).time().unwrap();
        assert!((t - 3.0).abs() < 1e-11);
        let t = locate_event(0.0, 1.0, |t| 1.0 - 4.0 * t, 1e-12).time().unwrap();
        assert!((t - 0.25).abs() < 1e-11);
    }

    #[test]
    fn double_root_at_edge_is_touch() {
        // R(t) = (t - 2)^2 on [0, 2], closed-form root at 2.
        let loc = locate_event(0.0, 2.0, |t| (t - 2.0) * (t - 2.0), 1e-9);
        assert_eq!(loc, EventLocation::Touch(2.0));
    }

    #[test]
    fn no_root() {
        assert_eq!(locate_event(0.0, 1.0, |t| 1.0 + t, 1e-9), EventLocation::None);
    }
}
