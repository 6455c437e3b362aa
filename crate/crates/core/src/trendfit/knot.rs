use crate::corpus::VolumeSeries;

use super::FitError;

/// Fractional year where the follower's volume first meets the leader's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub y0: f64,
    pub bracket: (i32, i32),
    /// Linearly interpolated volumes at `y0` (equal up to rounding).
    pub leader_volume: f64,
    pub follower_volume: f64,
}

/// Linear interpolation of the first sign change of `follower − leader`.
///
/// Only consecutive years observed by both series are considered. A bracket
/// `(a, a+1)` qualifies when the gap is `≤ 0` at `a` and `> 0` at `a+1`.
pub fn crossing_year(leader: &VolumeSeries, follower: &VolumeSeries) -> Result<Knot, FitError> {
    let overlap: Vec<(i32, f64, f64)> = leader
        .points
        .iter()
        .filter_map(|&(y, l)| follower.get(y).map(|f| (y, l as f64, f as f64)))
        .collect();
    for w in overlap.windows(2) {
        let ((ya, la, fa), (yb, lb, fb)) = (w[0], w[1]);
        if yb != ya + 1 {
            continue;
        }
        let (da, db) = (fa - la, fb - lb);
        if da <= 0.0 && db > 0.0 {
            let frac = -da / (db - da);
            let y0 = ya as f64 + frac;
            return Ok(Knot {
                y0,
                bracket: (ya, yb),
                leader_volume: la + frac * (lb - la),
                follower_volume: fa + frac * (fb - fa),
            });
        }
    }
    if !overlap.is_empty() && overlap.iter().all(|&(_, l, f)| f > l) {
        Err(FitError::CrossingBeforeData)
    } else {
        Err(FitError::NoCrossing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityId;

    fn series(points: &[(i32, u64)]) -> VolumeSeries {
        VolumeSeries {
            entity: EntityId::new("X").unwrap(),
            points: points.to_vec(),
        }
    }

    #[test]
    fn interpolates_bracket() {
        let k = crossing_year(&series(&[(2008, 100), (2009, 110)]), &series(&[(2008, 90), (2009, 130)])).unwrap();
        assert!((k.y0 - (2008.0 + 1.0 / 3.0)).abs() < 1e-9);
        assert_eq!(k.bracket, (2008, 2009));
        assert!((k.leader_volume - k.follower_volume).abs() < 1e-9);
        assert!((k.leader_volume - (100.0 + 10.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn exact_touch_is_integer_year() {
        let l = series(&[(2000, 50), (2001, 60), (2002, 70)]);
        let f = series(&[(2000, 10), (2001, 60), (2002, 90)]);
        assert_eq!(crossing_year(&l, &f).unwrap().y0, 2001.0);
    }

    #[test]
    fn first_bracket_wins() {
        let l = series(&[(1, 10), (2, 10), (3, 10), (4, 10)]);
        let f = series(&[(1, 5), (2, 15), (3, 5), (4, 15)]);
        assert_eq!(crossing_year(&l, &f).unwrap().bracket, (1, 2));
    }

    #[test]
    fn no_crossing_errors() {
        let l = series(&[(2000, 10), (2001, 20)]);
        assert_eq!(crossing_year(&l, &series(&[(2000, 1), (2001, 2)])).unwrap_err(), FitError::NoCrossing);
        assert_eq!(
            crossing_year(&l, &series(&[(2000, 11), (2001, 21)])).unwrap_err(),
            FitError::CrossingBeforeData
        );
        assert_eq!(crossing_year(&l, &series(&[(1990, 11)])).unwrap_err(), FitError::NoCrossing);
    }

    #[test]
    fn uses_only_overlapping_years() {
        let l = series(&[(1962, 1), (1963, 2), (2008, 100), (2009, 110)]);
        let f = series(&[(2008, 90), (2009, 130)]);
        assert_eq!(crossing_year(&l, &f).unwrap().bracket, (2008, 2009));
    }
}
