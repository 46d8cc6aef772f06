use nalgebra::Vector3;

const EPS: f64 = 1e-12;

/// Minimum distance between segments `[p1, p2]` and `[p3, p4]`.
///
/// Zero-length segments are treated as points.
pub fn segment_distance(
    p1: &Vector3<f64>,
    p2: &Vector3<f64>,
    p3: &Vector3<f64>,
    p4: &Vector3<f64>,
) -> f64 {
    let (c1, c2) = closest_points(p1, p2, p3, p4);
    (c1 - c2).norm()
}

/// Closest points on the two segments (clamped parametric solution).
pub fn closest_points(
    p1: &Vector3<f64>,
    p2: &Vector3<f64>,
    p3: &Vector3<f64>,
    p4: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let d1 = p2 - p1;
    let d2 = p4 - p3;
    let r = p1 - p3;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);

    let (s, t) = if a <= EPS && e <= EPS {
        (0.0, 0.0)
    } else if a <= EPS {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            // Parallel segments: any s works, pick the start and fix up below.
            let mut s = if denom > EPS * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    (p1 + d1 * s, p3 + d2 * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn parallel_offset() {
        let d = segment_distance(
            &v(0.0, 0.0, 0.0),
            &v(1.0, 0.0, 0.0),
            &v(0.0, 1.0, 0.0),
            &v(1.0, 1.0, 0.0),
        );
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crossing_through_origin() {
        let d = segment_distance(
            &v(-1.0, 0.0, 0.0),
            &v(1.0, 0.0, 0.0),
            &v(0.0, -1.0, 0.0),
            &v(0.0, 1.0, 0.0),
        );
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn degenerate_points() {
        let d = segment_distance(
            &v(0.0, 0.0, 0.0),
            &v(0.0, 0.0, 0.0),
            &v(3.0, 4.0, 0.0),
            &v(3.0, 4.0, 0.0),
        );
        assert!((d - 5.0).abs() < 1e-12);
        // point against segment
        let d = segment_distance(
            &v(0.5, 2.0, 0.0),
            &v(0.5, 2.0, 0.0),
            &v(0.0, 0.0, 0.0),
            &v(1.0, 0.0, 0.0),
        );
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_disjoint() {
        let d = segment_distance(
            &v(0.0, 0.0, 0.0),
            &v(1.0, 0.0, 0.0),
            &v(2.5, 0.0, 0.0),
            &v(4.0, 0.0, 0.0),
        );
        assert!((d - 1.5).abs() < 1e-12);
    }
}
