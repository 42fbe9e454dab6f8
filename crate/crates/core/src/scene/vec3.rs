pub(crate) type V3 = [f64; 3];

pub(crate) fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: V3) -> V3 {
    let n = norm(a);
    if n > 0.0 {
        scale(a, 1.0 / n)
    } else {
        a
    }
}

/// Rotation matrix (row-major) of an axis-angle vector.
pub(crate) fn rotation(axis_angle: V3) -> [V3; 3] {
    let angle = norm(axis_angle);
    if angle < 1e-12 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let [x, y, z] = scale(axis_angle, 1.0 / angle);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

pub(crate) fn mat_vec(m: &[V3; 3], v: V3) -> V3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub(crate) fn mat_mul(a: &[V3; 3], b: &[V3; 3]) -> [V3; 3] {
    let col = |j: usize| [b[0][j], b[1][j], b[2][j]];
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = dot(a[i], col(j));
        }
    }
    m
}

/// Axis-angle vector of a rotation matrix, angle in `[0, pi]`.
pub(crate) fn axis_angle(m: &[V3; 3]) -> V3 {
    let c = ((m[0][0] + m[1][1] + m[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = c.acos();
    let skew = [m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]];
    if angle < 1e-9 {
        return scale(skew, 0.5);
    }
    if std::f64::consts::PI - angle > 1e-6 {
        return scale(skew, angle / (2.0 * angle.sin()));
    }
    // Near a half turn the symmetric part carries the axis.
    let d = [(m[0][0] + 1.0) / 2.0, (m[1][1] + 1.0) / 2.0, (m[2][2] + 1.0) / 2.0];
    let i = (0..3).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
    let mut axis = [0.0; 3];
    axis[i] = d[i].max(0.0).sqrt();
    for j in 0..3 {
        if j != i {
            axis[j] = (m[i][j] + m[j][i]) / (4.0 * axis[i]);
        }
    }
    scale(normalize(axis), angle)
}
