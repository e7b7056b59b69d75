#include "core/geometry.hpp"

#include "core/errors.hpp"

namespace propsplat {

Mat3 rotation_matrix(const Quat& q) {
    require(q.finite(), ErrorCode::invalid_argument, "quaternion has non-finite components");
    const double n = q.norm();
    require(n > 0.0, ErrorCode::invalid_argument, "quaternion has zero norm");
    const Quat u = {q.w / n, q.x / n, q.y / n, q.z / n};

    const double w = u.w, x = u.x, y = u.y, z = u.z;
    Mat3 r;
    r.m[0][0] = 1 - 2 * (y * y + z * z);
    r.m[0][1] = 2 * (x * y - w * z);
    r.m[0][2] = 2 * (x * z + w * y);
    r.m[1][0] = 2 * (x * y + w * z);
    r.m[1][1] = 1 - 2 * (x * x + z * z);
    r.m[1][2] = 2 * (y * z - w * x);
    r.m[2][0] = 2 * (x * z - w * y);
    r.m[2][1] = 2 * (y * z + w * x);
    r.m[2][2] = 1 - 2 * (x * x + y * y);
    return r;
}

Mat3 covariance_matrix(const Vec3& log_scale, const Quat& q) {
    require(finite(log_scale), ErrorCode::invalid_argument, "log-scale has non-finite components");
    const Mat3 r = rotation_matrix(q);
    const double s2x = std::exp(2.0 * log_scale.x);
    const double s2y = std::exp(2.0 * log_scale.y);
    const double s2z = std::exp(2.0 * log_scale.z);

    // R * diag(s^2) * R^T
    Mat3 rs2;
    for (int i = 0; i < 3; ++i) {
        rs2.m[i][0] = r.m[i][0] * s2x;
        rs2.m[i][1] = r.m[i][1] * s2y;
        rs2.m[i][2] = r.m[i][2] * s2z;
    }
    return rs2 * r.transposed();
}

SegmentProjection project_onto_segment(const Vec3& tx, const Vec3& rx, const Vec3& point) {
    require(finite(tx) && finite(rx) && finite(point), ErrorCode::invalid_argument,
            "segment projection requires finite inputs");
    const Vec3 v = rx - tx;
    const double d = norm(v);
    require(d > 0.0, ErrorCode::invalid_argument, "degenerate segment: tx and rx coincide");

    const Vec3 u = v * (1.0 / d);
    SegmentProjection p;
    p.span_m = d;
    p.along_m = dot(point - tx, u);
    p.line_point = tx + p.along_m * u;
    p.perp = p.line_point - point;
    p.relevant = p.along_m > 0.0 && p.along_m < d;
    return p;
}

Vec3 world_to_local(const Vec3& v, const Quat& q) {
    return rotation_matrix(q).apply_transposed(v);
}

} // namespace propsplat
