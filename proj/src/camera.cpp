#include "im2mesh/camera.hpp"

#include <algorithm>

namespace im2mesh {

Vec3 camera_position(const CameraPose& pose) {
    double a = deg2rad(pose.azimuth);
    double e = deg2rad(pose.elevation);
    return pose.radius * Vec3(std::cos(e) * std::sin(a), std::sin(e), std::cos(e) * std::cos(a));
}

Mat4 view_transform(const CameraPose& pose) {
    Vec3 eye = camera_position(pose);
    Vec3 f = (-eye).normalized();  // toward the origin
    Vec3 up(0.0, 1.0, 0.0);
    // Degenerate at the poles; nudge the up axis along -Z so the frame stays valid.
    if (std::abs(f.dot(up)) > 1.0 - 1e-9) up = Vec3(0.0, 0.0, -1.0);
    Vec3 s = f.cross(up).normalized();
    Vec3 u = s.cross(f);

    Mat4 m = Mat4::Identity();
    m.block<1, 3>(0, 0) = s.transpose();
    m.block<1, 3>(1, 0) = u.transpose();
    m.block<1, 3>(2, 0) = (-f).transpose();
    m(0, 3) = -s.dot(eye);
    m(1, 3) = -u.dot(eye);
    m(2, 3) = f.dot(eye);
    return m;
}

CameraFrame make_frame(const CameraPose& pose) {
    Mat4 m = view_transform(pose);
    CameraFrame frame;
    frame.rot = m.block<3, 3>(0, 0);
    frame.trans = m.block<3, 1>(0, 3);
    frame.position = camera_position(pose);
    frame.forward = (-frame.position).normalized();
    frame.resolution = pose.resolution;
    frame.focal = 0.5 * pose.resolution / std::tan(0.5 * deg2rad(pose.fov));
    frame.cx = 0.5 * pose.resolution;
    frame.cy = 0.5 * pose.resolution;
    return frame;
}

double balance_factor(const CameraPose& pose, const CameraPose& ref) {
    double delta = deg2rad(pose.azimuth - ref.azimuth);
    return (std::cos(delta) + 1.0) / 2.0;
}

RelativePose relative_pose(const CameraPose& pose, const CameraPose& ref) {
    RelativePose rel;
    rel.delta_azimuth = wrap_angle(pose.azimuth - ref.azimuth);
    rel.delta_elevation = pose.elevation - ref.elevation;
    rel.delta_radius = pose.radius - ref.radius;
    return rel;
}

CameraPose sample_uniform(const PoseRanges& ranges, Rng& rng) {
    CameraPose pose;
    pose.azimuth = rng.uniform(ranges.azimuth_min, ranges.azimuth_max);
    pose.elevation = rng.uniform(ranges.elevation_min, ranges.elevation_max);
    pose.radius = ranges.radius;
    pose.fov = ranges.fov;
    pose.resolution = ranges.resolution;
    return pose;
}

PoseSampler::PoseSampler(int n_regions, int queue_capacity, int warmup_steps,
                         double reference_azimuth, PoseRanges ranges)
    : n_regions_(n_regions),
      queue_capacity_(queue_capacity),
      warmup_steps_(warmup_steps),
      reference_azimuth_(reference_azimuth),
      ranges_(ranges),
      queues_(n_regions) {
    if (n_regions < 2) throw std::invalid_argument("PoseSampler: need at least 2 regions");
    if (queue_capacity < 1) throw std::invalid_argument("PoseSampler: queue capacity must be >= 1");
}

int PoseSampler::region_of(double azimuth) const {
    double a = wrap_angle(azimuth);
    double span = 360.0 / n_regions_;
    int idx = static_cast<int>(std::floor((a + 180.0) / span));
    return std::clamp(idx, 0, n_regions_ - 1);  // a == 180 lands in the last region
}

void PoseSampler::record_error(double azimuth, double error) {
    if (!std::isfinite(error)) throw std::invalid_argument("record_error: error must be finite");
    auto& q = queues_[region_of(azimuth)];
    q.push_back(error);
    if (static_cast<int>(q.size()) > queue_capacity_) q.pop_front();
}

std::vector<double> PoseSampler::empirical_pdf() const {
    std::vector<double> w(n_regions_, -1.0);
    double mean_of_means = 0.0;
    int filled = 0;
    for (int i = 0; i < n_regions_; ++i) {
        if (queues_[i].empty()) continue;
        double m = 0.0;
        for (double e : queues_[i]) m += e;
        m /= static_cast<double>(queues_[i].size());
        w[i] = m;
        mean_of_means += m;
        ++filled;
    }
    // Empty queues take the average weight so they keep a uniform share.
    double share = filled > 0 ? mean_of_means / filled : 1.0;
    double total = 0.0;
    for (int i = 0; i < n_regions_; ++i) {
        if (w[i] < 0.0) w[i] = share;
        total += w[i];
    }
    if (total <= 0.0) {
        std::fill(w.begin(), w.end(), 1.0 / n_regions_);
    } else {
        for (double& v : w) v /= total;
    }
    return w;
}

int PoseSampler::rejection_region(double u) const {
    // [-1, 1] split into n equal intervals; the center interval maps to the
    // region containing the reference azimuth so front views are unsampled.
    int interval = static_cast<int>(std::floor((u + 1.0) / (2.0 / n_regions_)));
    interval = std::clamp(interval, 0, n_regions_ - 1);
    int ref_region = region_of(reference_azimuth_);
    int idx = (ref_region + interval - n_regions_ / 2) % n_regions_;
    return idx < 0 ? idx + n_regions_ : idx;
}

CameraPose PoseSampler::sample(Rng& rng, int iter) {
    if (iter < warmup_steps_) return sample_uniform(ranges_, rng);

    double u = rng.truncated_normal(0.0, 0.5, -1.0, 1.0);
    int rejected = rejection_region(u);

    std::vector<double> pdf = empirical_pdf();
    pdf[rejected] = 0.0;
    double total = 0.0;
    for (double v : pdf) total += v;
    if (total <= 0.0) {
        // All informative mass was in the rejected region; fall back to a
        // uniform choice over the remaining regions.
        for (int i = 0; i < n_regions_; ++i) pdf[i] = i == rejected ? 0.0 : 1.0;
        total = static_cast<double>(n_regions_ - 1);
    }

    double r = rng.uniform() * total;
    int region = -1;
    int last_positive = -1;
    double acc = 0.0;
    for (int i = 0; i < n_regions_; ++i) {
        if (pdf[i] <= 0.0) continue;
        last_positive = i;
        acc += pdf[i];
        if (r < acc) {
            region = i;
            break;
        }
    }
    if (region < 0) region = last_positive;  // fp edge at r == total

    double span = 360.0 / n_regions_;
    double lo = -180.0 + region * span;
    CameraPose pose;
    pose.azimuth = rng.uniform(lo, lo + span);
    pose.elevation = rng.uniform(ranges_.elevation_min, ranges_.elevation_max);
    pose.radius = ranges_.radius;
    pose.fov = ranges_.fov;
    pose.resolution = ranges_.resolution;
    return pose;
}

}  // namespace im2mesh
