#pragma once

#include <deque>
#include <vector>

#include "im2mesh/types.hpp"

namespace im2mesh {

/// Spherical camera around the origin. Angles in degrees, +Y is up.
struct CameraPose {
    double azimuth = 0.0;    // [-180, 180]
    double elevation = 0.0;  // degrees above the horizon
    double radius = 2.0;     // > 0
    double fov = 49.1;       // vertical field of view, degrees
    int resolution = 64;     // square image side in pixels
};

struct RelativePose {
    double delta_azimuth = 0.0;  // wrapped to [-180, 180]
    double delta_elevation = 0.0;
    double delta_radius = 0.0;
};

/// World position of the camera for a pose.
Vec3 camera_position(const CameraPose& pose);

/// World-to-camera rigid transform (4x4 homogeneous). The camera sits at
/// camera_position(pose) looking at the origin, up +Y; camera space is
/// x-right, y-up, z toward the viewer (points in front have negative z).
Mat4 view_transform(const CameraPose& pose);

/// Precomputed projection state shared by both renderers.
struct CameraFrame {
    Mat3 rot;       // world-to-camera rotation
    Vec3 trans;     // world-to-camera translation
    Vec3 position;  // camera center in world space
    Vec3 forward;   // unit vector from camera toward the origin
    double focal = 0.0;
    double cx = 0.0, cy = 0.0;
    int resolution = 0;

    Vec3 world_to_cam(const Vec3& p) const { return rot * p + trans; }
    double depth_of(const Vec3& p_cam) const { return -p_cam.z(); }

    /// Pixel coordinates of a camera-space point; row 0 is the top of the
    /// image so world-up projects upward.
    Vec2 project(const Vec3& p_cam) const {
        double d = -p_cam.z();
        return {cx + focal * p_cam.x() / d, cy - focal * p_cam.y() / d};
    }
};

CameraFrame make_frame(const CameraPose& pose);

/// Eq. 4 balance factor: eta = (cos(delta_azimuth) + 1) / 2 in [0, 1].
double balance_factor(const CameraPose& pose, const CameraPose& ref);

RelativePose relative_pose(const CameraPose& pose, const CameraPose& ref);

struct PoseRanges {
    double azimuth_min = -180.0, azimuth_max = 180.0;
    double elevation_min = -45.0, elevation_max = 45.0;
    double radius = 2.0;
    double fov = 49.1;
    int resolution = 64;
};

CameraPose sample_uniform(const PoseRanges& ranges, Rng& rng);

/// 3D-aware pose sampler: azimuth is split into n_regions equal arcs, each
/// with a bounded FIFO of empirical errors. Sampling rejects one region via
/// a truncated Gaussian (centered on the reference azimuth, so front views
/// are unsampled), then draws from the error-weighted categorical over the
/// remaining regions.
class PoseSampler {
public:
    PoseSampler(int n_regions = 5, int queue_capacity = 32, int warmup_steps = 100,
                double reference_azimuth = 0.0, PoseRanges ranges = {});

    /// Append an error observation to the region containing `azimuth`.
    void record_error(double azimuth, double error);

    /// Image side for subsequently sampled poses (resolution schedules).
    void set_resolution(int resolution) { ranges_.resolution = resolution; }

    CameraPose sample(Rng& rng, int iter);

    int region_of(double azimuth) const;
    int n_regions() const { return n_regions_; }
    int warmup_steps() const { return warmup_steps_; }
    const std::deque<double>& queue(int region) const { return queues_[region]; }

    /// Probability weights over regions before rejection (mean queue error;
    /// empty queues take a uniform share).
    std::vector<double> empirical_pdf() const;

    /// Region rejected for a truncated-Gaussian draw u in [-1, 1].
    int rejection_region(double u) const;

private:
    int n_regions_;
    int queue_capacity_;
    int warmup_steps_;
    double reference_azimuth_;
    PoseRanges ranges_;
    std::vector<std::deque<double>> queues_;
};

}  // namespace im2mesh
