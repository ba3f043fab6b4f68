#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace im2mesh {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using MatX4 = Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>;
using MatX3i = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
using VecX = Eigen::VectorXd;
using Index = Eigen::Index;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline double lerp(double a, double b, double t) { return a + (b - a) * t; }

/// Wrap an angle in degrees to [-180, 180].
inline double wrap_angle(double deg) {
    double a = std::fmod(deg + 180.0, 360.0);
    if (a < 0) a += 360.0;
    return a - 180.0;
}

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double softplus(double x) {
    // log(1 + e^x), stable for large |x|
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

/// Dense row-major image, `channels` interleaved doubles per pixel.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {}

    double* at(int r, int c) { return data.data() + (static_cast<size_t>(r) * width + c) * channels; }
    const double* at(int r, int c) const {
        return data.data() + (static_cast<size_t>(r) * width + c) * channels;
    }
    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    double l2_norm() const {
        double s = 0.0;
        for (double v : data) s += v * v;
        return std::sqrt(s);
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: image shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

/// Deterministic RNG. All draws go through our own transforms so sequences
/// are bit-identical across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    /// Box-Muller; the paired sine value is discarded to keep state simple.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
        return mean + stddev * z;
    }

    /// Rejection-sampled normal restricted to [lo, hi].
    double truncated_normal(double mean, double stddev, double lo, double hi) {
        for (;;) {
            double x = normal(mean, stddev);
            if (x >= lo && x <= hi) return x;
        }
    }

    uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace im2mesh
