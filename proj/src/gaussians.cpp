#include "im2mesh/gaussians.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

namespace im2mesh {

void GaussianCloud::normalize_rotations() {
    for (Index i = 0; i < rotations.rows(); ++i) {
        double n = rotations.row(i).norm();
        if (n < 1e-12) {
            rotations.row(i) << 1.0, 0.0, 0.0, 0.0;
        } else {
            rotations.row(i) /= n;
        }
    }
}

GaussianCloud init_cloud(Index count, Rng& rng, double sphere_radius, double opacity,
                         const Vec3& color) {
    if (count < 1) throw std::invalid_argument("init_cloud: count must be >= 1");

    GaussianCloud cloud;
    cloud.positions.resize(count, 3);
    for (Index i = 0; i < count; ++i) {
        // Uniform in the ball via radial inversion.
        Vec3 dir;
        double n;
        do {
            dir = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            n = dir.norm();
        } while (n > 1.0 || n < 1e-9);
        double r = sphere_radius * std::cbrt(rng.uniform());
        cloud.positions.row(i) = (dir / n * r).transpose();
    }

    // Isotropic initial scale from the mean nearest-neighbor distance.
    double mean_nn = 0.0;
    if (count == 1) {
        mean_nn = sphere_radius * 0.5;
    } else {
        for (Index i = 0; i < count; ++i) {
            double best = std::numeric_limits<double>::max();
            for (Index j = 0; j < count; ++j) {
                if (i == j) continue;
                best = std::min(best, (cloud.positions.row(i) - cloud.positions.row(j)).squaredNorm());
            }
            mean_nn += std::sqrt(best);
        }
        mean_nn /= static_cast<double>(count);
    }
    double ls = std::log(std::max(mean_nn, 1e-6));
    cloud.log_scales = MatX3::Constant(count, 3, ls);

    cloud.rotations.resize(count, 4);
    for (Index i = 0; i < count; ++i) cloud.rotations.row(i) << 1.0, 0.0, 0.0, 0.0;

    cloud.opacity_logits = VecX::Constant(count, logit(opacity));
    cloud.colors.resize(count, 3);
    for (Index i = 0; i < count; ++i) cloud.colors.row(i) = color.transpose();
    return cloud;
}

Mat3 quat_to_rotation(const Vec4& quat) {
    double n = quat.norm();
    Vec4 q = n < 1e-12 ? Vec4(1, 0, 0, 0) : Vec4(quat / n);
    double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Mat3 covariance(const Vec3& log_scale, const Vec4& quat) {
    Mat3 r = quat_to_rotation(quat);
    Vec3 s2 = (2.0 * log_scale).array().exp();
    return r * s2.asDiagonal() * r.transpose();
}

std::vector<Index> topk_selection(const DensifyStats& stats, Index n, double ratio) {
    Index k = static_cast<Index>(std::ceil(ratio * static_cast<double>(n)));
    k = std::min(k, n);
    if (k <= 0) return {};

    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index(0));
    auto mean_grad = [&](Index i) {
        double c = stats.count[i];
        return c > 0 ? stats.grad_norm_accum[i] / c : 0.0;
    };
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        double ga = mean_grad(a), gb = mean_grad(b);
        if (ga != gb) return ga > gb;
        return a < b;  // ties broken by lower index
    });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

CloudEdit densify_topk(const GaussianCloud& cloud, const DensifyStats& stats, double ratio,
                       double scale_split_threshold, Rng& rng) {
    if (stats.grad_norm_accum.size() != cloud.count())
        throw std::invalid_argument("densify_topk: stats not aligned with cloud");
    if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("densify_topk: ratio out of [0,1]");

    std::vector<Index> selected = topk_selection(stats, cloud.count(), ratio);
    std::vector<bool> is_selected(cloud.count(), false);
    for (Index i : selected) is_selected[i] = true;

    Index n = cloud.count();
    std::vector<Index> parent;
    std::vector<uint8_t> is_new;
    parent.reserve(n + selected.size());

    std::vector<Vec3> positions;
    std::vector<Vec3> log_scales;
    std::vector<Vec4> rotations;
    std::vector<double> logits;
    std::vector<Vec3> colors;
    auto push = [&](Index src, const Vec3& pos, const Vec3& ls, bool fresh) {
        positions.push_back(pos);
        log_scales.push_back(ls);
        rotations.push_back(cloud.rotations.row(src).transpose());
        logits.push_back(cloud.opacity_logits[src]);
        colors.push_back(cloud.colors.row(src).transpose());
        parent.push_back(src);
        is_new.push_back(fresh ? 1 : 0);
    };

    const double split_scale_div = std::log(1.6);
    for (Index i = 0; i < n; ++i) {
        Vec3 pos = cloud.positions.row(i).transpose();
        Vec3 ls = cloud.log_scales.row(i).transpose();
        if (!is_selected[i]) {
            push(i, pos, ls, false);
            continue;
        }
        Vec3 s = ls.array().exp();
        if (s.maxCoeff() < scale_split_threshold) {
            // Clone: keep the original and offset the copy along the mean
            // accumulated gradient direction by half a standard deviation.
            push(i, pos, ls, false);
            Vec3 g = stats.world_grad_accum.row(i).transpose();
            Vec3 offset = Vec3::Zero();
            if (g.norm() > 1e-12) offset = g.normalized() * (0.5 * s.mean());
            push(i, pos + offset, ls, true);
        } else {
            // Split: two children sampled within the parent, scales / 1.6.
            Mat3 r = quat_to_rotation(cloud.rotations.row(i).transpose());
            Vec3 child_ls = ls.array() - split_scale_div;
            for (int child = 0; child < 2; ++child) {
                Vec3 xi(rng.normal(), rng.normal(), rng.normal());
                Vec3 sample = pos + r * (s.array() * xi.array()).matrix();
                push(i, sample, child_ls, true);
            }
        }
    }

    CloudEdit edit;
    Index m = static_cast<Index>(positions.size());
    edit.cloud.positions.resize(m, 3);
    edit.cloud.log_scales.resize(m, 3);
    edit.cloud.rotations.resize(m, 4);
    edit.cloud.opacity_logits.resize(m);
    edit.cloud.colors.resize(m, 3);
    for (Index i = 0; i < m; ++i) {
        edit.cloud.positions.row(i) = positions[i].transpose();
        edit.cloud.log_scales.row(i) = log_scales[i].transpose();
        edit.cloud.rotations.row(i) = rotations[i].transpose();
        edit.cloud.opacity_logits[i] = logits[i];
        edit.cloud.colors.row(i) = colors[i].transpose();
    }
    edit.parent = std::move(parent);
    edit.is_new = std::move(is_new);
    return edit;
}

CloudEdit prune(const GaussianCloud& cloud, double opacity_threshold) {
    std::vector<Index> keep;
    for (Index i = 0; i < cloud.count(); ++i) {
        if (cloud.opacity(i) >= opacity_threshold) keep.push_back(i);
    }
    CloudEdit edit;
    if (keep.empty()) {
        Index best = 0;
        for (Index i = 1; i < cloud.count(); ++i) {
            if (cloud.opacity_logits[i] > cloud.opacity_logits[best]) best = i;
        }
        keep.push_back(best);
        edit.all_pruned_warning = true;
    }

    Index m = static_cast<Index>(keep.size());
    edit.cloud.positions.resize(m, 3);
    edit.cloud.log_scales.resize(m, 3);
    edit.cloud.rotations.resize(m, 4);
    edit.cloud.opacity_logits.resize(m);
    edit.cloud.colors.resize(m, 3);
    for (Index i = 0; i < m; ++i) {
        Index src = keep[i];
        edit.cloud.positions.row(i) = cloud.positions.row(src);
        edit.cloud.log_scales.row(i) = cloud.log_scales.row(src);
        edit.cloud.rotations.row(i) = cloud.rotations.row(src);
        edit.cloud.opacity_logits[i] = cloud.opacity_logits[src];
        edit.cloud.colors.row(i) = cloud.colors.row(src);
    }
    edit.is_new.assign(keep.size(), 0);
    edit.parent = std::move(keep);
    return edit;
}

namespace {

Mat3 clamped_inverse_covariance(const GaussianCloud& cloud, Index i, double min_scale) {
    Vec3 ls = cloud.log_scales.row(i).transpose();
    Vec3 s = ls.array().exp().max(min_scale);
    Mat3 r = quat_to_rotation(cloud.rotations.row(i).transpose());
    Vec3 inv_s2 = (s.array() * s.array()).inverse();
    return r * inv_s2.asDiagonal() * r.transpose();
}

}  // namespace

double density_at(const GaussianCloud& cloud, const Vec3& point, const DensityOptions& opts) {
    if (cloud.count() == 0) throw std::invalid_argument("density_at: empty cloud");
    double cutoff_sq = opts.mahalanobis_cutoff * opts.mahalanobis_cutoff;
    double total = 0.0;
    for (Index i = 0; i < cloud.count(); ++i) {
        Vec3 d = point - cloud.positions.row(i).transpose();
        Mat3 inv = clamped_inverse_covariance(cloud, i, opts.min_scale);
        double q = d.dot(inv * d);
        if (!opts.exact && q > cutoff_sq) continue;
        total += cloud.opacity(i) * std::exp(-0.5 * q);
    }
    return total;
}

std::vector<double> density_on_grid(const GaussianCloud& cloud, int res,
                                    const DensityOptions& opts) {
    int verts = res + 1;
    double cell = 2.0 / res;
    std::vector<double> field(static_cast<size_t>(verts) * verts * verts, 0.0);
    auto vertex_pos = [&](int i) { return -1.0 + i * cell; };

    for (Index g = 0; g < cloud.count(); ++g) {
        Vec3 center = cloud.positions.row(g).transpose();
        Mat3 inv = clamped_inverse_covariance(cloud, g, opts.min_scale);
        double alpha = cloud.opacity(g);
        double cutoff_sq = opts.mahalanobis_cutoff * opts.mahalanobis_cutoff;

        int x0 = 0, x1 = verts - 1, y0 = 0, y1 = verts - 1, z0 = 0, z1 = verts - 1;
        if (!opts.exact) {
            // Conservative footprint: cutoff times the largest axis scale.
            double smax = cloud.scales(g).maxCoeff();
            double rad = opts.mahalanobis_cutoff * std::max(smax, opts.min_scale);
            x0 = std::max(0, static_cast<int>(std::floor((center.x() - rad + 1.0) / cell)));
            x1 = std::min(verts - 1, static_cast<int>(std::ceil((center.x() + rad + 1.0) / cell)));
            y0 = std::max(0, static_cast<int>(std::floor((center.y() - rad + 1.0) / cell)));
            y1 = std::min(verts - 1, static_cast<int>(std::ceil((center.y() + rad + 1.0) / cell)));
            z0 = std::max(0, static_cast<int>(std::floor((center.z() - rad + 1.0) / cell)));
            z1 = std::min(verts - 1, static_cast<int>(std::ceil((center.z() + rad + 1.0) / cell)));
        }
        for (int x = x0; x <= x1; ++x) {
            for (int y = y0; y <= y1; ++y) {
                for (int z = z0; z <= z1; ++z) {
                    Vec3 d(vertex_pos(x) - center.x(), vertex_pos(y) - center.y(),
                           vertex_pos(z) - center.z());
                    double q = d.dot(inv * d);
                    if (!opts.exact && q > cutoff_sq) continue;
                    field[(static_cast<size_t>(x) * verts + y) * verts + z] +=
                        alpha * std::exp(-0.5 * q);
                }
            }
        }
    }
    return field;
}

namespace {

constexpr uint32_t kCloudMagic = 0x434D4731;  // "1GMC"
constexpr uint32_t kCloudVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("cloud checkpoint: truncated file");
    return v;
}

void write_doubles(std::ofstream& out, const double* p, size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("cloud checkpoint: truncated file");
}

}  // namespace

void save_cloud(const GaussianCloud& cloud, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_cloud: cannot open " + path);
    write_pod(out, kCloudMagic);
    write_pod(out, kCloudVersion);
    uint64_t n = static_cast<uint64_t>(cloud.count());
    write_pod(out, n);
    write_doubles(out, cloud.positions.data(), n * 3);
    write_doubles(out, cloud.log_scales.data(), n * 3);
    write_doubles(out, cloud.rotations.data(), n * 4);
    write_doubles(out, cloud.opacity_logits.data(), n);
    write_doubles(out, cloud.colors.data(), n * 3);
    if (!out) throw std::runtime_error("save_cloud: write failed for " + path);
}

GaussianCloud load_cloud(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_cloud: cannot open " + path);
    if (read_pod<uint32_t>(in) != kCloudMagic)
        throw std::runtime_error("load_cloud: bad magic in " + path);
    if (read_pod<uint32_t>(in) != kCloudVersion)
        throw std::runtime_error("load_cloud: unsupported version in " + path);
    uint64_t n = read_pod<uint64_t>(in);
    GaussianCloud cloud;
    cloud.positions.resize(n, 3);
    cloud.log_scales.resize(n, 3);
    cloud.rotations.resize(n, 4);
    cloud.opacity_logits.resize(n);
    cloud.colors.resize(n, 3);
    read_doubles(in, cloud.positions.data(), n * 3);
    read_doubles(in, cloud.log_scales.data(), n * 3);
    read_doubles(in, cloud.rotations.data(), n * 4);
    read_doubles(in, cloud.opacity_logits.data(), n);
    read_doubles(in, cloud.colors.data(), n * 3);
    return cloud;
}

}  // namespace im2mesh
