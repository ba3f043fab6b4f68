#include "im2mesh/texture.hpp"

#include <atomic>
#include <cstdio>

namespace im2mesh {

namespace {

constexpr uint64_t kHashPrimeY = 2654435761u;
constexpr uint64_t kHashPrimeZ = 805459861u;

Vec3 clamp_domain(const Vec3& kappa, bool& clamped) {
    Vec3 k = kappa;
    clamped = false;
    for (int i = 0; i < 3; ++i) {
        if (k[i] < -1.0 || k[i] > 1.0) {
            k[i] = std::clamp(k[i], -1.0, 1.0);
            clamped = true;
        }
    }
    return k;
}

}  // namespace

TextureField::TextureField(const TextureConfig& cfg, Rng& rng) : cfg_(cfg) {
    Index table_size = Index(1) << cfg.log2_table_size;
    double growth = cfg.levels > 1
        ? std::exp(std::log(cfg.max_resolution / cfg.base_resolution) / (cfg.levels - 1))
        : 1.0;

    Index offset = 0;
    for (int l = 0; l < cfg.levels; ++l) {
        LevelLayout layout;
        layout.resolution =
            static_cast<int>(std::floor(cfg.base_resolution * std::pow(growth, l)));
        Index n = static_cast<Index>(layout.resolution) + 1;
        Index dense = n * n * n;
        layout.direct = dense <= table_size;
        layout.table_entries = layout.direct ? dense : table_size;
        layout.table_offset = offset;
        offset += layout.table_entries;
        levels_.push_back(layout);
    }
    entries_per_encoding_ = offset;

    Index f = cfg.features_per_level;
    Index enc_params = entries_per_encoding_ * f;
    int in_dim = feature_dim();
    Index decoder_params = static_cast<Index>(cfg.hidden_width) * in_dim + cfg.hidden_width +
                           3 * cfg.hidden_width + 3;

    ref_offset_ = 0;
    back_offset_ = enc_params;
    decoder_offset_ = 2 * enc_params;
    params_ = VecX::Zero(2 * enc_params + decoder_params);

    for (Index i = 0; i < 2 * enc_params; ++i)
        params_[i] = rng.uniform(-cfg.init_scale, cfg.init_scale);

    // Decoder: scaled uniform fan-in init, zero biases.
    Index p = decoder_offset_;
    double s1 = std::sqrt(6.0 / in_dim);
    for (int i = 0; i < cfg.hidden_width * in_dim; ++i) params_[p++] = rng.uniform(-s1, s1);
    p += cfg.hidden_width;  // b1 = 0
    double s2 = std::sqrt(6.0 / cfg.hidden_width);
    for (int i = 0; i < 3 * cfg.hidden_width; ++i) params_[p++] = rng.uniform(-s2, s2);
}

Index TextureField::table_index(const LevelLayout& level, int ix, int iy, int iz) const {
    if (level.direct) {
        Index n = static_cast<Index>(level.resolution) + 1;
        return level.table_offset + (static_cast<Index>(ix) * n + iy) * n + iz;
    }
    uint64_t h = static_cast<uint64_t>(ix) ^ (static_cast<uint64_t>(iy) * kHashPrimeY) ^
                 (static_cast<uint64_t>(iz) * kHashPrimeZ);
    return level.table_offset + static_cast<Index>(h & ((uint64_t(1) << cfg_.log2_table_size) - 1));
}

VecX TextureField::lookup(Index base_offset, const Vec3& kappa) const {
    int f = cfg_.features_per_level;
    VecX out = VecX::Zero(feature_dim());
    for (int l = 0; l < cfg_.levels; ++l) {
        const LevelLayout& level = levels_[l];
        int res = level.resolution;
        double fx[3];
        int base[3];
        for (int k = 0; k < 3; ++k) {
            double x = (kappa[k] + 1.0) * 0.5 * res;
            int i = std::clamp(static_cast<int>(std::floor(x)), 0, res - 1);
            base[k] = i;
            fx[k] = std::clamp(x - i, 0.0, 1.0);
        }
        for (int c = 0; c < 8; ++c) {
            int ix = base[0] + (c & 1), iy = base[1] + ((c >> 1) & 1), iz = base[2] + ((c >> 2) & 1);
            double weight = ((c & 1) ? fx[0] : 1.0 - fx[0]) * (((c >> 1) & 1) ? fx[1] : 1.0 - fx[1]) *
                            (((c >> 2) & 1) ? fx[2] : 1.0 - fx[2]);
            Index row = table_index(level, ix, iy, iz);
            for (int j = 0; j < f; ++j)
                out[l * f + j] += weight * params_[base_offset + row * f + j];
        }
    }
    return out;
}

void TextureField::lookup_backward(Index base_offset, const Vec3& kappa, const VecX& grad_feature,
                                   double scale, VecX& grad_params, Vec3* grad_kappa) const {
    if (scale == 0.0) return;
    int f = cfg_.features_per_level;
    for (int l = 0; l < cfg_.levels; ++l) {
        const LevelLayout& level = levels_[l];
        int res = level.resolution;
        double fx[3];
        int base[3];
        for (int k = 0; k < 3; ++k) {
            double x = (kappa[k] + 1.0) * 0.5 * res;
            int i = std::clamp(static_cast<int>(std::floor(x)), 0, res - 1);
            base[k] = i;
            fx[k] = std::clamp(x - i, 0.0, 1.0);
        }
        for (int c = 0; c < 8; ++c) {
            int ix = base[0] + (c & 1), iy = base[1] + ((c >> 1) & 1), iz = base[2] + ((c >> 2) & 1);
            double wx = (c & 1) ? fx[0] : 1.0 - fx[0];
            double wy = ((c >> 1) & 1) ? fx[1] : 1.0 - fx[1];
            double wz = ((c >> 2) & 1) ? fx[2] : 1.0 - fx[2];
            double weight = wx * wy * wz;
            Index row = table_index(level, ix, iy, iz);
            double dot = 0.0;
            for (int j = 0; j < f; ++j) {
                double g = scale * grad_feature[l * f + j];
                grad_params[base_offset + row * f + j] += g * weight;
                dot += grad_feature[l * f + j] * params_[base_offset + row * f + j];
            }
            if (grad_kappa) {
                double sx = (c & 1) ? 1.0 : -1.0;
                double sy = ((c >> 1) & 1) ? 1.0 : -1.0;
                double sz = ((c >> 2) & 1) ? 1.0 : -1.0;
                double d_dkappa = 0.5 * res;  // lattice units per unit kappa
                (*grad_kappa)[0] += scale * dot * sx * wy * wz * d_dkappa;
                (*grad_kappa)[1] += scale * dot * wx * sy * wz * d_dkappa;
                (*grad_kappa)[2] += scale * dot * wx * wy * sz * d_dkappa;
            }
        }
    }
}

VecX TextureField::encode_ref(const Vec3& kappa) const {
    bool clamped;
    return lookup(ref_offset_, clamp_domain(kappa, clamped));
}

VecX TextureField::encode_back(const Vec3& kappa) const {
    bool clamped;
    return lookup(back_offset_, clamp_domain(kappa, clamped));
}

VecX TextureField::encode(const Vec3& kappa, double eta, EncodingSelect mode) const {
    bool clamped;
    Vec3 k = clamp_domain(kappa, clamped);
    static std::atomic<bool> clamp_logged{false};
    if (clamped && !clamp_logged.exchange(true))
        std::fprintf(stderr, "texture: query point outside [-1,1]^3 clamped (logged once)\n");
    double w_ref = mode == EncodingSelect::BackOnly ? 0.0 : eta;
    double w_back = mode == EncodingSelect::RefOnly ? 0.0 : 1.0 - eta;
    VecX e = VecX::Zero(feature_dim());
    if (w_ref != 0.0) e += w_ref * lookup(ref_offset_, k);
    if (w_back != 0.0) e += w_back * lookup(back_offset_, k);
    return e;
}

namespace {

struct DecoderDims {
    int in, hidden;
};

}  // namespace

Vec3 TextureField::albedo(const Vec3& kappa, double eta, EncodingSelect mode) const {
    VecX e = encode(kappa, eta, mode);
    int in = feature_dim(), hidden = cfg_.hidden_width;
    const double* p = params_.data() + decoder_offset_;
    const double* w1 = p;
    const double* b1 = w1 + static_cast<size_t>(hidden) * in;
    const double* w2 = b1 + hidden;
    const double* b2 = w2 + static_cast<size_t>(3) * hidden;

    Vec3 out;
    VecX h(hidden);
    for (int i = 0; i < hidden; ++i) {
        double acc = b1[i];
        for (int j = 0; j < in; ++j) acc += w1[static_cast<size_t>(i) * in + j] * e[j];
        h[i] = softplus(acc);
    }
    for (int o = 0; o < 3; ++o) {
        double acc = b2[o];
        for (int i = 0; i < hidden; ++i) acc += w2[static_cast<size_t>(o) * hidden + i] * h[i];
        out[o] = sigmoid(acc);
    }
    return out;
}

Vec3 TextureField::albedo_backward(const Vec3& kappa, double eta, const Vec3& grad_albedo,
                                   VecX& grad_params, Vec3* grad_kappa,
                                   EncodingSelect mode) const {
    bool clamped;
    Vec3 k = clamp_domain(kappa, clamped);
    double w_ref = mode == EncodingSelect::BackOnly ? 0.0 : eta;
    double w_back = mode == EncodingSelect::RefOnly ? 0.0 : 1.0 - eta;

    int in = feature_dim(), hidden = cfg_.hidden_width;
    VecX e = VecX::Zero(in);
    if (w_ref != 0.0) e += w_ref * lookup(ref_offset_, k);
    if (w_back != 0.0) e += w_back * lookup(back_offset_, k);

    const double* p = params_.data() + decoder_offset_;
    const double* w1 = p;
    const double* b1 = w1 + static_cast<size_t>(hidden) * in;
    const double* w2 = b1 + hidden;
    const double* b2 = w2 + static_cast<size_t>(3) * hidden;

    VecX h_pre(hidden), h(hidden);
    for (int i = 0; i < hidden; ++i) {
        double acc = b1[i];
        for (int j = 0; j < in; ++j) acc += w1[static_cast<size_t>(i) * in + j] * e[j];
        h_pre[i] = acc;
        h[i] = softplus(acc);
    }
    Vec3 albedo_out;
    Vec3 g_out_pre;
    for (int o = 0; o < 3; ++o) {
        double acc = b2[o];
        for (int i = 0; i < hidden; ++i) acc += w2[static_cast<size_t>(o) * hidden + i] * h[i];
        double a = sigmoid(acc);
        albedo_out[o] = a;
        g_out_pre[o] = grad_albedo[o] * a * (1.0 - a);
    }

    double* gp = grad_params.data() + decoder_offset_;
    double* g_w1 = gp;
    double* g_b1 = g_w1 + static_cast<size_t>(hidden) * in;
    double* g_w2 = g_b1 + hidden;
    double* g_b2 = g_w2 + static_cast<size_t>(3) * hidden;

    VecX g_h = VecX::Zero(hidden);
    for (int o = 0; o < 3; ++o) {
        g_b2[o] += g_out_pre[o];
        for (int i = 0; i < hidden; ++i) {
            g_w2[static_cast<size_t>(o) * hidden + i] += g_out_pre[o] * h[i];
            g_h[i] += g_out_pre[o] * w2[static_cast<size_t>(o) * hidden + i];
        }
    }
    VecX g_e = VecX::Zero(in);
    for (int i = 0; i < hidden; ++i) {
        double gi = g_h[i] * sigmoid(h_pre[i]);
        g_b1[i] += gi;
        for (int j = 0; j < in; ++j) {
            g_w1[static_cast<size_t>(i) * in + j] += gi * e[j];
            g_e[j] += gi * w1[static_cast<size_t>(i) * in + j];
        }
    }

    Vec3 gk = Vec3::Zero();
    lookup_backward(ref_offset_, k, g_e, w_ref, grad_params, grad_kappa ? &gk : nullptr);
    lookup_backward(back_offset_, k, g_e, w_back, grad_params, grad_kappa ? &gk : nullptr);
    if (grad_kappa) {
        // Clamped axes have zero spatial derivative.
        for (int i = 0; i < 3; ++i)
            (*grad_kappa)[i] += (kappa[i] < -1.0 || kappa[i] > 1.0) ? 0.0 : gk[i];
    }
    return albedo_out;
}

Vec3 shade(const Vec3& albedo, const Vec3& normal, const Vec3& light_dir, double ambient,
           double diffuse) {
    double ndotl = std::max(0.0, normal.dot(light_dir));
    Vec3 c = albedo * (ambient + diffuse * ndotl);
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace im2mesh
