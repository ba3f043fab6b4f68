#pragma once

#include "im2mesh/types.hpp"

namespace im2mesh {

struct TextureConfig {
    int levels = 8;
    int features_per_level = 2;
    int log2_table_size = 16;
    double base_resolution = 16.0;
    double max_resolution = 256.0;
    int hidden_width = 32;
    double init_scale = 1e-4;  // uniform table init in [-s, s]
};

/// Which encodings contribute; RefOnly/BackOnly zero the other branch
/// (the disentanglement visualization mode).
enum class EncodingSelect { Both, RefOnly, BackOnly };

/// Two multiresolution hash encodings blended by eta plus a small MLP
/// decoding the feature to albedo. Parameters live in one flat vector
/// (layout: ref tables, back tables, decoder) so the optimizer can treat
/// texture as a single group.
class TextureField {
public:
    TextureField(const TextureConfig& cfg, Rng& rng);

    const TextureConfig& config() const { return cfg_; }
    Index param_count() const { return params_.size(); }
    VecX& params() { return params_; }
    const VecX& params() const { return params_; }

    int feature_dim() const { return cfg_.levels * cfg_.features_per_level; }

    // Flat parameter layout: [ref tables | back tables | decoder].
    Index ref_param_offset() const { return ref_offset_; }
    Index back_param_offset() const { return back_offset_; }
    Index decoder_param_offset() const { return decoder_offset_; }

    /// E = (1 - eta) H_back(kappa) + eta H_ref(kappa).
    VecX encode(const Vec3& kappa, double eta, EncodingSelect mode = EncodingSelect::Both) const;

    /// decoder(encode(kappa, eta)) squashed to (0, 1)^3.
    Vec3 albedo(const Vec3& kappa, double eta, EncodingSelect mode = EncodingSelect::Both) const;

    /// Forward plus reverse pass. Accumulates into grad_params; when
    /// grad_kappa is non-null the spatial derivative through the trilinear
    /// interpolation is returned as well. Returns the albedo.
    Vec3 albedo_backward(const Vec3& kappa, double eta, const Vec3& grad_albedo,
                         VecX& grad_params, Vec3* grad_kappa,
                         EncodingSelect mode = EncodingSelect::Both) const;

    /// Raw per-encoding lookups (tests / visualization).
    VecX encode_ref(const Vec3& kappa) const;
    VecX encode_back(const Vec3& kappa) const;

private:
    struct LevelLayout {
        int resolution;
        Index table_offset;  // offset in feature rows within one encoding
        Index table_entries;
        bool direct;         // dense indexing when the level grid fits
    };

    VecX lookup(Index base_offset, const Vec3& kappa) const;
    void lookup_backward(Index base_offset, const Vec3& kappa, const VecX& grad_feature,
                         double scale, VecX& grad_params, Vec3* grad_kappa) const;

    Index table_index(const LevelLayout& level, int ix, int iy, int iz) const;

    TextureConfig cfg_;
    std::vector<LevelLayout> levels_;
    Index entries_per_encoding_ = 0;  // feature rows
    Index ref_offset_ = 0, back_offset_ = 0, decoder_offset_ = 0;
    VecX params_;
};

/// Lambertian shading: albedo * (ambient + diffuse * max(0, n.l)), clamped.
Vec3 shade(const Vec3& albedo, const Vec3& normal, const Vec3& light_dir, double ambient = 0.2,
           double diffuse = 0.8);

}  // namespace im2mesh
