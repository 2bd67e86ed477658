#pragma once

#include "reloc/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace reloc {

enum class Activation : std::uint8_t { relu = 0, elu = 1, identity = 2 };

/// Shared stride-2 encoder with one stage per entry of encoder_channels,
/// followed by two mirrored decoders (nearest 2x upsampling + 3x3 conv,
/// concatenated with the encoder feature or input of the same resolution).
/// The heatmap decoder ends in a logistic, the coordinate decoder is linear
/// and mapped to world units as coord_center + coord_scale * output.
struct RegressorConfig {
    int input_height = 64;
    int input_width = 64;
    std::vector<int> encoder_channels{8, 16, 32};
    Activation encoder_activation = Activation::relu;
    Activation heatmap_hidden_activation = Activation::relu;
    Activation coord_hidden_activation = Activation::elu;
    bool zero_init_heads = true;
    double input_mean = 0.5;
    double input_std = 0.25;
    Eigen::Vector3d coord_center = Eigen::Vector3d::Zero();
    double coord_scale = 1.0;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument.
    void validate() const;
    bool operator==(const RegressorConfig&) const = default;
};

struct RegressorOutput {
    Heatmap heatmap;  // values in (0, 1)
    CoordMap coords;
};

struct ParamRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

class Regressor {
public:
    explicit Regressor(RegressorConfig cfg);

    const RegressorConfig& config() const { return cfg_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    /// Parameter order: encoder stages, coordinate decoder levels (coarse to
    /// fine) then its output conv, heatmap decoder levels then its output
    /// conv. Each conv stores weights [out][in][ky][kx] followed by biases.
    ParamRange encoder_params() const { return encoder_; }
    ParamRange coord_params() const { return coord_; }
    ParamRange heatmap_params() const { return heat_; }

    /// Throws ShapeMismatch. The heatmap branch may be skipped (stage-1 training).
    RegressorOutput forward(const RgbImage& image, bool with_heatmap = true);

    /// Parameter gradients of <grad_heatmap, heatmap> + <grad_coords, coords>
    /// for the image of the last forward pass. A null branch gradient skips
    /// that branch. Throws StaleForward.
    std::vector<double> backward(const RgbImage& image, const Heatmap* grad_heatmap, const CoordMap* grad_coords);

    /// Sign pattern (pre > 0) of every ReLU pre-activation of the last forward
    /// pass; finite-difference checks use it to skip kink crossings.
    std::vector<bool> relu_pattern() const;

private:
    struct Conv {
        int in_c = 0, out_c = 0, stride = 1;
        std::size_t w = 0, b = 0;
    };
    struct Tensor {
        int c = 0, h = 0, w = 0;
        std::vector<double> v;
        void resize(int cc, int hh, int ww) {
            c = cc;
            h = hh;
            w = ww;
            v.assign(static_cast<std::size_t>(cc) * hh * ww, 0.0);
        }
    };
    struct Level {
        Conv conv;
        int skip_c = 0;
        Tensor up, pre, cat;  // upsampled input, conv pre-activation, concat(act(pre), skip)
    };
    struct Branch {
        std::vector<Level> levels;  // coarse to fine
        Conv head;
        Tensor out_pre;
        Activation hidden = Activation::relu;
        bool computed = false;
    };

    Conv add_conv(int in_c, int out_c, int stride);
    void init_params(bool zero_heads);
    void run_branch(Branch& br);
    void backprop_branch(Branch& br, const Tensor& d_out, std::vector<double>& grads, std::vector<Tensor>& d_enc);

    static void conv_forward(const Tensor& in, const double* W, const double* b, const Conv& cv, Tensor& out);
    static void conv_backward(const Tensor& in, const double* W, const Conv& cv, const Tensor& d_out, Tensor* d_in,
                              double* dW, double* db);

    RegressorConfig cfg_;
    std::vector<double> params_;
    std::vector<Conv> enc_convs_;
    Branch coord_branch_, heat_branch_;
    ParamRange encoder_, coord_, heat_;

    std::optional<RgbImage> cached_input_;
    Tensor input_;
    std::vector<Tensor> enc_pre_, enc_out_;
};

double activate(Activation a, double x);
double activate_deriv(Activation a, double pre);
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct AdamParams {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 5e-4;
};

struct AdamState {
    std::uint64_t t = 0;
    std::vector<double> m, v;
};

/// Adam with bias correction; weight decay is coupled (g += wd * p before the moments).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamParams& p);

/// Optimizer state carried by checkpoints so interrupted runs can resume.
struct TrainState {
    std::uint64_t iteration = 0;
    AdamState encoder, coord, heatmap;
};

/// Binary checkpoint, all integers and floats little-endian:
///   "RFMODEL1"
///   u32 version (1), u32 input_height, u32 input_width
///   u32 stage count, u32 channels[stage count]
///   u8 encoder, heatmap-hidden, coord-hidden activation; u8 zero_init_heads
///   f64 input_mean, input_std, coord_center[3], coord_scale; u64 seed
///   u64 parameter count, f64 parameters[count] (order of Regressor::params)
///   u8 has_train_state; if 1: u64 iteration, then for the encoder, coord and
///   heatmap groups: u64 t, f64 m[group size], f64 v[group size]
void save_checkpoint(const std::filesystem::path& path, const Regressor& model, const TrainState* state = nullptr);
Regressor load_checkpoint(const std::filesystem::path& path, std::optional<TrainState>* state = nullptr);

}  // namespace reloc
