#include "reloc/regressor.hpp"

#include "reloc/errors.hpp"
#include "reloc/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace reloc {

std::vector<bool> Regressor::relu_pattern() const {
    std::vector<bool> out;
    const auto add = [&](Activation a, const Tensor& t) {
        if (a != Activation::relu) return;
        for (const double x : t.v) out.push_back(x > 0.0);
    };
    for (const auto& t : enc_pre_) add(cfg_.encoder_activation, t);
    for (const Branch* br : {&coord_branch_, &heat_branch_}) {
        if (br == &heat_branch_ && !heat_branch_.computed) continue;
        for (const auto& lv : br->levels) add(br->hidden, lv.pre);
    }
    return out;
}

double activate(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0 ? x : 0.0;
        case Activation::elu: return x > 0 ? x : std::expm1(x);
        default: return x;
    }
}

double activate_deriv(Activation a, double pre) {
    switch (a) {
        case Activation::relu: return pre > 0 ? 1.0 : 0.0;
        case Activation::elu: return pre > 0 ? 1.0 : std::exp(pre);
        default: return 1.0;
    }
}

void RegressorConfig::validate() const {
    if (encoder_channels.empty()) throw std::invalid_argument("encoder_channels must be non-empty");
    for (int c : encoder_channels)
        if (c < 1) throw std::invalid_argument("encoder channel counts must be positive");
    const int div = 1 << encoder_channels.size();
    if (input_height < div || input_width < div || input_height % div || input_width % div)
        throw std::invalid_argument("input size must be divisible by 2^(encoder stages)");
    if (!(input_std > 0) || !(coord_scale > 0)) throw std::invalid_argument("input_std and coord_scale must be > 0");
}

Regressor::Conv Regressor::add_conv(int in_c, int out_c, int stride) {
    Conv cv{in_c, out_c, stride, params_.size(), 0};
    cv.b = cv.w + static_cast<std::size_t>(in_c) * out_c * 9;
    params_.resize(cv.b + out_c, 0.0);
    return cv;
}

Regressor::Regressor(RegressorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto& ch = cfg_.encoder_channels;
    const int S = static_cast<int>(ch.size());
    int in_c = 3;
    for (int i = 0; i < S; ++i) {
        enc_convs_.push_back(add_conv(in_c, ch[i], 2));
        in_c = ch[i];
    }
    encoder_ = {0, params_.size()};

    const auto build = [&](Branch& br, int out_dim, Activation hidden) {
        const std::size_t begin = params_.size();
        br.hidden = hidden;
        int cur_c = ch[S - 1];
        for (int j = S - 1; j >= 0; --j) {
            Level lv;
            const int out_c = j > 0 ? ch[j - 1] : ch[0];
            lv.skip_c = j > 0 ? ch[j - 1] : 3;
            lv.conv = add_conv(cur_c, out_c, 1);
            cur_c = out_c + lv.skip_c;
            br.levels.push_back(std::move(lv));
        }
        br.head = add_conv(cur_c, out_dim, 1);
        return ParamRange{begin, params_.size()};
    };
    coord_ = build(coord_branch_, 3, cfg_.coord_hidden_activation);
    heat_ = build(heat_branch_, 1, cfg_.heatmap_hidden_activation);
    init_params(cfg_.zero_init_heads);
}

void Regressor::init_params(bool zero_heads) {
    Rng rng(cfg_.seed);
    const auto init = [&](const Conv& cv, bool zero) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cv.in_c) * 9.0);
        for (std::size_t i = cv.w; i < cv.b + cv.out_c; ++i) params_[i] = zero ? 0.0 : rng.uniform(-bound, bound);
    };
    for (const auto& cv : enc_convs_) init(cv, false);
    for (Branch* br : {&coord_branch_, &heat_branch_}) {
        for (const auto& lv : br->levels) init(lv.conv, false);
        init(br->head, zero_heads);
    }
}

void Regressor::conv_forward(const Tensor& in, const double* W, const double* b, const Conv& cv, Tensor& out) {
    const int s = cv.stride;
    const int Ho = s == 1 ? in.h : in.h / 2, Wo = s == 1 ? in.w : in.w / 2;
    out.resize(cv.out_c, Ho, Wo);
    for (int co = 0; co < cv.out_c; ++co) {
        double* o = out.v.data() + static_cast<std::size_t>(co) * Ho * Wo;
        std::fill(o, o + static_cast<std::size_t>(Ho) * Wo, b[co]);
        for (int ci = 0; ci < cv.in_c; ++ci) {
            const double* src = in.v.data() + static_cast<std::size_t>(ci) * in.h * in.w;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double w = W[((static_cast<std::size_t>(co) * cv.in_c + ci) * 3 + ky) * 3 + kx];
                    // valid x range: 0 <= x*s + kx - 1 < in.w
                    const int x0 = kx == 0 ? 1 : 0;
                    const int x1 = std::min(Wo, (in.w - kx) / s + 1);
                    for (int y = 0; y < Ho; ++y) {
                        const int iy = y * s + ky - 1;
                        if (iy < 0 || iy >= in.h) continue;
                        double* orow = o + static_cast<std::size_t>(y) * Wo;
                        const double* irow = src + static_cast<std::size_t>(iy) * in.w;
                        const int dx = kx - 1;
                        if (s == 1)
                            for (int x = x0; x < x1; ++x) orow[x] += w * irow[x + dx];
                        else
                            for (int x = x0; x < x1; ++x) orow[x] += w * irow[2 * x + dx];
                    }
                }
        }
    }
}

void Regressor::conv_backward(const Tensor& in, const double* W, const Conv& cv, const Tensor& d_out, Tensor* d_in,
                              double* dW, double* db) {
    const int s = cv.stride;
    const int Ho = d_out.h, Wo = d_out.w;
    for (int co = 0; co < cv.out_c; ++co) {
        const double* g = d_out.v.data() + static_cast<std::size_t>(co) * Ho * Wo;
        double bsum = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i) bsum += g[i];
        db[co] += bsum;
        for (int ci = 0; ci < cv.in_c; ++ci) {
            const double* src = in.v.data() + static_cast<std::size_t>(ci) * in.h * in.w;
            double* dsrc = d_in ? d_in->v.data() + static_cast<std::size_t>(ci) * in.h * in.w : nullptr;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const std::size_t wi = ((static_cast<std::size_t>(co) * cv.in_c + ci) * 3 + ky) * 3 + kx;
                    const double w = W[wi];
                    const int x0 = kx == 0 ? 1 : 0;
                    const int x1 = std::min(Wo, (in.w - kx) / s + 1);
                    double acc = 0.0;
                    for (int y = 0; y < Ho; ++y) {
                        const int iy = y * s + ky - 1;
                        if (iy < 0 || iy >= in.h) continue;
                        const double* grow = g + static_cast<std::size_t>(y) * Wo;
                        const std::size_t row = static_cast<std::size_t>(iy) * in.w;
                        const double* irow = src + row;
                        const int dx = kx - 1;
                        if (s == 1) {
                            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x + dx];
                            if (dsrc)
                                for (int x = x0; x < x1; ++x) dsrc[row + x + dx] += w * grow[x];
                        } else {
                            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[2 * x + dx];
                            if (dsrc)
                                for (int x = x0; x < x1; ++x) dsrc[row + 2 * x + dx] += w * grow[x];
                        }
                    }
                    dW[wi] += acc;
                }
        }
    }
}

void Regressor::run_branch(Branch& br) {
    const int S = static_cast<int>(enc_out_.size());
    const Tensor* cur = &enc_out_[S - 1];
    for (int li = 0; li < S; ++li) {
        Level& lv = br.levels[li];
        const int j = S - 1 - li;
        // nearest 2x upsampling
        lv.up.resize(cur->c, cur->h * 2, cur->w * 2);
        for (int c = 0; c < cur->c; ++c)
            for (int y = 0; y < lv.up.h; ++y)
                for (int x = 0; x < lv.up.w; ++x)
                    lv.up.v[(static_cast<std::size_t>(c) * lv.up.h + y) * lv.up.w + x] =
                        cur->v[(static_cast<std::size_t>(c) * cur->h + y / 2) * cur->w + x / 2];
        conv_forward(lv.up, &params_[lv.conv.w], &params_[lv.conv.b], lv.conv, lv.pre);
        const Tensor& skip = j > 0 ? enc_out_[j - 1] : input_;
        lv.cat.resize(lv.pre.c + skip.c, lv.pre.h, lv.pre.w);
        const std::size_t n_pre = lv.pre.v.size();
        for (std::size_t i = 0; i < n_pre; ++i) lv.cat.v[i] = activate(br.hidden, lv.pre.v[i]);
        std::copy(skip.v.begin(), skip.v.end(), lv.cat.v.begin() + static_cast<std::ptrdiff_t>(n_pre));
        cur = &lv.cat;
    }
    conv_forward(*cur, &params_[br.head.w], &params_[br.head.b], br.head, br.out_pre);
    br.computed = true;
}

RegressorOutput Regressor::forward(const RgbImage& image, bool with_heatmap) {
    if (image.width != cfg_.input_width || image.height != cfg_.input_height)
        throw ShapeMismatch("regressor input is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                            ", expected " + std::to_string(cfg_.input_width) + "x" +
                            std::to_string(cfg_.input_height));
    const int H = image.height, W = image.width;
    input_.resize(3, H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                input_.v[(static_cast<std::size_t>(c) * H + y) * W + x] =
                    (image.at(y, x, c) - cfg_.input_mean) / cfg_.input_std;

    const std::size_t S = enc_convs_.size();
    enc_pre_.resize(S);
    enc_out_.resize(S);
    const Tensor* cur = &input_;
    for (std::size_t i = 0; i < S; ++i) {
        conv_forward(*cur, &params_[enc_convs_[i].w], &params_[enc_convs_[i].b], enc_convs_[i], enc_pre_[i]);
        enc_out_[i] = enc_pre_[i];
        for (auto& v : enc_out_[i].v) v = activate(cfg_.encoder_activation, v);
        cur = &enc_out_[i];
    }

    RegressorOutput out;
    run_branch(coord_branch_);
    out.coords = CoordMap(W, H);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (std::size_t i = 0; i < plane; ++i)
        out.coords.values[i] = cfg_.coord_center + cfg_.coord_scale * Eigen::Vector3d(coord_branch_.out_pre.v[i],
                                                                                     coord_branch_.out_pre.v[plane + i],
                                                                                     coord_branch_.out_pre.v[2 * plane + i]);
    heat_branch_.computed = false;
    if (with_heatmap) {
        run_branch(heat_branch_);
        out.heatmap = Heatmap(W, H);
        for (std::size_t i = 0; i < plane; ++i) out.heatmap.values[i] = logistic(heat_branch_.out_pre.v[i]);
    }
    cached_input_ = image;
    return out;
}

void Regressor::backprop_branch(Branch& br, const Tensor& d_out, std::vector<double>& grads,
                                std::vector<Tensor>& d_enc) {
    const int S = static_cast<int>(enc_out_.size());
    Tensor d_cat;
    d_cat.resize(br.levels.back().cat.c, br.levels.back().cat.h, br.levels.back().cat.w);
    conv_backward(br.levels.back().cat, &params_[br.head.w], br.head, d_out, &d_cat, &grads[br.head.w],
                  &grads[br.head.b]);
    for (int li = S - 1; li >= 0; --li) {
        Level& lv = br.levels[li];
        const int j = S - 1 - li;
        const std::size_t n_pre = lv.pre.v.size();
        if (j > 0) {
            auto& de = d_enc[j - 1].v;
            for (std::size_t i = 0; i < de.size(); ++i) de[i] += d_cat.v[n_pre + i];
        }
        Tensor d_pre;
        d_pre.resize(lv.pre.c, lv.pre.h, lv.pre.w);
        for (std::size_t i = 0; i < n_pre; ++i) d_pre.v[i] = d_cat.v[i] * activate_deriv(br.hidden, lv.pre.v[i]);
        Tensor d_up;
        d_up.resize(lv.up.c, lv.up.h, lv.up.w);
        conv_backward(lv.up, &params_[lv.conv.w], lv.conv, d_pre, &d_up, &grads[lv.conv.w], &grads[lv.conv.b]);
        // upsampling adjoint: sum each 2x2 block
        const Tensor& src = li > 0 ? br.levels[li - 1].cat : enc_out_[S - 1];
        Tensor d_src;
        d_src.resize(src.c, src.h, src.w);
        for (int c = 0; c < d_up.c; ++c)
            for (int y = 0; y < d_up.h; ++y)
                for (int x = 0; x < d_up.w; ++x)
                    d_src.v[(static_cast<std::size_t>(c) * src.h + y / 2) * src.w + x / 2] +=
                        d_up.v[(static_cast<std::size_t>(c) * d_up.h + y) * d_up.w + x];
        if (li > 0) {
            d_cat = std::move(d_src);
        } else {
            auto& de = d_enc[S - 1].v;
            for (std::size_t i = 0; i < de.size(); ++i) de[i] += d_src.v[i];
        }
    }
}

std::vector<double> Regressor::backward(const RgbImage& image, const Heatmap* grad_heatmap,
                                        const CoordMap* grad_coords) {
    if (!cached_input_ || !(*cached_input_ == image)) throw StaleForward();
    if (grad_heatmap && !heat_branch_.computed) throw StaleForward();
    const int H = cfg_.input_height, W = cfg_.input_width;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<double> grads(params_.size(), 0.0);
    const std::size_t S = enc_convs_.size();
    std::vector<Tensor> d_enc(S);
    for (std::size_t i = 0; i < S; ++i) d_enc[i].resize(enc_out_[i].c, enc_out_[i].h, enc_out_[i].w);

    if (grad_coords) {
        if (grad_coords->width != W || grad_coords->height != H) throw ShapeMismatch("coordinate gradient size");
        Tensor d_out;
        d_out.resize(3, H, W);
        for (std::size_t i = 0; i < plane; ++i)
            for (int c = 0; c < 3; ++c) d_out.v[c * plane + i] = cfg_.coord_scale * grad_coords->values[i][c];
        backprop_branch(coord_branch_, d_out, grads, d_enc);
    }
    if (grad_heatmap) {
        if (grad_heatmap->width != W || grad_heatmap->height != H) throw ShapeMismatch("heatmap gradient size");
        Tensor d_out;
        d_out.resize(1, H, W);
        for (std::size_t i = 0; i < plane; ++i) {
            const double s = logistic(heat_branch_.out_pre.v[i]);
            d_out.v[i] = grad_heatmap->values[i] * s * (1.0 - s);
        }
        backprop_branch(heat_branch_, d_out, grads, d_enc);
    }
    for (std::size_t i = S; i-- > 0;) {
        Tensor d_pre = d_enc[i];
        for (std::size_t e = 0; e < d_pre.v.size(); ++e)
            d_pre.v[e] *= activate_deriv(cfg_.encoder_activation, enc_pre_[i].v[e]);
        const Tensor& in = i > 0 ? enc_out_[i - 1] : input_;
        conv_backward(in, &params_[enc_convs_[i].w], enc_convs_[i], d_pre, i > 0 ? &d_enc[i - 1] : nullptr,
                      &grads[enc_convs_[i].w], &grads[enc_convs_[i].b]);
    }
    return grads;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st, const AdamParams& p) {
    if (params.size() != grads.size()) throw DimensionMismatch("adam_step: parameter and gradient sizes differ");
    if (st.m.size() != params.size()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] + p.weight_decay * params[i];
        st.m[i] = p.beta1 * st.m[i] + (1.0 - p.beta1) * g;
        st.v[i] = p.beta2 * st.v[i] + (1.0 - p.beta2) * g * g;
        const double m_hat = st.m[i] / bc1;
        const double v_hat = st.v[i] / bc2;
        params[i] -= p.lr * m_hat / (std::sqrt(v_hat) + p.epsilon);
    }
}

namespace {

constexpr char kMagic[8] = {'R', 'F', 'M', 'O', 'D', 'E', 'L', '1'};

struct Writer {
    std::ofstream& out;
    void u8(std::uint8_t v) { out.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

struct Reader {
    std::ifstream& in;
    std::uint8_t u8() {
        char c;
        if (!in.get(c)) throw ParseError(0, "truncated checkpoint");
        return static_cast<std::uint8_t>(c);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{u8()} << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
};

Activation to_activation(std::uint8_t v) {
    if (v > 2) throw ParseError(0, "bad activation code in checkpoint");
    return static_cast<Activation>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Regressor& model, const TrainState* state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    Writer w{out};
    out.write(kMagic, 8);
    const auto& c = model.config();
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(c.input_height));
    w.u32(static_cast<std::uint32_t>(c.input_width));
    w.u32(static_cast<std::uint32_t>(c.encoder_channels.size()));
    for (int ch : c.encoder_channels) w.u32(static_cast<std::uint32_t>(ch));
    w.u8(static_cast<std::uint8_t>(c.encoder_activation));
    w.u8(static_cast<std::uint8_t>(c.heatmap_hidden_activation));
    w.u8(static_cast<std::uint8_t>(c.coord_hidden_activation));
    w.u8(c.zero_init_heads ? 1 : 0);
    w.f64(c.input_mean);
    w.f64(c.input_std);
    for (int i = 0; i < 3; ++i) w.f64(c.coord_center[i]);
    w.f64(c.coord_scale);
    w.u64(c.seed);
    w.u64(model.params().size());
    for (double p : model.params()) w.f64(p);
    w.u8(state ? 1 : 0);
    if (state) {
        w.u64(state->iteration);
        const ParamRange ranges[3] = {model.encoder_params(), model.coord_params(), model.heatmap_params()};
        const AdamState* groups[3] = {&state->encoder, &state->coord, &state->heatmap};
        for (int g = 0; g < 3; ++g) {
            w.u64(groups[g]->t);
            for (const auto* vec : {&groups[g]->m, &groups[g]->v})
                for (std::size_t i = 0; i < ranges[g].size(); ++i) w.f64(vec->empty() ? 0.0 : (*vec)[i]);
        }
    }
    if (!out) throw Error("failed writing " + path.string());
}

Regressor load_checkpoint(const std::filesystem::path& path, std::optional<TrainState>* state) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(0, "cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw ParseError(0, "not an RFMODEL1 checkpoint");
    Reader r{in};
    if (r.u32() != 1) throw ParseError(0, "unsupported checkpoint version");
    RegressorConfig c;
    c.input_height = static_cast<int>(r.u32());
    c.input_width = static_cast<int>(r.u32());
    const std::uint32_t stages = r.u32();
    if (stages == 0 || stages > 16) throw ParseError(0, "bad stage count in checkpoint");
    c.encoder_channels.assign(stages, 0);
    for (auto& ch : c.encoder_channels) ch = static_cast<int>(r.u32());
    c.encoder_activation = to_activation(r.u8());
    c.heatmap_hidden_activation = to_activation(r.u8());
    c.coord_hidden_activation = to_activation(r.u8());
    c.zero_init_heads = r.u8() != 0;
    c.input_mean = r.f64();
    c.input_std = r.f64();
    for (int i = 0; i < 3; ++i) c.coord_center[i] = r.f64();
    c.coord_scale = r.f64();
    c.seed = r.u64();
    Regressor model(c);
    if (r.u64() != model.params().size()) throw ParseError(0, "parameter count does not match configuration");
    for (auto& p : model.params()) p = r.f64();
    const bool has_state = r.u8() != 0;
    if (has_state && state) {
        TrainState st;
        st.iteration = r.u64();
        const ParamRange ranges[3] = {model.encoder_params(), model.coord_params(), model.heatmap_params()};
        AdamState* groups[3] = {&st.encoder, &st.coord, &st.heatmap};
        for (int g = 0; g < 3; ++g) {
            groups[g]->t = r.u64();
            for (auto* vec : {&groups[g]->m, &groups[g]->v}) {
                vec->resize(ranges[g].size());
                for (auto& x : *vec) x = r.f64();
            }
        }
        *state = st;
    } else if (state) {
        state->reset();
    }
    return model;
}

}  // namespace reloc
