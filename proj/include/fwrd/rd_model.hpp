// Reverse-distillation model: frozen teacher encoder, trainable one-class
// bottleneck, and a mirrored student decoder.
//
//   teacher:    3 blocks, each conv3x3 -> bn -> relu -> conv1x1/2 -> bn -> relu
//               emitting f_1, f_2, f_3 at strides 2, 4, 8
//   bottleneck: per-scale 1x1/2 convs down to stride 8, concat, conv3x3 -> bn -> relu
//   student:    f'_3 = bn(conv3x3(psi)); each shallower scale is
//               deconv2x2/2 -> bn -> relu -> conv3x3 -> bn applied to relu(f'_{n+1})
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fwrd/adam.hpp"
#include "fwrd/image.hpp"
#include "fwrd/ops.hpp"

namespace fwrd {

inline constexpr std::size_t kNumScales = 3;

struct EncoderConfig {
    std::array<std::size_t, kNumScales> channels{16, 32, 64};
    std::size_t input_size = 64;
    std::size_t in_channels = 3;
    std::size_t fusion_channels = 64;

    void validate() const {
        for (std::size_t i = 0; i < kNumScales; ++i) {
            if (channels[i] == 0) throw std::invalid_argument("encoder channels must be positive");
            if (i > 0 && channels[i] <= channels[i - 1])
                throw std::invalid_argument("encoder channels must be strictly increasing");
        }
        if (input_size < 16 || input_size % 8 != 0)
            throw std::invalid_argument("encoder input_size must be a multiple of 8 and >= 16");
        if (in_channels == 0 || fusion_channels == 0)
            throw std::invalid_argument("encoder in_channels and fusion_channels must be positive");
    }

    std::size_t scale_size(std::size_t scale_index) const { return input_size >> (scale_index + 1); }

    bool operator==(const EncoderConfig&) const = default;
};

/// f_1, f_2, f_3 (index 0 is the shallowest, stride 2).
template <class T>
using MultiScaleFeatures = std::array<Var<T>, kNumScales>;

template <class T>
struct ConvLayer {
    Var<T> weight, bias;
    std::size_t stride = 1, padding = 0;
    bool transposed = false;

    Var<T> operator()(const Var<T>& x) const {
        return transposed ? conv_transpose2d(x, weight, bias, stride) : conv2d(x, weight, bias, stride, padding);
    }
};

template <class T>
struct NormLayer {
    Var<T> gamma, beta;
    BatchNormStats<T> stats;

    Var<T> operator()(const Var<T>& x, Mode mode) { return batch_norm2d(x, gamma, beta, stats, mode); }
};

/// Named parameter registry shared by the three sub-networks.
template <class T>
class ParamFactory {
public:
    ParamFactory(std::uint64_t seed, bool trainable) : rng_(seed), trainable_(trainable) {}

    // Kaiming fan-in initialization, zero bias.
    ConvLayer<T> conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                      std::size_t pad) {
        ConvLayer<T> l;
        l.weight = Var<T>(kaiming({cout, cin, k, k}, cin * k * k), trainable_, name + ".weight");
        l.bias = Var<T>(Tensor<T>({cout, 1, 1, 1}), trainable_, name + ".bias");
        l.stride = stride;
        l.padding = pad;
        return l;
    }

    ConvLayer<T> deconv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                        std::size_t stride) {
        ConvLayer<T> l;
        l.weight = Var<T>(kaiming({cin, cout, k, k}, cout * k * k), trainable_, name + ".weight");
        l.bias = Var<T>(Tensor<T>({cout, 1, 1, 1}), trainable_, name + ".bias");
        l.stride = stride;
        l.transposed = true;
        return l;
    }

    NormLayer<T> norm(const std::string& name, std::size_t c) {
        NormLayer<T> l{Var<T>(Tensor<T>({c, 1, 1, 1}, T(1)), trainable_, name + ".gamma"),
                       Var<T>(Tensor<T>({c, 1, 1, 1}, T(0)), trainable_, name + ".beta"), BatchNormStats<T>(c)};
        return l;
    }

private:
    Tensor<T> kaiming(Shape s, std::size_t fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        Tensor<T> t(s);
        for (auto& v : t.vec()) v = static_cast<T>(dist(rng_));
        return t;
    }

    std::mt19937_64 rng_;
    bool trainable_;
};

/// Visitor over every persistent tensor: (name, tensor, is_parameter).
template <class T>
using TensorVisitor = std::function<void(const std::string&, Tensor<T>&, bool)>;

template <class T>
void visit_conv(const std::string& prefix, ConvLayer<T>& l, const TensorVisitor<T>& v) {
    v(prefix + ".weight", l.weight.mutable_value(), true);
    v(prefix + ".bias", l.bias.mutable_value(), true);
}

template <class T>
void visit_norm(const std::string& prefix, NormLayer<T>& l, const TensorVisitor<T>& v) {
    v(prefix + ".gamma", l.gamma.mutable_value(), true);
    v(prefix + ".beta", l.beta.mutable_value(), true);
    v(prefix + ".running_mean", l.stats.running_mean, false);
    v(prefix + ".running_var", l.stats.running_var, false);
}

template <class T>
class Teacher {
public:
    Teacher() = default;
    Teacher(const EncoderConfig& cfg, std::uint64_t seed, std::size_t num_classes = 2) : cfg_(cfg) {
        cfg.validate();
        ParamFactory<T> pf(seed, true);
        std::size_t cin = cfg.in_channels;
        for (std::size_t i = 0; i < kNumScales; ++i) {
            const std::string p = "teacher.block" + std::to_string(i + 1);
            const std::size_t c = cfg.channels[i];
            blocks_[i].conv = pf.conv(p + ".conv", cin, c, 3, 1, 1);
            blocks_[i].norm = pf.norm(p + ".bn", c);
            blocks_[i].down = pf.conv(p + ".down", c, c, 1, 2, 0);
            blocks_[i].down_norm = pf.norm(p + ".down_bn", c);
            cin = c;
        }
        head_ = pf.conv("teacher.head", cfg.channels.back(), num_classes, 1, 1, 0);
    }

    const EncoderConfig& config() const { return cfg_; }

    MultiScaleFeatures<T> forward(const Var<T>& x, Mode mode) {
        const Shape s = x.shape();
        if (s.c != cfg_.in_channels || s.h != cfg_.input_size || s.w != cfg_.input_size)
            throw ShapeError("teacher: expected input (*," + std::to_string(cfg_.in_channels) + "," +
                             std::to_string(cfg_.input_size) + "," + std::to_string(cfg_.input_size) + "), got " +
                             s.str());
        MultiScaleFeatures<T> out;
        Var<T> h = x;
        for (std::size_t i = 0; i < kNumScales; ++i) {
            auto& b = blocks_[i];
            h = relu(b.norm(b.conv(h), mode));
            h = relu(b.down_norm(b.down(h), mode));
            out[i] = h;
        }
        return out;
    }

    /// Eval-mode features for a normalized input tensor.
    std::array<Tensor<T>, kNumScales> features(const Tensor<T>& x) {
        auto f = forward(Var<T>(x), Mode::eval);
        return {f[0].value(), f[1].value(), f[2].value()};
    }

    /// Pretext classification logits (n, classes, 1, 1).
    Var<T> classify(const Var<T>& x, Mode mode) {
        auto f = forward(x, mode);
        return head_(global_avg_pool(f[kNumScales - 1]));
    }

    std::vector<Var<T>> parameters(bool include_head) const {
        std::vector<Var<T>> ps;
        for (const auto& b : blocks_) {
            for (const auto* v : {&b.conv.weight, &b.conv.bias, &b.norm.gamma, &b.norm.beta, &b.down.weight,
                                  &b.down.bias, &b.down_norm.gamma, &b.down_norm.beta})
                ps.push_back(*v);
        }
        if (include_head) {
            ps.push_back(head_.weight);
            ps.push_back(head_.bias);
        }
        return ps;
    }

    /// Drops gradient tracking on every teacher parameter.
    void freeze() {
        for (auto& p : parameters(true)) {
            p.set_requires_grad(false);
            p.zero_grad();
        }
        frozen_ = true;
    }
    bool frozen() const { return frozen_; }

    void visit(const TensorVisitor<T>& v) {
        for (std::size_t i = 0; i < kNumScales; ++i) {
            const std::string p = "teacher.block" + std::to_string(i + 1);
            visit_conv(p + ".conv", blocks_[i].conv, v);
            visit_norm(p + ".bn", blocks_[i].norm, v);
            visit_conv(p + ".down", blocks_[i].down, v);
            visit_norm(p + ".down_bn", blocks_[i].down_norm, v);
        }
    }

private:
    struct Block {
        ConvLayer<T> conv;
        NormLayer<T> norm;
        ConvLayer<T> down;
        NormLayer<T> down_norm;
    };
    EncoderConfig cfg_;
    std::array<Block, kNumScales> blocks_;
    ConvLayer<T> head_;
    bool frozen_ = false;
};

template <class T>
class Bottleneck {
public:
    Bottleneck() = default;
    Bottleneck(const EncoderConfig& cfg, ParamFactory<T>& pf) {
        std::size_t concat = 0;
        for (std::size_t i = 0; i < kNumScales; ++i) {
            const std::size_t c = cfg.channels[i];
            for (std::size_t d = 0; d + i + 1 < kNumScales; ++d) {
                const std::string p = "bottleneck.scale" + std::to_string(i + 1) + ".down" + std::to_string(d + 1);
                downs_[i].push_back({pf.conv(p, c, c, 1, 2, 0), pf.norm(p + "_bn", c)});
            }
            concat += c;
        }
        fuse_ = pf.conv("bottleneck.fuse", concat, cfg.fusion_channels, 3, 1, 1);
        fuse_norm_ = pf.norm("bottleneck.fuse_bn", cfg.fusion_channels);
    }

    Var<T> forward(const MultiScaleFeatures<T>& f, Mode mode) {
        std::vector<Var<T>> parts;
        for (std::size_t i = 0; i < kNumScales; ++i) {
            Var<T> h = f[i];
            for (auto& [conv, norm] : downs_[i]) h = relu(norm(conv(h), mode));
            parts.push_back(h);
        }
        return relu(fuse_norm_(fuse_(concat_channels(parts)), mode));
    }

    void collect(std::vector<Var<T>>& ps) const {
        for (const auto& scale : downs_)
            for (const auto& [conv, norm] : scale)
                for (const auto* v : {&conv.weight, &conv.bias, &norm.gamma, &norm.beta}) ps.push_back(*v);
        for (const auto* v : {&fuse_.weight, &fuse_.bias, &fuse_norm_.gamma, &fuse_norm_.beta}) ps.push_back(*v);
    }

    void visit(const TensorVisitor<T>& v) {
        for (std::size_t i = 0; i < kNumScales; ++i)
            for (std::size_t d = 0; d < downs_[i].size(); ++d) {
                const std::string p = "bottleneck.scale" + std::to_string(i + 1) + ".down" + std::to_string(d + 1);
                visit_conv(p, downs_[i][d].first, v);
                visit_norm(p + "_bn", downs_[i][d].second, v);
            }
        visit_conv("bottleneck.fuse", fuse_, v);
        visit_norm("bottleneck.fuse_bn", fuse_norm_, v);
    }

private:
    std::array<std::vector<std::pair<ConvLayer<T>, NormLayer<T>>>, kNumScales> downs_;
    ConvLayer<T> fuse_;
    NormLayer<T> fuse_norm_;
};

template <class T>
class Student {
public:
    Student() = default;
    Student(const EncoderConfig& cfg, ParamFactory<T>& pf) {
        const auto& c = cfg.channels;
        top_ = pf.conv("student.stage3.conv", cfg.fusion_channels, c[2], 3, 1, 1);
        top_norm_ = pf.norm("student.stage3.bn", c[2]);
        for (std::size_t i = 0; i + 1 < kNumScales; ++i) {
            const std::string p = "student.stage" + std::to_string(i + 1);
            Stage& s = stages_[i];
            s.up = pf.deconv(p + ".up", c[i + 1], c[i], 2, 2);
            s.up_norm = pf.norm(p + ".up_bn", c[i]);
            s.conv = pf.conv(p + ".conv", c[i], c[i], 3, 1, 1);
            s.norm = pf.norm(p + ".bn", c[i]);
        }
    }

    /// Returns f'_1..f'_3 in the same order as the teacher.
    MultiScaleFeatures<T> forward(const Var<T>& psi, Mode mode) {
        MultiScaleFeatures<T> out;
        out[kNumScales - 1] = top_norm_(top_(psi), mode);
        for (std::size_t i = kNumScales - 1; i-- > 0;) {
            Stage& s = stages_[i];
            Var<T> h = relu(s.up_norm(s.up(relu(out[i + 1])), mode));
            out[i] = s.norm(s.conv(h), mode);
        }
        return out;
    }

    void collect(std::vector<Var<T>>& ps) const {
        for (const auto* v : {&top_.weight, &top_.bias, &top_norm_.gamma, &top_norm_.beta}) ps.push_back(*v);
        for (const auto& s : stages_)
            for (const auto* v : {&s.up.weight, &s.up.bias, &s.up_norm.gamma, &s.up_norm.beta, &s.conv.weight,
                                  &s.conv.bias, &s.norm.gamma, &s.norm.beta})
                ps.push_back(*v);
    }

    void visit(const TensorVisitor<T>& v) {
        visit_conv("student.stage3.conv", top_, v);
        visit_norm("student.stage3.bn", top_norm_, v);
        for (std::size_t i = 0; i + 1 < kNumScales; ++i) {
            const std::string p = "student.stage" + std::to_string(i + 1);
            visit_conv(p + ".up", stages_[i].up, v);
            visit_norm(p + ".up_bn", stages_[i].up_norm, v);
            visit_conv(p + ".conv", stages_[i].conv, v);
            visit_norm(p + ".bn", stages_[i].norm, v);
        }
    }

private:
    struct Stage {
        ConvLayer<T> up;
        NormLayer<T> up_norm;
        ConvLayer<T> conv;
        NormLayer<T> norm;
    };
    ConvLayer<T> top_;
    NormLayer<T> top_norm_;
    std::array<Stage, kNumScales - 1> stages_;
};

/// Teacher + bottleneck + student. The teacher is frozen on construction.
template <class T>
class RdModel {
public:
    RdModel() = default;
    RdModel(Teacher<T> teacher, NormStats norm, std::uint64_t seed)
        : cfg_(teacher.config()), teacher_(std::move(teacher)), norm_(std::move(norm)) {
        teacher_.freeze();
        ParamFactory<T> pf(seed, true);
        bottleneck_ = Bottleneck<T>(cfg_, pf);
        student_ = Student<T>(cfg_, pf);
    }

    const EncoderConfig& config() const { return cfg_; }
    const NormStats& norm() const { return norm_; }
    Teacher<T>& teacher() { return teacher_; }

    MultiScaleFeatures<T> teacher_forward(const Tensor<T>& patch) {
        return teacher_.forward(Var<T>(patch), Mode::eval);
    }

    Var<T> bottleneck_forward(const MultiScaleFeatures<T>& f, Mode mode) { return bottleneck_.forward(f, mode); }

    MultiScaleFeatures<T> student_forward(const Var<T>& psi, Mode mode) { return student_.forward(psi, mode); }

    /// Student features reconstructed from (possibly cached) teacher features.
    MultiScaleFeatures<T> reconstruct(const MultiScaleFeatures<T>& f, Mode mode) {
        return student_forward(bottleneck_forward(f, mode), mode);
    }

    std::vector<Var<T>> trainable_parameters() const {
        std::vector<Var<T>> ps;
        bottleneck_.collect(ps);
        student_.collect(ps);
        return ps;
    }
    std::vector<Var<T>> teacher_parameters() const { return teacher_.parameters(false); }

    /// Every persistent tensor (parameters and running statistics), teacher first.
    void visit(const TensorVisitor<T>& v) {
        teacher_.visit(v);
        bottleneck_.visit(v);
        student_.visit(v);
    }

private:
    EncoderConfig cfg_;
    Teacher<T> teacher_;
    NormStats norm_;
    Bottleneck<T> bottleneck_;
    Student<T> student_;
};

/// Order-sensitive FNV-1a digest over the raw bytes of the given tensors.
template <class T>
std::uint64_t checksum(const std::vector<Var<T>>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.value().data());
        for (std::size_t i = 0; i < p.value().numel() * sizeof(T); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Teacher pretraining on a synthetic texture-classification pretext task.

struct PretrainConfig {
    std::size_t epochs = 4;
    std::size_t batch_size = 16;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
};

/// Mean/std per channel over a set of 8-bit images (values scaled to [0,1]).
inline NormStats compute_norm_stats(const std::vector<ImageU8>& images) {
    if (images.empty()) throw std::invalid_argument("compute_norm_stats: no images");
    const std::size_t c = images.front().channels;
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    std::size_t count = 0;
    for (const auto& im : images) {
        for (std::size_t i = 0; i < im.height * im.width; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v = im.pixels[i * c + ch] / 255.0;
                sum[ch] += v;
                sq[ch] += v * v;
            }
        count += im.height * im.width;
    }
    NormStats ns;
    ns.mean.assign(c, 0.0);
    ns.std.assign(c, 1.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        ns.mean[ch] = sum[ch] / static_cast<double>(count);
        const double var = sq[ch] / static_cast<double>(count) - ns.mean[ch] * ns.mean[ch];
        ns.std[ch] = std::sqrt(std::max(var, 1e-12));
    }
    return ns;
}

template <class T>
struct PretrainedTeacher {
    Teacher<T> teacher;
    NormStats norm;
    std::uint64_t seed = 0;
    double final_train_accuracy = 0.0;
};

/// Trains encoder + pooled linear head as a texture classifier, then freezes.
/// `labels[i]` is the class of `images[i]`.
template <class T>
PretrainedTeacher<T> pretrain_teacher(const std::vector<ImageU8>& images, const std::vector<int>& labels,
                                      const EncoderConfig& cfg, std::uint64_t seed,
                                      const PretrainConfig& pcfg = {}) {
    if (images.size() != labels.size() || images.empty())
        throw std::invalid_argument("pretrain_teacher: images and labels must be non-empty and equal length");
    int max_label = 0;
    std::vector<int> seen;
    for (int y : labels) {
        if (y < 0) throw std::invalid_argument("pretrain_teacher: negative label");
        max_label = std::max(max_label, y);
        if (std::find(seen.begin(), seen.end(), y) == seen.end()) seen.push_back(y);
    }
    if (seen.size() < 2)
        throw std::invalid_argument("pretrain_teacher: texture dataset needs at least 2 classes");

    PretrainedTeacher<T> out;
    out.seed = seed;
    out.norm = compute_norm_stats(images);
    out.teacher = Teacher<T>(cfg, seed, static_cast<std::size_t>(max_label) + 1);
    Adam<T> opt(out.teacher.parameters(true), pcfg.adam);

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t correct = 0, seen_items = 0;
    for (std::size_t epoch = 0; epoch < pcfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        correct = seen_items = 0;
        for (std::size_t b = 0; b < order.size(); b += pcfg.batch_size) {
            const std::size_t e = std::min(order.size(), b + pcfg.batch_size);
            if (e - b < 2) continue;  // batch statistics need two samples
            std::vector<const ImageU8*> batch;
            std::vector<int> ys;
            for (std::size_t i = b; i < e; ++i) {
                batch.push_back(&images[order[i]]);
                ys.push_back(labels[order[i]]);
            }
            Var<T> x(to_tensor<T>(batch, out.norm));
            Var<T> logits = out.teacher.classify(x, Mode::train);
            for (std::size_t n = 0; n < ys.size(); ++n) {
                std::size_t arg = 0;
                for (std::size_t c = 1; c < logits.shape().c; ++c)
                    if (logits.value().at(n, c, 0, 0) > logits.value().at(n, arg, 0, 0)) arg = c;
                correct += static_cast<int>(arg) == ys[n];
            }
            seen_items += ys.size();
            Var<T> loss = softmax_cross_entropy(logits, ys);
            opt.zero_grad();
            backward(loss);
            opt.step();
        }
    }
    out.final_train_accuracy = seen_items ? static_cast<double>(correct) / static_cast<double>(seen_items) : 0.0;
    out.teacher.freeze();
    return out;
}

/// Eval-mode class predictions of a (possibly frozen) teacher.
template <class T>
std::vector<int> teacher_predict(Teacher<T>& teacher, const NormStats& norm, const std::vector<ImageU8>& images,
                                 std::size_t batch_size = 64) {
    std::vector<int> out;
    for (std::size_t b = 0; b < images.size(); b += batch_size) {
        std::vector<const ImageU8*> batch;
        for (std::size_t i = b; i < std::min(images.size(), b + batch_size); ++i) batch.push_back(&images[i]);
        Var<T> logits = teacher.classify(Var<T>(to_tensor<T>(batch, norm)), Mode::eval);
        for (std::size_t n = 0; n < batch.size(); ++n) {
            std::size_t arg = 0;
            for (std::size_t c = 1; c < logits.shape().c; ++c)
                if (logits.value().at(n, c, 0, 0) > logits.value().at(n, arg, 0, 0)) arg = c;
            out.push_back(static_cast<int>(arg));
        }
    }
    return out;
}

}  // namespace fwrd
