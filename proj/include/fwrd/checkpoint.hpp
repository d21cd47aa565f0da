// Versioned binary checkpoints for a pretrained teacher or a full RD model.
#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fwrd/config.hpp"
#include "fwrd/raster.hpp"

namespace fwrd {

inline constexpr std::array<char, 4> kCheckpointMagic{'R', 'D', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class CheckpointKind : std::uint8_t { teacher = 0, model = 1 };

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

struct Checkpoint {
    std::uint16_t version = kCheckpointVersion;
    CheckpointKind kind = CheckpointKind::model;
    RunConfig config;
    std::uint64_t epoch = 0;
    double val_accuracy = 0.0;
    double val_threshold = 0.0;
    NormStats norm;
    std::vector<NamedTensor> tensors;
};

namespace detail {

inline void put_str(std::string& out, const std::string& s) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}
inline void put_f64(std::string& out, double v) { put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }

inline std::string get_str(const std::string& in, std::size_t& pos) {
    const auto n = get_le<std::uint32_t>(in, pos);
    if (pos + n > in.size()) throw CheckpointError("truncated checkpoint string");
    std::string s = in.substr(pos, n);
    pos += n;
    return s;
}
inline double get_f64(const std::string& in, std::size_t& pos) {
    return std::bit_cast<double>(get_le<std::uint64_t>(in, pos));
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
    using namespace detail;
    std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    put_le<std::uint16_t>(out, ck.version);
    out.push_back(static_cast<char>(ck.kind));
    put_str(out, serialize_config(ck.config));
    put_le<std::uint64_t>(out, ck.epoch);
    put_f64(out, ck.val_accuracy);
    put_f64(out, ck.val_threshold);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.norm.mean.size()));
    for (std::size_t i = 0; i < ck.norm.mean.size(); ++i) {
        put_f64(out, ck.norm.mean[i]);
        put_f64(out, ck.norm.std.at(i));
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& t : ck.tensors) {
        put_str(out, t.name);
        const Shape s = t.value.shape();
        for (std::size_t d : {s.n, s.c, s.h, s.w}) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (std::size_t i = 0; i < t.value.numel(); ++i)
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(t.value[i]));
    }
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& in) {
    using namespace detail;
    if (in.size() < 4 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), in.begin()))
        throw CheckpointError("not a checkpoint (bad magic)");
    std::size_t pos = 4;
    Checkpoint ck;
    try {
        ck.version = get_le<std::uint16_t>(in, pos);
        if (ck.version != kCheckpointVersion)
            throw CheckpointError("checkpoint format version " + std::to_string(ck.version) +
                                  " does not match supported version " + std::to_string(kCheckpointVersion));
        const auto kind = get_le<std::uint8_t>(in, pos);
        if (kind > 1) throw CheckpointError("unknown checkpoint kind " + std::to_string(kind));
        ck.kind = static_cast<CheckpointKind>(kind);
        ck.config = parse_config(get_str(in, pos));
        ck.epoch = get_le<std::uint64_t>(in, pos);
        ck.val_accuracy = get_f64(in, pos);
        ck.val_threshold = get_f64(in, pos);
        const auto channels = get_le<std::uint32_t>(in, pos);
        ck.norm.mean.clear();
        ck.norm.std.clear();
        for (std::uint32_t i = 0; i < channels; ++i) {
            ck.norm.mean.push_back(get_f64(in, pos));
            ck.norm.std.push_back(get_f64(in, pos));
        }
        const auto count = get_le<std::uint32_t>(in, pos);
        for (std::uint32_t k = 0; k < count; ++k) {
            NamedTensor t;
            t.name = get_str(in, pos);
            Shape s;
            s.n = get_le<std::uint32_t>(in, pos);
            s.c = get_le<std::uint32_t>(in, pos);
            s.h = get_le<std::uint32_t>(in, pos);
            s.w = get_le<std::uint32_t>(in, pos);
            if (pos + 4 * s.numel() > in.size()) throw CheckpointError("truncated tensor " + t.name);
            t.value = Tensor<float>(s);
            for (std::size_t i = 0; i < s.numel(); ++i)
                t.value[i] = std::bit_cast<float>(get_le<std::uint32_t>(in, pos));
            ck.tensors.push_back(std::move(t));
        }
    } catch (const RasterError& e) {
        throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
    }
    if (pos != in.size()) throw CheckpointError("trailing bytes after checkpoint payload");
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    detail::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::string bytes;
    try {
        bytes = detail::read_file(path);
    } catch (const RasterError& e) {
        throw CheckpointError(e.what());
    }
    return decode_checkpoint(bytes);
}

namespace detail {

template <class Visitable>
std::vector<NamedTensor> collect_tensors(Visitable& v) {
    std::vector<NamedTensor> out;
    v.visit([&](const std::string& name, Tensor<float>& t, bool) { out.push_back({name, t}); });
    return out;
}

template <class Visitable>
void assign_tensors(Visitable& v, const std::vector<NamedTensor>& tensors) {
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t.value;
    std::size_t used = 0;
    v.visit([&](const std::string& name, Tensor<float>& t, bool) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("checkpoint is missing tensor " + name);
        if (it->second->shape() != t.shape())
            throw CheckpointError("tensor " + name + " has shape " + it->second->shape().str() + ", model expects " +
                                  t.shape().str());
        t = *it->second;
        ++used;
    });
    if (used != tensors.size()) throw CheckpointError("checkpoint has tensors the model does not know");
}

}  // namespace detail

inline Checkpoint make_teacher_checkpoint(PretrainedTeacher<float>& t, const RunConfig& cfg) {
    Checkpoint ck;
    ck.kind = CheckpointKind::teacher;
    ck.config = cfg;
    ck.norm = t.norm;
    ck.val_accuracy = t.final_train_accuracy;
    ck.tensors = detail::collect_tensors(t.teacher);
    return ck;
}

inline Checkpoint make_model_checkpoint(Model& m, const RunConfig& cfg, std::uint64_t epoch, double val_accuracy,
                                        double val_threshold) {
    Checkpoint ck;
    ck.kind = CheckpointKind::model;
    ck.config = cfg;
    ck.epoch = epoch;
    ck.val_accuracy = val_accuracy;
    ck.val_threshold = val_threshold;
    ck.norm = m.norm();
    ck.tensors = detail::collect_tensors(m);
    return ck;
}

inline PretrainedTeacher<float> restore_teacher(const Checkpoint& ck) {
    PretrainedTeacher<float> t;
    t.teacher = Teacher<float>(ck.config.encoder, teacher_seed(ck.config), ck.config.teacher.classes);
    std::vector<NamedTensor> teacher_part;
    for (const auto& nt : ck.tensors)
        if (nt.name.rfind("teacher.", 0) == 0) teacher_part.push_back(nt);
    detail::assign_tensors(t.teacher, teacher_part);
    t.teacher.freeze();
    t.norm = ck.norm;
    t.seed = teacher_seed(ck.config);
    t.final_train_accuracy = ck.kind == CheckpointKind::teacher ? ck.val_accuracy : 0.0;
    return t;
}

inline Model restore_model(const Checkpoint& ck) {
    if (ck.kind != CheckpointKind::model) throw CheckpointError("checkpoint holds a teacher, not a trained model");
    Model m(Teacher<float>(ck.config.encoder, teacher_seed(ck.config), ck.config.teacher.classes), ck.norm,
            model_seed(ck.config));
    detail::assign_tensors(m, ck.tensors);
    return m;
}

}  // namespace fwrd
