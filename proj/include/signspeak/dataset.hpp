#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "signspeak/tensor.hpp"

namespace signspeak {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr std::size_t kNumChannels = 5;
constexpr std::size_t kNumClasses = 36;
constexpr int kSensorMax = 1023;
constexpr std::size_t kMinLen = 50;
constexpr std::size_t kMaxLen = 80;
constexpr std::size_t kPaddedLen = 79;

// A-Z then 1-10
class LabelVocab {
public:
    static const std::vector<std::string>& names();
    static const std::string& name(int index);
    static int index_of(const std::string& name);  // -1 if unknown
};

using SensorFrame = std::array<std::uint16_t, kNumChannels>;

struct GestureRecording {
    std::string id;
    int label = 0;
    std::vector<SensorFrame> frames;
};

struct RejectedRecording {
    std::string id;
    std::size_t length = 0;
};

struct Dataset {
    std::vector<GestureRecording> recordings;
    std::vector<RejectedRecording> rejected;

    std::string rejection_summary() const;
};

struct PaddedBatch {
    Tensor<float> data;  // B x T x 5, scaled to [0,1], zero-padded
    Tensor<float> mask;  // B x T, 1 = valid
    std::vector<int> labels;
    std::vector<std::size_t> lengths;
};

Dataset load_csv(const std::string& path);
void write_csv(const Dataset& ds, const std::string& path);

// adapter for external layouts; canonical files pass through unchanged
Dataset import_external(const std::string& path);

std::string dataset_stats(const Dataset& ds);

Dataset synth_generate(std::size_t n_per_class, double noise_std, std::uint64_t seed);

// noise-free synthetic channel value for (class, timestep); the templates the
// generator perturbs
double synth_template_value(std::size_t cls, std::size_t channel, std::size_t t);

std::vector<std::vector<std::size_t>> stratified_k_fold(const Dataset& ds, std::size_t k,
                                                        std::uint64_t seed);

template <typename T>
struct TypedBatch {
    Tensor<T> data;
    std::vector<int> labels;
    std::vector<std::size_t> lengths;
};

namespace detail {
template <typename T>
TypedBatch<T> pad_batch_typed(const Dataset& ds, const std::vector<std::size_t>& indices,
                              std::size_t t_max) {
    if (indices.empty()) throw DataError("pad_batch: empty batch");
    for (auto i : indices)
        if (ds.recordings[i].frames.size() > t_max)
            throw DataError("recording " + ds.recordings[i].id + " longer than padded extent " +
                            std::to_string(t_max));
    const std::size_t b = indices.size();
    TypedBatch<T> out;
    out.data = Tensor<T>::zeros({b, t_max, kNumChannels});
    out.labels.reserve(b);
    out.lengths.reserve(b);
    for (std::size_t r = 0; r < b; ++r) {
        const auto& rec = ds.recordings[indices[r]];
        for (std::size_t t = 0; t < rec.frames.size(); ++t)
            for (std::size_t c = 0; c < kNumChannels; ++c)
                out.data.values()[(r * t_max + t) * kNumChannels + c] =
                    static_cast<T>(rec.frames[t][c]) / static_cast<T>(kSensorMax);
        out.labels.push_back(rec.label);
        out.lengths.push_back(rec.frames.size());
    }
    return out;
}
}  // namespace detail

PaddedBatch pad_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                      std::size_t t_max = kPaddedLen);

}  // namespace signspeak
