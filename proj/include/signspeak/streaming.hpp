#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "signspeak/dataset.hpp"
#include "signspeak/models.hpp"

namespace signspeak {

class StreamError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SegmenterConfig {
    int activation_threshold = 5000;  // a frame is active iff channel sum < threshold
    std::size_t min_len = kMinLen;
    std::size_t max_len = kMaxLen;
    double sample_rate_hz = 36.0;
};

enum class Disposition { Emitted, TooShort, TooLong };

struct SegmentEvent {
    std::vector<SensorFrame> frames;  // meaningful for Emitted; capped for TooLong
    std::size_t start_index = 0;
    std::size_t end_index = 0;  // exclusive
    Disposition disposition = Disposition::Emitted;
};

struct SegmenterCounters {
    std::size_t emitted = 0;
    std::size_t discarded_short = 0;
    std::size_t discarded_long = 0;
};

// wire grammar: `s1,s2,s3,s4,s5`, decimal integers in [0,1023]
SensorFrame parse_frame(const std::string& line);

inline bool frame_active(const SensorFrame& f, int threshold) {
    int sum = 0;
    for (auto v : f) sum += v;
    return sum < threshold;  // strict: a frame summing to exactly the threshold is inactive
}

// Threshold state machine over an unbounded frame stream. Pure function of
// the frame sequence; a single inactive frame closes the current segment.
class Segmenter {
public:
    explicit Segmenter(SegmenterConfig cfg = {});

    std::optional<SegmentEvent> push(const SensorFrame& frame);

    bool active() const { return in_segment_; }
    const SegmenterCounters& counters() const { return counters_; }
    std::size_t frames_seen() const { return frame_index_; }

private:
    SegmenterConfig cfg_;
    bool in_segment_ = false;
    bool too_long_ = false;
    std::vector<SensorFrame> buffer_;
    std::size_t seg_start_ = 0;
    std::size_t frame_index_ = 0;
    SegmenterCounters counters_;
};

struct Classification {
    int label = 0;
    std::vector<float> probs;  // full class distribution, sums to 1
};

// scale, pad, forward in eval mode, softmax; ties broken by lowest index
Classification classify_segment(const std::vector<SensorFrame>& frames, const ModelConfig& cfg,
                                ModelParams<float>& params);

struct ReplayStats {
    std::size_t frames_sent = 0;
    SegmenterCounters segments;
    std::vector<double> latencies_ms;  // one per classified segment

    double percentile_ms(double p) const;
    std::string report_text() const;
};

struct Prediction {
    std::size_t start_index = 0;
    double t_start_sec = 0.0;
    int label = 0;
    double p_max = 0.0;
};

using PredictionSink = std::function<void(const Prediction&)>;

// Feed a frame sequence through segmentation + classification. rate_hz = 0
// replays unthrottled; segmentation results are independent of the rate.
ReplayStats replay_frames(const std::vector<SensorFrame>& frames, const SegmenterConfig& seg_cfg,
                          const ModelConfig& model_cfg, ModelParams<float>& params,
                          double rate_hz, const PredictionSink& sink);

// Frames for replaying a dataset: each recording followed by `rest_frames`
// inactive frames so the segmenter can close its segment.
std::vector<SensorFrame> dataset_frame_stream(const Dataset& ds, std::size_t rest_frames);

// raw frame file: one `s1,s2,s3,s4,s5` line per frame
std::vector<SensorFrame> load_frame_file(const std::string& path);

inline SensorFrame rest_frame() {
    return {kSensorMax, kSensorMax, kSensorMax, kSensorMax, kSensorMax};
}

}  // namespace signspeak
