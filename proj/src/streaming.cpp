#include "signspeak/streaming.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace signspeak {

SensorFrame parse_frame(const std::string& line) {
    std::vector<std::string> toks;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            toks.push_back(cur);
            cur.clear();
        } else if (c != '\r' && c != '\n') {
            cur += c;
        }
    }
    toks.push_back(cur);
    if (toks.size() != kNumChannels)
        throw StreamError("frame '" + line + "': expected 5 channels, got " +
                          std::to_string(toks.size()));
    SensorFrame f{};
    for (std::size_t i = 0; i < kNumChannels; ++i) {
        std::size_t pos = 0;
        long v;
        try {
            v = std::stol(toks[i], &pos);
        } catch (const std::exception&) {
            throw StreamError("frame '" + line + "': non-integer token '" + toks[i] + "'");
        }
        if (pos != toks[i].size())
            throw StreamError("frame '" + line + "': non-integer token '" + toks[i] + "'");
        if (v < 0 || v > kSensorMax)
            throw StreamError("frame '" + line + "': value " + std::to_string(v) +
                              " outside [0," + std::to_string(kSensorMax) + "]");
        f[i] = static_cast<std::uint16_t>(v);
    }
    return f;
}

Segmenter::Segmenter(SegmenterConfig cfg) : cfg_(cfg) {
    if (cfg_.min_len == 0 || cfg_.min_len > cfg_.max_len)
        throw StreamError("segmenter requires 0 < min_len <= max_len");
    if (cfg_.activation_threshold <= 0 ||
        cfg_.activation_threshold > kSensorMax * static_cast<int>(kNumChannels))
        throw StreamError("segmenter threshold outside (0, 5115]");
}

std::optional<SegmentEvent> Segmenter::push(const SensorFrame& frame) {
    const bool active = frame_active(frame, cfg_.activation_threshold);
    std::optional<SegmentEvent> event;
    if (active) {
        if (!in_segment_) {
            in_segment_ = true;
            too_long_ = false;
            seg_start_ = frame_index_;
            buffer_.clear();
        }
        // keep at most max_len+1 frames; past that only the flag matters
        if (buffer_.size() <= cfg_.max_len)
            buffer_.push_back(frame);
        if (buffer_.size() > cfg_.max_len) too_long_ = true;
    } else if (in_segment_) {
        SegmentEvent ev;
        ev.start_index = seg_start_;
        ev.end_index = frame_index_;
        const std::size_t len = ev.end_index - ev.start_index;
        if (too_long_ || len > cfg_.max_len) {
            ev.disposition = Disposition::TooLong;
            ++counters_.discarded_long;
        } else if (len < cfg_.min_len) {
            ev.disposition = Disposition::TooShort;
            ++counters_.discarded_short;
        } else {
            ev.disposition = Disposition::Emitted;
            ++counters_.emitted;
        }
        ev.frames = std::move(buffer_);
        buffer_.clear();
        in_segment_ = false;
        event = std::move(ev);
    }
    ++frame_index_;
    return event;
}

Classification classify_segment(const std::vector<SensorFrame>& frames, const ModelConfig& cfg,
                                ModelParams<float>& params) {
    if (frames.empty()) throw StreamError("classify_segment: empty segment");
    Dataset tmp;
    GestureRecording rec;
    rec.id = "segment";
    rec.label = 0;
    std::size_t t_max = kPaddedLen;
    if (const auto* s = std::get_if<StackedRnnConfig>(&cfg)) t_max = s->max_len;
    if (const auto* d = std::get_if<DenseRnnConfig>(&cfg)) t_max = d->max_len;
    if (const auto* e = std::get_if<EncoderConfig>(&cfg)) t_max = e->max_len;
    // a segment may hold up to 80 frames while the model extent is 79; cap it
    rec.frames.assign(frames.begin(),
                      frames.begin() + std::min(frames.size(), t_max));
    tmp.recordings.push_back(std::move(rec));
    auto batch = detail::pad_batch_typed<float>(tmp, {0}, t_max);
    Rng eval_rng(0, "eval");
    auto logits = forward_model(cfg, params, batch.data, batch.lengths, Mode::Eval, eval_rng);
    auto probs = softmax(logits);
    Classification out;
    out.probs = probs.values();
    out.label = 0;
    for (std::size_t j = 1; j < out.probs.size(); ++j)
        if (out.probs[j] > out.probs[static_cast<std::size_t>(out.label)])
            out.label = static_cast<int>(j);
    return out;
}

double ReplayStats::percentile_ms(double p) const {
    if (latencies_ms.empty()) return 0.0;
    std::vector<double> sorted = latencies_ms;
    std::sort(sorted.begin(), sorted.end());
    const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

std::string ReplayStats::report_text() const {
    std::ostringstream os;
    os << "frames_sent=" << frames_sent << "\n";
    os << "segments_emitted=" << segments.emitted << "\n";
    os << "segments_discarded_short=" << segments.discarded_short << "\n";
    os << "segments_discarded_long=" << segments.discarded_long << "\n";
    os << "latency_p50_ms=" << percentile_ms(50.0) << "\n";
    os << "latency_p95_ms=" << percentile_ms(95.0) << "\n";
    os << "latency_p99_ms=" << percentile_ms(99.0) << "\n";
    return os.str();
}

ReplayStats replay_frames(const std::vector<SensorFrame>& frames, const SegmenterConfig& seg_cfg,
                          const ModelConfig& model_cfg, ModelParams<float>& params,
                          double rate_hz, const PredictionSink& sink) {
    Segmenter seg(seg_cfg);
    ReplayStats stats;
    const auto inter_frame = rate_hz > 0.0
                                 ? std::chrono::duration<double>(1.0 / rate_hz)
                                 : std::chrono::duration<double>(0.0);
    for (const auto& frame : frames) {
        if (rate_hz > 0.0) std::this_thread::sleep_for(inter_frame);
        auto event = seg.push(frame);
        ++stats.frames_sent;
        if (event && event->disposition == Disposition::Emitted) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto cls = classify_segment(event->frames, model_cfg, params);
            const auto t1 = std::chrono::steady_clock::now();
            stats.latencies_ms.push_back(
                std::chrono::duration<double, std::milli>(t1 - t0).count());
            if (sink) {
                Prediction p;
                p.start_index = event->start_index;
                p.t_start_sec =
                    static_cast<double>(event->start_index) / seg_cfg.sample_rate_hz;
                p.label = cls.label;
                p.p_max = cls.probs[static_cast<std::size_t>(cls.label)];
                sink(p);
            }
        }
    }
    stats.segments = seg.counters();
    return stats;
}

std::vector<SensorFrame> dataset_frame_stream(const Dataset& ds, std::size_t rest_frames) {
    if (rest_frames == 0) rest_frames = 1;  // at least one inactive frame closes each segment
    std::vector<SensorFrame> out;
    for (const auto& rec : ds.recordings) {
        out.insert(out.end(), rec.frames.begin(), rec.frames.end());
        for (std::size_t i = 0; i < rest_frames; ++i) out.push_back(rest_frame());
    }
    return out;
}

std::vector<SensorFrame> load_frame_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StreamError("cannot open frame file: " + path);
    std::vector<SensorFrame> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_frame(line));
    }
    return out;
}

}  // namespace signspeak
