#include "signspeak.h"

#include <cstring>
#include <exception>
#include <string>

#include "signspeak/checkpoint.hpp"
#include "signspeak/config.hpp"
#include "signspeak/dataset.hpp"
#include "signspeak/models.hpp"
#include "signspeak/runner.hpp"
#include "signspeak/streaming.hpp"
#include "signspeak/training.hpp"

using namespace signspeak;

namespace {

thread_local std::string g_last_error;

ss_status classify_exception(const std::exception_ptr& ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const TrainError& e) {
        g_last_error = e.what();
        return SS_ERR_TRAIN;
    } catch (const DataError& e) {
        g_last_error = e.what();
        return SS_ERR_DATA;
    } catch (const StreamError& e) {
        g_last_error = e.what();
        return SS_ERR_DATA;
    } catch (const CheckpointError& e) {
        g_last_error = e.what();
        return SS_ERR_DATA;
    } catch (const ConfigError& e) {
        g_last_error = e.what();
        return SS_ERR_USAGE;
    } catch (const ModelError& e) {
        g_last_error = e.what();
        return SS_ERR_USAGE;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return SS_ERR_USAGE;
    }
}

template <typename F>
ss_status guarded(F&& f) {
    try {
        f();
        return SS_OK;
    } catch (...) {
        return classify_exception(std::current_exception());
    }
}

char* copy_text(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

struct ss_dataset {
    Dataset ds;
};

struct ss_model {
    Checkpoint ckpt;
    ModelConfig cfg;
};

struct ss_segmenter {
    Segmenter seg;
};

extern "C" {

const char* ss_last_error(void) { return g_last_error.c_str(); }

void ss_free_text(char* text) { delete[] text; }

ss_status ss_dataset_load(const char* csv_path, ss_dataset** out) {
    return guarded([&] {
        if (!csv_path || !out) throw ConfigError("ss_dataset_load: null argument");
        *out = new ss_dataset{load_csv(csv_path)};
    });
}

ss_status ss_dataset_import(const char* path, ss_dataset** out) {
    return guarded([&] {
        if (!path || !out) throw ConfigError("ss_dataset_import: null argument");
        *out = new ss_dataset{import_external(path)};
    });
}

ss_status ss_dataset_synth(size_t n_per_class, double noise_std, uint64_t seed,
                           ss_dataset** out) {
    return guarded([&] {
        if (!out) throw ConfigError("ss_dataset_synth: null output");
        *out = new ss_dataset{synth_generate(n_per_class, noise_std, seed)};
    });
}

ss_status ss_dataset_write(const ss_dataset* ds, const char* csv_path) {
    return guarded([&] {
        if (!ds || !csv_path) throw ConfigError("ss_dataset_write: null argument");
        write_csv(ds->ds, csv_path);
    });
}

ss_status ss_dataset_stats(const ss_dataset* ds, char** out_text) {
    return guarded([&] {
        if (!ds || !out_text) throw ConfigError("ss_dataset_stats: null argument");
        if (ds->ds.recordings.empty() && ds->ds.rejected.empty())
            throw DataError("dataset is empty");
        *out_text = copy_text(dataset_stats(ds->ds));
    });
}

size_t ss_dataset_num_recordings(const ss_dataset* ds) {
    return ds ? ds->ds.recordings.size() : 0;
}

size_t ss_dataset_num_rejected(const ss_dataset* ds) { return ds ? ds->ds.rejected.size() : 0; }

void ss_dataset_free(ss_dataset* ds) { delete ds; }

ss_status ss_param_count(const char* model_name, long long* out_count) {
    return guarded([&] {
        if (!model_name || !out_count) throw ConfigError("ss_param_count: null argument");
        *out_count = static_cast<long long>(count_parameters(config_for_name(model_name)));
    });
}

ss_status ss_param_table(char** out_text) {
    return guarded([&] {
        if (!out_text) throw ConfigError("ss_param_table: null output");
        std::string table = "model,parameters,rounded\n";
        for (const auto& name : model_names()) {
            const std::size_t n = count_parameters(config_for_name(name));
            const std::size_t rounded = (n + 500) / 1000;
            table += name + "," + std::to_string(n) + "," + std::to_string(rounded) + "K\n";
        }
        *out_text = copy_text(table);
    });
}

ss_status ss_train(const char* config_kv, const char* dataset_csv, const char* out_dir) {
    return guarded([&] {
        if (!config_kv || !dataset_csv || !out_dir) throw ConfigError("ss_train: null argument");
        run_train_command(KvConfig::parse_text(config_kv), dataset_csv, out_dir);
    });
}

ss_status ss_cv(const char* config_kv, const char* dataset_csv, const char* out_dir) {
    return guarded([&] {
        if (!config_kv || !dataset_csv || !out_dir) throw ConfigError("ss_cv: null argument");
        run_cv_command(KvConfig::parse_text(config_kv), dataset_csv, out_dir);
    });
}

ss_status ss_model_load(const char* checkpoint_path, ss_model** out) {
    return guarded([&] {
        if (!checkpoint_path || !out) throw ConfigError("ss_model_load: null argument");
        auto* m = new ss_model{load_checkpoint(checkpoint_path), {}};
        m->cfg = m->ckpt.model_config();
        *out = m;
    });
}

ss_status ss_model_classify(ss_model* model, const uint16_t* frames, size_t num_frames,
                            int* out_label, float* out_probs) {
    return guarded([&] {
        if (!model || !frames || !out_label || num_frames == 0)
            throw ConfigError("ss_model_classify: null argument or empty segment");
        std::vector<SensorFrame> fs(num_frames);
        for (size_t t = 0; t < num_frames; ++t)
            for (size_t c = 0; c < kNumChannels; ++c) {
                const uint16_t v = frames[t * kNumChannels + c];
                if (v > kSensorMax)
                    throw DataError("sensor value " + std::to_string(v) + " outside [0,1023]");
                fs[t][c] = v;
            }
        const auto cls = classify_segment(fs, model->cfg, model->ckpt.params);
        *out_label = cls.label;
        if (out_probs)
            std::memcpy(out_probs, cls.probs.data(), cls.probs.size() * sizeof(float));
    });
}

const char* ss_model_label_name(const ss_model* model, int label) {
    if (!model || label < 0 || static_cast<size_t>(label) >= model->ckpt.vocab.size())
        return nullptr;
    return model->ckpt.vocab[static_cast<size_t>(label)].c_str();
}

size_t ss_model_num_classes(const ss_model* model) {
    return model ? model->ckpt.vocab.size() : 0;
}

void ss_model_free(ss_model* model) { delete model; }

ss_status ss_segmenter_new(int activation_threshold, size_t min_len, size_t max_len,
                           ss_segmenter** out) {
    return guarded([&] {
        if (!out) throw ConfigError("ss_segmenter_new: null output");
        SegmenterConfig cfg;
        cfg.activation_threshold = activation_threshold;
        cfg.min_len = min_len;
        cfg.max_len = max_len;
        *out = new ss_segmenter{Segmenter(cfg)};
    });
}

int ss_segmenter_push(ss_segmenter* seg, const uint16_t frame[5], ss_segment_event* out_event) {
    if (!seg || !frame) {
        g_last_error = "ss_segmenter_push: null argument";
        return -1;
    }
    try {
        SensorFrame f{};
        for (size_t c = 0; c < kNumChannels; ++c) {
            if (frame[c] > kSensorMax) throw DataError("sensor value outside [0,1023]");
            f[c] = frame[c];
        }
        auto ev = seg->seg.push(f);
        if (!ev) return 0;
        if (out_event) {
            *out_event = ss_segment_event{};
            out_event->num_frames = std::min<size_t>(ev->frames.size(), 81);
            for (size_t t = 0; t < out_event->num_frames; ++t)
                for (size_t c = 0; c < kNumChannels; ++c)
                    out_event->frames[t][c] = ev->frames[t][c];
            out_event->start_index = ev->start_index;
            out_event->end_index = ev->end_index;
            out_event->disposition = static_cast<int>(ev->disposition);
        }
        return 1;
    } catch (...) {
        classify_exception(std::current_exception());
        return -1;
    }
}

void ss_segmenter_counters(const ss_segmenter* seg, size_t* emitted, size_t* discarded_short,
                           size_t* discarded_long) {
    if (!seg) return;
    const auto& c = seg->seg.counters();
    if (emitted) *emitted = c.emitted;
    if (discarded_short) *discarded_short = c.discarded_short;
    if (discarded_long) *discarded_long = c.discarded_long;
}

void ss_segmenter_free(ss_segmenter* seg) { delete seg; }

ss_status ss_stream(const char* checkpoint_path, const char* source_path, double rate_hz,
                    size_t rest_frames, ss_prediction_fn callback, void* user,
                    char** out_report) {
    return guarded([&] {
        if (!checkpoint_path || !source_path) throw ConfigError("ss_stream: null argument");
        PredictionSink sink;
        if (callback) {
            sink = [&](const Prediction& p) {
                callback(user, p.t_start_sec, LabelVocab::name(p.label).c_str(), p.p_max);
            };
        }
        const std::string report =
            run_stream_command(checkpoint_path, source_path, rate_hz, rest_frames, sink);
        if (out_report) *out_report = copy_text(report);
    });
}

}  // extern "C"
