#pragma once

#include <string>

#include "signspeak/checkpoint.hpp"
#include "signspeak/config.hpp"
#include "signspeak/streaming.hpp"
#include "signspeak/training.hpp"

namespace signspeak {

// Fill in every defaulted key so the echoed config fully determines the run.
KvConfig resolve_run_config(const KvConfig& overrides);

TrainConfig train_config_from(const KvConfig& resolved);
SegmenterConfig segmenter_config_from(const KvConfig& resolved);

// Train one fold; writes checkpoint.ckpt, epoch_log.csv, confusion.csv,
// metrics.txt and config.resolved under out_dir.
FoldResult run_train_command(const KvConfig& overrides, const std::string& dataset_csv,
                             const std::string& out_dir);

// Full cross-validation; writes per-fold artifacts plus the aggregate report.
CvResult run_cv_command(const KvConfig& overrides, const std::string& dataset_csv,
                        const std::string& out_dir);

// Segment + classify a replayed source (canonical dataset CSV or raw frame
// file). Returns the statistics report text.
std::string run_stream_command(const std::string& checkpoint_path, const std::string& source_path,
                               double rate_hz, std::size_t rest_frames,
                               const PredictionSink& sink);

}  // namespace signspeak
