#include "signspeak/runner.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace signspeak {

namespace {

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
    if (!out) throw ConfigError("write failed: " + path);
}

std::string provenance_comment(const KvConfig& cfg) {
    std::ostringstream os;
    for (const auto& [k, v] : cfg.items()) os << "# " << k << '=' << v << '\n';
    return os.str();
}

std::string provenance_keys(const KvConfig& cfg) {
    std::ostringstream os;
    for (const auto& [k, v] : cfg.items()) os << "config." << k << '=' << v << '\n';
    return os.str();
}

Checkpoint make_checkpoint(const KvConfig& resolved, const FoldResult& fr) {
    Checkpoint ckpt;
    ckpt.config = resolved;
    ckpt.vocab = LabelVocab::names();
    ckpt.seed = resolved.get_u64("seed", 0);
    ckpt.epochs_run = fr.log.size();
    ckpt.best_val_loss = fr.best_val_loss;
    ckpt.params = fr.params;
    return ckpt;
}

void write_fold_artifacts(const std::filesystem::path& dir, const std::string& stem,
                          const KvConfig& resolved, const FoldResult& fr) {
    save_checkpoint(make_checkpoint(resolved, fr), (dir / (stem + ".ckpt")).string());
    write_file((dir / (stem + "_epoch_log.csv")).string(),
               provenance_comment(resolved) + epoch_log_csv(fr.log));
    write_file((dir / (stem + "_confusion.csv")).string(),
               provenance_comment(resolved) + confusion_csv(fr.metrics.confusion));
}

}  // namespace

KvConfig resolve_run_config(const KvConfig& overrides) {
    KvConfig out;
    const std::string model = overrides.get_or("model", "stacked_gru");
    (void)config_for_name(model);  // validates the name
    out.set("model", model);
    out.set("seed", std::to_string(overrides.get_u64("seed", 0)));
    const TrainConfig dflt = default_train_config(model);
    auto echo_d = [&](const std::string& key, double d) {
        out.set(key, overrides.get_or(key, fmt_double(d)));
    };
    auto echo_i = [&](const std::string& key, std::uint64_t d) {
        out.set(key, std::to_string(overrides.get_u64(key, d)));
    };
    echo_i("train.batch_size", dflt.batch_size);
    echo_i("train.max_epochs", dflt.max_epochs);
    echo_d("train.lr0", dflt.lr0);
    echo_d("train.lr_min", dflt.lr_min);
    echo_d("train.plateau_factor", dflt.plateau_factor);
    echo_i("train.plateau_patience", dflt.plateau_patience);
    echo_d("train.beta1", dflt.beta1);
    echo_d("train.beta2", dflt.beta2);
    echo_d("train.eps", dflt.eps);
    echo_d("train.weight_decay", dflt.weight_decay);
    echo_i("train.folds", dflt.folds);
    echo_d("train.target_val_acc", dflt.target_val_acc);
    echo_i("train.fold", 0);
    echo_i("train.workers", 1);
    echo_i("segmenter.threshold", 5000);
    echo_i("segmenter.min_len", kMinLen);
    echo_i("segmenter.max_len", kMaxLen);
    echo_d("stream.rate_hz", 36.0);
    echo_i("stream.rest_frames", 5);
    // reject unknown keys so typos do not silently fall back to defaults
    for (const auto& [k, v] : overrides.items())
        if (!out.has(k)) throw ConfigError("unknown config key: " + k);
    return out;
}

TrainConfig train_config_from(const KvConfig& resolved) {
    TrainConfig cfg = default_train_config(resolved.get("model"));
    cfg.batch_size = static_cast<std::size_t>(resolved.get_u64("train.batch_size", cfg.batch_size));
    cfg.max_epochs = static_cast<std::size_t>(resolved.get_u64("train.max_epochs", cfg.max_epochs));
    cfg.lr0 = resolved.get_double("train.lr0", cfg.lr0);
    cfg.lr_min = resolved.get_double("train.lr_min", cfg.lr_min);
    cfg.plateau_factor = resolved.get_double("train.plateau_factor", cfg.plateau_factor);
    cfg.plateau_patience =
        static_cast<std::size_t>(resolved.get_u64("train.plateau_patience", cfg.plateau_patience));
    cfg.beta1 = resolved.get_double("train.beta1", cfg.beta1);
    cfg.beta2 = resolved.get_double("train.beta2", cfg.beta2);
    cfg.eps = resolved.get_double("train.eps", cfg.eps);
    cfg.weight_decay = resolved.get_double("train.weight_decay", cfg.weight_decay);
    cfg.folds = static_cast<std::size_t>(resolved.get_u64("train.folds", cfg.folds));
    cfg.target_val_acc = resolved.get_double("train.target_val_acc", cfg.target_val_acc);
    cfg.seed = resolved.get_u64("seed", 0);
    cfg.validate();
    return cfg;
}

SegmenterConfig segmenter_config_from(const KvConfig& resolved) {
    SegmenterConfig cfg;
    cfg.activation_threshold = static_cast<int>(resolved.get_int("segmenter.threshold", 5000));
    cfg.min_len = static_cast<std::size_t>(resolved.get_u64("segmenter.min_len", kMinLen));
    cfg.max_len = static_cast<std::size_t>(resolved.get_u64("segmenter.max_len", kMaxLen));
    cfg.sample_rate_hz = resolved.get_double("stream.rate_hz", 36.0);
    return cfg;
}

FoldResult run_train_command(const KvConfig& overrides, const std::string& dataset_csv,
                             const std::string& out_dir) {
    const KvConfig resolved = resolve_run_config(overrides);
    const TrainConfig cfg = train_config_from(resolved);
    const auto fold_index = static_cast<std::size_t>(resolved.get_u64("train.fold", 0));
    const Dataset ds = load_csv(dataset_csv);
    const auto folds = stratified_k_fold(ds, cfg.folds, cfg.seed);
    FoldResult fr = train_fold(ds, folds, fold_index, cfg);

    std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    write_file((dir / "config.resolved").string(), resolved.serialize());
    save_checkpoint(make_checkpoint(resolved, fr), (dir / "checkpoint.ckpt").string());
    write_file((dir / "epoch_log.csv").string(),
               provenance_comment(resolved) + epoch_log_csv(fr.log));
    write_file((dir / "confusion.csv").string(),
               provenance_comment(resolved) + confusion_csv(fr.metrics.confusion));
    std::ostringstream metrics;
    metrics << provenance_keys(resolved);
    metrics << "fold=" << fold_index << "\n";
    metrics << "accuracy=" << fmt_double(fr.metrics.accuracy) << "\n";
    metrics << "macro_f1=" << fmt_double(fr.metrics.macro_f1) << "\n";
    metrics << "best_epoch=" << fr.best_epoch << "\n";
    metrics << "best_val_loss=" << fmt_double(fr.best_val_loss) << "\n";
    write_file((dir / "metrics.txt").string(), metrics.str());
    return fr;
}

CvResult run_cv_command(const KvConfig& overrides, const std::string& dataset_csv,
                        const std::string& out_dir) {
    const KvConfig resolved = resolve_run_config(overrides);
    const TrainConfig cfg = train_config_from(resolved);
    const auto workers = static_cast<std::size_t>(resolved.get_u64("train.workers", 1));
    const Dataset ds = load_csv(dataset_csv);
    CvResult cv = run_cv(ds, cfg, workers);

    std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    write_file((dir / "config.resolved").string(), resolved.serialize());
    for (const auto& fr : cv.fold_results)
        write_fold_artifacts(dir, "fold" + std::to_string(fr.fold_index), resolved, fr);
    write_file((dir / "confusion_sum.csv").string(),
               provenance_comment(resolved) + confusion_csv(cv.report.aggregate_confusion));
    write_file((dir / "metrics.txt").string(),
               provenance_keys(resolved) + metrics_report_text(cv.report));
    return cv;
}

std::string run_stream_command(const std::string& checkpoint_path, const std::string& source_path,
                               double rate_hz, std::size_t rest_frames,
                               const PredictionSink& sink) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const ModelConfig model_cfg = ckpt.model_config();
    SegmenterConfig seg_cfg = segmenter_config_from(ckpt.config);
    seg_cfg.sample_rate_hz = rate_hz > 0.0 ? rate_hz : 36.0;

    std::vector<SensorFrame> frames;
    std::ifstream probe(source_path);
    if (!probe) throw StreamError("cannot open stream source: " + source_path);
    std::string first_line;
    std::getline(probe, first_line);
    probe.close();
    if (first_line.rfind("recording_id,", 0) == 0)
        frames = dataset_frame_stream(load_csv(source_path), rest_frames);
    else
        frames = load_frame_file(source_path);

    ReplayStats stats =
        replay_frames(frames, seg_cfg, model_cfg, ckpt.params, rate_hz, sink);
    return stats.report_text();
}

}  // namespace signspeak
