#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "signspeak/dataset.hpp"
#include "signspeak/models.hpp"

namespace signspeak {

class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    ModelConfig model;
    std::size_t batch_size = 64;  // 64 for RNN families, 256 for the encoder
    std::size_t max_epochs = 300;
    double lr0 = 0.001;
    double lr_min = 0.0001;
    double plateau_factor = 0.5;
    std::size_t plateau_patience = 20;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    std::size_t folds = 5;
    double target_val_acc = 0.0;  // >0: stop a fold early once reached

    void validate() const;
};

TrainConfig default_train_config(const std::string& model_name);

template <typename T>
struct AdamWStateT {
    std::vector<std::vector<T>> m, v;
    std::size_t step = 0;

    static AdamWStateT init(const ModelParams<T>& params) {
        AdamWStateT s;
        for (const auto& [_, t] : params.entries) {
            s.m.emplace_back(t.size(), T(0));
            s.v.emplace_back(t.size(), T(0));
        }
        return s;
    }
};

using AdamWState = AdamWStateT<float>;

// decoupled weight decay: decay is applied directly to the parameter, not
// through the moment estimates
template <typename T>
void adamw_step(ModelParams<T>& params, AdamWStateT<T>& state, double lr,
                const TrainConfig& cfg) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        auto& [name, t] = params.entries[i];
        const auto& g = t.grad();
        auto& p = t.values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = static_cast<double>(g[j]);
            if (!std::isfinite(gj))
                throw TrainError("non-finite gradient in parameter " + name);
            m[j] = static_cast<T>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj);
            v[j] = static_cast<T>(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] = static_cast<T>(p[j] - lr * mhat / (std::sqrt(vhat) + cfg.eps) -
                                  lr * cfg.weight_decay * p[j]);
        }
    }
}

struct PlateauScheduler {
    double best_val_loss;
    std::size_t epochs_since_improvement = 0;
    double current_lr;
    double factor;
    std::size_t patience;
    double lr_min;

    PlateauScheduler(double lr0, double factor, std::size_t patience, double lr_min);
    double step(double val_loss);
};

using Confusion = std::vector<std::vector<long long>>;

Confusion make_confusion(std::size_t num_classes = kNumClasses);
double categorical_accuracy(const Confusion& confusion);
double macro_f1(const Confusion& confusion);

struct FoldMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    Confusion confusion;
};

struct EpochLogEntry {
    std::size_t epoch;
    double train_loss;
    double val_loss;
    double val_acc;
    double lr;
};

struct FoldResult {
    ModelParams<float> params;  // parameters from the best-validation-loss epoch
    FoldMetrics metrics;
    std::vector<EpochLogEntry> log;
    double best_val_loss = 0.0;
    std::size_t best_epoch = 0;
    std::size_t fold_index = 0;
};

FoldResult train_fold(const Dataset& ds, const std::vector<std::vector<std::size_t>>& folds,
                      std::size_t fold_index, const TrainConfig& cfg);

struct MetricsReport {
    std::vector<FoldMetrics> folds;
    double mean_accuracy = 0.0, std_accuracy = 0.0;
    double mean_macro_f1 = 0.0, std_macro_f1 = 0.0;
    Confusion aggregate_confusion;
};

MetricsReport aggregate_metrics(const std::vector<FoldMetrics>& folds);

struct CvResult {
    MetricsReport report;
    std::vector<FoldResult> fold_results;
};

CvResult run_cv(const Dataset& ds, const TrainConfig& cfg, std::size_t workers = 1);

// evaluation helpers shared by train_fold, the CLI and the stream pipeline
std::vector<int> predict(const ModelConfig& cfg, ModelParams<float>& params, const Dataset& ds,
                         const std::vector<std::size_t>& indices, std::size_t batch_size);

std::string metrics_report_text(const MetricsReport& report);
std::string epoch_log_csv(const std::vector<EpochLogEntry>& log);
std::string confusion_csv(const Confusion& confusion);

std::string fmt_double(double v);

}  // namespace signspeak
