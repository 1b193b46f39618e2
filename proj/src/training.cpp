#include "signspeak/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace signspeak {

void TrainConfig::validate() const {
    if (lr_min <= 0.0 || lr_min > lr0)
        throw TrainError("require 0 < lr_min <= lr0");
    if (plateau_factor <= 0.0 || plateau_factor >= 1.0)
        throw TrainError("require 0 < plateau_factor < 1");
    if (plateau_patience < 1) throw TrainError("plateau_patience must be >= 1");
    if (batch_size < 1) throw TrainError("batch_size must be >= 1");
    if (folds < 2) throw TrainError("folds must be >= 2");
}

TrainConfig default_train_config(const std::string& model_name) {
    TrainConfig cfg;
    cfg.model = config_for_name(model_name);
    cfg.batch_size = model_name == "encoder" ? 256 : 64;
    return cfg;
}

PlateauScheduler::PlateauScheduler(double lr0, double factor, std::size_t patience,
                                   double lr_min)
    : best_val_loss(std::numeric_limits<double>::infinity()),
      current_lr(lr0),
      factor(factor),
      patience(patience),
      lr_min(lr_min) {}

double PlateauScheduler::step(double val_loss) {
    if (val_loss < best_val_loss) {
        best_val_loss = val_loss;
        epochs_since_improvement = 0;
    } else {
        ++epochs_since_improvement;
        if (epochs_since_improvement > patience) {
            current_lr = std::max(current_lr * factor, lr_min);
            epochs_since_improvement = 0;
        }
    }
    return current_lr;
}

Confusion make_confusion(std::size_t num_classes) {
    return Confusion(num_classes, std::vector<long long>(num_classes, 0));
}

namespace {
long long confusion_total(const Confusion& c) {
    long long total = 0;
    for (const auto& row : c)
        for (long long v : row) {
            if (v < 0) throw TrainError("confusion matrix has negative entries");
            total += v;
        }
    return total;
}
}  // namespace

double categorical_accuracy(const Confusion& confusion) {
    const long long total = confusion_total(confusion);
    if (total == 0) throw TrainError("confusion matrix is all zero");
    long long diag = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) diag += confusion[i][i];
    return static_cast<double>(diag) / static_cast<double>(total);
}

double macro_f1(const Confusion& confusion) {
    if (confusion_total(confusion) == 0) throw TrainError("confusion matrix is all zero");
    const std::size_t k = confusion.size();
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        long long tp = confusion[c][c], truth = 0, pred = 0;
        for (std::size_t j = 0; j < k; ++j) {
            truth += confusion[c][j];
            pred += confusion[j][c];
        }
        const double precision = pred > 0 ? static_cast<double>(tp) / pred : 0.0;
        const double recall = truth > 0 ? static_cast<double>(tp) / truth : 0.0;
        // per-class F1 is 0 by convention when P + R = 0
        sum += (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                          : 0.0;
    }
    return sum / static_cast<double>(k);
}

namespace {

std::size_t num_classes_of(const ModelConfig& cfg) {
    if (const auto* s = std::get_if<StackedRnnConfig>(&cfg)) return s->num_classes;
    if (const auto* d = std::get_if<DenseRnnConfig>(&cfg)) return d->num_classes;
    return std::get<EncoderConfig>(cfg).num_classes;
}

std::size_t padded_len_of(const ModelConfig& cfg) {
    if (const auto* s = std::get_if<StackedRnnConfig>(&cfg)) return s->max_len;
    if (const auto* d = std::get_if<DenseRnnConfig>(&cfg)) return d->max_len;
    return std::get<EncoderConfig>(cfg).max_len;
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    Confusion confusion;
};

EvalResult evaluate(const ModelConfig& cfg, ModelParams<float>& params, const Dataset& ds,
                    const std::vector<std::size_t>& indices, std::size_t batch_size) {
    EvalResult res;
    res.confusion = make_confusion(num_classes_of(cfg));
    Rng eval_rng(0, "eval");  // never consumed: eval mode dropout is identity
    const std::size_t t_max = padded_len_of(cfg);
    double loss_sum = 0.0;
    long long correct = 0;
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, indices.size());
        std::vector<std::size_t> batch_idx(indices.begin() + start, indices.begin() + end);
        auto batch = detail::pad_batch_typed<float>(ds, batch_idx, t_max);
        auto logits =
            forward_model(cfg, params, batch.data, batch.lengths, Mode::Eval, eval_rng);
        auto loss = cross_entropy(logits, batch.labels);
        loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch_idx.size());
        const std::size_t k = logits.shape()[1];
        for (std::size_t r = 0; r < batch_idx.size(); ++r) {
            const float* row = logits.values().data() + r * k;
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (row[j] > row[best]) best = j;
            res.confusion[static_cast<std::size_t>(batch.labels[r])][best] += 1;
            if (best == static_cast<std::size_t>(batch.labels[r])) ++correct;
        }
    }
    res.loss = loss_sum / static_cast<double>(indices.size());
    res.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    return res;
}

}  // namespace

std::vector<int> predict(const ModelConfig& cfg, ModelParams<float>& params, const Dataset& ds,
                         const std::vector<std::size_t>& indices, std::size_t batch_size) {
    std::vector<int> out;
    out.reserve(indices.size());
    Rng eval_rng(0, "eval");
    const std::size_t t_max = padded_len_of(cfg);
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, indices.size());
        std::vector<std::size_t> batch_idx(indices.begin() + start, indices.begin() + end);
        auto batch = detail::pad_batch_typed<float>(ds, batch_idx, t_max);
        auto logits =
            forward_model(cfg, params, batch.data, batch.lengths, Mode::Eval, eval_rng);
        const std::size_t k = logits.shape()[1];
        for (std::size_t r = 0; r < batch_idx.size(); ++r) {
            const float* row = logits.values().data() + r * k;
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (row[j] > row[best]) best = j;
            out.push_back(static_cast<int>(best));
        }
    }
    return out;
}

FoldResult train_fold(const Dataset& ds, const std::vector<std::vector<std::size_t>>& folds,
                      std::size_t fold_index, const TrainConfig& cfg) {
    cfg.validate();
    if (fold_index >= folds.size()) throw TrainError("fold index out of range");
    std::vector<std::size_t> train_idx;
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (f != fold_index)
            train_idx.insert(train_idx.end(), folds[f].begin(), folds[f].end());
    const std::vector<std::size_t>& val_idx = folds[fold_index];
    if (train_idx.empty() || val_idx.empty()) throw TrainError("empty train or validation fold");

    const std::string fold_tag = "fold" + std::to_string(fold_index);
    FoldResult res;
    res.fold_index = fold_index;
    res.params = build<float>(cfg.model, cfg.seed + fold_index);
    auto opt = AdamWState::init(res.params);
    PlateauScheduler sched(cfg.lr0, cfg.plateau_factor, cfg.plateau_patience, cfg.lr_min);
    Rng dropout_rng(cfg.seed, fold_tag + ".dropout");
    const std::size_t t_max = padded_len_of(cfg.model);

    double best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<std::vector<float>> best_snapshot = res.params.snapshot();
    std::size_t best_epoch = 0;
    double lr = cfg.lr0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed, fold_tag + ".epoch" + std::to_string(epoch) + ".shuffle");
        std::vector<std::size_t> order = train_idx;
        shuffle_rng.shuffle(order.begin(), order.end());

        double train_loss_sum = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            ++batch_no;
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::vector<std::size_t> batch_idx(order.begin() + start, order.begin() + end);
            auto batch = detail::pad_batch_typed<float>(ds, batch_idx, t_max);
            auto logits = forward_model(cfg.model, res.params, batch.data, batch.lengths,
                                        Mode::Train, dropout_rng);
            auto loss = cross_entropy(logits, batch.labels);
            const double loss_val = loss.item();
            if (!std::isfinite(loss_val))
                throw TrainError("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(batch_no));
            train_loss_sum += loss_val * static_cast<double>(batch_idx.size());
            res.params.zero_grad();
            backward(loss);
            adamw_step(res.params, opt, lr, cfg);
        }

        const auto eval = evaluate(cfg.model, res.params, ds, val_idx, cfg.batch_size);
        res.log.push_back({epoch, train_loss_sum / static_cast<double>(order.size()), eval.loss,
                           eval.accuracy, lr});
        if (eval.loss < best_val_loss) {
            best_val_loss = eval.loss;
            best_snapshot = res.params.snapshot();
            best_epoch = epoch;
        }
        lr = sched.step(eval.loss);
        if (cfg.target_val_acc > 0.0 && eval.accuracy >= cfg.target_val_acc) break;
    }

    res.params.restore(best_snapshot);
    res.best_val_loss = best_val_loss;
    res.best_epoch = best_epoch;
    const auto final_eval = evaluate(cfg.model, res.params, ds, val_idx, cfg.batch_size);
    res.metrics.confusion = final_eval.confusion;
    res.metrics.accuracy = categorical_accuracy(final_eval.confusion);
    res.metrics.macro_f1 = macro_f1(final_eval.confusion);
    return res;
}

MetricsReport aggregate_metrics(const std::vector<FoldMetrics>& folds) {
    MetricsReport rep;
    rep.folds = folds;
    const std::size_t n = folds.size();
    if (n == 0) throw TrainError("no fold metrics to aggregate");
    const std::size_t k = folds.front().confusion.size();
    rep.aggregate_confusion = make_confusion(k);
    for (const auto& f : folds) {
        rep.mean_accuracy += f.accuracy;
        rep.mean_macro_f1 += f.macro_f1;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                rep.aggregate_confusion[i][j] += f.confusion[i][j];
    }
    rep.mean_accuracy /= static_cast<double>(n);
    rep.mean_macro_f1 /= static_cast<double>(n);
    if (n > 1) {
        double va = 0.0, vf = 0.0;
        for (const auto& f : folds) {
            va += (f.accuracy - rep.mean_accuracy) * (f.accuracy - rep.mean_accuracy);
            vf += (f.macro_f1 - rep.mean_macro_f1) * (f.macro_f1 - rep.mean_macro_f1);
        }
        // sample standard deviation over folds
        rep.std_accuracy = std::sqrt(va / static_cast<double>(n - 1));
        rep.std_macro_f1 = std::sqrt(vf / static_cast<double>(n - 1));
    }
    return rep;
}

CvResult run_cv(const Dataset& ds, const TrainConfig& cfg, std::size_t workers) {
    cfg.validate();
    const auto folds = stratified_k_fold(ds, cfg.folds, cfg.seed);
    CvResult result;
    result.fold_results.resize(cfg.folds);
    if (workers == 0) workers = 1;
    workers = std::min(workers, cfg.folds);

    std::vector<std::exception_ptr> errors(cfg.folds);
    auto run_range = [&](std::size_t begin, std::size_t step) {
        for (std::size_t f = begin; f < cfg.folds; f += step) {
            try {
                result.fold_results[f] = train_fold(ds, folds, f, cfg);
            } catch (...) {
                errors[f] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        run_range(0, 1);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w)
            threads.emplace_back(run_range, w, workers);
        for (auto& t : threads) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<FoldMetrics> fm;
    for (const auto& fr : result.fold_results) fm.push_back(fr.metrics);
    result.report = aggregate_metrics(fm);
    return result;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string metrics_report_text(const MetricsReport& report) {
    std::ostringstream os;
    os << "format=signspeak-metrics-v1\n";
    os << "folds=" << report.folds.size() << "\n";
    for (std::size_t f = 0; f < report.folds.size(); ++f) {
        os << "fold." << f << ".accuracy=" << fmt_double(report.folds[f].accuracy) << "\n";
        os << "fold." << f << ".macro_f1=" << fmt_double(report.folds[f].macro_f1) << "\n";
    }
    os << "mean.accuracy=" << fmt_double(report.mean_accuracy) << "\n";
    os << "std.accuracy=" << fmt_double(report.std_accuracy) << "\n";
    os << "mean.macro_f1=" << fmt_double(report.mean_macro_f1) << "\n";
    os << "std.macro_f1=" << fmt_double(report.std_macro_f1) << "\n";
    return os.str();
}

std::string epoch_log_csv(const std::vector<EpochLogEntry>& log) {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss,val_acc,lr\n";
    for (const auto& e : log)
        os << e.epoch << ',' << fmt_double(e.train_loss) << ',' << fmt_double(e.val_loss) << ','
           << fmt_double(e.val_acc) << ',' << fmt_double(e.lr) << '\n';
    return os.str();
}

std::string confusion_csv(const Confusion& confusion) {
    std::ostringstream os;
    os << "true\\pred";
    for (std::size_t j = 0; j < confusion.size(); ++j)
        os << ',' << LabelVocab::name(static_cast<int>(j));
    os << '\n';
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        os << LabelVocab::name(static_cast<int>(i));
        for (std::size_t j = 0; j < confusion.size(); ++j) os << ',' << confusion[i][j];
        os << '\n';
    }
    return os.str();
}

}  // namespace signspeak
