// signspeak — dataset tooling, benchmark training and glove-stream simulation
// on top of the libsignspeak C API.

#include <cinttypes>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "signspeak.h"

namespace {

int fail(ss_status status) {
    std::fprintf(stderr, "error: %s\n", ss_last_error());
    return static_cast<int>(status);
}

std::string with_commas(long long v) {
    std::string raw = std::to_string(v);
    std::string out;
    int count = 0;
    for (auto it = raw.rbegin(); it != raw.rend(); ++it) {
        if (count && count % 3 == 0) out += ',';
        out += *it;
        ++count;
    }
    return {out.rbegin(), out.rend()};
}

std::string read_file(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw CLI::ValidationError("--config", "cannot open " + path);
    std::string text;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
    std::fclose(f);
    return text;
}

struct RunOptions {
    std::string config_file;
    std::string model = "stacked_gru";
    std::uint64_t seed = 0;
    std::vector<std::string> sets;

    std::string build_config() const {
        std::string text;
        if (!config_file.empty()) text = read_file(config_file) + "\n";
        text += "model=" + model + "\n";
        text += "seed=" + std::to_string(seed) + "\n";
        for (const auto& kv : sets) text += kv + "\n";
        return text;
    }

    void attach(CLI::App* cmd, bool with_model = true) {
        cmd->add_option("--config", config_file, "key=value config file");
        if (with_model)
            cmd->add_option("--model", model,
                            "stacked_lstm|stacked_gru|dense_lstm|dense_gru|"
                            "dense_stacked_lstm|dense_stacked_gru|encoder");
        cmd->add_option("--seed", seed, "run seed");
        cmd->add_option("--set", sets, "config override key=value (repeatable)");
    }
};

void print_prediction(void*, double t_start, const char* label, double p_max) {
    std::printf("%.6f %s %.4f\n", t_start, label, p_max);
    std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SignSpeak gesture benchmark and stream-simulation engine"};
    app.require_subcommand(1);

    // dataset
    auto* dataset = app.add_subcommand("dataset", "import, synthesize or inspect datasets");
    dataset->require_subcommand(1);

    std::string in_path, out_path;
    auto* ds_import = dataset->add_subcommand("import", "convert an external layout to canonical CSV");
    ds_import->add_option("--in", in_path, "source file")->required();
    ds_import->add_option("--out", out_path, "canonical CSV destination")->required();

    std::size_t n_per_class = 50;
    double noise_std = 20.0;
    std::uint64_t synth_seed = 0;
    auto* ds_synth = dataset->add_subcommand("synth", "write a synthetic dataset");
    ds_synth->add_option("--n-per-class", n_per_class, "recordings per class");
    ds_synth->add_option("--noise-std", noise_std, "Gaussian noise std (raw sensor units)");
    ds_synth->add_option("--seed", synth_seed, "generator seed");
    ds_synth->add_option("--out", out_path, "canonical CSV destination")->required();

    auto* ds_stats = dataset->add_subcommand("stats", "per-class counts, length histogram, rejections");
    ds_stats->add_option("--in", in_path, "dataset file")->required();

    // train / cv
    std::string data_path, out_dir;
    RunOptions train_opts, cv_opts;
    auto* train = app.add_subcommand("train", "train a single fold, write checkpoint + logs");
    train->add_option("--data", data_path, "canonical dataset CSV")->required();
    train->add_option("--out-dir", out_dir, "artifact directory")->required();
    std::uint64_t fold = 0, epochs = 0;
    train->add_option("--fold", fold, "held-out fold index");
    train->add_option("--epochs", epochs, "max epochs (overrides train.max_epochs)");
    train_opts.attach(train);

    auto* cv = app.add_subcommand("cv", "stratified k-fold benchmark, write metrics report");
    cv->add_option("--data", data_path, "canonical dataset CSV")->required();
    cv->add_option("--out-dir", out_dir, "artifact directory")->required();
    std::uint64_t workers = 0, cv_epochs = 0;
    cv->add_option("--workers", workers, "parallel fold jobs (default 1)");
    cv->add_option("--epochs", cv_epochs, "max epochs (overrides train.max_epochs)");
    cv_opts.attach(cv);

    // params
    std::string params_model;
    bool params_all = false;
    auto* params = app.add_subcommand("params", "exact parameter counts per model family");
    params->add_option("--model", params_model, "single model name");
    params->add_flag("--all", params_all, "print the full seven-row table");

    // stream
    std::string ckpt_path, source_path, report_path;
    double rate_hz = 36.0;
    std::uint64_t rest_frames = 5;
    auto* stream = app.add_subcommand("stream", "replay a source through segment + classify");
    stream->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    stream->add_option("--source", source_path, "dataset CSV or raw frame file")->required();
    stream->add_option("--rate", rate_hz, "replay rate in Hz (0 = unthrottled)");
    stream->add_option("--rest-frames", rest_frames, "inactive frames between replayed recordings");
    stream->add_option("--report", report_path, "write the statistics report here (default stdout)");

    CLI11_PARSE(app, argc, argv);

    if (ds_import->parsed()) {
        ss_dataset* ds = nullptr;
        if (auto s = ss_dataset_import(in_path.c_str(), &ds)) return fail(s);
        if (auto s = ss_dataset_write(ds, out_path.c_str())) {
            ss_dataset_free(ds);
            return fail(s);
        }
        std::printf("imported %zu recordings (%zu rejected) -> %s\n",
                    ss_dataset_num_recordings(ds), ss_dataset_num_rejected(ds),
                    out_path.c_str());
        ss_dataset_free(ds);
        return 0;
    }
    if (ds_synth->parsed()) {
        ss_dataset* ds = nullptr;
        if (auto s = ss_dataset_synth(n_per_class, noise_std, synth_seed, &ds)) return fail(s);
        if (auto s = ss_dataset_write(ds, out_path.c_str())) {
            ss_dataset_free(ds);
            return fail(s);
        }
        std::printf("wrote %zu synthetic recordings -> %s\n", ss_dataset_num_recordings(ds),
                    out_path.c_str());
        ss_dataset_free(ds);
        return 0;
    }
    if (ds_stats->parsed()) {
        ss_dataset* ds = nullptr;
        if (auto s = ss_dataset_import(in_path.c_str(), &ds)) return fail(s);
        char* text = nullptr;
        if (auto s = ss_dataset_stats(ds, &text)) {
            ss_dataset_free(ds);
            return fail(s);
        }
        std::fputs(text, stdout);
        ss_free_text(text);
        ss_dataset_free(ds);
        return 0;
    }
    if (train->parsed()) {
        std::string cfg = train_opts.build_config();
        cfg += "train.fold=" + std::to_string(fold) + "\n";
        if (epochs > 0) cfg += "train.max_epochs=" + std::to_string(epochs) + "\n";
        if (auto s = ss_train(cfg.c_str(), data_path.c_str(), out_dir.c_str())) return fail(s);
        std::printf("training artifacts written to %s\n", out_dir.c_str());
        return 0;
    }
    if (cv->parsed()) {
        std::string cfg = cv_opts.build_config();
        if (workers > 0) cfg += "train.workers=" + std::to_string(workers) + "\n";
        if (cv_epochs > 0) cfg += "train.max_epochs=" + std::to_string(cv_epochs) + "\n";
        if (auto s = ss_cv(cfg.c_str(), data_path.c_str(), out_dir.c_str())) return fail(s);
        std::printf("cross-validation artifacts written to %s\n", out_dir.c_str());
        return 0;
    }
    if (params->parsed()) {
        if (params_all || params_model.empty()) {
            char* table = nullptr;
            if (auto s = ss_param_table(&table)) return fail(s);
            std::fputs(table, stdout);
            ss_free_text(table);
            return 0;
        }
        long long count = 0;
        if (auto s = ss_param_count(params_model.c_str(), &count)) return fail(s);
        std::printf("%s (%lldK)\n", with_commas(count).c_str(), (count + 500) / 1000);
        return 0;
    }
    if (stream->parsed()) {
        char* report = nullptr;
        if (auto s = ss_stream(ckpt_path.c_str(), source_path.c_str(), rate_hz, rest_frames,
                               print_prediction, nullptr, &report))
            return fail(s);
        if (!report_path.empty()) {
            FILE* f = std::fopen(report_path.c_str(), "wb");
            if (!f) {
                std::fprintf(stderr, "error: cannot write %s\n", report_path.c_str());
                ss_free_text(report);
                return 2;
            }
            std::fputs(report, f);
            std::fclose(f);
        } else {
            std::fputs(report, stdout);
        }
        ss_free_text(report);
        return 0;
    }
    return 1;
}
