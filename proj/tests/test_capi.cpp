#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "signspeak.h"
#include "signspeak/checkpoint.hpp"
#include "signspeak/dataset.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path("ss_capi_" + name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// tiny training corpus shared by the handle tests; built once
const std::string& tiny_dataset_csv() {
    static const std::string path = [] {
        static TempDir dir("data");
        ss_dataset* ds = nullptr;
        REQUIRE(ss_dataset_synth(2, 20.0, 7, &ds) == SS_OK);
        REQUIRE(ss_dataset_write(ds, dir.file("tiny.csv").c_str()) == SS_OK);
        ss_dataset_free(ds);
        return dir.file("tiny.csv");
    }();
    return path;
}

const char* kTinyConfig =
    "model=stacked_gru\n"
    "seed=7\n"
    "train.max_epochs=2\n"
    "train.folds=2\n";

// trained artifacts shared by the model/stream tests; built once
const std::string& tiny_checkpoint() {
    static const std::string path = [] {
        static TempDir dir("train");
        REQUIRE(ss_train(kTinyConfig, tiny_dataset_csv().c_str(), dir.path.string().c_str()) ==
                SS_OK);
        return dir.file("checkpoint.ckpt");
    }();
    return path;
}

}  // namespace

TEST_CASE("parameter counts through the C API") {
    long long n = 0;
    REQUIRE(ss_param_count("stacked_gru", &n) == SS_OK);
    CHECK(n == 51172);
    REQUIRE(ss_param_count("encoder", &n) == SS_OK);
    CHECK(n == 67524);

    CHECK(ss_param_count("bert", &n) == SS_ERR_USAGE);
    CHECK(std::string(ss_last_error()).find("bert") != std::string::npos);
    CHECK(ss_param_count(nullptr, &n) == SS_ERR_USAGE);

    char* table = nullptr;
    REQUIRE(ss_param_table(&table) == SS_OK);
    const std::string t = table;
    ss_free_text(table);
    CHECK(t.find("model,parameters,rounded") == 0);
    CHECK(t.find("stacked_lstm,63908,64K") != std::string::npos);
    CHECK(t.find("dense_stacked_lstm,96164,96K") != std::string::npos);
}

TEST_CASE("dataset lifecycle through the C API") {
    TempDir dir("ds");
    ss_dataset* ds = nullptr;
    REQUIRE(ss_dataset_synth(1, 15.0, 3, &ds) == SS_OK);
    CHECK(ss_dataset_num_recordings(ds) == 36);
    CHECK(ss_dataset_num_rejected(ds) == 0);

    const std::string csv = dir.file("ds.csv");
    REQUIRE(ss_dataset_write(ds, csv.c_str()) == SS_OK);
    ss_dataset* back = nullptr;
    REQUIRE(ss_dataset_load(csv.c_str(), &back) == SS_OK);
    CHECK(ss_dataset_num_recordings(back) == 36);

    char* stats = nullptr;
    REQUIRE(ss_dataset_stats(back, &stats) == SS_OK);
    const std::string s = stats;
    ss_free_text(stats);
    CHECK(s.find("recordings=36") != std::string::npos);
    CHECK(s.find("class.A=1") != std::string::npos);

    // the import adapter accepts the canonical file unchanged
    ss_dataset* imported = nullptr;
    REQUIRE(ss_dataset_import(csv.c_str(), &imported) == SS_OK);
    CHECK(ss_dataset_num_recordings(imported) == 36);

    ss_dataset_free(ds);
    ss_dataset_free(back);
    ss_dataset_free(imported);

    // missing file and empty dataset are data errors with messages
    ss_dataset* nope = nullptr;
    CHECK(ss_dataset_load(dir.file("missing.csv").c_str(), &nope) == SS_ERR_DATA);
    CHECK(std::string(ss_last_error()).find("missing.csv") != std::string::npos);

    std::ofstream(dir.file("empty.csv")) << "recording_id,t,s1,s2,s3,s4,s5,label\n";
    ss_dataset* empty = nullptr;
    REQUIRE(ss_dataset_load(dir.file("empty.csv").c_str(), &empty) == SS_OK);
    char* text = nullptr;
    CHECK(ss_dataset_stats(empty, &text) == SS_ERR_DATA);
    ss_dataset_free(empty);
}

TEST_CASE("ss_train writes the full artifact set") {
    const std::string ckpt = tiny_checkpoint();
    const fs::path dir = fs::path(ckpt).parent_path();
    for (const char* name :
         {"config.resolved", "checkpoint.ckpt", "epoch_log.csv", "confusion.csv", "metrics.txt"})
        CHECK(fs::exists(dir / name));

    // the resolved config echoes defaults alongside the overrides
    const std::string resolved = slurp((dir / "config.resolved").string());
    CHECK(resolved.find("model=stacked_gru") != std::string::npos);
    CHECK(resolved.find("train.max_epochs=2") != std::string::npos);
    CHECK(resolved.find("train.lr0=0.001") != std::string::npos);
    CHECK(resolved.find("train.plateau_patience=20") != std::string::npos);

    const std::string metrics = slurp((dir / "metrics.txt").string());
    CHECK(metrics.find("config.model=stacked_gru") != std::string::npos);
    CHECK(metrics.find("accuracy=") != std::string::npos);
    CHECK(metrics.find("best_epoch=") != std::string::npos);

    const std::string log = slurp((dir / "epoch_log.csv").string());
    CHECK(log.find("epoch,train_loss,val_loss,val_acc,lr") != std::string::npos);
}

TEST_CASE("bad configs are usage errors") {
    TempDir dir("badcfg");
    CHECK(ss_train("model=stacked_gru\ntrain.lr=0.1\n", tiny_dataset_csv().c_str(),
                   dir.path.string().c_str()) == SS_ERR_USAGE);
    CHECK(std::string(ss_last_error()).find("train.lr") != std::string::npos);
    CHECK(ss_train("model=resnet\n", tiny_dataset_csv().c_str(), dir.path.string().c_str()) ==
          SS_ERR_USAGE);
    CHECK(ss_train(nullptr, tiny_dataset_csv().c_str(), dir.path.string().c_str()) ==
          SS_ERR_USAGE);
}

TEST_CASE("checkpoint round trip is byte identical") {
    TempDir dir("ckpt");
    const std::string first = tiny_checkpoint();
    auto ckpt = signspeak::load_checkpoint(first);
    const std::string second = dir.file("again.ckpt");
    signspeak::save_checkpoint(ckpt, second);
    CHECK(slurp(first) == slurp(second));
}

TEST_CASE("model loading and classification through the C API") {
    ss_model* model = nullptr;
    REQUIRE(ss_model_load(tiny_checkpoint().c_str(), &model) == SS_OK);
    CHECK(ss_model_num_classes(model) == 36);
    CHECK(std::string(ss_model_label_name(model, 0)) == "A");
    CHECK(std::string(ss_model_label_name(model, 35)) == "10");
    CHECK(ss_model_label_name(model, 36) == nullptr);

    auto ds = signspeak::synth_generate(1, 20.0, 7);
    std::vector<uint16_t> flat;
    for (const auto& f : ds.recordings[0].frames)
        flat.insert(flat.end(), f.begin(), f.end());

    int label = -1;
    std::vector<float> probs(36);
    REQUIRE(ss_model_classify(model, flat.data(), ds.recordings[0].frames.size(), &label,
                              probs.data()) == SS_OK);
    CHECK(label >= 0);
    CHECK(label < 36);
    double sum = 0.0;
    for (float p : probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));

    // repeated classification is bit-stable
    int label2 = -1;
    std::vector<float> probs2(36);
    REQUIRE(ss_model_classify(model, flat.data(), ds.recordings[0].frames.size(), &label2,
                              probs2.data()) == SS_OK);
    CHECK(label2 == label);
    CHECK(probs2 == probs);

    uint16_t bad[5] = {2000, 0, 0, 0, 0};
    CHECK(ss_model_classify(model, bad, 1, &label, nullptr) == SS_ERR_DATA);
    CHECK(ss_model_classify(model, flat.data(), 0, &label, nullptr) == SS_ERR_USAGE);
    ss_model_free(model);

    ss_model* missing = nullptr;
    CHECK(ss_model_load("no_such_file.ckpt", &missing) == SS_ERR_DATA);
}

TEST_CASE("segmenter through the C API") {
    ss_segmenter* seg = nullptr;
    REQUIRE(ss_segmenter_new(5000, 50, 80, &seg) == SS_OK);

    const uint16_t active[5] = {100, 100, 100, 100, 100};
    const uint16_t rest[5] = {1023, 1023, 1023, 1023, 1023};
    ss_segment_event ev{};
    for (int i = 0; i < 60; ++i) CHECK(ss_segmenter_push(seg, active, &ev) == 0);
    REQUIRE(ss_segmenter_push(seg, rest, &ev) == 1);
    CHECK(ev.disposition == 0);
    CHECK(ev.num_frames == 60);
    CHECK(ev.start_index == 0);
    CHECK(ev.end_index == 60);
    CHECK(ev.frames[0][0] == 100);

    // a short burst is reported as discarded
    for (int i = 0; i < 10; ++i) CHECK(ss_segmenter_push(seg, active, &ev) == 0);
    REQUIRE(ss_segmenter_push(seg, rest, &ev) == 1);
    CHECK(ev.disposition == 1);

    size_t emitted = 0, tshort = 0, tlong = 0;
    ss_segmenter_counters(seg, &emitted, &tshort, &tlong);
    CHECK(emitted == 1);
    CHECK(tshort == 1);
    CHECK(tlong == 0);
    ss_segmenter_free(seg);

    // invalid configuration and values are rejected
    ss_segmenter* bad = nullptr;
    CHECK(ss_segmenter_new(0, 50, 80, &bad) == SS_ERR_DATA);
    REQUIRE(ss_segmenter_new(5000, 50, 80, &seg) == SS_OK);
    const uint16_t out_of_range[5] = {1024, 0, 0, 0, 0};
    CHECK(ss_segmenter_push(seg, out_of_range, &ev) == -1);
    ss_segmenter_free(seg);
}

namespace {
struct StreamCapture {
    int count = 0;
    std::string last_label;
};
void on_prediction(void* user, double, const char* label, double p_max) {
    auto* cap = static_cast<StreamCapture*>(user);
    ++cap->count;
    cap->last_label = label;
    CHECK(p_max > 0.0);
    CHECK(p_max <= 1.0);
}
}  // namespace

TEST_CASE("streaming replay through the C API") {
    StreamCapture cap;
    char* report = nullptr;
    REQUIRE(ss_stream(tiny_checkpoint().c_str(), tiny_dataset_csv().c_str(), 0.0, 2,
                      on_prediction, &cap, &report) == SS_OK);
    const std::string rep = report;
    ss_free_text(report);
    CHECK(cap.count == 72);  // one prediction per replayed recording
    CHECK(signspeak::LabelVocab::index_of(cap.last_label) >= 0);
    CHECK(rep.find("segments_emitted=72") != std::string::npos);
    CHECK(rep.find("latency_p99_ms=") != std::string::npos);

    CHECK(ss_stream("no.ckpt", tiny_dataset_csv().c_str(), 0.0, 2, nullptr, nullptr, nullptr) ==
          SS_ERR_DATA);
}

TEST_CASE("training runs are reproducible end to end") {
    TempDir a("repro_a"), b("repro_b");
    REQUIRE(ss_train(kTinyConfig, tiny_dataset_csv().c_str(), a.path.string().c_str()) == SS_OK);
    REQUIRE(ss_train(kTinyConfig, tiny_dataset_csv().c_str(), b.path.string().c_str()) == SS_OK);
    for (const char* name :
         {"checkpoint.ckpt", "epoch_log.csv", "confusion.csv", "metrics.txt", "config.resolved"})
        CHECK(slurp(a.file(name)) == slurp(b.file(name)));
}
