#include "signspeak/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "signspeak/rng.hpp"

namespace signspeak {

const std::vector<std::string>& LabelVocab::names() {
    static const std::vector<std::string> v = [] {
        std::vector<std::string> n;
        for (char c = 'A'; c <= 'Z'; ++c) n.emplace_back(1, c);
        for (int i = 1; i <= 10; ++i) n.push_back(std::to_string(i));
        return n;
    }();
    return v;
}

const std::string& LabelVocab::name(int index) {
    if (index < 0 || index >= static_cast<int>(kNumClasses))
        throw DataError("label index out of range: " + std::to_string(index));
    return names()[static_cast<std::size_t>(index)];
}

int LabelVocab::index_of(const std::string& name) {
    const auto& v = names();
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] == name) return static_cast<int>(i);
    return -1;
}

std::string Dataset::rejection_summary() const {
    std::ostringstream os;
    for (const auto& r : rejected)
        os << "rejected " << r.id << " length=" << r.length << "\n";
    return os.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

int parse_channel(const std::string& tok, std::size_t line_no) {
    std::size_t pos = 0;
    int v;
    try {
        v = std::stoi(tok, &pos);
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": non-integer value '" + tok + "'");
    }
    if (pos != tok.size())
        throw DataError("line " + std::to_string(line_no) + ": non-integer value '" + tok + "'");
    if (v < 0 || v > kSensorMax)
        throw DataError("line " + std::to_string(line_no) + ": value " + std::to_string(v) +
                        " outside [0," + std::to_string(kSensorMax) + "]");
    return v;
}

void finish_recording(Dataset& ds, GestureRecording& rec) {
    if (rec.frames.empty()) return;
    const std::size_t len = rec.frames.size();
    if (len < kMinLen || len > kMaxLen)
        ds.rejected.push_back({rec.id, len});
    else
        ds.recordings.push_back(std::move(rec));
    rec = GestureRecording{};
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    ++line_no;
    if (split_csv_line(line) !=
        std::vector<std::string>{"recording_id", "t", "s1", "s2", "s3", "s4", "s5", "label"})
        throw DataError(path + ": unexpected header '" + line + "'");

    Dataset ds;
    GestureRecording rec;
    long expected_t = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cols = split_csv_line(line);
        if (cols.size() != 8)
            throw DataError("line " + std::to_string(line_no) + ": expected 8 columns, got " +
                            std::to_string(cols.size()));
        const std::string& rid = cols[0];
        if (rid != rec.id) {
            finish_recording(ds, rec);
            rec.id = rid;
            expected_t = 0;
        }
        long t;
        try {
            t = std::stol(cols[1]);
        } catch (const std::exception&) {
            throw DataError("line " + std::to_string(line_no) + ": bad time index '" + cols[1] +
                            "'");
        }
        if (t != expected_t)
            throw DataError("line " + std::to_string(line_no) + ": time index " +
                            std::to_string(t) + " not contiguous (expected " +
                            std::to_string(expected_t) + ")");
        ++expected_t;
        SensorFrame f{};
        for (std::size_t c = 0; c < kNumChannels; ++c)
            f[c] = static_cast<std::uint16_t>(parse_channel(cols[2 + c], line_no));
        const int label = LabelVocab::index_of(cols[7]);
        if (label < 0)
            throw DataError("line " + std::to_string(line_no) + ": unknown label '" + cols[7] +
                            "'");
        if (!rec.frames.empty() && rec.label != label)
            throw DataError("line " + std::to_string(line_no) + ": label changes within recording " +
                            rid);
        rec.label = label;
        rec.frames.push_back(f);
    }
    finish_recording(ds, rec);
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file: " + path);
    out << "recording_id,t,s1,s2,s3,s4,s5,label\n";
    for (const auto& rec : ds.recordings) {
        for (std::size_t t = 0; t < rec.frames.size(); ++t) {
            out << rec.id << ',' << t;
            for (std::size_t c = 0; c < kNumChannels; ++c) out << ',' << rec.frames[t][c];
            out << ',' << LabelVocab::name(rec.label) << '\n';
        }
    }
    if (!out) throw DataError("write failed: " + path);
}

Dataset import_external(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw DataError(path + ": empty file");
    auto head_cols = split_csv_line(header);
    if (head_cols == std::vector<std::string>{"recording_id", "t", "s1", "s2", "s3", "s4", "s5",
                                              "label"}) {
        in.close();
        return load_csv(path);
    }

    // Wide layout: one row per recording, a label column plus flattened
    // frame-major channel readings. Trailing blank cells mark shorter
    // recordings.
    long label_col = -1;
    for (std::size_t i = 0; i < head_cols.size(); ++i) {
        std::string h = head_cols[i];
        std::transform(h.begin(), h.end(), h.begin(), ::tolower);
        if (h == "label" || h == "class" || h == "gesture" || h == "letter" || h == "sign" ||
            h == "y")
            label_col = static_cast<long>(i);
    }
    if (label_col < 0)
        throw DataError(path + ": unrecognized layout; no label column in header '" + header +
                        "'");
    Dataset ds;
    std::string line;
    std::size_t line_no = 1, rec_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cols = split_csv_line(line);
        if (static_cast<std::size_t>(label_col) >= cols.size())
            throw DataError("line " + std::to_string(line_no) + ": missing label column");
        std::string label_name = cols[static_cast<std::size_t>(label_col)];
        int label = LabelVocab::index_of(label_name);
        if (label < 0) {
            // tolerate lower-case letters and numeric-coded labels
            std::string up = label_name;
            std::transform(up.begin(), up.end(), up.begin(), ::toupper);
            label = LabelVocab::index_of(up);
        }
        if (label < 0)
            throw DataError("line " + std::to_string(line_no) + ": unknown label '" + label_name +
                            "'");
        cols.erase(cols.begin() + label_col);
        std::vector<int> vals;
        for (const auto& tok : cols) {
            if (tok.empty()) break;
            vals.push_back(parse_channel(tok, line_no));
        }
        if (vals.size() % kNumChannels != 0)
            throw DataError("line " + std::to_string(line_no) + ": " +
                            std::to_string(vals.size()) +
                            " readings is not a multiple of 5 channels");
        GestureRecording rec;
        rec.id = "r" + std::to_string(rec_no++);
        rec.label = label;
        for (std::size_t t = 0; t * kNumChannels < vals.size(); ++t) {
            SensorFrame f{};
            for (std::size_t c = 0; c < kNumChannels; ++c)
                f[c] = static_cast<std::uint16_t>(vals[t * kNumChannels + c]);
            rec.frames.push_back(f);
        }
        finish_recording(ds, rec);
    }
    return ds;
}

std::string dataset_stats(const Dataset& ds) {
    std::map<int, std::size_t> per_class;
    std::map<std::size_t, std::size_t> length_hist;
    for (const auto& r : ds.recordings) {
        ++per_class[r.label];
        ++length_hist[r.frames.size() / 10 * 10];
    }
    std::ostringstream os;
    os << "recordings=" << ds.recordings.size() << "\n";
    os << "classes=" << per_class.size() << "\n";
    for (const auto& [label, count] : per_class)
        os << "class." << LabelVocab::name(label) << "=" << count << "\n";
    for (const auto& [bucket, count] : length_hist)
        os << "length." << bucket << "-" << bucket + 9 << "=" << count << "\n";
    os << "rejected=" << ds.rejected.size() << "\n";
    os << ds.rejection_summary();
    return os.str();
}

double synth_template_value(std::size_t cls, std::size_t channel, std::size_t t) {
    const double f = 0.5 + 0.08 * static_cast<double>((cls * 5 + channel) % 31);
    const double phase = 2.0 * M_PI * static_cast<double>((cls * 7 + channel) % 36) / 36.0;
    const double amp = 150.0 + 40.0 * static_cast<double>((cls + channel) % 4);
    return 512.0 + amp * std::sin(2.0 * M_PI * f * static_cast<double>(t) / 36.0 + phase);
}

Dataset synth_generate(std::size_t n_per_class, double noise_std, std::uint64_t seed) {
    if (n_per_class < 1) throw DataError("synth_generate: n_per_class must be >= 1");
    Dataset ds;
    for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const std::string id =
                "synth-" + LabelVocab::name(static_cast<int>(cls)) + "-" + std::to_string(i);
            Rng rng(seed, id);
            // lengths stay within the padded model extent (79 < the 80-step cap)
            const std::size_t len = kMinLen + rng.next_below(kPaddedLen - kMinLen + 1);
            GestureRecording rec;
            rec.id = id;
            rec.label = static_cast<int>(cls);
            for (std::size_t t = 0; t < len; ++t) {
                SensorFrame f{};
                for (std::size_t c = 0; c < kNumChannels; ++c) {
                    double v = synth_template_value(cls, c, t) + noise_std * rng.normal();
                    v = std::clamp(std::round(v), 0.0, static_cast<double>(kSensorMax));
                    f[c] = static_cast<std::uint16_t>(v);
                }
                rec.frames.push_back(f);
            }
            ds.recordings.push_back(std::move(rec));
        }
    }
    return ds;
}

std::vector<std::vector<std::size_t>> stratified_k_fold(const Dataset& ds, std::size_t k,
                                                        std::uint64_t seed) {
    if (k < 2) throw DataError("stratified_k_fold: k must be >= 2");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.recordings.size(); ++i)
        by_class[ds.recordings[i].label].push_back(i);
    for (const auto& [label, idx] : by_class)
        if (idx.size() < k)
            throw DataError("class " + LabelVocab::name(label) + " has " +
                            std::to_string(idx.size()) + " samples, fewer than k=" +
                            std::to_string(k));
    std::vector<std::vector<std::size_t>> folds(k);
    for (auto& [label, idx] : by_class) {
        Rng rng(seed, "kfold.class." + LabelVocab::name(label));
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t i = 0; i < idx.size(); ++i) folds[i % k].push_back(idx[i]);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

PaddedBatch pad_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                      std::size_t t_max) {
    auto typed = detail::pad_batch_typed<float>(ds, indices, t_max);
    PaddedBatch out;
    out.data = typed.data;
    out.labels = std::move(typed.labels);
    out.lengths = std::move(typed.lengths);
    out.mask = Tensor<float>::zeros({indices.size(), t_max});
    for (std::size_t r = 0; r < indices.size(); ++r)
        for (std::size_t t = 0; t < out.lengths[r]; ++t)
            out.mask.values()[r * t_max + t] = 1.0f;
    return out;
}

}  // namespace signspeak
