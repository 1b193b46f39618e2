#include "signspeak/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "signspeak/dataset.hpp"
#include "signspeak/training.hpp"

namespace signspeak {

namespace {
constexpr const char* kMagic = "SIGNSPEAK-CKPT v1";
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path);
    out << kMagic << '\n';
    out << "config.begin\n" << ckpt.config.serialize() << "config.end\n";
    out << "vocab=";
    for (std::size_t i = 0; i < ckpt.vocab.size(); ++i)
        out << (i ? "," : "") << ckpt.vocab[i];
    out << '\n';
    out << "seed=" << ckpt.seed << '\n';
    out << "epochs_run=" << ckpt.epochs_run << '\n';
    out << "best_val_loss=" << fmt_double(ckpt.best_val_loss) << '\n';
    out << "params=" << ckpt.params.entries.size() << '\n';
    for (const auto& [name, t] : ckpt.params.entries) {
        out << "param " << name << ' ' << t.ndim();
        for (auto d : t.shape()) out << ' ' << d;
        out << '\n';
    }
    out << "DATA\n";
    for (const auto& [_, t] : ckpt.params.entries)
        out.write(reinterpret_cast<const char*>(t.values().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!out) throw CheckpointError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::string line;
    auto next_line = [&](const char* what) -> std::string {
        if (!std::getline(in, line))
            throw CheckpointError(path + ": truncated header (" + what + ")");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };
    if (next_line("magic") != kMagic)
        throw CheckpointError(path + ": unrecognized checkpoint format/version: '" + line + "'");
    if (next_line("config.begin") != "config.begin")
        throw CheckpointError(path + ": missing config block");
    std::ostringstream cfg_text;
    while (next_line("config") != "config.end") cfg_text << line << '\n';

    Checkpoint ckpt;
    ckpt.config = KvConfig::parse_text(cfg_text.str());

    auto kv = [&](const char* key) -> std::string {
        const std::string l = next_line(key);
        const std::string prefix = std::string(key) + "=";
        if (l.rfind(prefix, 0) != 0)
            throw CheckpointError(path + ": expected '" + prefix + "...', got '" + l + "'");
        return l.substr(prefix.size());
    };
    {
        std::istringstream vs(kv("vocab"));
        std::string tok;
        while (std::getline(vs, tok, ',')) ckpt.vocab.push_back(tok);
    }
    ckpt.seed = std::stoull(kv("seed"));
    ckpt.epochs_run = std::stoull(kv("epochs_run"));
    ckpt.best_val_loss = std::stod(kv("best_val_loss"));
    const std::size_t n_params = std::stoull(kv("params"));

    const ModelConfig model_cfg = ckpt.model_config();
    ckpt.params = build<float>(model_cfg, 0);
    if (ckpt.params.entries.size() != n_params)
        throw CheckpointError(path + ": manifest lists " + std::to_string(n_params) +
                              " parameters, model '" + ckpt.config.get("model") + "' has " +
                              std::to_string(ckpt.params.entries.size()));
    for (auto& [name, t] : ckpt.params.entries) {
        std::istringstream ls(next_line("param"));
        std::string word, pname;
        std::size_t ndim;
        if (!(ls >> word >> pname >> ndim) || word != "param")
            throw CheckpointError(path + ": malformed manifest line '" + line + "'");
        if (pname != name)
            throw CheckpointError(path + ": parameter '" + pname + "' does not match model (expected '" +
                                  name + "')");
        Shape shape(ndim);
        for (auto& d : shape)
            if (!(ls >> d)) throw CheckpointError(path + ": malformed shape for " + pname);
        if (shape != t.shape())
            throw CheckpointError(path + ": shape mismatch for " + pname + ": " +
                                  shape_str(shape) + " vs " + shape_str(t.shape()));
    }
    if (next_line("DATA") != "DATA") throw CheckpointError(path + ": missing DATA marker");
    for (auto& [name, t] : ckpt.params.entries) {
        in.read(reinterpret_cast<char*>(t.values().data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw CheckpointError(path + ": truncated data for " + name);
    }
    return ckpt;
}

}  // namespace signspeak
