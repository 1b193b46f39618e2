#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace signspeak {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flat key-value configuration with dotted keys (train.lr0=0.001).
// Insertion-ordered; later sets overwrite in place so serialization is stable.
class KvConfig {
public:
    static KvConfig parse_text(const std::string& text);
    static KvConfig parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get(const std::string& key) const;  // throws if missing
    std::string get_or(const std::string& key, const std::string& dflt) const;
    double get_double(const std::string& key, double dflt) const;
    std::int64_t get_int(const std::string& key, std::int64_t dflt) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const;

    std::string serialize() const;
    const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

private:
    std::vector<std::pair<std::string, std::string>> items_;
};

}  // namespace signspeak
