#include "signspeak/config.hpp"

#include <fstream>
#include <sstream>

namespace signspeak {

namespace {
std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
}  // namespace

KvConfig KvConfig::parse_text(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                              t + "'");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        cfg.set(key, trim(t.substr(eq + 1)));
    }
    return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

void KvConfig::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : items_)
        if (k == key) {
            v = value;
            return;
        }
    items_.emplace_back(key, value);
}

bool KvConfig::has(const std::string& key) const {
    for (const auto& [k, _] : items_)
        if (k == key) return true;
    return false;
}

std::string KvConfig::get(const std::string& key) const {
    for (const auto& [k, v] : items_)
        if (k == key) return v;
    throw ConfigError("missing config key: " + key);
}

std::string KvConfig::get_or(const std::string& key, const std::string& dflt) const {
    return has(key) ? get(key) : dflt;
}

double KvConfig::get_double(const std::string& key, double dflt) const {
    if (!has(key)) return dflt;
    const std::string v = get(key);
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": '" + v + "' is not a number");
    }
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t dflt) const {
    if (!has(key)) return dflt;
    const std::string v = get(key);
    try {
        std::size_t pos = 0;
        const std::int64_t i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": '" + v + "' is not an integer");
    }
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t dflt) const {
    if (!has(key)) return dflt;
    const std::string v = get(key);
    try {
        std::size_t pos = 0;
        const std::uint64_t i = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": '" + v + "' is not an unsigned integer");
    }
}

std::string KvConfig::serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : items_) os << k << '=' << v << '\n';
    return os.str();
}

}  // namespace signspeak
