#include "twophase/kv_config.hpp"

#include "twophase/types.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace twophase {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_double(const std::string& s, const std::string& what)
{
    const std::string t = trim(s);
    if (t == "nan" || t == "NaN") return std::nan("");
    double v = 0.0;
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    // from_chars rejects a leading '+'
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (t.empty() || res.ec != std::errc() || res.ptr != last) {
        throw InvalidInput(what + ": cannot parse '" + s + "' as a number");
    }
    return v;
}

long long parse_int(const std::string& s, const std::string& what)
{
    const std::string t = trim(s);
    long long v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw InvalidInput(what + ": cannot parse '" + s + "' as an integer");
    }
    return v;
}

std::string format_double(double x)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

KvConfig KvConfig::parse(const std::string& text, const std::string& origin)
{
    KvConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidInput(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw InvalidInput(origin + ":" + std::to_string(lineno) + ": empty key");
        if (cfg.values_.count(key)) {
            throw InvalidInput(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

KvConfig KvConfig::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

const std::string& KvConfig::get(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) throw InvalidInput(origin_ + ": missing key '" + key + "'");
    return it->second;
}

std::string KvConfig::get_or(const std::string& key, const std::string& fallback) const
{
    return has(key) ? get(key) : fallback;
}

double KvConfig::get_double(const std::string& key) const
{
    return parse_double(get(key), origin_ + ": " + key);
}

double KvConfig::get_double_or(const std::string& key, double fallback) const
{
    return has(key) ? get_double(key) : fallback;
}

long long KvConfig::get_int(const std::string& key) const
{
    return parse_int(get(key), origin_ + ": " + key);
}

long long KvConfig::get_int_or(const std::string& key, long long fallback) const
{
    return has(key) ? get_int(key) : fallback;
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const
{
    const std::string& v = get(key);
    if (trim(v).empty()) return {};
    return split(v, ',');
}

std::vector<double> KvConfig::get_doubles(const std::string& key) const
{
    std::vector<double> out;
    for (const auto& s : get_list(key)) out.push_back(parse_double(s, origin_ + ": " + key));
    return out;
}

void KvConfig::set(const std::string& key, const std::string& value)
{
    values_[key] = value;
}

void KvConfig::reject_unknown(const std::set<std::string>& allowed) const
{
    for (const auto& [k, v] : values_) {
        if (!allowed.count(k)) throw InvalidInput(origin_ + ": unknown key '" + k + "'");
    }
}

} // namespace twophase
