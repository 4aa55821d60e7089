#pragma once

// Plain-text `key = value` files with `#` comments. Used for scenarios,
// dataset schemas and serialized rules.

#include <map>
#include <set>
#include <string>
#include <vector>

namespace twophase {

class KvConfig {
public:
    static KvConfig parse(const std::string& text, const std::string& origin = "config");
    static KvConfig load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int_or(const std::string& key, long long fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;

    void set(const std::string& key, const std::string& value);
    const std::map<std::string, std::string>& entries() const { return values_; }

    /// Throws when a key outside `allowed` is present (catches typos).
    void reject_unknown(const std::set<std::string>& allowed) const;

private:
    std::string origin_ = "config";
    std::map<std::string, std::string> values_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);
/// Shortest decimal text that round-trips to the same double.
std::string format_double(double x);

} // namespace twophase
