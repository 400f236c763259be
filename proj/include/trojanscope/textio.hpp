#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trojanscope/common.hpp"

namespace trojanscope::textio {

// Ordered key=value manifest (one pair per line, '#' comments allowed).
// Keys may repeat; lookups return the first match.
struct KvFile {
    std::vector<std::pair<std::string, std::string>> entries;
    // byte offset of each entry's line start, for error reporting
    std::vector<long long> offsets;

    void add(const std::string& key, const std::string& value) {
        entries.emplace_back(key, value);
        offsets.push_back(-1);
    }
    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;  // throws FormatError if missing
    std::string get_or(const std::string& key, const std::string& fallback) const;
    long long offset_of(const std::string& key) const;
    long long require_int(const std::string& key) const;
    double require_double(const std::string& key) const;
    uint64_t require_u64(const std::string& key) const;
};

KvFile parse_kv(const std::string& text);
KvFile read_kv_file(const std::string& path);
std::string format_kv(const KvFile& kv);
void write_kv_file(const KvFile& kv, const std::string& path);

std::vector<std::string> split(const std::string& s, char sep);
std::vector<int> parse_int_list(const std::string& s, char sep = ',');
std::string join_ints(const std::vector<int>& v, char sep = ',');

// Shortest decimal text that round-trips the value (printf %.17g trimmed).
std::string format_double(double v);
std::string format_float(float v);

// FNV-1a 64-bit, used for config hashes.
uint64_t fnv1a(const std::string& s);
std::string hex_u64(uint64_t v);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace trojanscope::textio
