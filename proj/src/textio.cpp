#include "trojanscope/textio.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace trojanscope::textio {

bool KvFile::has(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return true;
    return false;
}

const std::string& KvFile::get(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return v;
    throw FormatError("missing required key '" + key + "'");
}

std::string KvFile::get_or(const std::string& key, const std::string& fallback) const {
    for (const auto& [k, v] : entries)
        if (k == key) return v;
    return fallback;
}

long long KvFile::offset_of(const std::string& key) const {
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].first == key) return offsets[i];
    return -1;
}

long long KvFile::require_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        long long r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw FormatError("key '" + key + "' is not an integer: '" + v + "'", offset_of(key));
    }
}

double KvFile::require_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw FormatError("key '" + key + "' is not a number: '" + v + "'", offset_of(key));
    }
}

uint64_t KvFile::require_u64(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw FormatError("key '" + key + "' is not an unsigned integer: '" + v + "'",
                          offset_of(key));
    }
}

KvFile parse_kv(const std::string& text) {
    KvFile kv;
    long long offset = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] != '#') {
            size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw FormatError("expected key=value, got '" + line + "'", offset);
            kv.entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
            kv.offsets.push_back(offset);
        }
        offset = static_cast<long long>(nl) + 1;
        pos = nl + 1;
    }
    return kv;
}

KvFile read_kv_file(const std::string& path) { return parse_kv(read_text_file(path)); }

std::string format_kv(const KvFile& kv) {
    std::string out;
    for (const auto& [k, v] : kv.entries) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

void write_kv_file(const KvFile& kv, const std::string& path) {
    write_text_file(path, format_kv(kv));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<int> parse_int_list(const std::string& s, char sep) {
    std::vector<int> out;
    for (const std::string& part : split(s, sep)) {
        if (part.empty()) continue;
        out.push_back(std::stoi(part));
    }
    return out;
}

std::string join_ints(const std::vector<int>& v, char sep) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(v[i]);
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string format_float(float v) {
    char buf[48];
    for (int prec = 1; prec <= 9; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, static_cast<double>(v));
        if (std::strtof(buf, nullptr) == v) break;
    }
    return buf;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex_u64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace trojanscope::textio
