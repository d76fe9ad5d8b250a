#include "troupe/config.hpp"

#include "troupe/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace troupe {

namespace {

const char* kKnownSections[] = {"data", "model", "unbind", "diffusion", "train"};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw format_error("config line " + std::to_string(lineno) + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            const bool known = std::any_of(std::begin(kKnownSections), std::end(kKnownSections),
                                           [&](const char* s) { return section == s; });
            if (!known) {
                throw format_error("config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw format_error("config line " + std::to_string(lineno) + ": expected key=value");
        }
        if (section.empty()) {
            throw format_error("config line " + std::to_string(lineno) + ": key outside any [section]");
        }
        cfg.sections_[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw io_error("cannot open config file: " + path);
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

bool Config::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string Config::get_str(const std::string& section, const std::string& key, const std::string& dflt) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) {
        return dflt;
    }
    auto k = s->second.find(key);
    return k == s->second.end() ? dflt : k->second;
}

int64_t Config::get_int(const std::string& section, const std::string& key, int64_t dflt) const {
    if (!has(section, key)) {
        return dflt;
    }
    const std::string v = get_str(section, key, "");
    char* end = nullptr;
    const long long r = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') {
        throw format_error("config [" + section + "] " + key + ": not an integer: " + v);
    }
    return r;
}

double Config::get_double(const std::string& section, const std::string& key, double dflt) const {
    if (!has(section, key)) {
        return dflt;
    }
    const std::string v = get_str(section, key, "");
    char* end = nullptr;
    const double r = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') {
        throw format_error("config [" + section + "] " + key + ": not a number: " + v);
    }
    return r;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool dflt) const {
    if (!has(section, key)) {
        return dflt;
    }
    const std::string v = get_str(section, key, "");
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw format_error("config [" + section + "] " + key + ": not a boolean: " + v);
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
}

std::string Config::to_text() const {
    std::ostringstream out;
    for (const auto& [sec, kv] : sections_) {
        out << "[" << sec << "]\n";
        for (const auto& [k, v] : kv) {
            out << k << " = " << v << "\n";
        }
    }
    return out.str();
}

}  // namespace troupe
