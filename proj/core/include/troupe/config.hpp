#pragma once

#include <map>
#include <string>

namespace troupe {

// Plain-text key=value configuration with [section] headers.
// Recognized sections: [data], [model], [unbind], [diffusion], [train].
class Config {
public:
    Config() = default;

    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key, const std::string& dflt) const;
    int64_t get_int(const std::string& section, const std::string& key, int64_t dflt) const;
    double get_double(const std::string& section, const std::string& key, double dflt) const;
    bool get_bool(const std::string& section, const std::string& key, bool dflt) const;

    void set(const std::string& section, const std::string& key, const std::string& value);

    // canonical text form: sections and keys sorted, one key=value per line
    std::string to_text() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace troupe
