#pragma once

#include <map>
#include <string>
#include <vector>

namespace cfr {

// Sectioned key = value text. '#' and ';' start comments. Section order and
// key order are preserved.
struct IniSection {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
};

struct IniFile {
    std::vector<IniSection> sections;

    const IniSection* find(const std::string& name) const;
};

IniFile parse_ini(const std::string& text);
IniFile read_ini(const std::string& path);

// "0, 0.1, 1" -> {"0", "0.1", "1"}
std::vector<std::string> split_list(const std::string& value);

double parse_real(const std::string& text, const std::string& what);
long long parse_integer(const std::string& text, const std::string& what);

}  // namespace cfr
