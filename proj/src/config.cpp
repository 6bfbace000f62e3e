#include "cfr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfr {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

bool IniSection::has(const std::string& key) const {
    for (const auto& [k, v] : entries) {
        if (k == key) return true;
    }
    return false;
}

const std::string& IniSection::get(const std::string& key) const {
    for (const auto& [k, v] : entries) {
        if (k == key) return v;
    }
    throw std::runtime_error("missing key '" + key + "' in section [" + name + "]");
}

const IniSection* IniFile::find(const std::string& name) const {
    for (const auto& section : sections) {
        if (section.name == name) return &section;
    }
    return nullptr;
}

IniFile parse_ini(const std::string& text) {
    IniFile file;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto comment = raw.find_first_of("#;");
        const std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw std::runtime_error("config line " + std::to_string(line_no) + ": unterminated section");
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) throw std::runtime_error("config line " + std::to_string(line_no) + ": empty section name");
            if (file.find(name)) throw std::runtime_error("config: duplicate section [" + name + "]");
            file.sections.push_back({name, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
        if (file.sections.empty()) throw std::runtime_error("config line " + std::to_string(line_no) + ": key outside any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto& section = file.sections.back();
        if (section.has(key)) throw std::runtime_error("config: duplicate key '" + key + "' in [" + section.name + "]");
        section.entries.emplace_back(key, value);
    }
    return file;
}

IniFile read_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_ini(buffer.str());
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_real(const std::string& text, const std::string& what) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw std::runtime_error("expected a number for " + what + ", got '" + text + "'");
    }
    return value;
}

long long parse_integer(const std::string& text, const std::string& what) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw std::runtime_error("expected an integer for " + what + ", got '" + text + "'");
    }
    return value;
}

}  // namespace cfr
