#include "spec_file.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "metagap/errors.hpp"

namespace metagap::cli {

namespace {

using nlohmann::json;

std::string strip(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

/// Removes a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

json parse_scalar(const std::string& token, int line_no) {
    const std::string t = strip(token);
    if (t.empty())
        throw ValidationError("spec line " + std::to_string(line_no) +
                              ": empty value");
    if (t.front() == '"') {
        if (t.size() < 2 || t.back() != '"')
            throw ValidationError("spec line " + std::to_string(line_no) +
                                  ": unterminated string");
        return t.substr(1, t.size() - 2);
    }
    if (t == "true") return true;
    if (t == "false") return false;
    try {
        std::size_t used = 0;
        if (t.find_first_of(".eErR") == std::string::npos) {
            const long long v = std::stoll(t, &used);
            if (used == t.size()) return v;
        }
        const double v = std::stod(t, &used);
        if (used == t.size()) return v;
    } catch (const std::exception&) {
        // fall through to the error below
    }
    throw ValidationError("spec line " + std::to_string(line_no) +
                          ": cannot parse value '" + t + "'");
}

json parse_value(const std::string& raw, int line_no) {
    const std::string v = strip(raw);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']')
            throw ValidationError("spec line " + std::to_string(line_no) +
                                  ": arrays must close on the same line");
        json arr = json::array();
        std::string body = v.substr(1, v.size() - 2);
        std::string token;
        bool in_string = false;
        for (char c : body) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                if (!strip(token).empty())
                    arr.push_back(parse_scalar(token, line_no));
                token.clear();
            } else {
                token += c;
            }
        }
        if (!strip(token).empty()) arr.push_back(parse_scalar(token, line_no));
        return arr;
    }
    return parse_scalar(v, line_no);
}

json* descend(json& root, const std::string& dotted, int line_no) {
    json* node = &root;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        part = strip(part);
        if (part.empty())
            throw ValidationError("spec line " + std::to_string(line_no) +
                                  ": empty section name component");
        node = &(*node)[part];
    }
    return node;
}

}  // namespace

json parse_toml_subset(const std::string& text) {
    json root = json::object();
    json* section = &root;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = strip(strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ValidationError("spec line " + std::to_string(line_no) +
                                      ": malformed section header");
            section = descend(root, s.substr(1, s.size() - 2), line_no);
            if (!section->is_object() && !section->is_null())
                throw ValidationError("spec line " + std::to_string(line_no) +
                                      ": section redefines a value");
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ValidationError("spec line " + std::to_string(line_no) +
                                  ": expected key = value");
        const std::string key = strip(s.substr(0, eq));
        if (key.empty())
            throw ValidationError("spec line " + std::to_string(line_no) +
                                  ": empty key");
        (*section)[key] = parse_value(s.substr(eq + 1), line_no);
    }
    return root;
}

json load_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open spec file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        try {
            return json::parse(text);
        } catch (const json::exception& e) {
            throw ValidationError("malformed JSON spec '" + path +
                                  "': " + e.what());
        }
    }
    return parse_toml_subset(text);
}

const json* SpecView::find(const std::string& path) const {
    const json* node = &spec_;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!node->is_object()) return nullptr;
        const auto it = node->find(part);
        if (it == node->end()) return nullptr;
        node = &*it;
    }
    return node;
}

bool SpecView::has(const std::string& path) const { return find(path) != nullptr; }

double SpecView::number(const std::string& path, double fallback) const {
    const json* node = find(path);
    if (!node) return fallback;
    if (!node->is_number())
        throw ValidationError("spec field '" + path + "' must be a number");
    return node->get<double>();
}

long long SpecView::integer(const std::string& path, long long fallback) const {
    const json* node = find(path);
    if (!node) return fallback;
    if (!node->is_number_integer())
        throw ValidationError("spec field '" + path + "' must be an integer");
    return node->get<long long>();
}

std::string SpecView::text(const std::string& path,
                           const std::string& fallback) const {
    const json* node = find(path);
    if (!node) return fallback;
    if (!node->is_string())
        throw ValidationError("spec field '" + path + "' must be a string");
    return node->get<std::string>();
}

std::vector<double> SpecView::numbers(const std::string& path,
                                      std::vector<double> fallback) const {
    const json* node = find(path);
    if (!node) return fallback;
    if (!node->is_array())
        throw ValidationError("spec field '" + path + "' must be an array");
    std::vector<double> out;
    for (const auto& v : *node) {
        if (!v.is_number())
            throw ValidationError("spec field '" + path +
                                  "' must contain numbers only");
        out.push_back(v.get<double>());
    }
    return out;
}

std::vector<long long> SpecView::integers(const std::string& path,
                                          std::vector<long long> fallback) const {
    const json* node = find(path);
    if (!node) return fallback;
    if (!node->is_array())
        throw ValidationError("spec field '" + path + "' must be an array");
    std::vector<long long> out;
    for (const auto& v : *node) {
        if (!v.is_number_integer())
            throw ValidationError("spec field '" + path +
                                  "' must contain integers only");
        out.push_back(v.get<long long>());
    }
    return out;
}

}  // namespace metagap::cli
