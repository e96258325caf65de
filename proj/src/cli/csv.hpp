#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace metagap::cli {

/// Formats a double with 12 significant digits (enough to round-trip the
/// quantities emitted here while keeping output byte-stable across runs).
std::string fmt(double v);

/**
 * Minimal deterministic CSV emitter: fixed header written at construction,
 * '\n' line endings, no quoting (emitted fields never contain commas), and
 * each row checked against the header width.
 */
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::vector<std::string> columns);

    void row(const std::vector<std::string>& cells);

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::size_t width_;
    std::ofstream out_;
};

}  // namespace metagap::cli
