#include "csv.hpp"

#include <cstdio>

#include "metagap/errors.hpp"

namespace metagap::cli {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, std::vector<std::string> columns)
    : path_(path), width_(columns.size()), out_(path, std::ios::binary) {
    if (!out_)
        throw ValidationError("cannot open output file '" + path + "'");
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) out_ << ',';
        out_ << columns[i];
    }
    out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != width_)
        throw ValidationError("CSV row width mismatch in '" + path_ + "'");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ << ',';
        out_ << cells[i];
    }
    out_ << '\n';
}

}  // namespace metagap::cli
