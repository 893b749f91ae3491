// Deterministic text output: fixed-precision number formatting, CSV tables and
// atomic file replacement.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "varhom/common.hpp"

namespace varhom {

/// Round-trippable and locale independent.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    CsvTable& row() {
        rows_.emplace_back();
        return *this;
    }
    CsvTable& add(double v) { return add_raw(fmt_double(v)); }
    CsvTable& add(int v) { return add_raw(std::to_string(v)); }
    CsvTable& add(std::size_t v) { return add_raw(std::to_string(v)); }
    CsvTable& add(bool v) { return add_raw(v ? "1" : "0"); }
    CsvTable& add(const std::string& s) { return add_raw(s); }
    CsvTable& add(const char* s) { return add_raw(s); }

    std::size_t size() const { return rows_.size(); }

    std::string str() const {
        std::ostringstream os;
        write_line(os, header_);
        for (const auto& r : rows_) write_line(os, r);
        return os.str();
    }

private:
    CsvTable& add_raw(std::string s) {
        require(!rows_.empty(), "csv: add() before row()");
        rows_.back().push_back(std::move(s));
        return *this;
    }
    static void write_line(std::ostream& os, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
        os << '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Writes to a sibling temporary file and renames it over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os << content;
        os.flush();
        if (!os) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace varhom
