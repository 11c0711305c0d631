#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rbsteer/errors.hpp"
#include "rbsteer/rng.hpp"

namespace rbsteer {

inline std::string hex64(std::uint64_t value) {
    static const char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

// Content hash of a file, for report provenance headers.
inline std::string hash_file_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for hashing: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return hex64(fnv1a64(buffer.str()));
}

// Report headers: '#'-prefixed key/value lines ahead of the column header.
// Deliberately free of timestamps so identical runs write identical bytes.
class ReportHeader {
  public:
    explicit ReportHeader(std::string command) : command_(std::move(command)) {}

    ReportHeader& add(std::string key, std::string value) {
        entries_.emplace_back(std::move(key), std::move(value));
        return *this;
    }

    ReportHeader& add(std::string key, const std::filesystem::path& file_used) {
        entries_.emplace_back(std::move(key), file_used.string());
        entries_.emplace_back(entries_.back().first + "-hash", hash_file_hex(file_used));
        return *this;
    }

    void write(std::ostream& out) const {
        out << "# rbsteer " << command_ << '\n';
        for (const auto& [key, value] : entries_) out << "# " << key << ' ' << value << '\n';
    }

  private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

// Fixed-width text table for terminal output.
class TextTable {
  public:
    explicit TextTable(std::vector<std::string> header) { rows_.push_back(std::move(header)); }

    void add_row(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    void write(std::ostream& out) const {
        std::vector<std::size_t> widths;
        for (const auto& row : rows_) {
            if (widths.size() < row.size()) widths.resize(row.size(), 0);
            for (std::size_t i = 0; i < row.size(); ++i)
                widths[i] = std::max(widths[i], row[i].size());
        }
        for (const auto& row : rows_) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i > 0) out << "  ";
                out << row[i];
                if (i + 1 < row.size()) out << std::string(widths[i] - row[i].size(), ' ');
            }
            out << '\n';
        }
    }

  private:
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace rbsteer
