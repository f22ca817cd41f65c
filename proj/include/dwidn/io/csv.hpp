#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "dwidn/core/error.hpp"

namespace dwidn::io {

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" for the
/// non-finite values.
inline std::string format_number(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{})
        throw Error("format_number: conversion failed");
    return std::string(buf, end);
}

using CsvCell = std::variant<std::string, double, long long>;

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(std::vector<CsvCell> row)
    {
        if (row.size() != header_.size())
            throw Error("csv row has " + std::to_string(row.size()) + " cells, header has " +
                        std::to_string(header_.size()));
        rows_.push_back(std::move(row));
    }

    const std::vector<std::string>& header() const { return header_; }
    std::size_t row_count() const { return rows_.size(); }
    const std::vector<CsvCell>& row(std::size_t i) const { return rows_.at(i); }

    std::string str() const
    {
        std::string out;
        append_line(out, header_);
        for (const auto& row : rows_) {
            std::vector<std::string> cells;
            for (const auto& cell : row)
                cells.push_back(std::visit(
                    [](const auto& v) -> std::string {
                        using V = std::decay_t<decltype(v)>;
                        if constexpr (std::is_same_v<V, std::string>)
                            return v;
                        else if constexpr (std::is_same_v<V, double>)
                            return format_number(v);
                        else
                            return std::to_string(v);
                    },
                    cell));
            append_line(out, cells);
        }
        return out;
    }

private:
    static std::string quote(const std::string& s)
    {
        if (s.find_first_of(",\"\n") == std::string::npos)
            return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"')
                q += '"';
            q += c;
        }
        return q + "\"";
    }

    static void append_line(std::string& out, const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i)
                out += ',';
            out += quote(cells[i]);
        }
        out += '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<CsvCell>> rows_;
};

/// Minimal reader for the files written above: comma separated, double
/// quotes for cells containing separators.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        any = true;
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
        } else if (c == '\n') {
            row.push_back(std::move(cell));
            cell.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else if (c != '\r') {
            cell += c;
        }
    }
    if (quoted)
        throw IoError("csv: unterminated quoted cell");
    if (any) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline double parse_number(const std::string& s)
{
    if (s == "inf")
        return INFINITY;
    if (s == "-inf")
        return -INFINITY;
    if (s == "nan")
        return NAN;
    double v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw IoError("csv: '" + s + "' is not a number");
    return v;
}

} // namespace dwidn::io
