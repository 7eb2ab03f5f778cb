#include "mgcn/format.hpp"

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "mgcn/error.hpp"

namespace mgcn {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view s, const std::string& where) {
    const std::string t = trim(s);
    if (t.empty()) throw ValidationError(where + ": empty number");
    const char* begin = t.data();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end != begin + t.size() || errno == ERANGE) throw ValidationError(where + ": cannot parse '" + t + "' as a number");
    return v;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

std::string matrix_to_csv(const Tensor& m) {
    std::string out;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out += ',';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    return out;
}

Tensor matrix_from_csv(std::string_view text, const std::string& where) {
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        ++rows;
        if (rows == 1) cols = fields.size();
        if (fields.size() != cols) {
            throw ValidationError(where + ": row " + std::to_string(rows) + " has " + std::to_string(fields.size()) +
                                  " columns, expected " + std::to_string(cols));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const std::string loc = where + " row " + std::to_string(rows) + " col " + std::to_string(c + 1);
            const double v = parse_double(fields[c], loc);
            if (!std::isfinite(v)) throw ValidationError(loc + ": non-finite value '" + trim(fields[c]) + "'");
            values.push_back(v);
        }
    }
    if (rows == 0) throw ValidationError(where + ": empty matrix");
    return Tensor(rows, cols, std::move(values));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 100000) + "_" +
           std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw ValidationError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Tensor read_matrix_csv(const std::filesystem::path& path) { return matrix_from_csv(read_file(path), path.string()); }

void write_matrix_csv(const std::filesystem::path& path, const Tensor& m) { write_file_atomic(path, matrix_to_csv(m)); }

} // namespace mgcn
