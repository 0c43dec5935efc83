#include "chaosflow/trajectory.hpp"

#include "chaosflow/errors.hpp"
#include "chaosflow/hash.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "binary artifact formats assume a little-endian host");

namespace chaosflow {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{}) throw FormatError("cannot parse float: '" + s + "'");
    return v;
}

void validate(const Trajectory& traj) {
    if (!(traj.dt > 0.0)) throw FormatError("trajectory dt must be > 0");
    if (traj.dim() < 1 || traj.rows() < 1) throw BadInputShape("trajectory must be non-empty");
    if (traj.labels.size() != static_cast<std::size_t>(traj.dim()))
        throw BadInputShape("trajectory label count does not match column count");
    if (!traj.states.allFinite()) throw FormatError("trajectory contains non-finite entries");
}

namespace {

constexpr char kTextMagic[] = "# chaosflow-traj v1;";
constexpr char kBinaryMagic[4] = {'C', 'F', 'T', 'J'};
constexpr std::uint32_t kBinaryVersion = 1;

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError(std::string("truncated trajectory file while reading ") + what);
    return v;
}

} // namespace

void save_trajectory_text(const Trajectory& traj, const std::filesystem::path& path) {
    validate(traj);
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os << "# chaosflow-traj v1; dt=" << format_double(traj.dt)
       << "; t0=" << format_double(traj.t0) << "; cols=";
    for (std::size_t j = 0; j < traj.labels.size(); ++j) {
        if (j) os << ',';
        os << traj.labels[j];
    }
    os << '\n';
    for (Eigen::Index i = 0; i < traj.rows(); ++i) {
        for (Eigen::Index j = 0; j < traj.dim(); ++j) {
            if (j) os << ',';
            os << format_double(traj.states(i, j));
        }
        os << '\n';
    }
    if (!os) throw FormatError("write failure on " + path.string());
}

Trajectory load_trajectory_text(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open: " + path.string());
    std::string header;
    if (!std::getline(is, header)) throw FormatError("empty trajectory file: " + path.string());
    if (header.rfind(kTextMagic, 0) != 0)
        throw FormatError("missing chaosflow-traj header in " + path.string());

    Trajectory traj;
    bool saw_dt = false, saw_cols = false;
    for (const auto& raw_field : split(header.substr(std::strlen(kTextMagic)), ';')) {
        const std::string field = trim(raw_field);
        if (field.empty()) continue;
        const std::size_t eq = field.find('=');
        if (eq == std::string::npos) throw FormatError("malformed header field: '" + field + "'");
        const std::string key = trim(field.substr(0, eq));
        const std::string value = field.substr(eq + 1);
        if (key == "dt") {
            traj.dt = parse_double(value);
            saw_dt = true;
        } else if (key == "t0") {
            traj.t0 = parse_double(value);
        } else if (key == "cols") {
            traj.labels = split(value, ',');
            saw_cols = true;
        } else {
            throw FormatError("unknown header field '" + key + "' in " + path.string());
        }
    }
    if (!saw_dt || !saw_cols) throw FormatError("header missing dt/cols in " + path.string());
    const std::size_t d = traj.labels.size();

    std::vector<double> values;
    std::string line;
    std::size_t n_rows = 0;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != d)
            throw FormatError("row " + std::to_string(n_rows) + " has " +
                              std::to_string(cells.size()) + " fields, expected " +
                              std::to_string(d));
        for (const auto& c : cells) values.push_back(parse_double(c));
        ++n_rows;
    }
    if (n_rows == 0) throw FormatError("trajectory has no data rows: " + path.string());
    traj.states.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n_rows; ++i)
        for (std::size_t j = 0; j < d; ++j)
            traj.states(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                values[i * d + j];
    validate(traj);
    return traj;
}

void save_trajectory_binary(const Trajectory& traj, const std::filesystem::path& path) {
    validate(traj);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os.write(kBinaryMagic, 4);
    write_raw(os, kBinaryVersion);
    write_raw(os, traj.dt);
    write_raw(os, traj.t0);
    write_raw(os, static_cast<std::uint32_t>(traj.dim()));
    write_raw(os, static_cast<std::uint64_t>(traj.rows()));
    std::string joined;
    for (std::size_t j = 0; j < traj.labels.size(); ++j) {
        if (j) joined += ';';
        joined += traj.labels[j];
    }
    write_raw(os, static_cast<std::uint32_t>(joined.size()));
    os.write(joined.data(), static_cast<std::streamsize>(joined.size()));
    std::vector<double> row(static_cast<std::size_t>(traj.dim()));
    for (Eigen::Index i = 0; i < traj.rows(); ++i) {
        for (Eigen::Index j = 0; j < traj.dim(); ++j) row[static_cast<std::size_t>(j)] = traj.states(i, j);
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!os) throw FormatError("write failure on " + path.string());
}

Trajectory load_trajectory_binary(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kBinaryMagic, 4) != 0)
        throw FormatError("bad magic in " + path.string());
    const auto version = read_raw<std::uint32_t>(is, "version");
    if (version != kBinaryVersion)
        throw FormatError("unsupported trajectory version " + std::to_string(version));
    Trajectory traj;
    traj.dt = read_raw<double>(is, "dt");
    traj.t0 = read_raw<double>(is, "t0");
    const auto d = read_raw<std::uint32_t>(is, "dimension");
    const auto n = read_raw<std::uint64_t>(is, "row count");
    const auto label_len = read_raw<std::uint32_t>(is, "label length");
    std::string joined(label_len, '\0');
    if (label_len > 0 && !is.read(joined.data(), label_len))
        throw FormatError("truncated labels in " + path.string());
    traj.labels = split(joined, ';');
    if (d == 0 || n == 0) throw FormatError("empty trajectory in " + path.string());
    traj.states.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    std::vector<double> row(d);
    for (std::uint64_t i = 0; i < n; ++i) {
        if (!is.read(reinterpret_cast<char*>(row.data()),
                     static_cast<std::streamsize>(row.size() * sizeof(double))))
            throw FormatError("truncated payload in " + path.string());
        for (std::uint32_t j = 0; j < d; ++j)
            traj.states(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    validate(traj);
    return traj;
}

Trajectory load_trajectory(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    is.close();
    if (std::memcmp(magic, kBinaryMagic, 4) == 0) return load_trajectory_binary(path);
    return load_trajectory_text(path);
}

std::uint64_t trajectory_fingerprint(const Trajectory& traj) {
    Fnv1a64 h;
    h.update_value(traj.dt);
    h.update_value(traj.t0);
    h.update_value(static_cast<std::uint64_t>(traj.rows()));
    h.update_value(static_cast<std::uint64_t>(traj.dim()));
    for (const auto& label : traj.labels) h.update_string(label);
    for (Eigen::Index i = 0; i < traj.rows(); ++i)
        for (Eigen::Index j = 0; j < traj.dim(); ++j) h.update_value(traj.states(i, j));
    return h.digest();
}

} // namespace chaosflow
