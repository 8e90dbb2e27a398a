#pragma once

// NPY v1.0 reader/writer (little-endian f64/f32/i32, C-order) plus the
// sidecar JSON convention and atomic file writes. Volumes are stored with
// scalar fields as shape (dims...), vector fields as (d, dims...), label
// maps as i32; "<base>.json" carries spacing and axis order.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "svreg/eval.hpp"
#include "svreg/field.hpp"

namespace svreg {

inline void atomic_write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw io_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw io_error("rename failed: " + path.string() + " (" + ec.message() + ")");
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace npy {

inline std::string format_header(const std::string& descr, const std::vector<std::size_t>& shape) {
    std::string tup = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) tup += std::to_string(shape[i]) + ", ";
    if (shape.size() != 1) {
        tup.resize(tup.size() - 2);  // "(a, b"
    } else {
        tup.resize(tup.size() - 1);  // keep the 1-tuple comma: "(a,"
    }
    tup += ")";
    std::string dict =
        "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " + tup + ", }";
    const std::size_t base = 10 + dict.size() + 1;  // magic + version + hlen + dict + '\n'
    const std::size_t pad = (64 - base % 64) % 64;
    dict.append(pad, ' ');
    dict.push_back('\n');

    std::string out;
    out += "\x93NUMPY";
    out.push_back('\x01');
    out.push_back('\x00');
    const std::uint16_t hlen = static_cast<std::uint16_t>(dict.size());
    out.push_back(static_cast<char>(hlen & 0xff));
    out.push_back(static_cast<char>(hlen >> 8));
    out += dict;
    return out;
}

struct Parsed {
    std::string descr;
    std::vector<std::size_t> shape;
    std::size_t data_offset = 0;
};

inline Parsed parse_header(const std::string& bytes, const std::string& origin) {
    if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0)
        throw io_error("not an NPY file: " + origin);
    if (bytes[6] != '\x01' || bytes[7] != '\x00')
        throw io_error("unsupported NPY version in " + origin);
    const std::size_t hlen = static_cast<unsigned char>(bytes[8]) |
                             (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    if (bytes.size() < 10 + hlen) throw io_error("truncated NPY header: " + origin);
    const std::string dict = bytes.substr(10, hlen);

    Parsed p;
    p.data_offset = 10 + hlen;
    auto find_value = [&](const std::string& key) {
        const auto kpos = dict.find("'" + key + "'");
        if (kpos == std::string::npos) throw io_error("NPY header missing " + key + ": " + origin);
        auto colon = dict.find(':', kpos);
        return dict.substr(colon + 1);
    };
    {
        const std::string v = find_value("descr");
        const auto q0 = v.find('\'');
        const auto q1 = v.find('\'', q0 + 1);
        p.descr = v.substr(q0 + 1, q1 - q0 - 1);
    }
    if (find_value("fortran_order").find("False") == std::string::npos)
        throw io_error("fortran-order NPY not supported: " + origin);
    {
        const std::string v = find_value("shape");
        const auto l = v.find('(');
        const auto r = v.find(')', l);
        std::string inner = v.substr(l + 1, r - l - 1);
        std::size_t pos = 0;
        while (pos < inner.size()) {
            while (pos < inner.size() && !std::isdigit(static_cast<unsigned char>(inner[pos])))
                ++pos;
            if (pos >= inner.size()) break;
            std::size_t end = pos;
            while (end < inner.size() && std::isdigit(static_cast<unsigned char>(inner[end])))
                ++end;
            p.shape.push_back(std::stoull(inner.substr(pos, end - pos)));
            pos = end;
        }
    }
    return p;
}

template <typename T>
std::string encode(const std::string& descr, const std::vector<std::size_t>& shape,
                   const T* data, std::size_t count) {
    std::string out = format_header(descr, shape);
    const std::size_t bytes = count * sizeof(T);
    const std::size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, data, bytes);
    return out;
}

}  // namespace npy

inline void save_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
                     const double* data, std::size_t count) {
    atomic_write_bytes(path, npy::encode("<f8", shape, data, count));
}

inline void save_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
                     const std::int32_t* data, std::size_t count) {
    atomic_write_bytes(path, npy::encode("<i4", shape, data, count));
}

inline nlohmann::json grid_meta(const Grid& g, const std::string& kind) {
    nlohmann::json j;
    j["kind"] = kind;
    j["dims"] = std::vector<int>(g.dims.begin(), g.dims.begin() + g.ndim);
    j["spacing"] = std::vector<double>(g.spacing.begin(), g.spacing.begin() + g.ndim);
    j["axes"] = g.ndim == 2 ? "xy" : "xyz";
    return j;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& npy_path) {
    auto p = npy_path;
    p.replace_extension(".json");
    return p;
}

inline void save_scalar_field(const std::filesystem::path& path, const ScalarField& f,
                              nlohmann::json extra_meta = nlohmann::json::object()) {
    std::vector<std::size_t> shape(f.grid.dims.begin(), f.grid.dims.begin() + f.grid.ndim);
    save_npy(path, shape, f.values.data(), f.values.size());
    nlohmann::json meta = grid_meta(f.grid, "scalar");
    meta.update(extra_meta);
    atomic_write_bytes(sidecar_path(path), meta.dump(2) + "\n");
}

inline void save_vector_field(const std::filesystem::path& path, const VectorField& f,
                              nlohmann::json extra_meta = nlohmann::json::object()) {
    std::vector<std::size_t> shape{static_cast<std::size_t>(f.grid.ndim)};
    for (int a = 0; a < f.grid.ndim; ++a) shape.push_back(f.grid.dims[a]);
    save_npy(path, shape, f.data.data(), f.data.size());
    nlohmann::json meta = grid_meta(f.grid, "vector");
    meta.update(extra_meta);
    atomic_write_bytes(sidecar_path(path), meta.dump(2) + "\n");
}

inline void save_int_field(const std::filesystem::path& path, const IntField& f,
                           nlohmann::json extra_meta = nlohmann::json::object()) {
    std::vector<std::size_t> shape(f.grid.dims.begin(), f.grid.dims.begin() + f.grid.ndim);
    save_npy(path, shape, f.values.data(), f.values.size());
    nlohmann::json meta = grid_meta(f.grid, "labels");
    meta.update(extra_meta);
    atomic_write_bytes(sidecar_path(path), meta.dump(2) + "\n");
}

namespace detail {

inline Grid grid_from(const std::vector<std::size_t>& dims, const std::filesystem::path& path) {
    if (dims.size() != 2 && dims.size() != 3)
        throw io_error("expected a 2D or 3D volume: " + path.string());
    Grid g;
    g.ndim = static_cast<int>(dims.size());
    for (std::size_t a = 0; a < dims.size(); ++a) {
        if (dims[a] < 2) throw io_error("axis too small in " + path.string());
        g.dims[a] = static_cast<int>(dims[a]);
    }
    const auto side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
        const auto meta = nlohmann::json::parse(read_bytes(side));
        if (meta.contains("spacing")) {
            const auto sp = meta["spacing"].get<std::vector<double>>();
            if (static_cast<int>(sp.size()) != g.ndim)
                throw io_error("sidecar spacing mismatch: " + side.string());
            for (int a = 0; a < g.ndim; ++a) {
                if (!(sp[a] > 0.0)) throw io_error("bad spacing in " + side.string());
                g.spacing[a] = sp[a];
            }
        }
    }
    return g;
}

template <typename T>
std::vector<T> decode_values(const std::string& bytes, const npy::Parsed& h, std::size_t count,
                             const std::filesystem::path& path) {
    std::vector<T> out(count);
    const char* src = bytes.data() + h.data_offset;
    const std::size_t avail = bytes.size() - h.data_offset;
    if (h.descr == "<f8") {
        if (avail < count * 8) throw io_error("truncated NPY data: " + path.string());
        std::vector<double> tmp(count);
        std::memcpy(tmp.data(), src, count * 8);
        for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<T>(tmp[i]);
    } else if (h.descr == "<f4") {
        if (avail < count * 4) throw io_error("truncated NPY data: " + path.string());
        std::vector<float> tmp(count);
        std::memcpy(tmp.data(), src, count * 4);
        for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<T>(tmp[i]);
    } else if (h.descr == "<i4") {
        if (avail < count * 4) throw io_error("truncated NPY data: " + path.string());
        std::vector<std::int32_t> tmp(count);
        std::memcpy(tmp.data(), src, count * 4);
        for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<T>(tmp[i]);
    } else {
        throw io_error("unsupported NPY dtype '" + h.descr + "' in " + path.string());
    }
    return out;
}

}  // namespace detail

inline ScalarField load_scalar_field(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    const auto h = npy::parse_header(bytes, path.string());
    ScalarField f;
    f.grid = detail::grid_from(h.shape, path);
    f.values = detail::decode_values<double>(bytes, h, f.grid.voxel_count(), path);
    return f;
}

inline VectorField load_vector_field(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    const auto h = npy::parse_header(bytes, path.string());
    if (h.shape.size() < 3 || h.shape[0] != h.shape.size() - 1)
        throw io_error("expected shape (d, dims...) for a vector field: " + path.string());
    VectorField f;
    f.grid = detail::grid_from({h.shape.begin() + 1, h.shape.end()}, path);
    f.data = detail::decode_values<double>(
        bytes, h, f.grid.voxel_count() * static_cast<std::size_t>(f.grid.ndim), path);
    return f;
}

inline IntField load_int_field(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    const auto h = npy::parse_header(bytes, path.string());
    IntField f;
    f.grid = detail::grid_from(h.shape, path);
    f.values = detail::decode_values<std::int32_t>(bytes, h, f.grid.voxel_count(), path);
    return f;
}

// ---------------------------------------------------------------------------
// Landmark CSV ("x,y[,z]" header, mm, one point per row)
// ---------------------------------------------------------------------------

inline void save_landmarks(const std::filesystem::path& path, const LandmarkSet& lms) {
    lms.validate();
    std::ostringstream out;
    out.precision(17);
    out << (lms.ndim == 2 ? "x,y" : "x,y,z") << "\n";
    for (const auto& p : lms.points_mm) {
        out << p[0] << "," << p[1];
        if (lms.ndim == 3) out << "," << p[2];
        out << "\n";
    }
    atomic_write_bytes(path, out.str());
}

inline LandmarkSet load_landmarks(const std::filesystem::path& path) {
    std::istringstream in(read_bytes(path));
    std::string line;
    if (!std::getline(in, line)) throw io_error("empty landmark file: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    LandmarkSet lms;
    if (line == "x,y")
        lms.ndim = 2;
    else if (line == "x,y,z")
        lms.ndim = 3;
    else
        throw io_error("bad landmark header '" + line + "' in " + path.string());
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::array<double, 3> p{0.0, 0.0, 0.0};
        std::istringstream row(line);
        std::string cell;
        for (int a = 0; a < lms.ndim; ++a) {
            if (!std::getline(row, cell, ','))
                throw io_error("short landmark row in " + path.string());
            try {
                p[a] = std::stod(cell);
            } catch (const std::exception&) {
                throw io_error("bad landmark value '" + cell + "' in " + path.string());
            }
        }
        lms.points_mm.push_back(p);
    }
    return lms;
}

}  // namespace svreg
