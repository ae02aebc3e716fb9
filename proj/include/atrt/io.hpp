#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "atrt/forward.hpp"
#include "atrt/grid.hpp"
#include "atrt/solve.hpp"

namespace atrt {

struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace io {

/// shortest round-trip decimal form of a double
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot open for writing: " + path);
    out << content;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// images: CSV is the source of truth, graymap for eyeballing only
// ---------------------------------------------------------------------------

/// header line "M,dx" then M rows of M comma-separated values
inline void write_image_csv(const std::string& path, const Image& img) {
    std::string out;
    out += std::to_string(img.grid.m) + "," + fmt(img.grid.dx) + "\n";
    for (int r = 0; r < img.grid.m; ++r) {
        for (int c = 0; c < img.grid.m; ++c) {
            if (c) out += ",";
            out += fmt(img.at(r, c));
        }
        out += "\n";
    }
    write_text(path, out);
}

inline Image read_image_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open image: " + path);
    std::string line;
    if (!std::getline(in, line)) throw validation_error("empty image file: " + path);
    int m = 0;
    double dx = 0.0;
    if (std::sscanf(line.c_str(), "%d,%lf", &m, &dx) != 2 || m <= 0 || !(dx > 0))
        throw validation_error("bad image header in " + path);
    Image img(PixelGrid(m, dx), 0.0);
    for (int r = 0; r < m; ++r) {
        if (!std::getline(in, line)) throw validation_error("truncated image file: " + path);
        std::istringstream ss(line);
        std::string tok;
        for (int c = 0; c < m; ++c) {
            if (!std::getline(ss, tok, ',')) throw validation_error("short image row in " + path);
            img.at(r, c) = std::stod(tok);
        }
    }
    return img;
}

/// binary 16-bit portable graymap, values linearly quantised over [lo, hi]
inline void write_image_pgm(const std::string& path, const Image& img) {
    double lo = img.values.empty() ? 0.0 : img.values[0];
    double hi = lo;
    for (double v : img.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::string out = "P5\n# min=" + fmt(lo) + " max=" + fmt(hi) + "\n" + std::to_string(img.grid.m) +
                      " " + std::to_string(img.grid.m) + "\n65535\n";
    out.reserve(out.size() + img.values.size() * 2);
    for (double v : img.values) {
        const unsigned q = static_cast<unsigned>(65535.0 * (v - lo) / span + 0.5);
        out.push_back(static_cast<char>((q >> 8) & 0xff));
        out.push_back(static_cast<char>(q & 0xff));
    }
    write_text(path, out);
}

// ---------------------------------------------------------------------------
// sinograms: header `s,omega,value`, one row per ray in geometry order
// ---------------------------------------------------------------------------

inline void write_sinogram_csv(const std::string& path, const Sinogram& sino) {
    std::string out = "s,omega,value\n";
    for (size_t i = 0; i < sino.d.size(); ++i) {
        const Ray ray = sino.geometry.ray(i);
        out += fmt(ray.s) + "," + fmt(ray.omega) + "," + fmt(sino.d[i]) + "\n";
    }
    write_text(path, out);
}

inline Sinogram read_sinogram_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open sinogram: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "s,omega,value")
        throw validation_error("bad sinogram header in " + path);
    std::vector<double> ss, ws, vs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double s, w, v;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &s, &w, &v) != 3)
            throw validation_error("bad sinogram row in " + path);
        ss.push_back(s);
        ws.push_back(w);
        vs.push_back(v);
    }
    if (vs.empty()) throw validation_error("empty sinogram: " + path);
    // recover the angle-major product structure
    Sinogram sino;
    size_t n_off = 1;
    while (n_off < ws.size() && ws[n_off] == ws[0]) ++n_off;
    if (ws.size() % n_off != 0) throw validation_error("sinogram is not angle-major in " + path);
    const size_t n_ang = ws.size() / n_off;
    sino.geometry.offsets.assign(ss.begin(), ss.begin() + static_cast<long>(n_off));
    for (size_t a = 0; a < n_ang; ++a) {
        sino.geometry.angles.push_back(ws[a * n_off]);
        for (size_t o = 0; o < n_off; ++o) {
            const size_t i = a * n_off + o;
            if (ws[i] != sino.geometry.angles[a] || ss[i] != sino.geometry.offsets[o])
                throw validation_error("sinogram is not a stored angle/offset product in " + path);
        }
    }
    sino.d = std::move(vs);
    return sino;
}

// ---------------------------------------------------------------------------
// convergence history / scans / boundaries
// ---------------------------------------------------------------------------

inline std::string history_csv(const std::vector<ReconHistoryRow>& rows) {
    std::string out = "k,objective,r,s,beta,mb_proportion,delta_a,delta_f\n";
    for (const auto& h : rows) {
        out += std::to_string(h.k) + "," + fmt(h.objective) + "," + fmt(h.r) + "," + fmt(h.s_res) +
               "," + fmt(h.beta) + "," + fmt(h.mb_proportion) + "," + fmt(h.delta_a) + "," +
               fmt(h.delta_f) + "\n";
    }
    return out;
}

inline std::string scan_csv(const Vec& offsets, const Vec& values) {
    std::string out = "offset,value\n";
    for (size_t i = 0; i < offsets.size(); ++i) out += fmt(offsets[i]) + "," + fmt(values[i]) + "\n";
    return out;
}

inline std::string boundaries_csv(const std::vector<std::vector<Point2>>& sets) {
    std::string out = "set_index,x,y\n";
    for (size_t j = 0; j < sets.size(); ++j)
        for (const Point2& p : sets[j])
            out += std::to_string(j) + "," + fmt(p.x) + "," + fmt(p.y) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// flat key = value configuration with [section] headers
// ---------------------------------------------------------------------------

using ConfigMap = std::map<std::string, std::string>;  // "section.key" -> value

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline ConfigMap parse_config(const std::string& text) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw validation_error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty()) throw validation_error("config line " + std::to_string(lineno) + ": empty key");
        cfg[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
}

inline ConfigMap load_config(const std::string& path) { return parse_config(read_text(path)); }

}  // namespace io

}  // namespace atrt
