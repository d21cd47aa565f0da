// On-disk dataset layout (manifest + RDHM rasters) and CSV helpers.
//
//   <dir>/manifest.tsv             split slide_id x y label path
//   <dir>/slides.tsv               slide_id split seed lesion_count
//   <dir>/slides/<id>.image.rdhm   slide pixels (u8, 3 channels)
//   <dir>/slides/<id>.mask.rdhm    lesion mask (u8, 1 channel)
//   <dir>/patches/<split>/<i>.rdhm patch pixels
#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fwrd/raster.hpp"
#include "fwrd/slide.hpp"

namespace fwrd {

namespace fs = std::filesystem;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal form.
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline double parse_double_field(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) throw IoError("bad number '" + s + "'");
    return v;
}

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, sep);) out.push_back(f);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

/// Reads a delimited table, skipping the header line (or '#' comment lines).
inline std::vector<std::vector<std::string>> read_table(const std::string& path, char sep, bool skip_header) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    bool first = true;
    for (std::string line; std::getline(f, line);) {
        if (line.empty() || line[0] == '#') continue;
        if (first && skip_header) {
            first = false;
            continue;
        }
        first = false;
        rows.push_back(split_fields(line, sep));
    }
    return rows;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : f_(path, std::ios::trunc) {
        if (!f_) throw IoError("cannot write " + path);
        row(header);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) f_ << (i ? "," : "") << cells[i];
        f_ << '\n';
    }

private:
    std::ofstream f_;
};

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw IoError("unknown split '" + s + "'");
}

inline std::string slide_image_path(const std::string& id) { return "slides/" + id + ".image.rdhm"; }
inline std::string slide_mask_path(const std::string& id) { return "slides/" + id + ".mask.rdhm"; }

inline void write_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "slides");
    std::ofstream slides(fs::path(dir) / "slides.tsv", std::ios::trunc);
    if (!slides) throw IoError("cannot write " + (fs::path(dir) / "slides.tsv").string());
    slides << "# slide_id\tsplit\tseed\tlesion_count\n";
    for (std::size_t i = 0; i < ds.slides.size(); ++i) {
        const auto& s = ds.slides[i];
        slides << s.slide_id << '\t' << split_name(ds.slide_split[i]) << '\t' << s.seed << '\t' << s.lesion_count
               << '\n';
        write_image((fs::path(dir) / slide_image_path(s.slide_id)).string(), s.image);
        write_image((fs::path(dir) / slide_mask_path(s.slide_id)).string(), s.lesion_mask);
    }
    std::ofstream man(fs::path(dir) / "manifest.tsv", std::ios::trunc);
    if (!man) throw IoError("cannot write manifest in " + dir);
    man << "# split\tslide_id\tx\ty\tlabel\tpath\n";
    for (Split split : {Split::train, Split::val, Split::test}) {
        const auto& ps = ds.patches(split);
        fs::create_directories(fs::path(dir) / "patches" / split_name(split));
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const std::string rel = std::string("patches/") + split_name(split) + "/" + std::to_string(i) + ".rdhm";
            write_image((fs::path(dir) / rel).string(), ps[i].image);
            man << split_name(split) << '\t' << ps[i].slide_id << '\t' << ps[i].x << '\t' << ps[i].y << '\t'
                << ps[i].label << '\t' << rel << '\n';
        }
    }
}

/// Loads a dataset written by write_dataset; patch masks are re-cropped from
/// the slide masks.
inline Dataset read_dataset(const std::string& dir) {
    Dataset ds;
    for (const auto& r : read_table((fs::path(dir) / "slides.tsv").string(), '\t', false)) {
        if (r.size() != 4) throw IoError("slides.tsv: expected 4 fields per line");
        SyntheticSlide s;
        s.slide_id = r[0];
        s.seed = std::stoull(r[2]);
        s.lesion_count = std::stoull(r[3]);
        s.image = read_image((fs::path(dir) / slide_image_path(s.slide_id)).string());
        s.lesion_mask = read_image((fs::path(dir) / slide_mask_path(s.slide_id)).string());
        ds.slides.push_back(std::move(s));
        ds.slide_split.push_back(parse_split(r[1]));
    }
    for (const auto& r : read_table((fs::path(dir) / "manifest.tsv").string(), '\t', false)) {
        if (r.size() != 6) throw IoError("manifest.tsv: expected 6 fields per line");
        PatchRecord p;
        p.slide_id = r[1];
        p.x = std::stoull(r[2]);
        p.y = std::stoull(r[3]);
        p.label = std::stoi(r[4]);
        p.image = read_image((fs::path(dir) / r[5]).string());
        const SyntheticSlide* s = ds.find_slide(p.slide_id);
        if (!s) throw IoError("manifest references unknown slide " + p.slide_id);
        p.mask = s->lesion_mask.crop(p.y, p.x, p.image.height, p.image.width);
        const Split split = parse_split(r[0]);
        (split == Split::train ? ds.train : split == Split::val ? ds.val : ds.test).push_back(std::move(p));
    }
    return ds;
}

/// FNV-1a over a file's bytes.
inline std::uint64_t file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;
    for (char c; f.get(c);) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace fwrd
