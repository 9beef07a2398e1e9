#include "sdsr/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;

namespace sdsr {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void write_png(const std::string& path, const Tensor& img) {
    if (img.ndim() != 3 || (img.dim(0) != 3 && img.dim(0) != 1))
        throw ShapeError("write_png: expected [3,H,W] or [1,H,W], got " + shape_str(img.shape()));
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<png_byte> buf(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = img.at(0, c == 1 ? 0 : ch, y, x);
                buf[static_cast<std::size_t>((y * w + x) * 3 + ch)] =
                    static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error("cannot write PNG " + path + ": " + image.message);
}

Tensor read_png(const std::string& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error("cannot read PNG " + path + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
        throw std::runtime_error("cannot decode PNG " + path + ": " + image.message);
    const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
    Tensor out({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) out.at(0, ch, y, x) = buf[static_cast<std::size_t>((y * w + x) * 3 + ch)] / 255.0;
    return out;
}

namespace {

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("truncated file " + path);
    return v;
}

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

}  // namespace

void write_disparity(const std::string& path, const DisparityMap& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write disparity file " + path);
    out.write("SDSRDISP", 8);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(d.height));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(d.width));
    out.write(reinterpret_cast<const char*>(d.values.data()), static_cast<std::streamsize>(d.values.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(d.valid.data()), static_cast<std::streamsize>(d.valid.size()));
}

DisparityMap read_disparity(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open disparity file " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "SDSRDISP", 8) != 0) throw std::runtime_error("not a disparity file: " + path);
    DisparityMap d;
    d.height = static_cast<int>(take<std::uint32_t>(in, path));
    d.width = static_cast<int>(take<std::uint32_t>(in, path));
    const std::size_t n = static_cast<std::size_t>(d.height) * d.width;
    d.values.resize(n);
    d.valid.resize(n);
    in.read(reinterpret_cast<char*>(d.values.data()), static_cast<std::streamsize>(n * sizeof(float)));
    in.read(reinterpret_cast<char*>(d.valid.data()), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("truncated disparity file " + path);
    return d;
}

Tensor make_grid(const std::vector<std::vector<Tensor>>& rows) {
    constexpr int border = 2;
    int ch = 0, cw = 0, cols = 0;
    for (const auto& r : rows) {
        cols = std::max(cols, static_cast<int>(r.size()));
        for (const Tensor& t : r) {
            ch = std::max(ch, t.dim(1));
            cw = std::max(cw, t.dim(2));
        }
    }
    if (cols == 0) throw ShapeError("make_grid: no images");
    const int rn = static_cast<int>(rows.size());
    Tensor out({3, rn * (ch + border) + border, cols * (cw + border) + border}, 1.0);
    for (int r = 0; r < rn; ++r)
        for (int c = 0; c < static_cast<int>(rows[static_cast<std::size_t>(r)].size()); ++c) {
            const Tensor& t = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            const int oy = border + r * (ch + border), ox = border + c * (cw + border);
            for (int k = 0; k < 3; ++k)
                for (int y = 0; y < ch; ++y)
                    for (int x = 0; x < cw; ++x)
                        out.at(0, k, oy + y, ox + x) =
                            t.at(0, t.dim(0) == 1 ? 0 : k, y * t.dim(1) / ch, x * t.dim(2) / cw);
        }
    return out;
}

void save_checkpoint(const std::string& path, const std::string& component,
                     const std::vector<std::pair<std::string, Tensor>>& tensors, const nlohmann::json& meta) {
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write("SDSRCKPT", 8);
    put<std::uint32_t>(out, 1);
    put<std::uint64_t>(out, tensors.size());
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
        for (int d : t.shape()) put<std::int32_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.vec().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
        params.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float64"}, {"checksum", hex(checksum(t))}});
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path);
    nlohmann::json manifest = meta.is_object() ? meta : nlohmann::json::object();
    manifest["component"] = component;
    manifest["format_version"] = 1;
    manifest["params"] = params;
    std::ofstream mf(path + ".json");
    if (!mf) throw std::runtime_error("cannot write manifest " + path + ".json");
    mf << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "SDSRCKPT", 8) != 0) throw std::runtime_error("not a checkpoint: " + path);
    if (take<std::uint32_t>(in, path) != 1) throw std::runtime_error("unsupported checkpoint version: " + path);
    const auto count = take<std::uint64_t>(in, path);
    Checkpoint ck;
    std::vector<std::string> order;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name(take<std::uint32_t>(in, path), '\0');
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
        Shape shape(take<std::uint32_t>(in, path));
        for (int& d : shape) d = take<std::int32_t>(in, path);
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.vec().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) throw std::runtime_error("truncated checkpoint " + path);
        order.push_back(name);
        ck.tensors.emplace(name, std::move(t));
    }
    std::ifstream mf(path + ".json");
    if (!mf) throw std::runtime_error("missing manifest " + path + ".json");
    ck.manifest = nlohmann::json::parse(mf);
    ck.component = ck.manifest.at("component");
    const auto& params = ck.manifest.at("params");
    if (params.size() != ck.tensors.size()) throw std::runtime_error("manifest/tensor count mismatch in " + path);
    for (const auto& p : params) {
        const std::string name = p.at("name");
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) throw std::runtime_error("manifest lists unknown tensor " + name);
        if (p.at("shape").get<Shape>() != it->second.shape())
            throw std::runtime_error("shape mismatch for " + name + " in " + path);
        if (p.at("checksum").get<std::string>() != hex(checksum(it->second)))
            throw std::runtime_error("checksum mismatch for " + name + " in " + path);
    }
    return ck;
}

void save_dataset(const std::string& dir, const std::vector<StereoSample>& data) {
    fs::create_directories(dir);
    for (const StereoSample& s : data) {
        char id[16];
        std::snprintf(id, sizeof id, "%05d", s.id);
        const std::string base = (fs::path(dir) / id).string();
        write_png(base + "_hr_left.png", s.hr.left);
        write_png(base + "_hr_right.png", s.hr.right);
        write_png(base + "_lr_left.png", s.lr.left);
        write_png(base + "_lr_right.png", s.lr.right);
        write_disparity(base + "_disp.bin", s.disparity);
        nlohmann::json j{{"id", s.id},
                         {"tags", s.tags},
                         {"degradation", s.degradation.to_json()},
                         {"disparity", std::string(id) + "_disp.bin"},
                         {"hr_size", s.hr.left.dim(1)},
                         {"lr_size", s.lr.left.dim(1)}};
        std::ofstream(base + ".json") << j.dump(2) << '\n';
    }
}

std::vector<StereoSample> load_dataset(const std::string& dir) {
    std::vector<fs::path> sidecars;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json") sidecars.push_back(e.path());
    std::sort(sidecars.begin(), sidecars.end());
    if (sidecars.empty()) throw std::runtime_error("no dataset sidecars in " + dir);
    std::vector<StereoSample> out;
    for (const fs::path& p : sidecars) {
        std::ifstream in(p);
        const nlohmann::json j = nlohmann::json::parse(in);
        const std::string base = (p.parent_path() / p.stem()).string();
        StereoSample s;
        s.id = j.at("id");
        s.tags = j.at("tags").get<std::vector<int>>();
        s.degradation = DegradationParams::from_json(j.at("degradation"));
        s.hr = {read_png(base + "_hr_left.png"), read_png(base + "_hr_right.png")};
        s.lr = {read_png(base + "_lr_left.png"), read_png(base + "_lr_right.png")};
        s.disparity = read_disparity((p.parent_path() / j.at("disparity").get<std::string>()).string());
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::pair<std::string, StereoImagePair>> load_pair_dir(const std::string& dir) {
    std::vector<std::string> names;
    const std::string suffix = "_left.png";
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string f = e.path().filename().string();
        if (f.size() > suffix.size() && f.compare(f.size() - suffix.size(), suffix.size(), suffix) == 0)
            names.push_back(f.substr(0, f.size() - suffix.size()));
    }
    std::sort(names.begin(), names.end());
    if (names.empty()) throw std::runtime_error("no *_left.png files in " + dir);
    std::vector<std::pair<std::string, StereoImagePair>> out;
    for (const std::string& n : names) {
        const fs::path base = fs::path(dir) / n;
        out.emplace_back(n, StereoImagePair{read_png(base.string() + "_left.png"), read_png(base.string() + "_right.png")});
    }
    return out;
}

}  // namespace sdsr
