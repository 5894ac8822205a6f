#include "t2ue/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "t2ue/core/rng.hpp"
#include "t2ue/data/png_io.hpp"
#include "t2ue/models/text_encoder.hpp"  // split_words
#include "t2ue/protect/plan.hpp"        // dataset_sample_id

namespace fs = std::filesystem;

namespace t2ue {

void DatasetSpec::validate() const {
    if (image_size < 8) throw std::invalid_argument("dataset spec: image_size must be >= 8");
    if (shapes.size() < 2) throw std::invalid_argument("dataset spec: shapes must list at least 2 entries");
    if (colors.size() < 2) throw std::invalid_argument("dataset spec: colors must list at least 2 entries");
    if (caption_templates.empty()) throw std::invalid_argument("dataset spec: caption_templates must be non-empty");
    if (samples_per_class_train < 1) throw std::invalid_argument("dataset spec: samples_per_class_train must be >= 1");
    if (samples_per_class_test < 1) throw std::invalid_argument("dataset spec: samples_per_class_test must be >= 1");
    static const std::vector<std::string> known = {"circle", "square", "triangle", "cross"};
    for (const auto& s : shapes)
        if (std::find(known.begin(), known.end(), s) == known.end())
            throw std::invalid_argument("dataset spec: unknown shape '" + s + "'");
    for (const auto& t : caption_templates)
        if (t.find("{color}") == std::string::npos || t.find("{shape}") == std::string::npos)
            throw std::invalid_argument("dataset spec: caption_templates entries need {color} and {shape} slots");
}

nlohmann::json DatasetSpec::to_json() const {
    return {
        {"image_size", image_size},
        {"shapes", shapes},
        {"colors", colors},
        {"samples_per_class_train", samples_per_class_train},
        {"samples_per_class_test", samples_per_class_test},
        {"caption_templates", caption_templates},
        {"seed", seed},
    };
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
    DatasetSpec s;
    s.image_size = j.value("image_size", s.image_size);
    if (j.contains("shapes")) s.shapes = j.at("shapes").get<std::vector<std::string>>();
    if (j.contains("colors")) s.colors = j.at("colors").get<std::vector<std::string>>();
    s.samples_per_class_train = j.value("samples_per_class_train", s.samples_per_class_train);
    s.samples_per_class_test = j.value("samples_per_class_test", s.samples_per_class_test);
    if (j.contains("caption_templates")) s.caption_templates = j.at("caption_templates").get<std::vector<std::string>>();
    s.seed = j.value("seed", s.seed);
    return s;
}

std::string caption_for(int class_id, int template_id, const DatasetSpec& spec) {
    if (class_id < 0 || class_id >= spec.num_classes())
        throw std::out_of_range("caption_for: class_id " + std::to_string(class_id) + " out of range");
    if (template_id < 0 || template_id >= static_cast<int>(spec.caption_templates.size()))
        throw std::out_of_range("caption_for: template_id " + std::to_string(template_id) + " out of range");
    const std::string& color = spec.colors[static_cast<size_t>(class_id) / spec.shapes.size()];
    const std::string& shape = spec.shapes[static_cast<size_t>(class_id) % spec.shapes.size()];
    std::string out = spec.caption_templates[static_cast<size_t>(template_id)];
    auto sub = [&out](const std::string& slot, const std::string& word) {
        size_t pos = 0;
        while ((pos = out.find(slot, pos)) != std::string::npos) {
            out.replace(pos, slot.size(), word);
            pos += word.size();
        }
    };
    sub("{color}", color);
    sub("{shape}", shape);
    return out;
}

int parse_caption_class(const std::string& caption, const DatasetSpec& spec) {
    int color_idx = -1, shape_idx = -1;
    for (const auto& w : split_words(caption)) {
        for (size_t i = 0; i < spec.colors.size(); ++i)
            if (w == spec.colors[i]) color_idx = static_cast<int>(i);
        for (size_t i = 0; i < spec.shapes.size(); ++i)
            if (w == spec.shapes[i]) shape_idx = static_cast<int>(i);
    }
    if (color_idx < 0 || shape_idx < 0) return -1;
    return color_idx * static_cast<int>(spec.shapes.size()) + shape_idx;
}

namespace {

struct Rgb {
    double r, g, b;
};

Rgb base_color(const std::string& name) {
    if (name == "red") return {0.90, 0.12, 0.12};
    if (name == "green") return {0.10, 0.78, 0.16};
    if (name == "blue") return {0.15, 0.25, 0.90};
    if (name == "yellow") return {0.92, 0.86, 0.10};
    if (name == "magenta") return {0.85, 0.15, 0.85};
    if (name == "cyan") return {0.10, 0.80, 0.85};
    // fallback: deterministic hue from the name
    uint64_t h = hash_str(0x7061696e74ULL, name);
    auto chan = [&h]() {
        h = splitmix64(h);
        return 0.15 + 0.7 * (static_cast<double>(h >> 11) * 0x1.0p-53);
    };
    return {chan(), chan(), chan()};
}

struct ShapeParams {
    int shape_idx;
    double cx, cy, radius, angle;
};

bool inside_shape(const std::string& shape, double px, double py, const ShapeParams& p) {
    double dx = px - p.cx;
    double dy = py - p.cy;
    double ca = std::cos(-p.angle), sa = std::sin(-p.angle);
    double rx = dx * ca - dy * sa;
    double ry = dx * sa + dy * ca;
    double r = p.radius;
    if (shape == "circle") return rx * rx + ry * ry <= r * r;
    if (shape == "square") {
        double s = r * 0.88;
        return std::fabs(rx) <= s && std::fabs(ry) <= s;
    }
    if (shape == "triangle") {
        // equilateral, apex up, circumradius r
        double x1 = 0, y1 = -r;
        double x2 = r * 0.8660254037844386, y2 = r * 0.5;
        double x3 = -x2, y3 = y2;
        auto side = [&](double ax, double ay, double bx, double by) {
            return (bx - ax) * (ry - ay) - (by - ay) * (rx - ax);
        };
        double d1 = side(x1, y1, x2, y2), d2 = side(x2, y2, x3, y3), d3 = side(x3, y3, x1, y1);
        bool neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
        bool pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
        return !(neg && pos);
    }
    if (shape == "cross") {
        double arm = r * 0.38;
        return (std::fabs(rx) <= arm && std::fabs(ry) <= r) || (std::fabs(ry) <= arm && std::fabs(rx) <= r);
    }
    return false;
}

/// Renders one sample; all randomness comes from the provided stream. The
/// corpus is deliberately noisy (textured background, geometric and
/// photometric jitter) so class features take real training effort.
Tensor<float> render_sample(const DatasetSpec& spec, int class_id, Rng& rng, int* template_out) {
    const int n = spec.image_size;
    const std::string& color_name = spec.colors[static_cast<size_t>(class_id) / spec.shapes.size()];
    const std::string& shape_name = spec.shapes[static_cast<size_t>(class_id) % spec.shapes.size()];

    *template_out = rng.uniform_int(static_cast<int>(spec.caption_templates.size()));

    double bg = 0.32 + 0.36 * rng.uniform();
    double bg_tint[3] = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
    // global per-channel gain: absolute channel means stop identifying the
    // color class; the color must be read relative to the background
    double gain[3] = {0.72 + 0.46 * rng.uniform(), 0.72 + 0.46 * rng.uniform(), 0.72 + 0.46 * rng.uniform()};

    Rgb col = base_color(color_name);
    col.r = std::clamp(col.r + rng.uniform(-0.12, 0.12), 0.0, 1.0);
    col.g = std::clamp(col.g + rng.uniform(-0.12, 0.12), 0.0, 1.0);
    col.b = std::clamp(col.b + rng.uniform(-0.12, 0.12), 0.0, 1.0);

    ShapeParams p{};
    p.cx = n * (0.5 + 0.22 * (rng.uniform() * 2.0 - 1.0));
    p.cy = n * (0.5 + 0.22 * (rng.uniform() * 2.0 - 1.0));
    p.radius = n * 0.23 * (0.8 + 0.4 * rng.uniform());  // +/- 20% around a modest base size
    p.angle = (rng.uniform() * 2.0 - 1.0) * 0.785;      // +/- 45 degrees

    Tensor<float> img({3, n, n});
    const int hw = n * n;
    const int ss = 3;  // supersampling grid per axis
    const double texture_sigma = 0.045;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            int hit = 0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx) {
                    double px = x + (sx + 0.5) / ss;
                    double py = y + (sy + 0.5) / ss;
                    if (inside_shape(shape_name, px, py, p)) ++hit;
                }
            double cov = static_cast<double>(hit) / (ss * ss);
            double grain = texture_sigma * rng.normal();  // per-pixel texture
            double base[3] = {bg + bg_tint[0] + grain, bg + bg_tint[1] + grain, bg + bg_tint[2] + grain};
            for (int c = 0; c < 3; ++c) {
                double colv = c == 0 ? col.r : (c == 1 ? col.g : col.b);
                double v = (base[c] + cov * (colv - base[c])) * gain[c];
                img.data[c * hw + y * n + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return img;
}

}  // namespace

std::string dataset_sample_id(const std::string& split, int class_id, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_c%02d_%04d", split.c_str(), class_id, index);
    return buf;
}

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json ents = nlohmann::json::array();
    for (const auto& e : entries)
        ents.push_back({{"id", e.id},
                        {"file", e.file},
                        {"caption", e.caption},
                        {"class_id", e.class_id},
                        {"template_id", e.template_id}});
    nlohmann::json j = {{"spec", spec.to_json()}, {"split", split}, {"entries", ents}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.spec = DatasetSpec::from_json(j.at("spec"));
    m.split = j.at("split").get<std::string>();
    for (const auto& e : j.at("entries")) {
        ManifestEntry me;
        me.id = e.at("id").get<std::string>();
        me.file = e.at("file").get<std::string>();
        me.caption = e.at("caption").get<std::string>();
        me.class_id = e.at("class_id").get<int>();
        me.template_id = e.at("template_id").get<int>();
        m.entries.push_back(std::move(me));
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "spec" && it.key() != "split" && it.key() != "entries") m.extra[it.key()] = it.value();
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& dir) {
    std::ofstream os(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!os) throw std::runtime_error("dataset: cannot write manifest in " + dir);
    os << m.to_json().dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw std::runtime_error("dataset: cannot open manifest: " + manifest_path);
    nlohmann::json j = nlohmann::json::parse(is);
    DatasetManifest m = DatasetManifest::from_json(j);
    m.dir = fs::path(manifest_path).parent_path().string();
    return m;
}

DatasetManifest generate_dataset(const DatasetSpec& spec, const std::string& split, const std::string& out_dir) {
    spec.validate();
    if (split != "train" && split != "test") throw std::invalid_argument("dataset: split must be train or test");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("dataset: cannot create " + out_dir + ": " + ec.message());

    DatasetManifest m;
    m.spec = spec;
    m.split = split;
    m.dir = out_dir;
    const int per_class = spec.samples_per_class(split);
    for (int cls = 0; cls < spec.num_classes(); ++cls) {
        for (int i = 0; i < per_class; ++i) {
            uint64_t k = hash_u64(hash_u64(hash_str(spec.seed, split), static_cast<uint64_t>(cls)),
                                  static_cast<uint64_t>(i));
            Rng rng(k);
            int template_id = 0;
            Tensor<float> img = render_sample(spec, cls, rng, &template_id);
            ManifestEntry e;
            e.id = dataset_sample_id(split, cls, i);
            e.file = e.id + ".png";
            e.caption = caption_for(cls, template_id, spec);
            e.class_id = cls;
            e.template_id = template_id;
            write_png_rgb8((fs::path(out_dir) / e.file).string(), float_to_image(img));
            m.entries.push_back(std::move(e));
        }
    }
    save_manifest(m, out_dir);
    return m;
}

std::vector<CaptionedSample> load_dataset(const std::string& manifest_path) {
    DatasetManifest m = read_manifest(manifest_path);
    std::vector<CaptionedSample> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        fs::path p = fs::path(m.dir) / e.file;
        if (!fs::exists(p)) throw std::runtime_error("dataset: missing file for entry " + e.id + ": " + p.string());
        CaptionedSample s;
        s.id = e.id;
        s.image = image_to_float(read_png_rgb8(p.string()));
        s.caption = e.caption;
        s.class_id = e.class_id;
        s.template_id = e.template_id;
        out.push_back(std::move(s));
    }
    return out;
}

DatasetManifest export_dataset(const Dataset& data, const std::string& out_dir, const nlohmann::json& extra) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("dataset: cannot create " + out_dir + ": " + ec.message());
    DatasetManifest m;
    m.spec = data.spec;
    m.split = data.split;
    m.dir = out_dir;
    m.extra = extra;
    for (const auto& s : data.samples) {
        ManifestEntry e;
        e.id = s.id;
        e.file = s.id + ".png";
        e.caption = s.caption;
        e.class_id = s.class_id;
        e.template_id = s.template_id;
        write_png_rgb8((fs::path(out_dir) / e.file).string(), float_to_image(s.image));
        m.entries.push_back(std::move(e));
    }
    save_manifest(m, out_dir);
    return m;
}

Tensor<float> Dataset::image_batch(const std::vector<int>& idx) const {
    if (idx.empty()) throw std::invalid_argument("image_batch: empty index list");
    const int h = samples[0].image.dim(1), w = samples[0].image.dim(2);
    Tensor<float> b({static_cast<int>(idx.size()), 3, h, w});
    const int64_t per = static_cast<int64_t>(3) * h * w;
    for (size_t i = 0; i < idx.size(); ++i) {
        const auto& img = samples[static_cast<size_t>(idx[i])].image;
        for (int64_t j = 0; j < per; ++j) b.data[static_cast<int64_t>(i) * per + j] = img.data[j];
    }
    return b;
}

std::vector<std::string> Dataset::caption_batch(const std::vector<int>& idx) const {
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(samples[static_cast<size_t>(i)].caption);
    return out;
}

std::vector<int> Dataset::label_batch(const std::vector<int>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(samples[static_cast<size_t>(i)].class_id);
    return out;
}

Dataset Dataset::from_manifest(const std::string& manifest_path) {
    DatasetManifest m = read_manifest(manifest_path);
    Dataset d;
    d.spec = m.spec;
    d.split = m.split;
    d.samples = load_dataset(manifest_path);
    return d;
}

}  // namespace t2ue
