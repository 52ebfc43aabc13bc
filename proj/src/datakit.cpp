#include "rdg/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace rdg::datakit {

using nlohmann::json;

// ---------------------------------------------------------------- palette

ClassPalette::ClassPalette(std::vector<PaletteEntry> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) throw ValidationError("palette must have at least one class");
    std::set<std::uint32_t> seen;
    for (const auto& e : entries_) {
        if (e.name.empty()) throw ValidationError("palette entry with empty name");
        std::uint32_t key = (std::uint32_t(e.color[0]) << 16) | (std::uint32_t(e.color[1]) << 8) | e.color[2];
        if (!seen.insert(key).second)
            throw ValidationError("duplicate palette color for class " + e.name);
    }
}

std::vector<std::string> ClassPalette::class_names() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_) names.push_back(e.name);
    return names;
}

std::optional<int> ClassPalette::index_of(Color c) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].color == c) return static_cast<int>(i);
    return std::nullopt;
}

std::string ClassPalette::to_text() const {
    std::ostringstream out;
    for (const auto& e : entries_) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "#%02X%02X%02X", e.color[0], e.color[1], e.color[2]);
        out << e.name << " " << buf << "\n";
    }
    return out.str();
}

ClassPalette ClassPalette::from_text(const std::string& text) {
    std::vector<PaletteEntry> entries;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto sp = line.rfind(' ');
        if (sp == std::string::npos) throw FormatError("bad palette line: " + line);
        std::string name = line.substr(0, sp);
        std::string hex = line.substr(sp + 1);
        unsigned r, g, b;
        if (hex.size() != 7 || hex[0] != '#' ||
            std::sscanf(hex.c_str() + 1, "%02X%02X%02X", &r, &g, &b) != 3)
            throw FormatError("bad palette color: " + hex);
        entries.push_back({name, {std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)}});
    }
    return ClassPalette(std::move(entries));
}

void ClassPalette::save(const fs::path& path) const { write_file_atomic(path, to_text()); }

ClassPalette ClassPalette::load(const fs::path& path) { return from_text(read_file(path)); }

bool ClassPalette::operator==(const ClassPalette& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].name != other.entries_[i].name || entries_[i].color != other.entries_[i].color)
            return false;
    return true;
}

ClassPalette isprs_palette() {
    return ClassPalette({
        {"clutter_background", {255, 0, 0}},
        {"impervious_surface", {255, 255, 255}},
        {"car", {255, 255, 0}},
        {"tree", {0, 255, 0}},
        {"low_vegetation", {0, 255, 255}},
        {"building", {0, 0, 255}},
    });
}

// ---------------------------------------------------------------- domain spec

void DomainSpec::validate() const {
    if (name.empty()) throw ValidationError("domain name must be nonempty");
    if (!(gsd_cm > 0.0)) throw ValidationError("gsd_cm must be positive");
    if (tile_px <= 0) throw ValidationError("tile_px must be positive");
    if (tile_px % 64 != 0)
        throw ValidationError("tile_px must be divisible by 64, got " + std::to_string(tile_px));
    if (channels != 3) throw ValidationError("channels must be 3");
    if (palette.num_classes() < 1) throw ValidationError("palette must be nonempty");
}

namespace {

json palette_to_json(const ClassPalette& p) {
    json arr = json::array();
    for (const auto& e : p.entries()) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "#%02X%02X%02X", e.color[0], e.color[1], e.color[2]);
        arr.push_back({{"name", e.name}, {"color", std::string(buf)}});
    }
    return arr;
}

ClassPalette palette_from_json(const json& arr) {
    std::string text;
    for (const auto& e : arr)
        text += e.at("name").get<std::string>() + " " + e.at("color").get<std::string>() + "\n";
    return ClassPalette::from_text(text);
}

json domain_to_json_obj(const DomainSpec& d) {
    return json{{"name", d.name},       {"gsd_cm", d.gsd_cm},
                {"tile_px", d.tile_px}, {"channels", d.channels},
                {"band_order", d.band_order}, {"palette", palette_to_json(d.palette)}};
}

DomainSpec domain_from_json_obj(const json& j) {
    DomainSpec d;
    d.name = j.at("name").get<std::string>();
    d.gsd_cm = j.at("gsd_cm").get<double>();
    d.tile_px = j.at("tile_px").get<int>();
    d.channels = j.at("channels").get<int>();
    d.band_order = j.at("band_order").get<std::string>();
    d.palette = palette_from_json(j.at("palette"));
    return d;
}

}  // namespace

std::string DomainSpec::to_json() const { return domain_to_json_obj(*this).dump(2) + "\n"; }

DomainSpec DomainSpec::from_json(const std::string& text) {
    try {
        return domain_from_json_obj(json::parse(text));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad domain spec json: ") + e.what());
    }
}

// ---------------------------------------------------------------- scale check

ScaleReport check_scale_compat(const DomainSpec& src, const DomainSpec& tgt, double rel_tol) {
    src.validate();
    tgt.validate();
    if (rel_tol < 0.0) throw ValidationError("rel_tol must be non-negative");
    ScaleReport r;
    r.h_ratio = static_cast<double>(src.tile_px) / tgt.tile_px;
    r.r_ratio = tgt.gsd_cm / src.gsd_cm;
    r.rel_error = std::abs(r.h_ratio - r.r_ratio) / r.r_ratio;
    r.log_error = std::abs(std::log(r.h_ratio) - std::log(r.r_ratio));
    r.pass = r.log_error <= rel_tol;
    return r;
}

// ---------------------------------------------------------------- tiling

std::vector<TileCut> tile_raster(const torch::Tensor& raster, int tile_px, int stride_px) {
    if (raster.dim() != 2 && raster.dim() != 3)
        throw ValidationError("raster must be [H,W] or [H,W,C]");
    if (tile_px <= 0 || stride_px <= 0) throw ValidationError("tile_px and stride_px must be positive");
    const std::int64_t h = raster.size(0), w = raster.size(1);
    if (tile_px > h || tile_px > w)
        throw ValidationError("tile larger than raster (" + std::to_string(tile_px) + " > " +
                              std::to_string(std::min(h, w)) + "), no tiles produced");
    std::vector<TileCut> out;
    for (std::int64_t r = 0; r + tile_px <= h; r += stride_px)
        for (std::int64_t c = 0; c + tile_px <= w; c += stride_px) {
            TileCut cut;
            cut.tile = raster.slice(0, r, r + tile_px).slice(1, c, c + tile_px).contiguous();
            cut.row = r;
            cut.col = c;
            out.push_back(std::move(cut));
        }
    return out;
}

// ---------------------------------------------------------------- labels

torch::Tensor encode_labels(const torch::Tensor& label_image, const ClassPalette& palette,
                            std::optional<int> fallback_class) {
    if (label_image.dim() != 3 || label_image.size(2) != 3 || label_image.dtype() != torch::kUInt8)
        throw ValidationError("label image must be uint8 [H,W,3]");
    if (fallback_class && (*fallback_class < 0 || *fallback_class >= palette.num_classes()))
        throw ValidationError("fallback class out of range");
    const std::int64_t h = label_image.size(0), w = label_image.size(1);
    auto img = label_image.contiguous();
    auto acc = img.accessor<std::uint8_t, 3>();

    // color -> index lookup over the packed 24-bit key
    std::vector<std::int32_t> lut(1 << 24, -1);
    for (int i = 0; i < palette.num_classes(); ++i) {
        const auto& c = palette.entry(i).color;
        lut[(std::uint32_t(c[0]) << 16) | (std::uint32_t(c[1]) << 8) | c[2]] = i;
    }

    auto out = torch::empty({h, w}, torch::kInt32);
    auto oacc = out.accessor<std::int32_t, 2>();
    std::set<std::uint32_t> unknown;
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            std::uint32_t key = (std::uint32_t(acc[r][c][0]) << 16) |
                                (std::uint32_t(acc[r][c][1]) << 8) | acc[r][c][2];
            std::int32_t idx = lut[key];
            if (idx < 0) {
                if (fallback_class) {
                    idx = *fallback_class;
                } else {
                    unknown.insert(key);
                    idx = 0;
                }
            }
            oacc[r][c] = idx;
        }
    if (!unknown.empty()) {
        std::ostringstream msg;
        msg << "unknown label colors with no fallback:";
        int shown = 0;
        for (auto key : unknown) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), " #%06X", key);
            msg << buf;
            if (++shown == 8) {
                msg << " ...(" << unknown.size() << " total)";
                break;
            }
        }
        throw ValidationError(msg.str());
    }
    return out;
}

torch::Tensor decode_labels(const torch::Tensor& index_map, const ClassPalette& palette) {
    if (index_map.dim() != 2 || index_map.dtype() != torch::kInt32)
        throw ValidationError("index map must be int32 [H,W]");
    const std::int64_t h = index_map.size(0), w = index_map.size(1);
    auto in = index_map.contiguous();
    auto acc = in.accessor<std::int32_t, 2>();
    auto out = torch::empty({h, w, 3}, torch::kUInt8);
    auto oacc = out.accessor<std::uint8_t, 3>();
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            std::int32_t idx = acc[r][c];
            if (idx < 0 || idx >= palette.num_classes())
                throw ValidationError("index out of palette range: " + std::to_string(idx));
            const auto& col = palette.entry(idx).color;
            oacc[r][c][0] = col[0];
            oacc[r][c][1] = col[1];
            oacc[r][c][2] = col[2];
        }
    return out;
}

torch::Tensor resize_labels_nearest(const torch::Tensor& index_map, int target_px) {
    if (index_map.dim() != 2 || index_map.size(0) != index_map.size(1))
        throw ValidationError("index map must be square [H,H]");
    if (target_px <= 0) throw ValidationError("target_px must be positive");
    const std::int64_t in_px = index_map.size(0);
    auto in = index_map.contiguous();
    auto out = torch::empty({target_px, target_px}, index_map.dtype());
    // same source-index convention as stride-style nearest: src = floor(dst*in/out)
    std::vector<std::int64_t> src(target_px);
    for (int i = 0; i < target_px; ++i) src[i] = std::min<std::int64_t>(i * in_px / target_px, in_px - 1);
    AT_DISPATCH_INTEGRAL_TYPES(index_map.scalar_type(), "resize_labels_nearest", [&] {
        auto iacc = in.accessor<scalar_t, 2>();
        auto oacc = out.accessor<scalar_t, 2>();
        for (int r = 0; r < target_px; ++r)
            for (int c = 0; c < target_px; ++c) oacc[r][c] = iacc[src[r]][src[c]];
    });
    return out;
}

// ---------------------------------------------------------------- manifests

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw ValidationError("bad split");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw FormatError("unknown split: " + name);
}

std::vector<TileRecord> TileManifest::subset(Split s) const {
    std::vector<TileRecord> out;
    for (const auto& t : tiles)
        if (t.split == s) out.push_back(t);
    return out;
}

void save_manifest(const TileManifest& manifest, const fs::path& jsonl_path) {
    manifest.domain.validate();
    bool any_label = false, all_label = true;
    std::ostringstream out;
    for (const auto& t : manifest.tiles) {
        any_label |= !t.label_path.empty();
        all_label &= !t.label_path.empty();
        json j{{"image_path", t.image_path},
               {"label_path", t.label_path.empty() ? json(nullptr) : json(t.label_path)},
               {"raster_id", t.raster_id},
               {"row", t.row},
               {"col", t.col},
               {"split", split_name(t.split)}};
        out << j.dump() << "\n";
    }
    if (any_label && !all_label)
        throw ValidationError("manifest mixes labeled and unlabeled tiles");
    write_file_atomic(jsonl_path, out.str());
    fs::path domain_path = jsonl_path;
    domain_path.replace_extension(".domain.json");
    write_file_atomic(domain_path, manifest.domain.to_json());
}

TileManifest load_manifest(const fs::path& jsonl_path) {
    TileManifest m;
    fs::path domain_path = jsonl_path;
    domain_path.replace_extension(".domain.json");
    m.domain = DomainSpec::from_json(read_file(domain_path));
    m.base_dir = jsonl_path.parent_path();
    std::istringstream in(read_file(jsonl_path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(std::string("bad manifest line: ") + e.what());
        }
        TileRecord t;
        t.image_path = j.at("image_path").get<std::string>();
        if (!j.at("label_path").is_null()) t.label_path = j.at("label_path").get<std::string>();
        t.raster_id = j.at("raster_id").get<std::string>();
        t.row = j.at("row").get<std::int64_t>();
        t.col = j.at("col").get<std::int64_t>();
        t.split = split_from_name(j.at("split").get<std::string>());
        m.tiles.push_back(std::move(t));
    }
    return m;
}

// ---------------------------------------------------------------- synthetic scenes

namespace {

// Deterministic helpers over mt19937_64; keeps tile bytes reproducible.
struct Rng {
    std::mt19937_64 engine;
    explicit Rng(std::uint64_t seed) : engine(seed) {}

    double uniform() {  // [0,1)
        return (engine() >> 11) * (1.0 / 9007199254740992.0);
    }
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
        return lo + static_cast<std::int64_t>(uniform() * (hi - lo + 1));
    }
    double gauss() {
        double u1 = std::max(uniform(), 1e-12), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
};

std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

void SyntheticSceneConfig::validate() const {
    source.validate();
    target.validate();
    auto report = check_scale_compat(source, target, rel_tol);
    if (!report.pass)
        throw ValidationError("synthetic domain pair fails the scale check: log_error=" +
                              std::to_string(report.log_error));
    if (source.palette.num_classes() != target.palette.num_classes())
        throw ValidationError("synthetic domains must share a class count");
    if (background_class < 0 || background_class >= source.palette.num_classes())
        throw ValidationError("background_class out of range");
    for (const auto& o : objects) {
        if (o.per_tile < 0) throw ValidationError("object density must be non-negative");
        bool found = false;
        for (const auto& e : source.palette.entries()) found |= e.name == o.class_name;
        if (!found) throw ValidationError("object class not in palette: " + o.class_name);
        for (const DomainSpec* d : {&source, &target}) {
            int l = object_px(o.length_cm, d->gsd_cm);
            int w = object_px(o.width_cm, d->gsd_cm);
            if (l > d->tile_px || w > d->tile_px)
                throw ValidationError("object " + o.class_name + " larger than tile in domain " +
                                      d->name);
        }
    }
}

int object_px(double metric_cm, double gsd_cm) {
    if (!(metric_cm > 0) || !(gsd_cm > 0)) throw ValidationError("metric size and gsd must be positive");
    return static_cast<int>(std::lround(metric_cm / gsd_cm));
}

RenderedTile render_synthetic_tile(const SyntheticSceneConfig& cfg, bool target_domain,
                                   std::uint64_t seed) {
    const DomainSpec& dom = target_domain ? cfg.target : cfg.source;
    const DomainStyle& style = target_domain ? cfg.target_style : cfg.source_style;
    const int n = dom.tile_px;
    Rng rng(seed);

    std::vector<double> img(static_cast<std::size_t>(n) * n * 3);
    std::vector<std::int32_t> lab(static_cast<std::size_t>(n) * n, cfg.background_class);
    for (std::int64_t i = 0; i < n * n; ++i)
        for (int ch = 0; ch < 3; ++ch)
            img[i * 3 + ch] = cfg.background_color[ch] + rng.gauss() * cfg.background_texture_sigma;

    for (const auto& obj : cfg.objects) {
        int cls = -1;
        for (int i = 0; i < dom.palette.num_classes(); ++i)
            if (dom.palette.entry(i).name == obj.class_name) cls = i;
        if (cls < 0) throw ValidationError("object class not in palette: " + obj.class_name);
        int count = static_cast<int>(obj.per_tile);
        if (rng.uniform() < obj.per_tile - count) ++count;
        for (int inst = 0; inst < count; ++inst) {
            int len = std::max(1, object_px(obj.length_cm, dom.gsd_cm));
            int wid = std::max(1, object_px(obj.width_cm, dom.gsd_cm));
            if (rng.uniform() < 0.5) std::swap(len, wid);
            std::int64_t r0 = rng.uniform_int(0, n - len);
            std::int64_t c0 = rng.uniform_int(0, n - wid);
            for (std::int64_t r = r0; r < r0 + len; ++r)
                for (std::int64_t c = c0; c < c0 + wid; ++c) {
                    std::size_t p = static_cast<std::size_t>(r) * n + c;
                    lab[p] = cls;
                    for (int ch = 0; ch < 3; ++ch)
                        img[p * 3 + ch] = obj.color[ch] + rng.gauss() * obj.texture_sigma;
                }
        }
    }

    RenderedTile out;
    out.image = torch::empty({n, n, 3}, torch::kUInt8);
    out.labels = torch::empty({n, n}, torch::kInt32);
    auto iacc = out.image.accessor<std::uint8_t, 3>();
    auto lacc = out.labels.accessor<std::int32_t, 2>();
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t c = 0; c < n; ++c) {
            std::size_t p = static_cast<std::size_t>(r) * n + c;
            for (int ch = 0; ch < 3; ++ch) {
                double v = style.gain[ch] * img[p * 3 + ch] + style.offset[ch] +
                           rng.gauss() * style.noise_sigma;
                iacc[r][c][ch] = clamp_u8(v);
            }
            lacc[r][c] = lab[p];
        }
    return out;
}

namespace {

TileManifest render_domain(const SyntheticSceneConfig& cfg, bool target_domain,
                           const fs::path& dom_dir) {
    const DomainSpec& dom = target_domain ? cfg.target : cfg.source;
    const SplitCounts& counts = target_domain ? cfg.target_counts : cfg.source_counts;
    fs::create_directories(dom_dir / "images");
    fs::create_directories(dom_dir / "labels");

    TileManifest m;
    m.domain = dom;
    m.base_dir = dom_dir;
    const std::uint64_t dom_tag = target_domain ? 0x746774ull : 0x737263ull;
    int rendered = 0;
    for (Split split : {Split::train, Split::val, Split::test}) {
        int count = split == Split::train ? counts.train : split == Split::val ? counts.val : counts.test;
        for (int i = 0; i < count; ++i, ++rendered) {
            std::uint64_t seed =
                derive_seed(cfg.seed, dom_tag * 1000003ull + static_cast<std::uint64_t>(split) * 65537ull + i);
            RenderedTile tile = render_synthetic_tile(cfg, target_domain, seed);
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04d.png", split_name(split).c_str(), i);
            std::string image_rel = std::string("images/") + name;
            std::string label_rel = std::string("labels/") + name;
            save_png(dom_dir / image_rel, tile.image);
            save_png(dom_dir / label_rel, decode_labels(tile.labels, dom.palette));
            TileRecord rec;
            rec.image_path = image_rel;
            rec.label_path = label_rel;
            rec.raster_id = "synthetic:" + dom.name + "/" + split_name(split) + "/" + std::to_string(i);
            rec.row = 0;
            rec.col = 0;
            rec.split = split;
            m.tiles.push_back(std::move(rec));
        }
    }
    save_manifest(m, dom_dir / "manifest.jsonl");
    dom.palette.save(dom_dir / "palette.txt");
    return m;
}

}  // namespace

std::pair<TileManifest, TileManifest> generate_synthetic_pair(const SyntheticSceneConfig& cfg,
                                                              const fs::path& out_dir) {
    cfg.validate();
    TileManifest src = render_domain(cfg, false, out_dir / "source");
    TileManifest tgt = render_domain(cfg, true, out_dir / "target");
    return {std::move(src), std::move(tgt)};
}

SyntheticSceneConfig default_synthetic_config() {
    SyntheticSceneConfig cfg;
    cfg.source.name = "synth_src";
    cfg.source.gsd_cm = 36.0;
    cfg.source.tile_px = 128;
    cfg.source.band_order = "IRRG";
    cfg.source.palette = isprs_palette();
    cfg.target.name = "synth_tgt";
    cfg.target.gsd_cm = 72.0;
    cfg.target.tile_px = 64;
    cfg.target.band_order = "IRRG";
    cfg.target.palette = isprs_palette();

    cfg.source_style = {{1.05, 0.92, 0.88}, {10.0, -6.0, -12.0}, 4.0};
    cfg.target_style = {{0.82, 1.08, 1.06}, {-14.0, 8.0, 12.0}, 6.0};

    cfg.objects = {
        {"low_vegetation", 2160.0, 1800.0, 2.0, {58.0, 132.0, 56.0}, 16.0},
        {"building", 1800.0, 1296.0, 1.5, {172.0, 78.0, 64.0}, 5.0},
        {"clutter_background", 360.0, 360.0, 1.0, {236.0, 70.0, 36.0}, 6.0},
        {"tree", 540.0, 540.0, 3.0, {26.0, 88.0, 34.0}, 10.0},
        {"car", 432.0, 180.0, 5.0, {224.0, 222.0, 232.0}, 3.0},
    };
    cfg.background_class = 1;  // impervious surface
    cfg.background_color = {96.0, 96.0, 96.0};
    cfg.background_texture_sigma = 3.0;
    cfg.source_counts = {24, 0, 0};
    cfg.target_counts = {24, 8, 24};
    cfg.rel_tol = 0.05;
    cfg.seed = 20220614;
    return cfg;
}

namespace {

json style_to_json(const DomainStyle& s) {
    return json{{"gain", s.gain}, {"offset", s.offset}, {"noise_sigma", s.noise_sigma}};
}

DomainStyle style_from_json(const json& j) {
    DomainStyle s;
    s.gain = j.at("gain").get<std::array<double, 3>>();
    s.offset = j.at("offset").get<std::array<double, 3>>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    return s;
}

json counts_to_json(const SplitCounts& c) {
    return json{{"train", c.train}, {"val", c.val}, {"test", c.test}};
}

SplitCounts counts_from_json(const json& j) {
    return {j.at("train").get<int>(), j.at("val").get<int>(), j.at("test").get<int>()};
}

}  // namespace

std::string SyntheticSceneConfig::to_json() const {
    json j;
    j["source"] = domain_to_json_obj(source);
    j["target"] = domain_to_json_obj(target);
    j["source_style"] = style_to_json(source_style);
    j["target_style"] = style_to_json(target_style);
    j["source_counts"] = counts_to_json(source_counts);
    j["target_counts"] = counts_to_json(target_counts);
    json objs = json::array();
    for (const auto& o : objects)
        objs.push_back({{"class_name", o.class_name},
                        {"length_cm", o.length_cm},
                        {"width_cm", o.width_cm},
                        {"per_tile", o.per_tile},
                        {"color", o.color},
                        {"texture_sigma", o.texture_sigma}});
    j["objects"] = objs;
    j["background_class"] = background_class;
    j["background_color"] = background_color;
    j["background_texture_sigma"] = background_texture_sigma;
    j["rel_tol"] = rel_tol;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

SyntheticSceneConfig SyntheticSceneConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad synthetic config json: ") + e.what());
    }
    try {
        SyntheticSceneConfig cfg;
        cfg.source = domain_from_json_obj(j.at("source"));
        cfg.target = domain_from_json_obj(j.at("target"));
        cfg.source_style = style_from_json(j.at("source_style"));
        cfg.target_style = style_from_json(j.at("target_style"));
        cfg.source_counts = counts_from_json(j.at("source_counts"));
        cfg.target_counts = counts_from_json(j.at("target_counts"));
        for (const auto& o : j.at("objects")) {
            ObjectSpec spec;
            spec.class_name = o.at("class_name").get<std::string>();
            spec.length_cm = o.at("length_cm").get<double>();
            spec.width_cm = o.at("width_cm").get<double>();
            spec.per_tile = o.at("per_tile").get<double>();
            spec.color = o.at("color").get<std::array<double, 3>>();
            spec.texture_sigma = o.at("texture_sigma").get<double>();
            cfg.objects.push_back(std::move(spec));
        }
        cfg.background_class = j.at("background_class").get<int>();
        cfg.background_color = j.at("background_color").get<std::array<double, 3>>();
        cfg.background_texture_sigma = j.at("background_texture_sigma").get<double>();
        cfg.rel_tol = j.at("rel_tol").get<double>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
        return cfg;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad synthetic config field: ") + e.what());
    }
}

// ---------------------------------------------------------------- tensor sets

TileTensorSet::TileTensorSet(TileManifest manifest, std::optional<Split> split)
    : manifest_(std::move(manifest)) {
    records_ = split ? manifest_.subset(*split) : manifest_.tiles;
    image_cache_.resize(records_.size());
    label_cache_.resize(records_.size());
}

bool TileTensorSet::has_labels() const {
    return !records_.empty() && !records_.front().label_path.empty();
}

torch::Tensor TileTensorSet::image(std::size_t i) const {
    auto& slot = image_cache_.at(i);
    if (!slot.defined()) slot = to_unit_range(load_png(manifest_.resolve(records_[i].image_path)));
    return slot;
}

torch::Tensor TileTensorSet::label(std::size_t i) const {
    auto& slot = label_cache_.at(i);
    if (!slot.defined()) {
        const auto& rec = records_.at(i);
        if (rec.label_path.empty()) throw ValidationError("tile has no label: " + rec.image_path);
        auto color = load_png(manifest_.resolve(rec.label_path));
        slot = encode_labels(color, manifest_.domain.palette).to(torch::kInt64);
    }
    return slot;
}

torch::Tensor TileTensorSet::image_batch(const std::vector<std::size_t>& idx) const {
    std::vector<torch::Tensor> items;
    items.reserve(idx.size());
    for (auto i : idx) items.push_back(image(i));
    return torch::stack(items);
}

torch::Tensor TileTensorSet::label_batch(const std::vector<std::size_t>& idx) const {
    std::vector<torch::Tensor> items;
    items.reserve(idx.size());
    for (auto i : idx) items.push_back(label(i));
    return torch::stack(items);
}

// ---------------------------------------------------------------- image I/O

torch::Tensor load_png(const fs::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw IoError("cannot read image: " + path.string());
    if (mat.depth() != CV_8U) throw FormatError("expected 8-bit image: " + path.string());
    if (mat.channels() == 3) {
        cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
    } else if (mat.channels() == 4) {
        cv::cvtColor(mat, mat, cv::COLOR_BGRA2RGB);
    } else if (mat.channels() != 1) {
        throw FormatError("unsupported channel count: " + std::to_string(mat.channels()));
    }
    auto t = torch::empty({mat.rows, mat.cols, mat.channels()}, torch::kUInt8);
    std::memcpy(t.data_ptr(), mat.data, static_cast<std::size_t>(mat.total()) * mat.channels());
    return t;
}

void save_png(const fs::path& path, const torch::Tensor& image) {
    torch::Tensor img = image;
    if (img.dim() == 2) img = img.unsqueeze(2);
    if (img.dim() != 3 || img.dtype() != torch::kUInt8 ||
        (img.size(2) != 1 && img.size(2) != 3))
        throw ValidationError("save_png expects uint8 [H,W], [H,W,1] or [H,W,3]");
    img = img.contiguous();
    cv::Mat mat(static_cast<int>(img.size(0)), static_cast<int>(img.size(1)),
                img.size(2) == 1 ? CV_8UC1 : CV_8UC3, img.data_ptr());
    cv::Mat to_write;  // fresh buffer: must not convert in place over the tensor's memory
    if (img.size(2) == 3) cv::cvtColor(mat, to_write, cv::COLOR_RGB2BGR);
    else to_write = mat;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), to_write))
        throw IoError("cannot write image: " + path.string());
}

torch::Tensor to_unit_range(const torch::Tensor& image_u8) {
    if (image_u8.dim() != 3 || image_u8.dtype() != torch::kUInt8)
        throw ValidationError("expected uint8 [H,W,C]");
    return image_u8.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0);
}

torch::Tensor from_unit_range(const torch::Tensor& image_f) {
    if (image_f.dim() != 3) throw ValidationError("expected float [C,H,W]");
    return image_f.clamp(-1.0, 1.0).add(1.0).mul(127.5).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
}

}  // namespace rdg::datakit
