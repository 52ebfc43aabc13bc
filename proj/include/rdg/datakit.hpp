#ifndef RDG_DATAKIT_HPP
#define RDG_DATAKIT_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rdg/common.hpp"

namespace rdg::datakit {

using Color = std::array<std::uint8_t, 3>;  // RGB

struct PaletteEntry {
    std::string name;
    Color color;
};

// Ordered class palette; the position in `entries` is the class index.
class ClassPalette {
public:
    ClassPalette() = default;
    explicit ClassPalette(std::vector<PaletteEntry> entries);

    int num_classes() const { return static_cast<int>(entries_.size()); }
    const std::vector<PaletteEntry>& entries() const { return entries_; }
    const PaletteEntry& entry(int index) const { return entries_.at(index); }
    std::vector<std::string> class_names() const;

    // Returns the class index for a color, or nullopt when unlisted.
    std::optional<int> index_of(Color c) const;

    std::string to_text() const;                      // "name #RRGGBB" per line
    static ClassPalette from_text(const std::string& text);
    void save(const fs::path& path) const;
    static ClassPalette load(const fs::path& path);

    bool operator==(const ClassPalette& other) const;

private:
    std::vector<PaletteEntry> entries_;
};

// The 6-class ISPRS convention in the class order of the results tables.
ClassPalette isprs_palette();

struct DomainSpec {
    std::string name;
    double gsd_cm = 0.0;    // ground sample distance, cm per pixel
    int tile_px = 0;        // square tile side
    int channels = 3;
    std::string band_order = "IRRG";
    ClassPalette palette;

    // Throws ValidationError on any violated invariant.
    void validate() const;

    std::string to_json() const;
    static DomainSpec from_json(const std::string& text);
};

struct ScaleReport {
    double h_ratio = 0.0;    // src.tile_px / tgt.tile_px
    double r_ratio = 0.0;    // tgt.gsd_cm / src.gsd_cm
    double rel_error = 0.0;  // |h_ratio - r_ratio| / r_ratio
    double log_error = 0.0;  // |log h_ratio - log r_ratio|, symmetric in the pair
    bool pass = false;
};

// Scale-compatibility check between a source/target pair; the pass verdict
// uses the symmetric log form.
ScaleReport check_scale_compat(const DomainSpec& src, const DomainSpec& tgt, double rel_tol);

struct TileCut {
    torch::Tensor tile;  // same dtype/layout as the raster, square tile_px side
    std::int64_t row = 0;
    std::int64_t col = 0;
};

// Enumerates row-major tile origins {0, stride, 2*stride, ...} wholly inside
// the raster. Raster layout is [H,W] or [H,W,C].
std::vector<TileCut> tile_raster(const torch::Tensor& raster, int tile_px, int stride_px);

// Color label image [H,W,3] (uint8) -> index map [H,W] (int32). Unknown colors
// raise unless a fallback class is given.
torch::Tensor encode_labels(const torch::Tensor& label_image, const ClassPalette& palette,
                            std::optional<int> fallback_class = std::nullopt);

// Index map [H,W] (int32) -> color image [H,W,3] (uint8).
torch::Tensor decode_labels(const torch::Tensor& index_map, const ClassPalette& palette);

// Nearest-neighbor resize of a square index map; never invents class indices.
torch::Tensor resize_labels_nearest(const torch::Tensor& index_map, int target_px);

enum class Split { train, val, test };
std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct TileRecord {
    std::string image_path;             // relative to the manifest directory
    std::string label_path;             // empty when the domain is unannotated
    std::string raster_id;
    std::int64_t row = 0;
    std::int64_t col = 0;
    Split split = Split::train;
};

struct TileManifest {
    DomainSpec domain;
    std::vector<TileRecord> tiles;
    fs::path base_dir;  // set on load/save; resolves relative tile paths

    fs::path resolve(const std::string& rel) const { return base_dir / rel; }
    std::vector<TileRecord> subset(Split s) const;
};

// Writes `<path>` as line-delimited records plus `<stem>.domain.json` beside it.
void save_manifest(const TileManifest& manifest, const fs::path& jsonl_path);
TileManifest load_manifest(const fs::path& jsonl_path);

// ---- synthetic two-domain scenes ----

struct ObjectSpec {
    std::string class_name;
    double length_cm = 0.0;
    double width_cm = 0.0;
    double per_tile = 0.0;          // mean instances per tile
    std::array<double, 3> color{};  // base RGB in 0..255, shared by both domains
    double texture_sigma = 0.0;     // per-pixel color jitter inside the object
};

struct DomainStyle {
    std::array<double, 3> gain{1.0, 1.0, 1.0};
    std::array<double, 3> offset{0.0, 0.0, 0.0};
    double noise_sigma = 0.0;
};

struct SplitCounts {
    int train = 0;
    int val = 0;
    int test = 0;
};

struct SyntheticSceneConfig {
    DomainSpec source;
    DomainSpec target;
    DomainStyle source_style;
    DomainStyle target_style;
    SplitCounts source_counts;
    SplitCounts target_counts;
    std::vector<ObjectSpec> objects;  // draw order; later entries paint on top
    int background_class = 1;
    std::array<double, 3> background_color{96.0, 96.0, 96.0};
    double background_texture_sigma = 0.0;
    double rel_tol = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    static SyntheticSceneConfig from_json(const std::string& text);
};

// Two-domain street-scene surrogate with the acceptance-scale defaults
// (128 px @ 36 cm source, 64 px @ 72 cm target).
SyntheticSceneConfig default_synthetic_config();

// Pixel side of a metric length at a given resolution.
int object_px(double metric_cm, double gsd_cm);

struct RenderedTile {
    torch::Tensor image;   // [H,W,3] uint8
    torch::Tensor labels;  // [H,W] int32
};

// Renders one tile of a domain; deterministic in `seed`.
RenderedTile render_synthetic_tile(const SyntheticSceneConfig& cfg, bool target_domain,
                                   std::uint64_t seed);

// Renders both domains to `<out_dir>/{source,target}` and returns the two
// manifests (images + color labels + manifest.jsonl per domain).
std::pair<TileManifest, TileManifest> generate_synthetic_pair(const SyntheticSceneConfig& cfg,
                                                              const fs::path& out_dir);

// In-memory tensor view over one split of a manifest: images as float [C,H,W]
// in [-1,1], labels as int64 [H,W]. Tiles are loaded lazily and cached.
class TileTensorSet {
public:
    TileTensorSet() = default;
    TileTensorSet(TileManifest manifest, std::optional<Split> split = std::nullopt);

    std::size_t size() const { return records_.size(); }
    bool has_labels() const;
    const DomainSpec& domain() const { return manifest_.domain; }
    const TileRecord& record(std::size_t i) const { return records_.at(i); }

    torch::Tensor image(std::size_t i) const;
    torch::Tensor label(std::size_t i) const;
    torch::Tensor image_batch(const std::vector<std::size_t>& idx) const;  // [B,C,H,W]
    torch::Tensor label_batch(const std::vector<std::size_t>& idx) const;  // [B,H,W]

private:
    TileManifest manifest_;
    std::vector<TileRecord> records_;
    mutable std::vector<torch::Tensor> image_cache_;
    mutable std::vector<torch::Tensor> label_cache_;
};

// ---- image file I/O ----

torch::Tensor load_png(const fs::path& path);                        // uint8 [H,W,C]
void save_png(const fs::path& path, const torch::Tensor& image);     // uint8 [H,W], [H,W,1] or [H,W,3]

// uint8 [H,W,C] <-> float [C,H,W] in [-1,1]
torch::Tensor to_unit_range(const torch::Tensor& image_u8);
torch::Tensor from_unit_range(const torch::Tensor& image_f);         // clamps, rounds

}  // namespace rdg::datakit

#endif
