#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hcost/geometry.hpp"
#include "hcost/rng.hpp"

namespace hcost {

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Subset { ZT_WO_D, ZT_W_D, ST_WO_D, ST_W_D, MT };

const char* subset_name(Subset s);
Subset subset_from_name(const std::string& name);
inline constexpr int kSubsetCount = 5;

// Fixed language over 12 object classes and 4 colors plus relation words.
class Vocabulary {
public:
    Vocabulary();

    static const Vocabulary& instance();

    std::size_t size() const { return words_.size(); }
    const std::string& word(std::size_t id) const;
    std::size_t id(const std::string& word) const;
    const std::vector<std::string>& words() const { return words_; }

    std::size_t n_classes() const { return class_names_.size(); }
    std::size_t n_attributes() const { return color_names_.size(); }
    const std::string& class_name(std::size_t c) const { return class_names_[c]; }
    const std::string& class_plural(std::size_t c) const { return class_plurals_[c]; }
    const std::string& color_name(std::size_t a) const { return color_names_[a]; }
    // Base point color for a (class, attribute) pair, before jitter.
    std::array<double, 3> base_color(std::size_t class_id, std::size_t attr_id) const;

    // First class noun (singular or plural) in the token sequence, or -1.
    int referenced_class(const std::vector<std::size_t>& tokens) const;

    std::vector<std::size_t> tokenize(const std::string& text) const;

private:
    std::vector<std::string> words_;
    std::map<std::string, std::size_t> index_;
    std::vector<std::string> class_names_;
    std::vector<std::string> class_plurals_;
    std::vector<std::string> color_names_;
};

struct ObjectRecord {
    int id = 0;
    int class_id = 0;
    int attribute_id = 0;
    std::array<double, 3> centroid{0, 0, 0};
    std::array<double, 3> size{0, 0, 0};
    std::vector<double> points;  // n_p * 6, rows of [x y z r g b]

    Box3D box() const { return Box3D{centroid, size}; }
    bool operator==(const ObjectRecord&) const = default;
};

struct Query {
    std::string text;
    std::vector<std::size_t> tokens;
    std::vector<int> target_ids;  // sorted ascending
    Subset subset = Subset::ZT_WO_D;

    bool operator==(const Query&) const = default;
};

struct Scene {
    std::string scene_id;
    std::array<double, 3> room_extent{8, 8, 3};
    std::vector<ObjectRecord> objects;
    std::vector<Query> queries;

    const ObjectRecord* find_object(int id) const;
    bool operator==(const Scene&) const = default;
};

struct GenConfig {
    std::size_t scenes = 100;
    std::size_t min_objects = 4;
    std::size_t max_objects = 16;
    std::size_t queries_per_scene = 3;
    std::size_t points_per_object = 32;
    double noise_sigma = 0.02;
    std::array<double, 3> room_extent{8, 8, 3};
    // Requested subset proportions; normalized before use.
    std::map<std::string, double> mix = {{"zt_wo_d", 0.10},
                                         {"zt_w_d", 0.10},
                                         {"st_wo_d", 0.20},
                                         {"st_w_d", 0.30},
                                         {"mt", 0.30}};

    bool operator==(const GenConfig&) const = default;
};

struct Dataset {
    GenConfig config;
    std::uint64_t seed = 0;
    std::vector<Scene> scenes;

    std::size_t query_count() const;
    bool operator==(const Dataset&) const = default;
};

// ---- generation ------------------------------------------------------------

Subset classify_subset(const std::vector<int>& target_ids, int referenced_class,
                       const Scene& scene);

// n_p x 6 point sample for one object; geometry from the record, colors from
// the vocabulary palette.
std::vector<double> sample_points(const ObjectRecord& obj, std::size_t n_p,
                                  double noise_sigma, Rng& rng);

struct RenderedQuery {
    std::string text;
    std::vector<std::size_t> tokens;
    std::vector<int> target_ids;
};

// Template ids 0..7: bare singular, bare plural, attribute singular,
// attribute plural, nearest, farthest, side (left/right), depth (behind/front).
inline constexpr int kTemplateCount = 8;

struct TemplateSlots {
    int subject_class = 0;
    int attribute = -1;     // attribute templates
    int anchor_id = -1;     // relational templates: anchor object id
    int direction = 0;      // side: 0 left / 1 right; depth: 0 behind / 1 front
};

// Evaluates the template's predicate against scene ground truth; nullopt is
// the resample signal for an unsatisfiable binding.
std::optional<RenderedQuery> render_query(int template_id, const TemplateSlots& slots,
                                          const Scene& scene);

Scene generate_scene(const GenConfig& config, std::uint64_t scene_seed,
                     std::size_t scene_index,
                     std::array<std::size_t, kSubsetCount>& subset_counts,
                     std::size_t& queries_so_far);

Dataset generate_dataset(const GenConfig& config, std::uint64_t seed);

// ---- persistence -----------------------------------------------------------

// One scene per line (JSON), plus "<path>.header.json" with vocabulary and config.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

std::string gen_config_to_json(const GenConfig& c);
GenConfig gen_config_from_json(const std::string& text);

// FNV-1a over the dataset file bytes; checkpoint fingerprint.
std::uint64_t file_fingerprint(const std::string& path);

}  // namespace hcost
