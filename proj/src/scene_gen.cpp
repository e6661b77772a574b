#include "hcost/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hcost {

using ordered_json = nlohmann::ordered_json;

namespace {
constexpr double kDeadZone = 0.1;   // meters; ambiguity margin for relations
constexpr double kNoiseClamp = 0.05;
}  // namespace

// ---- subsets ---------------------------------------------------------------

const char* subset_name(Subset s) {
    switch (s) {
        case Subset::ZT_WO_D: return "zt_wo_d";
        case Subset::ZT_W_D: return "zt_w_d";
        case Subset::ST_WO_D: return "st_wo_d";
        case Subset::ST_W_D: return "st_w_d";
        case Subset::MT: return "mt";
    }
    return "?";
}

Subset subset_from_name(const std::string& name) {
    for (int i = 0; i < kSubsetCount; ++i)
        if (name == subset_name(static_cast<Subset>(i))) return static_cast<Subset>(i);
    throw DataError("unknown subset label: " + name);
}

// ---- vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() {
    class_names_ = {"chair", "table", "sofa",    "bed",   "lamp", "desk",
                    "monitor", "plant", "cabinet", "sink", "stool", "basket"};
    for (const auto& c : class_names_) class_plurals_.push_back(c + "s");
    color_names_ = {"red", "green", "blue", "yellow"};

    std::vector<std::string> function_words = {"the",  "nearest", "farthest", "from",
                                               "left", "right",   "of",       "behind",
                                               "in",   "front"};
    for (const auto& w : function_words) words_.push_back(w);
    for (const auto& w : class_names_) words_.push_back(w);
    for (const auto& w : class_plurals_) words_.push_back(w);
    for (const auto& w : color_names_) words_.push_back(w);
    for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = i;
}

const Vocabulary& Vocabulary::instance() {
    static const Vocabulary vocab;
    return vocab;
}

const std::string& Vocabulary::word(std::size_t id) const {
    if (id >= words_.size()) throw DataError("token id out of vocabulary");
    return words_[id];
}

std::size_t Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) throw DataError("word not in vocabulary: " + word);
    return it->second;
}

std::array<double, 3> Vocabulary::base_color(std::size_t class_id,
                                             std::size_t attr_id) const {
    static const std::array<std::array<double, 3>, 4> palette = {
        {{0.85, 0.10, 0.10}, {0.10, 0.75, 0.15}, {0.10, 0.20, 0.85}, {0.85, 0.80, 0.10}}};
    const auto& c = palette[attr_id % palette.size()];
    const double t = static_cast<double>(class_id);
    // Per-class tint keeps classes separable in rgb alone.
    std::array<double, 3> tint = {std::fmod(t * 0.21 + 0.13, 1.0),
                                  std::fmod(t * 0.47 + 0.29, 1.0),
                                  std::fmod(t * 0.71 + 0.53, 1.0)};
    std::array<double, 3> out{};
    for (int k = 0; k < 3; ++k)
        out[k] = std::clamp(0.7 * c[k] + 0.3 * tint[k], 0.0, 1.0);
    return out;
}

int Vocabulary::referenced_class(const std::vector<std::size_t>& tokens) const {
    for (auto t : tokens) {
        const std::string& w = word(t);
        for (std::size_t c = 0; c < class_names_.size(); ++c)
            if (w == class_names_[c] || w == class_plurals_[c]) return static_cast<int>(c);
    }
    return -1;
}

std::vector<std::size_t> Vocabulary::tokenize(const std::string& text) const {
    std::vector<std::size_t> out;
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(id(w));
    return out;
}

// ---- scene helpers ---------------------------------------------------------

const ObjectRecord* Scene::find_object(int id) const {
    for (const auto& o : objects)
        if (o.id == id) return &o;
    return nullptr;
}

std::size_t Dataset::query_count() const {
    std::size_t n = 0;
    for (const auto& s : scenes) n += s.queries.size();
    return n;
}

Subset classify_subset(const std::vector<int>& target_ids, int referenced_class,
                       const Scene& scene) {
    bool distractor = false;
    for (const auto& o : scene.objects) {
        if (o.class_id != referenced_class) continue;
        if (std::find(target_ids.begin(), target_ids.end(), o.id) == target_ids.end())
            distractor = true;
    }
    if (target_ids.empty()) return distractor ? Subset::ZT_W_D : Subset::ZT_WO_D;
    if (target_ids.size() == 1) return distractor ? Subset::ST_W_D : Subset::ST_WO_D;
    return Subset::MT;
}

std::vector<double> sample_points(const ObjectRecord& obj, std::size_t n_p,
                                  double noise_sigma, Rng& rng) {
    if (n_p < 1) throw ConfigError("sample_points: need at least one point");
    const auto base = Vocabulary::instance().base_color(
        static_cast<std::size_t>(obj.class_id), static_cast<std::size_t>(obj.attribute_id));
    std::vector<double> pts;
    pts.reserve(n_p * 6);
    for (std::size_t i = 0; i < n_p; ++i) {
        for (int k = 0; k < 3; ++k) {
            const double lo = obj.centroid[k] - obj.size[k] / 2;
            const double hi = obj.centroid[k] + obj.size[k] / 2;
            double x = rng.uniform(lo, hi);
            if (noise_sigma > 0.0) {
                const double jitter =
                    std::clamp(rng.gaussian() * noise_sigma, -kNoiseClamp, kNoiseClamp);
                x += jitter;
            }
            pts.push_back(x);
        }
        for (int k = 0; k < 3; ++k)
            pts.push_back(std::clamp(base[k] + rng.gaussian() * 0.1, 0.0, 1.0));
    }
    return pts;
}

// ---- query templates -------------------------------------------------------

namespace {

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

std::vector<const ObjectRecord*> of_class(const Scene& scene, int class_id) {
    std::vector<const ObjectRecord*> out;
    for (const auto& o : scene.objects)
        if (o.class_id == class_id) out.push_back(&o);
    return out;
}

RenderedQuery finish(const std::string& text, std::vector<int> ids) {
    std::sort(ids.begin(), ids.end());
    return RenderedQuery{text, Vocabulary::instance().tokenize(text), std::move(ids)};
}

}  // namespace

std::optional<RenderedQuery> render_query(int template_id, const TemplateSlots& slots,
                                          const Scene& scene) {
    const auto& vocab = Vocabulary::instance();
    const int cls = slots.subject_class;
    if (cls < 0 || cls >= static_cast<int>(vocab.n_classes()))
        throw ConfigError("render_query: subject class out of range");
    const auto members = of_class(scene, cls);
    const std::string& sing = vocab.class_name(cls);
    const std::string& plur = vocab.class_plural(cls);

    switch (template_id) {
        case 0: {  // "the chair" — exactly one instance required
            if (members.size() != 1) return std::nullopt;
            return finish("the " + sing, {members[0]->id});
        }
        case 1: {  // "the chairs" — all instances (possibly none)
            std::vector<int> ids;
            for (auto* o : members) ids.push_back(o->id);
            return finish("the " + plur, std::move(ids));
        }
        case 2: {  // "the red chair" — exactly one color match required
            if (slots.attribute < 0) return std::nullopt;
            std::vector<int> ids;
            for (auto* o : members)
                if (o->attribute_id == slots.attribute) ids.push_back(o->id);
            if (ids.size() > 1) return std::nullopt;
            return finish("the " + vocab.color_name(slots.attribute) + " " + sing,
                          std::move(ids));
        }
        case 3: {  // "the red chairs" — all color matches (possibly none)
            if (slots.attribute < 0) return std::nullopt;
            std::vector<int> ids;
            for (auto* o : members)
                if (o->attribute_id == slots.attribute) ids.push_back(o->id);
            return finish("the " + vocab.color_name(slots.attribute) + " " + plur,
                          std::move(ids));
        }
        case 4:    // "the chair nearest the table"
        case 5: {  // "the chair farthest from the table"
            const ObjectRecord* anchor = scene.find_object(slots.anchor_id);
            if (!anchor || anchor->class_id == cls) return std::nullopt;
            if (of_class(scene, anchor->class_id).size() != 1) return std::nullopt;
            if (members.size() < 2) return std::nullopt;
            const bool nearest = template_id == 4;
            const ObjectRecord* best = nullptr;
            double best_d = 0.0;
            for (auto* o : members) {
                const double d = dist3(o->centroid, anchor->centroid);
                if (!best || (nearest ? d < best_d : d > best_d)) {
                    best = o;
                    best_d = d;
                }
            }
            // Reject ambiguous instances where the runner-up is within the dead zone.
            double second = nearest ? 1e18 : -1e18;
            for (auto* o : members) {
                if (o == best) continue;
                const double d = dist3(o->centroid, anchor->centroid);
                second = nearest ? std::min(second, d) : std::max(second, d);
            }
            if (std::abs(second - best_d) <= kDeadZone) return std::nullopt;
            const std::string& anchor_name = vocab.class_name(anchor->class_id);
            const std::string text =
                nearest ? "the " + sing + " nearest the " + anchor_name
                        : "the " + sing + " farthest from the " + anchor_name;
            return finish(text, {best->id});
        }
        case 6:    // "the chairs left|right of the table"
        case 7: {  // "the chairs behind|in front of the table"
            const ObjectRecord* anchor = scene.find_object(slots.anchor_id);
            if (!anchor || anchor->class_id == cls) return std::nullopt;
            if (of_class(scene, anchor->class_id).size() != 1) return std::nullopt;
            if (members.empty()) return std::nullopt;
            const int axis = template_id == 6 ? 0 : 1;
            // direction 0: smaller coordinate side, 1: larger coordinate side
            const double pivot = anchor->centroid[axis];
            std::vector<int> ids;
            for (auto* o : members) {
                const double delta = o->centroid[axis] - pivot;
                if (std::abs(delta) <= kDeadZone) return std::nullopt;  // ambiguous
                if ((slots.direction == 0 && delta < -kDeadZone) ||
                    (slots.direction == 1 && delta > kDeadZone))
                    ids.push_back(o->id);
            }
            const std::string& anchor_name = vocab.class_name(anchor->class_id);
            std::string rel;
            if (template_id == 6)
                rel = slots.direction == 0 ? "left of" : "right of";
            else
                rel = slots.direction == 0 ? "behind" : "in front of";
            return finish("the " + plur + " " + rel + " the " + anchor_name,
                          std::move(ids));
        }
        default:
            throw ConfigError("render_query: unknown template id " +
                              std::to_string(template_id));
    }
}

// ---- scene generation ------------------------------------------------------

namespace {

// Objects with boxes placed by rejection sampling (pairwise IoU < 0.1).
std::vector<ObjectRecord> place_objects(const GenConfig& config, Rng& rng) {
    const auto& vocab = Vocabulary::instance();
    const std::size_t n_obj = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(config.min_objects),
                        static_cast<std::int64_t>(config.max_objects)));

    // Class assignment: repeat an existing class with probability 0.45 so
    // every scene tends to carry duplicates, singletons, and absent classes.
    const std::size_t max_distinct = std::min<std::size_t>(9, vocab.n_classes() - 2);
    std::vector<int> classes;
    std::vector<int> distinct;
    for (std::size_t i = 0; i < n_obj; ++i) {
        if (!distinct.empty() && (distinct.size() >= max_distinct || rng.uniform() < 0.45)) {
            classes.push_back(distinct[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(distinct.size()) - 1))]);
        } else {
            int c;
            do {
                c = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(vocab.n_classes()) - 1));
            } while (std::find(distinct.begin(), distinct.end(), c) != distinct.end());
            distinct.push_back(c);
            classes.push_back(c);
        }
    }

    std::vector<ObjectRecord> objects;
    for (std::size_t i = 0; i < n_obj; ++i) {
        ObjectRecord obj;
        obj.id = static_cast<int>(i);
        obj.class_id = classes[i];
        obj.attribute_id = static_cast<int>(rng.uniform_int(0, 3));
        for (int attempt = 0; attempt < 200; ++attempt) {
            obj.size = {rng.uniform(0.4, 1.2), rng.uniform(0.4, 1.2), rng.uniform(0.3, 1.0)};
            for (int k = 0; k < 3; ++k) {
                const double half = obj.size[k] / 2;
                obj.centroid[k] = rng.uniform(half, config.room_extent[k] - half);
            }
            bool ok = true;
            for (const auto& other : objects)
                if (iou_aabb(obj.box(), other.box()) >= 0.1) {
                    ok = false;
                    break;
                }
            if (ok) break;
            if (attempt == 199)
                throw ConfigError("place_objects: could not place object without overlap");
        }
        objects.push_back(std::move(obj));
    }
    return objects;
}

// Subset with the largest deficit relative to the requested mix.
std::vector<Subset> subsets_by_deficit(const GenConfig& config,
                                       const std::array<std::size_t, kSubsetCount>& counts,
                                       std::size_t total) {
    double mix_sum = 0.0;
    for (const auto& [k, v] : config.mix) mix_sum += v;
    if (mix_sum <= 0.0) throw ConfigError("generate_dataset: subset mix sums to zero");
    std::array<double, kSubsetCount> want{};
    for (const auto& [k, v] : config.mix)
        want[static_cast<int>(subset_from_name(k))] = v / mix_sum;
    std::vector<Subset> order;
    for (int i = 0; i < kSubsetCount; ++i) order.push_back(static_cast<Subset>(i));
    std::array<double, kSubsetCount> deficit{};
    const double denom = static_cast<double>(total) + 1.0;
    for (int i = 0; i < kSubsetCount; ++i)
        deficit[i] = want[i] - static_cast<double>(counts[i]) / denom;
    std::stable_sort(order.begin(), order.end(), [&](Subset a, Subset b) {
        return deficit[static_cast<int>(a)] > deficit[static_cast<int>(b)];
    });
    // Drop subsets with zero requested share.
    std::erase_if(order, [&](Subset s) { return want[static_cast<int>(s)] <= 0.0; });
    return order;
}

std::optional<Query> try_make_query(Subset want, const Scene& scene, Rng& rng) {
    const auto& vocab = Vocabulary::instance();
    const int n_classes = static_cast<int>(vocab.n_classes());

    std::vector<int> present, absent, singletons, multiples;
    std::array<int, 32> count{};
    for (const auto& o : scene.objects) ++count[static_cast<std::size_t>(o.class_id)];
    for (int c = 0; c < n_classes; ++c) {
        if (count[static_cast<std::size_t>(c)] == 0) absent.push_back(c);
        else present.push_back(c);
        if (count[static_cast<std::size_t>(c)] == 1) singletons.push_back(c);
        if (count[static_cast<std::size_t>(c)] >= 2) multiples.push_back(c);
    }

    auto pick = [&](const std::vector<int>& v) -> int {
        return v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(v.size()) - 1))];
    };
    auto anchors_for = [&](int subject) {
        std::vector<int> ids;
        for (int c : singletons)
            if (c != subject)
                for (const auto& o : scene.objects)
                    if (o.class_id == c) ids.push_back(o.id);
        return ids;
    };

    for (int attempt = 0; attempt < 40; ++attempt) {
        TemplateSlots slots;
        int tmpl = -1;
        switch (want) {
            case Subset::ZT_WO_D: {
                if (absent.empty()) return std::nullopt;
                slots.subject_class = pick(absent);
                tmpl = 1;
                break;
            }
            case Subset::ZT_W_D: {
                if (present.empty()) return std::nullopt;
                slots.subject_class = pick(present);
                std::set<int> used;
                for (const auto& o : scene.objects)
                    if (o.class_id == slots.subject_class) used.insert(o.attribute_id);
                std::vector<int> unused;
                for (int a = 0; a < 4; ++a)
                    if (!used.count(a)) unused.push_back(a);
                if (unused.empty()) continue;
                slots.attribute = pick(unused);
                tmpl = rng.uniform() < 0.5 ? 2 : 3;
                break;
            }
            case Subset::ST_WO_D: {
                if (singletons.empty()) return std::nullopt;
                slots.subject_class = pick(singletons);
                if (rng.uniform() < 0.3) {
                    tmpl = 2;  // attribute singular on the lone instance
                    for (const auto& o : scene.objects)
                        if (o.class_id == slots.subject_class) slots.attribute = o.attribute_id;
                } else {
                    tmpl = 0;
                }
                break;
            }
            case Subset::ST_W_D: {
                if (multiples.empty()) return std::nullopt;
                slots.subject_class = pick(multiples);
                const double r = rng.uniform();
                if (r < 0.6) {
                    // unique color among class members
                    std::array<int, 4> per_color{};
                    std::array<int, 4> holder{};
                    for (const auto& o : scene.objects)
                        if (o.class_id == slots.subject_class) {
                            ++per_color[static_cast<std::size_t>(o.attribute_id)];
                            holder[static_cast<std::size_t>(o.attribute_id)] = o.id;
                        }
                    std::vector<int> unique;
                    for (int a = 0; a < 4; ++a)
                        if (per_color[static_cast<std::size_t>(a)] == 1) unique.push_back(a);
                    if (unique.empty()) continue;
                    slots.attribute = pick(unique);
                    tmpl = 2;
                } else if (r < 0.8) {
                    auto anchors = anchors_for(slots.subject_class);
                    if (anchors.empty()) continue;
                    slots.anchor_id = pick(anchors);
                    tmpl = rng.uniform() < 0.5 ? 4 : 5;
                } else {
                    auto anchors = anchors_for(slots.subject_class);
                    if (anchors.empty()) continue;
                    slots.anchor_id = pick(anchors);
                    slots.direction = static_cast<int>(rng.uniform_int(0, 1));
                    tmpl = rng.uniform() < 0.5 ? 6 : 7;
                }
                break;
            }
            case Subset::MT: {
                if (multiples.empty()) return std::nullopt;
                slots.subject_class = pick(multiples);
                const double r = rng.uniform();
                if (r < 0.5) {
                    tmpl = 1;
                } else if (r < 0.75) {
                    std::array<int, 4> per_color{};
                    for (const auto& o : scene.objects)
                        if (o.class_id == slots.subject_class)
                            ++per_color[static_cast<std::size_t>(o.attribute_id)];
                    std::vector<int> plural_colors;
                    for (int a = 0; a < 4; ++a)
                        if (per_color[static_cast<std::size_t>(a)] >= 2) plural_colors.push_back(a);
                    if (plural_colors.empty()) continue;
                    slots.attribute = pick(plural_colors);
                    tmpl = 3;
                } else {
                    auto anchors = anchors_for(slots.subject_class);
                    if (anchors.empty()) continue;
                    slots.anchor_id = pick(anchors);
                    slots.direction = static_cast<int>(rng.uniform_int(0, 1));
                    tmpl = rng.uniform() < 0.5 ? 6 : 7;
                }
                break;
            }
        }
        auto rendered = render_query(tmpl, slots, scene);
        if (!rendered) continue;
        if (rendered->tokens.size() > 24) continue;
        const Subset got =
            classify_subset(rendered->target_ids, slots.subject_class, scene);
        if (got != want) continue;
        Query q;
        q.text = rendered->text;
        q.tokens = rendered->tokens;
        q.target_ids = rendered->target_ids;
        q.subset = got;
        return q;
    }
    return std::nullopt;
}

}  // namespace

Scene generate_scene(const GenConfig& config, std::uint64_t scene_seed,
                     std::size_t scene_index,
                     std::array<std::size_t, kSubsetCount>& subset_counts,
                     std::size_t& queries_so_far) {
    Rng rng(scene_seed);
    // Retry whole layouts until every requested query subset is satisfiable.
    for (int layout = 0; layout < 50; ++layout) {
        Scene scene;
        {
            std::ostringstream os;
            os << "scene_" << scene_index;
            scene.scene_id = os.str();
        }
        scene.room_extent = config.room_extent;
        scene.objects = place_objects(config, rng);

        auto counts = subset_counts;
        auto total = queries_so_far;
        bool ok = true;
        for (std::size_t q = 0; q < config.queries_per_scene && ok; ++q) {
            const auto order = subsets_by_deficit(config, counts, total);
            ok = false;
            for (Subset want : order) {
                if (auto query = try_make_query(want, scene, rng)) {
                    ++counts[static_cast<int>(query->subset)];
                    ++total;
                    scene.queries.push_back(std::move(*query));
                    ok = true;
                    break;
                }
            }
        }
        if (!ok) continue;
        for (auto& obj : scene.objects)
            obj.points = sample_points(obj, config.points_per_object, config.noise_sigma, rng);
        subset_counts = counts;
        queries_so_far = total;
        return scene;
    }
    throw ConfigError("generate_scene: requested subset mix is infeasible for scene " +
                      std::to_string(scene_index));
}

Dataset generate_dataset(const GenConfig& config, std::uint64_t seed) {
    if (config.min_objects < 1 || config.max_objects < config.min_objects)
        throw ConfigError("generate_dataset: bad objects-per-scene range");
    for (const auto& [k, v] : config.mix) {
        subset_from_name(k);
        if (v < 0.0) throw ConfigError("generate_dataset: negative mix share for " + k);
    }
    Dataset ds;
    ds.config = config;
    ds.seed = seed;
    std::array<std::size_t, kSubsetCount> counts{};
    std::size_t total = 0;
    for (std::size_t i = 0; i < config.scenes; ++i)
        ds.scenes.push_back(
            generate_scene(config, derive_seed(seed, i), i, counts, total));
    return ds;
}

// ---- persistence -----------------------------------------------------------

namespace {

ordered_json scene_to_json(const Scene& s) {
    ordered_json j;
    j["scene_id"] = s.scene_id;
    j["room_extent"] = s.room_extent;
    j["objects"] = ordered_json::array();
    for (const auto& o : s.objects) {
        ordered_json oj;
        oj["id"] = o.id;
        oj["class_id"] = o.class_id;
        oj["attribute_id"] = o.attribute_id;
        oj["centroid"] = o.centroid;
        oj["size"] = o.size;
        oj["points"] = o.points;
        j["objects"].push_back(std::move(oj));
    }
    j["queries"] = ordered_json::array();
    for (const auto& q : s.queries) {
        ordered_json qj;
        qj["text"] = q.text;
        qj["tokens"] = q.tokens;
        qj["target_ids"] = q.target_ids;
        qj["subset"] = subset_name(q.subset);
        j["queries"].push_back(std::move(qj));
    }
    return j;
}

Scene scene_from_json(const ordered_json& j) {
    Scene s;
    s.scene_id = j.at("scene_id").get<std::string>();
    s.room_extent = j.at("room_extent").get<std::array<double, 3>>();
    for (const auto& oj : j.at("objects")) {
        ObjectRecord o;
        o.id = oj.at("id").get<int>();
        o.class_id = oj.at("class_id").get<int>();
        o.attribute_id = oj.at("attribute_id").get<int>();
        o.centroid = oj.at("centroid").get<std::array<double, 3>>();
        o.size = oj.at("size").get<std::array<double, 3>>();
        o.points = oj.at("points").get<std::vector<double>>();
        s.objects.push_back(std::move(o));
    }
    for (const auto& qj : j.at("queries")) {
        Query q;
        q.text = qj.at("text").get<std::string>();
        q.tokens = qj.at("tokens").get<std::vector<std::size_t>>();
        q.target_ids = qj.at("target_ids").get<std::vector<int>>();
        q.subset = subset_from_name(qj.at("subset").get<std::string>());
        s.queries.push_back(std::move(q));
    }
    return s;
}

ordered_json config_to_json_obj(const GenConfig& c) {
    ordered_json j;
    j["scenes"] = c.scenes;
    j["min_objects"] = c.min_objects;
    j["max_objects"] = c.max_objects;
    j["queries_per_scene"] = c.queries_per_scene;
    j["points_per_object"] = c.points_per_object;
    j["noise_sigma"] = c.noise_sigma;
    j["room_extent"] = c.room_extent;
    j["mix"] = c.mix;
    return j;
}

GenConfig config_from_json_obj(const ordered_json& j) {
    static const std::set<std::string> known = {
        "scenes",       "min_objects", "max_objects", "queries_per_scene",
        "points_per_object", "noise_sigma", "room_extent", "mix"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown generation config key: " + key);
    GenConfig c;
    if (j.contains("scenes")) c.scenes = j.at("scenes").get<std::size_t>();
    if (j.contains("min_objects")) c.min_objects = j.at("min_objects").get<std::size_t>();
    if (j.contains("max_objects")) c.max_objects = j.at("max_objects").get<std::size_t>();
    if (j.contains("queries_per_scene"))
        c.queries_per_scene = j.at("queries_per_scene").get<std::size_t>();
    if (j.contains("points_per_object"))
        c.points_per_object = j.at("points_per_object").get<std::size_t>();
    if (j.contains("noise_sigma")) c.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("room_extent")) c.room_extent = j.at("room_extent").get<std::array<double, 3>>();
    if (j.contains("mix")) c.mix = j.at("mix").get<std::map<std::string, double>>();
    return c;
}

}  // namespace

std::string gen_config_to_json(const GenConfig& c) {
    return config_to_json_obj(c).dump(2);
}

GenConfig gen_config_from_json(const std::string& text) {
    try {
        return config_from_json_obj(ordered_json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad generation config: ") + e.what());
    }
}

void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const auto& s : ds.scenes) out << scene_to_json(s).dump() << "\n";
    out.close();
    if (!out) throw DataError("write failed: " + path);

    ordered_json header;
    header["format"] = "hcost-scenes-v1";
    header["seed"] = ds.seed;
    header["config"] = config_to_json_obj(ds.config);
    const auto& vocab = Vocabulary::instance();
    header["vocabulary"] = vocab.words();
    ordered_json classes = ordered_json::array();
    for (std::size_t c = 0; c < vocab.n_classes(); ++c) classes.push_back(vocab.class_name(c));
    header["classes"] = classes;
    ordered_json colors = ordered_json::array();
    for (std::size_t a = 0; a < vocab.n_attributes(); ++a) colors.push_back(vocab.color_name(a));
    header["colors"] = colors;
    std::ofstream hout(path + ".header.json", std::ios::binary);
    if (!hout) throw DataError("cannot open for writing: " + path + ".header.json");
    hout << header.dump(2) << "\n";
}

Dataset read_dataset(const std::string& path) {
    std::ifstream hin(path + ".header.json", std::ios::binary);
    if (!hin) throw DataError("missing dataset header: " + path + ".header.json");
    Dataset ds;
    try {
        const auto header = ordered_json::parse(hin);
        ds.seed = header.at("seed").get<std::uint64_t>();
        ds.config = config_from_json_obj(header.at("config"));
        const auto words = header.at("vocabulary").get<std::vector<std::string>>();
        if (words != Vocabulary::instance().words())
            throw DataError("dataset vocabulary does not match this build");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad dataset header: ") + e.what());
    }

    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            ds.scenes.push_back(scene_from_json(ordered_json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("bad scene record at line " + std::to_string(lineno) + ": " +
                            e.what());
        }
    }
    return ds;
}

std::uint64_t file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for fingerprint: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace hcost
