#include "memdiff/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "json.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/format.hpp"
#include "memdiff/hash.hpp"

namespace memdiff {

using nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "n_volumes",      "slices_per_volume", "height",
        "width",          "k_classes",         "split_fraction",
        "domain_tag",     "domain_shift_scale", "domain_shift_offset",
        "domain_noise",   "c_img",             "c_mem",
        "grid_h",         "grid_w",            "backbone_seed",
        "fusion_weight",  "t_steps",           "beta_const",
        "k_steps",        "stochastic_sampling", "iterations",
        "batch_size",     "learning_rate",     "lambda_prior",
        "lambda_seg",     "optimizer",         "cross_slice_conditioning",
        "target_noise",   "base_width",        "levels",
        "cond_dim",       "fourier_bands",     "seed",
        "deterministic",
        "cross_slice_inference", "store_dir",  "out_dir",
        "params_path",    "source_store_dir"};
    return keys;
}

json to_json_obj(const ExperimentConfig& c) {
    return json{{"n_volumes", c.n_volumes},
                {"slices_per_volume", c.slices_per_volume},
                {"height", c.height},
                {"width", c.width},
                {"k_classes", c.k_classes},
                {"split_fraction", c.split_fraction},
                {"domain_tag", c.domain_tag},
                {"domain_shift_scale", c.domain_shift_scale},
                {"domain_shift_offset", c.domain_shift_offset},
                {"domain_noise", c.domain_noise},
                {"c_img", c.c_img},
                {"c_mem", c.c_mem},
                {"grid_h", c.grid_h},
                {"grid_w", c.grid_w},
                {"backbone_seed", c.backbone_seed},
                {"fusion_weight", c.fusion_weight},
                {"t_steps", c.t_steps},
                {"beta_const", c.beta_const},
                {"k_steps", c.k_steps},
                {"stochastic_sampling", c.stochastic_sampling},
                {"iterations", c.iterations},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"lambda_prior", c.lambda_prior},
                {"lambda_seg", c.lambda_seg},
                {"optimizer", c.optimizer},
                {"cross_slice_conditioning", c.cross_slice_conditioning},
                {"target_noise", c.target_noise},
                {"base_width", c.base_width},
                {"levels", c.levels},
                {"cond_dim", c.cond_dim},
                {"fourier_bands", c.fourier_bands},
                {"seed", c.seed},
                {"deterministic", c.deterministic},
                {"cross_slice_inference", c.cross_slice_inference},
                {"store_dir", c.store_dir},
                {"out_dir", c.out_dir},
                {"params_path", c.params_path},
                {"source_store_dir", c.source_store_dir}};
}

} // namespace

std::string ExperimentConfig::to_json() const { return to_json_obj(*this).dump(2) + "\n"; }

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known_keys().count(key)) throw ConfigError("unknown config key: " + key);

    ExperimentConfig c;
    try {
        auto opt = [&j](const char* key, auto& field) {
            if (j.contains(key)) j.at(key).get_to(field);
        };
        opt("n_volumes", c.n_volumes);
        opt("slices_per_volume", c.slices_per_volume);
        opt("height", c.height);
        opt("width", c.width);
        opt("k_classes", c.k_classes);
        opt("split_fraction", c.split_fraction);
        opt("domain_tag", c.domain_tag);
        opt("domain_shift_scale", c.domain_shift_scale);
        opt("domain_shift_offset", c.domain_shift_offset);
        opt("domain_noise", c.domain_noise);
        opt("c_img", c.c_img);
        opt("c_mem", c.c_mem);
        opt("grid_h", c.grid_h);
        opt("grid_w", c.grid_w);
        opt("backbone_seed", c.backbone_seed);
        opt("fusion_weight", c.fusion_weight);
        opt("t_steps", c.t_steps);
        opt("beta_const", c.beta_const);
        opt("k_steps", c.k_steps);
        opt("stochastic_sampling", c.stochastic_sampling);
        opt("iterations", c.iterations);
        opt("batch_size", c.batch_size);
        opt("learning_rate", c.learning_rate);
        opt("lambda_prior", c.lambda_prior);
        opt("lambda_seg", c.lambda_seg);
        opt("optimizer", c.optimizer);
        opt("cross_slice_conditioning", c.cross_slice_conditioning);
        opt("target_noise", c.target_noise);
        opt("base_width", c.base_width);
        opt("levels", c.levels);
        opt("cond_dim", c.cond_dim);
        opt("fourier_bands", c.fourier_bands);
        opt("seed", c.seed);
        opt("deterministic", c.deterministic);
        opt("cross_slice_inference", c.cross_slice_inference);
        opt("store_dir", c.store_dir);
        opt("out_dir", c.out_dir);
        opt("params_path", c.params_path);
        opt("source_store_dir", c.source_store_dir);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write config file " + path.string());
    f << to_json();
}

std::uint64_t ExperimentConfig::hash() const {
    // canonical key=value lines over behavioral keys only; paths excluded
    // so identical experiments hash identically anywhere on disk
    std::string s;
    auto add = [&s](const char* key, const std::string& v) {
        s += key;
        s += '=';
        s += v;
        s += '\n';
    };
    add("n_volumes", std::to_string(n_volumes));
    add("slices_per_volume", std::to_string(slices_per_volume));
    add("height", std::to_string(height));
    add("width", std::to_string(width));
    add("k_classes", std::to_string(k_classes));
    add("split_fraction", fmt_double(split_fraction));
    add("domain_tag", domain_tag);
    add("domain_shift_scale", fmt_double(domain_shift_scale));
    add("domain_shift_offset", fmt_double(domain_shift_offset));
    add("domain_noise", fmt_double(domain_noise));
    add("c_img", std::to_string(c_img));
    add("c_mem", std::to_string(c_mem));
    add("grid_h", std::to_string(grid_h));
    add("grid_w", std::to_string(grid_w));
    add("backbone_seed", std::to_string(backbone_seed));
    add("fusion_weight", fmt_double(fusion_weight));
    add("t_steps", std::to_string(t_steps));
    add("beta_const", fmt_double(beta_const));
    add("k_steps", std::to_string(k_steps));
    add("stochastic_sampling", stochastic_sampling ? "1" : "0");
    add("iterations", std::to_string(iterations));
    add("batch_size", std::to_string(batch_size));
    add("learning_rate", fmt_double(learning_rate));
    add("lambda_prior", fmt_double(lambda_prior));
    add("lambda_seg", fmt_double(lambda_seg));
    add("optimizer", optimizer);
    add("cross_slice_conditioning", cross_slice_conditioning ? "1" : "0");
    add("target_noise", fmt_double(target_noise));
    add("base_width", std::to_string(base_width));
    add("levels", std::to_string(levels));
    add("cond_dim", std::to_string(cond_dim));
    add("fourier_bands", std::to_string(fourier_bands));
    add("seed", std::to_string(seed));
    add("deterministic", deterministic ? "1" : "0");
    add("cross_slice_inference", cross_slice_inference ? "1" : "0");
    return fnv1a64(s);
}

void ExperimentConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(n_volumes >= 1, "n_volumes must be >= 1");
    require(slices_per_volume >= 3, "slices_per_volume must be >= 3");
    require(height >= 8 && width >= 8, "height and width must be >= 8");
    require(k_classes >= 1, "k_classes must be >= 1");
    require(split_fraction > 0.0 && split_fraction < 1.0, "split_fraction must be in (0,1)");
    require(domain_tag == "source" || domain_tag == "target", "domain_tag must be source or target");
    require(domain_shift_scale > 0.0, "domain_shift_scale must be positive");
    require(domain_noise >= 0.0, "domain_noise must be >= 0");
    require(c_img >= 1, "c_img must be >= 1");
    require(c_mem >= k_classes, "c_mem must be >= k_classes");
    require(grid_h >= 1 && grid_w >= 1, "grid dims must be positive");
    require(height % grid_h == 0 && width % grid_w == 0, "grid dims must divide height/width");
    require(fusion_weight >= 0.0 && fusion_weight <= 1.0, "fusion_weight must be in [0,1]");
    require(t_steps >= 1, "t_steps must be >= 1");
    require(beta_const > 0.0 && beta_const < 1.0, "beta_const must be in (0,1)");
    require(k_steps >= 1 && k_steps <= t_steps, "k_steps must be in [1, t_steps]");
    require(iterations >= 1, "iterations must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(lambda_prior >= 0.0 && lambda_seg >= 0.0, "lambdas must be >= 0");
    require(optimizer == "adam", "optimizer must be adam");
    require(target_noise >= 0.0, "target_noise must be >= 0");
    require(base_width >= 1, "base_width must be >= 1");
    require(levels == 1 || levels == 2, "levels must be 1 or 2");
    require(cond_dim >= 4 && cond_dim % 2 == 0, "cond_dim must be even and >= 4");
    require(fourier_bands >= 0 && fourier_bands <= 8, "fourier_bands must be in [0,8]");
    require(levels == 1 || (grid_h % 2 == 0 && grid_w % 2 == 0), "2-level network needs even grid dims");
}

BackboneSpec ExperimentConfig::backbone_spec() const {
    BackboneSpec spec;
    spec.c_img = c_img;
    spec.c_mem = c_mem;
    spec.grid_h = grid_h;
    spec.grid_w = grid_w;
    spec.img_h = height;
    spec.img_w = width;
    spec.k_classes = k_classes;
    spec.kind = "mock";
    spec.seed = backbone_seed;
    return spec;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.iterations = iterations;
    t.batch_size = batch_size;
    t.learning_rate = learning_rate;
    t.lambda_prior = lambda_prior;
    t.lambda_seg = lambda_seg;
    t.optimizer = optimizer;
    t.seed = seed;
    t.t_steps = t_steps;
    t.beta_const = beta_const;
    t.k_steps = k_steps;
    t.cross_slice_conditioning = cross_slice_conditioning;
    t.fusion_weight = fusion_weight;
    t.target_noise = target_noise;
    t.base_width = base_width;
    t.levels = levels;
    t.cond_dim = cond_dim;
    t.fourier_bands = fourier_bands;
    return t;
}

SamplerConfig ExperimentConfig::sampler_config() const {
    SamplerConfig s;
    s.k_steps = k_steps;
    s.stochastic = stochastic_sampling;
    return s;
}

std::filesystem::path resolve_out_dir(const std::string& out) {
    std::filesystem::path p(out);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("MEMDIFF_OUT_ROOT")) return std::filesystem::path(root) / p;
    return p;
}

} // namespace memdiff
