#include "memdiff/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/hash.hpp"
#include "memdiff/prior.hpp"
#include "memdiff/rng.hpp"
#include "memdiff/volumetric.hpp"

namespace memdiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTagDomain = 0x646f6d61696eull;

std::string mask_file(int s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "mask_%04d.u8", s);
    return buf;
}

std::vector<VolumeRecord> select_volumes(const std::vector<VolumeRecord>& all,
                                         const std::vector<std::string>& ids) {
    std::vector<VolumeRecord> out;
    for (const auto& id : ids) {
        const auto it = std::find_if(all.begin(), all.end(),
                                     [&id](const VolumeRecord& r) { return r.volume_id == id; });
        if (it == all.end()) throw DataError("volume " + id + " not found in store");
        out.push_back(*it);
    }
    return out;
}

std::vector<int> organ_labels(int k_classes) {
    std::vector<int> labels;
    for (int l = 1; l <= k_classes; ++l) labels.push_back(l);
    return labels;
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
}

ArchDescriptor expected_arch(const ExperimentConfig& cfg) {
    ArchDescriptor a;
    a.c_mem = cfg.c_mem;
    a.c_img = cfg.c_img;
    a.grid_h = cfg.grid_h;
    a.grid_w = cfg.grid_w;
    a.label_count = cfg.k_classes + 1;
    a.base_width = cfg.base_width;
    a.levels = cfg.levels;
    a.cond_dim = cfg.cond_dim;
    a.fourier_bands = cfg.fourier_bands;
    return a;
}

Denoiser load_checked(const fs::path& params_path, const ExperimentConfig& cfg) {
    LoadedParams loaded = load_params(params_path);
    if (!(loaded.denoiser.arch() == expected_arch(cfg)))
        throw ConfigError("params file " + params_path.string() +
                          " was trained with a different architecture than this config");
    return std::move(loaded.denoiser);
}

} // namespace

StoreSummary cmd_gen_data(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.store_dir.empty()) throw ConfigError("gen-data needs store_dir");
    auto records = generate_synthetic_dataset(cfg.n_volumes, cfg.slices_per_volume,
                                              {cfg.height, cfg.width}, cfg.k_classes, cfg.seed);
    const bool shifted = cfg.domain_tag == "target" || cfg.domain_shift_scale != 1.0 ||
                         cfg.domain_shift_offset != 0.0 || cfg.domain_noise != 0.0;
    if (shifted) {
        DomainShift shift{cfg.domain_shift_scale, cfg.domain_shift_offset, cfg.domain_noise};
        for (std::size_t i = 0; i < records.size(); ++i)
            records[i] = apply_domain_shift(records[i], shift, records[i].volume_id,
                                            derive_seed(cfg.seed, {kTagDomain, i}));
    }
    return write_volume_store(records, resolve_out_dir(cfg.store_dir), cfg.hash(), cfg.seed);
}

TrainArtifacts cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.store_dir.empty()) throw ConfigError("train needs store_dir");
    if (cfg.out_dir.empty()) throw ConfigError("train needs out_dir");

    const auto records = read_volume_store(resolve_out_dir(cfg.store_dir));
    std::vector<std::string> ids;
    for (const auto& r : records) ids.push_back(r.volume_id);
    const auto split = make_split(ids, cfg.split_fraction, cfg.seed);
    const auto train_vols = select_volumes(records, split.train_volume_ids);

    const MockBackbone backbone(cfg.backbone_spec());
    const auto examples = build_training_set(train_vols, backbone, cfg.cross_slice_conditioning,
                                             cfg.target_noise, cfg.seed);
    const auto result = train(examples, backbone, cfg.train_config());

    const fs::path out = resolve_out_dir(cfg.out_dir);
    ensure_dir(out);
    TrainArtifacts art;
    art.params_path = out / "params.bin";
    art.loss_csv_path = out / "loss.csv";
    save_params(result.denoiser, art.params_path, cfg.hash(), cfg.seed);
    write_loss_csv(result.history, art.loss_csv_path, cfg.hash(), cfg.seed);

    std::vector<double> lp;
    for (const auto& row : result.history) lp.push_back(row.l_prior);
    const std::size_t window = std::max<std::size_t>(1, lp.size() / 10);
    art.first_smoothed_prior = smoothed_mean(lp, 0, window);
    art.last_smoothed_prior = smoothed_mean(lp, lp.size() - window, window);
    return art;
}

void write_predictions(const fs::path& out_dir, const std::vector<std::string>& ids,
                       const std::vector<VolumeSegmentation>& segs, std::uint64_t config_hash,
                       std::uint64_t seed) {
    ensure_dir(out_dir);
    json volumes = json::array();
    for (std::size_t vi = 0; vi < ids.size(); ++vi) {
        const fs::path vdir = out_dir / ids[vi];
        ensure_dir(vdir);
        const auto& seg = segs[vi];
        for (std::size_t s = 0; s < seg.masks.size(); ++s) {
            std::ofstream f(vdir / mask_file(static_cast<int>(s)), std::ios::binary);
            if (!f) throw DataError("cannot write mask under " + vdir.string());
            f.write(reinterpret_cast<const char*>(seg.masks[s].labels.data()),
                    static_cast<std::streamsize>(seg.masks[s].labels.size()));
        }
        json plan_order = json::array();
        for (const auto& [slice, adj] : seg.trace) plan_order.push_back(slice);
        volumes.push_back({{"id", ids[vi]}, {"plan_order", plan_order}});
    }
    json manifest = {{"format_version", 1},
                     {"config_hash", to_hex(config_hash)},
                     {"seed", seed},
                     {"volumes", volumes}};
    std::ofstream mf(out_dir / "run_manifest.json");
    if (!mf) throw DataError("cannot write run manifest under " + out_dir.string());
    mf << manifest.dump(2) << "\n";
}

std::map<std::string, std::vector<LabelMask>> read_predictions(const fs::path& pred_dir,
                                                               const std::vector<VolumeRecord>& truth) {
    std::map<std::string, std::vector<LabelMask>> preds;
    std::vector<std::string> missing;
    for (const auto& vol : truth) {
        std::vector<LabelMask> masks;
        bool ok = true;
        for (int s = 0; s < vol.slice_count(); ++s) {
            const fs::path p = pred_dir / vol.volume_id / mask_file(s);
            std::ifstream f(p, std::ios::binary | std::ios::ate);
            if (!f) {
                ok = false;
                break;
            }
            const int h = vol.slices[s].h, w = vol.slices[s].w;
            if (static_cast<std::size_t>(f.tellg()) != static_cast<std::size_t>(h) * w)
                throw DataError("prediction mask " + p.string() + " has wrong size");
            f.seekg(0);
            LabelMask mask(h, w);
            f.read(reinterpret_cast<char*>(mask.labels.data()), static_cast<std::streamsize>(mask.labels.size()));
            masks.push_back(std::move(mask));
        }
        if (ok)
            preds[vol.volume_id] = std::move(masks);
        else
            missing.push_back(vol.volume_id);
    }
    if (!missing.empty()) {
        std::string msg = "missing prediction masks for volumes:";
        for (const auto& id : missing) msg += " " + id;
        throw DataError(msg);
    }
    return preds;
}

InferArtifacts cmd_infer(const ExperimentConfig& cfg, const fs::path& params_path,
                         const fs::path& store_dir) {
    cfg.validate();
    if (cfg.out_dir.empty()) throw ConfigError("infer needs out_dir");
    const MockBackbone backbone(cfg.backbone_spec());
    const Denoiser denoiser = load_checked(params_path, cfg);
    const auto records = read_volume_store(store_dir);
    const auto sched = make_schedule(cfg.t_steps, cfg.beta_const);
    const auto labels = organ_labels(cfg.k_classes);

    InferArtifacts art;
    art.out_dir = resolve_out_dir(cfg.out_dir);
    std::vector<VolumeSegmentation> segs;
    for (std::size_t vi = 0; vi < records.size(); ++vi) {
        SegmentOptions opt;
        opt.sampler = cfg.sampler_config();
        opt.fusion_weight = cfg.fusion_weight;
        opt.cross_slice = cfg.cross_slice_inference;
        opt.seed = cfg.seed;
        opt.volume_index = static_cast<int>(vi);
        segs.push_back(segment_volume(records[vi], denoiser, backbone, sched, opt, labels));
        art.volume_ids.push_back(records[vi].volume_id);
    }
    write_predictions(art.out_dir, art.volume_ids, segs, cfg.hash(), cfg.seed);
    return art;
}

DiceReport cmd_eval(const fs::path& pred_dir, const fs::path& truth_store, const fs::path& report_csv) {
    const auto truth = read_volume_store(truth_store);
    if (truth.empty()) throw DataError("eval: truth store is empty");
    int k_classes = 0;
    for (const auto& vol : truth) k_classes = std::max(k_classes, vol.k_classes);

    std::uint64_t config_hash = 0, seed = 0;
    const fs::path manifest_path = pred_dir / "run_manifest.json";
    if (std::ifstream mf(manifest_path); mf) {
        try {
            json m;
            mf >> m;
            if (m.contains("config_hash")) {
                const std::string hex = m["config_hash"].get<std::string>();
                config_hash = std::stoull(hex, nullptr, 16);
            }
            if (m.contains("seed")) seed = m["seed"].get<std::uint64_t>();
        } catch (...) {
            // a prediction directory without readable metadata still evaluates
        }
    }

    const auto preds = read_predictions(pred_dir, truth);
    const auto report = evaluate(preds, truth, organ_labels(k_classes), config_hash, seed);
    write_dice_csv(report, report_csv);
    return report;
}

SfudaResult cmd_sfuda(const ExperimentConfig& cfg, const fs::path& params_path,
                      const fs::path& target_store) {
    cfg.validate();
    if (cfg.out_dir.empty()) throw ConfigError("sfuda needs out_dir");

    SfudaConfig sc;
    sc.params_path = params_path;
    sc.target_store = target_store;
    sc.out_dir = resolve_out_dir(cfg.out_dir);
    if (!cfg.source_store_dir.empty()) sc.forbidden_source_roots.push_back(cfg.source_store_dir);
    sc.sampler = cfg.sampler_config();
    sc.fusion_weight = cfg.fusion_weight;
    sc.cross_slice = cfg.cross_slice_inference;
    sc.seed = cfg.seed;
    sc.config_hash = cfg.hash();
    ensure_dir(sc.out_dir);

    const MockBackbone backbone(cfg.backbone_spec());
    const auto sched = make_schedule(cfg.t_steps, cfg.beta_const);
    SfudaResult result = run_sfuda(sc, backbone, sched);

    write_predictions(sc.out_dir, result.volume_ids, result.segmentations, cfg.hash(), cfg.seed);
    if (result.report) write_dice_csv(*result.report, sc.out_dir / "dice.csv");
    std::ofstream audit(sc.out_dir / "access_log.txt");
    for (const auto& entry : result.access_log) audit << entry << "\n";
    return result;
}

ClusterDiagnostic cmd_diag(const ExperimentConfig& cfg, const fs::path& params_path,
                           const fs::path& store_dir) {
    cfg.validate();
    if (cfg.out_dir.empty()) throw ConfigError("diag needs out_dir");
    const MockBackbone backbone(cfg.backbone_spec());
    const Denoiser denoiser = load_checked(params_path, cfg);
    const auto records = read_volume_store(store_dir);
    std::vector<std::string> ids;
    for (const auto& r : records) ids.push_back(r.volume_id);
    const auto split = make_split(ids, cfg.split_fraction, cfg.seed);
    const auto test_vols = select_volumes(records, split.test_volume_ids);
    const auto sched = make_schedule(cfg.t_steps, cfg.beta_const);

    std::vector<std::pair<Grid3, int>> generated, truth;
    for (std::size_t vi = 0; vi < test_vols.size(); ++vi) {
        const auto& vol = test_vols[vi];
        if (!vol.has_masks()) throw DataError("diag: volume " + vol.volume_id + " has no masks");
        for (int s = 0; s < vol.slice_count(); ++s) {
            const ImageEmbedding z_img = backbone.encode_image(vol.slices[s]);
            for (int l = 1; l <= cfg.k_classes; ++l) {
                truth.emplace_back(
                    backbone.encode_memory(restrict_to_class(vol.masks[s], l), z_img).grid, l);
                generated.emplace_back(sample(denoiser, z_img, l, cfg.sampler_config(), sched,
                                              slice_sample_seed(cfg.seed, static_cast<int>(vi), s, l))
                                           .grid,
                                       l);
            }
        }
    }
    const auto diag = cluster_diagnostic(generated, truth);
    const fs::path out = resolve_out_dir(cfg.out_dir);
    ensure_dir(out);
    write_cluster_csv(diag, out / "cluster.csv", out / "cluster_points.csv", cfg.hash(), cfg.seed);
    return diag;
}

std::vector<CliSurface> cli_surfaces() {
    return {
        {"gen-data", {"--config", "--seed", "--out", "--deterministic", "--store"}},
        {"train", {"--config", "--seed", "--out", "--deterministic", "--store"}},
        {"infer", {"--config", "--seed", "--out", "--deterministic", "--store", "--params"}},
        {"eval", {"--config", "--out", "--pred", "--truth"}},
        {"sfuda", {"--config", "--seed", "--out", "--deterministic", "--params", "--target", "--source-store"}},
        {"diag", {"--config", "--seed", "--out", "--deterministic", "--params", "--store"}},
    };
}

} // namespace memdiff
