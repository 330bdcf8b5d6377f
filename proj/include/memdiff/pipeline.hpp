#pragma once
#include <filesystem>
#include <string>
#include <vector>

#include "memdiff/config.hpp"
#include "memdiff/metrics.hpp"
#include "memdiff/sfuda.hpp"

namespace memdiff {

// Orchestration behind the CLI subcommands; each returns after writing
// its artifacts (every artifact embeds the config hash and seed).

// gen-data: synthesize volumes (optionally domain-shifted) into store_dir.
StoreSummary cmd_gen_data(const ExperimentConfig& cfg);

// train: fit the diffusion prior on the train split of store_dir; writes
// params and a loss CSV under out_dir.
struct TrainArtifacts {
    std::filesystem::path params_path;
    std::filesystem::path loss_csv_path;
    double first_smoothed_prior = 0.0;
    double last_smoothed_prior = 0.0;
};
TrainArtifacts cmd_train(const ExperimentConfig& cfg);

// infer: segment every volume in store_dir with trained params; writes
// per-slice masks and a run manifest under out_dir.
struct InferArtifacts {
    std::filesystem::path out_dir;
    std::vector<std::string> volume_ids;
};
InferArtifacts cmd_infer(const ExperimentConfig& cfg, const std::filesystem::path& params_path,
                         const std::filesystem::path& store_dir);

// eval: score predictions against a truth store; writes a Dice CSV.
DiceReport cmd_eval(const std::filesystem::path& pred_dir, const std::filesystem::path& truth_store,
                    const std::filesystem::path& report_csv);

// sfuda: source-free inference on a target store.
SfudaResult cmd_sfuda(const ExperimentConfig& cfg, const std::filesystem::path& params_path,
                      const std::filesystem::path& target_store);

// diag: generated-vs-truth embedding cluster diagnostic over a store's
// test split.
ClusterDiagnostic cmd_diag(const ExperimentConfig& cfg, const std::filesystem::path& params_path,
                           const std::filesystem::path& store_dir);

// The CLI surface, exposed for the prompt-free structural check: every
// subcommand with every flag it accepts.
struct CliSurface {
    std::string name;
    std::vector<std::string> flags;
};
std::vector<CliSurface> cli_surfaces();

// True when the trained split of a store produced these predictions;
// helper shared by infer and sfuda output writing.
void write_predictions(const std::filesystem::path& out_dir, const std::vector<std::string>& ids,
                       const std::vector<VolumeSegmentation>& segs, std::uint64_t config_hash,
                       std::uint64_t seed);
std::map<std::string, std::vector<LabelMask>> read_predictions(const std::filesystem::path& pred_dir,
                                                               const std::vector<VolumeRecord>& truth);

} // namespace memdiff
