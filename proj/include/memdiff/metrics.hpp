#pragma once
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "memdiff/data.hpp"
#include "memdiff/grid.hpp"

namespace memdiff {

// 2|A n B| / (|A| + |B|) for one class plane; both empty -> 1.0.
double dice(const LabelMask& pred, const LabelMask& truth, int cls);
// Same, over a whole slice stack (volume-level 3D Dice).
double dice_volume(const std::vector<LabelMask>& pred, const std::vector<LabelMask>& truth, int cls);

struct DiceReport {
    std::map<int, double> per_organ; // organ id -> mean Dice over volumes
    double mean = 0.0;
    int n_volumes = 0;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    // per (organ, volume) rows for the CSV, in (organ, store-order) order
    struct Row {
        int organ;
        std::string volume_id;
        double dice;
    };
    std::vector<Row> rows;
};

// Volume-level Dice per organ, averaged over volumes. Predictions are
// matched to truths by volume id; missing predictions fail the run.
DiceReport evaluate(const std::map<std::string, std::vector<LabelMask>>& predictions,
                    const std::vector<VolumeRecord>& truth, const std::vector<int>& organ_ids,
                    std::uint64_t config_hash, std::uint64_t seed);

void write_dice_csv(const DiceReport& report, const std::filesystem::path& path);

struct ClusterDiagnostic {
    struct ClassStat {
        int cls = 0;
        bool present = false;
        double gap = 0.0;          // |centroid(generated) - centroid(truth)|
        double spread_ratio = 0.0; // RMS spread of generated / RMS spread of truth
    };
    std::vector<ClassStat> stats;
    struct Point {
        int cls;
        int source; // 0 = generated, 1 = truth
        double x, y;
    };
    std::vector<Point> points; // top-2 PCA projection of the pooled set
};

// Centroid gaps and a deterministic PCA projection of generated vs
// ground-truth memory embeddings (the Fig-2-style diagnostic).
ClusterDiagnostic cluster_diagnostic(const std::vector<std::pair<Grid3, int>>& generated,
                                     const std::vector<std::pair<Grid3, int>>& truth);

void write_cluster_csv(const ClusterDiagnostic& diag, const std::filesystem::path& stats_path,
                       const std::filesystem::path& points_path, std::uint64_t config_hash,
                       std::uint64_t seed);

} // namespace memdiff
