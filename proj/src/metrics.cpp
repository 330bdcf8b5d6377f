#include "memdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "memdiff/errors.hpp"
#include "memdiff/format.hpp"
#include "memdiff/hash.hpp"

namespace memdiff {

namespace {

struct Overlap {
    std::size_t inter = 0, a = 0, b = 0;
};

Overlap overlap_counts(const LabelMask& pred, const LabelMask& truth, int cls) {
    if (pred.h != truth.h || pred.w != truth.w) throw DataError("dice: shape mismatch");
    Overlap o;
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        const bool pa = pred.labels[i] == cls;
        const bool pb = truth.labels[i] == cls;
        o.a += pa;
        o.b += pb;
        o.inter += pa && pb;
    }
    return o;
}

double dice_from(const Overlap& o) {
    if (o.a + o.b == 0) return 1.0; // both empty: a correct empty prediction
    return 2.0 * static_cast<double>(o.inter) / static_cast<double>(o.a + o.b);
}

} // namespace

double dice(const LabelMask& pred, const LabelMask& truth, int cls) {
    return dice_from(overlap_counts(pred, truth, cls));
}

double dice_volume(const std::vector<LabelMask>& pred, const std::vector<LabelMask>& truth, int cls) {
    if (pred.size() != truth.size()) throw DataError("dice_volume: slice count mismatch");
    Overlap total;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        const Overlap o = overlap_counts(pred[s], truth[s], cls);
        total.inter += o.inter;
        total.a += o.a;
        total.b += o.b;
    }
    return dice_from(total);
}

DiceReport evaluate(const std::map<std::string, std::vector<LabelMask>>& predictions,
                    const std::vector<VolumeRecord>& truth, const std::vector<int>& organ_ids,
                    std::uint64_t config_hash, std::uint64_t seed) {
    std::vector<std::string> missing;
    for (const auto& vol : truth)
        if (!predictions.count(vol.volume_id)) missing.push_back(vol.volume_id);
    if (!missing.empty()) {
        std::string msg = "evaluate: missing predictions for volumes:";
        for (const auto& id : missing) msg += " " + id;
        throw DataError(msg);
    }

    DiceReport report;
    report.config_hash = config_hash;
    report.seed = seed;
    report.n_volumes = static_cast<int>(truth.size());
    for (const int organ : organ_ids) {
        double acc = 0.0;
        for (const auto& vol : truth) {
            if (!vol.has_masks()) throw DataError("evaluate: truth volume " + vol.volume_id + " has no masks");
            const auto& pred = predictions.at(vol.volume_id);
            if (pred.size() != vol.masks.size())
                throw DataError("evaluate: prediction slice count mismatch for " + vol.volume_id);
            const double d = dice_volume(pred, vol.masks, organ);
            report.rows.push_back({organ, vol.volume_id, d});
            acc += d;
        }
        report.per_organ[organ] = acc / static_cast<double>(truth.size());
    }
    double mean = 0.0;
    for (const auto& [organ, d] : report.per_organ) mean += d;
    report.mean = report.per_organ.empty() ? 0.0 : mean / static_cast<double>(report.per_organ.size());
    return report;
}

void write_dice_csv(const DiceReport& report, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write dice csv " + path.string());
    f << "# config_hash=" << to_hex(report.config_hash) << "\n# seed=" << report.seed << "\n";
    f << "organ,volume_id,dice\n";
    for (const auto& row : report.rows)
        f << row.organ << ',' << row.volume_id << ',' << fmt_double(row.dice) << "\n";
    for (const auto& [organ, d] : report.per_organ) f << organ << ",mean," << fmt_double(d) << "\n";
    f << "all,mean," << fmt_double(report.mean) << "\n";
}

namespace {

std::vector<double> flatten(const Grid3& g) { return g.v; }

std::vector<double> centroid(const std::vector<std::vector<double>>& rows) {
    std::vector<double> c(rows.front().size(), 0.0);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) c[i] += r[i];
    for (double& v : c) v /= static_cast<double>(rows.size());
    return c;
}

double rms_spread(const std::vector<std::vector<double>>& rows, const std::vector<double>& c) {
    double acc = 0.0;
    for (const auto& r : rows) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double d = r[i] - c[i];
            d2 += d * d;
        }
        acc += d2;
    }
    return std::sqrt(acc / static_cast<double>(rows.size()));
}

// Deterministic top-2 principal directions via power iteration with
// deflation; sign convention: the largest-magnitude loading is positive.
std::vector<std::vector<double>> top2_components(const std::vector<std::vector<double>>& rows,
                                                 const std::vector<double>& mean) {
    const std::size_t dim = mean.size();
    const std::size_t n = rows.size();
    std::vector<std::vector<double>> centered(n, std::vector<double>(dim));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < dim; ++i) centered[r][i] = rows[r][i] - mean[i];

    auto cov_apply = [&](const std::vector<double>& v) {
        std::vector<double> out(dim, 0.0);
        for (const auto& row : centered) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += row[i] * v[i];
            for (std::size_t i = 0; i < dim; ++i) out[i] += dot * row[i];
        }
        for (double& x : out) x /= static_cast<double>(n);
        return out;
    };
    auto normalize = [](std::vector<double>& v) {
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-300) return false;
        for (double& x : v) x /= norm;
        return true;
    };
    auto fix_sign = [](std::vector<double>& v) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < v.size(); ++i)
            if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
        if (v[arg] < 0.0)
            for (double& x : v) x = -x;
    };

    std::vector<std::vector<double>> comps;
    for (int c = 0; c < 2; ++c) {
        std::vector<double> v(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
        for (int it = 0; it < 200; ++it) {
            std::vector<double> next = cov_apply(v);
            for (const auto& prev : comps) { // deflate
                double dot = 0.0;
                for (std::size_t i = 0; i < dim; ++i) dot += next[i] * prev[i];
                for (std::size_t i = 0; i < dim; ++i) next[i] -= dot * prev[i];
            }
            if (!normalize(next)) {
                next.assign(dim, 0.0);
                next[c % dim] = 1.0;
            }
            v = std::move(next);
        }
        fix_sign(v);
        comps.push_back(std::move(v));
    }
    return comps;
}

} // namespace

ClusterDiagnostic cluster_diagnostic(const std::vector<std::pair<Grid3, int>>& generated,
                                     const std::vector<std::pair<Grid3, int>>& truth) {
    if (generated.empty() || truth.empty())
        throw DataError("cluster_diagnostic: need at least one embedding on each side");

    std::set<int> classes;
    for (const auto& [g, c] : generated) classes.insert(c);
    for (const auto& [g, c] : truth) classes.insert(c);

    ClusterDiagnostic diag;
    for (const int cls : classes) {
        std::vector<std::vector<double>> gen_rows, truth_rows;
        for (const auto& [g, c] : generated)
            if (c == cls) gen_rows.push_back(flatten(g));
        for (const auto& [g, c] : truth)
            if (c == cls) truth_rows.push_back(flatten(g));

        ClusterDiagnostic::ClassStat stat;
        stat.cls = cls;
        stat.present = !gen_rows.empty() && !truth_rows.empty();
        if (stat.present) {
            const auto cg = centroid(gen_rows);
            const auto ct = centroid(truth_rows);
            double d2 = 0.0;
            for (std::size_t i = 0; i < cg.size(); ++i) {
                const double d = cg[i] - ct[i];
                d2 += d * d;
            }
            stat.gap = std::sqrt(d2);
            const double ts = rms_spread(truth_rows, ct);
            stat.spread_ratio = ts > 0.0 ? rms_spread(gen_rows, cg) / ts : 0.0;
        }
        diag.stats.push_back(stat);
    }

    // pooled PCA projection for plotting
    std::vector<std::vector<double>> pooled;
    std::vector<std::pair<int, int>> tags; // (class, source)
    for (const auto& [g, c] : generated) {
        pooled.push_back(flatten(g));
        tags.emplace_back(c, 0);
    }
    for (const auto& [g, c] : truth) {
        pooled.push_back(flatten(g));
        tags.emplace_back(c, 1);
    }
    const auto mean = centroid(pooled);
    const auto comps = top2_components(pooled, mean);
    for (std::size_t r = 0; r < pooled.size(); ++r) {
        double px = 0.0, py = 0.0;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double c0 = pooled[r][i] - mean[i];
            px += c0 * comps[0][i];
            py += c0 * comps[1][i];
        }
        diag.points.push_back({tags[r].first, tags[r].second, px, py});
    }
    return diag;
}

void write_cluster_csv(const ClusterDiagnostic& diag, const std::filesystem::path& stats_path,
                       const std::filesystem::path& points_path, std::uint64_t config_hash,
                       std::uint64_t seed) {
    std::ofstream f(stats_path);
    if (!f) throw DataError("cannot write cluster csv " + stats_path.string());
    f << "# config_hash=" << to_hex(config_hash) << "\n# seed=" << seed << "\n";
    f << "class,gap,spread_ratio\n";
    for (const auto& s : diag.stats) {
        if (!s.present) {
            f << s.cls << ",absent,absent\n";
            continue;
        }
        f << s.cls << ',' << fmt_double(s.gap) << ',' << fmt_double(s.spread_ratio) << "\n";
    }
    std::ofstream pf(points_path);
    if (!pf) throw DataError("cannot write points csv " + points_path.string());
    pf << "# config_hash=" << to_hex(config_hash) << "\n# seed=" << seed << "\n";
    pf << "class,source,x,y\n";
    for (const auto& p : diag.points)
        pf << p.cls << ',' << (p.source == 0 ? "generated" : "truth") << ',' << fmt_double(p.x) << ','
           << fmt_double(p.y) << "\n";
}

} // namespace memdiff
