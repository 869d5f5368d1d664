#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "taugen/volume.hpp"

namespace taugen {

// Plasma stratification. Intervals are [lo, hi) with the last unbounded;
// paper mode has no 8-10 bin, so values in [8,10) are "unbinned" and only
// counted in the report footer.
struct PlasmaBins {
    enum class Mode { paper, full };

    struct Bin {
        double lo = 0.0;
        std::optional<double> hi;  // nullopt: unbounded
        std::string label;
    };

    Mode mode = Mode::paper;
    std::vector<Bin> bins;

    static PlasmaBins paper_bins();
    static PlasmaBins full_bins();
    static PlasmaBins make(Mode mode);

    // nullopt marks an unbinned value (paper mode, [8,10)).
    std::optional<size_t> assign(double plasma) const;
};

// Mean value over the voxels carrying `label`.
double region_mean(const Volume& v, const LabelAtlas& atlas, uint32_t label);

// Region columns in the order used by the output tables: the six canonical
// regions first (when present), then any remaining labels ascending.
std::vector<std::pair<uint32_t, std::string>> ordered_regions(const LabelAtlas& atlas);

struct EvalSample {
    std::string subject_id;
    double plasma = 0.0;
    const Volume* real = nullptr;
    const Volume* gen = nullptr;
    const LabelAtlas* atlas = nullptr;
};

// Per-sample region means plus group bookkeeping.
struct RegionStats {
    PlasmaBins bins;
    std::vector<std::string> region_names;
    std::vector<uint32_t> region_labels;

    struct Row {
        std::string subject_id;
        double plasma = 0.0;
        std::optional<size_t> bin;
        std::vector<double> real_mean;  // one per region
        std::vector<double> gen_mean;
    };
    std::vector<Row> rows;

    std::vector<size_t> bin_counts;  // N_g
    size_t unbinned = 0;

    // Group mean over samples in bin g for region k; nullopt when N_g == 0.
    std::optional<double> group_mean(size_t g, size_t k, bool gen) const;
};

RegionStats compute_region_stats(const std::vector<EvalSample>& samples, const PlasmaBins& bins);

// G x K grid of squared group-mean differences; empty bins yield absent
// entries rather than zeros.
struct MseMatrix {
    std::vector<std::string> bin_labels;
    std::vector<std::string> region_names;
    std::vector<std::optional<double>> cells;  // row-major (bin, region)

    std::optional<double> at(size_t g, size_t k) const {
        return cells[g * region_names.size() + k];
    }
    // Sum of all present entries.
    double trace_sum() const;
};

MseMatrix mse_matrix(const RegionStats& stats);

struct BoxStats {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    std::vector<double> outliers;  // beyond 1.5 IQR whiskers
};

// Tukey convention with linearly interpolated quartiles; min/max are the
// data extremes. Throws EvaluationError on an empty group.
BoxStats boxplot_stats(std::vector<double> values);

// CSV outputs: mse_by_bin_region.csv, region_means_long.csv,
// boxplot_stats.csv. Column order matches the canonical region order and
// bytes are deterministic for equal inputs.
void emit_tables(const MseMatrix& m, const RegionStats& stats,
                 const std::filesystem::path& out_dir);

// JSON mirror of the tables plus metadata (bins mode, sample counts,
// region-table hash).
void emit_report_json(const MseMatrix& m, const RegionStats& stats,
                      const std::filesystem::path& file);

}  // namespace taugen
