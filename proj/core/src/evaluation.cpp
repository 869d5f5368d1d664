#include "taugen/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "taugen/errors.hpp"

namespace taugen {

namespace {

const std::array<const char*, 6> kCanonicalRegions = {
    "Parahippocampal", "Fusiform", "Inferior Temporal",
    "Hippocampus",     "Posterior Cingulate", "Entorhinal"};

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

}  // namespace

PlasmaBins PlasmaBins::paper_bins() {
    PlasmaBins b;
    b.mode = Mode::paper;
    b.bins = {{0.0, 2.0, "0-2"},
              {2.0, 4.0, "2-4"},
              {4.0, 6.0, "4-6"},
              {6.0, 8.0, "6-8"},
              {10.0, std::nullopt, "10+"}};
    return b;
}

PlasmaBins PlasmaBins::full_bins() {
    PlasmaBins b;
    b.mode = Mode::full;
    b.bins = {{0.0, 2.0, "0-2"},  {2.0, 4.0, "2-4"},  {4.0, 6.0, "4-6"},
              {6.0, 8.0, "6-8"},  {8.0, 10.0, "8-10"}, {10.0, std::nullopt, "10+"}};
    return b;
}

PlasmaBins PlasmaBins::make(Mode mode) {
    return mode == Mode::paper ? paper_bins() : full_bins();
}

std::optional<size_t> PlasmaBins::assign(double plasma) const {
    if (!(plasma >= 0.0) || !std::isfinite(plasma))
        throw ParameterError("plasma must be finite and >= 0");
    for (size_t i = 0; i < bins.size(); ++i) {
        const Bin& b = bins[i];
        if (plasma >= b.lo && (!b.hi || plasma < *b.hi)) return i;
    }
    return std::nullopt;  // paper mode, [8, 10)
}

double region_mean(const Volume& v, const LabelAtlas& atlas, uint32_t label) {
    if (v.nx != atlas.nx || v.ny != atlas.ny || v.nz != atlas.nz)
        throw EvaluationError("volume and atlas dims differ");
    if (v.channels != 1) throw EvaluationError("region_mean expects a single-channel volume");
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < atlas.labels.size(); ++i) {
        if (atlas.labels[i] == label) {
            sum += double(v.data[i]);
            ++count;
        }
    }
    if (count == 0) {
        const auto it = atlas.region_table.find(label);
        const std::string name = it == atlas.region_table.end() ? "?" : it->second;
        throw EvaluationError("region label " + std::to_string(label) + " ('" + name +
                              "') has no voxels in the atlas");
    }
    return sum / double(count);
}

std::vector<std::pair<uint32_t, std::string>> ordered_regions(const LabelAtlas& atlas) {
    std::vector<std::pair<uint32_t, std::string>> out;
    std::set<uint32_t> used;
    for (const char* name : kCanonicalRegions)
        for (const auto& [label, n] : atlas.region_table)
            if (n == name && !used.count(label)) {
                out.emplace_back(label, n);
                used.insert(label);
            }
    for (const auto& [label, n] : atlas.region_table)
        if (!used.count(label)) {
            out.emplace_back(label, n);
            used.insert(label);
        }
    return out;
}

std::optional<double> RegionStats::group_mean(size_t g, size_t k, bool gen) const {
    double sum = 0.0;
    size_t n = 0;
    for (const Row& row : rows) {
        if (!row.bin || *row.bin != g) continue;
        sum += gen ? row.gen_mean[k] : row.real_mean[k];
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / double(n);
}

RegionStats compute_region_stats(const std::vector<EvalSample>& samples,
                                 const PlasmaBins& bins) {
    if (samples.empty()) throw EvaluationError("no samples to evaluate");
    for (const EvalSample& s : samples)
        if (!s.real || !s.gen || !s.atlas)
            throw PairingError("sample '" + s.subject_id + "' is missing a volume or atlas");

    RegionStats stats;
    stats.bins = bins;
    const auto regions = ordered_regions(*samples.front().atlas);
    for (const auto& [label, name] : regions) {
        stats.region_labels.push_back(label);
        stats.region_names.push_back(name);
    }
    stats.bin_counts.assign(bins.bins.size(), 0);

    for (const EvalSample& s : samples) {
        RegionStats::Row row;
        row.subject_id = s.subject_id;
        row.plasma = s.plasma;
        row.bin = bins.assign(s.plasma);
        for (uint32_t label : stats.region_labels) {
            row.real_mean.push_back(region_mean(*s.real, *s.atlas, label));
            row.gen_mean.push_back(region_mean(*s.gen, *s.atlas, label));
        }
        if (row.bin)
            ++stats.bin_counts[*row.bin];
        else
            ++stats.unbinned;
        stats.rows.push_back(std::move(row));
    }
    return stats;
}

double MseMatrix::trace_sum() const {
    double s = 0.0;
    for (const auto& c : cells)
        if (c) s += *c;
    return s;
}

MseMatrix mse_matrix(const RegionStats& stats) {
    MseMatrix m;
    for (const auto& b : stats.bins.bins) m.bin_labels.push_back(b.label);
    m.region_names = stats.region_names;
    m.cells.assign(m.bin_labels.size() * m.region_names.size(), std::nullopt);

    for (size_t g = 0; g < m.bin_labels.size(); ++g) {
        if (stats.bin_counts[g] == 0) continue;  // absent, not zero
        for (size_t k = 0; k < m.region_names.size(); ++k) {
            const double real = *stats.group_mean(g, k, false);
            const double gen = *stats.group_mean(g, k, true);
            const double d = real - gen;
            m.cells[g * m.region_names.size() + k] = d * d;
        }
    }
    return m;
}

BoxStats boxplot_stats(std::vector<double> values) {
    if (values.empty()) throw EvaluationError("boxplot_stats on an empty group");
    std::sort(values.begin(), values.end());
    const size_t n = values.size();

    auto quantile = [&](double p) {
        const double pos = p * double(n - 1);
        const size_t lo = size_t(pos);
        const size_t hi = std::min(n - 1, lo + 1);
        const double frac = pos - double(lo);
        return values[lo] * (1.0 - frac) + values[hi] * frac;
    };

    BoxStats b;
    b.min = values.front();
    b.max = values.back();
    b.q1 = quantile(0.25);
    b.median = quantile(0.5);
    b.q3 = quantile(0.75);
    const double iqr = b.q3 - b.q1;
    const double lo_fence = b.q1 - 1.5 * iqr;
    const double hi_fence = b.q3 + 1.5 * iqr;
    for (double v : values)
        if (v < lo_fence || v > hi_fence) b.outliers.push_back(v);
    return b;
}

void emit_tables(const MseMatrix& m, const RegionStats& stats,
                 const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);

    {
        std::ofstream os(out_dir / "mse_by_bin_region.csv", std::ios::trunc);
        if (!os) throw IoError("cannot write mse_by_bin_region.csv");
        os << "bin";
        for (const auto& r : m.region_names) os << "," << r;
        os << "\n";
        for (size_t g = 0; g < m.bin_labels.size(); ++g) {
            os << m.bin_labels[g];
            for (size_t k = 0; k < m.region_names.size(); ++k) {
                os << ",";
                if (const auto c = m.at(g, k)) os << fmt_double(*c);
            }
            os << "\n";
        }
    }

    {
        std::ofstream os(out_dir / "region_means_long.csv", std::ios::trunc);
        if (!os) throw IoError("cannot write region_means_long.csv");
        os << "subject_id,plasma,bin,region,real_mean,gen_mean\n";
        for (const auto& row : stats.rows)
            for (size_t k = 0; k < stats.region_names.size(); ++k) {
                os << row.subject_id << "," << fmt_double(row.plasma) << ","
                   << (row.bin ? stats.bins.bins[*row.bin].label : "unbinned") << ","
                   << stats.region_names[k] << "," << fmt_double(row.real_mean[k]) << ","
                   << fmt_double(row.gen_mean[k]) << "\n";
            }
    }

    {
        std::ofstream os(out_dir / "boxplot_stats.csv", std::ios::trunc);
        if (!os) throw IoError("cannot write boxplot_stats.csv");
        os << "bin,region,source,n,min,q1,median,q3,max,outliers\n";
        for (size_t g = 0; g < stats.bins.bins.size(); ++g) {
            if (stats.bin_counts[g] == 0) continue;
            for (size_t k = 0; k < stats.region_names.size(); ++k)
                for (const bool gen : {false, true}) {
                    std::vector<double> values;
                    for (const auto& row : stats.rows)
                        if (row.bin && *row.bin == g)
                            values.push_back(gen ? row.gen_mean[k] : row.real_mean[k]);
                    const BoxStats b = boxplot_stats(values);
                    os << stats.bins.bins[g].label << "," << stats.region_names[k] << ","
                       << (gen ? "gen" : "real") << "," << values.size() << ","
                       << fmt_double(b.min) << "," << fmt_double(b.q1) << ","
                       << fmt_double(b.median) << "," << fmt_double(b.q3) << ","
                       << fmt_double(b.max) << ",";
                    for (size_t i = 0; i < b.outliers.size(); ++i)
                        os << (i ? ";" : "") << fmt_double(b.outliers[i]);
                    os << "\n";
                }
        }
    }
}

void emit_report_json(const MseMatrix& m, const RegionStats& stats,
                      const std::filesystem::path& file) {
    nlohmann::json mse = nlohmann::json::object();
    for (size_t g = 0; g < m.bin_labels.size(); ++g) {
        nlohmann::json row = nlohmann::json::object();
        for (size_t k = 0; k < m.region_names.size(); ++k) {
            const auto c = m.at(g, k);
            row[m.region_names[k]] = c ? nlohmann::json(*c) : nlohmann::json(nullptr);
        }
        mse[m.bin_labels[g]] = std::move(row);
    }

    // FNV-1a over "label:name;" pairs identifies the region table.
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t k = 0; k < stats.region_names.size(); ++k) {
        const std::string part =
            std::to_string(stats.region_labels[k]) + ":" + stats.region_names[k] + ";";
        for (unsigned char ch : part) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
    }
    char hash_hex[20];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", (unsigned long long)h);

    nlohmann::json counts = nlohmann::json::object();
    for (size_t g = 0; g < stats.bins.bins.size(); ++g)
        counts[stats.bins.bins[g].label] = stats.bin_counts[g];

    const nlohmann::json j = {
        {"bins_mode", stats.bins.mode == PlasmaBins::Mode::paper ? "paper" : "full"},
        {"region_order", stats.region_names},
        {"region_table_hash", hash_hex},
        {"bin_counts", counts},
        {"unbinned", stats.unbinned},
        {"samples", stats.rows.size()},
        {"mse", mse}};

    std::ofstream os(file, std::ios::trunc);
    if (!os) throw IoError("cannot write report json: " + file.string());
    os << j.dump(2) << "\n";
}

}  // namespace taugen
