#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "helpers.hpp"
#include "taugen/errors.hpp"
#include "taugen/evaluation.hpp"
#include "taugen/rng.hpp"

using namespace taugen;
using taugen::testing::TempDir;

namespace {

LabelAtlas grid_atlas(int nx, int ny, int nz, int n_regions) {
    LabelAtlas a;
    a.nx = nx;
    a.ny = ny;
    a.nz = nz;
    a.labels.assign(a.voxels(), 0);
    const std::array<const char*, 6> names = {"Parahippocampal",     "Fusiform",
                                              "Inferior Temporal",   "Hippocampus",
                                              "Posterior Cingulate", "Entorhinal"};
    for (int k = 0; k < n_regions; ++k) a.region_table[uint32_t(k + 1)] = names[size_t(k % 6)];
    // Stripe regions along x.
    for (size_t i = 0; i < a.labels.size(); ++i)
        a.labels[i] = uint32_t(1 + (i % size_t(n_regions)));
    return a;
}

Volume const_volume(int nx, int ny, int nz, float value) {
    Volume v(nx, ny, nz, 1);
    for (float& f : v.data) f = value;
    return v;
}

}  // namespace

TEST_CASE("region_mean basics") {
    LabelAtlas a = grid_atlas(4, 1, 1, 2);
    const Volume v = const_volume(4, 1, 1, 0.7f);
    CHECK(region_mean(v, a, 1) == doctest::Approx(0.7).epsilon(1e-7));

    Volume two(4, 1, 1, 1);
    two.data = {0.2f, 0.0f, 0.4f, 0.0f};  // labels alternate 1,2,1,2
    CHECK(region_mean(two, a, 1) == doctest::Approx(0.3).epsilon(1e-7));

    CHECK_THROWS_AS(region_mean(v, a, 9), EvaluationError);
}

TEST_CASE("bin assignment: half-open edges, 10+, unbinned gap") {
    const PlasmaBins paper = PlasmaBins::paper_bins();
    const PlasmaBins full = PlasmaBins::full_bins();

    REQUIRE(paper.bins.size() == 5);
    CHECK(paper.bins[0].label == "0-2");
    CHECK(paper.bins[4].label == "10+");
    REQUIRE(full.bins.size() == 6);
    CHECK(full.bins[4].label == "8-10");

    CHECK(*paper.assign(2.0) == 1);   // lower edge belongs to 2-4
    CHECK(*paper.assign(10.65) == 4); // 10+
    CHECK(!paper.assign(9.0));        // unbinned under paper bins
    CHECK(*full.assign(9.0) == 4);    // 8-10 under full bins
    CHECK(*paper.assign(0.0) == 0);
    CHECK_THROWS_AS(paper.assign(-0.5), ParameterError);
}

TEST_CASE("mse matrix: identity, hand value, and group-mean cancellation") {
    const int nx = 6;
    LabelAtlas atlas = grid_atlas(nx, 1, 1, 1);

    auto sample_with_mean = [&](std::vector<Volume>& keep, const std::string& id, double plasma,
                                float real_mean, float gen_mean) {
        keep.push_back(const_volume(nx, 1, 1, real_mean));
        keep.push_back(const_volume(nx, 1, 1, gen_mean));
        EvalSample s;
        s.subject_id = id;
        s.plasma = plasma;
        s.real = &keep[keep.size() - 2];
        s.gen = &keep.back();
        s.atlas = &atlas;
        return s;
    };

    SUBCASE("gen == real gives the all-zero matrix") {
        std::vector<Volume> keep;
        keep.reserve(8);
        std::vector<EvalSample> samples;
        samples.push_back(sample_with_mean(keep, "a", 1.0, 0.4f, 0.4f));
        samples.push_back(sample_with_mean(keep, "b", 5.0, 0.8f, 0.8f));
        const RegionStats stats = compute_region_stats(samples, PlasmaBins::paper_bins());
        const MseMatrix m = mse_matrix(stats);
        for (size_t g = 0; g < m.bin_labels.size(); ++g)
            for (size_t k = 0; k < m.region_names.size(); ++k) {
                const auto c = m.at(g, k);
                if (c) CHECK(*c == 0.0);
            }
        CHECK(m.trace_sum() == 0.0);
    }

    SUBCASE("one bin, one region, group means 1.0 vs 0.9") {
        std::vector<Volume> keep;
        keep.reserve(2);
        std::vector<EvalSample> samples;
        samples.push_back(sample_with_mean(keep, "a", 1.0, 1.0f, 0.9f));
        const RegionStats stats = compute_region_stats(samples, PlasmaBins::paper_bins());
        const MseMatrix m = mse_matrix(stats);
        // inputs are float-quantized volumes, so allow float-level slack
        CHECK(*m.at(0, 0) == doctest::Approx(0.01).epsilon(1e-5));
        // bins without samples stay absent
        CHECK(!m.at(1, 0).has_value());
    }

    SUBCASE("distribution differences cancel at group level") {
        std::vector<Volume> keep;
        keep.reserve(6);
        std::vector<EvalSample> samples;
        samples.push_back(sample_with_mean(keep, "a", 0.5, 0.2f, 0.3f));
        samples.push_back(sample_with_mean(keep, "b", 0.6, 0.4f, 0.3f));
        samples.push_back(sample_with_mean(keep, "c", 0.7, 0.6f, 0.6f));
        const RegionStats stats = compute_region_stats(samples, PlasmaBins::paper_bins());
        const MseMatrix m = mse_matrix(stats);
        CHECK(*m.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("pipeline matches a brute-force recomputation on randomized cases") {
    RngState rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int nx = 4 + int(rng.next_u64() % 5);
        const int ny = 2 + int(rng.next_u64() % 3);
        const int nz = 1 + int(rng.next_u64() % 2);
        const int regions = 1 + int(rng.next_u64() % 4);
        const int n_samples = 1 + int(rng.next_u64() % 6);
        LabelAtlas atlas = grid_atlas(nx, ny, nz, regions);

        std::vector<Volume> store;
        store.reserve(size_t(n_samples) * 2);
        std::vector<EvalSample> samples;
        std::vector<double> plasmas;
        for (int i = 0; i < n_samples; ++i) {
            Volume real(nx, ny, nz, 1), gen(nx, ny, nz, 1);
            for (float& f : real.data) f = float(rng.uniform01());
            for (float& f : gen.data) f = float(rng.uniform01());
            store.push_back(std::move(real));
            store.push_back(std::move(gen));
            plasmas.push_back(rng.uniform(0.0, 13.0));
        }
        for (int i = 0; i < n_samples; ++i) {
            EvalSample s;
            s.subject_id = "s" + std::to_string(i);
            s.plasma = plasmas[size_t(i)];
            s.real = &store[size_t(i) * 2];
            s.gen = &store[size_t(i) * 2 + 1];
            s.atlas = &atlas;
            samples.push_back(s);
        }

        const PlasmaBins bins =
            trial % 2 ? PlasmaBins::full_bins() : PlasmaBins::paper_bins();
        const RegionStats stats = compute_region_stats(samples, bins);
        const MseMatrix m = mse_matrix(stats);

        // Independent single pass over raw voxels.
        const auto ordered = ordered_regions(atlas);
        for (size_t g = 0; g < bins.bins.size(); ++g) {
            for (size_t k = 0; k < ordered.size(); ++k) {
                double racc = 0.0, gacc = 0.0;
                int count = 0;
                for (int i = 0; i < n_samples; ++i) {
                    const auto bin = bins.assign(plasmas[size_t(i)]);
                    if (!bin || *bin != g) continue;
                    ++count;
                    double rsum = 0.0, gsum = 0.0;
                    size_t nvox = 0;
                    for (size_t vi = 0; vi < atlas.labels.size(); ++vi) {
                        if (atlas.labels[vi] != ordered[k].first) continue;
                        rsum += double(store[size_t(i) * 2].data[vi]);
                        gsum += double(store[size_t(i) * 2 + 1].data[vi]);
                        ++nvox;
                    }
                    racc += rsum / double(nvox);
                    gacc += gsum / double(nvox);
                }
                const auto cell = m.at(g, k);
                if (count == 0) {
                    CHECK(!cell.has_value());
                } else {
                    const double d = racc / count - gacc / count;
                    REQUIRE(cell.has_value());
                    CHECK(std::abs(*cell - d * d) < 1e-12);
                }
            }
        }

        // Bin counts plus unbinned account for every sample.
        size_t total = stats.unbinned;
        for (size_t c : stats.bin_counts) total += c;
        CHECK(total == size_t(n_samples));
    }
}

TEST_CASE("boxplot stats follow the Tukey convention") {
    const BoxStats b = boxplot_stats({1, 2, 3, 4, 5});
    CHECK(b.median == 3.0);
    CHECK(b.q1 == 2.0);
    CHECK(b.q3 == 4.0);
    CHECK(b.min == 1.0);
    CHECK(b.max == 5.0);
    CHECK(b.outliers.empty());

    const BoxStats o = boxplot_stats({0, 0, 0, 0, 10});
    CHECK(o.q1 == 0.0);
    CHECK(o.q3 == 0.0);
    REQUIRE(o.outliers.size() == 1);
    CHECK(o.outliers[0] == 10.0);

    const BoxStats s = boxplot_stats({0.5});
    CHECK(s.min == 0.5);
    CHECK(s.q1 == 0.5);
    CHECK(s.median == 0.5);
    CHECK(s.q3 == 0.5);
    CHECK(s.max == 0.5);

    CHECK_THROWS_AS(boxplot_stats({}), EvaluationError);
}

TEST_CASE("emitted tables pin the column order and are deterministic") {
    TempDir tmp("eval");
    LabelAtlas atlas = grid_atlas(6, 1, 1, 6);
    std::vector<Volume> keep;
    keep.reserve(4);
    std::vector<EvalSample> samples;
    for (int i = 0; i < 2; ++i) {
        keep.push_back(const_volume(6, 1, 1, 0.3f + 0.1f * float(i)));
        keep.push_back(const_volume(6, 1, 1, 0.4f));
        EvalSample s;
        s.subject_id = "s" + std::to_string(i);
        s.plasma = 1.0 + i;
        s.real = &keep[keep.size() - 2];
        s.gen = &keep.back();
        s.atlas = &atlas;
        samples.push_back(s);
    }
    const RegionStats stats = compute_region_stats(samples, PlasmaBins::paper_bins());
    const MseMatrix m = mse_matrix(stats);
    emit_tables(m, stats, tmp.path);
    emit_report_json(m, stats, tmp.path / "report.json");

    std::ifstream is(tmp.path / "mse_by_bin_region.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "bin,Parahippocampal,Fusiform,Inferior Temporal,Hippocampus,Posterior "
          "Cingulate,Entorhinal");
    std::string line;
    int rows = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 5);  // paper bins

    // Determinism.
    TempDir tmp2("eval");
    emit_tables(m, stats, tmp2.path);
    std::ifstream a(tmp.path / "mse_by_bin_region.csv"), b(tmp2.path / "mse_by_bin_region.csv");
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}
