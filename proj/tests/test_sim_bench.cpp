#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "fmradio/error.hpp"
#include "fmradio/sim_bench.hpp"

using namespace fmradio;

TEST_CASE("generator rows have the requested communality") {
    for (int m : {2, 5, 12, 20})
        for (double c : {0.7, 0.8, 0.9})
            for (Balance b : {Balance::balanced, Balance::unbalanced}) {
                if (b == Balance::unbalanced && m == 2) continue;
                const auto gen = build_loading_matrix(100, m, c, b);
                const Eigen::VectorXd comm = gen.loadings.rowwise().squaredNorm();
                CHECK((comm.array() - c).abs().maxCoeff() < 1e-12);
                CHECK((gen.uniquenesses.array() - (1.0 - c)).abs().maxCoeff() < 1e-12);
                for (Eigen::Index j = 0; j < 100; ++j) CHECK((gen.loadings.row(j).array() == 0.6).count() == 1);
            }
    const auto gen = build_loading_matrix(100, 5, 0.7, Balance::balanced);
    CHECK(gen.loadings(0, 1) == doctest::Approx(std::sqrt(0.085)));
    CHECK(gen.loadings(0, 1) == doctest::Approx(0.29155).epsilon(1e-5));
    CHECK_THROWS_AS(build_loading_matrix(100, 1, 0.7, Balance::balanced), InputError);
    CHECK_THROWS_AS(build_loading_matrix(100, 5, 0.3, Balance::balanced), InputError);
}

TEST_CASE("indicator allocations") {
    CHECK(indicator_allocation(100, 5, Balance::balanced) == std::vector<int>{20, 20, 20, 20, 20});
    CHECK(indicator_allocation(100, 12, Balance::balanced) == std::vector<int>{9, 9, 9, 9, 8, 8, 8, 8, 8, 8, 8, 8});
    CHECK(indicator_allocation(100, 5, Balance::unbalanced) == std::vector<int>{40, 20, 15, 15, 10});
    CHECK(indicator_allocation(200, 5, Balance::unbalanced) == std::vector<int>{80, 40, 30, 30, 20});
    CHECK(indicator_allocation(100, 12, Balance::unbalanced) ==
          std::vector<int>{20, 10, 10, 10, 10, 10, 5, 5, 5, 5, 5, 5});
    const auto twenty = indicator_allocation(100, 20, Balance::unbalanced);
    CHECK(twenty.size() == 20);
    int total = 0;
    for (int c : twenty) total += c;
    CHECK(total == 100);
    CHECK_THROWS_AS(indicator_allocation(150, 5, Balance::unbalanced), InputError);
    CHECK_THROWS_AS(indicator_allocation(100, 7, Balance::unbalanced), InputError);
}

TEST_CASE("simulated data follow the generator covariance") {
    const auto gen = build_loading_matrix(10, 2, 0.7, Balance::balanced);
    Rng rng(99);
    const int n = 100000;
    const Eigen::MatrixXd x = simulate_dataset(gen, n, rng);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    CHECK(mean.cwiseAbs().maxCoeff() < 4.0 / std::sqrt(n));
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1.0);
    CHECK((cov - gen.covariance()).cwiseAbs().maxCoeff() < 0.02);

    Rng a(5), b(5);
    CHECK(simulate_dataset(gen, 20, a) == simulate_dataset(gen, 20, b));
}

TEST_CASE("table binning") {
    const auto bins = table_bins(5);
    REQUIRE(bins.size() == 10);
    CHECK(bins.front().label == "1");
    CHECK(bins.back().label == ">=10");
    CHECK(bin_counts({{5, 100}}, bins) == std::vector<int>{0, 0, 0, 0, 100, 0, 0, 0, 0, 0});

    const auto twelve = table_bins(12);
    CHECK(twelve.front().label == "<=8");
    CHECK(twelve.back().label == ">=17");
    const auto counts = bin_counts({{10, 99}, {30, 1}}, twelve);
    CHECK(counts.back() == 1);
    CHECK(counts[2] == 99);

    const auto twenty = table_bins(20);
    CHECK(twenty.front().label == "<=16");
    CHECK(twenty.back().label == ">=25");
}

TEST_CASE("scenario files parse and reject unknown keys") {
    std::istringstream in("# comment\np=200\nm_true=12\ncommunality=0.8\nbalance=unbalanced\nn=50,250\n"
                          "replicates=7\nseed=42\nlrt_rank_adjusted=true\n");
    const auto s = parse_scenario(in);
    CHECK(s.p == 200);
    CHECK(s.m_true == 12);
    CHECK(s.communality == 0.8);
    CHECK(s.balance == Balance::unbalanced);
    CHECK(s.n == std::vector<int>{50, 250});
    CHECK(s.replicates == 7);
    CHECK(s.seed == 42);
    CHECK(s.lrt_rank_adjusted);
    CHECK(s.id() == "p200_m12_c0.8_unbalanced");

    std::ostringstream out;
    write_scenario(out, s);
    std::istringstream again(out.str());
    const auto back = parse_scenario(again);
    CHECK(back.id() == s.id());
    CHECK(back.n == s.n);
    CHECK(back.seed == s.seed);

    std::istringstream bad("p=100\ncolour=red\n");
    CHECK_THROWS_AS(parse_scenario(bad), InputError);
    std::istringstream bad_value("p=ten\n");
    CHECK_THROWS_AS(parse_scenario(bad_value), InputError);
}

TEST_CASE("scenario results are deterministic and independent of the thread count") {
    SimulationScenario s;
    s.p = 20;
    s.m_true = 2;
    s.communality = 0.9;
    s.n = {40, 80};
    s.replicates = 4;
    s.seed = 7;
    const auto a = run_scenario(s);
    setenv("FMRADIO_THREADS", "1", 1);
    const auto b = run_scenario(s);
    unsetenv("FMRADIO_THREADS");
    REQUIRE(a.by_n.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(a.by_n[k].histograms == b.by_n[k].histograms);
        CHECK(a.by_n[k].failures == 0);
        int total = 0;
        for (const auto& [m, count] : a.by_n[k].histograms.at(SelectionMethod::gb)) total += count;
        CHECK(total == 4);
    }

    std::ostringstream hist;
    emit_histogram_csv(hist, a);
    std::istringstream hist_in(hist.str());
    const auto parsed = parse_histogram_csv(hist_in);
    for (const auto& r : a.by_n)
        for (const auto& [method, h] : r.histograms) CHECK(parsed.at({method, r.n}) == h);

    std::ostringstream table;
    emit_table_csv(table, a);
    std::istringstream table_in(table.str());
    const auto cells = parse_table_csv(table_in);
    const auto bins = table_bins(2);
    for (const auto& r : a.by_n)
        for (const auto& [method, h] : r.histograms) {
            const auto counts = bin_counts(h, bins);
            for (std::size_t j = 0; j < bins.size(); ++j) CHECK(cells.at({method, r.n}).at("m" + bins[j].label) == counts[j]);
        }
}
