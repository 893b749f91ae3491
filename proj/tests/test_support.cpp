#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "varhom/io.hpp"
#include "varhom/parallel.hpp"
#include "varhom/verify.hpp"

using namespace varhom;

TEST(Format, RoundTripsDoubles) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 1.6}) EXPECT_EQ(std::stod(fmt_double(v)), v);
    EXPECT_EQ(fmt_double(1.6), "1.6000000000000001");
}

TEST(Csv, HeaderRowsAndTypes) {
    CsvTable t({"a", "b", "c", "d"});
    t.row().add(1.5).add(3).add(true).add("x");
    t.row().add(std::size_t{7}).add(-1).add(false).add(std::string("y"));
    EXPECT_EQ(t.str(), "a,b,c,d\n1.5,3,1,x\n7,-1,0,y\n");
    CsvTable e({"a"});
    EXPECT_THROW(e.add(1.0), ValidationError);
}

TEST(AtomicWrite, ReplacesContentAndLeavesNoTemporary) {
    const auto dir = std::filesystem::temp_directory_path() / "varhom_io_test";
    std::filesystem::remove_all(dir);
    const auto p = dir / "nested" / "out.csv";
    write_file_atomic(p, "first\n");
    write_file_atomic(p, "second\n");
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    EXPECT_EQ(ss.str(), "second\n");
    auto tmp = p;
    tmp += ".tmp";
    EXPECT_FALSE(std::filesystem::exists(tmp));
    std::filesystem::remove_all(dir);
}

TEST(Parallel, IndexOrderedForAnyWorkerCount) {
    for (int jobs : {1, 2, 5}) {
        const auto out = parallel_map(100, [](std::size_t i) { return static_cast<int>(i * i); }, jobs);
        for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
    }
}

TEST(Parallel, RethrowsLowestIndexFailure) {
    try {
        parallel_map(
            20,
            [](std::size_t i) -> int {
                if (i == 7 || i == 13) throw std::runtime_error("fail " + std::to_string(i));
                return 0;
            },
            4);
        FAIL() << "expected an exception";
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "fail 7");
    }
}

TEST(Parallel, NestedCallsRunSerially) {
    std::atomic<int> inner_threads{0};
    parallel_map(
        4,
        [&](std::size_t) {
            const auto id = std::this_thread::get_id();
            parallel_map(
                4,
                [&](std::size_t) {
                    if (std::this_thread::get_id() != id) ++inner_threads;
                    return 0;
                },
                4);
            return 0;
        },
        4);
    EXPECT_EQ(inner_threads.load(), 0);
}

TEST(Determinism, SuiteCsvIndependentOfWorkerCount) {
    set_default_jobs(1);
    const auto a = run_suite("vitali", 7).table.str();
    set_default_jobs(3);
    const auto b = run_suite("vitali", 7).table.str();
    set_default_jobs(0);
    EXPECT_EQ(a, b);
}

TEST(Verify, UnknownSuite) { EXPECT_THROW(run_suite("nope", 1), ValidationError); }

TEST(Verify, ConvexSuitePasses) {
    const auto r = run_suite("convex", 3);
    EXPECT_TRUE(r.pass());
    ASSERT_FALSE(r.checks.empty());
    EXPECT_EQ(r.checks.front().criterion, 1);
}
