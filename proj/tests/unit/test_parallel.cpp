#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <stdexcept>

#include "dicke/parallel.hpp"
#include "dicke/quantum.hpp"

using namespace dicke;

TEST_CASE("results keep input order for any worker count", "[parallel]") {
    std::vector<int> cells(100);
    for (int k = 0; k < 100; ++k) cells[k] = k;
    for (int workers : {1, 2, 8}) {
        const auto out = parallel_map(cells, [](int k) { return k * k; }, workers);
        REQUIRE(out.size() == 100);
        for (int k = 0; k < 100; ++k) {
            REQUIRE(out[k].ok());
            CHECK(*out[k].value == k * k);
        }
    }
}

TEST_CASE("a poisoned cell is isolated", "[parallel][errors]") {
    std::vector<int> cells(100);
    for (int k = 0; k < 100; ++k) cells[k] = k;
    const auto out = parallel_map(
        cells,
        [](int k) {
            if (k == 37) throw std::runtime_error("poisoned");
            return k;
        },
        4);
    int ok = 0;
    for (const auto& r : out) ok += r.ok();
    CHECK(ok == 99);
    CHECK_FALSE(out[37].ok());
    CHECK(out[37].error == "poisoned");
}

TEST_CASE("zero workers is rejected", "[parallel][errors]") {
    CHECK_THROWS_AS(parallel_map(std::vector<int>{1}, [](int k) { return k; }, 0), std::invalid_argument);
}

TEST_CASE("default worker count honours the environment", "[parallel]") {
    setenv("DICKE_WORKERS", "3", 1);
    CHECK(default_workers() == 3);
    setenv("DICKE_WORKERS", "0", 1);
    CHECK(default_workers() >= 1);
    unsetenv("DICKE_WORKERS");
    CHECK(default_workers() >= 1);
}

TEST_CASE("derived seeds are distinct and stable", "[parallel][seeds]") {
    CHECK(quantum::derive_seed(42, 0) == quantum::derive_seed(42, 0));
    CHECK(quantum::derive_seed(42, 0) != quantum::derive_seed(42, 1));
    CHECK(quantum::derive_seed(42, 0) != quantum::derive_seed(43, 0));
}
