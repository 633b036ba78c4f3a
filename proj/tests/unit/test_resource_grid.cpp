#include <doctest.h>

#include "prcara/error.hpp"
#include "prcara/resource_grid.hpp"

using namespace prcara;

TEST_CASE("selection subset covers one RRI partition") {
  ResourceGrid grid;
  grid.num_subchannels = 5;
  grid.horizon = 1000;
  const auto s = selection_subset(VehicleId{3}, 2, 100, grid);
  CHECK(s.first_subframe == 101);
  CHECK(s.last_subframe == 200);
  CHECK(s.size() == 500);
  CHECK(s.cells.front() == ResourceIndex{0, 101});
  CHECK(s.cells.back() == ResourceIndex{4, 200});
  CHECK(std::is_sorted(s.cells.begin(), s.cells.end()));
  for (std::size_t i = 0; i < s.cells.size(); ++i) CHECK(s.offset_of(s.cells[i]) == i);
}

TEST_CASE("subset beyond the horizon is rejected") {
  ResourceGrid grid;
  grid.horizon = 250;
  CHECK_THROWS_AS(selection_subset(VehicleId{0}, 3, 100, grid), HorizonExceeded);
  CHECK_NOTHROW(selection_subset(VehicleId{0}, 2, 100, grid));
}

TEST_CASE("window subset is (g, g + w]") {
  const auto s = window_subset(VehicleId{1}, 7, 40, 20, 3);
  CHECK(s.contains({0, 41}));
  CHECK(s.contains({2, 60}));
  CHECK_FALSE(s.contains({0, 40}));
  CHECK_FALSE(s.contains({0, 61}));
  CHECK_FALSE(s.contains({3, 50}));
  CHECK(s.size() == 60);
}

TEST_CASE("single allocation per subset") {
  const auto s = window_subset(VehicleId{1}, 1, 0, 10, 2);
  const std::vector<ResourceIndex> one{{1, 5}};
  const std::vector<ResourceIndex> two{{1, 5}, {0, 6}};
  const std::vector<ResourceIndex> outside{{1, 11}};
  CHECK(assert_single_allocation(one, s));
  CHECK_FALSE(assert_single_allocation(two, s));
  CHECK_FALSE(assert_single_allocation(outside, s));
  CHECK_FALSE(assert_single_allocation({}, s));
}

TEST_CASE("cells order by subframe then subchannel") {
  CHECK(ResourceIndex{4, 1} < ResourceIndex{0, 2});
  CHECK(ResourceIndex{0, 2} < ResourceIndex{1, 2});
}

TEST_CASE("grid validation") {
  ResourceGrid g;
  g.num_subchannels = 0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}
