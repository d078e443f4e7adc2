#include "safebike/routing.hpp"
#include "support/route_oracle.hpp"

#include <gtest/gtest.h>

#include <random>

namespace safebike::routing {
namespace {

using testing::kBaseLat;
using testing::kBaseLon;
using testing::offset;

TEST(SchemeNames, RoundTrip) {
  for (auto s : {Scheme::shortest, Scheme::safest, Scheme::optimal}) {
    EXPECT_EQ(parse_scheme(to_string(s)), s);
  }
  EXPECT_FALSE(parse_scheme("fastest").has_value());
}

TEST(Snap, ExactNodeAndTies) {
  const auto g = testing::make_grid(2, 2, 100.0);
  EXPECT_EQ(snap_to_node(g.network, g.network.node(3)), 3u);
  // Midpoint of the bottom edge is equidistant from nodes 0 and 1.
  const GeoPoint a = g.network.node(0);
  const GeoPoint b = g.network.node(1);
  EXPECT_EQ(snap_to_node(g.network, GeoPoint{a.lat(), (a.lon() + b.lon()) / 2}), 0u);
  EXPECT_THROW(snap_to_node(RoadNetwork{}, a), std::invalid_argument);
}

TEST(Snap, MatchesBruteForce) {
  const auto g = testing::make_grid(4, 5, 120.0, 30.0, 6);
  const NodeLocator loc(g.network);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-100.0, 600.0);
  for (int i = 0; i < 50; ++i) {
    const GeoPoint p = offset(kBaseLat, kBaseLon, u(rng), u(rng));
    EXPECT_EQ(snap_to_node(loc, p), *testing::brute_nearest_node(g.network, p));
  }
}

TEST(Dijkstra, SameNode) {
  const auto g = testing::make_grid(2, 2, 100.0);
  const auto p = dijkstra(g.network, 2, 2, [](const RoadEdge&) { return 1.0; });
  ASSERT_TRUE(p);
  EXPECT_EQ(p->nodes, std::vector<NodeId>{2});
  EXPECT_EQ(p->cost, 0.0);
}

TEST(Dijkstra, OppositeCornersOfUnitGrid) {
  const auto g = testing::make_grid(2, 2, 100.0);
  const auto p = dijkstra(g.network, 0, 3, [](const RoadEdge&) { return 1.0; });
  ASSERT_TRUE(p);
  EXPECT_EQ(p->cost, 2.0);
  EXPECT_EQ(p->nodes.size(), 3u);
}

TEST(Dijkstra, Unreachable) {
  RoadNetwork net;
  net.add_node({40.0, -74.0});
  net.add_node({40.1, -74.0});
  EXPECT_FALSE(dijkstra(net, 0, 1, [](const RoadEdge&) { return 1.0; }).has_value());
}

TEST(Dijkstra, RejectsNegativeCost) {
  const auto g = testing::make_grid(2, 2, 100.0);
  EXPECT_THROW(dijkstra(g.network, 0, 3, [](const RoadEdge&) { return -1.0; }), std::invalid_argument);
}

TEST(Dijkstra, MatchesEnumerationOnRandomCosts) {
  std::mt19937 rng(100);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = testing::make_grid(3, 4, 100.0, 10.0, static_cast<unsigned>(trial));
    std::vector<double> costs(g.network.edge_count());
    for (auto& c : costs) {
      c = u(rng);
    }
    auto cost = [&](const RoadEdge& e) {
      for (EdgeIndex i = 0; i < g.network.edge_count(); ++i) {
        if (&g.network.edge(i) == &e) {
          return costs[i];
        }
      }
      return 0.0;
    };
    const NodeId s = static_cast<NodeId>(trial % 12);
    const NodeId t = static_cast<NodeId>((trial * 7 + 5) % 12);
    const auto got = dijkstra(g.network, s, t, cost);
    const auto want = testing::best_path_by_enumeration(g.network, s, t, cost);
    ASSERT_TRUE(got && want);
    EXPECT_DOUBLE_EQ(got->cost, want->cost);
    EXPECT_EQ(got->nodes, want->path.nodes);
  }
}

// 3x3 grid whose direct middle row carries crime; the detour around it is longer.
testing::GridFixture crime_corridor() {
  auto g = testing::make_grid(3, 3, 200.0);
  for (EdgeIndex e = 0; e < g.network.edge_count(); ++e) {
    if (g.network.edge(e).id.rfind("h1_", 0) == 0) {
      g.network.set_crime_count(e, 10);
    }
  }
  return g;
}

TEST(LegRoute, ShortestAndSafestDiffer) {
  const auto g = crime_corridor();
  const NodeId s = g.node_at(1, 0);
  const NodeId t = g.node_at(1, 2);
  const auto shortest = leg_route(g.network, s, t, FactorWeights::shortest(), TravelMode::bike);
  const auto safest = leg_route(g.network, s, t, FactorWeights::safest(), TravelMode::bike);
  ASSERT_TRUE(shortest && safest);
  EXPECT_EQ(shortest->crime_total, 20);
  EXPECT_EQ(safest->crime_total, 0);
  EXPECT_LT(shortest->length, safest->length);
  const auto want = testing::best_path_by_enumeration(g.network, s, t, testing::oracle_edge_cost(g.network, 0, 1));
  EXPECT_EQ(safest->node_path, want->path.nodes);
}

TEST(LegRoute, GammaOnlyFallsBackToLength) {
  const auto g = crime_corridor();
  const auto w = FactorWeights::normalized(0, 0, 1);
  const auto leg = leg_route(g.network, g.node_at(1, 0), g.node_at(1, 2), w, TravelMode::walk);
  const auto shortest = leg_route(g.network, g.node_at(1, 0), g.node_at(1, 2), FactorWeights::shortest(), TravelMode::walk);
  EXPECT_EQ(leg->node_path, shortest->node_path);
}

TEST(LegRoute, DurationAndGeometry) {
  const auto g = testing::make_grid(1, 3, 250.0);
  const auto leg = leg_route(g.network, 2, 0, FactorWeights::shortest(), TravelMode::walk);
  ASSERT_TRUE(leg);
  EXPECT_NEAR(leg->duration_s, leg->length / (5.0 / 3.6), 1e-9);
  EXPECT_EQ(leg->geometry.front(), g.network.node(2));
  EXPECT_EQ(leg->geometry.back(), g.network.node(0));
  EXPECT_EQ(leg->geometry.size(), 3u);
}

CandidateRoute hand_candidate(std::string o, std::string d, double len, std::int64_t crime, double avl) {
  CandidateRoute c;
  c.origin_station_id = std::move(o);
  c.destination_station_id = std::move(d);
  c.total_length = len;
  c.total_crime = crime;
  c.avl = avl;
  return c;
}

TEST(Score, ThreeHandBuiltCandidates) {
  const auto r = score_candidates({hand_candidate("a", "x", 1000, 10, 50), hand_candidate("b", "x", 1400, 2, 50),
                                   hand_candidate("c", "x", 1600, 6, 300)},
                                  FactorWeights::defaults());
  EXPECT_NEAR(r.alternatives[0].score, 0.3 * (1000.0 / 1600) + 0.3 * 1.0 + 0.4 * (1 - 50.0 / 300), 1e-12);
  EXPECT_NEAR(r.alternatives[1].score, 0.3 * 0.875 + 0.3 * 0.2 + 0.4 * (5.0 / 6), 1e-12);
  EXPECT_NEAR(r.alternatives[2].score, 0.48, 1e-12);
  EXPECT_EQ(r.chosen_index, 2u);
  EXPECT_EQ(r.max_length, 1600);
  EXPECT_EQ(r.max_crime, 10);
  EXPECT_EQ(r.max_avl, 300);
}

TEST(Score, SingleAndEmpty) {
  const auto r = score_candidates({hand_candidate("a", "b", 10, 0, 0)}, FactorWeights::defaults());
  EXPECT_EQ(r.chosen_index, 0u);
  EXPECT_NEAR(r.chosen().score, 0.3 + 0.4, 1e-12);
  EXPECT_THROW(score_candidates({}, FactorWeights::defaults()), std::invalid_argument);
}

TEST(Score, TiesByLengthThenIds) {
  const auto w = FactorWeights::normalized(0, 0, 1);
  const auto r = score_candidates({hand_candidate("b", "y", 500, 0, 4), hand_candidate("a", "z", 500, 0, 4),
                                   hand_candidate("a", "y", 500, 0, 4), hand_candidate("c", "c", 400, 0, 4)},
                                  w);
  EXPECT_EQ(r.chosen().origin_station_id, "c");
  const auto r2 = score_candidates({hand_candidate("b", "y", 500, 0, 4), hand_candidate("a", "z", 500, 0, 4),
                                    hand_candidate("a", "y", 500, 0, 4)},
                                   w);
  EXPECT_EQ(r2.chosen().origin_station_id, "a");
  EXPECT_EQ(r2.chosen().destination_station_id, "y");
}

TEST(Score, BoundsAndReductions) {
  std::mt19937 rng(44);
  std::uniform_real_distribution<double> len(100, 5000);
  std::uniform_int_distribution<int> crime(0, 30);
  std::uniform_real_distribution<double> avl(0, 200);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CandidateRoute> cs;
    for (int i = 0; i < 6; ++i) {
      cs.push_back(hand_candidate("o" + std::to_string(i), "d", len(rng), crime(rng), avl(rng)));
    }
    const auto w = FactorWeights::normalized(u(rng), u(rng), u(rng) + 1e-3);
    const auto r = score_candidates(cs, w);
    for (const auto& c : r.alternatives) {
      EXPECT_GE(c.score, 0.0);
      EXPECT_LE(c.score, 1.0 + 1e-12);
      EXPECT_LE(r.chosen().score, c.score);
    }
    const auto by_len = score_candidates(cs, FactorWeights::shortest());
    const auto by_crime = score_candidates(cs, FactorWeights::safest());
    for (const auto& c : cs) {
      EXPECT_LE(by_len.chosen().total_length, c.total_length);
      EXPECT_LE(by_crime.chosen().total_crime, c.total_crime);
    }
  }
}

struct Engine {
  testing::Scenario sc;
  RoadNetwork network;
  NodeLocator nodes;
  spatial::StationLocator stations;

  explicit Engine(testing::Scenario s)
      : sc(std::move(s)),
        network(spatial::annotate_crime(sc.grid.network, sc.crimes, {})),
        nodes(network),
        stations(sc.stations.registry) {}

  RoutingContext context(spatial::BufferConfig buffers = {}) const {
    return RoutingContext{network, nodes, sc.stations.registry, stations, buffers, Speeds{},
                          [this](const std::string& id, Instant t) {
                            return testing::scenario_availability(sc.stations, id, t);
                          }};
  }

  RouteQuery query(const FactorWeights& w, Scheme s = Scheme::optimal) const {
    return RouteQuery{sc.origin, sc.destination, sc.departure, w, s};
  }
};

TEST(Candidates, TimingAndAvailability) {
  const Engine eng(testing::random_scenario(3));
  const auto cands = generate_candidates(eng.query(FactorWeights::defaults()), eng.context(), FactorWeights::defaults());
  ASSERT_FALSE(cands.empty());
  for (const auto& c : cands) {
    EXPECT_NE(c.origin_station_id, c.destination_station_id);
    EXPECT_EQ(c.check_out, eng.sc.departure + std::chrono::seconds{std::llround(c.legs[0].length * 3.6 / 5.0)});
    EXPECT_EQ(c.check_in, c.check_out + std::chrono::seconds{std::llround(c.legs[1].length * 3.6 / 15.0)});
    const auto out = testing::scenario_availability(eng.sc.stations, c.origin_station_id, c.check_out);
    const auto in = testing::scenario_availability(eng.sc.stations, c.destination_station_id, c.check_in);
    EXPECT_EQ(c.avl, out.bikes * in.docks);
    EXPECT_EQ(c.legs[0].mode, TravelMode::walk);
    EXPECT_EQ(c.legs[1].mode, TravelMode::bike);
  }
}

TEST(Candidates, SharedStationExcluded) {
  testing::Scenario sc;
  sc.grid = testing::make_grid(2, 3, 150.0);
  sc.stations.registry.insert_or_assign(Station{"A", "A", sc.grid.network.node(0), 10});
  sc.stations.registry.insert_or_assign(Station{"B", "B", sc.grid.network.node(2), 10});
  sc.stations.base_counts = {{"A", {3, 3}}, {"B", {3, 3}}};
  sc.origin = sc.grid.network.node(1);
  sc.destination = sc.grid.network.node(4);
  const Engine eng(std::move(sc));
  const auto cands = generate_candidates(eng.query(FactorWeights::defaults()), eng.context(), FactorWeights::defaults());
  EXPECT_EQ(cands.size(), 2u);  // 2x2 pairs minus A->A and B->B
}

TEST(Candidates, Errors) {
  testing::Scenario sc;
  sc.grid = testing::make_grid(2, 2, 150.0);
  sc.stations.registry.insert_or_assign(Station{"A", "A", sc.grid.network.node(0), 10});
  sc.stations.base_counts = {{"A", {3, 3}}};
  sc.origin = sc.grid.network.node(0);
  sc.destination = sc.grid.network.node(3);
  const Engine eng(std::move(sc));
  try {
    route(eng.query(FactorWeights::defaults()), eng.context());
    FAIL();
  } catch (const RouteError& e) {
    EXPECT_EQ(e.code(), RouteError::Code::no_route);  // only A at both ends
  }
  spatial::BufferConfig tiny;
  tiny.station_buffer_k = 1.0;
  auto q = eng.query(FactorWeights::defaults());
  q.origin = offset(kBaseLat, kBaseLon, 75, 75);
  try {
    route(q, eng.context(tiny));
    FAIL();
  } catch (const RouteError& e) {
    EXPECT_EQ(e.code(), RouteError::Code::no_station_in_range);
    EXPECT_STREQ(e.code_name(), "no_station_in_range");
  }
}

TEST(Route, SchemesEqualSpecialWeights) {
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const Engine eng(testing::random_scenario(seed));
    const auto ctx = eng.context();
    const auto a = route(eng.query(FactorWeights::defaults(), Scheme::shortest), ctx);
    const auto b = route(eng.query(FactorWeights::shortest()), ctx);
    EXPECT_EQ(a.chosen(), b.chosen());
    const auto c = route(eng.query(FactorWeights::defaults(), Scheme::safest), ctx);
    const auto d = route(eng.query(FactorWeights::safest()), ctx);
    EXPECT_EQ(c.chosen(), d.chosen());
  }
}

TEST(Route, MatchesOracleOnRandomScenarios) {
  const std::vector<FactorWeights> weights = {FactorWeights::defaults(), FactorWeights::shortest(),
                                              FactorWeights::safest(), FactorWeights::normalized(0.2, 0.5, 0.3)};
  int compared = 0;
  for (unsigned seed = 11; seed <= 20; ++seed) {
    const Engine eng(testing::random_scenario(seed));
    RoadNetwork ref = eng.sc.grid.network;
    const auto counts = testing::brute_crime_counts(ref, eng.sc.crimes, 50.0);
    for (EdgeIndex e = 0; e < ref.edge_count(); ++e) {
      ref.set_crime_count(e, counts[e]);
    }
    auto avail = [&](const std::string& id, Instant t) { return testing::scenario_availability(eng.sc.stations, id, t); };
    for (const auto& w : weights) {
      const auto want = testing::oracle_route(ref, eng.sc.stations.registry, avail, eng.sc.origin, eng.sc.destination,
                                              eng.sc.departure, w.alpha(), w.beta(), w.gamma());
      if (!want) {
        EXPECT_THROW(route(eng.query(w), eng.context()), RouteError);
        continue;
      }
      const auto got = route(eng.query(w), eng.context());
      ++compared;
      const auto& c = got.chosen();
      EXPECT_EQ(c.origin_station_id, want->best().origin_id) << "seed " << seed;
      EXPECT_EQ(c.destination_station_id, want->best().destination_id) << "seed " << seed;
      for (std::size_t l = 0; l < 3; ++l) {
        EXPECT_EQ(c.legs[l].node_path, want->best().legs[l].nodes) << "seed " << seed << " leg " << l;
      }
      EXPECT_EQ(c.score, want->best().score);
    }
  }
  EXPECT_GE(compared, 20);
}

TEST(Route, Deterministic) {
  const Engine eng(testing::random_scenario(7));
  const auto a = route(eng.query(FactorWeights::defaults()), eng.context());
  const auto b = route(eng.query(FactorWeights::defaults()), eng.context());
  EXPECT_EQ(a.alternatives, b.alternatives);
  EXPECT_EQ(a.chosen_index, b.chosen_index);
}

}  // namespace
}  // namespace safebike::routing
