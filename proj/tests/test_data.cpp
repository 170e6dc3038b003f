#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "pathcast/data.hpp"

using namespace pathcast;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.n_nodes = 24;
  cfg.n_steps = 120;
  cfg.d = 2;
  cfg.edge_probability = 0.15;
  cfg.n_paths = 8;
  cfg.window = 8;
  cfg.horizon = 2;
  cfg.seed = 42;
  return cfg;
}

// Event-centric label recount: walks the event log once and marks every
// (path, t) whose horizon the event falls into, then thresholds. This is an
// independent route to the same labels as the window-centric builder.
std::map<std::pair<std::size_t, std::size_t>, std::size_t> recount_alarms(
    const std::vector<std::vector<std::size_t>>& paths, const std::vector<NodeEvent>& events,
    std::size_t window, std::size_t horizon, std::size_t t_total) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> alarms;
  const std::size_t t_first = window - 1;
  const std::size_t t_last = t_total - horizon;
  for (const NodeEvent& ev : events) {
    for (std::size_t pid = 0; pid < paths.size(); ++pid) {
      const auto& path = paths[pid];
      bool hits = false;
      if (ev.kind == EventKind::kLinkFailure) {
        for (std::size_t i = 0; i + 1 < path.size() && !hits; ++i) {
          hits = path[i] == ev.src && path[i + 1] == ev.dst;
        }
      } else if (ev.kind == EventKind::kClosure) {
        for (std::size_t node : path) {
          if (node == ev.node) {
            hits = true;
            break;
          }
        }
      }
      if (!hits) continue;
      // The event at step s is inside the horizon of windows ending at
      // t in [s - horizon, s - 1].
      for (long long t = ev.t - static_cast<long long>(horizon); t < ev.t; ++t) {
        if (t < static_cast<long long>(t_first) || t >= static_cast<long long>(t_last)) continue;
        ++alarms[{pid, static_cast<std::size_t>(t)}];
      }
    }
  }
  return alarms;
}

std::vector<PathInstance> all_instances(const DatasetSplit& split) {
  std::vector<PathInstance> all = split.train;
  all.insert(all.end(), split.val.begin(), split.val.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  return all;
}

TimeEvolvingGraph chain_graph(std::size_t n, std::size_t t_total, std::size_t d = 1) {
  TimeEvolvingGraph g;
  for (std::size_t t = 0; t < t_total; ++t) {
    GraphSnapshot s;
    s.n_nodes = n;
    s.time_index = static_cast<long long>(t);
    for (std::size_t i = 0; i + 1 < n; ++i) s.edges.push_back({i, i + 1, 1.0});
    g.snapshots.push_back(std::move(s));
  }
  g.features = Tensor({t_total, n, d});
  return g;
}

}  // namespace

TEST_CASE("path sampling is deterministic and respects the length band") {
  GraphSnapshot chain;
  chain.n_nodes = 4;
  chain.edges = {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}};

  auto paths = sample_paths(chain, 1, 4, 4, 3);
  REQUIRE(paths.size() == 1);
  CHECK(paths[0] == std::vector<std::size_t>{0, 1, 2, 3});

  GraphSnapshot empty;
  empty.n_nodes = 4;
  CHECK_THROWS_WITH(sample_paths(empty, 1, 2, 8, 3),
                    Catch::Matchers::ContainsSubstring("exhausted"));
}

TEST_CASE("sampled paths are distinct, connected and reproducible") {
  GeneratorConfig cfg = small_config();
  std::mt19937_64 rng(cfg.seed * 6364136223846793005ULL + 1442695040888963407ULL);
  GraphSnapshot base = detail::make_base_graph(cfg, rng);
  auto paths = sample_paths(base, cfg.n_paths, cfg.min_path_len, cfg.max_path_len, cfg.seed + 1);
  auto again = sample_paths(base, cfg.n_paths, cfg.min_path_len, cfg.max_path_len, cfg.seed + 1);
  CHECK(paths == again);

  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (const Edge& e : base.edges) edges.emplace(e.src, e.dst);
  std::set<std::vector<std::size_t>> unique(paths.begin(), paths.end());
  CHECK(unique.size() == paths.size());
  for (const auto& path : paths) {
    CHECK(path.size() >= cfg.min_path_len);
    CHECK(path.size() <= cfg.max_path_len);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      CHECK(edges.count({path[i], path[i + 1]}) == 1);
    }
  }
}

TEST_CASE("the telecom rule counts alarms inside the horizon") {
  TimeEvolvingGraph g = chain_graph(3, 12);
  std::vector<std::vector<std::size_t>> paths = {{0, 1, 2}};

  std::vector<NodeEvent> events;
  NodeEvent fail;
  fail.t = 6;
  fail.kind = EventKind::kLinkFailure;
  fail.src = 1;
  fail.dst = 2;
  events.push_back(fail);

  DatasetSplit split = build_instances(g, paths, events, 3, 2, LabelRule::kTelecom);
  std::map<std::size_t, int> label_at;
  for (const PathInstance& inst : all_instances(split)) label_at[inst.t] = inst.label;
  // The failure at step 6 is visible from windows ending at 4 and 5 only.
  CHECK(label_at.at(2) == 0);
  CHECK(label_at.at(3) == 0);
  CHECK(label_at.at(4) == 1);
  CHECK(label_at.at(5) == 1);
  CHECK(label_at.at(6) == 0);

  SECTION("a failure off the path does not count") {
    events[0].src = 2;
    events[0].dst = 1;  // reverse direction is a different edge
    DatasetSplit off = build_instances(g, paths, events, 3, 2, LabelRule::kTelecom);
    for (const PathInstance& inst : all_instances(off)) CHECK(inst.label == 0);
  }

  SECTION("the alarm threshold requires enough hits") {
    NodeEvent second = fail;
    second.t = 5;
    events.push_back(second);
    DatasetSplit two = build_instances(g, paths, events, 3, 2, LabelRule::kTelecom, 2);
    std::map<std::size_t, int> at;
    for (const PathInstance& inst : all_instances(two)) at[inst.t] = inst.label;
    // Only the window ending at 4 sees both alarms (5 and 6).
    CHECK(at.at(4) == 1);
    CHECK(at.at(3) == 0);
    CHECK(at.at(5) == 0);
  }

  SECTION("closures of path nodes are alarms too") {
    NodeEvent close;
    close.t = 8;
    close.kind = EventKind::kClosure;
    close.node = 1;
    DatasetSplit with_close = build_instances(g, paths, {close}, 3, 2, LabelRule::kTelecom);
    std::map<std::size_t, int> at;
    for (const PathInstance& inst : all_instances(with_close)) at[inst.t] = inst.label;
    CHECK(at.at(6) == 1);
    CHECK(at.at(7) == 1);
    CHECK(at.at(8) == 0);
  }
}

TEST_CASE("the traffic rule needs two consecutive congested path nodes") {
  TimeEvolvingGraph g = chain_graph(3, 12);
  std::vector<std::vector<std::size_t>> paths = {{0, 1, 2}};

  std::vector<NodeEvent> events;
  for (std::size_t node : {0, 1}) {
    NodeEvent ev;
    ev.t = 5;
    ev.kind = EventKind::kCongestion;
    ev.node = node;
    events.push_back(ev);
  }
  DatasetSplit split = build_instances(g, paths, events, 3, 2, LabelRule::kTraffic);
  std::map<std::size_t, int> at;
  for (const PathInstance& inst : all_instances(split)) at[inst.t] = inst.label;
  CHECK(at.at(3) == 1);
  CHECK(at.at(4) == 1);
  CHECK(at.at(2) == 0);
  CHECK(at.at(5) == 0);

  // The same congestions do nothing under the telecom rule, and
  // non-adjacent congested nodes do nothing under the traffic rule.
  DatasetSplit telecom = build_instances(g, paths, events, 3, 2, LabelRule::kTelecom);
  for (const PathInstance& inst : all_instances(telecom)) CHECK(inst.label == 0);

  events[1].node = 2;  // congest nodes 0 and 2: not consecutive on the path
  DatasetSplit gap = build_instances(g, paths, events, 3, 2, LabelRule::kTraffic);
  for (const PathInstance& inst : all_instances(gap)) CHECK(inst.label == 0);
}

TEST_CASE("the instance grid is complete and chronologically split") {
  TimeEvolvingGraph g = chain_graph(4, 60);
  std::vector<std::vector<std::size_t>> paths = {{0, 1}, {1, 2, 3}};
  DatasetSplit split = build_instances(g, paths, {}, 6, 2, LabelRule::kTelecom);

  // Windows end at t in [5, 58): 53 prediction times per path.
  CHECK(split.size() == 2 * 53);
  CHECK(split.train.size() == 2 * 34);  // floor(0.65 * 53)
  CHECK(split.val.size() == 2 * 6);     // floor(0.12 * 53)
  CHECK(split.test.size() == 2 * 13);

  auto max_t = [](const std::vector<PathInstance>& v) {
    std::size_t best = 0;
    for (const PathInstance& inst : v) best = std::max(best, inst.t);
    return best;
  };
  auto min_t = [](const std::vector<PathInstance>& v) {
    std::size_t best = static_cast<std::size_t>(-1);
    for (const PathInstance& inst : v) best = std::min(best, inst.t);
    return best;
  };
  CHECK(max_t(split.train) < min_t(split.val));
  CHECK(max_t(split.val) < min_t(split.test));
  CHECK(min_t(split.val) == train_range_end(60, 6, 2));
}

TEST_CASE("feature scaling fits on the training range only") {
  TimeEvolvingGraph g = chain_graph(1, 3);
  g.features = Tensor({3, 1, 1}, {1.0, 3.0, 5.0});

  TimeEvolvingGraph all = normalize_features(g, 3);
  CHECK(all.features.at(0, 0, 0) == 0.0);
  CHECK(all.features.at(1, 0, 0) == 0.5);
  CHECK(all.features.at(2, 0, 0) == 1.0);

  // Fitting on the first two steps clamps the later out-of-range value.
  TimeEvolvingGraph head = normalize_features(g, 2);
  CHECK(head.features.at(1, 0, 0) == 1.0);
  CHECK(head.features.at(2, 0, 0) == 1.0);

  // A constant channel maps to zero.
  TimeEvolvingGraph flat = chain_graph(1, 3);
  flat.features.fill(2.5);
  TimeEvolvingGraph zeroed = normalize_features(flat, 3);
  for (std::size_t t = 0; t < 3; ++t) CHECK(zeroed.features.at(t, 0, 0) == 0.0);

  // A non-finite reading is treated as zero before fitting.
  flat.features.at(1, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  TimeEvolvingGraph fixed = normalize_features(flat, 3);
  CHECK(fixed.features.at(0, 0, 0) == 1.0);
  CHECK(fixed.features.at(1, 0, 0) == 0.0);
  for (std::size_t t = 0; t < 3; ++t) CHECK(std::isfinite(fixed.features.at(t, 0, 0)));

  // Re-scaling an already scaled full-range channel changes nothing.
  TimeEvolvingGraph twice = normalize_features(all, 3);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(twice.features.at(t, 0, 0) == all.features.at(t, 0, 0));
  }

  CHECK_THROWS_AS(normalize_features(g, 0), std::invalid_argument);
  CHECK_THROWS_AS(normalize_features(g, 4), std::invalid_argument);
}

TEST_CASE("the generator is deterministic") {
  GeneratorConfig cfg = small_config();
  SyntheticData a = generate_synthetic(cfg);
  SyntheticData b = generate_synthetic(cfg);

  CHECK(a.paths == b.paths);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].t == b.events[i].t);
    CHECK(a.events[i].kind == b.events[i].kind);
    CHECK(a.events[i].node == b.events[i].node);
    CHECK(a.events[i].src == b.events[i].src);
    CHECK(a.events[i].dst == b.events[i].dst);
  }
  REQUIRE(a.graph.features.same_shape(b.graph.features));
  for (std::size_t i = 0; i < a.graph.features.numel(); ++i) {
    CHECK(a.graph.features.data()[i] == b.graph.features.data()[i]);
  }

  SyntheticData c = generate_synthetic([&] {
    GeneratorConfig other = cfg;
    other.seed = 43;
    return other;
  }());
  CHECK(c.paths != a.paths);
}

TEST_CASE("generated labels land in the accepted positive band") {
  GeneratorConfig cfg = small_config();
  SyntheticData data = generate_synthetic(cfg);
  DatasetSplit split = build_instances(data.graph, data.paths, data.events, cfg.window,
                                       cfg.horizon, LabelRule::kTelecom, cfg.alarm_threshold);
  std::size_t positives = 0, total = 0;
  for (const PathInstance& inst : all_instances(split)) {
    positives += static_cast<std::size_t>(inst.label);
    ++total;
  }
  const double frac = static_cast<double>(positives) / static_cast<double>(total);
  CHECK(frac >= 0.08);
  CHECK(frac <= 0.30);

  // Each split block must contain both classes for training to make sense.
  for (const auto* block : {&split.train, &split.val, &split.test}) {
    std::size_t pos = 0;
    for (const PathInstance& inst : *block) pos += static_cast<std::size_t>(inst.label);
    CHECK(pos > 0);
    CHECK(pos < block->size());
  }
}

TEST_CASE("generated labels agree with an event-centric recount") {
  GeneratorConfig cfg = small_config();
  SyntheticData data = generate_synthetic(cfg);
  DatasetSplit split = build_instances(data.graph, data.paths, data.events, cfg.window,
                                       cfg.horizon, LabelRule::kTelecom, cfg.alarm_threshold);
  auto alarms = recount_alarms(data.paths, data.events, cfg.window, cfg.horizon, cfg.n_steps);
  for (const PathInstance& inst : all_instances(split)) {
    auto it = alarms.find({inst.path_id, inst.t});
    const std::size_t count = it == alarms.end() ? 0 : it->second;
    const int expected = count >= cfg.alarm_threshold ? 1 : 0;
    CHECK(inst.label == expected);
  }
}

TEST_CASE("generated structure keeps monitored paths on the base graph") {
  GeneratorConfig cfg = small_config();
  SyntheticData data = generate_synthetic(cfg);
  REQUIRE(data.graph.n_steps() == cfg.n_steps);
  REQUIRE(data.paths.size() == cfg.n_paths);

  // Step 0 carries no events, so it shows the base topology; every
  // consecutive path pair must be one of its edges.
  std::set<std::pair<std::size_t, std::size_t>> base_edges;
  for (const Edge& e : data.graph.snapshots[0].edges) base_edges.emplace(e.src, e.dst);
  for (const auto& path : data.paths) {
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      CHECK(base_edges.count({path[i], path[i + 1]}) == 1);
    }
  }

  ValidationReport report = validate_sequence(
      normalize_features(data.graph, train_range_end(cfg.n_steps, cfg.window, cfg.horizon)));
  for (const std::string& finding : report.findings) INFO(finding);
  CHECK(report.ok());
}

TEST_CASE("datasets round-trip through the on-disk format") {
  GeneratorConfig cfg = small_config();
  cfg.n_steps = 60;
  cfg.n_paths = 5;
  SyntheticData data = generate_synthetic(cfg);
  DatasetSplit split = build_instances(data.graph, data.paths, data.events, cfg.window,
                                       cfg.horizon, LabelRule::kTelecom, cfg.alarm_threshold);

  const std::string dir = "/tmp/pathcast_test_dataset";
  std::filesystem::create_directories(dir);
  write_dataset(dir, data);
  write_labels(dir, split);

  SyntheticData back = read_dataset(dir);
  CHECK(back.paths == data.paths);
  REQUIRE(back.graph.n_steps() == data.graph.n_steps());
  CHECK(back.graph.n_nodes() == data.graph.n_nodes());
  REQUIRE(back.graph.features.same_shape(data.graph.features));
  for (std::size_t i = 0; i < data.graph.features.numel(); ++i) {
    CHECK(back.graph.features.data()[i] == data.graph.features.data()[i]);
  }
  REQUIRE(back.events.size() == data.events.size());
  for (std::size_t i = 0; i < data.events.size(); ++i) {
    CHECK(back.events[i].t == data.events[i].t);
    CHECK(back.events[i].kind == data.events[i].kind);
  }
  for (std::size_t t = 0; t < data.graph.n_steps(); ++t) {
    auto key = [](const Edge& e) { return std::tuple(e.src, e.dst, e.weight); };
    auto sorted = [&](std::vector<Edge> edges) {
      std::sort(edges.begin(), edges.end(),
                [&](const Edge& a, const Edge& b) { return key(a) < key(b); });
      return edges;
    };
    std::vector<Edge> lhs = sorted(data.graph.snapshots[t].edges);
    std::vector<Edge> rhs = sorted(back.graph.snapshots[t].edges);
    REQUIRE(lhs.size() == rhs.size());
    for (std::size_t k = 0; k < lhs.size(); ++k) CHECK(key(lhs[k]) == key(rhs[k]));
  }

  DatasetSplit labels = read_labels(dir, back, cfg.window, cfg.horizon);
  CHECK(labels.train.size() == split.train.size());
  CHECK(labels.val.size() == split.val.size());
  CHECK(labels.test.size() == split.test.size());
  std::map<std::pair<std::size_t, std::size_t>, int> expected;
  for (const PathInstance& inst : all_instances(split)) {
    expected[{inst.path_id, inst.t}] = inst.label;
  }
  for (const PathInstance& inst : all_instances(labels)) {
    CHECK(expected.at({inst.path_id, inst.t}) == inst.label);
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("file readers point at the offending line") {
  GeneratorConfig cfg = small_config();
  cfg.n_steps = 40;
  cfg.n_paths = 3;
  SyntheticData data = generate_synthetic(cfg);
  DatasetSplit split = build_instances(data.graph, data.paths, data.events, cfg.window,
                                       cfg.horizon, LabelRule::kTelecom, cfg.alarm_threshold);
  const std::string dir = "/tmp/pathcast_test_baddata";
  std::filesystem::create_directories(dir);
  write_dataset(dir, data);
  write_labels(dir, split);

  SECTION("unknown path id in labels") {
    std::ofstream out(dir + "/labels.csv", std::ios::app);
    out << "10,99,1\n";
    out.close();
    SyntheticData back = read_dataset(dir);
    CHECK_THROWS_WITH(read_labels(dir, back, cfg.window, cfg.horizon),
                      Catch::Matchers::ContainsSubstring("unknown path_id 99"));
  }
  SECTION("label outside the grid") {
    std::ofstream out(dir + "/labels.csv", std::ios::app);
    out << "1,0,1\n";
    out.close();
    SyntheticData back = read_dataset(dir);
    CHECK_THROWS_WITH(read_labels(dir, back, cfg.window, cfg.horizon),
                      Catch::Matchers::ContainsSubstring("outside the window"));
  }
  SECTION("non-binary label") {
    std::ofstream out(dir + "/labels.csv", std::ios::app);
    out << "10,0,4\n";
    out.close();
    SyntheticData back = read_dataset(dir);
    CHECK_THROWS_WITH(read_labels(dir, back, cfg.window, cfg.horizon),
                      Catch::Matchers::ContainsSubstring("label must be 0 or 1"));
  }
  SECTION("malformed feature row") {
    std::ofstream out(dir + "/features.csv", std::ios::app);
    out << "1,2,oops,1.0\n";
    out.close();
    CHECK_THROWS_WITH(read_dataset(dir), Catch::Matchers::ContainsSubstring("features.csv"));
  }
  SECTION("path referencing an unknown node") {
    std::ofstream out(dir + "/paths.txt", std::ios::app);
    out << "0,4000\n";
    out.close();
    CHECK_THROWS_WITH(read_dataset(dir), Catch::Matchers::ContainsSubstring("out of range"));
  }
  SECTION("non-contiguous snapshot times") {
    std::ofstream out(dir + "/snapshots.jsonl", std::ios::app);
    out << "{\"t\": 99, \"edges\": []}\n";
    out.close();
    CHECK_THROWS_WITH(read_dataset(dir), Catch::Matchers::ContainsSubstring("non-contiguous"));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("generator config serialization round-trips") {
  GeneratorConfig cfg = small_config();
  cfg.episode_rate = 0.05;
  GeneratorConfig back = generator_config_from_json(generator_config_to_json(cfg));
  CHECK(back.n_nodes == cfg.n_nodes);
  CHECK(back.episode_rate == cfg.episode_rate);
  CHECK(back.seed == cfg.seed);

  nlohmann::json j = generator_config_to_json(cfg);
  j["n_nodes"] = 2;  // too small to route paths through
  CHECK_THROWS_AS(generator_config_from_json(j), std::invalid_argument);

  GeneratorConfig bad = cfg;
  bad.n_steps = cfg.window;  // no room for even one window
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
