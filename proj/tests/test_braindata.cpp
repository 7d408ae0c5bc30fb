/*
 * Copyright 2026 The BrainOOD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "brainood/braindata/network.hpp"
#include "brainood/braindata/splits.hpp"
#include "brainood/braindata/synthetic.hpp"
#include "brainood/common/error.hpp"
#include "brainood/common/fsio.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace brainood;
using namespace brainood::data;
using brainood::testing::TempDir;

namespace {

Matrix random_connectivity(std::size_t n, Rng& rng) {
  Matrix s = testing::random_symmetric(n, rng);
  for (std::size_t i = 0; i < n; ++i) s(i, i) = 1.0;
  return s;
}

std::size_t edge_count(const Matrix& a) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) c += a(i, j) != 0.0;
  return c;
}

// Brute force: full sort of every pair by (value desc, i asc, j asc).
Matrix sort_oracle(const Matrix& s, double fraction) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> all;
  const std::size_t n = s.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) all.emplace_back(-s(i, j), i, j);
  std::sort(all.begin(), all.end());
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(all.size()) - 1e-9));
  Matrix a(n, n);
  for (std::size_t e = 0; e < keep && e < all.size(); ++e) {
    const auto [v, i, j] = all[e];
    a(i, j) = a(j, i) = 1.0;
  }
  return a;
}

std::vector<ManifestEntry> entries_with_sites(const std::vector<std::pair<std::string, std::size_t>>& sites) {
  std::vector<ManifestEntry> out;
  for (const auto& [site, count] : sites)
    for (std::size_t j = 0; j < count; ++j)
      out.push_back({site + "-" + std::to_string(j), "", j % 2, site});
  return out;
}

}  // namespace

TEST_CASE("top-20% sparsification of a 100-node matrix keeps 990 edges") {
  Rng rng(1);
  const Matrix a = sparsify_top_fraction(random_connectivity(100, rng), 0.2);
  CHECK(edge_count(a) == 990);
  std::size_t nonzero = 0;
  for (double v : a.values()) nonzero += v != 0.0;
  CHECK(nonzero == 1980);
  CHECK(is_symmetric(a));
  for (std::size_t i = 0; i < 100; ++i) CHECK(a(i, i) == 0.0);
}

TEST_CASE("a single strictly maximal pair is the only edge kept") {
  Matrix s(5, 5, 0.1);
  for (std::size_t i = 0; i < 5; ++i) s(i, i) = 1.0;
  s(1, 3) = s(3, 1) = 0.9;
  const Matrix a = sparsify_top_fraction(s, 0.1);  // ceil(0.1 · 10) = 1
  CHECK(edge_count(a) == 1);
  CHECK(a(1, 3) == 1.0);
  CHECK(a(3, 1) == 1.0);
}

TEST_CASE("ties at the threshold go to the lexicographically smaller pair") {
  Matrix s(4, 4, 0.5);
  for (std::size_t i = 0; i < 4; ++i) s(i, i) = 1.0;
  const Matrix a = sparsify_top_fraction(s, 0.5);  // 3 of 6 pairs
  CHECK(a(0, 1) == 1.0);
  CHECK(a(0, 2) == 1.0);
  CHECK(a(0, 3) == 1.0);
  CHECK(a(1, 2) == 0.0);
}

TEST_CASE("sparsification agrees with the full-sort oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(trial % 13);
    Matrix s = random_connectivity(n, rng);
    // Inject ties.
    if (trial % 3 == 0) s(0, 1) = s(1, 0) = s(0, 2) = s(2, 0) = 0.25;
    const double fraction = 0.05 + 0.9 * static_cast<double>(trial) / 50.0;
    CHECK(sparsify_top_fraction(s, fraction).bitwise_equal(sort_oracle(s, fraction)));
  }
  CHECK_THROWS_AS(sparsify_top_fraction(Matrix::identity(4), 0.0), Error);
  CHECK_THROWS_AS(sparsify_top_fraction(Matrix::identity(4), 1.5), Error);
}

TEST_CASE("matrix CSV round-trips bit for bit without exponent notation") {
  Rng rng(3);
  Matrix m = random_connectivity(7, rng);
  m(0, 1) = m(1, 0) = 1e-12;
  TempDir dir;
  write_file_atomic(dir.path() / "m.csv", matrix_to_csv(m));
  const std::string text = read_text_file(dir.path() / "m.csv");
  CHECK(text.find('e') == std::string::npos);
  CHECK(read_matrix_csv(dir.path() / "m.csv").bitwise_equal(m));
}

TEST_CASE("load_dataset reads, validates and sparsifies each subject") {
  TempDir dir;
  Rng rng(4);
  DatasetManifest manifest;
  manifest.n = 100;
  manifest.class_names = {"TC", "ASD"};
  for (int i = 0; i < 3; ++i) {
    const std::string id = "sub" + std::to_string(i);
    manifest.entries.push_back({id, "m/" + id + ".csv", static_cast<std::size_t>(i % 2), "siteA"});
    write_file_atomic(dir.path() / "m" / (id + ".csv"), matrix_to_csv(random_connectivity(100, rng)));
  }
  write_file_atomic(dir.path() / "manifest.json", manifest_to_json(manifest));
  const Dataset ds = load_dataset(dir.path() / "manifest.json");
  REQUIRE(ds.size() == 3);
  for (const BrainNetwork& net : ds.networks()) {
    CHECK(edge_count(net.adjacency) == 990);
    CHECK(is_symmetric(net.features));
  }
  CHECK(ds.at("sub1").label == 1);
  CHECK_THROWS_AS(ds.at("nobody"), Error);
}

TEST_CASE("load_dataset rejects bad inputs with the subject named") {
  TempDir dir;
  DatasetManifest manifest;
  manifest.n = 4;
  manifest.class_names = {"a", "b"};

  SUBCASE("empty manifest") {
    write_file_atomic(dir.path() / "manifest.json", manifest_to_json(manifest));
    CHECK_THROWS_WITH(load_dataset(dir.path() / "manifest.json"), doctest::Contains("empty dataset"));
  }
  SUBCASE("out-of-range entry") {
    Matrix s = Matrix::identity(4);
    s(1, 2) = s(2, 1) = 1.5;
    manifest.entries.push_back({"bad", "bad.csv", 0, "x"});
    write_file_atomic(dir.path() / "bad.csv", matrix_to_csv(s));
    write_file_atomic(dir.path() / "manifest.json", manifest_to_json(manifest));
    try {
      (void)load_dataset(dir.path() / "manifest.json");
      FAIL("expected rejection");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("bad") != std::string::npos);
      CHECK(msg.find("(1,2)") != std::string::npos);
    }
  }
  SUBCASE("asymmetric beyond tolerance") {
    Matrix s = Matrix::identity(4);
    s(0, 3) = 0.5;
    s(3, 0) = 0.4;
    manifest.entries.push_back({"asym", "asym.csv", 0, "x"});
    write_file_atomic(dir.path() / "asym.csv", matrix_to_csv(s));
    write_file_atomic(dir.path() / "manifest.json", manifest_to_json(manifest));
    CHECK_THROWS_WITH(load_dataset(dir.path() / "manifest.json"), doctest::Contains("asym"));
  }
  SUBCASE("dimension mismatch") {
    manifest.entries.push_back({"small", "small.csv", 0, "x"});
    write_file_atomic(dir.path() / "small.csv", matrix_to_csv(Matrix::identity(3)));
    write_file_atomic(dir.path() / "manifest.json", manifest_to_json(manifest));
    CHECK_THROWS_WITH(load_dataset(dir.path() / "manifest.json"), doctest::Contains("small"));
  }
  SUBCASE("missing file") {
    manifest.entries.push_back({"ghost", "ghost.csv", 0, "x"});
    write_file_atomic(dir.path() / "manifest.json", manifest_to_json(manifest));
    CHECK_THROWS_WITH(load_dataset(dir.path() / "manifest.json"), doctest::Contains("ghost"));
  }
  SUBCASE("label out of range") {
    manifest.entries.push_back({"lab", "lab.csv", 5, "x"});
    write_file_atomic(dir.path() / "manifest.json", manifest_to_json(manifest));
    CHECK_THROWS_AS(load_dataset(dir.path() / "manifest.json"), Error);
  }
}

TEST_CASE("tiny asymmetry is repaired by exact symmetrisation") {
  Matrix s = Matrix::identity(3);
  s(0, 1) = 0.3;
  s(1, 0) = 0.3 + 1e-12;
  const Matrix fixed = validate_connectivity(s, 3, "x");
  CHECK(is_symmetric(fixed, 0.0));
}

TEST_CASE("site holdout: 100 subjects with a 10-subject OOD site split 80/10/10") {
  auto entries = entries_with_sites({{"A", 30}, {"B", 30}, {"C", 30}, {"OOD", 10}});
  const SplitPlan plan = make_splits(entries, {"OOD"}, {}, 7);
  REQUIRE(plan.folds.size() == 1);
  const Fold& f = plan.folds[0];
  CHECK(f.train_ids.size() == 80);
  CHECK(f.val_ids.size() == 10);
  CHECK(f.test_ids.size() == 10);
  auto count_ood = [](const std::vector<std::string>& ids) {
    return std::count_if(ids.begin(), ids.end(), [](const std::string& id) { return id.rfind("OOD-", 0) == 0; });
  };
  CHECK(count_ood(f.train_ids) == 0);
  CHECK(count_ood(f.val_ids) == 5);
  CHECK(count_ood(f.test_ids) == 5);
}

TEST_CASE("site holdout on ABIDE-shaped data keeps SBL out of fold-1 training") {
  // Ten smallest sites with their subject counts; the remaining seven share the rest of 1025.
  auto entries = entries_with_sites({{"SBL", 30}, {"OLIN", 36}, {"SDSU", 36}, {"CALTECH", 38}, {"STANFORD", 40},
                                     {"TRINITY", 49}, {"KKI", 55}, {"YALE", 56}, {"MAX_MUN", 57}, {"PITT", 57},
                                     {"NYU", 81}, {"UM", 81}, {"USM", 81}, {"UCLA", 82}, {"LEUVEN", 82},
                                     {"OHSU", 82}, {"UCLA2", 82}});
  REQUIRE(entries.size() == 1025);
  const std::vector<std::string> ood = {"SBL", "OLIN", "SDSU", "CALTECH", "STANFORD",
                                        "TRINITY", "KKI", "YALE", "MAX_MUN", "PITT"};
  const SplitPlan plan = make_splits(entries, ood, {}, 1);
  REQUIRE(plan.folds.size() == 10);
  for (const std::string& id : plan.folds[0].train_ids) CHECK(id.rfind("SBL-", 0) != 0);
  CHECK(audit_splits(plan, entries).ok());
  for (const Fold& f : plan.folds) {
    CHECK(!f.val_ids.empty());
    CHECK(!f.test_ids.empty());
  }
}

TEST_CASE("split plans are deterministic and serialise identically") {
  auto entries = entries_with_sites({{"A", 40}, {"B", 40}, {"C", 12}, {"D", 8}});
  const std::string a = split_plan_to_json(make_splits(entries, {"C", "D"}, {}, 99));
  const std::string b = split_plan_to_json(make_splits(entries, {"C", "D"}, {}, 99));
  CHECK(a == b);
  CHECK(a != split_plan_to_json(make_splits(entries, {"C", "D"}, {}, 100)));
  CHECK(split_plan_to_json(split_plan_from_json(a)) == a);
}

TEST_CASE("split errors: unknown site and unattainable ratio") {
  auto entries = entries_with_sites({{"A", 50}, {"B", 50}, {"C", 50}, {"D", 50}});
  CHECK_THROWS_WITH(make_splits(entries, {"Z"}, {}, 0), doctest::Contains("unknown site"));
  CHECK_THROWS_WITH(make_splits(entries, {"A"}, {}, 0), doctest::Contains("achievable"));
  // A coarser ratio accommodates the same site.
  CHECK(audit_splits(make_splits(entries, {"A", "B", "C"}, {2, 1, 1}, 0), entries).ok());
}

TEST_CASE("split invariants hold exhaustively on random site layouts") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::pair<std::string, std::size_t>> sites;
    const std::size_t site_count = 4 + static_cast<std::size_t>(trial % 7);
    for (std::size_t s = 0; s < site_count; ++s)
      sites.emplace_back("s" + std::to_string(s), 5 + static_cast<std::size_t>(rng() % 40));
    auto entries = entries_with_sites(sites);
    std::vector<std::string> ood;
    for (const auto& [name, count] : sites)
      if (ood.size() < 3) ood.push_back(name);
    SplitPlan plan;
    try {
      plan = make_splits(entries, ood, {2, 1, 1}, static_cast<std::uint64_t>(trial));
    } catch (const Error&) {
      continue;  // ratio unattainable for this layout
    }
    const SplitAudit audit = audit_splits(plan, entries);
    CHECK(audit.ok());
    for (const Fold& f : plan.folds)
      CHECK(f.train_ids.size() + f.val_ids.size() + f.test_ids.size() <= entries.size());
  }
}

TEST_CASE("synthetic generator: noise-free class means differ exactly on the planted edges") {
  SyntheticConfig cfg;
  cfg.n = 12;
  cfg.sites = 2;
  cfg.subjects_per_site = 6;
  cfg.noise_level = 0.0;
  cfg.site_bias_strength = 0.0;
  cfg.causal_edge_fraction = 0.1;
  const SyntheticDataset ds = generate_synthetic(cfg);
  std::vector<Matrix> mean(2, Matrix(cfg.n, cfg.n));
  std::vector<double> count(2, 0.0);
  for (std::size_t i = 0; i < ds.matrices.size(); ++i) {
    const std::size_t label = ds.manifest.entries[i].label;
    for (std::size_t c = 0; c < ds.matrices[i].size(); ++c) mean[label][c] += ds.matrices[i][c];
    count[label] += 1.0;
  }
  std::set<Edge> truth(ds.manifest.ground_truth_edges->begin(), ds.manifest.ground_truth_edges->end());
  REQUIRE(!truth.empty());
  for (std::size_t i = 0; i < cfg.n; ++i) {
    for (std::size_t j = i + 1; j < cfg.n; ++j) {
      const bool differs = mean[0](i, j) / count[0] != mean[1](i, j) / count[1];
      CHECK(differs == (truth.count({i, j}) == 1));
    }
  }
}

TEST_CASE("synthetic generator output is a pure function of the config") {
  SyntheticConfig cfg;
  cfg.n = 10;
  cfg.subjects_per_site = 5;
  const SyntheticDataset a = generate_synthetic(cfg);
  const SyntheticDataset b = generate_synthetic(cfg);
  REQUIRE(a.matrices.size() == b.matrices.size());
  for (std::size_t i = 0; i < a.matrices.size(); ++i) CHECK(a.matrices[i].bitwise_equal(b.matrices[i]));
  CHECK(manifest_to_json(a.manifest) == manifest_to_json(b.manifest));
  cfg.seed = 1;
  CHECK_FALSE(generate_synthetic(cfg).matrices[0].bitwise_equal(a.matrices[0]));
  // Every generated subject satisfies the connectivity invariants.
  const Dataset ds = build_dataset(a.manifest, a.matrices);
  for (const BrainNetwork& net : ds.networks()) {
    CHECK(is_symmetric(net.features));
    CHECK(edge_count(net.adjacency) == 9);  // ceil(0.2 · 45)
  }
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig cfg;
  cfg.causal_edge_fraction = 0.7;
  cfg.site_edge_fraction = 0.5;
  CHECK_THROWS_WITH(generate_synthetic(cfg), doctest::Contains("exceed"));
  cfg = {};
  cfg.noise_level = -1.0;
  CHECK_THROWS_WITH(generate_synthetic(cfg), doctest::Contains("noise_level"));
  cfg = {};
  cfg.n = 3;
  CHECK_THROWS_AS(generate_synthetic(cfg), Error);
}

TEST_CASE("default synthetic config: four sites of fifty with balanced labels") {
  const SyntheticDataset ds = generate_synthetic(SyntheticConfig{});
  CHECK(ds.manifest.entries.size() == 200);
  CHECK(ds.manifest.sites().size() == 4);
  std::map<std::string, std::size_t> positives;
  for (const auto& e : ds.manifest.entries) positives[e.site] += e.label;
  for (const auto& [site, pos] : positives) CHECK(pos == 25);
}

namespace {

// L2-regularised logistic regression on the upper triangle, full-batch gradient
// descent, scored by 5-fold cross-validation inside each site.
double within_site_logistic_accuracy(const SyntheticDataset& ds) {
  const std::size_t n = ds.manifest.n, dims = n * (n - 1) / 2;
  auto features = [&](std::size_t s) {
    std::vector<double> f;
    f.reserve(dims);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) f.push_back(ds.matrices[s](i, j));
    return f;
  };
  std::map<std::string, std::vector<std::size_t>> by_site;
  for (std::size_t s = 0; s < ds.manifest.entries.size(); ++s) by_site[ds.manifest.entries[s].site].push_back(s);

  std::size_t correct = 0, total = 0;
  for (const auto& [site, members] : by_site) {
    const std::size_t folds = 5;
    for (std::size_t k = 0; k < folds; ++k) {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < members.size(); ++i) (i % folds == k ? test : train).push_back(members[i]);
      std::vector<double> w(dims, 0.0);
      double b = 0.0;
      for (int iter = 0; iter < 300; ++iter) {
        std::vector<double> gw(dims, 0.0);
        double gb = 0.0;
        for (std::size_t s : train) {
          const std::vector<double> x = features(s);
          double z = b;
          for (std::size_t d = 0; d < dims; ++d) z += w[d] * x[d];
          const double err = 1.0 / (1.0 + std::exp(-z)) - static_cast<double>(ds.manifest.entries[s].label);
          for (std::size_t d = 0; d < dims; ++d) gw[d] += err * x[d];
          gb += err;
        }
        const double scale = 1.0 / static_cast<double>(train.size());
        for (std::size_t d = 0; d < dims; ++d) w[d] -= 0.5 * (gw[d] * scale + 1e-2 * w[d]);
        b -= 0.5 * gb * scale;
      }
      for (std::size_t s : test) {
        const std::vector<double> x = features(s);
        double z = b;
        for (std::size_t d = 0; d < dims; ++d) z += w[d] * x[d];
        correct += (z > 0.0 ? 1u : 0u) == ds.manifest.entries[s].label;
        ++total;
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("default synthetic data is learnable within a site by a logistic classifier") {
  const double acc = within_site_logistic_accuracy(generate_synthetic(SyntheticConfig{}));
  CHECK(acc > 0.7);
  CHECK(acc == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("without a causal signal a logistic classifier is at chance") {
  SyntheticConfig cfg;
  cfg.causal_strength = 0.0;
  const double acc = within_site_logistic_accuracy(generate_synthetic(cfg));
  CHECK(acc > 0.35);
  CHECK(acc < 0.65);
}
