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

#include "brainood/braindata/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "brainood/common/error.hpp"
#include "brainood/common/fsio.hpp"
#include "json.hpp"

namespace brainood::data {

using nlohmann::json;

Matrix sparsify_top_fraction(const Matrix& s, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "sparsify_top_fraction: fraction must lie in (0, 1], got " +
                                                 std::to_string(fraction));
  if (s.rows() != s.cols()) throw ShapeError("sparsify_top_fraction: matrix is not square " + s.shape_string());
  const std::size_t n = s.rows();
  struct Pair {
    double value;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.push_back({s(i, j), i, j});

  // Guard against 0.2·4950 landing a hair above an integer.
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pairs.size()) - 1e-9));
  const auto by_rank = [](const Pair& a, const Pair& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  };
  const std::size_t k = std::min(keep, pairs.size());
  std::partial_sort(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(k), pairs.end(), by_rank);

  Matrix a(n, n);
  for (std::size_t e = 0; e < k; ++e) {
    a(pairs[e].i, pairs[e].j) = 1.0;
    a(pairs[e].j, pairs[e].i) = 1.0;
  }
  return a;
}

Matrix validate_connectivity(Matrix s, std::size_t expected_n, const std::string& subject) {
  auto fail = [&](const std::string& what) { throw Error(ErrorCode::kData, "subject " + subject + ": " + what); };
  if (s.rows() != s.cols()) fail("matrix is not square " + s.shape_string());
  if (s.rows() != expected_n)
    fail("matrix has " + std::to_string(s.rows()) + " nodes, manifest declares " + std::to_string(expected_n));
  const std::size_t n = s.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = s(i, j);
      if (!std::isfinite(v) || v < -1.0 || v > 1.0)
        fail("cell (" + std::to_string(i) + "," + std::to_string(j) + ") = " + format_double(v) +
             " outside [-1, 1]");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(s(i, i) - 1.0) > 1e-9) fail("diagonal cell (" + std::to_string(i) + "," + std::to_string(i) + ") is not 1");
    s(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(s(i, j) - s(j, i)) > 1e-9)
        fail("asymmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      const double v = (s(i, j) + s(j, i)) / 2.0;
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
      try {
        values.push_back(parse_double(cell));
      } catch (const Error&) {
        throw Error(ErrorCode::kFormat, path.string() + ": row " + std::to_string(rows) + ": bad number '" +
                                            std::string(cell) + "'");
      }
      ++count;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw Error(ErrorCode::kFormat, path.string() + ": ragged row " + std::to_string(rows));
    ++rows;
  }
  return Matrix(rows, cols, std::move(values));
}

std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

void DatasetManifest::validate() const {
  if (n < 2) throw Error(ErrorCode::kData, "manifest: node count must be at least 2");
  if (class_names.empty()) throw Error(ErrorCode::kData, "manifest: no class names");
  std::set<std::string> seen;
  for (const ManifestEntry& e : entries) {
    if (e.subject_id.empty()) throw Error(ErrorCode::kData, "manifest: empty subject id");
    if (!seen.insert(e.subject_id).second) throw Error(ErrorCode::kData, "manifest: duplicate subject id " + e.subject_id);
    if (e.label >= class_names.size())
      throw Error(ErrorCode::kData, "manifest: subject " + e.subject_id + " has label " + std::to_string(e.label) +
                                        " outside [0, " + std::to_string(class_names.size()) + ")");
    if (e.site.empty()) throw Error(ErrorCode::kData, "manifest: subject " + e.subject_id + " has an empty site");
  }
  if (ground_truth_edges) {
    for (const Edge& edge : *ground_truth_edges)
      if (edge.first >= n || edge.second >= n || edge.first == edge.second)
        throw Error(ErrorCode::kData, "manifest: invalid ground-truth edge");
  }
  if (node_group_labels && node_group_labels->size() != n)
    throw Error(ErrorCode::kData, "manifest: node_group_labels must have one entry per node");
}

std::vector<std::string> DatasetManifest::sites() const {
  std::vector<std::string> out;
  for (const ManifestEntry& e : entries)
    if (std::find(out.begin(), out.end(), e.site) == out.end()) out.push_back(e.site);
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = doc.value("version", 1);
    m.n = doc.at("n").get<std::size_t>();
    m.class_names = doc.at("class_names").get<std::vector<std::string>>();
    for (const json& e : doc.at("entries")) {
      m.entries.push_back({e.at("subject_id").get<std::string>(), e.at("matrix_path").get<std::string>(),
                           e.at("label").get<std::size_t>(), e.at("site").get<std::string>()});
    }
    if (doc.contains("ground_truth_edges") && !doc["ground_truth_edges"].is_null()) {
      std::vector<Edge> edges;
      for (const json& pr : doc["ground_truth_edges"]) edges.emplace_back(pr.at(0).get<std::size_t>(), pr.at(1).get<std::size_t>());
      m.ground_truth_edges = std::move(edges);
    }
    if (doc.contains("node_group_labels") && !doc["node_group_labels"].is_null())
      m.node_group_labels = doc["node_group_labels"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json doc;
  doc["version"] = m.version;
  doc["n"] = m.n;
  doc["class_names"] = m.class_names;
  json entries = json::array();
  for (const ManifestEntry& e : m.entries)
    entries.push_back({{"subject_id", e.subject_id}, {"matrix_path", e.matrix_path}, {"label", e.label}, {"site", e.site}});
  doc["entries"] = std::move(entries);
  if (m.ground_truth_edges) {
    json edges = json::array();
    for (const Edge& e : *m.ground_truth_edges) edges.push_back({e.first, e.second});
    doc["ground_truth_edges"] = std::move(edges);
  }
  if (m.node_group_labels) doc["node_group_labels"] = *m.node_group_labels;
  return doc.dump(2) + "\n";
}

Dataset::Dataset(DatasetManifest manifest, std::vector<BrainNetwork> networks)
    : manifest_(std::move(manifest)), networks_(std::move(networks)) {
  for (std::size_t i = 0; i < networks_.size(); ++i) index_.emplace(networks_[i].subject_id, i);
}

const BrainNetwork& Dataset::at(const std::string& subject_id) const {
  const auto it = index_.find(subject_id);
  if (it == index_.end()) throw Error(ErrorCode::kNotFound, "unknown subject id " + subject_id);
  return networks_[it->second];
}

Dataset build_dataset(DatasetManifest manifest, std::vector<Matrix> matrices, double edge_fraction) {
  manifest.validate();
  if (manifest.entries.empty()) throw Error(ErrorCode::kData, "empty dataset");
  if (matrices.size() != manifest.entries.size())
    throw Error(ErrorCode::kData, "matrix count does not match manifest entries");
  std::vector<BrainNetwork> networks;
  networks.reserve(matrices.size());
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    BrainNetwork net;
    net.subject_id = e.subject_id;
    net.site = e.site;
    net.label = e.label;
    net.features = validate_connectivity(std::move(matrices[i]), manifest.n, e.subject_id);
    net.adjacency = sparsify_top_fraction(net.features, edge_fraction);
    networks.push_back(std::move(net));
  }
  return Dataset(std::move(manifest), std::move(networks));
}

Dataset load_dataset(const std::filesystem::path& manifest_path, double edge_fraction) {
  DatasetManifest manifest = read_manifest(manifest_path);
  if (manifest.entries.empty()) throw Error(ErrorCode::kData, "empty dataset");
  const std::filesystem::path base = manifest_path.parent_path();
  std::vector<Matrix> matrices;
  matrices.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    const std::filesystem::path rel(e.matrix_path);
    const std::filesystem::path p = rel.is_absolute() ? rel : base / rel;
    if (!std::filesystem::exists(p))
      throw Error(ErrorCode::kIo, "subject " + e.subject_id + ": matrix file not found: " + p.string());
    try {
      matrices.push_back(read_matrix_csv(p));
    } catch (const Error& err) {
      throw Error(err.code(), "subject " + e.subject_id + ": " + err.what());
    }
  }
  return build_dataset(std::move(manifest), std::move(matrices), edge_fraction);
}

}  // namespace brainood::data
