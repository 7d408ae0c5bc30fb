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

#include "brainood/cli/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "brainood/braindata/splits.hpp"
#include "brainood/braindata/synthetic.hpp"
#include "brainood/diffcore/gradcheck.hpp"
#include "brainood/diffcore/kernels.hpp"
#include "brainood/model/encoders.hpp"
#include "brainood/model/extractor.hpp"
#include "brainood/model/model.hpp"
#include "brainood/model/selector.hpp"
#include "brainood/trainer/checkpoint.hpp"
#include "brainood/trainer/trainer.hpp"

namespace brainood::cli {
namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

Matrix symmetric_matrix(std::size_t n, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = dist(rng);
  return m;
}

Matrix random_graph(std::size_t n, double density, Rng& rng) {
  std::bernoulli_distribution coin(density);
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng)) a(i, j) = a(j, i) = 1.0;
  return a;
}

std::vector<data::BrainNetwork> random_networks(std::size_t count, std::size_t n, Rng& rng) {
  std::vector<data::BrainNetwork> nets(count);
  for (std::size_t i = 0; i < count; ++i) {
    nets[i].subject_id = "s" + std::to_string(i);
    nets[i].site = "site" + std::to_string(i % 2);
    nets[i].label = i % 2;
    nets[i].features = symmetric_matrix(n, rng, -1.0, 1.0);
    for (std::size_t v = 0; v < n; ++v) nets[i].features(v, v) = 1.0;
    nets[i].adjacency = data::sparsify_top_fraction(nets[i].features, 0.3);
  }
  return nets;
}

model::Batch batch_of(const std::vector<data::BrainNetwork>& nets) {
  std::vector<const data::BrainNetwork*> ptrs;
  for (const auto& net : nets) ptrs.push_back(&net);
  return model::make_batch(ptrs);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.hidden_dim = 4;
  cfg.k = 2;
  cfg.seed = 3;
  return cfg;
}

CheckResult bounded(std::string name, double error, double tolerance, std::string detail = {}) {
  return {std::move(name), error <= tolerance, error, tolerance, std::move(detail)};
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& p) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(p[i], j);
  return out;
}

double asymmetry(const Matrix& stack, std::size_t n) {
  double worst = 0.0;
  for (std::size_t b = 0; b < stack.rows() / n; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        worst = std::max(worst, std::fabs(stack(b * n + i, j) - stack(b * n + j, i)));
  return worst;
}

std::size_t bitwise_mismatches(const std::vector<double>& a, const std::vector<double>& b) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) count += std::memcmp(&a[i], &b[i], sizeof(double)) != 0;
  return count;
}

}  // namespace

CheckResult check_full_gradient(bool corrupt_gradient) {
  Rng rng(41);
  const auto nets = random_networks(3, 8, rng);
  const model::Batch batch = batch_of(nets);
  const model::BrainOODModel net(8, 2, tiny_config());
  std::vector<NamedTensor> params;
  for (std::size_t i = 0; i < net.params().size(); ++i) params.push_back({net.params().name(i), net.params().value(i)});
  const GradCheckReport report = gradient_check(
      [&](ad::Tape& tape, std::span<const ad::Var> p) {
        Rng noise(17);
        ad::Var total = net.forward(tape, p, batch, {model::Mode::kTrain}, noise).total;
        if (corrupt_gradient) {
          const ad::Var s = ad::sum(p[0]);
          total = ad::add(total, ad::sub(s, tape.constant(s.value())));
        }
        return total;
      },
      params, 1e-5, 1e-4);
  std::string worst;
  double worst_err = -1.0;
  for (const GradCheckEntry& e : report.entries)
    if (e.max_rel_error > worst_err) {
      worst_err = e.max_rel_error;
      worst = e.name;
    }
  return bounded("gradcheck.full_objective", report.max_rel_error, 1e-4,
                 std::to_string(report.entries.size()) + " tensors, worst " + worst);
}

std::vector<CheckResult> check_loss_identities(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  ad::Tape tape;
  const std::size_t n = 6;

  const double half = model::entropy_loss(tape.constant(Matrix(n, n, 0.5))).item();
  out.push_back(bounded("identity.entropy_half_mask", std::fabs(half - static_cast<double>(n) * std::log(2.0)), 1e-9));

  const Matrix x = uniform_matrix(n, n, rng, -1.0, 1.0);
  out.push_back(bounded("identity.recon_equal_inputs",
                        std::fabs(model::recon_loss(tape.constant(x), tape.constant(x), 1).item()), 0.0));

  const Matrix g = symmetric_matrix(n, rng, 0.0, 1.0);
  const std::vector<ad::Var> same{tape.constant(g), tape.constant(g), tape.constant(g)};
  out.push_back(bounded("identity.align_identical_batch", std::fabs(model::align_loss(same, n).item()), 0.0));

  const Matrix p = symmetric_matrix(n, rng, 0.01, 0.99);
  double entropy = 0.0;
  for (double v : p.values()) entropy += -v * std::log(v) - (1.0 - v) * std::log(1.0 - v);
  entropy /= static_cast<double>(n);
  out.push_back(bounded("oracle.entropy", std::fabs(model::entropy_loss(tape.constant(p)).item() - entropy), 1e-12));

  const Matrix y = uniform_matrix(n, n, rng, -1.0, 1.0);
  double recon = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) recon += (x[i] - y[i]) * (x[i] - y[i]);
  recon /= static_cast<double>(n);
  out.push_back(
      bounded("oracle.recon", std::fabs(model::recon_loss(tape.constant(x), tape.constant(y), 1).item() - recon), 1e-12));

  std::vector<Matrix> ms;
  std::vector<ad::Var> vars;
  for (int i = 0; i < 4; ++i) {
    ms.push_back(symmetric_matrix(n, rng, 0.0, 1.0));
    vars.push_back(tape.constant(ms.back()));
  }
  double align = 0.0;
  for (std::size_t c = 0; c < n * n; ++c) {
    double mean = 0.0, ss = 0.0;
    for (const Matrix& m : ms) mean += m[c];
    mean /= static_cast<double>(ms.size());
    for (const Matrix& m : ms) ss += (m[c] - mean) * (m[c] - mean);
    align += std::sqrt(ss / static_cast<double>(ms.size()));
  }
  align /= static_cast<double>(n * n);
  out.push_back(bounded("oracle.align", std::fabs(model::align_loss(vars, n).item() - align), 1e-12));
  return out;
}

CheckResult check_sampler_mean(std::size_t draws, std::uint64_t seed) {
  // Complete graphs on 46 nodes: 1035 independent edges each.
  const std::size_t n = 46, per_graph = n * (n - 1) / 2;
  const std::size_t blocks = std::max<std::size_t>(1, (draws + per_graph - 1) / per_graph);
  Matrix a(blocks * n, n, 1.0);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < n; ++i) a(b * n + i, i) = 0.0;
  const model::EdgeIndex idx = model::build_edge_index(a, blocks);
  ad::Tape tape;
  Rng rng(seed);
  const model::SampledSubgraph s =
      model::concrete_sample(tape.constant(Matrix(idx.edge_count(), 1, 1.0)), idx, 1.0, rng, model::SampleMode::kSoft);
  double sum = 0.0, sq = 0.0;
  for (double v : s.gamma_edges.value().values()) {
    sum += v;
    sq += v * v;
  }
  const double count = static_cast<double>(idx.edge_count());
  const double mean = sum / count;
  const double se = std::sqrt((sq / count - mean * mean) / count);

  auto f = [](double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return 1.0 / (1.0 + std::exp(-(1.0 + std::log(u) - std::log1p(-u))));
  };
  const int m = 20000;
  double quad = f(0.0) + f(1.0);
  for (int i = 1; i < m; ++i) quad += (i % 2 ? 4.0 : 2.0) * f(static_cast<double>(i) / m);
  quad /= 3.0 * m;

  std::ostringstream detail;
  detail << std::setprecision(8) << idx.edge_count() << " draws, mean " << mean << ", quadrature " << quad;
  return bounded("sampler.monte_carlo_mean", std::fabs(mean - quad) / se, 3.0, detail.str());
}

CheckResult check_sampler_support(std::size_t instances, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t violations = 0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 3 + t % 8;
    const Matrix a = random_graph(n, 0.4, rng);
    const model::EdgeIndex idx = model::build_edge_index(a, 1);
    ad::Tape tape;
    const model::SampleMode mode = t % 2 ? model::SampleMode::kHard : model::SampleMode::kSoft;
    const model::SampledSubgraph s = model::concrete_sample(
        tape.constant(uniform_matrix(idx.edge_count(), 1, rng, -4.0, 4.0)), idx, 0.5 + static_cast<double>(t % 3), rng,
        mode);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (a(i, j) == 0.0 && s.gamma.value()(i, j) != 0.0) ++violations;
        if (mode == model::SampleMode::kHard && a(i, j) == 0.0 && s.hard(i, j) != 0.0) ++violations;
      }
  }
  return bounded("sampler.support", static_cast<double>(violations), 0.0,
                 std::to_string(instances) + " instances, " + std::to_string(violations) + " violations");
}

CheckResult check_symmetry(std::size_t passes, std::uint64_t seed) {
  Rng rng(seed);
  const model::BrainOODModel net(8, 2, tiny_config());
  double worst = 0.0;
  for (std::size_t t = 0; t < passes; ++t) {
    const auto nets = random_networks(2, 8, rng);
    const model::Batch batch = batch_of(nets);
    ad::Tape tape;
    const model::ForwardResult r = net.forward(tape, net.bind(tape), batch, {model::Mode::kTrain}, rng);
    worst = std::max(worst, asymmetry(r.mask_base->value(), 8));
    worst = std::max(worst, asymmetry(r.x_hat->value(), 8));
    for (const model::SampledSubgraph& s : r.samples) worst = std::max(worst, asymmetry(s.gamma.value(), 8));
  }
  return bounded("structure.symmetry", worst, 0.0, std::to_string(passes) + " forward passes");
}

CheckResult check_gin_equivariance(std::size_t permutations, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 9, d = 4;
  const Matrix x = symmetric_matrix(n, rng, -1.0, 1.0);
  const Matrix a = random_graph(n, 0.4, rng);
  ad::Tape tape;
  model::GinParams params;
  params.dropout = 0.0;
  Matrix running(2, d);
  for (std::size_t c = 0; c < d; ++c) running(1, c) = 1.0;
  for (std::size_t l = 0; l < 2; ++l)
    params.layers.push_back({tape.constant(uniform_matrix(l == 0 ? n : d, d, rng, -1.0, 1.0)),
                             tape.constant(uniform_matrix(1, d, rng, -1.0, 1.0)),
                             tape.constant(uniform_matrix(d, d, rng, -1.0, 1.0)),
                             tape.constant(uniform_matrix(1, d, rng, -1.0, 1.0)),
                             tape.constant(uniform_matrix(1, 1, rng, -0.5, 0.5)),
                             tape.constant(uniform_matrix(1, d, rng, 0.5, 1.5)),
                             tape.constant(uniform_matrix(1, d, rng, -1.0, 1.0)),
                             std::make_shared<const Matrix>(running)});
  double worst = 0.0;
  for (model::Mode mode : {model::Mode::kEval, model::Mode::kTrain}) {
    const Matrix h = model::gin_encode(tape.constant(x), tape.constant(a), params, 1, mode, rng).value();
    for (std::size_t t = 0; t < permutations; ++t) {
      std::vector<std::size_t> p(n);
      std::iota(p.begin(), p.end(), 0);
      std::shuffle(p.begin(), p.end(), rng);
      Matrix ap(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) ap(i, j) = a(p[i], p[j]);
      const Matrix hp =
          model::gin_encode(tape.constant(permute_rows(x, p)), tape.constant(ap), params, 1, mode, rng).value();
      worst = std::max(worst, max_abs_diff(hp, permute_rows(h, p)));
    }
  }
  return bounded("structure.gin_equivariance", worst, 1e-9,
                 std::to_string(permutations) + " permutations in each mode");
}

CheckResult check_kernel_variants(std::uint64_t seed) {
  const kernels::KernelTable& ref = kernels::scalar();
  std::vector<const kernels::KernelTable*> variants;
  if (const auto* t = kernels::avx2()) variants.push_back(t);
  if (const auto* t = kernels::neon()) variants.push_back(t);
  if (variants.empty()) return bounded("kernels.bitwise_variants", 0.0, 0.0, "no vector variant on this cpu");

  Rng rng(seed);
  const std::size_t m = 13, k = 11, n = 19;
  const Matrix a = uniform_matrix(m, k, rng, -1.0, 1.0), at = uniform_matrix(k, m, rng, -1.0, 1.0);
  const Matrix b = uniform_matrix(k, n, rng, -1.0, 1.0);
  const Matrix x = uniform_matrix(1, 37, rng, -1.0, 1.0), y = uniform_matrix(1, 37, rng, -1.0, 1.0);
  std::size_t mismatches = 0;
  std::string names;
  for (const kernels::KernelTable* t : variants) {
    names += std::string(names.empty() ? "" : ", ") + t->name;
    auto run = [&](const kernels::KernelTable& kt) {
      std::vector<double> out;
      std::vector<double> c(m * n);
      kt.gemm(a.data(), b.data(), c.data(), m, k, n);
      out.insert(out.end(), c.begin(), c.end());
      kt.gemm_tn(at.data(), b.data(), c.data(), m, k, n);
      out.insert(out.end(), c.begin(), c.end());
      std::vector<double> v(x.size());
      kt.add(x.data(), y.data(), v.data(), v.size());
      out.insert(out.end(), v.begin(), v.end());
      kt.sub(x.data(), y.data(), v.data(), v.size());
      out.insert(out.end(), v.begin(), v.end());
      kt.mul(x.data(), y.data(), v.data(), v.size());
      out.insert(out.end(), v.begin(), v.end());
      kt.scale(0.37, x.data(), v.data(), v.size());
      out.insert(out.end(), v.begin(), v.end());
      kt.axpy(-1.3, x.data(), v.data(), v.size());
      out.insert(out.end(), v.begin(), v.end());
      kt.accumulate(y.data(), v.data(), v.size());
      out.insert(out.end(), v.begin(), v.end());
      return out;
    };
    mismatches += bitwise_mismatches(run(ref), run(*t));
  }
  return bounded("kernels.bitwise_variants", static_cast<double>(mismatches), 0.0,
                 names + " against scalar, mismatching outputs counted");
}

CheckResult check_training_determinism() {
  data::SyntheticConfig sc;
  sc.n = 8;
  sc.sites = 2;
  sc.subjects_per_site = 8;
  sc.causal_edge_fraction = 0.1;
  sc.site_edge_fraction = 0.1;
  const data::SyntheticDataset syn = data::generate_synthetic(sc);
  const data::Dataset dataset = data::build_dataset(syn.manifest, syn.matrices);
  const data::SplitPlan plan = data::make_splits(dataset.manifest().entries, {"site0"}, {2, 1, 1}, 0);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.batch_size = 4;
  const TrainResult first = train(dataset, plan.folds[0], cfg);
  const TrainResult second = train(dataset, plan.folds[0], cfg);
  std::size_t differing = 0;
  if (encode_checkpoint(first.final_checkpoint) != encode_checkpoint(second.final_checkpoint)) ++differing;
  if (first.step_losses != second.step_losses) ++differing;
  return bounded("determinism.training", static_cast<double>(differing), 0.0,
                 std::to_string(first.step_losses.size()) + " steps, checkpoint bytes and loss trajectory compared");
}

bool SelftestReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

SelftestReport run_selftest(const SelftestOptions& options) {
  SelftestReport report;
  report.checks.push_back(check_full_gradient(options.inject_fault == "gradient"));
  for (CheckResult& c : check_loss_identities(7)) report.checks.push_back(std::move(c));
  report.checks.push_back(check_sampler_mean(100000, 11));
  report.checks.push_back(check_sampler_support(200, 13));
  report.checks.push_back(check_symmetry(20, 17));
  report.checks.push_back(check_gin_equivariance(5, 19));
  report.checks.push_back(check_kernel_variants(23));
  report.checks.push_back(check_training_determinism());
  return report;
}

void print_selftest(const SelftestReport& report, std::ostream& out) {
  std::size_t failed = 0;
  for (const CheckResult& c : report.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(32) << c.name << std::right
        << " max_error=" << std::setprecision(3) << std::scientific << c.max_error << " tolerance=" << c.tolerance
        << std::defaultfloat;
    if (!c.detail.empty()) out << "  (" << c.detail << ")";
    out << '\n';
    if (!c.passed) ++failed;
  }
  if (failed == 0) {
    out << "all checks passed\n";
  } else {
    out << failed << " check(s) failed:";
    for (const CheckResult& c : report.checks)
      if (!c.passed) out << ' ' << c.name;
    out << '\n';
  }
}

}  // namespace brainood::cli
