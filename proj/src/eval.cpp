#include "simdino/eval.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "simdino/binary_io.hpp"
#include "simdino/coding_rate.hpp"

namespace simdino {

void FeatureTable::validate() const {
  if (features.cols != labels.size())
    throw Error("feature table: " + std::to_string(features.cols) + " columns but " + std::to_string(labels.size()) + " labels");
  for (std::size_t l : labels)
    if (l >= class_count) throw Error("feature table: label " + std::to_string(l) + " ≥ class count " + std::to_string(class_count));
  check_unit_columns(features);
}

std::vector<std::size_t> knn_predict(const FeatureTable& train, const Matrix& queries, std::size_t k) {
  if (k == 0) throw Error("knn: k must be ≥ 1");
  if (train.size() == 0) throw Error("knn: empty training table");
  if (k > train.size()) throw Error("knn: k = " + std::to_string(k) + " exceeds training size " + std::to_string(train.size()));
  if (queries.rows != train.dim()) throw Error("knn: query dimension differs from training features");
  const std::size_t n = train.size(), d = train.dim();
  std::vector<std::size_t> out(queries.cols);
  std::vector<double> sim(n);
  std::vector<std::size_t> order(n);
  for (std::size_t q = 0; q < queries.cols; ++q) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < d; ++r) s += queries(r, q) * train.features(r, j);
      sim[j] = s;
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return sim[a] > sim[b] || (sim[a] == sim[b] && a < b); });
    std::vector<std::size_t> votes(train.class_count, 0);
    for (std::size_t i = 0; i < k; ++i) ++votes[train.labels[order[i]]];
    out[q] = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

double knn_probe(const FeatureTable& train, const FeatureTable& val, std::size_t k) {
  if (val.size() == 0) throw Error("knn: empty validation table");
  const auto pred = knn_predict(train, val.features, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == val.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

// Logits K×M for weights K×d, bias K and features d×M.
Matrix logits(const Matrix& w, const std::vector<double>& b, const Matrix& x) {
  Matrix out = matmul(w, x);
  for (std::size_t k = 0; k < out.rows; ++k)
    for (std::size_t j = 0; j < out.cols; ++j) out(k, j) += b[k];
  return out;
}

}  // namespace

double linear_probe(const FeatureTable& train, const FeatureTable& val, const LinearProbeConfig& cfg) {
  if (train.size() == 0 || val.size() == 0) throw Error("linear probe: empty split");
  if (train.dim() != val.dim()) throw Error("linear probe: feature dimensions differ");
  const std::size_t K = std::max(train.class_count, val.class_count), d = train.dim(), M = train.size();
  Matrix w(K, d);
  std::vector<double> b(K, 0.0);
  const Matrix xt = train.features.transposed();  // M×d
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Matrix z = logits(w, b, train.features);
    double loss = 0.0;
    // z becomes (softmax − onehot)/M column by column.
    for (std::size_t j = 0; j < M; ++j) {
      double mx = -INFINITY;
      for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, z(k, j));
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) total += std::exp(z(k, j) - mx);
      loss -= z(train.labels[j], j) - mx - std::log(total);
      for (std::size_t k = 0; k < K; ++k) z(k, j) = std::exp(z(k, j) - mx) / total;
      z(train.labels[j], j) -= 1.0;
      for (std::size_t k = 0; k < K; ++k) z(k, j) /= static_cast<double>(M);
    }
    if (!std::isfinite(loss))
      throw Error("linear probe: non-finite loss at epoch " + std::to_string(epoch) + " (lr " + std::to_string(cfg.lr) + ")");
    const Matrix gw = matmul(z, xt);
    for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] -= cfg.lr * gw.data[i];
    for (std::size_t k = 0; k < K; ++k) {
      double g = 0.0;
      for (std::size_t j = 0; j < M; ++j) g += z(k, j);
      b[k] -= cfg.lr * g;
    }
  }
  const Matrix z = logits(w, b, val.features);
  std::size_t hits = 0;
  for (std::size_t j = 0; j < val.size(); ++j) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (z(k, j) > z(best, j)) best = k;
    hits += best == val.labels[j];
  }
  return static_cast<double>(hits) / static_cast<double>(val.size());
}

double effective_rank(const Matrix& z) {
  if (z.cols == 0 || z.rows == 0) throw Error("effective rank of an empty feature matrix");
  const auto d = static_cast<Eigen::Index>(z.rows);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> zm(
      z.data.data(), d, static_cast<Eigen::Index>(z.cols));
  second.noalias() = zm * zm.transpose() / static_cast<double>(z.cols);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(second, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd lambda = solver.eigenvalues().cwiseMax(0.0);
  const double total = lambda.sum();
  if (!(total > 0.0)) return 1.0;
  double h = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double p = lambda[i] / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::clamp(std::exp(h), 1.0, static_cast<double>(z.rows));
}

CollapseMetrics collapse_metrics(const Matrix& z, double eps, std::size_t max_pairs, std::uint64_t seed) {
  const std::size_t M = z.cols;
  if (M < 2) throw Error("collapse metrics need at least two features");
  CollapseMetrics out;
  out.coding_rate = coding_rate(z, CodingRateConfig{eps, false});
  out.effective_rank = effective_rank(z);
  auto cosine = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t r = 0; r < z.rows; ++r) s += z(r, a) * z(r, b);
    return s;
  };
  const std::size_t all_pairs = M * (M - 1) / 2;
  double total = 0.0;
  std::size_t count = 0;
  if (all_pairs <= max_pairs) {
    for (std::size_t a = 0; a < M; ++a)
      for (std::size_t b = a + 1; b < M; ++b, ++count) total += cosine(a, b);
  } else {
    Rng rng(seed);
    for (; count < max_pairs; ++count) {
      const std::size_t a = rng.below(M);
      std::size_t b = rng.below(M - 1);
      if (b >= a) ++b;
      total += cosine(a, b);
    }
  }
  out.mean_pairwise_cosine = total / static_cast<double>(count);
  return out;
}

FeatureTable extract_features(const EncoderParams& params, const EncoderConfig& cfg, const Dataset& ds, Split split,
                              const EvalViewConfig& view) {
  if (view.batch == 0) throw Error("eval batch size must be positive");
  const auto idx = ds.indices(split);
  FeatureTable table;
  table.split = split;
  table.class_count = ds.class_count;
  table.features = Matrix(cfg.out_dim, idx.size());
  const EncoderTensors w = bind(params, false);
  for (std::size_t start = 0; start < idx.size(); start += view.batch) {
    const std::size_t stop = std::min(idx.size(), start + view.batch);
    std::vector<PatchSequence> seqs;
    for (std::size_t i = start; i < stop; ++i)
      seqs.push_back(eval_view(ds.images[idx[i]], view.resize_edge, view.crop, view.patch));
    const auto feats = encode(w, cfg, stack_sequences(seqs), false);
    for (std::size_t j = 0; j < stop - start; ++j)
      for (std::size_t r = 0; r < cfg.out_dim; ++r) table.features(r, start + j) = feats.cls.at(r, j);
  }
  for (std::size_t i : idx) table.labels.push_back(ds.labels[i]);
  return table;
}

namespace {
constexpr char kFeatureMagic[8] = {'S', 'D', 'F', 'E', 'A', 'T', '\0', '\0'};
constexpr std::uint64_t kFeatureVersion = 1;
}  // namespace

void write_feature_dump(const std::string& path, const FeatureTable& table) {
  table.validate();
  std::ostringstream os;
  BinaryWriter w(os);
  w.raw({kFeatureMagic, 8});
  w.u64(kFeatureVersion);
  w.u64(table.dim());
  w.u64(table.size());
  w.u64(table.class_count);
  w.u64(table.split == Split::Train ? 0 : 1);
  for (std::size_t l : table.labels) w.u64(l);
  w.f64s(table.features.data);
  write_file_atomic(path, os.str());
}

FeatureTable read_feature_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open feature dump '" + path + "'");
  BinaryReader r(is, path);
  if (r.raw(8) != std::string(kFeatureMagic, 8)) throw Error(path + ": not a feature dump (bad magic)");
  if (const auto v = r.u64(); v != kFeatureVersion) throw Error(path + ": unsupported feature dump version " + std::to_string(v));
  FeatureTable t;
  const auto d = r.u64(), m = r.u64();
  t.class_count = r.u64();
  const auto split = r.u64();
  if (split > 1) throw Error(path + ": bad split tag");
  t.split = split == 0 ? Split::Train : Split::Val;
  if (d * m > (std::size_t{1} << 28)) throw Error(path + ": implausible feature dump size");
  for (std::size_t i = 0; i < m; ++i) t.labels.push_back(r.u64());
  t.features = Matrix(d, m, r.f64s(d * m));
  r.expect_end();
  t.validate();
  return t;
}

}  // namespace simdino
