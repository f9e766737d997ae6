#pragma once

// Probes over frozen features: cosine kNN, a multinomial logistic-regression
// linear probe and collapse diagnostics.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "simdino/data.hpp"
#include "simdino/encoder.hpp"

namespace simdino {

struct FeatureTable {
  Matrix features;  // d×M, unit columns
  std::vector<std::size_t> labels;
  Split split = Split::Train;
  std::size_t class_count = 0;

  std::size_t dim() const { return features.rows; }
  std::size_t size() const { return features.cols; }
  void validate() const;
};

/// Majority label among the k most cosine-similar training features. Neighbour
/// ties go to the lower training index, vote ties to the smaller class id.
double knn_probe(const FeatureTable& train, const FeatureTable& val, std::size_t k = 20);
std::vector<std::size_t> knn_predict(const FeatureTable& train, const Matrix& queries, std::size_t k);

struct LinearProbeConfig {
  std::size_t epochs = 300;
  double lr = 1.0;
};

/// Softmax regression fitted by full-batch gradient descent from zero weights.
double linear_probe(const FeatureTable& train, const FeatureTable& val, const LinearProbeConfig& cfg = {});

/// exp(entropy of the normalized eigenvalues of ZZᵀ/M); lies in [1, d].
double effective_rank(const Matrix& z);

struct CollapseMetrics {
  double coding_rate = 0.0;
  double effective_rank = 0.0;
  double mean_pairwise_cosine = 0.0;
};

/// mean_pairwise_cosine uses every pair when there are at most max_pairs of
/// them, otherwise max_pairs distinct-index pairs drawn from Rng(seed).
CollapseMetrics collapse_metrics(const Matrix& z, double eps, std::size_t max_pairs = 20000, std::uint64_t seed = 0);

struct EvalViewConfig {
  std::size_t resize_edge = 36;
  std::size_t crop = 32;
  std::size_t patch = 8;
  std::size_t batch = 64;
};

/// Class-token features of every image in `split`, computed on the evaluation view.
FeatureTable extract_features(const EncoderParams& params, const EncoderConfig& cfg, const Dataset& ds, Split split,
                              const EvalViewConfig& view = {});

void write_feature_dump(const std::string& path, const FeatureTable& table);
FeatureTable read_feature_dump(const std::string& path);

}  // namespace simdino
