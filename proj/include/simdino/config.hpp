#pragma once

// Run configuration: a flat "key = value" text file. Unknown keys, repeated
// keys and malformed values are rejected with the offending key and line.
// Comments start with '#'.

#include <cstdint>
#include <string>
#include <vector>

#include "simdino/data.hpp"
#include "simdino/eval.hpp"
#include "simdino/trainer.hpp"

namespace simdino {

struct RunConfig {
  TrainConfig train;
  std::size_t channels = 3;
  std::string data_path;  // empty: generate from `synthetic`
  SyntheticSpec synthetic;
  std::string out_dir = "out";
  std::size_t checkpoint_every = 0;
  std::size_t knn_k = 20;
  LinearProbeConfig linear;
  EvalViewConfig eval_view;
  bool probe_student = false;

  RunConfig();
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

/// Every accepted key with its one-line description, in file order.
std::vector<ConfigKey> config_keys();

RunConfig parse_config(const std::string& text, const std::string& source = "config");
RunConfig load_config(const std::string& path);
/// Every key, one per line, in canonical order; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);
/// Hash of the keys that determine training (everything except eval.*, run.* and out_dir).
std::uint64_t config_hash(const RunConfig& cfg);

/// Applies one key = value assignment (used for command-line overrides).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace simdino
