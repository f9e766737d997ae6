// simdino: generate | train | eval | verify | report

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "simdino/binary_io.hpp"
#include "simdino/config.hpp"
#include "simdino/report.hpp"
#include "simdino/theorem.hpp"

namespace fs = std::filesystem;
using namespace simdino;

namespace {

constexpr int kExitDiverged = 3;
constexpr int kExitViolation = 4;

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string mode;
  std::vector<std::string> overrides;  // key=value
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? parse_config("", "defaults") : load_config(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.mode.empty()) cfg.train.mode = parse_train_mode(c.mode);
  if (c.seed_set) cfg.train.seed = c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir + "': " + ec.message());
}

Dataset dataset_for(const RunConfig& cfg) {
  return cfg.data_path.empty() ? generate_synthetic(cfg.synthetic) : load_dataset(cfg.data_path);
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%d %H:%M:%S", std::localtime(&now));
  return buf;
}

struct ProbeRow {
  std::string encoder, metric;
  double value;
};

std::vector<ProbeRow> probe(const RunConfig& cfg, const TrainState& state, const Dataset& ds, const std::string& dump_dir) {
  std::vector<std::pair<std::string, const EncoderParams*>> encoders{{"teacher", &state.teacher}};
  if (cfg.probe_student || cfg.train.mode == TrainMode::NoDistill) encoders.emplace_back("student", &state.student);
  const EncoderConfig enc = cfg.train.effective_encoder();
  std::vector<ProbeRow> rows;
  for (const auto& [name, params] : encoders) {
    const auto train = extract_features(*params, enc, ds, Split::Train, cfg.eval_view);
    const auto val = extract_features(*params, enc, ds, Split::Val, cfg.eval_view);
    if (!dump_dir.empty()) {
      write_feature_dump((fs::path(dump_dir) / ("features_" + name + "_train.bin")).string(), train);
      write_feature_dump((fs::path(dump_dir) / ("features_" + name + "_val.bin")).string(), val);
    }
    const auto cm = collapse_metrics(val.features, cfg.train.loss.eps);
    rows.push_back({name, "knn_accuracy", knn_probe(train, val, cfg.knn_k)});
    rows.push_back({name, "linear_accuracy", linear_probe(train, val, cfg.linear)});
    rows.push_back({name, "coding_rate", cm.coding_rate});
    rows.push_back({name, "effective_rank", cm.effective_rank});
    rows.push_back({name, "mean_pairwise_cosine", cm.mean_pairwise_cosine});
  }
  return rows;
}

void write_probe_report(const std::string& dir, const std::vector<ProbeRow>& rows, const std::string& title) {
  std::ostringstream csv, text;
  csv << "encoder,metric,value\n";
  text << title << "\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    csv << r.encoder << ',' << r.metric << ',' << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.4f", r.value);
    text << "  " << r.encoder << ' ' << r.metric << ": " << buf << '\n';
  }
  write_file_atomic((fs::path(dir) / "eval.csv").string(), csv.str());
  write_file_atomic((fs::path(dir) / "eval_summary.txt").string(), text.str() + "generated " + timestamp() + "\n");
  std::cout << text.str();
}

int cmd_generate(const Common& c) {
  RunConfig cfg = resolve(c);
  if (c.seed_set) cfg.synthetic.seed = c.seed;
  const std::string dir = c.out.empty() ? "data" : c.out;
  make_dir(dir);
  const Dataset ds = generate_synthetic(cfg.synthetic);
  save_dataset(dir, ds);
  std::cout << "wrote " << ds.size() << " images (" << ds.class_count << " classes) to " << dir << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& resume) {
  RunConfig cfg = resolve(c);
  if (!data.empty()) cfg.data_path = data;
  const std::uint64_t hash = config_hash(cfg);
  const Dataset ds = dataset_for(cfg);
  make_dir(cfg.out_dir);
  write_file_atomic((fs::path(cfg.out_dir) / "config.txt").string(), serialize_config(cfg));

  std::optional<TrainState> start;
  const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  std::string kept;  // rows logged before the resume point
  if (!resume.empty()) {
    start = load_checkpoint(resume, hash);
    if (fs::exists(metrics_path)) {
      std::istringstream old(read_file(metrics_path));
      std::string line;
      std::getline(old, line);
      while (std::getline(old, line))
        if (!line.empty() && std::stoull(line.substr(0, line.find(','))) < start->step) kept += line + "\n";
    }
  }
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw Error("cannot open '" + metrics_path + "' for writing");
  write_metrics_header(metrics);
  metrics << kept;

  RunOptions opts;
  opts.checkpoint_dir = (fs::path(cfg.out_dir) / "checkpoints").string();
  opts.checkpoint_every = cfg.checkpoint_every;
  opts.config_hash = hash;
  opts.on_step = [&](const StepMetrics& m) {
    write_metrics_row(metrics, m);
    metrics.flush();
  };
  RunResult result;
  try {
    result = run_training(cfg.train, ds, opts, std::move(start));
  } catch (const TrainingDiverged& e) {
    std::cerr << "simdino train: " << e.what() << "\n";
    return kExitDiverged;
  }
  metrics.close();
  const auto rows = probe(cfg, result.state, ds, cfg.out_dir);
  write_probe_report(cfg.out_dir, rows,
                     std::string("train ") + to_string(cfg.train.mode) + ", " + std::to_string(result.state.step) +
                         " steps, config " + hex64(hash));
  return 0;
}

int cmd_eval(Common c, const std::string& data, std::string checkpoint) {
  // A training directory carries its resolved config.
  if (c.config_path.empty() && !c.out.empty() && fs::exists(fs::path(c.out) / "config.txt"))
    c.config_path = (fs::path(c.out) / "config.txt").string();
  RunConfig cfg = resolve(c);
  if (!data.empty()) cfg.data_path = data;
  if (checkpoint.empty()) checkpoint = (fs::path(cfg.out_dir) / "checkpoints" / "checkpoint_final.bin").string();
  const std::uint64_t hash = config_hash(cfg);
  const TrainState state = load_checkpoint(checkpoint, hash);
  const Dataset ds = dataset_for(cfg);
  make_dir(cfg.out_dir);
  const auto rows = probe(cfg, state, ds, cfg.out_dir);
  write_probe_report(cfg.out_dir, rows, "eval " + checkpoint + " (step " + std::to_string(state.step) + ")");
  return 0;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::istringstream one(item);
    T v{};
    if (!(one >> v) || !(one >> std::ws).eof() || !(v > T{})) throw Error(std::string("--") + what + ": bad entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error(std::string("--") + what + " is empty");
  return out;
}

int cmd_verify(const Common& c, const std::string& ds_, const std::string& ns_, const std::string& eps_, std::size_t trials) {
  const auto ds = parse_list<std::size_t>(ds_, "d");
  const auto ns = parse_list<std::size_t>(ns_, "n");
  const auto epss = parse_list<double>(eps_, "eps");
  if (trials == 0) throw Error("--trials must be positive");
  const auto points = verify_grid(ds, ns, epss, trials, c.seed_set ? c.seed : 0);
  std::ostringstream csv;
  write_verify_csv(csv, points);
  const std::string dir = c.out.empty() ? "verify" : c.out;
  make_dir(dir);
  write_file_atomic((fs::path(dir) / "verify.csv").string(), csv.str());
  std::size_t bad = 0;
  double max_ratio = 0.0, max_quarter = 0.0;
  for (const auto& p : points) {
    bad += !p.ok();
    max_ratio = std::max(max_ratio, p.ratio);
    max_quarter = std::max(max_quarter, p.quarter_ratio);
  }
  std::cout << points.size() << " grid points, " << trials << " trials each\n"
            << "max ‖∇R‖/certified bound (1/2 constant): " << max_ratio << "\n"
            << "max ‖∇R‖/(1/4 constant bound):          " << max_quarter << "\n"
            << (bad ? std::to_string(bad) + " point(s) failed\n" : "all checks passed\n");
  return bad ? kExitViolation : 0;
}

int cmd_report(const Common& c, const std::vector<std::string>& logs, std::vector<std::string> names) {
  if (logs.empty()) throw Error("report needs at least one metrics log");
  if (!names.empty() && names.size() != logs.size()) throw Error("--name must be given once per log");
  std::vector<MetricsLog> parsed;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    std::string name = i < names.size() ? names[i] : fs::path(logs[i]).parent_path().filename().string();
    if (name.empty()) name = fs::path(logs[i]).stem().string();
    parsed.push_back(read_metrics_csv(logs[i], name));
  }
  for (std::size_t i = 0; i < parsed.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (parsed[i].name == parsed[j].name) parsed[i].name += "_" + std::to_string(i);
  const Report r = build_report(parsed);
  const std::string dir = c.out.empty() ? "report" : c.out;
  make_dir((fs::path(dir) / "plots").string());
  write_file_atomic((fs::path(dir) / "report.csv").string(), report_csv(r));
  std::vector<std::string> runs;
  for (const auto& l : parsed) runs.push_back(l.name);
  for (const auto& m : r.metrics)
    write_file_atomic((fs::path(dir) / "plots" / (m + ".png")).string(), encode_png(plot_metric(r, runs, m)));
  std::ostringstream notes;
  notes << "runs:";
  for (const auto& n : runs) notes << ' ' << n;
  notes << "\naligned_steps: " << r.aligned_steps << "\ntruncated: " << (r.truncated ? "yes" : "no") << "\n";
  notes << "plot colours in run order: blue, red, green, orange, purple, cyan\n";
  for (const auto& w : r.warnings) {
    notes << "warning: " << w << "\n";
    std::cerr << "simdino report: warning: " << w << "\n";
  }
  write_file_atomic((fs::path(dir) / "report_notes.txt").string(), notes.str());
  std::cout << "report over " << runs.size() << " log(s), " << r.aligned_steps << " aligned steps -> " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SimDINO desk-scale pipelines"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key = value config file");
    sub->add_option("--seed", common.seed, "seed override")->each([&](const std::string&) { common.seed_set = true; });
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--mode", common.mode, "simdino | simdinov2 | dino-baseline | no-distill")
        ->check(CLI::IsMember({"simdino", "simdinov2", "dino-baseline", "no-distill"}));
    sub->add_option("--set", common.overrides, "config override key=value (repeatable)");
  };

  auto* gen = app.add_subcommand("generate", "write the synthetic blob dataset");
  add_common(gen);

  std::string data, resume, checkpoint;
  auto* train = app.add_subcommand("train", "train and probe the teacher");
  add_common(train);
  train->add_option("--data", data, "dataset directory (overrides data.path)");
  train->add_option("--resume", resume, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "kNN, linear and collapse probes of a checkpoint");
  add_common(eval);
  eval->add_option("--data", data, "dataset directory (overrides data.path)");
  eval->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/checkpoints/checkpoint_final.bin)");

  std::string vd = "4,16,32", vn = "8,16,64", veps = "0.1,0.5,1.0";
  std::size_t trials = 10000;
  auto* verify = app.add_subcommand("verify", "check the coding-rate gradient bound");
  add_common(verify);
  verify->add_option("--d", vd, "comma-separated feature dimensions");
  verify->add_option("--n", vn, "comma-separated sample counts");
  verify->add_option("--eps", veps, "comma-separated ε values");
  verify->add_option("--trials", trials, "random matrices per grid point");

  std::vector<std::string> logs, names;
  auto* report = app.add_subcommand("report", "align metrics logs and plot them");
  add_common(report);
  report->add_option("logs", logs, "metrics.csv files")->required();
  report->add_option("--name", names, "run name per log (default: parent directory)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(common);
    if (*train) return cmd_train(common, data, resume);
    if (*eval) return cmd_eval(common, data, checkpoint);
    if (*verify) return cmd_verify(common, vd, vn, veps, trials);
    if (*report) return cmd_report(common, logs, names);
  } catch (const std::exception& e) {
    std::cerr << "simdino " << app.get_subcommands().front()->get_name() << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
