#pragma once

// Flat key=value experiment configuration with command-line overrides, plus
// the CSV artifact writers: append-safe metric rows with header dedup, and
// the per-run training log.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightcf/bpr.hpp"
#include "lightcf/propagation.hpp"

namespace lightcf {

// Malformed configuration input (unknown key, bad value, bad override).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string dataset_dir;
  std::string variant = "cf_lgcn_u";  // cf_lgcn_u | cf_lgcn_e | lightgcn | mf
  bool twin = false;
  std::size_t layers = 3;
  std::string fusion = "mean";  // mean | concat
  std::vector<double> fusion_weights;
  std::string normalization = "symmetric";  // none | left | right | symmetric
  bool include_layer0 = true;
  std::size_t dim = 64;
  double init_stddev = 0.1;
  double learning_rate = 1e-3;
  double l2_lambda = 1e-4;
  std::size_t batch_size = 2048;
  std::size_t max_epochs = 1000;
  std::size_t eval_every = 20;
  std::size_t patience = 10;
  double edge_dropout = 0.0;
  std::size_t negatives_per_positive = 1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> eval_k = {20};
  std::string out_dir = "run";
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

inline double parse_double(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  }
  if (used != v.size())
    throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  return x;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected non-negative integer, got '" + v + "'");
  }
  if (used != v.size() || v.find('-') != std::string::npos)
    throw ConfigError("config key '" + key + "': expected non-negative integer, got '" + v + "'");
  return x;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ','))
    if (!trim(cur).empty()) parts.push_back(trim(cur));
  return parts;
}

inline std::string format_double(double x) {
  std::ostringstream out;
  out << std::setprecision(17) << x;
  return out.str();
}

template <typename T, typename Fmt>
std::string join(const std::vector<T>& xs, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fmt(xs[i]);
  }
  return out;
}

}  // namespace detail

inline void apply_setting(ExperimentConfig& cfg, const std::string& key,
                          const std::string& value) {
  using namespace detail;
  if (key == "dataset_dir") cfg.dataset_dir = value;
  else if (key == "variant") cfg.variant = value;
  else if (key == "twin") cfg.twin = parse_bool(value, key);
  else if (key == "layers") cfg.layers = parse_u64(value, key);
  else if (key == "fusion") cfg.fusion = value;
  else if (key == "fusion_weights") {
    cfg.fusion_weights.clear();
    for (const std::string& p : split_list(value))
      cfg.fusion_weights.push_back(parse_double(p, key));
  } else if (key == "normalization") cfg.normalization = value;
  else if (key == "include_layer0") cfg.include_layer0 = parse_bool(value, key);
  else if (key == "dim") cfg.dim = parse_u64(value, key);
  else if (key == "init_stddev") cfg.init_stddev = parse_double(value, key);
  else if (key == "learning_rate") cfg.learning_rate = parse_double(value, key);
  else if (key == "l2_lambda") cfg.l2_lambda = parse_double(value, key);
  else if (key == "batch_size") cfg.batch_size = parse_u64(value, key);
  else if (key == "max_epochs") cfg.max_epochs = parse_u64(value, key);
  else if (key == "eval_every") cfg.eval_every = parse_u64(value, key);
  else if (key == "patience") cfg.patience = parse_u64(value, key);
  else if (key == "edge_dropout") cfg.edge_dropout = parse_double(value, key);
  else if (key == "negatives_per_positive") cfg.negatives_per_positive = parse_u64(value, key);
  else if (key == "seed") cfg.seed = parse_u64(value, key);
  else if (key == "eval_k") {
    cfg.eval_k.clear();
    for (const std::string& p : split_list(value))
      cfg.eval_k.push_back(parse_u64(p, key));
    if (cfg.eval_k.empty()) throw ConfigError("config key 'eval_k': list must be nonempty");
  } else if (key == "out_dir") cfg.out_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

// One override of the form key=value, as accepted on the command line.
inline void apply_override(ExperimentConfig& cfg, const std::string& setting) {
  std::size_t eq = setting.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value, got '" + setting + "'");
  apply_setting(cfg, detail::trim(setting.substr(0, eq)), detail::trim(setting.substr(eq + 1)));
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected key=value, got '" + t + "'");
    try {
      apply_setting(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

inline void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  using namespace detail;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "dataset_dir=" << cfg.dataset_dir << '\n'
      << "variant=" << cfg.variant << '\n'
      << "twin=" << (cfg.twin ? "true" : "false") << '\n'
      << "layers=" << cfg.layers << '\n'
      << "fusion=" << cfg.fusion << '\n'
      << "fusion_weights=" << join(cfg.fusion_weights, format_double) << '\n'
      << "normalization=" << cfg.normalization << '\n'
      << "include_layer0=" << (cfg.include_layer0 ? "true" : "false") << '\n'
      << "dim=" << cfg.dim << '\n'
      << "init_stddev=" << format_double(cfg.init_stddev) << '\n'
      << "learning_rate=" << format_double(cfg.learning_rate) << '\n'
      << "l2_lambda=" << format_double(cfg.l2_lambda) << '\n'
      << "batch_size=" << cfg.batch_size << '\n'
      << "max_epochs=" << cfg.max_epochs << '\n'
      << "eval_every=" << cfg.eval_every << '\n'
      << "patience=" << cfg.patience << '\n'
      << "edge_dropout=" << format_double(cfg.edge_dropout) << '\n'
      << "negatives_per_positive=" << cfg.negatives_per_positive << '\n'
      << "seed=" << cfg.seed << '\n'
      << "eval_k=" << join(cfg.eval_k, [](std::size_t k) { return std::to_string(k); }) << '\n'
      << "out_dir=" << cfg.out_dir << '\n';
}

// Relative output directories resolve under $LIGHTCF_OUTPUT_ROOT when set.
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  std::filesystem::path p = cfg.out_dir.empty() ? "run" : cfg.out_dir;
  if (p.is_relative())
    if (const char* root = std::getenv("LIGHTCF_OUTPUT_ROOT"))
      if (*root) p = std::filesystem::path(root) / p;
  return p;
}

inline TrainConfig train_config_from(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.learning_rate;
  t.l2_lambda = cfg.l2_lambda;
  t.batch_size = cfg.batch_size;
  t.max_epochs = cfg.max_epochs;
  t.eval_every = cfg.eval_every;
  t.patience = cfg.patience;
  t.edge_dropout_p = cfg.edge_dropout;
  t.negatives_per_positive = cfg.negatives_per_positive;
  t.seed = cfg.seed;
  t.init_stddev = cfg.init_stddev;
  t.validate();
  return t;
}

// "mf" is matrix factorization: the coupled variant with zero propagation
// layers, scoring U^(0) E^(0)^T directly.
inline Model model_from_config(const ExperimentConfig& cfg, std::size_t num_users,
                               std::size_t num_items) {
  std::string variant = cfg.variant;
  std::size_t layers = cfg.layers;
  if (variant == "mf") {
    variant = "lightgcn";
    layers = 0;
  }
  FusionSpec fusion{fusion_mode_from_string(cfg.fusion), cfg.fusion_weights};
  return make_model(variant_from_string(variant), cfg.twin, num_users, num_items, cfg.dim,
                    layers, norm_variant_from_string(cfg.normalization), cfg.include_layer0,
                    fusion, cfg.seed, cfg.init_stddev);
}

inline std::string model_label(const ExperimentConfig& cfg) {
  return cfg.twin ? cfg.variant + "_twin" : cfg.variant;
}

// ----- metric CSV ------------------------------------------------------

struct MetricsRow {
  std::string model;
  std::size_t layers = 0;
  std::string fusion;
  double recall = 0.0;  // percent
  double ndcg = 0.0;    // percent
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
};

inline std::string metrics_header(std::size_t k) {
  return "model,layers,fusion,recall@" + std::to_string(k) + ",ndcg@" + std::to_string(k) +
         ",seed,wall_time_s";
}

namespace detail {

inline std::string format_metric(double x) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6) << x;
  return out.str();
}

}  // namespace detail

inline std::string format_metrics_row(const MetricsRow& row) {
  std::ostringstream out;
  out << row.model << ',' << row.layers << ',' << row.fusion << ','
      << detail::format_metric(row.recall) << ',' << detail::format_metric(row.ndcg) << ','
      << row.seed << ',' << detail::format_metric(row.wall_time_s);
  return out.str();
}

// Appends a row, emitting the header only when the file is new or empty.
// Appending under a different k (mismatched header) is refused.
inline void append_metrics_row(const std::filesystem::path& path, std::size_t k,
                               const MetricsRow& row) {
  std::string header = metrics_header(k);
  bool need_header = true;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string first;
    if (std::getline(in, first) && !first.empty()) {
      if (first != header)
        throw ConfigError("metric file " + path.string() + " has header '" + first +
                          "' but this run writes '" + header + "'");
      need_header = false;
    }
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  if (need_header) out << header << '\n';
  out << format_metrics_row(row) << '\n';
}

struct MetricsFile {
  std::size_t k = 0;
  std::vector<MetricsRow> rows;
};

inline MetricsFile parse_metrics_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metric file: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty metric file: " + path.string());
  std::size_t at = header.find("recall@");
  if (at == std::string::npos)
    throw std::runtime_error("unrecognized metric header in " + path.string());
  MetricsFile file;
  file.k = detail::parse_u64(header.substr(at + 7, header.find(',', at) - at - 7), "k");
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) f.push_back(tok);
    if (f.size() != 7)
      throw std::runtime_error("malformed metric row in " + path.string() + ": " + line);
    MetricsRow row;
    row.model = f[0];
    row.layers = detail::parse_u64(f[1], "layers");
    row.fusion = f[2];
    row.recall = detail::parse_double(f[3], "recall");
    row.ndcg = detail::parse_double(f[4], "ndcg");
    row.seed = detail::parse_u64(f[5], "seed");
    row.wall_time_s = detail::parse_double(f[6], "wall_time_s");
    file.rows.push_back(std::move(row));
  }
  return file;
}

inline void write_training_log(const std::filesystem::path& path,
                               const std::vector<TrainLogEntry>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "epoch,train_loss,val_recall,val_ndcg\n";
  for (const TrainLogEntry& e : log)
    out << e.epoch << ',' << detail::format_double(e.train_loss) << ','
        << detail::format_double(e.val_recall) << ',' << detail::format_double(e.val_ndcg)
        << '\n';
}

}  // namespace lightcf
