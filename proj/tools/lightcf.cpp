// Command-line front end: data preparation, training, evaluation, inductive
// inference, self-verification and config sweeps.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lightcf/checkpoint.hpp"
#include "lightcf/config.hpp"
#include "lightcf/data.hpp"
#include "lightcf/inductive.hpp"
#include "lightcf/metrics.hpp"
#include "lightcf/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace lightcf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBadConfig = 3;
constexpr int kExitMissingFile = 4;
constexpr int kExitBadData = 5;
constexpr int kExitRuntime = 6;

struct MissingFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw MissingFileError(std::string(what) + " not found: " + p.string());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Edge> read_interactions(const fs::path& path, IdMap& users, IdMap& items) {
  require_exists(path, "interaction file");
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open interaction file: " + path.string());
  try {
    return parse_interactions(in, users, items);
  } catch (const std::exception& e) {
    throw DataFormatError(path.string() + ": " + e.what());
  }
}

ExperimentConfig load_config_checked(const fs::path& path,
                                     const std::vector<std::string>& overrides) {
  require_exists(path, "config file");
  ExperimentConfig cfg = load_config(path);
  for (const std::string& s : overrides) apply_override(cfg, s);
  return cfg;
}

DatasetBundle load_dataset_checked(const std::string& dir) {
  if (dir.empty()) throw ConfigError("dataset_dir is not set");
  require_exists(dir, "dataset directory");
  require_exists(fs::path(dir) / "splits.txt", "split manifest");
  try {
    return load_dataset(dir);
  } catch (const std::exception& e) {
    throw DataFormatError(std::string("dataset ") + dir + ": " + e.what());
  }
}

Model load_model_checked(const fs::path& dir) {
  require_exists(dir / "model.json", "checkpoint manifest");
  try {
    return load_model(dir);
  } catch (const std::exception& e) {
    throw DataFormatError(std::string("checkpoint ") + dir.string() + ": " + e.what());
  }
}

std::size_t effective_layers(const ExperimentConfig& cfg) {
  return cfg.variant == "mf" ? 0 : cfg.layers;
}

struct TrainArtifacts {
  FitResult fit;
  double wall_s = 0.0;
  fs::path out;
};

TrainArtifacts run_training(const ExperimentConfig& cfg) {
  DatasetBundle bundle = load_dataset_checked(cfg.dataset_dir);
  Model model = model_from_config(cfg, bundle.num_users(), bundle.num_items());
  TrainConfig tc = train_config_from(cfg);
  std::size_t k = cfg.eval_k.front();

  bool has_val = false;
  for (const auto& s : bundle.val_sets)
    if (!s.empty()) {
      has_val = true;
      break;
    }
  Evaluator evaluator;
  if (has_val) {
    evaluator = make_validation_evaluator(bundle, k, model.normalization());
  } else {
    std::cerr << "note: validation split is empty; using the test split for model selection\n";
    auto g = std::make_shared<NormalizedGraph>(normalize(bundle.graph_train, model.normalization()));
    auto sets = std::make_shared<std::vector<std::vector<std::size_t>>>(bundle.test_sets);
    evaluator = [g, sets, k](const Model& mm) { return evaluate_model(mm, *g, *sets, k); };
  }

  auto t0 = std::chrono::steady_clock::now();
  TrainArtifacts art;
  art.fit = fit(std::move(model), bundle, tc, evaluator);
  art.wall_s = seconds_since(t0);
  art.out = resolve_output_dir(cfg);
  fs::create_directories(art.out);
  save_model(art.out / "checkpoint", art.fit.model, cfg.seed);
  write_training_log(art.out / "training_log.csv", art.fit.log);
  save_config(art.out / "config.cfg", cfg);
  return art;
}

int cmd_prepare(const fs::path& train_path, const fs::path& test_path, const std::string& out_dir,
                double val_fraction, std::uint64_t seed, bool inductive, double holdout_fraction,
                double inference_fraction, std::size_t min_user, std::size_t min_item) {
  IdMap users, items;
  std::vector<Edge> train_edges = read_interactions(train_path, users, items);
  std::vector<Edge> test_edges;
  if (!test_path.empty()) test_edges = read_interactions(test_path, users, items);

  Rng rng(seed);
  DatasetBundle bundle =
      transductive_split(train_edges, test_edges, users.size(), items.size(), rng, val_fraction);
  bundle.user_ids = std::move(users);
  bundle.item_ids = std::move(items);
  if (inductive)
    bundle = inductive_split(bundle, rng, holdout_fraction, inference_fraction, min_user, min_item);

  fs::create_directories(out_dir);
  save_dataset(out_dir, bundle);

  std::size_t val_edges = 0, test_eval = 0;
  for (const auto& s : bundle.val_sets) val_edges += s.size();
  for (const auto& s : bundle.test_sets) test_eval += s.size();
  std::cout << bundle.num_users() << " users, " << bundle.num_items() << " items; train "
            << bundle.graph_train.num_edges() << ", val " << val_edges << ", test " << test_eval
            << " interactions\n";
  if (bundle.inductive) {
    std::size_t ind_eval = 0;
    for (const auto& s : bundle.inductive->eval_sets) ind_eval += s.size();
    std::cout << "inductive holdout: " << bundle.inductive->held_users.size() << " users, "
              << bundle.inductive->held_items.size() << " items, "
              << bundle.inductive->inference_edges.size() << " inference edges, " << ind_eval
              << " eval interactions\n";
  }
  std::cout << "wrote " << out_dir << "\n";
  return kExitOk;
}

int cmd_train(const fs::path& config_path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = load_config_checked(config_path, overrides);
  TrainArtifacts art = run_training(cfg);
  std::cout << "best epoch " << art.fit.best_epoch << ": recall@" << cfg.eval_k.front() << " "
            << 100.0 * art.fit.best_recall << ", ndcg@" << cfg.eval_k.front() << " "
            << 100.0 * art.fit.best_ndcg << " (" << art.wall_s << " s)\n"
            << "artifacts in " << art.out << "\n";
  return kExitOk;
}

int cmd_evaluate(const fs::path& config_path, const std::vector<std::string>& overrides,
                 const std::string& checkpoint, const std::string& split) {
  ExperimentConfig cfg = load_config_checked(config_path, overrides);
  DatasetBundle bundle = load_dataset_checked(cfg.dataset_dir);
  fs::path out = resolve_output_dir(cfg);
  fs::path ckpt = checkpoint.empty() ? out / "checkpoint" : fs::path(checkpoint);
  Model model = load_model_checked(ckpt);
  if (model.tables().front()->rows() != (model.nets.front().spec.variant == Variant::cf_lgcn_e
                                             ? bundle.num_items()
                                             : bundle.num_users()))
    throw DataFormatError("checkpoint dimensions do not match the dataset");

  NormalizedGraph gn = normalize(bundle.graph_train, model.normalization());
  const auto& sets = split == "val" ? bundle.val_sets : bundle.test_sets;
  fs::create_directories(out);
  for (std::size_t k : cfg.eval_k) {
    auto t0 = std::chrono::steady_clock::now();
    EvalResult res = evaluate_model(model, gn, sets, k);
    double wall = seconds_since(t0);
    MetricsRow row{model_label(cfg), effective_layers(cfg), cfg.fusion,
                   100.0 * res.recall,  100.0 * res.ndcg,   cfg.seed,
                   wall};
    fs::path report = out / ("metrics_k" + std::to_string(k) + ".csv");
    append_metrics_row(report, k, row);
    std::cout << "recall@" << k << " " << row.recall << ", ndcg@" << k << " " << row.ndcg << " ("
              << res.users_evaluated << " users) -> " << report << "\n";
  }
  return kExitOk;
}

int cmd_infer(const std::string& checkpoint, const fs::path& base_path, const fs::path& ext_path,
              std::size_t top_k, const std::string& out_path, bool refresh,
              bool emit_embeddings) {
  Model model = load_model_checked(checkpoint);
  IdMap users, items;
  std::vector<Edge> base_edges = read_interactions(base_path, users, items);
  std::size_t m0 = users.size(), n0 = items.size();
  std::vector<Edge> revealed = read_interactions(ext_path, users, items);

  InteractionGraph g_base = from_edges(m0, n0, std::move(base_edges));
  InteractionGraph g_ext = extend(g_base, revealed, users.size(), items.size());
  InductiveContext ctx = make_inductive_context(model, g_base, g_ext, {}, {}, refresh);
  FusedEmbeddings fused = inductive_forward(ctx);

  std::ofstream file;
  std::ostream* outp = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open for writing: " + out_path);
    outp = &file;
  }
  std::ostream& out = *outp;

  auto emit_rows = [&](const char* kind, const Matrix& table, std::size_t begin,
                       const IdMap& ids) {
    for (std::size_t r = begin; r < table.rows(); ++r) {
      out << kind << " " << ids.to_external[r];
      for (double v : table.row(r)) out << " " << v;
      out << "\n";
    }
  };
  if (emit_embeddings) {
    emit_rows("user", fused.users, m0, users);
    emit_rows("item", fused.items, n0, items);
  } else {
    for (std::size_t u = m0; u < users.size(); ++u) {
      std::vector<double> scores(fused.items.rows());
      for (std::size_t i = 0; i < scores.size(); ++i)
        scores[i] = dot(fused.users.row(u), fused.items.row(i));
      auto seen = g_ext.items_of(u);
      std::size_t candidates = scores.size() - seen.size();
      auto ranked = topk(scores, seen, std::min(top_k, candidates));
      out << "user " << users.to_external[u];
      for (std::size_t i : ranked) out << " " << items.to_external[i] << ":" << scores[i];
      out << "\n";
    }
    for (std::size_t i = n0; i < items.size(); ++i) {
      std::vector<double> scores(fused.users.rows());
      for (std::size_t u = 0; u < scores.size(); ++u)
        scores[u] = dot(fused.users.row(u), fused.items.row(i));
      auto seen = g_ext.users_of(i);
      std::size_t candidates = scores.size() - seen.size();
      auto ranked = topk(scores, seen, std::min(top_k, candidates));
      out << "item " << items.to_external[i];
      for (std::size_t u : ranked) out << " " << users.to_external[u] << ":" << scores[u];
      out << "\n";
    }
  }
  std::cerr << "inferred " << (users.size() - m0) << " new users, " << (items.size() - n0)
            << " new items\n";
  return kExitOk;
}

int cmd_verify(std::uint64_t seed) {
  bool ok = true;
  for (const selfcheck::CheckResult& r : selfcheck::run_all(seed)) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitVerifyFailed;
}

int cmd_sweep(const fs::path& config_path, const std::vector<std::string>& overrides,
              const std::vector<std::string>& grid_specs, const std::string& out_override) {
  ExperimentConfig base = load_config_checked(config_path, overrides);
  std::vector<std::pair<std::string, std::vector<std::string>>> grid;
  for (const std::string& spec : grid_specs) {
    std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("grid spec must look like key=v1,v2,..., got '" + spec + "'");
    std::string key = spec.substr(0, eq);
    std::vector<std::string> values = detail::split_list(spec.substr(eq + 1));
    if (values.empty()) throw ConfigError("grid spec for '" + key + "' lists no values");
    grid.emplace_back(std::move(key), std::move(values));
  }

  fs::path out_root = out_override.empty() ? resolve_output_dir(base) : fs::path(out_override);
  fs::create_directories(out_root);
  fs::path leaderboard = out_root / "leaderboard.csv";
  fs::remove(leaderboard);
  std::size_t k = base.eval_k.front();

  std::vector<std::size_t> idx(grid.size(), 0);
  std::vector<std::pair<std::string, MetricsRow>> rows;
  bool warned_no_val = false;
  bool done = false;
  while (!done) {
    ExperimentConfig cfg = base;
    std::string label;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      apply_setting(cfg, grid[g].first, grid[g].second[idx[g]]);
      if (g) label += "__";
      label += grid[g].first + "-" + grid[g].second[idx[g]];
    }
    if (label.empty()) label = "base";
    cfg.out_dir = (out_root / "points" / label).string();
    cfg.eval_k = {k};

    std::cout << "[point] " << label << "\n";
    TrainArtifacts art = run_training(cfg);
    DatasetBundle bundle = load_dataset_checked(cfg.dataset_dir);
    // Points are ranked on the validation split; the test split stays out of
    // model selection and is consumed once, by `evaluate`, on the winner.
    bool has_val = false;
    for (const auto& v : bundle.val_sets) has_val = has_val || !v.empty();
    if (!has_val && !warned_no_val) {
      std::cerr << "note: validation split is empty; ranking sweep points on the test split\n";
      warned_no_val = true;
    }
    NormalizedGraph gn = normalize(bundle.graph_train, art.fit.model.normalization());
    EvalResult res =
        evaluate_model(art.fit.model, gn, has_val ? bundle.val_sets : bundle.test_sets, k);
    MetricsRow row{model_label(cfg), effective_layers(cfg), cfg.fusion,
                   100.0 * res.recall,  100.0 * res.ndcg,   cfg.seed,
                   art.wall_s};
    append_metrics_row(art.out / ("metrics_k" + std::to_string(k) + ".csv"), k, row);
    rows.emplace_back(label, row);
    std::cout << "  recall@" << k << " " << row.recall << ", ndcg@" << k << " " << row.ndcg
              << "\n";

    done = grid.empty();
    for (std::size_t g = grid.size(); g-- > 0;) {
      if (++idx[g] < grid[g].second.size()) break;
      idx[g] = 0;
      if (g == 0) done = true;
    }
  }

  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second.recall != b.second.recall) return a.second.recall > b.second.recall;
    return a.second.ndcg > b.second.ndcg;
  });
  std::ofstream lb(leaderboard, std::ios::trunc);
  if (!lb) throw std::runtime_error("cannot open for writing: " + leaderboard.string());
  lb << "point," << metrics_header(k) << "\n";
  for (const auto& [label, row] : rows) lb << label << "," << format_metrics_row(row) << "\n";
  std::cout << "leaderboard (" << rows.size() << " points) -> " << leaderboard << "\n";
  if (!rows.empty())
    std::cout << "best: " << rows.front().first << " recall@" << k << " "
              << rows.front().second.recall << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collaborative filtering with user-only embedding propagation"};
  app.require_subcommand(1);
  app.footer(
      "exit codes: 0 success, 1 verification failure, 2 usage error, 3 bad config,\n"
      "            4 missing file, 5 bad data, 6 runtime failure");

  std::function<int()> action;

  {
    auto* c = app.add_subcommand("prepare-data", "split raw interactions and write a dataset");
    auto train = std::make_shared<std::string>();
    auto test = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto valf = std::make_shared<double>(0.10);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto inductive = std::make_shared<bool>(false);
    auto holdf = std::make_shared<double>(0.05);
    auto inff = std::make_shared<double>(0.5);
    auto minu = std::make_shared<std::size_t>(10);
    auto mini = std::make_shared<std::size_t>(5);
    c->add_option("--train", *train, "training interactions (user item item ... per line)")
        ->required();
    c->add_option("--test", *test, "held-out test interactions (same format)");
    c->add_option("--out", *out, "output dataset directory")->required();
    c->add_option("--val-fraction", *valf, "fraction of each user's training edges moved to validation");
    c->add_option("--seed", *seed, "split seed");
    c->add_flag("--inductive", *inductive, "also hold out entities for inductive evaluation");
    c->add_option("--holdout-fraction", *holdf, "fraction of qualifying users/items to hold out");
    c->add_option("--inference-fraction", *inff, "fraction of a held entity's edges revealed at inference");
    c->add_option("--min-user-interactions", *minu, "minimum interactions for a user to qualify");
    c->add_option("--min-item-interactions", *mini, "minimum interactions for an item to qualify");
    c->callback([=, &action] {
      action = [=] {
        return cmd_prepare(*train, *test, *out, *valf, *seed, *inductive, *holdf, *inff, *minu,
                           *mini);
      };
    });
  }
  {
    auto* c = app.add_subcommand("train", "train a model and write checkpoint + log");
    auto config = std::make_shared<std::string>();
    auto sets = std::make_shared<std::vector<std::string>>();
    c->add_option("--config", *config, "experiment config file")->required();
    c->add_option("--set", *sets, "override, key=value (repeatable)");
    c->callback([=, &action] { action = [=] { return cmd_train(*config, *sets); }; });
  }
  {
    auto* c = app.add_subcommand("evaluate", "rank full item lists and write a metric report");
    auto config = std::make_shared<std::string>();
    auto sets = std::make_shared<std::vector<std::string>>();
    auto ckpt = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("test");
    c->add_option("--config", *config, "experiment config file")->required();
    c->add_option("--set", *sets, "override, key=value (repeatable)");
    c->add_option("--checkpoint", *ckpt, "checkpoint directory (default: <out_dir>/checkpoint)");
    c->add_option("--split", *split, "split to evaluate")
        ->check(CLI::IsMember({"test", "val"}));
    c->callback([=, &action] {
      action = [=] { return cmd_evaluate(*config, *sets, *ckpt, *split); };
    });
  }
  {
    auto* c = app.add_subcommand("infer-inductive",
                                 "embed or recommend for entities unseen at training time");
    auto ckpt = std::make_shared<std::string>();
    auto base = std::make_shared<std::string>();
    auto ext = std::make_shared<std::string>();
    auto topk = std::make_shared<std::size_t>(10);
    auto out = std::make_shared<std::string>();
    auto refresh = std::make_shared<bool>(false);
    auto emit = std::make_shared<bool>(false);
    c->add_option("--checkpoint", *ckpt, "trained model checkpoint directory")->required();
    c->add_option("--base", *base, "interactions the model was trained on")->required();
    c->add_option("--extended", *ext, "newly revealed interactions (same format); ids absent from the base file are treated as new entities")
        ->required();
    c->add_option("--top-k", *topk, "recommendations per new entity");
    c->add_option("--out", *out, "output file (default: stdout)");
    c->add_flag("--refresh-users", *refresh, "recompute existing user embeddings from the extended graph");
    c->add_flag("--emit-embeddings", *emit, "write embedding rows instead of recommendations");
    c->callback([=, &action] {
      action = [=] { return cmd_infer(*ckpt, *base, *ext, *topk, *out, *refresh, *emit); };
    });
  }
  {
    auto* c = app.add_subcommand("verify", "run the self-contained property suites");
    auto seed = std::make_shared<std::uint64_t>(7);
    c->add_option("--seed", *seed, "seed for generated instances");
    c->callback([=, &action] { action = [=] { return cmd_verify(*seed); }; });
  }
  {
    auto* c = app.add_subcommand("sweep", "train a config grid and write a leaderboard");
    auto config = std::make_shared<std::string>();
    auto sets = std::make_shared<std::vector<std::string>>();
    auto grid = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    c->add_option("--config", *config, "base experiment config file")->required();
    c->add_option("--set", *sets, "base override, key=value (repeatable)");
    c->add_option("--grid", *grid, "grid axis, key=v1,v2,... (repeatable)");
    c->add_option("--out", *out, "sweep output root (default: resolved out_dir)");
    c->callback([=, &action] {
      action = [=] { return cmd_sweep(*config, *sets, *grid, *out); };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n(run with --help for usage)\n";
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const MissingFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const DataFormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitBadData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
