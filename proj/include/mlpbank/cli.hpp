// Copyright 2026 The mlpbank Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// The `mlpbank` command line: bench, verify and train.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mlpbank/mlpbank.hpp"

namespace mlpbank::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kVerifyFailed = 2, kRuntime = 3 };

enum class Format { Csv, Markdown, Json };

struct Flags {
  std::vector<std::size_t> samples;
  std::vector<std::size_t> features;
  std::vector<std::size_t> batch_sizes;
  std::string models;
  std::size_t epochs = 12;
  std::size_t warmup = 2;
  std::size_t batch_size = 32;
  double lr = 0.01;
  std::string loss = "mse";
  std::uint64_t seed = 0;
  int threads = 1;
  std::string dtype = "f32";
  std::string strategy = "both";
  std::string out;
  std::string format;
  std::string data;
  std::string dump_best;
  bool paper_grid = false;
  bool corrupt_owner = false;
};

inline LossKind loss_of(const std::string& s) { return s == "xent" ? LossKind::SoftmaxCrossEntropy : LossKind::MSE; }

inline Strategy strategy_of(const std::string& s) {
  if (s == "parallel") return Strategy::Parallel;
  if (s == "sequential") return Strategy::Sequential;
  return Strategy::Both;
}

// Explicit --format wins; otherwise the --out extension; otherwise `fallback`.
inline Format format_of(const Flags& f, Format fallback) {
  std::string key = f.format;
  if (key.empty() && !f.out.empty()) {
    const std::string ext = std::filesystem::path(f.out).extension().string();
    if (ext == ".csv") key = "csv";
    if (ext == ".md") key = "md";
    if (ext == ".json") key = "json";
  }
  if (key == "csv") return Format::Csv;
  if (key == "md") return Format::Markdown;
  if (key == "json") return Format::Json;
  return fallback;
}

// A path to an existing file is read as a bank spec; anything else is a
// grid expression.
inline BankSpec load_models(const std::string& arg, std::uint64_t seed) {
  if (std::filesystem::is_regular_file(arg)) {
    std::ifstream in(arg);
    if (!in) throw Error("cannot open " + arg);
    return read_bank_spec(in, arg);
  }
  BankSpec s = parse_grid_expr(arg);
  s.seed = seed;
  return s;
}

template <typename Writer>
void emit(const Flags& f, std::ostream& out, Writer&& write) {
  write(out);
  if (!f.out.empty()) {
    std::ofstream file(f.out);
    if (!file) throw Error("cannot write " + f.out);
    write(file);
  }
}

template <typename T>
int bench(const Flags& f, std::ostream& out, std::ostream& err) {
  BenchOptions opt;
  if (f.paper_grid) {
    opt.samples = kPaperSamples;
    opt.features = kPaperFeatures;
    opt.batch_sizes = kPaperBatches;
    opt.models = parse_grid_expr(kPaperModels);
    opt.models_source = kPaperModels;
  }
  if (!f.samples.empty()) opt.samples = f.samples;
  if (!f.features.empty()) opt.features = f.features;
  if (!f.batch_sizes.empty()) opt.batch_sizes = f.batch_sizes;
  opt.models.seed = f.seed;
  if (!f.models.empty()) {
    opt.models = load_models(f.models, f.seed);
    opt.models_source = f.models;
  }
  if (opt.models.in_dim) {
    for (std::size_t n : opt.features) {
      if (n != *opt.models.in_dim) {
        throw ConfigError("spec in_dim " + std::to_string(*opt.models.in_dim) + " conflicts with --features " +
                          std::to_string(n));
      }
    }
  }
  opt.train.epochs = f.epochs;
  opt.train.warmup_epochs = f.warmup;
  opt.train.lr = f.lr;
  opt.train.loss = loss_of(f.loss);
  opt.train.seed = f.seed;
  opt.strategy = strategy_of(f.strategy);
  opt.threads = f.threads;
  opt.data_seed = f.seed;
  const Format fmt = format_of(f, Format::Markdown);

  const BenchReport report = run_bench<T>(opt, [&](const BenchCell& c) {
    err << "cell " << cell_name(c.key);
    if (c.parallel) err << "  parallel " << format_seconds(c.parallel->mean()) << " s";
    if (c.sequential) err << "  sequential " << format_seconds(c.sequential->mean()) << " s";
    if (auto r = c.ratio_percent()) err << "  ratio " << format_percent(*r) << " %";
    err << std::endl;
  });
  emit(f, out, [&](std::ostream& os) {
    if (fmt == Format::Csv) report.write_csv(os);
    if (fmt == Format::Markdown) report.write_markdown(os);
    if (fmt == Format::Json) report.write_json(os);
  });
  return kOk;
}

inline int verify(const Flags& f, std::ostream& out) {
  set_threads(f.threads);
  VerifyOptions opt;
  opt.seed = f.seed == 0 ? 1 : f.seed;
  opt.corrupt_owner = f.corrupt_owner;
  const VerifyReport r = run_verify(opt);
  r.print(out);
  return r.passed() ? kOk : kVerifyFailed;
}

struct RankedModel {
  std::size_t id;
  GridCoordinates at;
  double loss;
};

template <typename T>
nlohmann::ordered_json matrix_json(const Tensor<T>& t) {
  auto j = nlohmann::ordered_json::array();
  const std::size_t cols = t.rank() == 2 ? t.extent(1) : t.size();
  for (std::size_t r = 0; r < t.size() / cols; ++r) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < cols; ++c) row.push_back(static_cast<double>(t[r * cols + c]));
    j.push_back(row);
  }
  return t.rank() == 2 ? j : j[0];
}

template <typename T>
int train(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.models.empty()) throw ConfigError("train needs --models <spec-file|grid expr>");
  const BankSpec spec = load_models(f.models, f.seed);
  TrainConfig cfg;
  cfg.batch_size = f.batch_size;
  cfg.epochs = f.epochs;
  cfg.warmup_epochs = f.warmup;
  cfg.lr = f.lr;
  cfg.loss = loss_of(f.loss);
  cfg.seed = f.seed;
  cfg.validate();
  set_threads(f.threads);
  const Task task = cfg.loss == LossKind::MSE ? Task::Regression : Task::Classification;

  Dataset<T> ds;
  if (!f.data.empty()) {
    std::ifstream in(f.data);
    if (!in) throw Error("cannot open " + f.data);
    ds = read_csv<T>(in, task);
  } else {
    if (f.samples.size() > 1 || f.features.size() > 1) throw ConfigError("train takes one --samples and one --features");
    const std::size_t n = f.samples.empty() ? 1000 : f.samples[0];
    const std::size_t d = f.features.empty() ? spec.in_dim.value_or(10) : f.features[0];
    ds = synth_dataset<T>(n, d, spec.out_dim, f.seed, task);
  }
  if (spec.in_dim && *spec.in_dim != ds.n_features()) {
    throw ConfigError("spec in_dim " + std::to_string(*spec.in_dim) + " but the dataset has " +
                      std::to_string(ds.n_features()) + " features");
  }

  auto bank = build_bank<T>(spec.specs(), ds.n_features(), spec.out_dim, spec.init());
  const auto result = train_fused(bank, ds, cfg);
  err << "trained " << spec.n_models() << " models for " << cfg.epochs << " epochs, mean epoch "
      << format_seconds(result.timing.mean()) << " s" << std::endl;

  std::vector<RankedModel> ranked;
  for (std::size_t m = 0; m < spec.n_models(); ++m) {
    ranked.push_back({m, spec.coordinates(m), static_cast<double>(result.final_losses[m])});
  }
  // NaN losses sort last.
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedModel& a, const RankedModel& b) {
    if (std::isnan(a.loss) || std::isnan(b.loss)) return !std::isnan(a.loss) && std::isnan(b.loss);
    return a.loss < b.loss;
  });

  const Format fmt = format_of(f, Format::Markdown);
  emit(f, out, [&](std::ostream& os) {
    char buf[64];
    if (fmt == Format::Json) {
      auto j = nlohmann::ordered_json::array();
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto& m = ranked[r];
        j.push_back({{"rank", r + 1},
                     {"id", m.id},
                     {"width", m.at.width},
                     {"activation", activation_name(m.at.activation)},
                     {"repeat", m.at.repeat},
                     {"loss", m.loss}});
      }
      os << j.dump(2) << '\n';
      return;
    }
    if (fmt == Format::Csv) {
      os << "rank,id,width,activation,repeat,loss\n";
    } else {
      os << "| rank | id | width | activation | repeat | loss |\n|---:|---:|---:|---|---:|---:|\n";
    }
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const auto& m = ranked[r];
      std::snprintf(buf, sizeof buf, "%.9g", m.loss);
      if (fmt == Format::Csv) {
        os << r + 1 << ',' << m.id << ',' << m.at.width << ',' << activation_name(m.at.activation) << ','
           << m.at.repeat << ',' << buf << '\n';
      } else {
        os << "| " << r + 1 << " | " << m.id << " | " << m.at.width << " | " << activation_name(m.at.activation)
           << " | " << m.at.repeat << " | " << buf << " |\n";
      }
    }
    if (fmt == Format::Markdown) {
      std::snprintf(buf, sizeof buf, "%.9g", ranked[0].loss);
      os << "\nbest model: id " << ranked[0].id << " (width " << ranked[0].at.width << ", "
         << activation_name(ranked[0].at.activation) << ", repeat " << ranked[0].at.repeat << "), loss " << buf
         << '\n';
    }
  });

  if (!f.dump_best.empty()) {
    const auto& best = ranked[0];
    const SequentialMlp<T> model = extract(bank, best.id);
    nlohmann::ordered_json j = {{"id", best.id},
                                {"width", best.at.width},
                                {"activation", activation_name(best.at.activation)},
                                {"repeat", best.at.repeat},
                                {"in_dim", ds.n_features()},
                                {"out_dim", spec.out_dim},
                                {"loss", best.loss},
                                {"W1", matrix_json(model.W1)},
                                {"W2", matrix_json(model.W2)}};
    if (model.b1) j["b1"] = matrix_json(*model.b1);
    if (model.b2) j["b2"] = matrix_json(*model.b2);
    std::ofstream file(f.dump_best);
    if (!file) throw Error("cannot write " + f.dump_best);
    file << j.dump(2) << '\n';
  }
  return kOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Train many small MLPs at once as one fused model bank", "mlpbank"};
  app.require_subcommand(1);
  Flags f;

  const auto positive = CLI::PositiveNumber;
  auto add_grid = [&](CLI::App* c) {
    c->add_option("--samples", f.samples, "Sample counts (comma list)")->delimiter(',')->check(positive);
    c->add_option("--features", f.features, "Feature counts (comma list)")->delimiter(',')->check(positive);
  };
  auto add_training = [&](CLI::App* c) {
    c->add_option("--models", f.models, "Bank spec file or grid expression <widths>:<activations>[:<repeats>]");
    c->add_option("--epochs", f.epochs, "Epochs per run, warm-up included")->capture_default_str()->check(positive);
    c->add_option("--warmup", f.warmup, "Leading epochs excluded from timing means")->capture_default_str();
    c->add_option("--lr", f.lr, "SGD learning rate")->capture_default_str()->check(positive);
    c->add_option("--loss", f.loss, "Loss")->capture_default_str()->check(CLI::IsMember({"mse", "xent"}));
    c->add_option("--dtype", f.dtype, "Floating-point type")->capture_default_str()->check(CLI::IsMember({"f32", "f64"}));
    c->add_option("--out", f.out, "Also write the output to this file");
  };
  auto add_common = [&](CLI::App* c) {
    c->add_option("--seed", f.seed, "Seed for data, initialization and shuffling")->capture_default_str();
    c->add_option("--threads", f.threads, "Kernel threads; 0 selects every hardware thread")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
  };

  CLI::App* bench_cmd = app.add_subcommand("bench", "Time fused and sequential training over a grid of cells");
  add_grid(bench_cmd);
  bench_cmd->add_option("--batch-sizes", f.batch_sizes, "Batch sizes (comma list)")->delimiter(',')->check(positive);
  add_training(bench_cmd);
  add_common(bench_cmd);
  bench_cmd->add_option("--strategy", f.strategy, "Strategies to run")
      ->capture_default_str()
      ->check(CLI::IsMember({"parallel", "sequential", "both"}));
  bench_cmd->add_option("--format", f.format, "Report format (default md, or from the --out extension)")
      ->check(CLI::IsMember({"csv", "md", "json"}));
  bench_cmd->add_flag("--paper-grid", f.paper_grid,
                      "Use the full grid: samples 100,1000,10000; features 5,10,50,100; batches 32,128,256; "
                      "10,000 models");

  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the correctness suites");
  add_common(verify_cmd);
  verify_cmd->add_flag("--corrupt-owner", f.corrupt_owner, "Test hook: corrupt the owner vector")->group("");

  CLI::App* train_cmd = app.add_subcommand("train", "Train a bank and rank its models by final loss");
  add_grid(train_cmd);
  train_cmd->add_option("--batch-size", f.batch_size, "Batch size")->capture_default_str()->check(positive);
  add_training(train_cmd);
  add_common(train_cmd);
  train_cmd->add_option("--data", f.data, "Dataset CSV (x* columns then t* columns) instead of synthetic data");
  train_cmd->add_option("--format", f.format, "Table format (default md, or from the --out extension)")
      ->check(CLI::IsMember({"csv", "md", "json"}));
  train_cmd->add_option("--dump-best", f.dump_best, "Write the best model's parameters as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    const bool f64 = f.dtype == "f64";
    if (bench_cmd->parsed()) return f64 ? bench<double>(f, out, err) : bench<float>(f, out, err);
    if (verify_cmd->parsed()) return verify(f, out);
    return f64 ? train<double>(f, out, err) : train<float>(f, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace mlpbank::cli
