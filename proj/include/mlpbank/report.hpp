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

// Benchmark report: per-cell timings of the parallel (fused) and sequential
// strategies and their ratio, rendered as CSV, markdown or JSON. All three
// renderings format numbers through format_seconds / format_percent.

#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mlpbank/trainer.hpp"

namespace mlpbank {

enum class Strategy { Parallel, Sequential, Both };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Parallel:
      return "parallel";
    case Strategy::Sequential:
      return "sequential";
    case Strategy::Both:
      break;
  }
  return "both";
}

inline bool runs_parallel(Strategy s) { return s != Strategy::Sequential; }
inline bool runs_sequential(Strategy s) { return s != Strategy::Parallel; }

struct CellKey {
  std::size_t n_samples = 0;
  std::size_t n_features = 0;
  std::size_t batch_size = 0;

  auto operator<=>(const CellKey&) const = default;
};

inline std::string cell_name(const CellKey& k) {
  return "samples=" + std::to_string(k.n_samples) + " features=" + std::to_string(k.n_features) +
         " batch=" + std::to_string(k.batch_size);
}

struct BenchCell {
  CellKey key;
  std::optional<EpochTiming> parallel;
  std::optional<EpochTiming> sequential;

  // 100 * parallel mean / sequential mean; only when both ran.
  [[nodiscard]] std::optional<double> ratio_percent() const {
    if (!parallel || !sequential || !(sequential->mean() > 0.0)) return std::nullopt;
    return 100.0 * parallel->mean() / sequential->mean();
  }
};

struct BenchMeta {
  std::size_t n_models = 0;
  std::size_t hidden_total = 0;
  std::string models;  // spec source or grid expression
  std::string dtype;
  int threads = 1;
  std::size_t epochs = 0;
  std::size_t warmup = 0;
  double lr = 0.0;
  std::string loss;
  std::uint64_t seed = 0;
  std::string dataset = "synthetic teacher-MLP targets (stand-in; the original data recipe is unreported)";
};

inline std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", s);
  return buf;
}

inline std::string format_percent(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", p);
  return buf;
}

// JSON carries the rounded values so it agrees with the text renderings.
inline double rounded_seconds(double s) { return std::stod(format_seconds(s)); }
inline double rounded_percent(double p) { return std::stod(format_percent(p)); }

struct BenchReport {
  BenchMeta meta;
  std::vector<BenchCell> cells;

  void write_csv(std::ostream& os) const {
    os << "strategy,n_samples,n_features,batch_size,mean_seconds,std_seconds,epochs_counted,n_models,dtype,"
          "threads,ratio_percent,flag\n";
    auto prefix = [&](const char* strategy, const CellKey& k) {
      os << strategy << ',' << k.n_samples << ',' << k.n_features << ',' << k.batch_size << ',';
    };
    auto suffix = [&] { os << meta.n_models << ',' << meta.dtype << ',' << meta.threads << ','; };
    for (const BenchCell& c : cells) {
      for (const auto& [name, t] : {std::pair{"parallel", &c.parallel}, std::pair{"sequential", &c.sequential}}) {
        if (!*t) continue;
        prefix(name, c.key);
        os << format_seconds((*t)->mean()) << ',' << format_seconds((*t)->stddev()) << ',' << (*t)->counted()
           << ',';
        suffix();
        os << ",\n";
      }
      if (const auto r = c.ratio_percent()) {
        prefix("parallel/sequential", c.key);
        os << ",,,";
        suffix();
        os << format_percent(*r) << ',' << (*r > 100.0 ? "parallel-slower" : "") << '\n';
      }
    }
  }

  // Table 1 layout: rows are feature counts, columns (samples, batch size);
  // one block per strategy and one for the ratio.
  void write_markdown(std::ostream& os) const {
    std::set<std::size_t> features;
    std::set<std::pair<std::size_t, std::size_t>> columns;
    std::map<CellKey, const BenchCell*> by_key;
    for (const BenchCell& c : cells) {
      features.insert(c.key.n_features);
      columns.insert({c.key.n_samples, c.key.batch_size});
      by_key[c.key] = &c;
    }
    os << "# Training time, mean of " << (meta.epochs - meta.warmup) << " epochs (" << meta.warmup
       << " warm-up epochs excluded)\n\n";
    os << "- models: " << meta.n_models << " (" << meta.models << "), hidden_total " << meta.hidden_total << "\n";
    os << "- dtype: " << meta.dtype << ", threads: " << meta.threads << ", loss: " << meta.loss
       << ", lr: " << meta.lr << ", seed: " << meta.seed << "\n";
    os << "- dataset: " << meta.dataset << "\n\n";

    auto header = [&] {
      os << "| Features |";
      for (const auto& [n, b] : columns) os << " n=" << n << " b=" << b << " |";
      os << "\n|---|";
      for (std::size_t i = 0; i < columns.size(); ++i) os << "---:|";
      os << '\n';
    };
    auto block = [&](const char* title, auto value) {
      bool any = false;
      for (const BenchCell& c : cells) any = any || value(c).has_value();
      if (!any) return;
      os << "## " << title << "\n\n";
      header();
      for (std::size_t f : features) {
        os << "| " << f << " |";
        for (const auto& [n, b] : columns) {
          const auto it = by_key.find(CellKey{n, f, b});
          const auto v = it == by_key.end() ? std::nullopt : value(*it->second);
          os << ' ' << (v ? *v : std::string("-")) << " |";
        }
        os << '\n';
      }
      os << '\n';
    };
    block("Parallel (seconds)", [](const BenchCell& c) -> std::optional<std::string> {
      if (!c.parallel) return std::nullopt;
      return format_seconds(c.parallel->mean()) + " ± " + format_seconds(c.parallel->stddev());
    });
    block("Sequential (seconds)", [](const BenchCell& c) -> std::optional<std::string> {
      if (!c.sequential) return std::nullopt;
      return format_seconds(c.sequential->mean()) + " ± " + format_seconds(c.sequential->stddev());
    });
    block("Parallel/Sequential (%)", [](const BenchCell& c) -> std::optional<std::string> {
      const auto r = c.ratio_percent();
      if (!r) return std::nullopt;
      return format_percent(*r) + (*r > 100.0 ? " (!)" : "");
    });
    bool flagged = false;
    for (const BenchCell& c : cells) flagged = flagged || c.ratio_percent().value_or(0.0) > 100.0;
    if (flagged) os << "(!) parallel slower than sequential in this cell; check the thread and batch settings.\n";
  }

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["meta"] = {{"n_models", meta.n_models}, {"hidden_total", meta.hidden_total}, {"models", meta.models},
                 {"dtype", meta.dtype},       {"threads", meta.threads},           {"epochs", meta.epochs},
                 {"warmup_epochs", meta.warmup}, {"lr", meta.lr},                 {"loss", meta.loss},
                 {"seed", meta.seed},         {"dataset", meta.dataset}};
    auto timing = [](const EpochTiming& t) {
      nlohmann::ordered_json r;
      r["mean_seconds"] = rounded_seconds(t.mean());
      r["std_seconds"] = rounded_seconds(t.stddev());
      r["epochs_counted"] = t.counted();
      nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
      for (std::size_t e = 0; e < t.seconds.size(); ++e) {
        epochs.push_back({{"epoch", e}, {"seconds", rounded_seconds(t.seconds[e])}, {"warmup", e < t.warmup}});
      }
      r["epochs"] = std::move(epochs);
      return r;
    };
    j["cells"] = nlohmann::ordered_json::array();
    for (const BenchCell& c : cells) {
      nlohmann::ordered_json cj;
      cj["n_samples"] = c.key.n_samples;
      cj["n_features"] = c.key.n_features;
      cj["batch_size"] = c.key.batch_size;
      if (c.parallel) cj["parallel"] = timing(*c.parallel);
      if (c.sequential) cj["sequential"] = timing(*c.sequential);
      if (const auto r = c.ratio_percent()) {
        cj["ratio_percent"] = rounded_percent(*r);
        cj["parallel_slower"] = *r > 100.0;
      }
      j["cells"].push_back(std::move(cj));
    }
    return j;
  }

  void write_json(std::ostream& os) const { os << to_json().dump(2) << '\n'; }
};

}  // namespace mlpbank
