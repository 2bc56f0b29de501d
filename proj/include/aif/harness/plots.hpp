#pragma once

// SVG figures for the CSV files the harness writes; the schema is recognised
// from the header.

#include "aif/harness/csv.hpp"
#include "aif/harness/svg.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace aif::harness {

struct Figure {
  std::string file;
  std::string svg;
};

namespace plot_detail {

inline std::string key(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Mean of y per distinct x, in increasing x.
inline Series mean_by_x(const std::string& name, const std::vector<double>& x, const std::vector<double>& y) {
  std::map<double, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc[x[i]].first += y[i];
    acc[x[i]].second += 1;
  }
  Series s{name, {}, {}, false};
  for (const auto& [xv, sum] : acc) {
    s.x.push_back(xv);
    s.y.push_back(sum.first / sum.second);
  }
  return s;
}

inline std::vector<double> column_means(const CsvTable& t, const std::string& prefix, int count) {
  std::vector<double> out;
  for (int a = 0; a < count; ++a) {
    const auto v = t.numbers(prefix + std::to_string(a));
    double s = 0.0;
    for (double x : v) s += x;
    out.push_back(s / static_cast<double>(v.size()));
  }
  return out;
}

}  // namespace plot_detail

// Per-seed scatter plus the mean curve of an evaluation CSV.
inline std::vector<Series> reward_curve_series(const CsvTable& t) {
  const auto epoch = t.numbers("epoch");
  const auto seed = t.text("seed");
  const auto r = t.numbers("final_R");
  std::vector<std::string> order;
  std::map<std::string, Series> per_seed;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!per_seed.count(seed[i])) {
      order.push_back(seed[i]);
      per_seed[seed[i]] = Series{"seed " + seed[i], {}, {}, true};
    }
    per_seed[seed[i]].x.push_back(epoch[i]);
    per_seed[seed[i]].y.push_back(r[i]);
  }
  std::vector<Series> out{plot_detail::mean_by_x("mean", epoch, r)};
  for (const auto& s : order) out.push_back(per_seed[s]);
  return out;
}

inline std::vector<Figure> figures_for(const CsvTable& t) {
  std::vector<Figure> out;
  if (t.has("gamma") && t.has("depth") && t.has("final_R")) {
    const auto g = t.numbers("gamma");
    const auto d = t.numbers("depth");
    const auto e = t.numbers("epoch");
    const auto r = t.numbers("final_R");
    std::map<std::pair<double, double>, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < r.size(); ++i) {
      groups[{d[i], g[i]}].first.push_back(e[i]);
      groups[{d[i], g[i]}].second.push_back(r[i]);
    }
    std::vector<Series> series;
    for (const auto& [k, v] : groups)
      series.push_back(plot_detail::mean_by_x("s=" + plot_detail::key(k.first) + " gamma=" + plot_detail::key(k.second),
                                              v.first, v.second));
    out.push_back({"sweep_reward.svg", line_chart(series, {"Evaluation reward by gamma and depth", "epoch", "final R"})});
  } else if (t.has("policy") && t.has("final_R")) {
    const auto p = t.text("policy");
    const auto r = t.numbers("final_R");
    std::vector<std::string> names;
    std::map<std::string, std::pair<double, int>> acc;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (!acc.count(p[i])) names.push_back(p[i]);
      acc[p[i]].first += r[i];
      acc[p[i]].second += 1;
    }
    std::vector<double> means;
    for (const auto& n : names) means.push_back(acc[n].first / acc[n].second);
    out.push_back({"baseline_reward.svg", bar_chart(names, means, {"Baseline final-day reward", "policy", "mean R"})});
  } else if (t.has("epoch") && t.has("seed") && t.has("final_R")) {
    out.push_back({"reward_curve.svg", line_chart(reward_curve_series(t), {"Evaluation reward", "epoch", "final R"})});
  } else if (t.has("epoch") && t.has("vfe") && t.has("mean_R")) {
    const auto e = t.numbers("epoch");
    out.push_back({"training_reward.svg", line_chart({{"mean R", e, t.numbers("mean_R"), false}},
                                                     {"Training reward", "epoch", "mean R"})});
    out.push_back({"training_vfe.svg",
                   line_chart({{"vfe", e, t.numbers("vfe"), false}, {"recon", e, t.numbers("recon"), false},
                               {"kl", e, t.numbers("kl"), false}},
                              {"Free energy", "epoch", "nats"})});
  } else if (t.has("time") && t.has("p0") && t.has("g0")) {
    int n = 0;
    while (t.has("p" + std::to_string(n))) ++n;
    std::vector<std::string> labels;
    for (int a = 0; a < n; ++a) labels.push_back(std::to_string(a));
    out.push_back({"action_distribution.svg", bar_chart(labels, plot_detail::column_means(t, "p", n),
                                                        {"Mean action distribution", "machines on", "P(a)"})});
    out.push_back({"efe_total.svg", bar_chart(labels, plot_detail::column_means(t, "g", n),
                                              {"Mean expected free energy", "machines on", "G"})});
  } else if (t.has("action") && t.has("term2")) {
    const auto a = t.numbers("action");
    std::vector<std::string> labels;
    for (const char* term : {"term1", "term2", "term3"}) {
      const auto s = plot_detail::mean_by_x(term, a, t.numbers(term));
      if (labels.empty())
        for (double x : s.x) labels.push_back(plot_detail::key(x));
      out.push_back({std::string("efe_") + term + ".svg",
                     bar_chart(labels, s.y, {std::string("Mean EFE ") + term + " per action", "machines on", "nats"})});
    }
  } else {
    throw CsvError("unrecognised CSV schema");
  }
  return out;
}

}  // namespace aif::harness
