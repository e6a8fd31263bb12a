#include "nlos/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nlos/error.hpp"
#include "nlos/io.hpp"

namespace nlos::evaluation {

using dataset::FeatureWindow;
using dataset::kNumFeatures;

void permute_channels(std::span<FeatureWindow> windows, std::span<const std::size_t> channels, Rng& rng) {
  struct Unit {
    std::size_t window, slot;
  };
  std::vector<Unit> units;
  for (std::size_t w = 0; w < windows.size(); ++w)
    for (std::size_t s = 0; s < windows[w].N_max; ++s)
      if (windows[w].sat_mask[s]) units.push_back({w, s});
  for (std::size_t c : channels) {
    if (c >= kNumFeatures) throw UsageError("permute_channels: channel " + std::to_string(c) + " out of range");
    std::vector<std::size_t> perm(units.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    // Gather every unit's sequence first, then scatter in permuted order.
    std::vector<std::vector<double>> seqs(units.size());
    for (std::size_t u = 0; u < units.size(); ++u) {
      const FeatureWindow& w = windows[units[u].window];
      for (std::size_t t = 0; t < w.T; ++t) seqs[u].push_back(w.at(units[u].slot, t, c));
    }
    for (std::size_t u = 0; u < units.size(); ++u) {
      FeatureWindow& w = windows[units[u].window];
      const auto& src = seqs[perm[u]];
      if (src.size() != w.T) throw UsageError("permute_channels: windows differ in T");
      for (std::size_t t = 0; t < w.T; ++t) w.at(units[u].slot, t, c) = src[t];
    }
  }
}

double permuted_accuracy(const network::ModelParams& params, const network::ModelConfig& config,
                         std::span<const FeatureWindow> windows, std::span<const std::size_t> channels, Rng& rng) {
  std::vector<FeatureWindow> copy(windows.begin(), windows.end());
  permute_channels(copy, channels, rng);
  return metrics::evaluate(metrics::predict(copy, params, config)).accuracy;
}

ImportanceReport permutation_importance(const network::ModelParams& params, const network::ModelConfig& config,
                                        std::span<const FeatureWindow> windows, std::size_t repeats,
                                        std::uint64_t seed) {
  if (repeats < 1) throw UsageError("permutation_importance: repeats must be at least 1");
  if (windows.empty()) throw DataError("permutation_importance: no windows");
  for (const auto& w : windows)
    if (!w.labeled) throw DataError("permutation_importance: windows must be labeled");
  ImportanceReport r;
  r.repeats = repeats;
  r.baseline_accuracy = metrics::evaluate(metrics::predict(windows, params, config)).accuracy;
  Rng rng(seed);
  for (std::size_t c = 0; c < kNumFeatures; ++c) {
    ImportanceEntry e;
    e.feature = dataset::kFeatureNames[c];
    const std::size_t channel[] = {c};
    for (std::size_t k = 0; k < repeats; ++k)
      e.per_repeat.push_back(r.baseline_accuracy - permuted_accuracy(params, config, windows, channel, rng));
    e.importance = std::accumulate(e.per_repeat.begin(), e.per_repeat.end(), 0.0) / static_cast<double>(repeats);
    if (repeats > 1) {
      double ss = 0.0;
      for (double v : e.per_repeat) ss += (v - e.importance) * (v - e.importance);
      e.stddev = std::sqrt(ss / static_cast<double>(repeats - 1));
    }
    r.entries.push_back(std::move(e));
  }
  return r;
}

std::string ImportanceReport::to_csv() const {
  std::string out = "feature,importance,stddev,baseline_accuracy,repeats\n";
  for (const auto& e : entries)
    out += e.feature + "," + io::format_double(e.importance) + "," + io::format_double(e.stddev) + "," +
           io::format_double(baseline_accuracy) + "," + std::to_string(repeats) + "\n";
  return out;
}

std::string ImportanceReport::to_svg(const std::string& title) const {
  std::vector<Bar> bars;
  for (const auto& e : entries) bars.push_back({e.feature, e.importance, e.stddev});
  return bar_chart_svg(title, "accuracy drop", bars);
}

// ---------------------------------------------------------------------------
// Ablation

AblationReport run_ablation(std::span<const FeatureWindow> windows, std::span<const FeatureWindow> test_windows,
                            const network::ModelConfig& model_config, const training::TrainConfig& train_config,
                            std::uint64_t init_seed, std::span<const network::Variant> variants) {
  static const network::Variant kAll[] = {network::Variant::kFull, network::Variant::kNoAttention,
                                          network::Variant::kNoBiLstm};
  if (variants.empty()) variants = kAll;
  AblationReport report;
  for (network::Variant v : variants) {
    network::ModelConfig cfg = model_config;
    cfg.variant = v;
    training::FitResult fit = training::fit(windows, cfg, train_config, init_seed);
    if (!report.rows.empty() && fit.split_hash != report.split_hash)
      throw UsageError("run_ablation: variants saw different data splits");
    report.split_hash = fit.split_hash;

    std::vector<FeatureWindow> eval;
    if (test_windows.empty()) {
      for (std::size_t i : fit.split.validation) eval.push_back(windows[i]);
    } else {
      eval.assign(test_windows.begin(), test_windows.end());
    }
    dataset::apply_normalizer(eval, fit.checkpoint.normalizer);
    AblationRow row;
    row.variant = v;
    row.metrics = metrics::evaluate(metrics::predict(eval, fit.checkpoint.params, cfg));
    row.report = std::move(fit.report);
    row.split_hash = fit.split_hash;
    row.checkpoint = std::move(fit.checkpoint);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string AblationReport::to_csv() const {
  std::string out = "variant,class,precision,recall,f1,accuracy,mae_m,split_hash\n";
  for (const auto& r : rows) {
    for (int k = 0; k < 2; ++k) {
      const metrics::ClassMetrics& m = k == 0 ? r.metrics.los : r.metrics.nlos;
      out += std::string(network::variant_name(r.variant)) + "," + (k == 0 ? "LOS" : "NLOS") + "," +
             io::format_double(m.precision) + "," + io::format_double(m.recall) + "," + io::format_double(m.f1) + "," +
             io::format_double(r.metrics.accuracy) + "," + io::format_double(r.metrics.mae_m) + "," +
             io::hex64(r.split_hash) + "\n";
    }
  }
  return out;
}

std::string AblationReport::format_table() const {
  std::ostringstream out;
  out << "Variant       Class  Precision  Recall  F1-Score  Acc.\n";
  for (const auto& r : rows) {
    std::string name = network::variant_name(r.variant);
    name.resize(12, ' ');
    for (int k = 0; k < 2; ++k) {
      const metrics::ClassMetrics& m = k == 0 ? r.metrics.los : r.metrics.nlos;
      out << (k == 0 ? name : std::string(12, ' ')) << "  " << (k == 0 ? "LOS " : "NLOS") << "   "
          << io::format_fixed(m.precision, 2) << "       " << io::format_fixed(m.recall, 2) << "    "
          << io::format_fixed(m.f1, 2) << "      " << io::format_fixed(r.metrics.accuracy, 2) << "\n";
    }
  }
  out << "Split hash: " << io::hex64(split_hash) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Charts

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::string& y_label, std::span<const Bar> bars) {
  const double width = 120.0 + 90.0 * static_cast<double>(std::max<std::size_t>(bars.size(), 1));
  const double height = 360.0, top = 50.0, bottom = 300.0, left = 80.0;
  double hi = 0.0, lo = 0.0;
  for (const auto& b : bars) {
    hi = std::max(hi, b.value + b.error);
    lo = std::min(lo, b.value - b.error);
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const auto y_of = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"25\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title)
    << "</text>\n";
  o << "<text x=\"18\" y=\"" << (top + bottom) / 2 << "\" transform=\"rotate(-90 18 " << (top + bottom) / 2
    << ")\" text-anchor=\"middle\">" << escape_xml(y_label) << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << y_of(0.0) << "\" x2=\"" << width - 20 << "\" y2=\"" << y_of(0.0)
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    o << "<text x=\"" << left - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << io::format_fixed(v, 3)
      << "</text>\n";
  }
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const Bar& b = bars[i];
    const double x = left + 20.0 + 90.0 * static_cast<double>(i);
    const double y0 = y_of(0.0), y1 = y_of(b.value);
    o << "<rect x=\"" << x << "\" y=\"" << std::min(y0, y1) << "\" width=\"60\" height=\"" << std::abs(y1 - y0)
      << "\" fill=\"steelblue\"/>\n";
    if (b.error > 0.0) {
      o << "<line x1=\"" << x + 30 << "\" y1=\"" << y_of(b.value - b.error) << "\" x2=\"" << x + 30 << "\" y2=\""
        << y_of(b.value + b.error) << "\" stroke=\"black\"/>\n";
    }
    o << "<text x=\"" << x + 30 << "\" y=\"" << bottom + 20 << "\" text-anchor=\"middle\">" << escape_xml(b.label)
      << "</text>\n";
    o << "<text x=\"" << x + 30 << "\" y=\"" << std::min(y0, y1) - 4 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << io::format_fixed(b.value, 3) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace nlos::evaluation
