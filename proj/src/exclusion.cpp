#include "nlos/exclusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nlos/error.hpp"
#include "nlos/io.hpp"

namespace nlos::exclusion {

using dataset::Epoch;

namespace {

void finish_summary(RatioSummary& s) {
  if (s.observations == 0) return;
  s.r_los_percent = 100.0 * static_cast<double>(s.los) / static_cast<double>(s.observations);
  s.r_nlos_percent = 100.0 * static_cast<double>(s.nlos) / static_cast<double>(s.observations);
}

}  // namespace

Classification classify_epochs(const network::Checkpoint& model, std::span<const Epoch> epochs, double threshold) {
  const network::ModelConfig& cfg = model.config;
  Classification out;
  out.epochs.resize(epochs.size());
  for (std::size_t i = 0; i < epochs.size(); ++i) out.epochs[i].epoch_pos = i;
  std::vector<dataset::FeatureWindow> windows = dataset::build_windows(epochs, cfg.T, cfg.N_max);
  dataset::apply_normalizer(windows, model.normalizer);
  for (const auto& w : windows) {
    const network::ModelOutput o = network::forward(w, model.params, cfg);
    EpochFlags& f = out.epochs.at(w.final_epoch_pos);
    f.classified = true;
    for (std::size_t s = 0; s < cfg.N_max; ++s) {
      if (!o.valid[s]) continue;
      const int sat = w.slot_to_sat_id[s];
      f.prob_los[sat] = o.visibility_prob[s];
      f.nlos[sat] = o.visibility_prob[s] < threshold;
    }
  }
  RatioSummary& s = out.summary;
  for (const auto& f : out.epochs) {
    if (!f.classified) {
      ++s.unclassified_epochs;
      continue;
    }
    ++s.classified_epochs;
    for (const auto& [sat, flagged] : f.nlos) {
      ++s.observations;
      ++(flagged ? s.nlos : s.los);
    }
  }
  finish_summary(s);
  return out;
}

Classification label_flags(std::span<const Epoch> epochs) {
  Classification out;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    EpochFlags f;
    f.epoch_pos = i;
    f.classified = true;
    for (const auto& o : epochs[i].observations) {
      if (!o.visibility) continue;
      const bool nlos = *o.visibility == dataset::Visibility::NLOS;
      f.nlos[o.sat_id] = nlos;
      f.prob_los[o.sat_id] = nlos ? 0.0 : 1.0;
    }
    out.epochs.push_back(std::move(f));
  }
  RatioSummary& s = out.summary;
  s.classified_epochs = out.epochs.size();
  for (const auto& f : out.epochs)
    for (const auto& [sat, flagged] : f.nlos) {
      ++s.observations;
      ++(flagged ? s.nlos : s.los);
    }
  finish_summary(s);
  return out;
}

std::string format_ratio_table(const RatioSummary& s, const std::string& name) {
  std::ostringstream out;
  out << "Model         R_LOS (%)  R_NLOS (%)  Observations  Epochs (unclassified)\n";
  std::string padded = name;
  if (padded.size() < 12) padded.resize(12, ' ');
  out << padded << "  " << io::format_fixed(s.r_los_percent, 2) << "      " << io::format_fixed(s.r_nlos_percent, 2)
      << "       " << s.observations << "          " << s.classified_epochs << " (" << s.unclassified_epochs << ")\n";
  return out.str();
}

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOk: return "ok";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kFailed: return "failed";
  }
  return "?";
}

namespace {

SolveOutcome solve_subset(const Epoch& epoch, const std::vector<const dataset::SatObservation*>& obs,
                          const geodesy::EcefPosition& guess, const geodesy::LsOptions& options) {
  SolveOutcome r;
  r.satellites = obs.size();
  if (obs.size() < 4) {
    r.status = SolveStatus::kInfeasible;
    return r;
  }
  std::vector<double> pr;
  std::vector<geodesy::EcefPosition> sats;
  for (const auto* o : obs) {
    pr.push_back(o->pseudorange);
    sats.push_back(o->sat_pos);
  }
  try {
    const geodesy::LsSolution sol = geodesy::ls_position_solve(pr, sats, guess, options);
    if (!sol.converged) return r;
    r.status = SolveStatus::kOk;
    r.position = sol.position;
    r.clock_bias_m = sol.clock_bias_m;
    r.error_m = geodesy::distance(sol.position, epoch.receiver_truth);
  } catch (const NumericError&) {
    r.status = SolveStatus::kFailed;
  }
  return r;
}

}  // namespace

ExclusionSolve solve_with_exclusion(const Epoch& epoch, const std::map<int, bool>& nlos_flags,
                                    const geodesy::EcefPosition& initial_guess, const geodesy::LsOptions& options) {
  std::vector<const dataset::SatObservation*> all, kept;
  for (const auto& o : epoch.observations) {
    all.push_back(&o);
    const auto it = nlos_flags.find(o.sat_id);
    if (it == nlos_flags.end() || !it->second) kept.push_back(&o);
  }
  ExclusionSolve r;
  r.all = solve_subset(epoch, all, initial_guess, options);
  r.excluded = kept.size() == all.size() ? r.all : solve_subset(epoch, kept, initial_guess, options);
  return r;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile: empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw UsageError("percentile: q must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ExclusionResult evaluate_exclusion(std::span<const Epoch> epochs, const Classification& classification,
                                   const geodesy::LsOptions& options) {
  if (classification.epochs.size() != epochs.size())
    throw UsageError("evaluate_exclusion: classification does not match the epochs");
  ExclusionResult r;
  r.ratios = classification.summary;
  std::vector<double> err_all, err_excl;
  geodesy::EcefPosition guess{};
  std::size_t classified = 0;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const EpochFlags& f = classification.epochs[i];
    if (!f.classified) continue;
    ++classified;
    const Epoch& e = epochs[i];
    const geodesy::EcefPosition start = e.receiver_ls ? *e.receiver_ls : guess;
    EpochResult er;
    er.epoch_pos = i;
    er.epoch_index = e.epoch_index;
    er.solve = solve_with_exclusion(e, f.nlos, start, options);
    for (const auto& [sat, flagged] : f.nlos) er.flagged += flagged ? 1 : 0;
    if (er.solve.all.status != SolveStatus::kOk) {
      ++r.failed;
      continue;
    }
    guess = er.solve.all.position;
    err_all.push_back(er.solve.all.error_m);
    if (er.solve.excluded.status == SolveStatus::kOk) {
      err_excl.push_back(er.solve.excluded.error_m);
    } else {
      er.fallback = true;
      if (er.solve.excluded.status == SolveStatus::kInfeasible) ++r.infeasible;
      err_excl.push_back(er.solve.all.error_m);
    }
    r.epochs.push_back(std::move(er));
  }
  if (err_all.empty()) throw DataError("evaluate_exclusion: no classified epoch could be solved");
  r.median_all_m = percentile(err_all, 50.0);
  r.p95_all_m = percentile(err_all, 95.0);
  r.median_excluded_m = percentile(err_excl, 50.0);
  r.p95_excluded_m = percentile(err_excl, 95.0);
  r.infeasible_fraction = static_cast<double>(r.infeasible) / static_cast<double>(classified);
  return r;
}

ExclusionResult trajectory_report(std::span<const Epoch> epochs, const network::Checkpoint& model, double threshold) {
  return evaluate_exclusion(epochs, classify_epochs(model, epochs, threshold));
}

std::string ExclusionResult::to_csv() const {
  std::string out =
      "epoch_index,sats_all,sats_excluded,flagged,status_all,status_excluded,error_all_m,error_excluded_m,fallback\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch_index) + "," + std::to_string(e.solve.all.satellites) + "," +
           std::to_string(e.solve.excluded.satellites) + "," + std::to_string(e.flagged) + "," +
           status_name(e.solve.all.status) + "," + status_name(e.solve.excluded.status) + "," +
           io::format_double(e.solve.all.error_m) + "," +
           (e.solve.excluded.status == SolveStatus::kOk ? io::format_double(e.solve.excluded.error_m) : "") + "," +
           (e.fallback ? "1" : "0") + "\n";
  }
  return out;
}

std::string ExclusionResult::summary_text() const {
  std::ostringstream out;
  out << "Epochs solved: " << epochs.size() << " (failed " << failed << ")\n";
  out << "All satellites:  median " << io::format_fixed(median_all_m, 2) << " m, p95 " << io::format_fixed(p95_all_m, 2)
      << " m\n";
  out << "NLOS excluded:   median " << io::format_fixed(median_excluded_m, 2) << " m, p95 "
      << io::format_fixed(p95_excluded_m, 2) << " m\n";
  out << "Infeasible after exclusion: " << infeasible << " (" << io::format_fixed(100.0 * infeasible_fraction, 1)
      << "%)" << (infeasible + failed > 0 ? ", all-satellite solution used there" : "") << "\n";
  out << format_ratio_table(ratios);
  return out.str();
}

std::string trajectory_svg(std::span<const Epoch> epochs, const ExclusionResult& result, const std::string& title) {
  if (epochs.empty()) throw DataError("trajectory_svg: no epochs");
  const geodesy::EcefPosition ref = epochs.front().receiver_truth;
  struct Line {
    const char* name;
    const char* color;
    std::vector<geodesy::EnuVector> pts;
  };
  Line truth{"truth", "black", {}}, all{"all satellites", "firebrick", {}}, excl{"NLOS excluded", "seagreen", {}};
  for (const auto& e : result.epochs) {
    truth.pts.push_back(geodesy::ecef_to_enu(epochs[e.epoch_pos].receiver_truth, ref));
    all.pts.push_back(geodesy::ecef_to_enu(e.solve.all.position, ref));
    const auto& x = e.solve.excluded.status == SolveStatus::kOk ? e.solve.excluded.position : e.solve.all.position;
    excl.pts.push_back(geodesy::ecef_to_enu(x, ref));
  }
  double min_e = 0, max_e = 1, min_n = 0, max_n = 1;
  bool first = true;
  for (const Line* l : {&truth, &all, &excl})
    for (const auto& p : l->pts) {
      if (first) {
        min_e = max_e = p.east;
        min_n = max_n = p.north;
        first = false;
      }
      min_e = std::min(min_e, p.east);
      max_e = std::max(max_e, p.east);
      min_n = std::min(min_n, p.north);
      max_n = std::max(max_n, p.north);
    }
  const double span = std::max({max_e - min_e, max_n - min_n, 1.0});
  const double size = 600.0, margin = 50.0;
  const auto sx = [&](double e) { return margin + (e - min_e) / span * (size - 2 * margin); };
  const auto sy = [&](double n) { return size - margin - (n - min_n) / span * (size - 2 * margin); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 40
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << size / 2 << "\" y=\"25\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  int k = 0;
  for (const Line* l : {&truth, &all, &excl}) {
    o << "<polyline fill=\"none\" stroke=\"" << l->color << "\" stroke-width=\"1.2\" points=\"";
    for (const auto& p : l->pts) o << io::format_fixed(sx(p.east), 2) << "," << io::format_fixed(sy(p.north), 2) << " ";
    o << "\"/>\n";
    o << "<text x=\"" << margin << "\" y=\"" << size + 10 + 14 * k << "\" fill=\"" << l->color << "\">" << l->name
      << "</text>\n";
    ++k;
  }
  o << "<text x=\"" << size - margin << "\" y=\"" << size + 10
    << "\" text-anchor=\"end\">east-north, m; extent " << io::format_fixed(span, 1) << " m</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace nlos::exclusion
