#pragma once

// Subcommand implementations behind the owgan executable. Each writes its
// artifacts into an output directory and returns a process exit code:
// 0 success, 1 usage/config error, 2 numerical divergence.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "owgan/eval.hpp"
#include "owgan/io.hpp"
#include "owgan/wgan.hpp"

#ifndef OWGAN_BUILD_ID
#define OWGAN_BUILD_ID "unknown"
#endif

namespace owgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDiverged = 2;

inline std::filesystem::path prepare_out_dir(const std::string& out) {
  if (out.empty()) throw ConfigError("missing --out directory");
  std::filesystem::path p(out);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec || !std::filesystem::is_directory(p)) throw ConfigError("cannot create output directory '" + out + "'");
  return p;
}

struct TrainOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  std::optional<double> budget_seconds;
};

/// Trains one model; writes checkpoint.json, metrics.csv, run_manifest.json
/// (and timing.csv when log_timing = true). Artifacts are written for
/// diverged runs too, which then exit with code 2.
inline int cmd_train(const TrainOptions& opt, std::ostream& log) {
  RunConfig rc = load_run_config(opt.config);
  if (opt.seed_override) rc.train.seed = *opt.seed_override;
  if (opt.budget_seconds) {
    if (*opt.budget_seconds <= 0.0) throw ConfigError("--budget-seconds must be positive");
    rc.train.budget_seconds = *opt.budget_seconds;
  }
  const auto dir = prepare_out_dir(opt.out);

  const auto t0 = std::chrono::steady_clock::now();
  const TrainState s = train(rc.train, rc.data);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  TrainConfig echoed = s.config;
  if (rc.train.budget_seconds > 0.0) echoed.budget_seconds = rc.train.budget_seconds;
  const auto finite = [](const MlpParams& p) {
    for (const Layer& l : p.layers)
      if (!all_finite(l.weight) || !std::all_of(l.bias.begin(), l.bias.end(), [](double v) { return std::isfinite(v); }))
        return false;
    return true;
  };
  // A diverged run may hold non-finite weights; those are not written.
  const bool write_checkpoint = finite(s.critic) && finite(s.generator);
  if (write_checkpoint) {
    Checkpoint ck{echoed, s.data, s.critic, s.generator, s.iter};
    write_text_file((dir / "checkpoint.json").string(), checkpoint_to_json(ck));
  }
  write_text_file((dir / "metrics.csv").string(), metrics_csv(s.log));
  if (rc.log_timing) write_text_file((dir / "timing.csv").string(), timing_csv(s.log));

  nlohmann::ordered_json m;
  m["build_id"] = OWGAN_BUILD_ID;
  m["scheme"] = to_string(echoed.scheme);
  m["seed"] = echoed.seed;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : config_entries(echoed, s.data)) cfg[k] = v;
  m["config"] = std::move(cfg);
  m["budget"] = rc.train.budget_seconds > 0.0 ? "wall_clock_seconds" : "iterations";
  m["budget_seconds"] = rc.train.budget_seconds;
  m["iterations_planned"] = echoed.iters;
  m["iterations_completed"] = s.iter;
  m["wall_clock_seconds"] = elapsed;
  m["iterations_per_second"] = elapsed > 0.0 ? static_cast<double>(s.iter) / elapsed : 0.0;
  m["status"] = s.status == RunStatus::Completed ? "completed" : "diverged";
  m["checkpoint_written"] = write_checkpoint;
  if (!s.message.empty()) m["message"] = s.message;
  write_text_file((dir / "run_manifest.json").string(), m.dump(2) + "\n");

  if (s.status == RunStatus::Diverged) {
    log << "training diverged at iteration " << s.iter + 1 << ": " << s.message << "\n";
    return kExitDiverged;
  }
  log << "trained " << to_string(echoed.scheme) << " for " << s.iter << " iterations in " << elapsed << " s\n";
  return kExitOk;
}

/// Data spec and evaluation settings: from --config when given, otherwise
/// the checkpoint's own data spec with default evaluation settings.
inline RunConfig eval_settings(const std::string& config_path, const Checkpoint& ck) {
  if (!config_path.empty()) return load_run_config(config_path);
  RunConfig rc;
  rc.train = ck.config;
  rc.data = ck.data;
  return rc;
}

struct TournamentOptions {
  std::vector<std::string> checkpoints;
  std::string config;
  std::string out;
};

inline int cmd_tournament(const TournamentOptions& opt, std::ostream& log) {
  if (opt.checkpoints.size() < 2) throw ConfigError("tournament needs at least two checkpoints");
  std::vector<GanModel> models;
  std::vector<Checkpoint> cks;
  for (const auto& p : opt.checkpoints) cks.push_back(load_checkpoint(p));
  for (const auto& ck : cks) {
    if (ck.critic.input_dim() != DatasetSpec::dim || ck.generator.output_dim() != DatasetSpec::dim ||
        ck.critic.output_dim() != 1)
      throw ConfigError("incompatible checkpoint dimensions");
    models.push_back({ck.critic, ck.generator});
  }
  const RunConfig rc = eval_settings(opt.config, cks.front());
  const auto dir = prepare_out_dir(opt.out);

  Rng base(rc.eval.eval_seed);
  Rng train_rng = base.split();
  Rng test_rng = base.split();
  Rng gen_rng = base.split();
  const Matrix train_data = sample_real(rc.data, rc.eval.n_train, train_rng);
  const Matrix test_data = sample_real(rc.data, rc.eval.n_test, test_rng);
  const TournamentResult r = tournament(models, train_data, test_data, rc.eval.n_gen, gen_rng);

  std::string csv = "i,j,critic,generator,w_raw,w_hat_i,w_rel,excluded_i\n";
  for (std::size_t i = 0; i < r.n_models; ++i)
    for (std::size_t j = 0; j < r.n_models; ++j)
      csv += std::to_string(i) + ',' + std::to_string(j) + ',' + opt.checkpoints[i] + ',' + opt.checkpoints[j] + ',' +
             format_double(r.w_raw(i, j)) + ',' + format_double(r.w_hat[i]) + ',' + format_double(r.w_rel(i, j)) +
             ',' + (r.excluded[i] ? "1" : "0") + '\n';
  write_text_file((dir / "tournament.csv").string(), csv);

  const auto matrix_json = [](const Matrix& m) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) a.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
    return a;
  };
  nlohmann::ordered_json j;
  j["models"] = opt.checkpoints;
  j["schemes"] = nlohmann::ordered_json::array();
  for (const auto& ck : cks) j["schemes"].push_back(to_string(ck.config.scheme));
  j["n_gen"] = rc.eval.n_gen;
  j["n_train"] = rc.eval.n_train;
  j["n_test"] = rc.eval.n_test;
  j["w_raw"] = matrix_json(r.w_raw);
  j["w_hat"] = r.w_hat;
  j["w_rel"] = matrix_json(r.w_rel);
  j["s"] = r.s;
  j["excluded"] = r.excluded;
  write_text_file((dir / "tournament.json").string(), j.dump(2) + "\n");

  std::vector<std::size_t> order(r.n_models);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.s[a] > r.s[b]; });
  log << "overall scores (descending):\n";
  for (std::size_t i : order)
    log << "  " << to_string(cks[i].config.scheme) << " (" << opt.checkpoints[i] << "): s = " << r.s[i]
        << (r.excluded[i] ? " [excluded: degenerate baseline]" : "") << "\n";
  return kExitOk;
}

struct EvalOptions {
  std::string checkpoint;
  std::string config;
  std::string which;
  std::string out;
};

inline const std::vector<std::string>& eval_kinds() {
  static const std::vector<std::string> k{"lipschitz", "gram", "spectrum", "ndb", "gradnorm"};
  return k;
}

/// Writes <which>.csv for one checkpoint.
inline int cmd_eval(const EvalOptions& opt, std::ostream& log) {
  if (std::find(eval_kinds().begin(), eval_kinds().end(), opt.which) == eval_kinds().end())
    throw ConfigError("unknown eval kind '" + opt.which + "' (valid: lipschitz, gram, spectrum, ndb, gradnorm)");
  const Checkpoint ck = load_checkpoint(opt.checkpoint);
  const RunConfig rc = eval_settings(opt.config, ck);
  const auto dir = prepare_out_dir(opt.out);
  const EvalConfig& e = rc.eval;
  Rng base(e.eval_seed);
  Rng data_rng = base.split();
  Rng gen_rng = base.split();
  Rng aux_rng = base.split();

  std::string csv;
  if (opt.which == "lipschitz") {
    const Matrix real = sample_real(rc.data, e.eval_points, data_rng);
    const Matrix fake = generate(ck.generator, e.eval_points, gen_rng);
    const LipschitzEstimate est = estimate_lipschitz_detail(ck.critic, real, fake, e.eval_points, aux_rng);
    csv = "n_points,lipschitz_max,penalty_mean,mean_norm\n" + std::to_string(e.eval_points) + ',' +
          format_double(est.lipschitz) + ',' + format_double(est.penalty) + ',' + format_double(est.mean_norm) + '\n';
  } else if (opt.which == "gram") {
    csv = "layer,rows,cols,orientation,gram_deviation\n";
    for (std::size_t l = 0; l < ck.critic.layers.size(); ++l) {
      const Matrix& w = ck.critic.layers[l].weight;
      csv += std::to_string(l) + ',' + std::to_string(w.rows()) + ',' + std::to_string(w.cols()) + ',' +
             to_string(orientation(w)) + ',' + format_double(gram_deviation(w)) + '\n';
    }
  } else if (opt.which == "spectrum") {
    csv = "layer,index,sigma\n";
    const auto spectra = singular_spectrum(ck.critic);
    for (std::size_t l = 0; l < spectra.size(); ++l)
      for (std::size_t i = 0; i < spectra[l].size(); ++i)
        csv += std::to_string(l) + ',' + std::to_string(i) + ',' + format_double(spectra[l][i]) + '\n';
  } else if (opt.which == "ndb") {
    const Matrix train_data = sample_real(rc.data, e.n_train, data_rng);
    const Matrix generated =
        e.ndb_replay_real ? sample_real(rc.data, e.n_gen, gen_rng) : generate(ck.generator, e.n_gen, gen_rng);
    csv = "K,significant_bins,skipped_bins,significant_fraction\n";
    for (std::size_t k : e.ndb_k) {
      if (k > std::min<std::size_t>(100, train_data.rows())) continue;
      const ModeReport rep = ndb_modes(train_data, generated, k, e.ndb_alpha, aux_rng);
      csv += std::to_string(k) + ',' + std::to_string(rep.significant_bins) + ',' + std::to_string(rep.skipped_bins) +
             ',' + format_double(static_cast<double>(rep.significant_bins) / static_cast<double>(k)) + '\n';
    }
  } else {  // gradnorm
    const Matrix x = generate(ck.generator, e.n_gen, gen_rng);
    const Matrix g = input_gradient(ck.critic, x);
    double sum = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0.0;
      for (double v : g.row(i)) s += v * v;
      sum += std::sqrt(s);
      mx = std::max(mx, std::sqrt(s));
    }
    csv = "n,mean_grad_norm,max_grad_norm\n" + std::to_string(g.rows()) + ',' +
          format_double(sum / static_cast<double>(g.rows())) + ',' + format_double(mx) + '\n';
  }
  const auto path = dir / (opt.which + ".csv");
  write_text_file(path.string(), csv);
  log << "wrote " << path.string() << "\n";
  return kExitOk;
}

struct PlotOptions {
  std::string samples;     // CSV with header x,y,source
  std::string checkpoint;  // or a checkpoint (real data from its spec / --config)
  std::string config;
  std::string out;         // output PNG path
};

using Points = std::vector<std::array<double, 2>>;

/// Reads x,y,source rows; source is "real" or "generated".
inline std::pair<Points, Points> read_samples_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("samples CSV is empty");
  Points real, gen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() != 3)
      throw ConfigError("samples CSV line " + std::to_string(lineno) + ": expected x,y,source (data must be 2-D)");
    const std::array<double, 2> p{detail::parse_number<double>("x", cells[0]),
                                  detail::parse_number<double>("y", cells[1])};
    if (cells[2] == "real") real.push_back(p);
    else if (cells[2] == "generated") gen.push_back(p);
    else throw ConfigError("samples CSV line " + std::to_string(lineno) + ": source must be real or generated");
  }
  return {std::move(real), std::move(gen)};
}

inline int cmd_plot(const PlotOptions& opt, std::ostream& log) {
  if (opt.out.empty()) throw ConfigError("missing --out image path");
  if (opt.samples.empty() == opt.checkpoint.empty())
    throw ConfigError("plot needs exactly one of --samples or --checkpoint");
  Points real, gen;
  if (!opt.samples.empty()) {
    std::tie(real, gen) = read_samples_csv(read_text_file(opt.samples));
  } else {
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    if (ck.generator.output_dim() != 2) throw ConfigError("plot: generator output is not 2-D");
    const RunConfig rc = eval_settings(opt.config, ck);
    Rng base(rc.eval.eval_seed);
    Rng data_rng = base.split();
    Rng gen_rng = base.split();
    const Matrix r = sample_real(rc.data, rc.eval.plot_points, data_rng);
    const Matrix g = generate(ck.generator, rc.eval.plot_points, gen_rng);
    for (std::size_t i = 0; i < r.rows(); ++i) real.push_back({r(i, 0), r(i, 1)});
    for (std::size_t i = 0; i < g.rows(); ++i) gen.push_back({g(i, 0), g(i, 1)});
  }
  if (real.empty() && gen.empty()) throw ConfigError("plot: no points");
  const std::filesystem::path out(opt.out);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  write_text_file(opt.out, render_scatter(real, gen));
  log << "wrote " << opt.out << " (" << real.size() << " real, " << gen.size() << " generated)\n";
  return kExitOk;
}

}  // namespace owgan::cli
