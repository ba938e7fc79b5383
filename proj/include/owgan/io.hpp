#pragma once

// Persistence: key=value run configs, JSON checkpoints, CSV tables and
// PNG scatter plots.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "owgan/autodiff.hpp"
#include "owgan/data.hpp"
#include "owgan/wgan.hpp"

namespace owgan {

/// Bad configuration text or command-line usage.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- number formatting ----------------------------------------------------------

/// Decimal text with 17 significant digits; parses back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- run configuration ---------------------------------------------------------

struct EvalConfig {
  std::size_t n_gen = 4096;
  std::size_t n_train = 4096;
  std::size_t n_test = 4096;
  std::uint64_t eval_seed = 12345;
  std::size_t eval_points = 1024;
  double ndb_alpha = 0.05;
  bool ndb_replay_real = false;  // score a held-out half of the real data instead of the generator
  std::vector<std::size_t> ndb_k = default_ndb_sweep();
  std::size_t plot_points = 2000;
};

struct RunConfig {
  TrainConfig train;
  DatasetSpec data;
  EvalConfig eval;
  bool log_timing = false;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t pos = 0;
      v = static_cast<T>(std::stod(text, &pos));
      if (pos != text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': not a number: '" + text + "'");
    }
    if (!std::isfinite(v)) throw ConfigError("config key '" + key + "': value must be finite");
  } else {
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last) throw ConfigError("config key '" + key + "': not an integer: '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

}  // namespace detail

/// Parses `key = value` lines; '#' starts a comment. Later duplicates win.
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

/// Builds a RunConfig. The scheme's defaults (n_critic, learning rates) are
/// applied first; every other key then overrides them. Unknown keys throw.
inline RunConfig parse_run_config(std::string_view text) {
  const auto kv = parse_key_values(text);
  RunConfig rc;
  if (auto it = kv.find("scheme"); it != kv.end()) {
    try {
      rc.train = TrainConfig::for_scheme(parse_scheme(it->second));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  TrainConfig& t = rc.train;
  DatasetSpec& d = rc.data;
  EvalConfig& e = rc.eval;
  using detail::parse_number;
  for (const auto& [key, value] : kv) {
    if (key == "scheme") continue;
    else if (key == "eta_d") t.eta_d = parse_number<double>(key, value);
    else if (key == "eta_g") t.eta_g = parse_number<double>(key, value);
    else if (key == "batch") t.batch = parse_number<std::size_t>(key, value);
    else if (key == "n_critic") t.n_critic = parse_number<int>(key, value);
    else if (key == "lambda_gp") t.lambda_gp = parse_number<double>(key, value);
    else if (key == "lambda_ortho") t.lambda_ortho = parse_number<double>(key, value);
    else if (key == "clip_c") t.clip_c = parse_number<double>(key, value);
    else if (key == "iters" || key == "n") t.iters = parse_number<long>(key, value);
    else if (key == "init_lambda") t.init_lambda = parse_number<double>(key, value);
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "budget_seconds") t.budget_seconds = parse_number<double>(key, value);
    else if (key == "hidden") t.hidden = parse_number<std::size_t>(key, value);
    else if (key == "latent_dim") t.latent_dim = parse_number<std::size_t>(key, value);
    else if (key == "layers") t.layers = parse_number<std::size_t>(key, value);
    else if (key == "adam_beta1") t.adam.beta1 = parse_number<double>(key, value);
    else if (key == "adam_beta2") t.adam.beta2 = parse_number<double>(key, value);
    else if (key == "adam_eps") t.adam.eps = parse_number<double>(key, value);
    else if (key == "tau_scale") t.tau_scale = parse_number<double>(key, value);
    else if (key == "lipschitz_points") t.lipschitz_points = parse_number<std::size_t>(key, value);
    else if (key == "diag_every") t.diag_every = parse_number<long>(key, value);
    else if (key == "log_timing") rc.log_timing = detail::parse_bool(key, value);
    else if (key == "dataset") {
      try {
        d.kind = parse_dataset_kind(value);
      } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
      }
    }
    else if (key == "spiral_turns") d.turns = parse_number<double>(key, value);
    else if (key == "spiral_noise") d.noise_sigma = parse_number<double>(key, value);
    else if (key == "ring_modes") d.modes = parse_number<int>(key, value);
    else if (key == "ring_radius") d.radius = parse_number<double>(key, value);
    else if (key == "ring_sigma") d.mode_sigma = parse_number<double>(key, value);
    else if (key == "n_gen") e.n_gen = parse_number<std::size_t>(key, value);
    else if (key == "n_train") e.n_train = parse_number<std::size_t>(key, value);
    else if (key == "n_test") e.n_test = parse_number<std::size_t>(key, value);
    else if (key == "eval_seed") e.eval_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "eval_points") e.eval_points = parse_number<std::size_t>(key, value);
    else if (key == "ndb_alpha") e.ndb_alpha = parse_number<double>(key, value);
    else if (key == "ndb_replay_real") e.ndb_replay_real = detail::parse_bool(key, value);
    else if (key == "plot_points") e.plot_points = parse_number<std::size_t>(key, value);
    else if (key == "ndb_k") {
      e.ndb_k.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) e.ndb_k.push_back(parse_number<std::size_t>(key, detail::trim(item)));
      if (e.ndb_k.empty()) throw ConfigError("config key 'ndb_k': empty list");
    }
    else throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    t.validate();
    d.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  if (e.n_gen == 0 || e.n_train == 0 || e.n_test == 0 || e.eval_points == 0)
    throw ConfigError("evaluation sample counts must be positive");
  if (!(e.ndb_alpha > 0.0 && e.ndb_alpha < 1.0)) throw ConfigError("ndb_alpha must lie in (0, 1)");
  return rc;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(read_text_file(path)); }

/// Canonical key=value echo of a configuration (parses back to the same values).
inline std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& t, const DatasetSpec& d) {
  return {
      {"scheme", to_string(t.scheme)},
      {"eta_d", format_double(t.eta_d)},
      {"eta_g", format_double(t.eta_g)},
      {"batch", std::to_string(t.batch)},
      {"n_critic", std::to_string(t.n_critic)},
      {"lambda_gp", format_double(t.lambda_gp)},
      {"lambda_ortho", format_double(t.lambda_ortho)},
      {"clip_c", format_double(t.clip_c)},
      {"iters", std::to_string(t.iters)},
      {"init_lambda", format_double(t.init_lambda)},
      {"seed", std::to_string(t.seed)},
      {"budget_seconds", format_double(t.budget_seconds)},
      {"hidden", std::to_string(t.hidden)},
      {"latent_dim", std::to_string(t.latent_dim)},
      {"layers", std::to_string(t.layers)},
      {"adam_beta1", format_double(t.adam.beta1)},
      {"adam_beta2", format_double(t.adam.beta2)},
      {"adam_eps", format_double(t.adam.eps)},
      {"tau_scale", format_double(t.tau_scale)},
      {"lipschitz_points", std::to_string(t.lipschitz_points)},
      {"diag_every", std::to_string(t.diag_every)},
      {"dataset", to_string(d.kind)},
      {"spiral_turns", format_double(d.turns)},
      {"spiral_noise", format_double(d.noise_sigma)},
      {"ring_modes", std::to_string(d.modes)},
      {"ring_radius", format_double(d.radius)},
      {"ring_sigma", format_double(d.mode_sigma)},
  };
}

// --- checkpoints ---------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  DatasetSpec data;
  MlpParams critic;
  MlpParams generator;
  long iter = 0;
};

namespace detail {

inline nlohmann::ordered_json mlp_to_json(const MlpParams& net) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const Layer& l : net.layers) {
    nlohmann::ordered_json j;
    j["rows"] = l.weight.rows();
    j["cols"] = l.weight.cols();
    j["weight"] = std::vector<double>(l.weight.data().begin(), l.weight.data().end());
    j["bias"] = l.bias;
    layers.push_back(std::move(j));
  }
  return nlohmann::ordered_json{{"layers", std::move(layers)}};
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams net;
  for (const auto& l : j.at("layers")) {
    const auto rows = l.at("rows").get<std::size_t>();
    const auto cols = l.at("cols").get<std::size_t>();
    net.layers.push_back({Matrix(rows, cols, l.at("weight").get<std::vector<double>>()),
                          l.at("bias").get<std::vector<double>>()});
  }
  net.validate();
  return net;
}

}  // namespace detail

/// JSON text; doubles are written in shortest round-trip decimal form.
inline std::string checkpoint_to_json(const Checkpoint& c) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["scheme"] = to_string(c.config.scheme);
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : config_entries(c.config, c.data)) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["iter"] = c.iter;
  j["seed"] = c.config.seed;
  j["critic"] = detail::mlp_to_json(c.critic);
  j["generator"] = detail::mlp_to_json(c.generator);
  return j.dump(1) + "\n";
}

inline Checkpoint checkpoint_from_json(std::string_view text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
    std::string cfg_text;
    for (const auto& [k, v] : j.at("config").items()) cfg_text += k + " = " + v.get<std::string>() + "\n";
    const RunConfig rc = parse_run_config(cfg_text);
    Checkpoint c;
    c.config = rc.train;
    c.data = rc.data;
    c.iter = j.at("iter").get<long>();
    c.critic = detail::mlp_from_json(j.at("critic"));
    c.generator = detail::mlp_from_json(j.at("generator"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_text_file(path)); }

// --- CSV ---------------------------------------------------------------------------

/// metrics.csv column order. Optional diagnostics are empty except on
/// every diag_every-th iteration.
inline constexpr std::string_view kMetricsHeader =
    "iter,critic_loss,gen_loss,gen_grad_norm,lipschitz_est,penalty_est,mean_gram_dev";

inline std::string metrics_csv(const MetricLog& log) {
  std::string out(kMetricsHeader);
  out += '\n';
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const MetricRow& r : log.rows) {
    out += std::to_string(r.iter) + ',' + format_double(r.critic_loss) + ',' + format_double(r.gen_loss) + ',' +
           format_double(r.gen_grad_norm) + ',' + opt(r.lipschitz_est) + ',' + opt(r.penalty_est) + ',' +
           opt(r.mean_gram_dev) + '\n';
  }
  return out;
}

/// Wall-clock companion to metrics.csv (not reproducible across runs).
inline std::string timing_csv(const MetricLog& log) {
  std::string out = "iter,wall_clock_s,iters_per_sec\n";
  for (const MetricRow& r : log.rows)
    out += std::to_string(r.iter) + ',' + format_double(r.wall_clock_s) + ',' + format_double(r.iters_per_sec) + '\n';
  return out;
}

// --- PNG scatter plots ---------------------------------------------------------------

struct Rgb {
  std::uint8_t r, g, b;
};

inline constexpr Rgb kRealColor{31, 119, 180};      // blue
inline constexpr Rgb kGeneratedColor{255, 127, 14};  // orange

/// Encodes an 8-bit RGB image (row-major, 3 bytes per pixel) as PNG.
inline std::string encode_png(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != width * height * 3) throw std::invalid_argument("encode_png: pixel buffer size mismatch");
  std::vector<std::uint8_t> raw;
  raw.reserve(height * (width * 3 + 1));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), rgb.begin() + y * width * 3, rgb.begin() + (y + 1) * width * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw std::runtime_error("encode_png: compression failed");
  z.resize(zlen);

  std::string png("\x89PNG\r\n\x1a\n", 8);
  const auto be32 = [](std::string& s, std::uint32_t v) {
    for (int sh = 24; sh >= 0; sh -= 8) s.push_back(static_cast<char>((v >> sh) & 0xff));
  };
  const auto chunk = [&](const char* type, const std::string& payload) {
    be32(png, static_cast<std::uint32_t>(payload.size()));
    std::string body(type, 4);
    body += payload;
    png += body;
    be32(png, static_cast<std::uint32_t>(
                  crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
  };
  std::string ihdr;
  be32(ihdr, static_cast<std::uint32_t>(width));
  be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit, RGB, deflate, no filter, no interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", std::string(z.begin(), z.end()));
  chunk("IEND", {});
  return png;
}

inline constexpr std::size_t kPlotSize = 800;

/// 800x800 scatter on white: real points blue, generated points orange
/// (drawn on top), 3x3 pixel markers. The square axis range covers all
/// points with a 5% margin. Either set may be empty, not both.
inline std::string render_scatter(const std::vector<std::array<double, 2>>& real,
                                  const std::vector<std::array<double, 2>>& generated) {
  if (real.empty() && generated.empty()) throw std::invalid_argument("render_scatter: nothing to plot");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto* set : {&real, &generated}) {
    for (const auto& p : *set) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw std::invalid_argument("render_scatter: non-finite point");
      xmin = std::min(xmin, p[0]);
      xmax = std::max(xmax, p[0]);
      ymin = std::min(ymin, p[1]);
      ymax = std::max(ymax, p[1]);
    }
  }
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
  double half = 0.5 * std::max(xmax - xmin, ymax - ymin) * 1.05;
  if (half <= 0.0) half = 1.0;
  const std::size_t n = kPlotSize;
  std::vector<std::uint8_t> img(n * n * 3, 255);
  const auto plot = [&](const std::vector<std::array<double, 2>>& pts, Rgb c) {
    for (const auto& p : pts) {
      const double fx = (p[0] - (cx - half)) / (2.0 * half) * static_cast<double>(n - 1);
      const double fy = ((cy + half) - p[1]) / (2.0 * half) * static_cast<double>(n - 1);
      const long px = std::lround(fx), py = std::lround(fy);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long x = px + dx, y = py + dy;
          if (x < 0 || y < 0 || x >= static_cast<long>(n) || y >= static_cast<long>(n)) continue;
          const std::size_t o = (static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)) * 3;
          img[o] = c.r;
          img[o + 1] = c.g;
          img[o + 2] = c.b;
        }
    }
  };
  plot(real, kRealColor);
  plot(generated, kGeneratedColor);
  return encode_png(n, n, img);
}

}  // namespace owgan
