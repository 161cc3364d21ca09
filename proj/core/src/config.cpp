#include "relearn/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "relearn/csv_io.hpp"
#include "relearn/error.hpp"
#include "relearn/serialize.hpp"

namespace relearn::config {

namespace {

struct Binding {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

double parse_double(const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) throw ConfigError("'" + v + "' is not a number");
  return out;
}

template <typename T>
T parse_integer(const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + v + "' is not a valid integer");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + v + "' is not a boolean");
}

std::string show(double v) { return std::isinf(v) ? "inf" : data::format_double(v); }

class Binder {
 public:
  explicit Binder(std::vector<Binding>& out) : out_(out) {}

  void real(const std::string& s, const std::string& k, double& ref) {
    out_.push_back({s, k, [&ref](const std::string& v) { ref = parse_double(v); }, [&ref] { return show(ref); }});
  }
  template <typename T>
  void integer(const std::string& s, const std::string& k, T& ref) {
    out_.push_back({s, k, [&ref](const std::string& v) { ref = parse_integer<T>(v); },
                    [&ref] { return std::to_string(ref); }});
  }
  void flag(const std::string& s, const std::string& k, bool& ref) {
    out_.push_back({s, k, [&ref](const std::string& v) { ref = parse_bool(v); },
                    [&ref] { return std::string(ref ? "true" : "false"); }});
  }
  void weeks(const std::string& s, const std::string& k, std::chrono::seconds& ref) {
    out_.push_back({s, k,
                    [&ref](const std::string& v) { ref = std::chrono::weeks(parse_integer<long>(v)); },
                    [&ref] { return std::to_string(std::chrono::duration_cast<std::chrono::weeks>(ref).count()); }});
  }
  void add(Binding b) { out_.push_back(std::move(b)); }

 private:
  std::vector<Binding>& out_;
};

void bind_training(Binder& b, const std::string& s, dyn::TrainConfig& t) {
  b.real(s, "base_lr", t.base_lr);
  b.integer(s, "max_epochs", t.max_epochs);
  b.integer(s, "patience", t.patience);
  b.integer(s, "batch_size", t.batch_size);
  b.real(s, "validation_fraction", t.validation_fraction);
  b.integer(s, "seed", t.seed);
}

std::vector<Binding> bindings(orch::CampaignConfig& c) {
  std::vector<Binding> out;
  Binder b(out);
  auto& src = c.source;
  b.add({"data", "source",
         [&src](const std::string& v) {
           if (v == "synthetic") src.kind = orch::DataSource::Kind::synthetic;
           else if (v == "csv") src.kind = orch::DataSource::Kind::csv;
           else throw ConfigError("source must be 'synthetic' or 'csv', got '" + v + "'");
         },
         [&src] { return std::string(src.kind == orch::DataSource::Kind::csv ? "csv" : "synthetic"); }});
  b.add({"data", "path", [&src](const std::string& v) { src.csv_path = v; }, [&src] { return src.csv_path.string(); }});
  b.real("data", "outlier_k", src.outlier_k);

  auto& g = src.synthetic;
  b.integer("synthetic", "start", g.start);
  b.integer("synthetic", "n_weeks", g.n_weeks);
  b.integer("synthetic", "seed", g.seed);
  b.integer("synthetic", "shift_week", g.shift_week);
  b.real("synthetic", "shift_width_days", g.shift_width_days);
  b.real("synthetic", "oat_pre", g.oat_pre);
  b.real("synthetic", "oat_post", g.oat_post);
  b.real("synthetic", "oat_diurnal", g.oat_diurnal);
  b.real("synthetic", "wbt_pre", g.wbt_pre);
  b.real("synthetic", "wbt_post", g.wbt_post);
  b.real("synthetic", "wbt_diurnal", g.wbt_diurnal);
  b.real("synthetic", "seasonal_amplitude", g.seasonal_amplitude);
  b.real("synthetic", "sol_peak_pre", g.sol_peak_pre);
  b.real("synthetic", "sol_peak_post", g.sol_peak_post);
  b.real("synthetic", "oat_noise", g.oat_noise);
  b.real("synthetic", "wbt_noise", g.wbt_noise);
  b.real("synthetic", "orh_noise", g.orh_noise);
  b.real("synthetic", "cloud_noise", g.cloud_noise);
  b.real("synthetic", "sat_noise", g.sat_noise);
  b.real("synthetic", "energy_noise", g.energy_noise);
  b.real("synthetic", "rbc_day", g.rbc_day);
  b.real("synthetic", "rbc_night", g.rbc_night);
  b.real("synthetic", "rbc_trim", g.rbc_trim);
  b.integer("synthetic", "day_start_hour", g.day_start_hour);
  b.integer("synthetic", "day_end_hour", g.day_end_hour);
  b.real("synthetic", "k_reheat", g.k_reheat);
  b.real("synthetic", "reheat_gate", g.reheat_gate);
  b.real("synthetic", "reheat_gate_solar", g.reheat_gate_solar);
  b.real("synthetic", "k_preheat", g.k_preheat);
  b.real("synthetic", "mix_outdoor_fraction", g.mix_outdoor_fraction);
  b.real("synthetic", "k_zone_heat", g.k_zone_heat);
  b.real("synthetic", "zone_heat_offset", g.zone_heat_offset);
  b.real("synthetic", "cold_ref", g.cold_ref);
  b.real("synthetic", "cold_span", g.cold_span);
  b.real("synthetic", "cold_max", g.cold_max);
  b.real("synthetic", "cool_base", g.cool_base);
  b.real("synthetic", "k_coil_cool", g.k_coil_cool);
  b.real("synthetic", "k_vrf_cool", g.k_vrf_cool);
  b.real("synthetic", "vrf_cool_offset", g.vrf_cool_offset);
  b.real("synthetic", "warm_ref", g.warm_ref);
  b.real("synthetic", "warm_span", g.warm_span);
  b.real("synthetic", "warm_max", g.warm_max);
  b.integer("synthetic", "lag_samples", g.lag_samples);
  b.integer("synthetic", "min_weeks", g.min_weeks);

  b.weeks("window", "train_weeks", c.window.train_len);
  b.weeks("window", "eval_weeks", c.window.eval_len);
  b.weeks("window", "stride_weeks", c.window.stride);

  bind_training(b, "heating", c.heating);
  bind_training(b, "valve", c.valve);
  bind_training(b, "cooling", c.cooling);
  b.integer("retrain", "max_epochs", c.retrain.max_epochs);
  b.integer("retrain", "patience", c.retrain.patience);

  auto& p = c.ppo;
  b.real("ppo", "clip", p.clip);
  b.real("ppo", "lr", p.lr);
  b.integer("ppo", "total_steps", p.total_steps);
  b.integer("ppo", "retrain_steps", c.ppo_retrain_steps);
  b.flag("ppo", "reset_exploration", c.ppo_reset_exploration);
  b.integer("ppo", "n_envs", p.n_envs);
  b.real("ppo", "gamma", p.gamma);
  b.real("ppo", "lambda", p.lambda);
  b.integer("ppo", "epochs", p.epochs);
  b.integer("ppo", "minibatch", p.minibatch);
  b.integer("ppo", "horizon", p.horizon);
  b.real("ppo", "max_grad_norm", p.max_grad_norm);
  b.real("ppo", "entropy_coef", p.entropy_coef);
  b.real("ppo", "init_log_std", p.init_log_std);
  b.integer("ppo", "hidden", p.hidden);

  auto& e = c.env;
  b.real("env", "vartheta", e.vartheta);
  b.real("env", "alpha", e.alpha);
  b.real("env", "max_delta", e.bounds.max_delta);
  b.real("env", "setpoint_min", e.bounds.setpoint_min);
  b.real("env", "setpoint_max", e.bounds.setpoint_max);
  b.real("env", "valve_threshold", e.valve_threshold);
  b.integer("env", "episode_steps", e.episode_steps);

  b.integer("campaign", "n_weeks", c.n_weeks);
  b.integer("campaign", "first_window", c.first_window);
  b.integer("campaign", "seed", c.seed);
  b.integer("campaign", "threads", c.threads);
  b.add({"campaign", "variants",
         [&c](const std::string& v) {
           c.variants.clear();
           std::stringstream ss(v);
           std::string item;
           while (std::getline(ss, item, ',')) {
             const auto a = item.find_first_not_of(" \t");
             const auto z = item.find_last_not_of(" \t");
             if (a == std::string::npos) continue;
             c.variants.push_back(orch::variant_from_string(item.substr(a, z - a + 1)));
           }
         },
         [&c] {
           std::string out;
           for (auto v : c.variants) out += (out.empty() ? "" : ",") + std::string(orch::to_string(v));
           return out;
         }});
  return out;
}

}  // namespace

orch::CampaignConfig parse_campaign_config(std::string_view text) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  orch::CampaignConfig cfg;
  const auto binds = bindings(cfg);
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      throw ConfigError("key '" + section + "' must belong to a section");
    }
    if (std::none_of(binds.begin(), binds.end(), [&](const Binding& b) { return b.section == section; })) {
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, node] : entries) {
      const auto it = std::find_if(binds.begin(), binds.end(),
                                   [&](const Binding& b) { return b.section == section && b.key == key; });
      if (it == binds.end()) throw ConfigError("unknown config key " + where(section, key));
      try {
        it->set(node.data());
      } catch (const ConfigError& e) {
        throw ConfigError(where(section, key) + ": " + e.what());
      }
    }
  }
  orch::validate(cfg);
  return cfg;
}

orch::CampaignConfig load_campaign_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_campaign_config(ss.str());
}

std::string to_ini_string(const orch::CampaignConfig& cfg) {
  orch::CampaignConfig copy = cfg;
  const auto binds = bindings(copy);
  std::ostringstream out;
  std::string section;
  for (const auto& b : binds) {
    if (b.section != section) {
      if (!section.empty()) out << '\n';
      section = b.section;
      out << '[' << section << "]\n";
    }
    out << b.key << " = " << b.get() << '\n';
  }
  return out.str();
}

std::uint64_t config_hash(const orch::CampaignConfig& cfg) {
  // thread count never changes results, so it stays out of the hash
  orch::CampaignConfig canonical = cfg;
  canonical.threads = 1;
  return nn::fnv1a(to_ini_string(canonical));
}

void apply_seed(orch::CampaignConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.source.synthetic.seed = seed;
}

}  // namespace relearn::config
