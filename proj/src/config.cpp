#include "csigpt/config.hpp"

#include "csigpt/tensor_io.hpp"

#include <algorithm>
#include <set>

namespace csigpt::expcli {

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Strict reader over one JSON object: every key must be consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string field(const char* key) const { return join(path_, key); }

  Reader sub(const char* key) {
    seen_.insert(key);
    return Reader(j_.at(key), field(key));
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void get(const char* key, int& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ConfigError(field(key), "integer out of range");
    }
    out = static_cast<int>(x);
  }
  void get(const char* key, std::uint64_t& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void get(const char* key, double& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (v.is_number()) {
      out = v.get<double>();
    } else if (v.is_string() && (v == "inf" || v == "+inf")) {
      out = std::numeric_limits<double>::infinity();
    } else {
      throw ConfigError(field(key), "expected a number");
    }
  }
  void get(const char* key, bool& out) {
    if (!take(key)) return;
    if (!j_.at(key).is_boolean()) throw ConfigError(field(key), "expected true or false");
    out = j_.at(key).get<bool>();
  }
  void get(const char* key, std::string& out) {
    if (!take(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(field(key), "expected a string");
    out = j_.at(key).get<std::string>();
  }
  template <class T>
  void get(const char* key, std::vector<T>& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(field(key), "expected an array");
    std::vector<T> tmp;
    for (std::size_t i = 0; i < v.size(); ++i) {
      json wrap = {{"x", v[i]}};
      Reader r(wrap, field(key) + "[" + std::to_string(i) + "]");
      T x{};
      r.get_element(x);
      tmp.push_back(x);
    }
    out = std::move(tmp);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(join(path_, k), "unknown key");
    }
  }

 private:
  template <class T>
  void get_element(T& x) {
    // Element readers report the indexed path rather than "<path>.x".
    try {
      get("x", x);
    } catch (const ConfigError& e) {
      throw ConfigError(path_, std::string(e.what()).substr(e.field().size() + 2));
    }
  }

  bool take(const char* key) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_preset_overrides(channelsim::ScenarioConfig& s, const json& o, const std::string& path) {
  Reader r(o, path);
  r.get("n_clusters", s.n_clusters);
  r.get("rays_per_cluster", s.rays_per_cluster);
  r.get("angular_spread", s.angular_spread);
  r.get("los", s.los);
  r.get("los_k_factor", s.los_k_factor);
  r.get("azimuth_center", s.azimuth_center);
  r.get("azimuth_range", s.azimuth_range);
  r.get("elevation_center", s.elevation_center);
  r.get("elevation_range", s.elevation_range);
  r.finish();
}

json number_or_inf(double x) {
  if (std::isinf(x) && x > 0) return "inf";
  return x;
}

}  // namespace

channelsim::ScenarioConfig ExperimentConfig::scenario_config(const std::string& label) const {
  channelsim::ScenarioConfig s = channelsim::ScenarioConfig::preset(label);
  s.geometry = scenario.geometry;
  s.n_subcarriers = scenario.n_subcarriers;
  s.carrier_freq = scenario.carrier_freq;
  s.subcarrier_spacing = scenario.subcarrier_spacing;
  s.delay_spread = scenario.delay_spread;
  if (auto it = scenario.presets.find(label); it != scenario.presets.end()) {
    apply_preset_overrides(s, it->second, "scenario.presets." + label);
  }
  return s;
}

budget::CostModel ExperimentConfig::cost_model(std::uint64_t d, std::uint64_t total,
                                               double gamma) const {
  budget::CostModel m;
  m.d = d;
  m.total_params = total;
  m.n_subcarriers = static_cast<std::uint64_t>(scenario.n_subcarriers);
  m.n_antennas = static_cast<std::uint64_t>(scenario.geometry.n_antennas());
  m.zeta_ue = budget.zeta_ue;
  m.zeta_bs = budget.zeta_bs;
  m.kappa_ue = budget.kappa_ue;
  m.gamma = gamma;
  m.samples_per_ue = static_cast<std::uint64_t>(fed.fed.samples_per_ue);
  m.local_epochs = static_cast<std::uint64_t>(fed.fed.local_epochs);
  return m;
}

void ExperimentConfig::validate() const {
  const auto known = channelsim::ScenarioConfig::preset_labels();
  auto check_label = [&](const std::string& label, const std::string& field) {
    if (std::find(known.begin(), known.end(), label) == known.end()) {
      throw ConfigError(field, "unknown scenario preset '" + label + "'");
    }
  };
  check_label(scenario.pretrain, "scenario.pretrain");
  check_label(scenario.target, "scenario.target");
  if (scenario.mixture.empty()) throw ConfigError("scenario.mixture", "must not be empty");
  for (const auto& m : scenario.mixture) check_label(m, "scenario.mixture");
  for (const auto& [label, o] : scenario.presets) check_label(label, "scenario.presets." + label);
  try {
    scenario.geometry.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("scenario.geometry", e.what());
  }
  for (const auto& label : known) scenario_config(label).validate();

  if (swtcan.n_subcarriers != scenario.n_subcarriers) {
    throw ConfigError("swtcan.n_subcarriers", "must equal scenario.n_subcarriers");
  }
  if (swtcan.geometry.n_antennas() != scenario.geometry.n_antennas() ||
      swtcan.geometry.n_rows != scenario.geometry.n_rows) {
    throw ConfigError("swtcan.n_antennas", "N_BS must match scenario.geometry");
  }
  swtcan.validate();

  if (data.train < 1) throw ConfigError("data.train", "must be >= 1");
  if (data.val < 1) throw ConfigError("data.val", "must be >= 1");
  if (data.test < 1) throw ConfigError("data.test", "must be >= 1");
  if (data.abundant < 1) throw ConfigError("data.abundant", "must be >= 1");
  if (data.generated < 1) throw ConfigError("data.generated", "must be >= 1");
  if (data.scarce < 1 || data.scarce >= data.abundant) {
    throw ConfigError("data.scarce", "must be >= 1 and below data.abundant");
  }

  if (train.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (train.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (!(train.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be > 0");
  if (!(train.lr_floor_ratio >= 0.0 && train.lr_floor_ratio <= 1.0)) {
    throw ConfigError("train.lr_floor_ratio", "must be in [0, 1]");
  }

  vae.model.validate();
  if (vae.pretrain_epochs < 0) throw ConfigError("vae.pretrain_epochs", "must be >= 0");
  if (vae.finetune_epochs < 0) throw ConfigError("vae.finetune_epochs", "must be >= 0");

  fed.fed.validate();
  if (fed.partition.empty()) throw ConfigError("fed.partition", "must not be empty");

  if (!(budget.zeta_ue > 0.0)) throw ConfigError("budget.zeta_ue", "must be > 0");
  if (!(budget.zeta_bs > 0.0)) throw ConfigError("budget.zeta_bs", "must be > 0");
  if (!(budget.kappa_ue > 0.0)) throw ConfigError("budget.kappa_ue", "must be > 0");
  if (budget.gammas.empty()) throw ConfigError("budget.gammas", "must not be empty");
  for (double g : budget.gammas)
    if (!(g > 0.0)) throw ConfigError("budget.gammas", "every gamma must be > 0");
  if (budget.cl_rounds.empty()) throw ConfigError("budget.cl_rounds", "must not be empty");
  for (std::size_t i = 0; i < budget.cl_rounds.size(); ++i) {
    const int t = budget.cl_rounds[i];
    if (t < 1 || t > fed.fed.rounds) throw ConfigError("budget.cl_rounds", "each T0 must be in [1, fed.rounds]");
    if (i > 0 && t <= budget.cl_rounds[i - 1]) throw ConfigError("budget.cl_rounds", "must be strictly increasing");
  }

  if (!(central.learning_rate > 0.0)) throw ConfigError("central.learning_rate", "must be > 0");
  if (central.batch_size < 1) throw ConfigError("central.batch_size", "must be >= 1");

  auto check_bits = [&](const std::vector<int>& bits, const std::string& field) {
    if (bits.empty()) throw ConfigError(field, "must not be empty");
    for (int b : bits) {
      swtcan::SwtcanConfig c = swtcan;
      c.feedback_bits = b;
      try {
        c.validate();
      } catch (const ConfigError& e) {
        throw ConfigError(field, std::to_string(b) + " bits: " + e.what());
      }
    }
  };
  check_bits(sweep.bits, "sweep.bits");
  check_bits(ablation.bits, "ablation.bits");
  if (sweep.seeds.empty()) throw ConfigError("sweep.seeds", "must not be empty");
  if (ablation.seeds.empty()) throw ConfigError("ablation.seeds", "must not be empty");
}

json ExperimentConfig::to_json() const {
  json presets = json::object();
  for (const auto& [k, v] : scenario.presets) presets[k] = v;
  const auto& s = swtcan;
  const auto& f = fed.fed;
  return {
      {"seed", seed},
      {"output_dir", output_dir},
      {"scenario",
       {{"pretrain", scenario.pretrain},
        {"target", scenario.target},
        {"mixture", scenario.mixture},
        {"n_subcarriers", scenario.n_subcarriers},
        {"geometry",
         {{"rows", scenario.geometry.n_rows},
          {"cols", scenario.geometry.n_cols},
          {"spacing", scenario.geometry.element_spacing}}},
        {"carrier_freq", scenario.carrier_freq},
        {"subcarrier_spacing", scenario.subcarrier_spacing},
        {"delay_spread", scenario.delay_spread},
        {"presets", presets}}},
      {"data",
       {{"train", data.train},
        {"val", data.val},
        {"test", data.test},
        {"abundant", data.abundant},
        {"scarce", data.scarce},
        {"generated", data.generated}}},
      {"swtcan",
       {{"pilot_slots", s.pilot_slots},
        {"feedback_bits", s.feedback_bits},
        {"bits_per_element", s.bits_per_element},
        {"embed_dim", s.embed_dim},
        {"window_size", s.window_size},
        {"depths", s.depths},
        {"heads", s.heads},
        {"patch_size", s.patch_size},
        {"mlp_ratio", s.mlp_ratio},
        {"relative_position_bias", s.relative_position_bias},
        {"snr_db", number_or_inf(s.snr_db)}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"learning_rate", train.learning_rate},
        {"lr_floor_ratio", train.lr_floor_ratio}}},
      {"vae",
       {{"latent_dim", vae.model.latent_dim},
        {"kl_weight", vae.model.kl_weight},
        {"hidden", vae.model.hidden},
        {"learning_rate", vae.model.learning_rate},
        {"finetune_lr_ratio", vae.model.finetune_lr_ratio},
        {"batch_size", vae.model.batch_size},
        {"pretrain_epochs", vae.pretrain_epochs},
        {"finetune_epochs", vae.finetune_epochs}}},
      {"fed",
       {{"n_ues", f.n_ues},
        {"participation", f.participation},
        {"local_epochs", f.local_epochs},
        {"eta_l", f.eta_l},
        {"eta", f.eta},
        {"beta1", f.beta1},
        {"beta2", f.beta2},
        {"epsilon", f.epsilon},
        {"rounds", f.rounds},
        {"aircomp_snr_db", number_or_inf(f.aircomp_snr_db)},
        {"samples_per_ue", f.samples_per_ue},
        {"literal_variance", f.literal_variance},
        {"partition", fed.partition}}},
      {"budget",
       {{"zeta_ue", budget.zeta_ue},
        {"zeta_bs", budget.zeta_bs},
        {"kappa_ue", budget.kappa_ue},
        {"gammas", budget.gammas},
        {"cl_rounds", budget.cl_rounds}}},
      {"central", {{"learning_rate", central.learning_rate}, {"batch_size", central.batch_size}}},
      {"sweep", {{"bits", sweep.bits}, {"seeds", sweep.seeds}}},
      {"ablation", {{"bits", ablation.bits}, {"seeds", ablation.seeds}}},
  };
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  Reader root(j, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  if (root.has("scenario")) {
    Reader r = root.sub("scenario");
    r.get("pretrain", c.scenario.pretrain);
    r.get("target", c.scenario.target);
    r.get("mixture", c.scenario.mixture);
    r.get("n_subcarriers", c.scenario.n_subcarriers);
    if (r.has("geometry")) {
      Reader g = r.sub("geometry");
      g.get("rows", c.scenario.geometry.n_rows);
      g.get("cols", c.scenario.geometry.n_cols);
      g.get("spacing", c.scenario.geometry.element_spacing);
      g.finish();
    }
    r.get("carrier_freq", c.scenario.carrier_freq);
    r.get("subcarrier_spacing", c.scenario.subcarrier_spacing);
    r.get("delay_spread", c.scenario.delay_spread);
    if (r.has("presets")) {
      const json& p = r.raw("presets");
      if (!p.is_object()) throw ConfigError("scenario.presets", "expected an object");
      for (const auto& [label, o] : p.items()) {
        channelsim::ScenarioConfig probe;
        apply_preset_overrides(probe, o, "scenario.presets." + label);
        c.scenario.presets[label] = o;
      }
    }
    r.finish();
  }
  c.swtcan.n_subcarriers = c.scenario.n_subcarriers;
  c.swtcan.geometry = c.scenario.geometry;
  if (root.has("data")) {
    Reader r = root.sub("data");
    r.get("train", c.data.train);
    r.get("val", c.data.val);
    r.get("test", c.data.test);
    r.get("abundant", c.data.abundant);
    r.get("scarce", c.data.scarce);
    r.get("generated", c.data.generated);
    r.finish();
  }
  if (root.has("swtcan")) {
    Reader r = root.sub("swtcan");
    auto& s = c.swtcan;
    // Optional restatements that must agree with the rest of the config.
    int n_sc = s.n_subcarriers, n_bs = s.n_antennas(), code_len = -1;
    r.get("n_subcarriers", n_sc);
    r.get("n_antennas", n_bs);
    r.get("code_len", code_len);
    r.get("pilot_slots", s.pilot_slots);
    r.get("feedback_bits", s.feedback_bits);
    r.get("bits_per_element", s.bits_per_element);
    r.get("embed_dim", s.embed_dim);
    r.get("window_size", s.window_size);
    r.get("depths", s.depths);
    r.get("heads", s.heads);
    r.get("patch_size", s.patch_size);
    r.get("mlp_ratio", s.mlp_ratio);
    r.get("relative_position_bias", s.relative_position_bias);
    r.get("snr_db", s.snr_db);
    r.finish();
    if (n_sc != c.scenario.n_subcarriers) throw ConfigError("swtcan.n_subcarriers", "must equal scenario.n_subcarriers");
    if (n_bs != c.scenario.geometry.n_antennas()) throw ConfigError("swtcan.n_antennas", "N_BS must match scenario.geometry");
    if (code_len != -1 && (s.bits_per_element < 1 || code_len * s.bits_per_element != s.feedback_bits)) {
      throw ConfigError("swtcan.code_len", "B must equal L * b");
    }
  }
  if (root.has("train")) {
    Reader r = root.sub("train");
    r.get("epochs", c.train.epochs);
    r.get("batch_size", c.train.batch_size);
    r.get("learning_rate", c.train.learning_rate);
    r.get("lr_floor_ratio", c.train.lr_floor_ratio);
    r.finish();
  }
  if (root.has("vae")) {
    Reader r = root.sub("vae");
    auto& v = c.vae.model;
    r.get("latent_dim", v.latent_dim);
    r.get("kl_weight", v.kl_weight);
    r.get("hidden", v.hidden);
    r.get("learning_rate", v.learning_rate);
    r.get("finetune_lr_ratio", v.finetune_lr_ratio);
    r.get("batch_size", v.batch_size);
    r.get("pretrain_epochs", c.vae.pretrain_epochs);
    r.get("finetune_epochs", c.vae.finetune_epochs);
    r.finish();
  }
  if (root.has("fed")) {
    Reader r = root.sub("fed");
    auto& f = c.fed.fed;
    r.get("n_ues", f.n_ues);
    r.get("participation", f.participation);
    r.get("local_epochs", f.local_epochs);
    r.get("eta_l", f.eta_l);
    r.get("eta", f.eta);
    r.get("beta1", f.beta1);
    r.get("beta2", f.beta2);
    r.get("epsilon", f.epsilon);
    r.get("rounds", f.rounds);
    r.get("aircomp_snr_db", f.aircomp_snr_db);
    r.get("samples_per_ue", f.samples_per_ue);
    r.get("literal_variance", f.literal_variance);
    r.get("partition", c.fed.partition);
    r.finish();
  }
  if (root.has("budget")) {
    Reader r = root.sub("budget");
    r.get("zeta_ue", c.budget.zeta_ue);
    r.get("zeta_bs", c.budget.zeta_bs);
    r.get("kappa_ue", c.budget.kappa_ue);
    r.get("gammas", c.budget.gammas);
    r.get("cl_rounds", c.budget.cl_rounds);
    r.finish();
  }
  if (root.has("central")) {
    Reader r = root.sub("central");
    r.get("learning_rate", c.central.learning_rate);
    r.get("batch_size", c.central.batch_size);
    r.finish();
  }
  if (root.has("sweep")) {
    Reader r = root.sub("sweep");
    r.get("bits", c.sweep.bits);
    r.get("seeds", c.sweep.seeds);
    r.finish();
  }
  if (root.has("ablation")) {
    Reader r = root.sub("ablation");
    r.get("bits", c.ablation.bits);
    r.get("seeds", c.ablation.seeds);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const { return io::sha256_hex(to_json().dump()); }

ExperimentConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", path.string() + " is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(doc);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string training_setup_hash(const swtcan::SwtcanConfig& s, const swtcan::TrainOptions& t) {
  const json j = {{"P", s.n_subcarriers},
                  {"rows", s.geometry.n_rows},
                  {"cols", s.geometry.n_cols},
                  {"M", s.pilot_slots},
                  {"B", s.feedback_bits},
                  {"b", s.bits_per_element},
                  {"embed", s.embed_dim},
                  {"window", s.window_size},
                  {"depths", s.depths},
                  {"heads", s.heads},
                  {"patch", s.patch_size},
                  {"mlp", s.mlp_ratio},
                  {"rpb", s.relative_position_bias},
                  {"snr", number_or_inf(s.snr_db)},
                  {"init_seed", s.init_seed},
                  {"epochs", t.epochs},
                  {"batch", t.batch_size},
                  {"lr", t.learning_rate},
                  {"floor", t.lr_floor_ratio},
                  {"seed", t.seed},
                  {"eval_seed", t.eval_seed}};
  return io::sha256_hex(j.dump()).substr(0, 16);
}

}  // namespace csigpt::expcli
