#include "csigpt/pipelines.hpp"

#include "csigpt/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace csigpt::expcli {

namespace {

std::uint64_t label_key(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

json db(double x) {
  if (std::isfinite(x)) return x;
  return x < 0 ? "-inf" : (x > 0 ? "inf" : "nan");
}

}  // namespace

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Abundant: return "abundant";
    case Split::Scarce: return "scarce";
    case Split::FlPool: return "fl-pool";
    case Split::ClPool: return "cl-pool";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  for (Split s : {Split::Train, Split::Val, Split::Test, Split::Abundant, Split::Scarce, Split::FlPool,
                  Split::ClPool}) {
    if (split_name(s) == name) return s;
  }
  throw ConfigError("split", "unknown split '" + name + "'");
}

std::vector<ChannelSample> generate_split(const ExperimentConfig& config, const std::string& scenario,
                                          Split split, int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("generate_split: negative count");
  const std::uint64_t base = derive_seed(seed, static_cast<std::uint64_t>(split));
  if (scenario != "mixed") {
    return channelsim::generate_dataset(config.scenario_config(scenario), n, derive_seed(base, label_key(scenario)));
  }
  const auto& mix = config.scenario.mixture;
  const int k = static_cast<int>(mix.size());
  std::vector<std::vector<ChannelSample>> parts;
  for (int j = 0; j < k; ++j) {
    const int count = n / k + (j < n % k ? 1 : 0);
    if (count == 0) {
      parts.emplace_back();
      continue;
    }
    parts.push_back(channelsim::generate_dataset(config.scenario_config(mix[static_cast<std::size_t>(j)]), count,
                                                 derive_seed(base, label_key(mix[static_cast<std::size_t>(j)]))));
  }
  std::vector<ChannelSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(std::move(parts[static_cast<std::size_t>(i % k)][static_cast<std::size_t>(i / k)]));
  }
  return out;
}

swtcan::SwtcanConfig swtcan_for(const ExperimentConfig& config, int bits, std::uint64_t seed) {
  swtcan::SwtcanConfig c = config.swtcan;
  c.feedback_bits = bits;
  c.init_seed = derive_seed(seed, 0x5717);
  return c;
}

swtcan::TrainOptions train_for(const ExperimentConfig& config, std::uint64_t seed) {
  swtcan::TrainOptions o = config.train;
  o.seed = derive_seed(seed, 0x7a1);
  o.eval_seed = derive_seed(seed, 0xe7a1);
  return o;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

SweepReport run_bits_sweep(const ExperimentConfig& config, MetricsWriter* metrics) {
  config.validate();
  SweepReport rep;
  rep.bits = config.sweep.bits;
  for (std::uint64_t seed : config.sweep.seeds) {
    const auto train = generate_split(config, config.scenario.target, Split::Train, config.data.train, seed);
    const auto val = generate_split(config, config.scenario.target, Split::Val, config.data.val, seed);
    for (int bits : config.sweep.bits) {
      swtcan::Swtcan model(swtcan_for(config, bits, seed));
      const auto r = swtcan::train_e2e(model, train, val, train_for(config, seed));
      if (metrics) {
        for (const auto& e : r.history) {
          metrics->write({{"pipeline", "sweep"}, {"event", "epoch"}, {"bits", bits}, {"seed", seed},
                          {"epoch", e.epoch}, {"train_nmse_db", db(e.train_nmse_db)},
                          {"val_nmse_db", db(e.val_nmse_db)}});
        }
        metrics->write({{"pipeline", "sweep"}, {"event", "run"}, {"bits", bits}, {"seed", seed},
                        {"best_epoch", r.best_epoch}, {"best_val_nmse_db", db(r.best_val_nmse_db)}});
      }
      rep.runs.push_back({bits, seed, r.best_val_nmse_db, r.best_epoch});
    }
  }
  rep.non_increasing = true;
  for (int bits : rep.bits) {
    std::vector<double> v;
    for (const auto& r : rep.runs)
      if (r.bits == bits) v.push_back(r.best_val_nmse_db);
    rep.median_db.push_back(median(v));
    if (rep.median_db.size() > 1 && rep.median_db.back() > rep.median_db[rep.median_db.size() - 2]) {
      rep.non_increasing = false;
    }
  }
  if (metrics) {
    for (std::size_t i = 0; i < rep.bits.size(); ++i) {
      metrics->write({{"pipeline", "sweep"}, {"event", "median"}, {"bits", rep.bits[i]},
                      {"median_val_nmse_db", db(rep.median_db[i])}});
    }
  }
  return rep;
}

const SchemeResult& AblationReport::scheme(const std::string& label) const {
  for (const auto& s : schemes)
    if (s.label == label) return s;
  throw std::out_of_range("no scheme '" + label + "'");
}

bool AblationReport::fair() const {
  if (schemes.empty()) return false;
  for (const auto& s : schemes)
    if (s.setup_hash != schemes.front().setup_hash) return false;
  return true;
}

AblationReport run_pretraining_ablation(const ExperimentConfig& config, int bits, std::uint64_t seed,
                                        MetricsWriter* metrics, const AblationOptions& options) {
  config.validate();
  AblationReport rep;
  rep.bits = bits;
  rep.seed = seed;
  const auto& sc = config.scenario;
  const auto abundant = generate_split(config, sc.pretrain, Split::Abundant, config.data.abundant, seed);
  const auto scarce = generate_split(config, sc.target, Split::Scarce, config.data.scarce, seed);
  const auto val = generate_split(config, sc.target, Split::Val, config.data.val, seed);
  const auto test = generate_split(config, sc.target, Split::Test, config.data.test, seed);

  vaecsg::VaeConfig vc = config.vae.model;
  vc.init_seed = derive_seed(seed, 0x7ae1);
  vc.seed = derive_seed(seed, 0x7ae2);
  const int p = sc.n_subcarriers, n = sc.geometry.n_antennas();

  auto emit_vae = [&](const std::string& which, const std::vector<vaecsg::VaeEpoch>& pre,
                      const std::vector<vaecsg::VaeEpoch>& ft) {
    if (!metrics) return;
    json rec = {{"pipeline", "ablation"}, {"event", "vae"}, {"bits", bits}, {"seed", seed}, {"which", which},
                {"pretrain_epochs", pre.size()}, {"finetune_epochs", ft.size()}};
    if (!pre.empty()) rec["pretrain_final_loss"] = db(pre.back().loss);
    if (!ft.empty()) rec["finetune_final_loss"] = db(ft.back().loss);
    metrics->write(rec);
  };

  std::vector<ChannelSample> gen_c, gen_p;
  std::string err_c, err_p;
  try {
    vaecsg::Vae v(vc, p, n);
    const auto h = vaecsg::train(v, scarce, config.vae.finetune_epochs);
    emit_vae("scarce-only", h, {});
    gen_c = vaecsg::generate(v, config.data.generated, derive_seed(seed, 0x9e1c), "generated");
    if (options.checkpoint_dir) {
      save_vae(v, *options.checkpoint_dir / "vae_scarce.ckpt",
               {{"config_hash", config.hash()}, {"epoch", h.size()}, {"seed", seed}});
    }
  } catch (const std::exception& e) {
    err_c = std::string("VAE: ") + e.what();
  }
  try {
    vaecsg::Vae v(vc, p, n);
    const auto h1 = vaecsg::train(v, abundant, config.vae.pretrain_epochs);
    const auto h2 = vaecsg::finetune(v, scarce, config.vae.finetune_epochs);
    emit_vae("pretrain+finetune", h1, h2);
    gen_p = vaecsg::generate(v, config.data.generated, derive_seed(seed, 0x9e1f), "generated");
    if (options.checkpoint_dir) {
      save_vae(v, *options.checkpoint_dir / "vae_proposed.ckpt",
               {{"config_hash", config.hash()}, {"epoch", h1.size() + h2.size()}, {"seed", seed}});
    }
  } catch (const std::exception& e) {
    err_p = std::string("VAE: ") + e.what();
  }

  struct Plan {
    std::string label, source, file, error;
    const std::vector<ChannelSample>* data;
  };
  const std::vector<Plan> plans{
      {"Scheme A", std::to_string(abundant.size()) + " " + sc.pretrain, "scheme_a", "", &abundant},
      {"Scheme B", std::to_string(scarce.size()) + " " + sc.target, "scheme_b", "", &scarce},
      {"Scheme C", std::to_string(gen_c.size()) + " generated (VAE on scarce " + sc.target + ")", "scheme_c", err_c,
       &gen_c},
      {"Proposed", std::to_string(gen_p.size()) + " generated (VAE " + sc.pretrain + " + " + sc.target + ")",
       "proposed", err_p, &gen_p},
  };
  const auto mc = swtcan_for(config, bits, seed);
  const auto to = train_for(config, seed);
  const std::uint64_t test_seed = derive_seed(seed, 0x7e57);
  for (const auto& plan : plans) {
    SchemeResult res;
    res.label = plan.label;
    res.data_source = plan.source;
    res.setup_hash = training_setup_hash(mc, to);
    res.error = plan.error;
    if (res.error.empty()) {
      try {
        auto model = std::make_shared<swtcan::Swtcan>(mc);
        const auto r = swtcan::train_e2e(*model, *plan.data, val, to);
        if (metrics) {
          for (const auto& e : r.history) {
            metrics->write({{"pipeline", "ablation"}, {"event", "epoch"}, {"bits", bits}, {"seed", seed},
                            {"scheme", plan.label}, {"epoch", e.epoch}, {"train_nmse_db", db(e.train_nmse_db)},
                            {"val_nmse_db", db(e.val_nmse_db)}});
          }
        }
        res.best_epoch = r.best_epoch;
        res.best_val_nmse_db = r.best_val_nmse_db;
        res.test_nmse_db = channelsim::to_db(swtcan::evaluate_nmse(*model, test, test_seed));
        if (!std::isfinite(res.test_nmse_db)) throw DivergenceError("test NMSE is not finite");
        res.ok = true;
        res.model = model;
        if (options.checkpoint_dir) {
          save_swtcan(*model, *options.checkpoint_dir / (plan.file + ".ckpt"),
                      {{"config_hash", config.hash()}, {"epoch", r.best_epoch},
                       {"val_nmse_db", db(r.best_val_nmse_db)}, {"partition", "all"}, {"scheme", plan.label}});
        }
      } catch (const std::exception& e) {
        res.error = e.what();
      }
    }
    if (metrics) {
      json rec = {{"pipeline", "ablation"}, {"event", "scheme"}, {"bits", bits}, {"seed", seed},
                  {"scheme", res.label}, {"data", res.data_source}, {"setup_hash", res.setup_hash},
                  {"ok", res.ok}};
      if (res.ok) {
        rec["test_nmse_db"] = db(res.test_nmse_db);
        rec["best_val_nmse_db"] = db(res.best_val_nmse_db);
        rec["best_epoch"] = res.best_epoch;
      } else {
        rec["error"] = res.error;
      }
      metrics->write(rec);
    }
    rep.schemes.push_back(std::move(res));
  }
  return rep;
}

const ClCurve& FlVsClReport::curve(double gamma) const {
  for (const auto& c : cl)
    if (c.gamma == gamma) return c;
  throw std::out_of_range("no CL curve for gamma " + std::to_string(gamma));
}

namespace {

void check_dimensions(const ExperimentConfig& config, const swtcan::Swtcan& model) {
  const auto& mc = model.config();
  if (mc.n_subcarriers != config.scenario.n_subcarriers ||
      mc.n_antennas() != config.scenario.geometry.n_antennas()) {
    throw ConfigError("scenario", "model dimensions do not match the config");
  }
}

std::uint64_t eval_seed_for(const ExperimentConfig& config) { return derive_seed(config.seed, 0x7e57); }

}  // namespace

FedtuneResult run_fedtune(const ExperimentConfig& config, const swtcan::Swtcan& pretrained,
                          MetricsWriter* metrics) {
  config.validate();
  check_dimensions(config, pretrained);
  const std::uint64_t seed = config.seed;
  const auto& target = config.scenario.target;
  FedtuneResult out;
  out.partition = swtcan::partition_params(pretrained, config.fed.partition);
  const auto eval = generate_split(config, target, Split::Test, config.data.test, seed);

  fedtune::FedConfig fc = config.fed.fed;
  fc.seed = derive_seed(seed, 0xfed);
  const int per = fc.samples_per_ue;
  const auto pool = generate_split(config, target, Split::FlPool, fc.n_ues * per, seed);
  std::vector<fedtune::ClientShard> shards(static_cast<std::size_t>(fc.n_ues));
  for (int u = 0; u < fc.n_ues; ++u) {
    auto& s = shards[static_cast<std::size_t>(u)];
    s.ue_id = u;
    s.local_samples.assign(pool.begin() + u * per, pool.begin() + (u + 1) * per);
  }
  fedtune::SwtcanFederated fm(pretrained, out.partition, eval_seed_for(config));
  const double tau_round = budget::fl_compute_time(1, static_cast<std::uint64_t>(per),
                                                   static_cast<std::uint64_t>(fc.local_epochs),
                                                   config.budget.zeta_ue, config.budget.kappa_ue);
  out.history = fedtune::run_federated_tuning(fm, shards, fc, eval, {tau_round});
  out.model = std::make_shared<swtcan::Swtcan>(fm.model());
  if (metrics) {
    metrics->write({{"pipeline", "fedtune"}, {"event", "start"}, {"d", out.partition.d},
                    {"total_params", out.partition.total}, {"partition", config.fed.partition},
                    {"nmse_db", db(out.history.initial_nmse_db)}});
    for (const auto& r : out.history.rounds) {
      metrics->write({{"pipeline", "fedtune"}, {"event", "round"}, {"series", "federated"}, {"round", r.round},
                      {"uplink_reals", r.uplink_reals_cum}, {"nmse_db", db(r.nmse_db)},
                      {"participants", r.participants}, {"dropped", r.dropped},
                      {"model_seconds", r.wall_model_seconds}});
    }
  }
  return out;
}

CentralResult run_central(const ExperimentConfig& config, const swtcan::Swtcan& pretrained, int t0,
                          double gamma, MetricsWriter* metrics) {
  config.validate();
  check_dimensions(config, pretrained);
  if (t0 < 0) throw ConfigError("t0", "must be >= 0");
  const std::uint64_t seed = config.seed;
  const auto& target = config.scenario.target;
  const auto partition = swtcan::partition_params(pretrained, config.fed.partition);
  CentralResult out;
  out.budget = budget::evaluate_budget(config.cost_model(partition.d, partition.total, gamma),
                                       static_cast<std::uint64_t>(t0));
  const auto eval = generate_split(config, target, Split::Test, config.data.test, seed);
  // Sample i of the pool does not depend on the pool size, so smaller T0
  // collect a prefix of what larger T0 collect.
  const auto collected = generate_split(config, target, Split::ClPool, static_cast<int>(out.budget.n_cl), seed);
  fedtune::CentralOptions co = config.central;
  co.seed = derive_seed(seed, 0xc1);
  co.eval_seed = eval_seed_for(config);
  out.model = std::make_shared<swtcan::Swtcan>(pretrained);
  out.history = fedtune::run_centralized_baseline(*out.model, collected, static_cast<int>(out.budget.k_cl), eval, co);
  if (metrics) {
    const auto& b = out.budget;
    metrics->write({{"pipeline", "central"}, {"event", "budget"}, {"gamma", gamma}, {"t0", t0},
                    {"d", partition.d}, {"n_cl", b.n_cl}, {"k_cl", b.k_cl}, {"k_cl_exact", b.k_cl_exact},
                    {"tau", b.tau}, {"cl_uplink", b.cl_uplink}, {"warnings", b.warnings},
                    {"initial_nmse_db", db(out.history.initial_nmse_db)}});
    for (const auto& e : out.history.epochs) {
      metrics->write({{"pipeline", "central"}, {"event", "epoch"}, {"gamma", gamma}, {"t0", t0},
                      {"epoch", e.epoch}, {"epoch_nmse_db", db(e.nmse_db)}});
    }
    std::ostringstream name;
    name << "CL gamma=" << gamma;
    metrics->write({{"pipeline", "central"}, {"event", "final"}, {"series", name.str()}, {"gamma", gamma},
                    {"t0", t0}, {"uplink_reals", b.cl_uplink}, {"nmse_db", db(out.final_nmse_db())}});
  }
  return out;
}

FlVsClReport run_fl_vs_cl(const ExperimentConfig& config, const swtcan::Swtcan& pretrained,
                          MetricsWriter* metrics) {
  const auto fl = run_fedtune(config, pretrained, metrics);
  FlVsClReport rep;
  rep.d = fl.partition.d;
  rep.total_params = fl.partition.total;
  rep.trainable_fraction = budget::trainable_fraction(rep.d, rep.total_params);
  rep.initial_nmse_db = fl.history.initial_nmse_db;
  rep.fl.push_back({0, 0, fl.history.initial_nmse_db});
  for (const auto& r : fl.history.rounds) rep.fl.push_back({r.round, r.uplink_reals_cum, r.nmse_db});

  for (double gamma : config.budget.gammas) {
    ClCurve curve;
    curve.gamma = gamma;
    for (int t0 : config.budget.cl_rounds) {
      const auto cl = run_central(config, pretrained, t0, gamma, metrics);
      const auto& bp = cl.budget;
      for (const auto& w : bp.warnings) curve.warnings.push_back("T0=" + std::to_string(t0) + ": " + w);
      curve.points.push_back({t0, bp.n_cl, bp.k_cl, bp.k_cl_exact, bp.cl_uplink, cl.final_nmse_db()});
    }
    const double target_db = curve.final_nmse_db();
    for (const auto& f : rep.fl) {
      if (f.round >= 1 && f.nmse_db <= target_db) {
        curve.fl_match = f;
        break;
      }
    }
    if (curve.fl_match && curve.final_uplink() > 0) {
      curve.uplink_ratio = static_cast<double>(curve.fl_match->uplink_reals) / static_cast<double>(curve.final_uplink());
    }
    if (metrics) {
      json rec = {{"pipeline", "fl_vs_cl"}, {"event", "summary"}, {"gamma", gamma}, {"d", rep.d},
                  {"total_params", rep.total_params}, {"cl_final_nmse_db", db(target_db)},
                  {"cl_final_uplink", curve.final_uplink()}, {"warnings", curve.warnings}};
      json pts = json::array();
      for (const auto& p : curve.points) {
        pts.push_back({{"t0", p.t0}, {"n_cl", p.n_cl}, {"k_cl", p.k_cl}, {"uplink_reals", p.uplink_reals},
                       {"nmse_db", db(p.nmse_db)}});
      }
      rec["cl_points"] = pts;
      if (curve.fl_match) {
        rec["fl_match_round"] = curve.fl_match->round;
        rec["fl_match_uplink"] = curve.fl_match->uplink_reals;
      }
      if (curve.uplink_ratio) rec["uplink_ratio"] = *curve.uplink_ratio;
      metrics->write(rec);
    }
    rep.cl.push_back(std::move(curve));
  }
  return rep;
}

json swtcan_config_json(const swtcan::SwtcanConfig& c) {
  return {{"n_subcarriers", c.n_subcarriers},
          {"rows", c.geometry.n_rows},
          {"cols", c.geometry.n_cols},
          {"spacing", c.geometry.element_spacing},
          {"pilot_slots", c.pilot_slots},
          {"feedback_bits", c.feedback_bits},
          {"bits_per_element", c.bits_per_element},
          {"embed_dim", c.embed_dim},
          {"window_size", c.window_size},
          {"depths", c.depths},
          {"heads", c.heads},
          {"patch_size", c.patch_size},
          {"mlp_ratio", c.mlp_ratio},
          {"relative_position_bias", c.relative_position_bias},
          {"snr_db", std::isinf(c.snr_db) ? json("inf") : json(c.snr_db)},
          {"init_seed", c.init_seed}};
}

swtcan::SwtcanConfig swtcan_config_from_json(const json& j) {
  try {
    swtcan::SwtcanConfig c;
    c.n_subcarriers = j.at("n_subcarriers").get<int>();
    c.geometry = {j.at("rows").get<int>(), j.at("cols").get<int>(), j.at("spacing").get<double>()};
    c.pilot_slots = j.at("pilot_slots").get<int>();
    c.feedback_bits = j.at("feedback_bits").get<int>();
    c.bits_per_element = j.at("bits_per_element").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.window_size = j.at("window_size").get<int>();
    c.depths = j.at("depths").get<std::vector<int>>();
    c.heads = j.at("heads").get<std::vector<int>>();
    c.patch_size = j.at("patch_size").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.relative_position_bias = j.at("relative_position_bias").get<bool>();
    const json& snr = j.at("snr_db");
    c.snr_db = snr.is_string() ? std::numeric_limits<double>::infinity() : snr.get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint manifest: bad SWTCAN config: ") + e.what());
  }
}

void save_swtcan(const swtcan::Swtcan& model, const fs::path& path, const json& manifest) {
  json m = manifest;
  m["model"] = "swtcan";
  m["swtcan"] = swtcan_config_json(model.config());
  io::save_checkpoint(model.params(), path, m);
}

swtcan::Swtcan load_swtcan(const fs::path& path, json* manifest) {
  const json m = io::read_manifest(path);
  if (m.value("model", "") != "swtcan") throw IntegrityError(path.string() + ": not a SWTCAN checkpoint");
  swtcan::Swtcan model(swtcan_config_from_json(m.at("swtcan")));
  io::load_checkpoint(model.params(), path);
  if (manifest) *manifest = m;
  return model;
}

void save_vae(const vaecsg::Vae& vae, const fs::path& path, const json& manifest) {
  const auto& c = vae.config();
  json m = manifest;
  m["model"] = "vae";
  m["vae"] = {{"latent_dim", c.latent_dim}, {"kl_weight", c.kl_weight}, {"hidden", c.hidden},
              {"learning_rate", c.learning_rate}, {"finetune_lr_ratio", c.finetune_lr_ratio},
              {"batch_size", c.batch_size}, {"init_seed", c.init_seed}, {"seed", c.seed}};
  m["n_subcarriers"] = vae.n_subcarriers();
  m["n_antennas"] = vae.n_antennas();
  m["data_scale"] = vae.data_scale();
  m["reference_power"] = vae.reference_power();
  io::save_checkpoint(vae.params(), path, m);
}

vaecsg::Vae load_vae(const fs::path& path, json* manifest) {
  const json m = io::read_manifest(path);
  if (m.value("model", "") != "vae") throw IntegrityError(path.string() + ": not a VAE checkpoint");
  try {
    const json& v = m.at("vae");
    vaecsg::VaeConfig c;
    c.latent_dim = v.at("latent_dim").get<int>();
    c.kl_weight = v.at("kl_weight").get<double>();
    c.hidden = v.at("hidden").get<std::vector<int>>();
    c.learning_rate = v.at("learning_rate").get<double>();
    c.finetune_lr_ratio = v.at("finetune_lr_ratio").get<double>();
    c.batch_size = v.at("batch_size").get<int>();
    c.init_seed = v.at("init_seed").get<std::uint64_t>();
    c.seed = v.at("seed").get<std::uint64_t>();
    vaecsg::Vae vae(c, m.at("n_subcarriers").get<int>(), m.at("n_antennas").get<int>());
    io::load_checkpoint(vae.params(), path);
    vae.set_data_scale(m.at("data_scale").get<double>());
    vae.set_reference_power(m.at("reference_power").get<double>());
    if (manifest) *manifest = m;
    return vae;
  } catch (const json::exception& e) {
    throw IntegrityError(path.string() + ": bad VAE manifest: " + e.what());
  }
}

}  // namespace csigpt::expcli
