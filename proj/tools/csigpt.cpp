// Command-line front end for the experiment recipes.

#include "csigpt/config.hpp"
#include "csigpt/metrics.hpp"
#include "csigpt/pipelines.hpp"
#include "csigpt/tensor_io.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

using namespace csigpt;
using namespace csigpt::expcli;

namespace {

enum Exit { kOk = 0, kConfig = 1, kUsage = 2, kDiverged = 3 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

ExperimentConfig resolve(const Common& c) {
  json doc = c.config_path.empty() ? ExperimentConfig{}.to_json() : io::read_json(c.config_path);
  for (const auto& o : c.overrides) apply_override(doc, o);
  if (c.seed) doc["seed"] = *c.seed;
  if (!c.out.empty()) doc["output_dir"] = c.out;
  return ExperimentConfig::from_json(doc);
}

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::path d = cfg.output_dir;
  fs::create_directories(d);
  return d;
}

void save_run_config(const ExperimentConfig& cfg, const fs::path& dir) {
  io::write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");
}

std::string fmt_db(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

std::vector<ChannelSample> load_or_generate(const ExperimentConfig& cfg, const std::string& path, Split split,
                                            int n) {
  if (!path.empty()) return io::load_dataset(path).samples;
  std::cerr << "generating " << n << " " << cfg.scenario.target << " samples for " << split_name(split) << "\n";
  return generate_split(cfg, cfg.scenario.target, split, n, cfg.seed);
}

json ablation_table(const std::vector<AblationReport>& reps) {
  json rows = json::array();
  for (const auto& r : reps) {
    json row = {{"bits", r.bits}, {"seed", r.seed}, {"fair", r.fair()}};
    for (const auto& s : r.schemes) {
      row[s.label] = s.ok ? json(s.test_nmse_db) : json(nullptr);
      if (!s.ok) row[s.label + " error"] = s.error;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel acquisition experiments: data generation, pre-training, federated tuning"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", common.seed, "Master seed");
  app.add_option("--out", common.out, "Output directory");
  app.add_option("--override", common.overrides, "key.path=value (repeatable)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a channel dataset split");
  std::string gen_scenario = "mixed", gen_split = "train", gen_file;
  int gen_n = -1;
  gen->add_option("--scenario", gen_scenario, "A-like, B-like, C-like or mixed");
  gen->add_option("--split", gen_split, "train, val, test, abundant, scarce, fl-pool, cl-pool");
  gen->add_option("--n", gen_n, "Number of samples (default from data section)");
  gen->add_option("--file", gen_file, "Output file name");

  // pretrain-vae
  auto* pvae = app.add_subcommand("pretrain-vae", "Train the VAE generator, optionally fine-tune it");
  std::string vae_data, vae_ft;
  pvae->add_option("--data", vae_data, "Pre-training dataset")->required()->check(CLI::ExistingFile);
  pvae->add_option("--finetune-data", vae_ft, "Fine-tuning dataset")->check(CLI::ExistingFile);

  // gen-synthetic
  auto* gsyn = app.add_subcommand("gen-synthetic", "Sample channels from a trained VAE");
  std::string syn_vae;
  int syn_n = -1;
  gsyn->add_option("--vae", syn_vae, "VAE checkpoint")->required()->check(CLI::ExistingFile);
  gsyn->add_option("--n", syn_n, "Number of samples (default data.generated)");

  // pretrain-swtcan
  auto* pswt = app.add_subcommand("pretrain-swtcan", "End-to-end SWTCAN training");
  std::string sw_train, sw_val;
  int sw_bits = -1;
  pswt->add_option("--train", sw_train, "Training dataset (default: generated target data)")->check(CLI::ExistingFile);
  pswt->add_option("--val", sw_val, "Validation dataset (default: generated target data)")->check(CLI::ExistingFile);
  pswt->add_option("--bits", sw_bits, "Feedback bits B (default swtcan.feedback_bits)");

  // fedtune
  auto* fedc = app.add_subcommand("fedtune", "Federated tuning of a pre-trained checkpoint");
  std::string fed_ckpt;
  fedc->add_option("--checkpoint", fed_ckpt, "Pre-trained SWTCAN checkpoint")->required()->check(CLI::ExistingFile);

  // central-baseline
  auto* cent = app.add_subcommand("central-baseline", "Centralized baseline under a matched budget");
  std::string cl_ckpt;
  int cl_t0 = -1;
  double cl_gamma = std::nan("");
  cent->add_option("--checkpoint", cl_ckpt, "Pre-trained SWTCAN checkpoint")->required()->check(CLI::ExistingFile);
  cent->add_option("--t0", cl_t0, "Matched federated rounds (default fed.rounds)");
  cent->add_option("--gamma", cl_gamma, "BS/UE speed ratio (default first budget.gammas)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Test NMSE of a checkpoint on a dataset");
  std::string ev_ckpt, ev_data;
  eval->add_option("--checkpoint", ev_ckpt, "SWTCAN checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", ev_data, "Dataset (default: generated target test split)")->check(CLI::ExistingFile);

  // ablation-pretrain
  auto* abl = app.add_subcommand("ablation-pretrain", "Pre-training ablation: Schemes A, B, C and Proposed");

  // fl-vs-cl
  auto* flcl = app.add_subcommand("fl-vs-cl", "Federated tuning versus centralized learning under matched budgets");
  std::string fc_ckpt;
  flcl->add_option("--checkpoint", fc_ckpt, "Pre-trained SWTCAN checkpoint")->required()->check(CLI::ExistingFile);

  // sweep-bits
  auto* sweep = app.add_subcommand("sweep-bits", "Validation NMSE versus feedback bits");

  // plot
  auto* plot = app.add_subcommand("plot", "SVG and CSV of series from a metrics file");
  std::string pl_metrics, pl_x, pl_y, pl_series, pl_name;
  plot->add_option("metrics", pl_metrics, "Metrics JSON-lines file")->required()->check(CLI::ExistingFile);
  plot->add_option("--x", pl_x, "x key (default: uplink_reals, round or epoch)");
  plot->add_option("--y", pl_y, "y key (default: nmse_db or val_nmse_db)");
  plot->add_option("--series", pl_series, "Key that splits records into series");
  plot->add_option("--name", pl_name, "Output file stem (default: metrics file stem)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (plot->parsed()) {
      const auto recs = read_metrics(pl_metrics);
      auto has = [&](const std::string& k) {
        for (const auto& r : recs)
          if (r.is_object() && r.contains(k)) return true;
        return false;
      };
      if (pl_x.empty()) {
        for (const char* k : {"uplink_reals", "round", "epoch"})
          if (has(k)) {
            pl_x = k;
            break;
          }
      }
      if (pl_y.empty()) {
        for (const char* k : {"nmse_db", "val_nmse_db", "train_nmse_db", "loss"})
          if (has(k)) {
            pl_y = k;
            break;
          }
      }
      if (pl_x.empty() || pl_y.empty()) throw ConfigError("plot", "no plottable keys found; pass --x and --y");
      if (pl_series.empty()) {
        for (const char* k : {"series", "scheme", "bits", "pipeline"})
          if (has(k)) {
            pl_series = k;
            break;
          }
      }
      const auto series = extract_series(recs, pl_x, pl_y, pl_series);
      if (series.empty()) throw ConfigError("plot", "no records carry both " + pl_x + " and " + pl_y);
      const fs::path dir = common.out.empty() ? fs::path(pl_metrics).parent_path() : fs::path(common.out);
      const std::string stem = pl_name.empty() ? fs::path(pl_metrics).stem().string() : pl_name;
      write_series_csv(dir / (stem + ".csv"), series, pl_x, pl_y);
      write_series_svg(dir / (stem + ".svg"), series, pl_x, pl_y);
      std::cout << "wrote " << (dir / (stem + ".svg")).string() << " and " << (dir / (stem + ".csv")).string()
                << " (" << series.size() << " series)\n";
      return kOk;
    }

    const ExperimentConfig cfg = resolve(common);
    const fs::path dir = out_dir(cfg);
    save_run_config(cfg, dir);
    const std::string hash = cfg.hash();

    if (gen->parsed()) {
      const Split split = parse_split(gen_split);
      int n = gen_n;
      if (n < 0) {
        switch (split) {
          case Split::Train: n = cfg.data.train; break;
          case Split::Val: n = cfg.data.val; break;
          case Split::Test: n = cfg.data.test; break;
          case Split::Abundant: n = cfg.data.abundant; break;
          case Split::Scarce: n = cfg.data.scarce; break;
          case Split::FlPool: n = cfg.fed.fed.n_ues * cfg.fed.fed.samples_per_ue; break;
          case Split::ClPool: n = cfg.data.train; break;
        }
      }
      if (n < 1) throw ConfigError("n", "must be >= 1");
      if (gen_scenario == "mixed") {
        std::cerr << "mixed split: equal shares of";
        for (const auto& m : cfg.scenario.mixture) std::cerr << " " << m;
        std::cerr << "\n";
      } else {
        cfg.scenario_config(gen_scenario);
      }
      const auto samples = generate_split(cfg, gen_scenario, split, n, cfg.seed);
      const fs::path file = dir / (gen_file.empty() ? gen_scenario + "_" + gen_split + ".safetensors" : gen_file);
      io::save_dataset(samples, file, {gen_scenario, cfg.seed, hash, gen_split});
      std::cout << "wrote " << file.string() << " (" << samples.size() << " samples)\n";
    } else if (pvae->parsed()) {
      vaecsg::VaeConfig vc = cfg.vae.model;
      vc.init_seed = derive_seed(cfg.seed, 0x7ae1);
      vc.seed = derive_seed(cfg.seed, 0x7ae2);
      const auto data = io::load_dataset(vae_data).samples;
      if (data.empty()) throw ConfigError("data", "dataset is empty");
      vaecsg::Vae vae(vc, static_cast<int>(data.front().h.rows()), static_cast<int>(data.front().h.cols()));
      MetricsWriter m(dir / "vae.jsonl", hash, "pretrain-vae");
      for (const auto& e : vaecsg::train(vae, data, cfg.vae.pretrain_epochs)) {
        m.write({{"pipeline", "vae"}, {"stage", "pretrain"}, {"epoch", e.epoch}, {"loss", e.loss}});
      }
      int epochs = cfg.vae.pretrain_epochs;
      if (!vae_ft.empty()) {
        const auto ft = io::load_dataset(vae_ft).samples;
        for (const auto& e : vaecsg::finetune(vae, ft, cfg.vae.finetune_epochs)) {
          m.write({{"pipeline", "vae"}, {"stage", "finetune"}, {"epoch", e.epoch}, {"loss", e.loss}});
        }
        epochs += cfg.vae.finetune_epochs;
      }
      m.close();
      save_vae(vae, dir / "vae.ckpt", {{"config_hash", hash}, {"epoch", epochs}});
      std::cout << "wrote " << (dir / "vae.ckpt").string() << "\n";
    } else if (gsyn->parsed()) {
      const auto vae = load_vae(syn_vae);
      const int n = syn_n < 0 ? cfg.data.generated : syn_n;
      if (n < 1) throw ConfigError("n", "must be >= 1");
      const auto samples = vaecsg::generate(vae, n, derive_seed(cfg.seed, 0x9e11), "generated");
      const fs::path file = dir / "synthetic.safetensors";
      io::save_dataset(samples, file, {"generated", cfg.seed, hash, "generated"});
      std::cout << "wrote " << file.string() << " (" << samples.size() << " samples)\n";
    } else if (pswt->parsed()) {
      const int bits = sw_bits < 0 ? cfg.swtcan.feedback_bits : sw_bits;
      const auto train = load_or_generate(cfg, sw_train, Split::Train, cfg.data.train);
      const auto val = load_or_generate(cfg, sw_val, Split::Val, cfg.data.val);
      swtcan::SwtcanConfig mc = swtcan_for(cfg, bits, cfg.seed);
      mc.validate();
      swtcan::Swtcan model(mc);
      const auto r = swtcan::train_e2e(model, train, val, train_for(cfg, cfg.seed));
      MetricsWriter m(dir / "pretrain.jsonl", hash, "pretrain-swtcan");
      for (const auto& e : r.history) {
        m.write({{"pipeline", "pretrain"}, {"bits", bits}, {"epoch", e.epoch}, {"train_nmse_db", e.train_nmse_db},
                 {"val_nmse_db", e.val_nmse_db}});
      }
      m.close();
      save_swtcan(model, dir / "swtcan.ckpt",
                  {{"config_hash", hash}, {"epoch", r.best_epoch}, {"val_nmse_db", r.best_val_nmse_db},
                   {"partition", "all"}});
      std::cout << "best epoch " << r.best_epoch << ", val NMSE " << fmt_db(r.best_val_nmse_db) << " dB\n"
                << "wrote " << (dir / "swtcan.ckpt").string() << "\n";
    } else if (fedc->parsed()) {
      const auto pre = load_swtcan(fed_ckpt);
      MetricsWriter m(dir / "fedtune.jsonl", hash, "fedtune");
      const auto r = run_fedtune(cfg, pre, &m);
      m.close();
      const double last = r.history.rounds.empty() ? r.history.initial_nmse_db : r.history.rounds.back().nmse_db;
      save_swtcan(*r.model, dir / "swtcan_fedtuned.ckpt",
                  {{"config_hash", hash}, {"epoch", cfg.fed.fed.rounds}, {"val_nmse_db", last},
                   {"partition", r.partition.spec}});
      std::cout << "d = " << r.partition.d << " of " << r.partition.total << " parameters\n"
                << "NMSE " << fmt_db(r.history.initial_nmse_db) << " -> " << fmt_db(last) << " dB after "
                << cfg.fed.fed.rounds << " rounds\n";
    } else if (cent->parsed()) {
      const auto pre = load_swtcan(cl_ckpt);
      const int t0 = cl_t0 < 0 ? cfg.fed.fed.rounds : cl_t0;
      const double gamma = std::isnan(cl_gamma) ? cfg.budget.gammas.front() : cl_gamma;
      if (!(gamma > 0.0)) throw ConfigError("gamma", "must be > 0");
      MetricsWriter m(dir / "central.jsonl", hash, "central-baseline");
      const auto r = run_central(cfg, pre, t0, gamma, &m);
      m.close();
      for (const auto& w : r.budget.warnings) std::cerr << "warning: " << w << "\n";
      save_swtcan(*r.model, dir / "swtcan_central.ckpt",
                  {{"config_hash", hash}, {"epoch", r.budget.k_cl}, {"val_nmse_db", r.final_nmse_db()},
                   {"partition", "all"}});
      std::cout << "N_CL = " << r.budget.n_cl << ", K_CL = " << r.budget.k_cl << " (" << r.budget.k_cl_exact
                << " before flooring), uplink " << r.budget.cl_uplink << " reals\n"
                << "NMSE " << fmt_db(r.history.initial_nmse_db) << " -> " << fmt_db(r.final_nmse_db()) << " dB\n";
    } else if (eval->parsed()) {
      json manifest;
      const auto model = load_swtcan(ev_ckpt, &manifest);
      const auto data = load_or_generate(cfg, ev_data, Split::Test, cfg.data.test);
      const double nmse = swtcan::evaluate_nmse(model, data, derive_seed(cfg.seed, 0x7e57));
      const json res = {{"checkpoint", ev_ckpt}, {"samples", data.size()}, {"nmse", nmse},
                        {"nmse_db", channelsim::to_db(nmse)}};
      MetricsWriter m(dir / "evaluate.jsonl", hash, "evaluate");
      m.write(res);
      m.close();
      std::cout << res.dump(2) << "\n";
    } else if (abl->parsed()) {
      std::vector<AblationReport> reps;
      MetricsWriter m(dir / "ablation.jsonl", hash, "ablation-pretrain");
      for (int bits : cfg.ablation.bits) {
        for (std::uint64_t seed : cfg.ablation.seeds) {
          AblationOptions opt;
          opt.checkpoint_dir = dir / "ablation" / ("B" + std::to_string(bits) + "_seed" + std::to_string(seed));
          reps.push_back(run_pretraining_ablation(cfg, bits, seed, &m, opt));
        }
      }
      m.close();
      const json table = ablation_table(reps);
      io::write_text(dir / "ablation_report.json", table.dump(2) + "\n");
      std::printf("%-6s %-6s %10s %10s %10s %10s\n", "B", "seed", "Scheme A", "Scheme B", "Scheme C", "Proposed");
      for (const auto& r : reps) {
        std::printf("%-6d %-6llu", r.bits, static_cast<unsigned long long>(r.seed));
        for (const auto& s : r.schemes) std::printf(" %10s", s.ok ? fmt_db(s.test_nmse_db).c_str() : "failed");
        std::printf("\n");
      }
      for (const auto& r : reps)
        for (const auto& s : r.schemes)
          if (!s.ok) std::cerr << s.label << " (B=" << r.bits << ", seed " << r.seed << "): " << s.error << "\n";
    } else if (flcl->parsed()) {
      const auto pre = load_swtcan(fc_ckpt);
      MetricsWriter m(dir / "fl_vs_cl.jsonl", hash, "fl-vs-cl");
      const auto r = run_fl_vs_cl(cfg, pre, &m);
      m.close();
      std::cout << "d = " << r.d << " of " << r.total_params << " (fraction " << r.trainable_fraction << ")\n"
                << "federated: " << fmt_db(r.initial_nmse_db) << " -> " << fmt_db(r.fl.back().nmse_db) << " dB, "
                << r.fl.back().uplink_reals << " uplink reals\n";
      for (const auto& c : r.cl) {
        std::cout << "CL gamma=" << c.gamma << ":";
        for (const auto& p : c.points) {
          std::cout << " [T0=" << p.t0 << " N_CL=" << p.n_cl << " K_CL=" << p.k_cl << " " << fmt_db(p.nmse_db)
                    << " dB]";
        }
        std::cout << "\n  ";
        if (c.uplink_ratio) {
          std::cout << "federated reaches " << fmt_db(c.final_nmse_db()) << " dB at round " << c.fl_match->round
                    << ", uplink ratio " << *c.uplink_ratio << "\n";
        } else {
          std::cout << "federated never reaches " << fmt_db(c.final_nmse_db()) << " dB\n";
        }
        for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
      }
    } else if (sweep->parsed()) {
      MetricsWriter m(dir / "sweep.jsonl", hash, "sweep-bits");
      const auto r = run_bits_sweep(cfg, &m);
      m.close();
      for (std::size_t i = 0; i < r.bits.size(); ++i) {
        std::cout << "B=" << r.bits[i] << ": median val NMSE " << fmt_db(r.median_db[i]) << " dB\n";
      }
      std::cout << (r.non_increasing ? "non-increasing in B\n" : "NOT non-increasing in B\n");
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
}
