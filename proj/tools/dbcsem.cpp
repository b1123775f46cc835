#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "dbcsem/baselines.hpp"
#include "dbcsem/errors.hpp"
#include "dbcsem/harness.hpp"
#include "dbcsem/plot.hpp"

namespace fs = std::filesystem;
using namespace dbcsem;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::string scheme;
  std::optional<double> alpha, beta, gamma, zeta, lambda;
  std::optional<double> snr1, gap, sigma_e, cbr;
  std::string dataset;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> epochs;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
  app->add_option("--out", o.out, "output directory");
  app->add_option("--scheme", o.scheme, "sf, td, pa or sic")->check(CLI::IsMember({"sf", "td", "pa", "sic"}));
  app->add_option("--alpha", o.alpha, "SF fusion ratio");
  app->add_option("--beta", o.beta, "TD channel-use ratio");
  app->add_option("--gamma", o.gamma, "PA power ratio");
  app->add_option("--zeta", o.zeta, "SIC power fraction of the better user");
  app->add_option("--lambda", o.lambda, "TD/PA loss weight on the better user (1 - lambda on the other)");
  app->add_option("--snr1", o.snr1, "better user's SNR in dB");
  app->add_option("--gap", o.gap, "SNR gap in dB");
  app->add_option("--sigma-e", o.sigma_e, "CSI estimation-error std in dB");
  app->add_option("--cbr", o.cbr, "channel bandwidth ratio");
  app->add_option("--dataset", o.dataset, "dataset root for both users (user 1 in cross-dataset mode)");
  app->add_option("--seed", o.seed, "training and evaluation seed");
  app->add_option("--epochs", o.epochs, "training epochs");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::from_file(o.config);
  if (!o.scheme.empty()) c.scheme = parse_scheme(o.scheme);
  if (o.alpha) c.alpha = *o.alpha;
  if (o.beta) c.beta = *o.beta;
  if (o.gamma) c.gamma = *o.gamma;
  if (o.zeta) c.zeta = *o.zeta;
  if (o.cbr) c.cbr = *o.cbr;
  if (o.lambda) c.train.lambda = *o.lambda;
  if (o.gap) c.eval.gap_db = *o.gap;
  if (!o.dataset.empty()) c.data.user1.source_path = o.dataset;
  if (const char* env = std::getenv("DBCSEM_DATA"); c.data.user1.source_path.empty() && env != nullptr) {
    c.data.user1.source_path = env;
  }
  if (c.data.user1.source_path.empty()) c.data.user1.source_path = "data/cifar-10-batches-bin";
  if (o.seed) {
    c.train.seed = *o.seed;
    c.eval.seed = *o.seed;
  }
  if (o.epochs) c.train.epochs = *o.epochs;
  if (!o.out.empty()) c.out = o.out;
  c.resolve();
  c.validate();
  return c;
}

ChannelState state_of(const Overrides& o, const RunConfig& c) {
  const double snr1 = o.snr1.value_or(13.0);
  ChannelState s{snr1, snr1 - c.eval.gap_db, 0.0};
  if (!s.degraded()) throw ConfigError("--gap must be positive");
  return s;
}

fs::path run_dir(const RunConfig& c, const std::string& kind, const std::string& name) {
  auto dir = c.out / kind / name;
  fs::create_directories(dir);
  write_json(dir / "config.json", c.to_json());
  return dir;
}

LoadedCheckpoint checkpoint_for(const std::string& path, const RunConfig& c, bool explicit_config) {
  const fs::path file = path.empty() ? latest_checkpoint(c) : fs::path(path);
  if (!fs::exists(file)) throw ConfigError("checkpoint not found: " + file.string() + " (run train first)");
  auto loaded = load_checkpoint(file);
  if (explicit_config && loaded.config.architecture_id() != c.architecture_id()) {
    throw VersionError("checkpoint " + file.string() + " was trained with a different architecture than --config");
  }
  // evaluation settings come from the command line
  loaded.config.eval = c.eval;
  loaded.config.out = c.out;
  if (c.data.user1.source_path != loaded.config.data.user1.source_path && !c.data.user1.source_path.empty()) {
    loaded.config.data = c.data;
  }
  return loaded;
}

void print_points(const std::vector<PerformancePoint>& points) {
  std::printf("%-6s %7s %7s %7s %9s %9s %7s %9s\n", "scheme", "ratio", "snr1", "snr2", "psnr1", "psnr2", "sigma_e",
              "uses");
  for (const auto& p : points) {
    std::printf("%-6s %7.3f %7.2f %7.2f %9.3f %9.3f %7.2f %5lld/%-5lld\n", to_string(p.scheme).c_str(), p.ratio,
                p.snr1_db, p.snr2_db, p.psnr1_db, p.psnr2_db, p.sigma_e, static_cast<long long>(p.channel_uses),
                static_cast<long long>(p.channel_budget));
  }
}

LinePlot psnr_plot(const std::vector<PerformancePoint>& points, const std::string& x_column,
                   const std::string& title) {
  LinePlot plot;
  plot.title = title;
  plot.y_label = "PSNR (dB)";
  Series u1{"user 1", {}, {}}, u2{"user 2", {}, {}};
  for (const auto& p : points) {
    double x = 0;
    if (x_column == "snr1") {
      x = p.snr1_db;
      plot.x_label = "SNR1 (dB)";
    } else if (x_column == "sigma_e") {
      x = p.sigma_e;
      plot.x_label = "CSI error std (dB)";
    } else if (x_column == "gap") {
      x = p.snr1_db - p.snr2_db;
      plot.x_label = "SNR gap (dB)";
    } else {
      x = p.ratio;
      plot.x_label = "ratio";
    }
    u1.x.push_back(x);
    u1.y.push_back(p.psnr1_db);
    u2.x.push_back(x);
    u2.y.push_back(p.psnr2_db);
  }
  plot.series = {u1, u2};
  return plot;
}

LinePlot region_plot(const std::vector<PerformancePoint>& points, const std::string& title) {
  std::map<std::string, Series> by_scheme;
  for (const auto& p : points) {
    auto& s = by_scheme[to_string(p.scheme)];
    s.label = to_string(p.scheme);
    s.x.push_back(p.psnr1_db);
    s.y.push_back(p.psnr2_db);
  }
  LinePlot plot{title, "PSNR user 1 (dB)", "PSNR user 2 (dB)", {}};
  for (auto& [name, s] : by_scheme) plot.series.push_back(s);
  return plot;
}

void save_points(const fs::path& dir, const std::string& stem, const std::vector<PerformancePoint>& points) {
  write_points(points, dir / (stem + ".csv"), dir / (stem + ".json"));
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fusion-based semantic image broadcasting over a two-user degraded broadcast channel"};
  app.require_subcommand(1);
  Overrides o;

  auto* ingest = app.add_subcommand("ingest", "load and validate datasets, or write a synthetic corpus");
  std::string synth_dir;
  std::int64_t synth_train = 5000, synth_test = 1000;
  ingest->add_option("--synthesize", synth_dir, "write a synthetic CIFAR-format corpus here first");
  ingest->add_option("--train-count", synth_train, "synthetic train images");
  ingest->add_option("--test-count", synth_test, "synthetic test images");
  add_common(ingest, o);

  auto* train_cmd = app.add_subcommand("train", "train a model (resumes from its checkpoint)");
  std::int64_t print_every = 20;
  bool fresh = false;
  train_cmd->add_option("--print-every", print_every, "progress line interval in steps");
  train_cmd->add_flag("--fresh", fresh, "ignore an existing checkpoint");
  add_common(train_cmd, o);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over an SNR grid");
  std::string checkpoint;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (default: the config's own)");
  add_common(eval_cmd, o);

  auto* region_cmd = app.add_subcommand("region", "semantic performance region over a ratio grid");
  std::vector<double> ratios;
  bool no_train = false;
  region_cmd->add_option("--ratios", ratios, "ratio grid (default from config)");
  region_cmd->add_flag("--no-train", no_train, "fail instead of training missing checkpoints");
  add_common(region_cmd, o);

  auto* sim_cmd = app.add_subcommand("similarity", "RV2 and |Pearson| matrices of encoded features");
  std::int64_t sim_count = 100;
  sim_cmd->add_option("--checkpoint", checkpoint, "SF checkpoint (default: the config's own)");
  sim_cmd->add_option("--count", sim_count, "number of test images");
  add_common(sim_cmd, o);

  auto* base_cmd = app.add_subcommand("baseline", "superposition coding + JPEG2000 baseline");
  bool rates_only = false;
  base_cmd->add_flag("--rates-only", rates_only, "write the rate table without running the codec");
  add_common(base_cmd, o);

  auto* sweep_cmd = app.add_subcommand("sweep", "SNR, CSI-error and SNR-gap sweeps of a checkpoint");
  std::string kind = "all";
  sweep_cmd->add_option("--kind", kind, "snr, sigma-e, gap or all")
      ->check(CLI::IsMember({"snr", "sigma-e", "gap", "all"}));
  sweep_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (default: the config's own)");
  add_common(sweep_cmd, o);

  auto* params_cmd = app.add_subcommand("params", "parameter counts");
  params_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (default: a fresh model of the config)");
  add_common(params_cmd, o);

  auto* plot_cmd = app.add_subcommand("plot", "render a point file as PNG");
  std::string points_file, plot_x = "snr1", plot_out;
  plot_cmd->add_option("--points", points_file, "point CSV")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--x", plot_x, "snr1, sigma_e, gap, ratio or region")
      ->check(CLI::IsMember({"snr1", "sigma_e", "gap", "ratio", "region"}));
  plot_cmd->add_option("--png", plot_out, "output file (default: next to the points)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plot_cmd->parsed()) {
      const auto points = read_points_csv(points_file);
      const fs::path png = plot_out.empty() ? fs::path(points_file).replace_extension(".png") : fs::path(plot_out);
      write_line_plot(png, plot_x == "region" ? region_plot(points, "performance region")
                                              : psnr_plot(points, plot_x, "PSNR vs " + plot_x));
      std::cout << png.string() << '\n';
      return 0;
    }

    const bool explicit_config = !o.config.empty();
    if (ingest->parsed() && !synth_dir.empty()) o.dataset = synth_dir;
    auto cfg = resolve(o);

    if (ingest->parsed()) {
      if (!synth_dir.empty()) {
        synthesize_cifar_corpus(synth_dir, synth_train, synth_test, cfg.train.seed);
      }
      Json manifest = Json::array();
      auto describe = [&](const DatasetSpec& spec) {
        for (auto split : {Split::train, Split::test}) {
          const auto d = load_dataset(spec, split);
          const auto all = d.all();
          manifest.push_back({{"name", spec.name},
                              {"split", split == Split::train ? "train" : "test"},
                              {"images", d.size()},
                              {"height", d.height()},
                              {"width", d.width()},
                              {"min", all.data.min().item<double>()},
                              {"max", all.data.max().item<double>()},
                              {"mean", all.data.mean().item<double>()},
                              {"source_path", spec.source_path.string()}});
          std::printf("%-10s %-5s %6lld images %dx%d\n", spec.name.c_str(), split == Split::train ? "train" : "test",
                      static_cast<long long>(d.size()), d.height(), d.width());
        }
      };
      describe(cfg.data.user1);
      if (cfg.data.user2) describe(*cfg.data.user2);
      const auto dir = run_dir(cfg, "ingest", cfg.data.user1.name);
      write_json(dir / "manifest.json", manifest);
      return 0;
    }

    if (train_cmd->parsed()) {
      TrainOptions options;
      options.resume = !fresh;
      options.on_step = [&](const StepRecord& r) {
        if (print_every > 0 && r.step % print_every == 0) {
          std::printf("step %6lld  L3 %.4f  loss %.5f  psnr %.2f / %.2f  snr %.1f / %.1f\n",
                      static_cast<long long>(r.step), r.l3, r.loss, r.psnr1, r.psnr2, r.snr1, r.snr2);
          std::fflush(stdout);
        }
      };
      const auto result = train(cfg, options);
      if (result.from_cache) std::cout << "already trained\n";
      const auto& means = result.progress.epoch_mean_l3;
      for (std::size_t e = 0; e < means.size(); ++e) std::printf("epoch %zu mean L3 %.5f\n", e, means[e]);
      std::cout << result.checkpoint.string() << '\n';
      return 0;
    }

    if (eval_cmd->parsed()) {
      const auto ckpt = checkpoint_for(checkpoint, cfg, explicit_config);
      const auto states = o.snr1 ? std::vector<ChannelState>{state_of(o, cfg)}
                                 : snr_grid(cfg.eval.snr1_grid, cfg.eval.gap_db);
      const auto points = evaluate(ckpt, states, o.sigma_e.value_or(0.0));
      const auto dir = run_dir(ckpt.config, "eval", ckpt.id);
      save_points(dir, "points", points);
      write_line_plot(dir / "points.png", psnr_plot(points, "snr1", "PSNR vs SNR1 (gap " + fmt(cfg.eval.gap_db) + " dB)"));
      print_points(points);
      return 0;
    }

    if (region_cmd->parsed()) {
      const auto grid = ratios.empty() ? cfg.eval.ratio_grid : ratios;
      const auto adapter = CodecAdapter::from_environment();
      const auto region = region_sweep(cfg, grid, state_of(o, cfg), !no_train, &adapter);
      const auto dir = run_dir(cfg, "region", to_string(cfg.scheme) + "_snr" + fmt(region.state.snr1_db) + "_" +
                                                  fmt(region.state.snr2_db));
      save_points(dir, "region", region.points);
      write_line_plot(dir / "region.png", region_plot(region.points, "performance region"));
      print_points(region.points);
      return 0;
    }

    if (sim_cmd->parsed()) {
      if (cfg.scheme != Scheme::sf) throw ConfigError("similarity needs an SF model");
      std::shared_ptr<SfSystemImpl> model;
      RunConfig used = cfg;
      const fs::path file = checkpoint.empty() ? latest_checkpoint(cfg) : fs::path(checkpoint);
      if (fs::exists(file)) {
        auto ckpt = checkpoint_for(file.string(), cfg, explicit_config);
        used = ckpt.config;
        model = std::dynamic_pointer_cast<SfSystemImpl>(ckpt.model);
        if (!model) throw ConfigError("similarity needs an SF checkpoint");
      } else {
        std::cerr << "no checkpoint at " << file.string() << "; using an untrained encoder\n";
        model = std::dynamic_pointer_cast<SfSystemImpl>(build_model(cfg));
      }
      const auto test = load_dataset(used.data.user1, Split::test);
      const auto images = test.head(sim_count).all();
      const auto csi = state_of(o, cfg);
      const auto report = similarity_report(*model, images, csi);
      const auto dir = run_dir(used, "similarity", used.checkpoint_id());
      write_csv(report.rv2, dir / "rv2.csv");
      write_csv(report.pearson, dir / "pearson.csv");
      write_heatmap(dir / "rv2.png", "RV2 of encoded features", report.rv2.values, -1.0, 1.0);
      write_heatmap(dir / "pearson.png", "|Pearson| of encoded features", report.pearson.values, 0.0, 1.0);
      write_json(dir / "summary.json",
                 Json{{"images", images.size()},
                      {"csi_snr1_db", csi.snr1_db},
                      {"csi_snr2_db", csi.snr2_db},
                      {"median_rv2", report.median_rv2},
                      {"median_abs_pearson", report.median_pearson}});
      std::printf("median RV2 %.4f  median |Pearson| %.4f\n", report.median_rv2, report.median_pearson);
      return 0;
    }

    if (base_cmd->parsed()) {
      auto sic = cfg;
      sic.scheme = Scheme::sic;
      const auto state = state_of(o, cfg);
      const auto zetas = o.zeta ? std::vector<double>{*o.zeta} : cfg.eval.ratio_grid;
      const auto dir = run_dir(sic, "baseline", "sic_snr" + fmt(state.snr1_db) + "_" + fmt(state.snr2_db));
      std::ostringstream table;
      table << "zeta,snr1_db,snr2_db,R1,R2,bits1,bits2\n";
      for (double z : zetas) {
        const auto rates = sic_rates(z, state.snr1_db, state.snr2_db);
        const auto [b1, b2] = sic_bit_budgets(sic.channel_uses(), rates);
        table << z << ',' << state.snr1_db << ',' << state.snr2_db << ',' << rates.r1 << ',' << rates.r2 << ',' << b1
              << ',' << b2 << '\n';
      }
      write_text_atomic(dir / "sic_rates.csv", table.str());
      std::cout << table.str();
      if (!rates_only) {
        std::vector<PerformancePoint> points;
        const auto adapter = CodecAdapter::from_environment();
        for (double z : zetas) {
          sic.set_ratio(z);
          const auto p = evaluate_sic(sic, {state}, adapter);
          points.insert(points.end(), p.begin(), p.end());
        }
        save_points(dir, "points", points);
        print_points(points);
      }
      return 0;
    }

    if (sweep_cmd->parsed()) {
      const auto ckpt = checkpoint_for(checkpoint, cfg, explicit_config);
      const auto dir = run_dir(ckpt.config, "sweep", ckpt.id);
      const auto& e = ckpt.config.eval;
      if (kind == "snr" || kind == "all") {
        const auto points = evaluate(ckpt, snr_grid(e.snr1_grid, e.gap_db), 0.0);
        save_points(dir, "snr", points);
        write_line_plot(dir / "snr.png", psnr_plot(points, "snr1", "PSNR vs SNR1"));
        print_points(points);
      }
      if (kind == "sigma-e" || kind == "all") {
        std::vector<PerformancePoint> points;
        const auto state = state_of(o, ckpt.config);
        for (double s : e.sigma_e_grid) {
          const auto p = evaluate(ckpt, {state}, s);
          points.insert(points.end(), p.begin(), p.end());
        }
        save_points(dir, "sigma_e", points);
        write_line_plot(dir / "sigma_e.png", psnr_plot(points, "sigma_e", "PSNR vs CSI estimation error"));
        print_points(points);
      }
      if (kind == "gap" || kind == "all") {
        const auto points = evaluate(ckpt, gap_grid(o.snr1.value_or(e.gap_sweep_snr1_db), e.gap_grid), 0.0);
        save_points(dir, "gap", points);
        write_line_plot(dir / "gap.png", psnr_plot(points, "gap", "PSNR vs SNR gap"));
        print_points(points);
      }
      return 0;
    }

    if (params_cmd->parsed()) {
      nn::ParameterReport report;
      std::string id;
      RunConfig used = cfg;
      if (!checkpoint.empty()) {
        const auto ckpt = checkpoint_for(checkpoint, cfg, explicit_config);
        report = count_parameters(ckpt);
        used = ckpt.config;
        id = ckpt.id;
      } else {
        report = nn::count_parameters(*build_model(cfg));
        id = cfg.checkpoint_id();
      }
      auto ablation = used;
      ablation.jscc.csi_aware = false;
      const auto base = nn::count_parameters(*build_model(ablation));
      const auto dir = run_dir(used, "params", id);
      write_json(dir / "params.json", Json{{"total", report.total},
                                           {"csi", report.csi},
                                           {"csi_share", report.csi_share()},
                                           {"no_csi_total", base.total}});
      std::printf("total %lld  csi %lld (%.2f%%)  no-CSI build %lld\n", static_cast<long long>(report.total),
                  static_cast<long long>(report.csi), 100.0 * report.csi_share(), static_cast<long long>(base.total));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
