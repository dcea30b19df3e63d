// ssmsec command-line front end.
#include "ssmsec/attacks.hpp"
#include "ssmsec/config.hpp"
#include "ssmsec/datasets.hpp"
#include "ssmsec/defenses.hpp"
#include "ssmsec/experiments.hpp"
#include "ssmsec/report.hpp"
#include "ssmsec/rng.hpp"
#include "ssmsec/serialize.hpp"
#include "ssmsec/spectral.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace ssmsec;

namespace {

struct Globals {
  std::uint64_t seed = 42;
  std::string seeds;
  std::string out;
  std::string config;
  int threads = 0;  // 0: keep the config value
};

std::string default_out() {
  const char* env = std::getenv("SSMSEC_OUT");
  return env && *env ? env : "results";
}

ExperimentConfig make_config(const Globals& g, const std::string& id) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (!id.empty()) cfg.id = id;
  if (!g.seeds.empty()) cfg.seeds = parse_seed_list(g.seeds);
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (cfg.out_dir.empty()) cfg.out_dir = default_out();
  if (g.threads > 0) cfg.threads = g.threads;
  return cfg;
}

std::string out_dir(const Globals& g) { return g.out.empty() ? default_out() : g.out; }

std::string write_file(const std::string& dir, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / name).string();
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  out << text;
  return path;
}

DatasetSplit make_data(const std::string& kind, int n, int length, int test_size, std::uint64_t seed) {
  if (kind == "genomic") return gen_genomic_dataset(n, length, seed, test_size);
  require(kind == "mean-sign", ErrorKind::InvalidArgument, "unknown dataset kind '" + kind + "' (genomic, mean-sign)");
  return gen_mean_sign_dataset(n, length, seed, test_size);
}

std::string dataset_csv(const Dataset& d) {
  std::ostringstream os;
  os << "label,sequence\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    os << d.labels[i] << ',';
    if (d.is_tokens()) {
      os << decode_tokens(d.tokens[i], d.alphabet);
    } else {
      for (Eigen::Index t = 0; t < d.reals[i].rows(); ++t) os << (t ? " " : "") << fmt(d.reals[i](t, 0), 6);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Security harness for state space sequence models"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for single-run commands")->capture_default_str();
  app.add_option("--seeds", g.seeds, "Comma separated seed list for experiments (default 42,123,456)");
  app.add_option("--out", g.out, "Output directory (default $SSMSEC_OUT or ./results)");
  app.add_option("--config", g.config, "Key-value config file");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  // gen-data
  std::string kind = "genomic";
  int n = 1000, length = 200, test_size = 360;
  auto* gen = app.add_subcommand("gen-data", "Generate a labelled dataset as CSV");
  gen->add_option("--kind", kind, "genomic or mean-sign")->capture_default_str();
  gen->add_option("--n", n, "Total items")->capture_default_str();
  gen->add_option("--length", length, "Sequence length")->capture_default_str();
  gen->add_option("--test-size", test_size, "Held-out items")->capture_default_str();

  // train
  std::string model_path = "model.ssm";
  int epochs = 2;
  double lr = 0.01, lambda = 0.0, clip = 0.0;
  bool selective = false;
  auto* train = app.add_subcommand("train", "Train a classifier and save it");
  train->add_option("--kind", kind, "genomic or mean-sign")->capture_default_str();
  train->add_option("--n", n)->capture_default_str();
  train->add_option("--length", length)->capture_default_str();
  train->add_option("--test-size", test_size)->capture_default_str();
  train->add_option("--epochs", epochs)->capture_default_str();
  train->add_option("--lr", lr)->capture_default_str();
  train->add_option("--lambda-decay", lambda, "Final-state decay penalty")->capture_default_str();
  train->add_option("--clip-norm", clip, "Rescale each batch gradient to at most this l2 norm (0: off)")->capture_default_str();
  train->add_flag("--selective", selective, "Use input-dependent (selective) layers");
  train->add_option("--model", model_path, "Output model file")->capture_default_str();

  // attack
  std::string strategy = "targeted";
  double budget = 3;
  int count = 10;
  double floor = 0.75;
  auto* attack = app.add_subcommand("attack", "Attack test items of a saved model; one JSON line per item");
  attack->add_option("--model", model_path)->required();
  attack->add_option("--strategy", strategy, "targeted, stealth, random, pgd, freeze or erase")->capture_default_str();
  attack->add_option("--budget", budget, "Edit positions (token models) or epsilon (real-valued models)")->capture_default_str();
  attack->add_option("--count", count, "Number of test items")->capture_default_str();
  attack->add_option("--length", length)->capture_default_str();
  attack->add_option("--similarity-floor", floor)->capture_default_str();

  // probe
  int grid = 1024, layer = 0;
  auto* probe = app.add_subcommand("probe", "Frequency gain profile of one layer of a saved model");
  probe->add_option("--model", model_path)->required();
  probe->add_option("--layer", layer)->capture_default_str();
  probe->add_option("--grid", grid)->capture_default_str();

  // extract
  std::string method = "ssd";
  int order = 8;
  double noise = 0.0, delta = 0.01;
  auto* extract = app.add_subcommand("extract", "Black-box extraction of a random SISO system");
  extract->add_option("--method", method, "ssd or generic")->capture_default_str();
  extract->add_option("--n", order, "State dimension")->capture_default_str();
  extract->add_option("--noise", noise)->capture_default_str();
  extract->add_option("--delta", delta, "Target relative impulse-response error")->capture_default_str();

  // defend
  std::string check = "m3";
  auto* defend = app.add_subcommand("defend", "Run one defense check (m1, m2, m3, m5)");
  defend->add_option("check", check)->required()->check(CLI::IsMember({"m1", "m2", "m3", "m5"}));

  // run
  std::string exp_id;
  auto* run = app.add_subcommand("run", "Run an experiment and write its report");
  run->add_option("id", exp_id)->required()->check(CLI::IsMember({"e1", "e2", "e3", "e4", "e5", "mval"}));

  // render
  std::string report_path;
  auto* render = app.add_subcommand("render", "Print a saved report as text tables");
  render->add_option("report", report_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const DatasetSplit d = make_data(kind, n, length, test_size, g.seed);
      std::cout << write_file(out_dir(g), kind + "_train.csv", dataset_csv(d.train)) << '\n'
                << write_file(out_dir(g), kind + "_test.csv", dataset_csv(d.test)) << '\n';
    } else if (*train) {
      const DatasetSplit d = make_data(kind, n, length, test_size, g.seed);
      ExperimentConfig cfg = make_config(g, "");
      ModelSpec spec = kind == "genomic" ? e1_model_spec(cfg) : e2_model_spec(cfg);
      if (selective) spec.kind = LayerKind::Selective;
      TrainConfig tc = e1_train_config(cfg, g.seed);
      tc.epochs = epochs;
      tc.learning_rate = lr;
      tc.state_decay = lambda;
      tc.clip_norm = clip;
      const TrainResult r = train_classifier(init_model(spec, g.seed), d.train, tc);
      save_model(r.model, model_path);
      std::cout << "train_accuracy " << fmt(r.train_accuracy) << "\ntest_accuracy " << fmt(accuracy(r.model, d.test))
                << "\nfinal_loss " << fmt(r.epoch_loss.back()) << "\nmodel " << model_path << '\n';
    } else if (*attack) {
      const StackedModel model = load_model(model_path);
      if (model.token_input()) {
        require(strategy == "targeted" || strategy == "stealth" || strategy == "random", ErrorKind::InvalidArgument,
                "token models support targeted, stealth and random");
        const DatasetSplit d = gen_genomic_dataset(1000, length, g.seed, 360);
        for (int i = 0; i < std::min<int>(count, static_cast<int>(d.test.size())); ++i) {
          const auto& tok = d.test.tokens[static_cast<std::size_t>(i)];
          const int b = static_cast<int>(budget);
          PerturbationRecord r = strategy == "targeted" ? inject_targeted(model, tok, b)
                                 : strategy == "stealth" ? inject_stealth(model, tok, b, floor)
                                                         : inject_random(model, tok, b, derive_seed(g.seed, i, b));
          r.seq_id = "test-" + std::to_string(i);
          std::cout << attack_log_line(r) << '\n';
        }
      } else {
        const DatasetSplit d = gen_mean_sign_dataset(2 * count + 2, length, g.seed, 2 * count);
        for (int i = 0; i < count; ++i) {
          const RowMat& x = d.test.reals[static_cast<std::size_t>(i)];
          const std::uint64_t s = derive_seed(g.seed, static_cast<std::uint64_t>(i));
          PerturbationRecord r;
          if (strategy == "pgd") {
            r = pgd_output_attack(model, x, budget, 20, s);
          } else if (strategy == "random") {
            r = random_output_perturbation(model, x, budget, s);
          } else {
            require(strategy == "freeze" || strategy == "erase", ErrorKind::InvalidArgument,
                    "real-valued models support pgd, random, freeze and erase");
            r = selection_subversion(model, x, budget, strategy == "freeze" ? GateMode::Freeze : GateMode::Erase, 40, s)
                    .record;
          }
          r.seq_id = "test-" + std::to_string(i);
          std::cout << attack_log_line(r) << '\n';
        }
      }
    } else if (*probe) {
      const StackedModel model = load_model(model_path);
      require(layer >= 0 && layer < static_cast<int>(model.layers.size()), ErrorKind::InvalidArgument, "no such layer");
      const ModelLayer& l = model.layers[static_cast<std::size_t>(layer)];
      require(l.kind == LayerKind::Lti, ErrorKind::InvalidArgument, "probe needs an LTI layer");
      const GainProfile p = gain_profile(l.lti.discretize(), grid);
      std::cout << write_file(out_dir(g), "gain_profile_layer" + std::to_string(layer) + ".csv", p.to_csv()) << '\n'
                << p.summary_json() << '\n';
    } else if (*extract) {
      Rng rng(g.seed, 0xe5);
      Vec a(order);
      Mat b(order, 1), c(1, order);
      for (int i = 0; i < order; ++i) {
        a(i) = rng.uniform(0.2, 0.9);
        b(i, 0) = rng.normal();
        c(0, i) = rng.normal();
      }
      CountingOracle oracle(DiscreteSsm::real_diagonal(a, b, c, Mat::Zero(1, 1)), noise, g.seed);
      const ExtractionResult r =
          method == "ssd" ? ssd_extract(oracle, order, delta) : generic_extract(oracle, order, delta, g.seed);
      std::cout << "method " << r.method << "\nqueries " << r.query_count << "\nrelative_error "
                << fmt(r.relative_error, 12) << '\n';
    } else if (*defend) {
      if (check == "m1") {
        const M1Check c = m1_check(g.seed);
        std::cout << "omega_star " << fmt(c.omega_star) << "\nattack_energy_reduction "
                  << fmt(c.attack_energy_reduction, 6) << "\ndc_gain " << fmt(c.dc_gain, 6) << '\n';
      } else if (check == "m2") {
        const M2Check c = m2_isolation_check(1000, g.seed);
        std::cout << "pairs " << c.pairs << "\nbleeds " << c.bleeds << '\n';
        require(c.bleeds == 0, ErrorKind::InvariantViolation, "session state leaked across sessions");
      } else if (check == "m3") {
        const M3Benchmark c = m3_spike_benchmark(200, 1000, 500, g.seed);
        std::cout << "tpr " << fmt(c.tpr, 3) << "\nfpr " << fmt(c.fpr, 3) << "\nlocalized " << fmt(c.localized, 3)
                  << '\n';
      } else {
        const RowMat noised = m5_gaussian(RowMat::Zero(1000, 1000), 1.0, 1e-5, 1.0, g.seed);
        std::cout << "sigma_formula " << fmt(m5_sigma(1.0, 1e-5, 1.0), 6) << "\nsigma_sample "
                  << fmt(std::sqrt(noised.squaredNorm() / static_cast<double>(noised.size())), 6) << '\n';
      }
    } else if (*run) {
      const ExperimentConfig cfg = make_config(g, exp_id == "mval" ? "mval" : exp_id);
      const ExperimentReport rep = run_experiment(cfg);
      for (const auto& p : rep.write(cfg.out_dir)) std::cerr << "wrote " << p << '\n';
      std::cout << rep.render();
    } else if (*render) {
      std::cout << render_report_file(report_path);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::InvariantViolation || e.kind() == ErrorKind::SensitivityViolation ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
