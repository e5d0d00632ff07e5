// Command-line driver: fit, cluster, classify, evaluate, and benchmark
// adaptive mixture-of-factor-analyzer models on numeric CSV data.
//
// Exit codes: 0 success, 2 usage/input error, 3 numeric failure.

#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "amofa/adaptation.hpp"
#include "amofa/evaluation.hpp"
#include "amofa/gaussian.hpp"
#include "amofa/io.hpp"
#include "amofa/mml.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct FitFlags {
  std::string data_path;
  bool has_labels = false;
  bool skip_header = false;
  double eps = 1e-5;
  double outer_eps = 1e-4;
  int max_iters = 1000;
};

void add_data_flags(CLI::App* cmd, FitFlags& flags) {
  cmd->add_option("--data", flags.data_path, "input CSV")->required();
  cmd->add_flag("--has-labels", flags.has_labels,
                "treat the last CSV column as a label (excluded from features)");
  cmd->add_flag("--header", flags.skip_header, "skip the first CSV line");
}

void add_fit_flags(CLI::App* cmd, FitFlags& flags) {
  add_data_flags(cmd, flags);
  cmd->add_option("--eps", flags.eps, "inner EM convergence tolerance")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--outer-eps", flags.outer_eps, "outer loop stopping tolerance")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", flags.max_iters, "max inner EM iterations")
      ->check(CLI::Range(1, 1000000));
}

amofa::AmofaConfig config_from(const FitFlags& flags) {
  amofa::AmofaConfig config;
  config.em.epsilon = flags.eps;
  config.em.max_iters = flags.max_iters;
  config.outer_epsilon = flags.outer_eps;
  return config;
}

amofa::Dataset load_features(const FitFlags& flags) {
  return amofa::load_csv(flags.data_path, flags.has_labels, flags.skip_header);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw amofa::InvalidInput("cannot write '" + path + "'");
  return out;
}

// Runs jobs 0..count-1 on `threads` workers; each job writes only its own
// slot, so outputs stay ordered by index regardless of scheduling.
void run_indexed(int count, int threads, const std::function<void(int)>& job) {
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) job(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& worker : pool) worker.join();
  for (const auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
}

int cmd_fit(const FitFlags& flags, const std::string& out_path,
            const std::string& trace_path) {
  const amofa::Dataset data = load_features(flags);
  auto [model, trace] = amofa::amofa_fit(data, config_from(flags));
  for (const std::string& warning : trace.warnings) {
    std::cerr << "warning: " << warning << '\n';
  }
  amofa::save_model(model, out_path);
  if (!trace_path.empty()) amofa::write_trace_csv(trace, trace_path);
  std::cerr << "selected K=" << model.component_count() << ", message length "
            << trace.steps[trace.selected_index].message_length << " nats\n";
  return kExitOk;
}

int cmd_synth(int example, const std::string& spec_path, int n, std::uint64_t seed,
              const std::string& out_path) {
  amofa::GeneratorSpec spec;
  if (!spec_path.empty()) {
    spec = amofa::load_generator_spec(spec_path);
    if (n > 0) spec.sample_count = n;
    spec.seed = seed;
  } else if (example == 1) {
    spec = amofa::example1_spec(n > 0 ? n : 900, seed);
  } else if (example == 2) {
    spec = amofa::example2_spec(n > 0 ? n : 1000, seed);
  } else {
    throw amofa::InvalidInput("synth needs --example 1|2 or --spec");
  }
  amofa::write_csv(amofa::sample_mixture(spec), out_path);
  return kExitOk;
}

int cmd_cluster(const std::string& model_path, const FitFlags& flags,
                const std::string& out_path) {
  const amofa::MixtureModel model = amofa::load_model(model_path);
  const amofa::Dataset data = load_features(flags);
  const amofa::Clustering clustering = amofa::hard_cluster(model, data);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file = open_out(out_path);
    out = &file;
  }
  for (Eigen::Index i = 0; i < clustering.assignments.size(); ++i) {
    *out << clustering.assignments(i) << '\n';
  }
  return kExitOk;
}

int cmd_classify_train(const FitFlags& flags, const std::string& out_path) {
  amofa::Dataset data = amofa::load_csv(flags.data_path, /*has_labels=*/true);
  const amofa::ClassifierBundle bundle =
      amofa::train_classifier(data, config_from(flags));
  amofa::save_bundle(bundle, out_path);
  std::cerr << "trained " << bundle.models.size() << " class models\n";
  return kExitOk;
}

int cmd_classify_predict(const std::string& bundle_path, const FitFlags& flags,
                         const std::string& out_path) {
  const amofa::ClassifierBundle bundle = amofa::load_bundle(bundle_path);
  const amofa::Dataset data = load_features(flags);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file = open_out(out_path);
    out = &file;
  }
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    *out << amofa::classify(bundle, data.points.row(i).transpose()) << '\n';
  }
  return kExitOk;
}

Eigen::VectorXi load_label_column(const std::string& path) {
  const amofa::Dataset data = amofa::load_csv(path, /*has_labels=*/false);
  if (data.points.cols() != 1) {
    throw amofa::InvalidInput("'" + path + "' must have exactly one column of labels");
  }
  Eigen::VectorXi labels(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double value = data.points(i, 0);
    if (value != std::floor(value)) {
      throw amofa::InvalidInput("non-integer label in '" + path + "'");
    }
    labels(i) = static_cast<int>(value);
  }
  return labels;
}

int cmd_eval_nid(const std::string& u_path, const std::string& v_path) {
  const amofa::Clustering u = amofa::Clustering::from_labels(load_label_column(u_path));
  const amofa::Clustering v = amofa::Clustering::from_labels(load_label_column(v_path));
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", amofa::nid(u, v));
  std::cout << buffer << '\n';
  return kExitOk;
}

struct BenchRun {
  int components = 0;
  double message_length = 0.0;
  double nid = 0.0;
};

int cmd_bench(const std::string& suite, int replications, int n, std::uint64_t seed,
              const std::string& data_dir, int folds, int threads,
              const std::string& out_path) {
  const amofa::AmofaConfig config;
  if (suite == "example1" || suite == "example2") {
    const int sample_count = n > 0 ? n : (suite == "example1" ? 900 : 1000);
    std::vector<BenchRun> runs(static_cast<std::size_t>(replications));
    run_indexed(replications, threads, [&](int rep) {
      const amofa::GeneratorSpec spec =
          suite == "example1"
              ? amofa::example1_spec(sample_count, seed + static_cast<std::uint64_t>(rep))
              : amofa::example2_spec(sample_count, seed + static_cast<std::uint64_t>(rep));
      const amofa::Dataset data = amofa::sample_mixture(spec);
      auto [model, trace] = amofa::amofa_fit(data, config);
      BenchRun& run = runs[static_cast<std::size_t>(rep)];
      run.components = model.component_count();
      run.message_length = trace.steps[trace.selected_index].message_length;
      run.nid = amofa::nid(amofa::hard_cluster(model, data),
                           amofa::Clustering::from_labels(*data.labels));
    });

    std::map<int, int> histogram;
    double nid_sum = 0.0;
    for (const BenchRun& run : runs) {
      ++histogram[run.components];
      nid_sum += run.nid;
    }
    if (replications == 1) {
      std::cout << "suite " << suite << " n " << sample_count << " K "
                << runs[0].components << " NID " << runs[0].nid << '\n';
    } else {
      std::cout << "suite " << suite << " replications " << replications << " n "
                << sample_count << '\n';
      std::cout << "K histogram:";
      for (const auto& [k, count] : histogram) std::cout << ' ' << k << ':' << count;
      std::cout << '\n';
      std::cout << "mean NID " << nid_sum / replications << '\n';
    }
    if (!out_path.empty()) {
      std::ofstream out = open_out(out_path);
      out << "rep,K,message_length,nid\n";
      for (std::size_t rep = 0; rep < runs.size(); ++rep) {
        out << rep << ',' << runs[rep].components << ',' << runs[rep].message_length
            << ',' << runs[rep].nid << '\n';
      }
    }
    return kExitOk;
  }

  if (suite == "uci") {
    std::ofstream out;
    if (!out_path.empty()) {
      out = open_out(out_path);
      out << "dataset,fold,accuracy\n";
    }
    auto report = [&](const std::string& name, const amofa::Dataset& data) {
      const amofa::CvResult cv = amofa::cross_validate(data, folds, config, seed);
      std::cout << name << " " << folds << "-fold accuracy " << 100.0 * cv.mean_accuracy
                << " +/- " << 100.0 * cv.std_accuracy << '\n';
      if (out.is_open()) {
        for (std::size_t f = 0; f < cv.fold_accuracies.size(); ++f) {
          out << name << ',' << f << ',' << cv.fold_accuracies[f] << '\n';
        }
      }
    };

    const std::filesystem::path dir = data_dir.empty() ? "." : data_dir;
    const std::filesystem::path waveform_path = dir / "waveform.csv";
    if (std::filesystem::exists(waveform_path)) {
      report("waveform", amofa::load_csv(waveform_path.string(), /*has_labels=*/true));
    } else {
      report("waveform", amofa::sample_waveform(n > 0 ? n : 500, seed));
    }
    const std::filesystem::path pendigits_path = dir / "pendigits.csv";
    if (std::filesystem::exists(pendigits_path)) {
      report("pendigits", amofa::load_csv(pendigits_path.string(), /*has_labels=*/true));
    } else {
      std::cerr << "pendigits.csv not found under '" << dir.string()
                << "'; skipping (see README for how to obtain it)\n";
    }
    return kExitOk;
  }

  throw amofa::InvalidInput("unknown suite '" + suite + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive mixture-of-factor-analyzers toolkit"};
  app.require_subcommand(1);

  FitFlags fit_flags;
  std::string out_path, trace_path;
  auto* fit = app.add_subcommand("fit", "fit a mixture to CSV data");
  add_fit_flags(fit, fit_flags);
  fit->add_option("--out", out_path, "output model file")->required();
  fit->add_option("--trace", trace_path, "write the fit trace as CSV");

  int synth_example = 0;
  std::string synth_spec;
  int synth_n = 0;
  std::uint64_t seed = 0;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "sample a synthetic benchmark dataset");
  synth->add_option("--example", synth_example, "built-in generator (1 or 2)")
      ->check(CLI::Range(1, 2));
  synth->add_option("--spec", synth_spec, "JSON generator spec");
  synth->add_option("--n", synth_n, "sample count")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--out", synth_out, "output CSV")->required();

  FitFlags cluster_flags;
  std::string model_path, cluster_out;
  auto* cluster = app.add_subcommand("cluster", "hard-assign data to model components");
  cluster->add_option("--model", model_path, "model file")->required();
  add_data_flags(cluster, cluster_flags);
  cluster->add_option("--out", cluster_out, "output file (default stdout)");

  FitFlags train_flags;
  std::string bundle_out;
  auto* train = app.add_subcommand("classify-train",
                                   "fit one model per class of a labeled CSV");
  add_fit_flags(train, train_flags);
  train->add_option("--out", bundle_out, "output bundle file")->required();

  FitFlags predict_flags;
  std::string bundle_path, predict_out;
  auto* predict = app.add_subcommand("classify-predict",
                                     "maximum-likelihood class prediction");
  predict->add_option("--bundle", bundle_path, "bundle file")->required();
  add_data_flags(predict, predict_flags);
  predict->add_option("--out", predict_out, "output file (default stdout)");

  std::string nid_u, nid_v;
  auto* eval = app.add_subcommand("eval-nid",
                                  "normalized information distance of two clusterings");
  eval->add_option("--u", nid_u, "first clustering (one label per line)")->required();
  eval->add_option("--v", nid_v, "second clustering")->required();

  std::string suite, data_dir, bench_out;
  int replications = 100;
  int bench_n = 0;
  int folds = 10;
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  auto* bench = app.add_subcommand("bench", "replicated benchmark experiments");
  bench->add_option("--suite", suite, "example1, example2, or uci")->required();
  bench->add_option("--replications", replications, "number of sampled datasets")
      ->check(CLI::PositiveNumber);
  bench->add_option("--n", bench_n, "samples per dataset")->check(CLI::PositiveNumber);
  bench->add_option("--seed", seed, "base seed");
  bench->add_option("--data-dir", data_dir, "directory with UCI CSV files");
  bench->add_option("--folds", folds, "cross-validation folds")->check(CLI::Range(2, 100));
  bench->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "machine-readable results CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::CallForAllHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& err) {
    std::cerr << err.what() << '\n';
    return kExitInput;
  }

  try {
    if (fit->parsed()) return cmd_fit(fit_flags, out_path, trace_path);
    if (synth->parsed()) return cmd_synth(synth_example, synth_spec, synth_n, seed, synth_out);
    if (cluster->parsed()) return cmd_cluster(model_path, cluster_flags, cluster_out);
    if (train->parsed()) return cmd_classify_train(train_flags, bundle_out);
    if (predict->parsed()) return cmd_classify_predict(bundle_path, predict_flags, predict_out);
    if (eval->parsed()) return cmd_eval_nid(nid_u, nid_v);
    if (bench->parsed())
      return cmd_bench(suite, replications, bench_n, seed, data_dir, folds, threads, bench_out);
  } catch (const amofa::InvalidInput& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitInput;
  } catch (const amofa::NumericError& err) {
    std::cerr << "numeric error: " << err.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}
