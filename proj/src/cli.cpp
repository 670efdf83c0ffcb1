#include "spanrank/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>

#include "spanrank/filtopt.hpp"
#include "spanrank/io.hpp"
#include "spanrank/pipeline.hpp"
#include "spanrank/rng.hpp"
#include "spanrank/scatter.hpp"
#include "spanrank/synth.hpp"

namespace spanrank {

namespace {

namespace fs = std::filesystem;

void write_filter_history_csv(const std::string& path, const std::vector<FilterOptRecord>& history) {
  std::string out = "iter,scale,orientation,tau,loss,r1,r2,r3\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const FilterOptRecord& rec = history[i];
    out += std::to_string(i) + "," + format_general(rec.params.scale) + "," +
           format_general(rec.params.orientation) + "," + format_general(rec.params.tau) + "," +
           format_general(rec.loss) + "," + format_general(rec.residuals[0]) + "," +
           format_general(rec.residuals[1]) + "," + format_general(rec.residuals[2]) + "\n";
  }
  write_text_file(path, out);
}

// `--bounds scale=0.5:16` or `--bounds tau=1:4`.
void apply_bounds(const std::string& text, NlsConfig& nls) {
  const auto eq = text.find('=');
  const auto colon = text.find(':', eq == std::string::npos ? 0 : eq);
  if (eq == std::string::npos || colon == std::string::npos)
    throw InvalidSpec("--bounds expects name=low:high, got '" + text + "'");
  const std::string name = text.substr(0, eq);
  const double low = std::stod(text.substr(eq + 1, colon - eq - 1));
  const double high = std::stod(text.substr(colon + 1));
  if (name == "scale") {
    nls.scale_low = low;
    nls.scale_high = high;
  } else if (name == "tau") {
    nls.tau_low = low;
    nls.tau_high = high;
  } else {
    throw InvalidSpec("--bounds supports scale and tau, got '" + name + "'");
  }
}

Eigen::MatrixXd train_projection(const LabeledInstanceSet& set, const SolverConfig& solver,
                                 std::uint64_t seed, SolverTrace* trace_out) {
  const ClassStatistics stats = class_stats(set);
  const ScatterPair sp = spanned_scatter(stats, set);
  const auto [classic_quotient, spanned_quotient] = fisher_trace_diagnostic(sp);
  std::cout << "scatter trace quotient: classic " << format_general(classic_quotient, 9)
            << ", spanned " << format_general(spanned_quotient, 9) << "\n";
  Eigen::MatrixXd a0;
  if (set.dimension() <= set.num_classes) {
    a0 = init_projection(sp, set.dimension());
  } else {
    Rng rng(mix_seed(seed, 0x705fu));
    a0 = random_orthonormal_init(set.dimension(), set.num_classes, rng);
  }
  auto [projection, trace] = fista_optimize(a0, sp, solver);
  if (trace_out) *trace_out = trace;
  return projection;
}

struct EvalOptions {
  std::vector<std::string> manifests;
  std::string bank = "combined";
  std::string report_dir;
  std::string threshold_mode = "per-image";
  std::string strategy = "otsu";
  std::string init = "random";
  PipelineConfig cfg;
};

PipelineConfig finalize_eval_config(EvalOptions& opt) {
  opt.cfg.bank = parse_bank_name(opt.bank);
  if (opt.threshold_mode == "per-image")
    opt.cfg.threshold_mode = ThresholdMode::PerImage;
  else if (opt.threshold_mode == "pooled")
    opt.cfg.threshold_mode = ThresholdMode::PooledTrain;
  else
    throw InvalidSpec("--threshold-mode must be per-image or pooled");
  if (opt.strategy == "otsu")
    opt.cfg.strategy = SelectionStrategy::Otsu;
  else if (opt.strategy == "top-m")
    opt.cfg.strategy = SelectionStrategy::TopM;
  else
    throw InvalidSpec("--strategy must be otsu or top-m");
  if (opt.init == "random")
    opt.cfg.init_mode = InitMode::RandomOrthonormal;
  else if (opt.init == "basis")
    opt.cfg.init_mode = InitMode::Basis;
  else
    throw InvalidSpec("--init must be random or basis");
  return opt.cfg;
}

// Values from `--config FILE` fill any option the command line left at its
// default; explicit flags win.
void merge_config_file(const CLI::App& cmd, const std::string& config_path,
                       const std::function<void(const KeyValueConfig&)>& apply) {
  if (config_path.empty()) return;
  apply(KeyValueConfig::load(config_path));
  (void)cmd;
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"supervised class-span projection, instance ranking-selection and "
               "filter-bank texture experiments"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::function<int()> action;

  // ---- bank ------------------------------------------------------------
  auto* bank_cmd = app.add_subcommand("bank", "filter bank utilities");
  bank_cmd->require_subcommand(1);
  auto* bank_gen = bank_cmd->add_subcommand("gen", "write a bank's kernels as CSV matrices");
  {
    auto opt = std::make_shared<std::pair<std::string, std::string>>("combined", "");
    auto resolution = std::make_shared<int>(49);
    bank_gen->add_option("--name", opt->first, "bank name: lm|mr|s|combined")
        ->check(CLI::IsMember({"lm", "mr", "s", "combined"}));
    bank_gen->add_option("--out", opt->second, "output directory")->required();
    bank_gen->add_option("--resolution", *resolution, "odd kernel side length (default 49)");
    bank_gen->callback([opt, resolution, &action]() {
      action = [opt, resolution]() {
        const FilterBank bank = make_bank(parse_bank_name(opt->first), *resolution);
        fs::create_directories(opt->second);
        std::vector<SpecRecord> records;
        for (std::size_t k = 0; k < bank.filters.size(); ++k) {
          char name[32];
          std::snprintf(name, sizeof name, "filter_%03zu.csv", k);
          write_matrix_csv((fs::path(opt->second) / name).string(),
                           make_kernel(bank.filters[k]));
          records.push_back({bank.filters[k], std::nullopt, std::nullopt});
        }
        write_specs_csv((fs::path(opt->second) / "specs.csv").string(), records);
        std::cout << "wrote " << bank.filters.size() << " kernels to " << opt->second << "\n";
        return 0;
      };
    });
  }

  // ---- project ----------------------------------------------------------
  auto* project_cmd = app.add_subcommand("project", "train or apply a projection");
  project_cmd->require_subcommand(1);
  auto* project_train = project_cmd->add_subcommand("train", "learn a projection matrix");
  {
    struct TrainOpt {
      std::string instances, out, trace, config;
      SolverConfig solver;
      std::uint64_t seed = 42;
    };
    auto opt = std::make_shared<TrainOpt>();
    project_train->add_option("--instances", opt->instances, "instance CSV or FLIM file")
        ->required();
    project_train->add_option("--out", opt->out, "projection CSV output")->required();
    auto* iters = project_train->add_option("--max-iters", opt->solver.max_iterations,
                                            "solver iteration budget");
    auto* tol = project_train->add_option("--tol", opt->solver.relative_tolerance,
                                          "relative objective tolerance");
    auto* weight = project_train->add_option("--weight", opt->solver.orthogonality_weight,
                                             "orthogonality penalty weight");
    auto* seed = project_train->add_option("--seed", opt->seed, "random seed (default 42)");
    project_train->add_option("--trace", opt->trace, "solver trace CSV output");
    project_train->add_option("--config", opt->config, "key = value defaults file");
    project_train->callback([opt, iters, tol, weight, seed, &action, project_train]() {
      action = [opt, iters, tol, weight, seed, project_train]() {
        merge_config_file(*project_train, opt->config, [&](const KeyValueConfig& file) {
          if (iters->count() == 0 && file.contains("max_iters"))
            opt->solver.max_iterations = static_cast<int>(file.get_int("max_iters"));
          if (tol->count() == 0 && file.contains("tol"))
            opt->solver.relative_tolerance = file.get_double("tol");
          if (weight->count() == 0 && file.contains("weight"))
            opt->solver.orthogonality_weight = file.get_double("weight");
          if (seed->count() == 0 && file.contains("seed"))
            opt->seed = static_cast<std::uint64_t>(file.get_int("seed"));
        });
        const LabeledInstanceSet set = read_instances(opt->instances);
        SolverTrace trace;
        const Eigen::MatrixXd projection = train_projection(set, opt->solver, opt->seed, &trace);
        write_matrix_csv(opt->out, projection);
        if (!opt->trace.empty()) write_trace_csv(opt->trace, trace);
        std::cout << "trained " << projection.rows() << "x" << projection.cols()
                  << " projection in " << trace.iterations_run << " iterations ("
                  << (trace.converged ? "converged" : "budget exhausted") << ")\n";
        return 0;
      };
    });
  }
  auto* project_apply = project_cmd->add_subcommand("apply", "project instances into class space");
  {
    auto opt = std::make_shared<std::array<std::string, 3>>();
    project_apply->add_option("--instances", (*opt)[0], "instance CSV or FLIM file")->required();
    project_apply->add_option("--proj", (*opt)[1], "projection CSV")->required();
    project_apply->add_option("--out", (*opt)[2], "projected matrix CSV output")->required();
    project_apply->callback([opt, &action]() {
      action = [opt]() {
        const LabeledInstanceSet set = read_instances((*opt)[0]);
        const Eigen::MatrixXd projection = read_matrix_csv((*opt)[1]);
        write_matrix_csv((*opt)[2], project(set.data, projection));
        return 0;
      };
    });
  }

  // ---- rank ---------------------------------------------------------------
  auto* rank_cmd = app.add_subcommand("rank", "score projected instances and threshold them");
  {
    struct RankOpt {
      std::string projected, out;
      int bins = 256;
      bool crit = false;
    };
    auto opt = std::make_shared<RankOpt>();
    rank_cmd->add_option("--projected", opt->projected, "projected matrix CSV")->required();
    rank_cmd->add_option("--out", opt->out, "ranking CSV output")->required();
    rank_cmd->add_option("--bins", opt->bins, "Otsu histogram bins (default 256)");
    rank_cmd->add_flag("--crit", opt->crit, "include per-class criterion columns");
    rank_cmd->callback([opt, &action]() {
      action = [opt]() {
        const Eigen::MatrixXd v = read_matrix_csv(opt->projected);
        const RankingReport report = rank_instances(v, opt->bins);
        write_ranking_csv(opt->out, report, opt->crit);
        std::cout << "ranked " << v.rows() << " instances, threshold "
                  << format_general(report.threshold, 9) << ", kept " << report.mask.count()
                  << "\n";
        return 0;
      };
    });
  }

  // ---- select ---------------------------------------------------------------
  auto* select_cmd = app.add_subcommand("select", "keep instances above the ranking threshold");
  {
    struct SelectOpt {
      std::string projected, rank, out, indices_out;
    };
    auto opt = std::make_shared<SelectOpt>();
    select_cmd->add_option("--projected", opt->projected, "projected matrix CSV")->required();
    select_cmd->add_option("--rank", opt->rank, "ranking CSV from the rank command")->required();
    select_cmd->add_option("--out", opt->out, "selected matrix CSV output")->required();
    select_cmd->add_option("--indices-out", opt->indices_out, "original row indices output");
    select_cmd->callback([opt, &action]() {
      action = [opt]() {
        const Eigen::MatrixXd v = read_matrix_csv(opt->projected);
        const RankingReport report = read_ranking_csv(opt->rank);
        const auto [selected, indices] = select(v, report);
        write_matrix_csv(opt->out, selected);
        if (!opt->indices_out.empty()) {
          std::string out = "index\n";
          for (const Eigen::Index i : indices) out += std::to_string(i) + "\n";
          write_text_file(opt->indices_out, out);
        }
        std::cout << "kept " << selected.rows() << " of " << v.rows() << " instances\n";
        return 0;
      };
    });
  }

  // ---- optfilter ---------------------------------------------------------------
  auto* opt_cmd = app.add_subcommand("optfilter", "optimize filter parameters against the "
                                                  "projected-scatter loss");
  {
    struct OptfilterOpt {
      std::string manifest, bank = "combined", out, history_dir;
      std::vector<std::string> bounds;
      PipelineConfig cfg;
    };
    auto opt = std::make_shared<OptfilterOpt>();
    opt_cmd->add_option("--manifest", opt->manifest, "dataset manifest (train split is used)")
        ->required();
    opt_cmd->add_option("--bank", opt->bank, "bank name: lm|mr|s|combined")
        ->check(CLI::IsMember({"lm", "mr", "s", "combined"}));
    opt_cmd->add_option("--out", opt->out, "optimized specs CSV output")->required();
    opt_cmd->add_option("--max-iters", opt->cfg.nls.max_iterations, "accepted-step budget");
    opt_cmd->add_option("--bounds", opt->bounds, "parameter box, e.g. scale=0.5:16");
    opt_cmd->add_flag("--fix-orientation", opt->cfg.nls.fix_orientation,
                      "do not optimize orientations");
    opt_cmd->add_option("--resolution", opt->cfg.resolution, "kernel side length");
    opt_cmd->add_option("--truncate", opt->cfg.truncate_filters, "use only the first K filters");
    opt_cmd->add_option("--seed", opt->cfg.seed, "random seed (default 42)");
    opt_cmd->add_option("--threads", opt->cfg.threads, "worker threads (0 = hardware)");
    opt_cmd->add_option("--bins", opt->cfg.bins, "Otsu histogram bins");
    opt_cmd->add_option("--history", opt->history_dir, "directory for per-filter history CSVs");
    opt_cmd->callback([opt, &action]() {
      action = [opt]() {
        for (const std::string& b : opt->bounds) apply_bounds(b, opt->cfg.nls);
        const Dataset dataset = load_dataset(opt->manifest);
        const FilterBank bank =
            truncated_bank(parse_bank_name(opt->bank), opt->cfg.resolution,
                           opt->cfg.truncate_filters);
        if (!opt->history_dir.empty()) fs::create_directories(opt->history_dir);

        std::vector<FilterOptResult> results(bank.filters.size());
        parallel_for_indexed(opt->cfg.threads, bank.filters.size(), [&](std::size_t k) {
          FilterLossContext ctx;
          ctx.kind = bank.filters[k].kind;
          ctx.resolution = bank.filters[k].resolution;
          ctx.images = dataset.train_images;
          ctx.labels = dataset.train_labels;
          ctx.num_classes = dataset.num_classes;
          ctx.solver = opt->cfg.solver;
          ctx.bins = opt->cfg.bins;
          ctx.seed = opt->cfg.seed;
          results[k] = optimize_filter(bank.filters[k], ctx, opt->cfg.nls);
        });
        std::vector<SpecRecord> records;
        for (std::size_t k = 0; k < results.size(); ++k) {
          const FilterOptResult& result = results[k];
          records.push_back({result.spec, result.initial_loss, result.final_loss});
          if (!opt->history_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof name, "filter_%03zu_history.csv", k);
            write_filter_history_csv((fs::path(opt->history_dir) / name).string(),
                                     result.history);
          }
          std::cout << "filter " << k << " (" << to_string(result.spec.kind) << "): loss "
                    << format_general(result.initial_loss, 6) << " -> "
                    << format_general(result.final_loss, 6) << "\n";
        }
        write_specs_csv(opt->out, records);
        return 0;
      };
    });
  }

  // ---- eval ---------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "train, encode and score a texture dataset");
  {
    auto opt = std::make_shared<EvalOptions>();
    auto config_path = std::make_shared<std::string>();
    auto dump_path = std::make_shared<std::string>();
    eval_cmd->add_option("--manifest", opt->manifests, "split manifest CSV (repeatable)")
        ->required();
    eval_cmd->add_option("--bank", opt->bank, "bank name: lm|mr|s|combined")
        ->check(CLI::IsMember({"lm", "mr", "s", "combined"}));
    eval_cmd->add_flag("--optimize-filters", opt->cfg.optimize_filters,
                       "optimize filter parameters before training");
    eval_cmd->add_option("--report", opt->report_dir, "report/artifact directory")->required();
    eval_cmd->add_option("--bins", opt->cfg.bins, "Otsu histogram bins (default 256)");
    eval_cmd->add_option("--seed", opt->cfg.seed, "random seed (default 42)");
    eval_cmd->add_option("--threads", opt->cfg.threads, "worker threads (0 = hardware)");
    eval_cmd->add_option("--truncate", opt->cfg.truncate_filters, "use only the first K filters");
    eval_cmd->add_option("--resolution", opt->cfg.resolution, "kernel side length (default 49)");
    eval_cmd->add_option("--threshold-mode", opt->threshold_mode, "per-image or pooled");
    eval_cmd->add_option("--strategy", opt->strategy, "otsu or top-m selection");
    eval_cmd->add_option("--init", opt->init, "projection start: random or basis");
    eval_cmd->add_option("--weight", opt->cfg.solver.orthogonality_weight,
                         "orthogonality penalty weight");
    eval_cmd->add_option("--top-m", opt->cfg.top_m, "instances kept by the top-m strategy");
    eval_cmd->add_option("--fallback-k", opt->cfg.fallback_k,
                         "pixels kept when selection comes back empty");
    eval_cmd->add_option("--max-iters", opt->cfg.solver.max_iterations,
                         "projection solver budget");
    eval_cmd->add_option("--nls-max-iters", opt->cfg.nls.max_iterations,
                         "filter optimizer budget");
    eval_cmd->add_flag("--no-artifacts", [opt](std::int64_t) { opt->cfg.write_artifacts = false; },
                       "skip per-filter artifact files");
    eval_cmd->add_option("--config", *config_path, "key = value defaults file");
    eval_cmd->add_option("--dump-config", *dump_path, "write the effective run configuration");
    eval_cmd->callback([opt, config_path, dump_path, eval_cmd, &action]() {
      action = [opt, config_path, dump_path, eval_cmd]() {
        merge_config_file(*eval_cmd, *config_path, [&](const KeyValueConfig& file) {
          if (eval_cmd->get_option("--seed")->count() == 0 && file.contains("seed"))
            opt->cfg.seed = static_cast<std::uint64_t>(file.get_int("seed"));
          if (eval_cmd->get_option("--bins")->count() == 0 && file.contains("bins"))
            opt->cfg.bins = static_cast<int>(file.get_int("bins"));
          if (eval_cmd->get_option("--bank")->count() == 0 && file.contains("bank"))
            opt->bank = file.get("bank");
          if (eval_cmd->get_option("--threads")->count() == 0 && file.contains("threads"))
            opt->cfg.threads = static_cast<int>(file.get_int("threads"));
        });
        const PipelineConfig cfg = finalize_eval_config(*opt);
        if (!dump_path->empty()) {
          KeyValueConfig dump;
          dump.set("subcommand", "eval");
          for (std::size_t m = 0; m < opt->manifests.size(); ++m)
            dump.set("manifest_" + std::to_string(m), opt->manifests[m]);
          dump.set("report", opt->report_dir);
          dump.set("bank", opt->bank);
          dump.set_int("seed", static_cast<long long>(cfg.seed));
          dump.set_int("bins", cfg.bins);
          dump.set_int("threads", cfg.threads);
          dump.set_int("truncate", cfg.truncate_filters);
          dump.set_int("resolution", cfg.resolution);
          dump.set_double("weight", cfg.solver.orthogonality_weight);
          dump.set("init", opt->init);
          dump.set("threshold_mode", opt->threshold_mode);
          dump.set("strategy", opt->strategy);
          dump.set_int("optimize_filters", cfg.optimize_filters ? 1 : 0);
          dump.save(*dump_path);
        }
        fs::create_directories(opt->report_dir);
        const EvaluationReport report = evaluate(opt->manifests, cfg, opt->report_dir);
        const std::string text = report_to_text(report);
        write_text_file((fs::path(opt->report_dir) / "report.txt").string(), text);
        write_text_file((fs::path(opt->report_dir) / "report.csv").string(),
                        report_to_csv(report));
        std::cout << text;
        return 0;
      };
    });
  }

  // ---- synth ---------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic striped-texture dataset");
  {
    struct SynthOpt {
      std::string out;
      SyntheticConfig cfg;
    };
    auto opt = std::make_shared<SynthOpt>();
    synth_cmd->add_option("--out", opt->out, "output directory")->required();
    synth_cmd->add_option("--classes", opt->cfg.num_classes, "number of classes (default 10)");
    synth_cmd->add_option("--per-class", opt->cfg.images_per_class,
                          "images per class (default 40)");
    synth_cmd->add_option("--size", opt->cfg.image_size, "image side length (default 32)");
    synth_cmd->add_option("--noise", opt->cfg.noise_fraction,
                          "fraction of noise pixels (default 0.3)");
    synth_cmd->add_option("--splits", opt->cfg.num_splits, "number of split manifests");
    synth_cmd->add_option("--seed", opt->cfg.seed, "random seed (default 42)");
    synth_cmd->callback([opt, &action]() {
      action = [opt]() {
        const std::vector<std::string> manifests = generate_synthetic_dataset(opt->out, opt->cfg);
        std::cout << "wrote " << opt->cfg.num_classes * opt->cfg.images_per_class
                  << " images and " << manifests.size() << " manifests to " << opt->out << "\n";
        return 0;
      };
    });
  }

  for (CLI::App* sub : {bank_cmd, project_cmd, rank_cmd, select_cmd, opt_cmd, eval_cmd, synth_cmd})
    sub->set_version_flag("--version", std::string(kVersion));

  std::vector<const char*> argv;
  argv.push_back("spanrank");
  for (const std::string& arg : args) argv.push_back(arg.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help / --version terminate successfully.
      return app.exit(e);
    }
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }
  return action ? action() : 1;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    return dispatch(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace spanrank
