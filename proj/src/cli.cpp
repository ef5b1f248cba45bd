#include "plr/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "plr/diagnostics.hpp"
#include "plr/em.hpp"
#include "plr/gibbs.hpp"
#include "plr/io.hpp"
#include "plr/sparse_logit.hpp"
#include "plr/variational.hpp"

namespace plr::cli {

int exit_code(ErrorKind kind) { return 10 + static_cast<int>(kind); }

namespace {

using json = nlohmann::json;

struct DataOptions {
  std::string path;
  std::string label = "class";
  bool standardize = true;
};

struct Options {
  std::uint64_t seed = 1;
  DataOptions data;
  std::string out;
  std::string chain_out;
  std::string feature_map = "default";
  double hyper_a = 1.0;
  double hyper_b = 1.0;
  EMConfig em;
  std::string init = "one";
  GibbsConfig gibbs;
  VBConfig vb;
  bool type2 = false;
  TypeTwoConfig type2_config;
  logit::Config logit;
  bool no_intercept = false;
  std::string model;
  std::string estimator = "map";
  std::vector<double> grid = default_path_grid();
  std::vector<std::string> datasets;
  std::vector<std::string> methods{"sparse-logit", "pl-gibbs", "pl-var"};
  BenchmarkConfig bench;
  bool no_ess = false;
  std::string csv;
  std::string chain;
  bool normalize = false;
  double wall_time = 0.0;
};

void add_data_options(CLI::App* cmd, DataOptions& data, bool required) {
  auto* opt = cmd->add_option("--data", data.path, "CSV file with a header row");
  if (required) opt->required();
  cmd->add_option("--label", data.label, "Name of the class column")->capture_default_str();
  cmd->add_flag("--standardize,!--no-standardize", data.standardize,
                "Standardize covariates to mean 0, variance 1 (default on; statistics stored in the model)");
}

void add_pl_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--a", o.hyper_a, "Gamma prior shape a")->capture_default_str();
  cmd->add_option("--b", o.hyper_b, "Gamma prior rate b")->capture_default_str();
  cmd->add_option("--map", o.feature_map,
                  "Feature map: default | comma list of exp:J, negexp:J, offset, pair:J:L, negpair:J:L")
      ->capture_default_str();
}

void add_gibbs_options(CLI::App* cmd, GibbsConfig& g) {
  cmd->add_option("--burn-in", g.burn_in, "Burn-in sweeps")->capture_default_str();
  cmd->add_option("--samples", g.samples, "Stored draws")->capture_default_str();
  cmd->add_option("--thin", g.thin, "Keep every thin-th sweep")->capture_default_str();
}

struct Loaded {
  LabelledData labelled;
  std::optional<Standardizer> standardization;
};

Loaded load_training(const DataOptions& options) {
  CsvOptions csv;
  csv.label_column = options.label;
  Loaded loaded{load_csv(options.path, csv), std::nullopt};
  require_trainable(loaded.labelled);
  if (options.standardize) {
    loaded.standardization = Standardizer::fit(loaded.labelled.data.X);
    loaded.labelled.data.X = loaded.standardization->apply(loaded.labelled.data.X);
  }
  return loaded;
}

Model base_model(ModelKind kind, const Loaded& loaded, const Options& o) {
  Model model;
  model.kind = kind;
  model.label_column = o.data.label;
  model.label_names = loaded.labelled.label_names;
  model.covariate_names = loaded.labelled.covariate_names;
  model.standardization = loaded.standardization;
  model.feature_map = o.feature_map;
  model.seed = o.seed;
  model.hyper_a = o.hyper_a;
  model.hyper_b = o.hyper_b;
  return model;
}

void write_chain_file(const std::string& path, const Chain& chain, const std::string& prefix) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  write_chain_csv(out, chain, prefix);
}

void warn_empty_classes(const Dataset& data, std::ostream& err) {
  for (int k : data.empty_classes()) err << "warning: class " << k + 1 << " has no observations\n";
}

int fit_em(const Options& o, std::ostream& out, std::ostream& err) {
  const Loaded loaded = load_training(o.data);
  warn_empty_classes(loaded.labelled.data, err);
  const FeatureMap map = FeatureMap::parse(o.feature_map, static_cast<int>(loaded.labelled.data.covariates()));
  const Design design = make_design(loaded.labelled.data, map);
  EMConfig config = o.em;
  if (o.init == "prior") {
    config.init = InitScheme::kPriorDraw;
  } else if (o.init != "one") {
    throw Error(ErrorKind::kConfig, "--init must be 'one' or 'prior'");
  }
  RngStream rng(o.seed);
  const EMTrace trace = fit_map(design, o.hyper_a, o.hyper_b, config, rng);
  Model model = base_model(ModelKind::kEm, loaded, o);
  model.lambda = trace.lambda;
  model.zero_pattern = trace.zero_pattern;
  model.objective_trace = trace.objective;
  model.iterations = trace.iterations;
  model.converged = trace.converged;
  save_model_file(o.out, model);
  out << json{{"command", "fit-em"},
              {"iterations", trace.iterations},
              {"converged", trace.converged},
              {"objective", trace.objective.back()},
              {"zero_count", trace.zero_pattern.size()},
              {"model", o.out}}
             .dump()
      << '\n';
  return kExitOk;
}

int fit_gibbs(const Options& o, std::ostream& out, std::ostream& err) {
  const Loaded loaded = load_training(o.data);
  warn_empty_classes(loaded.labelled.data, err);
  const FeatureMap map = FeatureMap::parse(o.feature_map, static_cast<int>(loaded.labelled.data.covariates()));
  const Design design = make_design(loaded.labelled.data, map);
  RngStream rng(o.seed);
  const Chain chain = run_chain(design, o.hyper_a, o.hyper_b, o.gibbs, rng);
  Model model = base_model(ModelKind::kGibbs, loaded, o);
  model.lambda = posterior_summaries(chain, false).mean;
  model.chain = chain;
  model.iterations = o.gibbs.burn_in + o.gibbs.samples * o.gibbs.thin;
  model.converged = true;
  save_model_file(o.out, model);
  write_chain_file(o.chain_out, chain, "lambda");
  json summary{{"command", "fit-gibbs"}, {"draws", chain.size()}, {"model", o.out}};
  if (o.gibbs.sample_hyper_a) {
    summary["a_posterior_mean"] = chain.hyper.mean();
    summary["mh_acceptance"] =
        chain.mh_proposed > 0 ? static_cast<double>(chain.mh_accepted) / static_cast<double>(chain.mh_proposed) : 0.0;
  }
  summary["total_mass_map"] = total_mass_map(design.num_classes, design.features(), o.hyper_a, o.hyper_b);
  out << summary.dump() << '\n';
  return kExitOk;
}

int fit_variational(const Options& o, std::ostream& out, std::ostream& err) {
  const Loaded loaded = load_training(o.data);
  warn_empty_classes(loaded.labelled.data, err);
  const FeatureMap map = FeatureMap::parse(o.feature_map, static_cast<int>(loaded.labelled.data.covariates()));
  const Design design = make_design(loaded.labelled.data, map);
  Options resolved = o;
  VariationalState state;
  if (o.type2) {
    TypeTwoConfig config = o.type2_config;
    config.vb = o.vb;
    TypeTwoResult result = type2_ml_a(design, o.hyper_b, config);
    resolved.hyper_a = result.hyper_a;
    state = std::move(result.state);
  } else {
    state = fit_vb(design, o.hyper_a, o.hyper_b, o.vb);
  }
  Model model = base_model(ModelKind::kVariational, loaded, resolved);
  model.lambda = state.mean_lambda();
  model.objective_trace = state.elbo_trace;
  model.iterations = state.iterations;
  model.converged = state.converged;
  model.variational = state;
  save_model_file(o.out, model);
  out << json{{"command", "fit-vb"},
              {"a", resolved.hyper_a},
              {"elbo", state.elbo_trace.back()},
              {"iterations", state.iterations},
              {"converged", state.converged},
              {"model", o.out}}
             .dump()
      << '\n';
  return kExitOk;
}

int fit_logit(const Options& o, std::ostream& out, std::ostream& err) {
  const Loaded loaded = load_training(o.data);
  warn_empty_classes(loaded.labelled.data, err);
  logit::Config config = o.logit;
  config.intercept = !o.no_intercept;
  config.burn_in = o.gibbs.burn_in;
  config.samples = o.gibbs.samples;
  config.thin = o.gibbs.thin;
  const logit::Design design = logit::make_design(loaded.labelled.data, config.intercept);
  RngStream rng(o.seed);
  const Chain chain = run_logit_chain(design, config, rng);
  Model model = base_model(ModelKind::kLogit, loaded, o);
  model.feature_map.clear();
  model.hyper_c = config.hyper_c;
  model.hyper_d = config.hyper_d;
  model.intercept = config.intercept;
  model.chain = chain;
  model.iterations = config.burn_in + config.samples * config.thin;
  model.converged = true;
  save_model_file(o.out, model);
  write_chain_file(o.chain_out, chain, "beta");
  out << json{{"command", "fit-logit"}, {"draws", chain.size()}, {"theta_posterior_mean", chain.hyper.mean()},
              {"model", o.out}}
             .dump()
      << '\n';
  return kExitOk;
}

int predict(const Options& o, std::ostream& out, std::ostream&) {
  const Model model = load_model_file(o.model);
  CsvOptions csv;
  csv.label_column = model.label_column;
  csv.known_labels = model.label_names;
  csv.label_optional = true;
  const LabelledData data = load_csv(o.data.path, csv);
  const Eigen::MatrixXd probs = model.predict(data.data.X);
  const Eigen::VectorXi predicted = argmax_labels(probs);

  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw Error(ErrorKind::kIo, "cannot open '" + o.out + "' for writing");
  }
  std::ostream& target = o.out.empty() ? out : file;
  target << "row";
  for (const std::string& name : model.label_names) target << ",p_" << name;
  target << ",predicted\n";
  char buffer[32];
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    target << i + 1;
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, probs(i, k));
      target << ',' << std::string_view(buffer, static_cast<std::size_t>(end - buffer));
    }
    target << ',' << model.label_names[static_cast<std::size_t>(predicted(i))] << '\n';
  }
  if (!o.out.empty()) {
    json summary{{"command", "predict"}, {"rows", probs.rows()}, {"predictions", o.out}};
    if (data.has_labels) summary["misclassification"] = misclassification(probs, data.data.labels);
    out << summary.dump() << '\n';
  }
  return kExitOk;
}

int regpath(const Options& o, std::ostream& out, std::ostream&) {
  const Loaded loaded = load_training(o.data);
  const FeatureMap map = FeatureMap::parse(o.feature_map, static_cast<int>(loaded.labelled.data.covariates()));
  const Design design = make_design(loaded.labelled.data, map);
  PathConfig config;
  config.hyper_b = o.hyper_b;
  config.em = o.em;
  config.gibbs = o.gibbs;
  config.vb = o.vb;
  RngStream rng(o.seed);
  const RegPath path = regularization_path(design, o.grid, parse_path_estimator(o.estimator), config, rng);
  std::ofstream file(o.out);
  if (!file) throw Error(ErrorKind::kIo, "cannot open '" + o.out + "' for writing");
  path.write_csv(file);
  json points = json::array();
  for (const PathPoint& p : path.points) {
    json entry{{"a", p.hyper_a}, {"zero_count", p.zero_count}, {"failed", p.failed}};
    if (p.failed) entry["error"] = p.error;
    if (p.objective) entry["objective"] = *p.objective;
    points.push_back(entry);
  }
  out << json{{"command", "regpath"}, {"estimator", o.estimator}, {"points", points}, {"csv", o.out}}.dump() << '\n';
  return kExitOk;
}

int run_benchmark(const Options& o, std::ostream& out, std::ostream&) {
  std::vector<BenchmarkDataset> datasets;
  for (const std::string& spec : o.datasets) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::kConfig, "--dataset expects NAME=PATH, got '" + spec + "'");
    }
    CsvOptions csv;
    csv.label_column = o.data.label;
    LabelledData data = load_csv(spec.substr(eq + 1), csv);
    require_trainable(data);
    datasets.push_back({spec.substr(0, eq), std::move(data.data)});
  }
  std::vector<Method> methods;
  for (const std::string& name : o.methods) methods.push_back(parse_method(name));
  BenchmarkConfig config = o.bench;
  config.feature_map = o.feature_map;
  config.hyper_a = o.hyper_a;
  config.hyper_b = o.hyper_b;
  config.gibbs.burn_in = o.gibbs.burn_in;
  config.gibbs.samples = o.gibbs.samples;
  config.gibbs.thin = o.gibbs.thin;
  config.logit.burn_in = o.gibbs.burn_in;
  config.logit.samples = o.gibbs.samples;
  config.logit.thin = o.gibbs.thin;
  config.compute_ess = !o.no_ess;
  const BenchmarkResult result = benchmark(datasets, methods, config, o.seed);
  out << "Dataset characteristics\n" << result.dataset_table() << '\n';
  out << "Misclassification rate, mean (sd) over " << config.replications << " splits\n"
      << result.error_table() << '\n';
  if (config.compute_ess) out << "Sampler efficiency\n" << result.efficiency_table();
  for (const BenchmarkCell& cell : result.cells) {
    if (cell.failed) {
      out << "failed: " << datasets[cell.dataset].name << ' ' << to_string(cell.method) << " replication "
          << cell.replication + 1 << ": " << cell.error << '\n';
    }
  }
  if (!o.csv.empty()) {
    std::ofstream file(o.csv);
    if (!file) throw Error(ErrorKind::kIo, "cannot open '" + o.csv + "' for writing");
    result.write_csv(file);
  }
  return kExitOk;
}

int diagnose_ess(const Options& o, std::ostream& out, std::ostream&) {
  std::ifstream in(o.chain);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + o.chain + "' for reading");
  const Chain chain = read_chain_csv(in);
  const EssReport report = min_ess_report(chain, o.wall_time, o.normalize);
  json per = json::array();
  for (Eigen::Index c = 0; c < report.per_coordinate.size(); ++c) {
    per.push_back({{"row", c / chain.coef_cols + 1}, {"col", c % chain.coef_cols + 1}, {"ess", report.per_coordinate(c)}});
  }
  json summary{{"command", "diagnose-ess"},
               {"draws", chain.size()},
               {"normalized", o.normalize},
               {"min_ess", report.min_ess},
               {"min_row", report.argmin / chain.coef_cols + 1},
               {"min_col", report.argmin % chain.coef_cols + 1},
               {"coordinates", per}};
  if (chain.hyper.size() >= 10) summary["hyper_ess"] = ess(chain.hyper);
  if (o.wall_time > 0.0) {
    summary["wall_seconds"] = o.wall_time;
    summary["time_per_ess"] = report.time_per_ess;
  }
  out << summary.dump() << '\n';
  return kExitOk;
}

void report_error(std::ostream& err, const std::string& kind, int code, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"exit_code", code}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Plackett-Luce regression: sparse MAP, Gibbs and variational inference, with a sparse logit baseline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.add_option("--seed", o.seed, "Master random seed")->envname(kSeedVariable)->capture_default_str();

  auto* em = app.add_subcommand("fit-em", "Sparse MAP estimate by EM");
  add_data_options(em, o.data, true);
  add_pl_options(em, o);
  em->add_option("--out,-o", o.out, "Model JSON output")->required();
  em->add_option("--max-iters", o.em.max_iters, "Iteration cap")->capture_default_str();
  em->add_option("--tol", o.em.rel_tol, "Relative objective tolerance")->capture_default_str();
  em->add_option("--init", o.init, "Initial weights: one | prior")->capture_default_str();

  auto* gibbs = app.add_subcommand("fit-gibbs", "Posterior sampling by the conjugate Gibbs sampler");
  add_data_options(gibbs, o.data, true);
  add_pl_options(gibbs, o);
  add_gibbs_options(gibbs, o.gibbs);
  gibbs->add_option("--out,-o", o.out, "Model JSON output")->required();
  gibbs->add_option("--chain-out", o.chain_out, "Chain CSV output");
  gibbs->add_flag("--sample-a", o.gibbs.sample_hyper_a, "Sample a by Metropolis-Hastings under p(a) = 1/a");
  gibbs->add_option("--mh-scale", o.gibbs.mh_step_scale, "Initial log-scale random-walk step for a")
      ->capture_default_str();
  gibbs->add_flag("--rescale", o.gibbs.rescale_lambda, "Redraw the total mass after every sweep");

  auto* vb = app.add_subcommand("fit-vb", "Mean-field variational approximation");
  add_data_options(vb, o.data, true);
  add_pl_options(vb, o);
  vb->add_option("--out,-o", o.out, "Model JSON output")->required();
  vb->add_option("--max-iters", o.vb.max_iters, "Iteration cap")->capture_default_str();
  vb->add_option("--tol", o.vb.rel_tol, "Relative bound tolerance")->capture_default_str();
  vb->add_flag("--type2", o.type2, "Choose a by maximising the converged bound plus ln p(a)");
  vb->add_option("--a-lower", o.type2_config.a_lower, "Lower end of the a search")->capture_default_str();
  vb->add_option("--a-upper", o.type2_config.a_upper, "Upper end of the a search")->capture_default_str();

  auto* lg = app.add_subcommand("fit-logit", "Sparse Bayesian multinomial logit baseline");
  add_data_options(lg, o.data, true);
  add_gibbs_options(lg, o.gibbs);
  lg->add_option("--out,-o", o.out, "Model JSON output")->required();
  lg->add_option("--chain-out", o.chain_out, "Chain CSV output");
  lg->add_option("--c", o.logit.hyper_c, "Gamma prior shape for theta")->capture_default_str();
  lg->add_option("--d", o.logit.hyper_d, "Gamma prior rate for theta")->capture_default_str();
  lg->add_flag("--no-intercept", o.no_intercept, "Do not append a constant covariate");
  lg->add_flag("--shrink-intercept", o.logit.shrink_intercept, "Put the intercept under the Laplace prior");
  lg->add_option("--intercept-variance", o.logit.intercept_variance, "Prior variance of an unshrunk intercept")
      ->capture_default_str();

  auto* pr = app.add_subcommand("predict", "Class probabilities and labels from a saved model");
  pr->add_option("--model", o.model, "Model JSON")->required();
  pr->add_option("--data", o.data.path, "CSV with the model's covariate columns")->required();
  pr->add_option("--out,-o", o.out, "Predictions CSV (stdout when omitted)");

  auto* rp = app.add_subcommand("regpath", "Regularization path over decreasing a");
  add_data_options(rp, o.data, true);
  rp->add_option("--b", o.hyper_b, "Gamma prior rate b")->capture_default_str();
  rp->add_option("--map", o.feature_map, "Feature map")->capture_default_str();
  rp->add_option("--estimator", o.estimator, "map | gibbs-mean | gibbs-median | vb-mean")->capture_default_str();
  rp->add_option("--grid", o.grid, "Strictly decreasing a values")->delimiter(',')->capture_default_str();
  add_gibbs_options(rp, o.gibbs);
  rp->add_option("--out,-o", o.out, "Long-format CSV output (a,k,j,value,estimator)")->required();

  auto* bm = app.add_subcommand("benchmark", "Replicated train/test comparison of methods");
  bm->add_option("--dataset", o.datasets, "NAME=PATH, repeatable")->required();
  bm->add_option("--label", o.data.label, "Name of the class column")->capture_default_str();
  bm->add_option("--methods", o.methods, "sparse-logit, pl-gibbs, pl-var, pl-map")->delimiter(',')->capture_default_str();
  bm->add_option("--replications", o.bench.replications, "Random splits per dataset")->capture_default_str();
  bm->add_option("--train-fraction", o.bench.train_fraction, "Training share of each class")->capture_default_str();
  add_pl_options(bm, o);
  add_gibbs_options(bm, o.gibbs);
  bm->add_option("--threads", o.bench.threads, "Worker threads (0: all cores)")->capture_default_str();
  bm->add_flag("--no-ess", o.no_ess, "Skip effective sample size reports");
  bm->add_option("--csv", o.csv, "Summary CSV output");

  auto* de = app.add_subcommand("diagnose-ess", "Effective sample sizes of a chain CSV");
  de->add_option("--chain", o.chain, "Chain CSV")->required();
  de->add_flag("--normalize", o.normalize, "Divide every draw by its total before the ESS");
  de->add_option("--wall-time", o.wall_time, "Sampling seconds, for time per ESS");

  for (CLI::App* sub : app.get_subcommands({})) sub->allow_config_extras(CLI::config_extras_mode::error);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::FileError& e) {
    report_error(err, "config_file", kExitConfigFile, e.what());
    return kExitConfigFile;
  } catch (const CLI::ConfigError& e) {
    report_error(err, "config_file", kExitConfigFile, e.what());
    return kExitConfigFile;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    report_error(err, "usage", kExitUsage, e.what());
    return kExitUsage;
  }

  try {
    if (em->parsed()) return fit_em(o, out, err);
    if (gibbs->parsed()) return fit_gibbs(o, out, err);
    if (vb->parsed()) return fit_variational(o, out, err);
    if (lg->parsed()) return fit_logit(o, out, err);
    if (pr->parsed()) return predict(o, out, err);
    if (rp->parsed()) return regpath(o, out, err);
    if (bm->parsed()) return run_benchmark(o, out, err);
    if (de->parsed()) return diagnose_ess(o, out, err);
  } catch (const Error& e) {
    report_error(err, to_string(e.kind()), exit_code(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report_error(err, "unexpected", kExitUnexpected, e.what());
    return kExitUnexpected;
  }
  return kExitUsage;
}

}  // namespace plr::cli
