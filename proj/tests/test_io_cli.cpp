#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "plr/cli.hpp"
#include "plr/em.hpp"
#include "plr/io.hpp"

namespace fs = std::filesystem;
using plr::ErrorKind;
using json = nlohmann::json;

namespace {

const std::string kIris = PLR_DATA_DIR "/iris.csv";

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "plr");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome result;
  result.code = plr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  result.out = out.str();
  result.err = err.str();
  return result;
}

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("plr_io_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator()(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const plr::Error& e) {
    return e.kind();
  }
  FAIL("expected a plr::Error");
  return ErrorKind::kNumeric;
}

json error_line(const Outcome& o) {
  REQUIRE(!o.err.empty());
  const std::string last = o.err.substr(o.err.rfind('{', o.err.find("\"error\"")));
  return json::parse(last);
}

Eigen::MatrixXd parse_predictions(const std::string& text, int classes) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    std::vector<double> row;
    for (int k = 0; k < classes; ++k) {
      std::getline(cells, cell, ',');
      row.push_back(std::stod(cell));
    }
    rows.push_back(row);
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), classes);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int k = 0; k < classes; ++k) out(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
  }
  return out;
}

}  // namespace

TEST_CASE("bundled datasets load with the expected shapes") {
  const plr::LabelledData iris = plr::load_csv(kIris, {});
  CHECK(iris.data.size() == 150);
  CHECK(iris.data.covariates() == 4);
  CHECK(iris.data.num_classes == 3);
  CHECK(iris.label_names.size() == 3);
  CHECK(iris.covariate_names.size() == 4);
  CHECK(iris.data.labels(0) == 0);

  struct Expected {
    const char* file;
    Eigen::Index n, d;
    int K;
  };
  for (const Expected& e : {Expected{"wine.csv", 178, 13, 3}, Expected{"pima.csv", 532, 7, 2},
                            Expected{"lenses.csv", 24, 4, 3}}) {
    CAPTURE(e.file);
    const plr::LabelledData data = plr::load_csv(std::string(PLR_DATA_DIR) + "/" + e.file, {});
    CHECK(data.data.size() == e.n);
    CHECK(data.data.covariates() == e.d);
    CHECK(data.data.num_classes == e.K);
  }
}

TEST_CASE("labels map by first appearance") {
  std::istringstream in("x,class\n1,b\n2,a\n3,b\n4,c\n");
  const plr::LabelledData data = plr::parse_csv(in, {});
  CHECK(data.label_names == std::vector<std::string>{"b", "a", "c"});
  CHECK(data.data.labels(0) == 0);
  CHECK(data.data.labels(1) == 1);
  CHECK(data.data.labels(3) == 2);
}

TEST_CASE("parse errors name the row and column") {
  std::string text = "x1,x2,class\n";
  for (int r = 1; r <= 9; ++r) text += r == 7 ? "0.5,,a\n" : "0.5,1.5,a\n";
  std::istringstream in(text);
  try {
    plr::parse_csv(in, {});
    FAIL("missing cell accepted");
  } catch (const plr::Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(std::string(e.what()).find("row 7") != std::string::npos);
    CHECK(std::string(e.what()).find("x2") != std::string::npos);
  }

  std::istringstream word("x1,class\n1,a\nabc,b\n");
  try {
    plr::parse_csv(word, {});
    FAIL("non-numeric cell accepted");
  } catch (const plr::Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }

  std::istringstream no_label("x1,x2\n1,2\n");
  CHECK(kind_of([&] { plr::parse_csv(no_label, {}); }) == ErrorKind::kParse);

  plr::CsvOptions known;
  known.known_labels = std::vector<std::string>{"a", "b"};
  std::istringstream unknown("x1,class\n1,a\n2,z\n");
  CHECK(kind_of([&] { plr::parse_csv(unknown, known); }) == ErrorKind::kParse);
  CHECK(kind_of([&] { plr::load_csv("/nonexistent/file.csv", {}); }) == ErrorKind::kIo);
}

TEST_CASE("single-class data is rejected for training") {
  std::istringstream in("x1,class\n1,a\n2,a\n");
  const plr::LabelledData data = plr::parse_csv(in, {});
  CHECK(kind_of([&] { plr::require_trainable(data); }) == ErrorKind::kInsufficientData);
}

TEST_CASE("exit codes are distinct per error kind") {
  std::set<int> codes;
  for (int k = 0; k <= static_cast<int>(ErrorKind::kIo); ++k) {
    const int code = plr::cli::exit_code(static_cast<ErrorKind>(k));
    CHECK(code == 10 + k);
    codes.insert(code);
  }
  CHECK(codes.size() == static_cast<std::size_t>(ErrorKind::kIo) + 1);
  for (int reserved : {plr::cli::kExitOk, plr::cli::kExitUnexpected, plr::cli::kExitUsage, plr::cli::kExitConfigFile}) {
    CHECK(codes.count(reserved) == 0);
  }
}

TEST_CASE("fit-em writes a versioned model with normalized weights and zero pattern") {
  Scratch tmp;
  const Outcome o = invoke({"fit-em", "--data", kIris, "--a", "0.5", "--b", "1", "--out", tmp("em.json")});
  REQUIRE(o.code == 0);
  const json summary = json::parse(o.out);
  CHECK(summary["command"] == "fit-em");
  CHECK(summary["zero_count"].get<int>() > 0);

  const json model = json::parse(slurp(tmp("em.json")));
  CHECK(model["format"] == "plr-model");
  CHECK(model["version"] == plr::kModelFormatVersion);
  CHECK(model["kind"] == "em");
  CHECK(model["labels"].size() == 3);
  CHECK(model["hyperparameters"]["a"] == 0.5);
  double total = 0.0;
  for (const auto& row : model["normalized_weights"]) {
    for (const auto& v : row) total += v.get<double>();
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(model["zero_pattern"].size() == summary["zero_count"].get<std::size_t>());
  CHECK(model["objective_trace"].size() >= 2);
  CHECK(model["standardization"].is_object());
}

TEST_CASE("model files reproduce predictions for every fit command") {
  Scratch tmp;
  const std::vector<std::vector<std::string>> fits{
      {"fit-em", "--a", "1.5"},
      {"fit-gibbs", "--burn-in", "50", "--samples", "100"},
      {"fit-vb", "--a", "1.5"},
      {"fit-logit", "--burn-in", "50", "--samples", "100"},
  };
  const plr::LabelledData iris = plr::load_csv(kIris, {});
  for (const auto& fit : fits) {
    CAPTURE(fit[0]);
    const std::string path = tmp(fit[0] + ".json");
    std::vector<std::string> args = fit;
    for (const std::string& extra : {std::string("--data"), kIris, std::string("--out"), path}) args.push_back(extra);
    const Outcome o = invoke(args);
    REQUIRE(o.code == 0);

    const plr::Model model = plr::load_model_file(path);
    const Eigen::MatrixXd direct = model.predict(iris.data.X);
    CHECK((direct.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

    std::stringstream buffer;
    plr::save_model(buffer, model);
    const plr::Model again = plr::load_model(buffer);
    CHECK((again.predict(iris.data.X) - direct).cwiseAbs().maxCoeff() <= 1e-12);

    const Outcome p = invoke({"predict", "--model", path, "--data", kIris});
    REQUIRE(p.code == 0);
    CHECK(p.out.rfind("row,p_", 0) == 0);
    const Eigen::MatrixXd printed = parse_predictions(p.out, 3);
    REQUIRE(printed.rows() == 150);
    CHECK((printed - direct).cwiseAbs().maxCoeff() <= 1e-12);

    const Outcome q = invoke({"predict", "--model", path, "--data", kIris, "--out", tmp("pred.csv")});
    REQUIRE(q.code == 0);
    const double error = json::parse(q.out)["misclassification"].get<double>();
    CHECK(error < 0.2);
  }
}

TEST_CASE("em model matches the library fit on the standardized design") {
  Scratch tmp;
  REQUIRE(invoke({"fit-em", "--data", kIris, "--a", "2", "--out", tmp("m.json")}).code == 0);
  const plr::Model model = plr::load_model_file(tmp("m.json"));
  plr::LabelledData iris = plr::load_csv(kIris, {});
  const plr::Standardizer s = plr::Standardizer::fit(iris.data.X);
  iris.data.X = s.apply(iris.data.X);
  const plr::Design design = plr::make_design(iris.data, plr::FeatureMap::default_map(4));
  plr::RngStream rng(1);
  const plr::EMTrace trace = plr::fit_map(design, 2.0, 1.0, {}, rng);
  CHECK((model.lambda - trace.lambda).cwiseAbs().maxCoeff() <= 1e-12 * trace.lambda.maxCoeff());
}

TEST_CASE("chain CSV header and round trip") {
  Scratch tmp;
  REQUIRE(invoke({"fit-gibbs", "--data", kIris, "--burn-in", "20", "--samples", "30", "--sample-a", "--out",
                  tmp("g.json"), "--chain-out", tmp("g.csv")})
              .code == 0);
  const std::string text = slurp(tmp("g.csv"));
  CHECK(text.rfind("draw,lambda_1_1,lambda_1_2,", 0) == 0);
  const std::string header = text.substr(0, text.find('\n'));
  CHECK(header.find("lambda_3_9,a") != std::string::npos);
  std::ifstream in(tmp("g.csv"));
  const plr::Chain chain = plr::read_chain_csv(in);
  CHECK(chain.size() == 30);
  CHECK(chain.coef_rows == 3);
  CHECK(chain.coef_cols == 9);
  CHECK(chain.hyper.size() == 30);

  REQUIRE(invoke({"fit-logit", "--data", kIris, "--burn-in", "20", "--samples", "30", "--out", tmp("l.json"),
                  "--chain-out", tmp("l.csv")})
              .code == 0);
  CHECK(slurp(tmp("l.csv")).rfind("draw,beta_1_1,", 0) == 0);

  const Outcome ess = invoke({"diagnose-ess", "--chain", tmp("g.csv"), "--normalize", "--wall-time", "2"});
  REQUIRE(ess.code == 0);
  const json report = json::parse(ess.out);
  CHECK(report["draws"] == 30);
  CHECK(report["coordinates"].size() == 27);
  CHECK(report["min_ess"].get<double>() > 0.0);
  CHECK(report["time_per_ess"].get<double>() == doctest::Approx(2.0 / report["min_ess"].get<double>()));
}

TEST_CASE("same seed gives byte-identical artifacts and the environment supplies the default") {
  Scratch tmp;
  auto fit = [&](const std::string& tag, std::vector<std::string> seed) {
    std::vector<std::string> args{"fit-gibbs", "--data", kIris, "--burn-in", "30", "--samples", "40",
                                  "--out", tmp(tag + ".json"), "--chain-out", tmp(tag + ".csv")};
    args.insert(args.begin(), seed.begin(), seed.end());
    REQUIRE(invoke(args).code == 0);
    return slurp(tmp(tag + ".json")) + slurp(tmp(tag + ".csv"));
  };
  ::unsetenv(plr::cli::kSeedVariable);
  const std::string first = fit("a", {"--seed", "7"});
  const std::string second = fit("b", {"--seed", "7"});
  const std::string other = fit("c", {"--seed", "8"});
  CHECK(first == second);
  CHECK(first != other);

  ::setenv(plr::cli::kSeedVariable, "7", 1);
  const std::string from_env = fit("d", {});
  CHECK(from_env == first);
  CHECK(fit("e", {"--seed", "8"}) == other);
  ::unsetenv(plr::cli::kSeedVariable);
  CHECK(plr::load_model_file(tmp("d.json")).seed == 7);
}

TEST_CASE("config files supply options and flags take precedence") {
  Scratch tmp;
  spit(tmp("run.toml"), "seed = 3\n[fit-em]\na = 0.5\nmax-iters = 50\n");
  REQUIRE(invoke({"--config", tmp("run.toml"), "fit-em", "--data", kIris, "--out", tmp("c1.json")}).code == 0);
  const plr::Model from_file = plr::load_model_file(tmp("c1.json"));
  CHECK(from_file.hyper_a == 0.5);
  CHECK(from_file.seed == 3);
  CHECK(from_file.iterations <= 50);

  REQUIRE(invoke({"--config", tmp("run.toml"), "fit-em", "--data", kIris, "--a", "2", "--out", tmp("c2.json")}).code ==
          0);
  CHECK(plr::load_model_file(tmp("c2.json")).hyper_a == 2.0);

  spit(tmp("bad.toml"), "[fit-em]\nalpha = 0.5\n");
  const Outcome bad = invoke({"--config", tmp("bad.toml"), "fit-em", "--data", kIris, "--out", tmp("c3.json")});
  CHECK(bad.code == plr::cli::kExitConfigFile);
  CHECK(error_line(bad)["error"]["exit_code"] == plr::cli::kExitConfigFile);
  CHECK(invoke({"--config", tmp("absent.toml"), "fit-em", "--data", kIris, "--out", tmp("c4.json")}).code ==
        plr::cli::kExitConfigFile);
}

TEST_CASE("failures are reported as one JSON line with a distinct exit code") {
  Scratch tmp;
  const Outcome unknown_flag = invoke({"fit-em", "--data", kIris, "--out", tmp("x.json"), "--bogus"});
  CHECK(unknown_flag.code == plr::cli::kExitUsage);
  CHECK(error_line(unknown_flag)["error"]["kind"] == "usage");

  const Outcome no_command = invoke({});
  CHECK(no_command.code == plr::cli::kExitUsage);

  const Outcome missing = invoke({"fit-em", "--data", tmp("absent.csv"), "--out", tmp("x.json")});
  CHECK(missing.code == plr::cli::exit_code(ErrorKind::kIo));
  const json line = error_line(missing);
  CHECK(line["error"]["kind"] == plr::to_string(ErrorKind::kIo));
  CHECK(line["error"]["exit_code"] == missing.code);
  CHECK(line["error"]["message"].get<std::string>().find("absent.csv") != std::string::npos);

  const Outcome bad_init = invoke({"fit-em", "--data", kIris, "--init", "random", "--out", tmp("x.json")});
  CHECK(bad_init.code == plr::cli::exit_code(ErrorKind::kConfig));

  const Outcome bad_a = invoke({"fit-vb", "--data", kIris, "--a", "-1", "--out", tmp("x.json")});
  CHECK(bad_a.code == plr::cli::exit_code(ErrorKind::kInvalidParameter));

  spit(tmp("holes.csv"), "x1,class\n1,a\n,b\n");
  const Outcome hole = invoke({"fit-em", "--data", tmp("holes.csv"), "--out", tmp("x.json")});
  CHECK(hole.code == plr::cli::exit_code(ErrorKind::kParse));

  spit(tmp("one.csv"), "x1,class\n1,a\n2,a\n");
  const Outcome one = invoke({"fit-em", "--data", tmp("one.csv"), "--out", tmp("x.json")});
  CHECK(one.code == plr::cli::exit_code(ErrorKind::kInsufficientData));

  spit(tmp("notjson.json"), "{");
  const Outcome model = invoke({"predict", "--model", tmp("notjson.json"), "--data", kIris});
  CHECK(model.code == plr::cli::exit_code(ErrorKind::kParse));

  const Outcome help = invoke({"--help"});
  CHECK(help.code == 0);
  for (const char* command : {"fit-em", "fit-gibbs", "fit-vb", "fit-logit", "predict", "regpath", "benchmark",
                              "diagnose-ess"}) {
    CHECK(help.out.find(command) != std::string::npos);
  }
}

TEST_CASE("regpath and benchmark commands write their artifacts") {
  Scratch tmp;
  const Outcome path = invoke({"regpath", "--data", kIris, "--out", tmp("path.csv")});
  REQUIRE(path.code == 0);
  const json summary = json::parse(path.out);
  REQUIRE(summary["points"].size() == 10);
  int previous = -1;
  for (const auto& point : summary["points"]) {
    CHECK_FALSE(point["failed"].get<bool>());
    CHECK(point["zero_count"].get<int>() >= previous);
    previous = point["zero_count"].get<int>();
  }
  CHECK(slurp(tmp("path.csv")).rfind("a,k,j,value,estimator\n", 0) == 0);

  const Outcome bench = invoke({"benchmark", "--dataset", "iris=" + kIris, "--methods", "pl-map,pl-var",
                                "--replications", "2", "--csv", tmp("bench.csv")});
  REQUIRE(bench.code == 0);
  CHECK(bench.out.find("Dataset characteristics") != std::string::npos);
  CHECK(bench.out.find("iris") != std::string::npos);
  CHECK(slurp(tmp("bench.csv")).find("pl-var") != std::string::npos);

  const Outcome bad = invoke({"benchmark", "--dataset", "iris", "--replications", "2"});
  CHECK(bad.code == plr::cli::exit_code(ErrorKind::kConfig));
}
