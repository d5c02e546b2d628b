// End-to-end coverage of the command-line surface: subcommands, exit codes,
// JSON outputs, schema flags, manifests, and worker-count reproducibility.
// The binary path arrives as argv[1].
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aftmed/dataset.hpp"
#include "aftmed/csv.hpp"
#include "aftmed/rng.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_dir;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const fs::path out_path = g_dir / "stdout.txt";
  const std::string cmd =
      g_cli + " " + args + " > " + out_path.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(raw);
  std::ifstream in(out_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  r.out = buffer.str();
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Mediated survival data with right and interval censoring, written as CSV.
fs::path write_sample_csv(const std::string& name, std::size_t n,
                          std::uint64_t seed) {
  using namespace aftmed;
  RngStream rng(seed, 0);
  std::vector<Subject> subjects;
  for (std::size_t i = 0; i < n; ++i) {
    Subject s;
    s.exposure = (rng.uniform() < 0.5) ? 1.0 : 0.0;
    s.mediator = 0.1 - 0.4 * s.exposure + rng.normal();
    s.covariates = {rng.normal()};
    const double response =
        1.5 + 0.6 * s.exposure - 0.5 * s.mediator + 0.2 * s.covariates[0] +
        0.7 * rng.normal();
    const double u = rng.uniform();
    if (u < 0.25) {
      s.outcome = SurvivalOutcome::right_censored(
          std::exp(response) * (0.3 + 0.6 * rng.uniform()));
    } else if (u < 0.45) {
      s.outcome = SurvivalOutcome::interval(std::exp(response - 0.3),
                                            std::exp(response + 0.4));
    } else {
      s.outcome = SurvivalOutcome::exact(std::exp(response));
    }
    subjects.push_back(std::move(s));
  }
  const fs::path path = g_dir / name;
  CsvSchema schema;
  schema.covariates = {"age"};
  write_csv(Dataset(std::move(subjects), {"age"}), path, schema);
  return path;
}

}  // namespace

TEST_CASE("version and usage behave like a well-mannered tool") {
  CHECK(run_cli("--version").exit_code == 0);
  CHECK(run_cli("").exit_code == 1);            // a subcommand is required
  CHECK(run_cli("frobnicate").exit_code == 1);  // unknown subcommand
  const RunResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.out.find("fit") != std::string::npos);
  CHECK(help.out.find("mediate") != std::string::npos);
  CHECK(help.out.find("simulate") != std::string::npos);
  CHECK(help.out.find("score-bias") != std::string::npos);
}

TEST_CASE("fit emits a parseable model summary and writes a manifest") {
  const fs::path csv = write_sample_csv("fit_sample.csv", 500, 11);
  const fs::path manifest_path = g_dir / "fit_manifest.json";
  const std::string common =
      " --law weibull --covariate-col age --data " + csv.string();

  const RunResult outcome = run_cli("fit --model outcome" + common +
                                    " --manifest " + manifest_path.string());
  REQUIRE(outcome.exit_code == 0);
  const json j = json::parse(outcome.out);
  CHECK(j.at("model") == "outcome");
  CHECK(j.at("converged") == true);
  CHECK(j.at("coefficients").contains("(intercept)"));
  CHECK(j.at("coefficients").contains("exposure"));
  CHECK(j.at("coefficients").contains("mediator"));
  CHECK(j.at("coefficients").contains("age"));
  CHECK(j.at("coefficients").at("exposure").at("se").get<double>() > 0.0);
  CHECK(j.at("scale").get<double>() > 0.0);
  CHECK(j.at("censoring").at("n") == 500);
  CHECK(j.at("censoring").at("right_censored").get<int>() > 0);
  CHECK(j.at("censoring").at("interval_censored").get<int>() > 0);

  const RunResult reduced = run_cli("fit --model reduced" + common);
  REQUIRE(reduced.exit_code == 0);
  const json jr = json::parse(reduced.out);
  CHECK(jr.at("converged") == true);
  CHECK_FALSE(jr.at("coefficients").contains("mediator"));

  const RunResult mediator = run_cli("fit --model mediator" + common);
  REQUIRE(mediator.exit_code == 0);
  const json jm = json::parse(mediator.out);
  CHECK(jm.at("coefficients").contains("exposure"));
  CHECK(jm.at("residual_sd").get<double>() > 0.0);

  const json m = json::parse(read_file(manifest_path));
  CHECK(m.at("command") == "fit");
  CHECK(m.at("config_digest").get<std::string>().size() == 16);
  CHECK(m.contains("finished_at"));
}

TEST_CASE("a schema file renames columns, with explicit flags overriding") {
  // Same data, nonstandard column names.
  const fs::path base = write_sample_csv("schema_base.csv", 120, 14);
  std::string text = read_file(base);
  const std::string expected_header = "time1,time2,exposure,mediator,age";
  REQUIRE(text.rfind(expected_header, 0) == 0);
  text.replace(0, expected_header.size(), "t_lo,t_hi,arm,marker,age");
  const fs::path renamed = g_dir / "schema_renamed.csv";
  std::ofstream(renamed, std::ios::binary) << text;

  const fs::path schema = g_dir / "cols.schema";
  std::ofstream(schema) << "# column mapping\n"
                        << "exposure = arm\n"
                        << "mediator = marker\n"
                        << "time = t_lo\n"
                        << "time2 = t_hi\n"
                        << "covariates = age\n";

  const RunResult r = run_cli("fit --model outcome --law normal --data " +
                              renamed.string() + " --schema " +
                              schema.string());
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("coefficients").contains("exposure"));
  CHECK(j.at("coefficients").contains("age"));

  // An explicit flag must win over the schema file.
  const fs::path schema_wrong = g_dir / "cols_wrong.schema";
  std::ofstream(schema_wrong) << "exposure = nope\nmediator = marker\n"
                              << "time = t_lo\ntime2 = t_hi\n"
                              << "covariates = age\n";
  CHECK(run_cli("fit --model reduced --law normal --data " + renamed.string() +
                " --schema " + schema_wrong.string())
            .exit_code == 2);
  CHECK(run_cli("fit --model reduced --law normal --data " + renamed.string() +
                " --schema " + schema_wrong.string() + " --exposure-col arm")
            .exit_code == 0);

  // Unknown keys and missing files are data errors.
  const fs::path schema_bad = g_dir / "cols_bad.schema";
  std::ofstream(schema_bad) << "frobnicate = x\n";
  CHECK(run_cli("fit --model reduced --law normal --data " + renamed.string() +
                " --schema " + schema_bad.string())
            .exit_code == 2);
  CHECK(run_cli("fit --model reduced --law normal --data " + renamed.string() +
                " --schema /nope/missing.schema")
            .exit_code == 2);
}

TEST_CASE("fit failures map to the documented exit codes") {
  CHECK(run_cli("fit --data /nope/missing.csv --law normal").exit_code == 2);
  CHECK(run_cli("fit --law normal").exit_code == 1);  // --data is required
  const fs::path csv = write_sample_csv("fit_badcol.csv", 60, 12);
  CHECK(run_cli("fit --data " + csv.string() +
                " --law normal --exposure-col wrong")
            .exit_code == 2);
  CHECK(run_cli("fit --data " + csv.string() + " --law cauchy").exit_code == 1);
}

TEST_CASE("mediate reports the decomposition with its identities intact") {
  const fs::path csv = write_sample_csv("mediate_sample.csv", 400, 21);
  const fs::path out_a = g_dir / "mediate_a.json";
  const RunResult r = run_cli(
      "mediate --data " + csv.string() +
      " --law normal --covariate-col age --contrast 1,0 --bootstrap 60 "
      "--seed 5 --out " + out_a.string());
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(read_file(out_a));

  const double nde = j.at("effects").at("nde").at("estimate");
  const double nie_p = j.at("effects").at("nie_product").at("estimate");
  const double nie_d = j.at("effects").at("nie_difference").at("estimate");
  const double tot_p = j.at("effects").at("total_product").at("estimate");
  const double tot_d = j.at("effects").at("total_difference").at("estimate");
  CHECK(tot_p == nde + nie_p);
  CHECK(nie_d == tot_d - nde);
  CHECK(j.at("effects").at("nde").contains("time_ratio"));
  CHECK(j.at("effects").at("nie_difference").at("se_method") == "bootstrap");
  CHECK(j.at("bootstrap").at("requested") == 60);

  // Same seed, more workers: byte-identical output file.
  const fs::path out_b = g_dir / "mediate_b.json";
  const RunResult r2 = run_cli(
      "mediate --data " + csv.string() +
      " --law normal --covariate-col age --contrast 1,0 --bootstrap 60 "
      "--seed 5 --workers 3 --out " + out_b.string());
  REQUIRE(r2.exit_code == 0);
  CHECK(read_file(out_a) == read_file(out_b));

  // Different seed: different bootstrap intervals.
  const fs::path out_c = g_dir / "mediate_c.json";
  REQUIRE(run_cli("mediate --data " + csv.string() +
                  " --law normal --covariate-col age --contrast 1,0 "
                  "--bootstrap 60 --seed 6 --out " + out_c.string())
              .exit_code == 0);
  CHECK(read_file(out_a) != read_file(out_c));
}

TEST_CASE("mediate under the extreme-value law flags the reduced total") {
  const fs::path csv = write_sample_csv("mediate_flag.csv", 300, 31);
  const RunResult r = run_cli("mediate --data " + csv.string() +
                              " --law weibull --covariate-col age");
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("effects").at("total_difference").at("flagged") == true);
  CHECK(j.at("effects").at("total_difference").contains("note"));
}

TEST_CASE("simulate is reproducible across worker counts, byte for byte") {
  const fs::path csv_a = g_dir / "sim_a.csv";
  const fs::path csv_b = g_dir / "sim_b.csv";
  const RunResult a = run_cli(
      "simulate --scenario weibull --n 250 --replicates 10 --seed 42 "
      "--workers 1 --per-replicate " + csv_a.string());
  REQUIRE(a.exit_code == 0);
  const RunResult b = run_cli(
      "simulate --scenario weibull --n 250 --replicates 10 --seed 42 "
      "--workers 4 --per-replicate " + csv_b.string());
  REQUIRE(b.exit_code == 0);

  const std::string bytes_a = read_file(csv_a);
  CHECK(bytes_a.size() > 100);
  CHECK(bytes_a == read_file(csv_b));
  CHECK(bytes_a.rfind("replicate,converged,nde,nie_product,nie_difference,"
                      "total_reduced,censored_fraction",
                      0) == 0);

  const json ja = json::parse(a.out);
  const json jb = json::parse(b.out);
  CHECK(ja == jb);
  CHECK(ja.at("replicates_converged") == 10);
  CHECK(ja.at("replicates_nonconverged") == 0);
  CHECK(ja.at("censor_model").at("active") == true);
  CHECK(ja.at("true_indirect_effect") == doctest::Approx(0.18));
  CHECK(ja.at("mean_censored_fraction").get<double>() > 0.15);
}

TEST_CASE("simulate writes tidy figure data when asked") {
  const fs::path out = g_dir / "figure.csv";
  const RunResult r = run_cli(
      "simulate --scenario normal --censoring none --n 150 --replicates 4 "
      "--seed 9 --out " + out.string());
  REQUIRE(r.exit_code == 0);
  const std::string text = read_file(out);
  CHECK(text.rfind("scenario,n,metric,value", 0) == 0);
  CHECK(text.find("normal,150,") != std::string::npos);
}

TEST_CASE("a scenario config file reproduces the preset it spells out") {
  // Spell out the weibull preset field by field; the run must match the
  // preset byte for byte (same generator, same streams).
  const fs::path config = g_dir / "weibull.scenario";
  std::ofstream(config) << "# weibull preset, written out longhand\n"
                        << "name = weibull\n"
                        << "outcome_law = weibull\n"
                        << "alpha0 = 0\n"
                        << "alpha_a = -0.3\n"
                        << "mediator_sd = 1\n"
                        << "beta0 = 4\n"
                        << "beta_a = 0.5\n"
                        << "beta_m = -0.6\n"
                        << "sigma = 0.25\n"
                        << "exposure_prob = 0.5\n"
                        << "censoring = right\n"
                        << "target_fraction = 0.30\n";
  const RunResult from_config = run_cli(
      "simulate --config " + config.string() +
      " --n 200 --replicates 5 --seed 77");
  REQUIRE(from_config.exit_code == 0);
  const RunResult from_preset = run_cli(
      "simulate --scenario weibull --n 200 --replicates 5 --seed 77");
  REQUIRE(from_preset.exit_code == 0);
  CHECK(from_config.out == from_preset.out);

  // Bare config defaults stay uncensored and tiny runs work.
  const fs::path minimal = g_dir / "minimal.scenario";
  std::ofstream(minimal) << "n = 120\nreplicates = 3\nseed = 5\n";
  const RunResult small = run_cli("simulate --config " + minimal.string());
  REQUIRE(small.exit_code == 0);
  const json js = json::parse(small.out);
  CHECK(js.at("scenario") == "custom");
  CHECK(js.at("censor_model").at("active") == false);
  CHECK(js.at("mean_censored_fraction").get<double>() == 0.0);

  // Unknown keys are data errors; the preset flag conflicts with a file.
  const fs::path bad = g_dir / "bad.scenario";
  std::ofstream(bad) << "gamma = 1\n";
  CHECK(run_cli("simulate --config " + bad.string()).exit_code == 2);
  CHECK(run_cli("simulate --config " + config.string() +
                " --scenario weibull")
            .exit_code == 1);
}

TEST_CASE("score-bias provides expected scores, probes, and clean errors") {
  SUBCASE("normal preset is correctly specified: zero expected score") {
    const RunResult r = run_cli("score-bias --scenario normal --mode expected-score");
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(std::abs(j.at("expected_score_beta").get<double>()) < 1e-8);
  }
  SUBCASE("weibull preset probe reproduces the demonstration bias") {
    const RunResult r = run_cli("score-bias --scenario weibull --mode probe");
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(j.at("converged") == true);
    const double bias = j.at("exposure_bias");
    CHECK(std::abs(bias) / 0.18 > 0.30);
    CHECK(std::abs(bias) / 0.18 < 0.60);
    CHECK(j.at("config").at("censor").at("kind") == "law");
  }
  SUBCASE("explicit uncensored misspecification keeps the slope") {
    const RunResult r = run_cli(
        "score-bias --true-law convolved --component weibull "
        "--outcome-scale 0.25 --mediator-coef -0.6 --mediator-sd 1 "
        "--assumed-law weibull --alpha 4 --beta 0.68 --mode probe");
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(std::abs(j.at("exposure_bias").get<double>()) < 1e-8);
  }
  SUBCASE("fixed and law censoring flags are mutually exclusive") {
    const RunResult r = run_cli(
        "score-bias --true-law weibull --assumed-law weibull --alpha 4 "
        "--beta 0.68 --censor-time 90 --censor-law weibull "
        "--censor-location 4.77 --censor-scale 0.25");
    CHECK(r.exit_code == 1);
  }
}

TEST_CASE("score-bias grid sweeps censoring quantiles into a CSV surface") {
  const std::string base =
      "score-bias --true-law convolved --component weibull "
      "--outcome-scale 0.25 --mediator-coef -0.6 --mediator-sd 1 "
      "--assumed-law weibull --alpha 4 --beta 0.68";

  const fs::path surface = g_dir / "surface.csv";
  const RunResult r = run_cli(base + " --grid-quantiles 0.5,1 --grid-beta "
                                     "0,0.68 --out " + surface.string());
  REQUIRE(r.exit_code == 0);
  const std::string text = read_file(surface);
  REQUIRE(text.rfind("variable,quantile,beta,log_threshold,expected_score,",
                     0) == 0);

  // Parse rows into (quantile, beta, log_threshold, expected_score).
  struct Row {
    double q, beta, log_threshold, score;
    bool converged;
  };
  std::vector<Row> rows;
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::vector<std::string> fields;
    while (std::getline(cells, cell, ',')) {
      fields.push_back(cell);
    }
    REQUIRE(fields.size() == 11);
    rows.push_back(Row{std::stod(fields[1]), std::stod(fields[2]),
                       std::stod(fields[3]), std::stod(fields[4]),
                       fields[10] == "true"});
  }
  REQUIRE(rows.size() == 4);

  double median_threshold = 0.0;
  double median_score = 0.0;
  for (const Row& row : rows) {
    CHECK(row.converged);
    if (row.q == 1.0) {
      // No censoring: consistency holds even under misspecification.
      CHECK(std::abs(row.score) < 1e-8);
      CHECK(row.log_threshold ==
            std::numeric_limits<double>::infinity());
    }
    if (row.beta == 0.0) {
      // A null exposure effect is never biased by the misspecification.
      CHECK(std::abs(row.score) < 1e-8);
    }
    if (row.q == 0.5 && row.beta == 0.68) {
      // Median censoring + misspecification: clearly nonzero.
      CHECK(std::abs(row.score) > 1e-7);
      median_threshold = row.log_threshold;
      median_score = row.score;
    }
  }

  // Single source of truth: the same threshold through the single-config
  // path reproduces the grid row's expected score bit for bit.
  char ct[64];
  std::snprintf(ct, sizeof ct, "%.17g", std::exp(median_threshold));
  const RunResult single = run_cli(base + " --mode expected-score "
                                          "--censor-time " + ct);
  REQUIRE(single.exit_code == 0);
  const json js = json::parse(single.out);
  CHECK(js.at("expected_score_beta").get<double>() == median_score);

  // Byte-identical on rerun.
  const fs::path surface2 = g_dir / "surface2.csv";
  REQUIRE(run_cli(base + " --grid-quantiles 0.5,1 --grid-beta 0,0.68 --out " +
                  surface2.string())
              .exit_code == 0);
  CHECK(read_file(surface2) == text);

  // Truncation surface: entry at quantile 0 is the untruncated boundary.
  const RunResult trunc = run_cli(base + " --grid-variable truncation "
                                         "--grid-quantiles 0,0.3");
  REQUIRE(trunc.exit_code == 0);
  std::istringstream tlines(trunc.out);
  std::getline(tlines, line);
  REQUIRE(line.rfind("variable,quantile,beta,", 0) == 0);
  while (std::getline(tlines, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::vector<std::string> fields;
    while (std::getline(cells, cell, ',')) {
      fields.push_back(cell);
    }
    REQUIRE(fields.size() == 11);
    CHECK(fields[0] == "truncation");
    const double q = std::stod(fields[1]);
    const double score = std::stod(fields[4]);
    if (q == 0.0) {
      CHECK(std::abs(score) < 1e-8);
    } else {
      CHECK(std::abs(score) > 1e-7);
    }
  }

  // The grid excludes explicit censoring placement.
  CHECK(run_cli(base + " --grid-quantiles 0.5 --censor-time 60").exit_code ==
        1);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path-to-cli> [doctest args]\n");
    return 2;
  }
  g_cli = argv[1];
  g_dir = fs::temp_directory_path() / "aftmed_cli_tests";
  fs::create_directories(g_dir);

  doctest::Context context;
  context.applyCommandLine(argc - 1, argv + 1);
  const int rc = context.run();
  fs::remove_all(g_dir);
  return rc;
}
