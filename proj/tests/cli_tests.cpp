#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include <json.hpp>

#include "support/test_util.hpp"

using kgqa::test::CommandResult;
using kgqa::test::TempDir;
using kgqa::test::fixture_path;
using kgqa::test::read_file;
using kgqa::test::run_command;
using kgqa::test::shell_quote;
using kgqa::test::write_file;

namespace {

const std::string kCli = KGQA_CLI_PATH;

std::string movie_args() {
  return " --kg " + shell_quote(fixture_path("movie.kb")) + " --templates " +
         shell_quote(fixture_path("movie.templates.tsv")) + " --projection " +
         shell_quote(fixture_path("movie.projection.txt")) +
         " --backend-decomposer mock:" + shell_quote(fixture_path("movie.plans.json")) +
         " --backend-reasoner oracle:" + shell_quote(fixture_path("movie.goldchains.tsv"));
}

std::string ambiguity_args() {
  return " --kg " + shell_quote(fixture_path("ambiguity.kb")) + " --templates " +
         shell_quote(fixture_path("ambiguity.templates.tsv")) + " --projection " +
         shell_quote(fixture_path("ambiguity.projection.txt")) +
         " --backend-decomposer mock:" + shell_quote(fixture_path("ambiguity.plans.json")) +
         " --backend-reasoner oracle:" +
         shell_quote(fixture_path("ambiguity.goldchains.tsv"));
}

const std::string kAmbiguityQuery = "who was the creator of Starlight Hall?";

}  // namespace

TEST_CASE("ingest prints corpus counts") {
  CommandResult r =
      run_command(kCli + " ingest --kg " + shell_quote(fixture_path("movie.kb")));
  CHECK(r.exit_code == 0);
  CHECK(r.output == "entities: 55\nrelations: 3\ntriplets: 62\n");
}

TEST_CASE("ingest dumps dictionaries on request") {
  TempDir dir;
  std::string entities = dir.file("entities.tsv");
  std::string relations = dir.file("relations.tsv");
  CommandResult r = run_command(
      kCli + " ingest --kg " + shell_quote(fixture_path("ambiguity.kb")) +
      " --dump-entities " + shell_quote(entities) + " --dump-relations " +
      shell_quote(relations));
  CHECK(r.exit_code == 0);
  CHECK(read_file(entities).rfind("0\tStarlight Hall\n", 0) == 0);
  CHECK(read_file(relations).rfind("0\tscribed_by\n", 0) == 0);
}

TEST_CASE("ingest reads tab-delimited graphs with --kb-format") {
  TempDir dir;
  std::string kb = dir.file("tiny.tsv");
  write_file(kb, "a\tr\tb\n");
  CommandResult r = run_command(kCli + " ingest --kb-format tab --kg " + shell_quote(kb));
  CHECK(r.exit_code == 0);
  CHECK(r.output == "entities: 2\nrelations: 1\ntriplets: 1\n");
}

TEST_CASE("mine reproduces the committed projection") {
  TempDir dir;
  std::string out = dir.file("projection.txt");
  CommandResult r = run_command(
      kCli + " mine --kg " + shell_quote(fixture_path("movie.kb")) + " --templates " +
      shell_quote(fixture_path("movie.templates.tsv")) + " --train " +
      shell_quote(fixture_path("movie.train.qa")) + " --max-hops 3 --out " +
      shell_quote(out) + " 2>/dev/null");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("pairs: 85") != std::string::npos);
  CHECK(r.output.find("pairs used: 85") != std::string::npos);
  CHECK(read_file(out) == read_file(fixture_path("movie.projection.txt")));
}

TEST_CASE("ask prints the narrative and writes a structured log") {
  TempDir dir;
  std::string log_path = dir.file("run.jsonl");
  CommandResult r = run_command(
      kCli + " ask" + movie_args() + " --log " + shell_quote(log_path) + " " +
      shell_quote("who was the director of Shockproof?"));
  CHECK(r.exit_code == 0);
  CHECK(r.output ==
        "Based on the inference results, the answer to \"who was the director of "
        "Shockproof?\" is Douglas Sirk.\n");

  std::istringstream lines(read_file(log_path));
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(lines, line)) rows.push_back(nlohmann::json::parse(line));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["type"] == "meta");
  CHECK(rows[1]["type"] == "step");
  CHECK(rows[2]["answers"] == nlohmann::json::array({"Douglas Sirk"}));
}

TEST_CASE("ask without a scripted plan reports a runtime error") {
  CommandResult r = run_command(kCli + " ask" + movie_args() + " " +
                                shell_quote("what is the tallest mountain?") +
                                " 2>&1");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("error:") != std::string::npos);
}

TEST_CASE("eval emits example rows and honors the threshold") {
  CommandResult r = run_command(
      kCli + " eval" + movie_args() + " --qa " +
      shell_quote(fixture_path("movie.test.qa")) + " 2>/dev/null | tail -1");
  CHECK(r.exit_code == 0);
  nlohmann::json footer = nlohmann::json::parse(r.output);
  CHECK(footer["type"] == "aggregate");
  CHECK(footer["examples"] == 48);
  CHECK(footer["failures"] == 0);
  CHECK(footer["hits_at_1"] == "1.000000");
  CHECK(footer["macro_f1"] == "1.000000");

  CommandResult summary = run_command(
      kCli + " eval" + movie_args() + " --qa " +
      shell_quote(fixture_path("movie.test.qa")) + " 2>&1 >/dev/null");
  CHECK(summary.output.find("examples: 48 failures: 0 hits@1: 1.000000") !=
        std::string::npos);

  CommandResult passing = run_command(
      kCli + " eval" + movie_args() + " --qa " +
      shell_quote(fixture_path("movie.test.qa")) + " --threshold 1.0 >/dev/null 2>&1");
  CHECK(passing.exit_code == 0);

  CommandResult failing = run_command(
      kCli + " eval" + ambiguity_args() + " --top-k 1 --qa " +
      shell_quote(fixture_path("ambiguity.qa")) + " --threshold 0.5 >/dev/null 2>&1");
  CHECK(failing.exit_code == 1);
}

TEST_CASE("eval writes results to --out") {
  TempDir dir;
  std::string out = dir.file("results.jsonl");
  CommandResult r = run_command(
      kCli + " eval" + movie_args() + " --qa " +
      shell_quote(fixture_path("movie.test.qa")) + " --out " + shell_quote(out) +
      " 2>/dev/null");
  CHECK(r.exit_code == 0);
  std::string results = read_file(out);
  CHECK(results.find("\"type\":\"aggregate\"") != std::string::npos);
}

TEST_CASE("sweep prints the frozen ambiguity table") {
  CommandResult r = run_command(kCli + " sweep" + ambiguity_args() + " --qa " +
                                shell_quote(fixture_path("ambiguity.qa")) +
                                " --k-list 1,2 2>/dev/null");
  CHECK(r.exit_code == 0);
  CHECK(r.output ==
        "k\thits_at_1\tmacro_f1\ttotal_candidates\n"
        "1\t0.000000\t0.000000\t0\n"
        "2\t1.000000\t1.000000\t3\n");
}

TEST_CASE("flags beat the config file, which beats the defaults") {
  TempDir dir;
  std::string config = dir.file("kgqa.conf");

  // Default top-k is 3: both templates execute and the creator question hits.
  CommandResult by_default =
      run_command(kCli + " ask" + ambiguity_args() + " " + shell_quote(kAmbiguityQuery));
  CHECK(by_default.exit_code == 0);
  CHECK(by_default.output.find("Wendy Okafor") != std::string::npos);

  // The config file narrows the search to one template and the answer is lost.
  write_file(config, "# local settings\ntop-k = 1\n");
  CommandResult with_config =
      run_command(kCli + " ask" + ambiguity_args() + " --config " + shell_quote(config) +
                  " " + shell_quote(kAmbiguityQuery));
  CHECK(with_config.exit_code == 0);
  CHECK(with_config.output.find("Wendy Okafor") == std::string::npos);
  CHECK(with_config.output.find("can't make it") != std::string::npos);

  // An explicit flag overrides the config file.
  CommandResult with_flag =
      run_command(kCli + " ask" + ambiguity_args() + " --config " + shell_quote(config) +
                  " --top-k 2 " + shell_quote(kAmbiguityQuery));
  CHECK(with_flag.exit_code == 0);
  CHECK(with_flag.output.find("Wendy Okafor") != std::string::npos);
}

TEST_CASE("usage problems exit with code 2") {
  CHECK(run_command(kCli + " 2>/dev/null").exit_code == 2);
  CHECK(run_command(kCli + " transmogrify 2>/dev/null").exit_code == 2);
  CHECK(run_command(kCli + " eval" + movie_args() + " 2>/dev/null").exit_code == 2);
  CHECK(run_command(kCli + " ask --kg missing.kb " + shell_quote("q?") + " 2>/dev/null")
            .exit_code == 2);
  CHECK(run_command(kCli + " ask" + movie_args() + " --top-k 0 " + shell_quote("q?") +
                    " 2>/dev/null")
            .exit_code == 2);
  CHECK(run_command(kCli + " ask" + movie_args() + " --max-hops 9 " + shell_quote("q?") +
                    " 2>/dev/null")
            .exit_code == 2);
  CHECK(run_command(kCli + " eval" + movie_args() + " --qa " +
                    shell_quote(fixture_path("movie.test.qa")) +
                    " --threshold 1.5 2>/dev/null")
            .exit_code == 2);
  CHECK(run_command(kCli + " sweep" + ambiguity_args() + " --qa " +
                    shell_quote(fixture_path("ambiguity.qa")) +
                    " --k-list 0,2 2>/dev/null")
            .exit_code == 2);

  TempDir dir;
  std::string config = dir.file("bad.conf");
  write_file(config, "unknown-key = 5\n");
  CHECK(run_command(kCli + " ask" + movie_args() + " --config " + shell_quote(config) +
                    " " + shell_quote("q?") + " 2>/dev/null")
            .exit_code == 2);
}

TEST_CASE("runtime problems exit with code 1") {
  CommandResult missing_kb = run_command(
      kCli + " ingest --kg /nonexistent/path.kb 2>/dev/null");
  CHECK(missing_kb.exit_code == 1);

  TempDir dir;
  std::string broken = dir.file("broken.kb");
  write_file(broken, "only|two\n");
  CommandResult bad_kb =
      run_command(kCli + " ingest --kg " + shell_quote(broken) + " 2>/dev/null");
  CHECK(bad_kb.exit_code == 1);
}

TEST_CASE("help prints usage and exits cleanly") {
  CommandResult r = run_command(kCli + " --help");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("ingest") != std::string::npos);
  CHECK(r.output.find("ask") != std::string::npos);
}
