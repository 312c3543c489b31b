#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "planpaint/cli.hpp"
#include "planpaint/metrics.hpp"
#include "planpaint/record_io.hpp"

namespace pp = planpaint;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) { return pp::read_text_file(path); }

int cli(std::initializer_list<std::string> args) {
  return pp::run_cli(std::vector<std::string>(args));
}

struct TmpTree {
  std::string root;
  explicit TmpTree(std::string name) : root(std::move(name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TmpTree() { fs::remove_all(root); }
  std::string operator/(const std::string& leaf) const {
    return root + "/" + leaf;
  }
};

const std::vector<std::string> kTinyNet = {
    "--denoiser.depth=2",          "--denoiser.base_channels=[8,16]",
    "--denoiser.attention_levels=[1]", "--denoiser.norm_groups=4",
    "--denoiser.K=5",              "--denoiser.embed_dim=4",
    "--denoiser.text_embed_dim=8", "--denoiser.timestep_embed_dim=16",
    "--denoiser.head_dim=8",       "--episode.horizon=4",
};

int cli_with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTinyNet.begin(), kTinyNet.end());
  return pp::run_cli(args);
}

}  // namespace

TEST_SUITE("properties") {
  TEST_CASE("gen-data is byte-for-byte deterministic per seed") {
    TmpTree t("cli_gen_tmp");
    REQUIRE(cli({"gen-data", "--n", "20", "--out", t / "a", "--seed", "5"}) ==
            0);
    REQUIRE(cli({"gen-data", "--n", "20", "--out", t / "b", "--seed", "5"}) ==
            0);
    REQUIRE(cli({"gen-data", "--n", "20", "--out", t / "c", "--seed", "6"}) ==
            0);
    CHECK(slurp(t / "a/episodes.bin") == slurp(t / "b/episodes.bin"));
    CHECK(slurp(t / "a/manifest.json") == slurp(t / "b/manifest.json"));
    CHECK(slurp(t / "a/episodes.bin") != slurp(t / "c/episodes.bin"));
  }

  TEST_CASE("train+eval is deterministic end to end per seed") {
    TmpTree t("cli_e2e_tmp");
    REQUIRE(cli({"gen-data", "--n", "8", "--out", t / "ds", "--seed", "3"}) ==
            0);
    REQUIRE(cli_with_tiny({"train", "--data", t / "ds", "--out", t / "run",
                           "--seed", "3", "--train.epochs=1",
                           "--train.batch_size=8"}) == 0);
    const std::vector<std::string> eval_args = {
        "--checkpoint", t / "run/checkpoint", "--n",   "3",
        "--seed",       "3",                  "--sampler.steps=2",
        "--planner.max_env_steps=5"};
    auto eval_to = [&](const std::string& out) {
      std::vector<std::string> a = {"eval"};
      a.insert(a.end(), eval_args.begin(), eval_args.end());
      a.push_back("--out");
      a.push_back(out);
      return cli_with_tiny(a);
    };
    REQUIRE(eval_to(t / "e1") == 0);
    REQUIRE(eval_to(t / "e2") == 0);
    CHECK(slurp(t / "e1/logs.jsonl") == slurp(t / "e2/logs.jsonl"));
    CHECK(slurp(t / "e1/report.json") == slurp(t / "e2/report.json"));
  }
}

TEST_SUITE("unit") {
  TEST_CASE("gen-data with no episodes is a hard error") {
    TmpTree t("cli_zero_tmp");
    CHECK(cli({"gen-data", "--n", "0", "--out", t / "none"}) != 0);
    CHECK(!fs::exists(t / "none/manifest.json"));
  }

  TEST_CASE("unknown config keys are rejected") {
    TmpTree t("cli_badkey_tmp");
    CHECK(cli({"gen-data", "--n", "2", "--out", t / "x",
               "--grid.heigth=8"}) == 1);  // typo'd key
    CHECK(cli({"gen-data", "--n", "2", "--out", t / "x",
               "--set", "nonsense=1"}) == 1);
  }

  TEST_CASE("existing outputs require --force") {
    TmpTree t("cli_force_tmp");
    REQUIRE(cli({"gen-data", "--n", "2", "--out", t / "d"}) == 0);
    const std::string before = slurp(t / "d/episodes.bin");
    CHECK(cli({"gen-data", "--n", "3", "--out", t / "d"}) == 1);
    CHECK(slurp(t / "d/episodes.bin") == before);  // untouched
    CHECK(cli({"gen-data", "--n", "3", "--out", t / "d", "--force"}) == 0);
    CHECK(slurp(t / "d/episodes.bin") != before);
  }

  TEST_CASE("config file merges under overrides") {
    TmpTree t("cli_cfg_tmp");
    pp::write_text_file(t / "cfg.json",
                        "{\"seed\": 9, \"grid.n_objects\": 3}");
    REQUIRE(cli({"gen-data", "--n", "2", "--out", t / "d", "--config",
                 t / "cfg.json"}) == 0);
    // Bad config key fails loudly.
    pp::write_text_file(t / "bad.json", "{\"grid.nope\": 1}");
    CHECK(cli({"gen-data", "--n", "2", "--out", t / "d2", "--config",
               t / "bad.json"}) == 1);
  }

  TEST_CASE("report recount matches the eval-time report") {
    TmpTree t("cli_report_tmp");
    REQUIRE(cli({"gen-data", "--n", "6", "--out", t / "ds", "--seed", "4"}) ==
            0);
    REQUIRE(cli_with_tiny({"train", "--data", t / "ds", "--out", t / "run",
                           "--seed", "4", "--train.epochs=1",
                           "--train.batch_size=6"}) == 0);
    REQUIRE(cli_with_tiny({"eval", "--checkpoint", t / "run/checkpoint",
                           "--n", "2", "--seed", "4", "--out", t / "ev",
                           "--sampler.steps=2",
                           "--planner.max_env_steps=4"}) == 0);
    REQUIRE(cli({"report", "--in", t / "ev", "--out", t / "recount.json"}) ==
            0);
    const pp::MetricReport a =
        pp::metric_report_from_json(slurp(t / "ev/report.json"));
    const pp::MetricReport b =
        pp::metric_report_from_json(slurp(t / "recount.json"));
    CHECK(a.sr == doctest::Approx(b.sr));
    CHECK(a.gd_mean == doctest::Approx(b.gd_mean));
    CHECK(a.path_f1 == doctest::Approx(b.path_f1));
    CHECK(a.n_episodes == b.n_episodes);
  }

  TEST_CASE("render skips blank log lines with a warning exit 0") {
    TmpTree t("cli_render_tmp");
    REQUIRE(cli({"gen-data", "--n", "4", "--out", t / "ds", "--seed", "8"}) ==
            0);
    REQUIRE(cli_with_tiny({"train", "--data", t / "ds", "--out", t / "run",
                           "--seed", "8", "--train.epochs=1",
                           "--train.batch_size=4"}) == 0);
    REQUIRE(cli_with_tiny({"eval", "--checkpoint", t / "run/checkpoint",
                           "--n", "2", "--seed", "8", "--out", t / "ev",
                           "--sampler.steps=2",
                           "--planner.max_env_steps=4"}) == 0);
    // Inject a blank line between the two logs.
    const std::string logs = slurp(t / "ev/logs.jsonl");
    const size_t cut = logs.find('\n');
    REQUIRE(cut != std::string::npos);
    pp::write_text_file(t / "ev/logs.jsonl", logs.substr(0, cut + 1) + "\n" +
                                                 logs.substr(cut + 1));
    CHECK(cli({"render", "--in", t / "ev", "--out", t / "imgs"}) == 0);
    int ppms = 0;
    for (const auto& e : fs::directory_iterator(t / "imgs"))
      ppms += e.path().extension() == ".ppm";
    CHECK(ppms == 2);  // both real logs rendered, blank skipped
  }

  TEST_CASE("usage errors exit with code 2") {
    CHECK(cli({"no-such-command"}) == 2);
    CHECK(cli({}) == 2);
    CHECK(cli({"train"}) == 2);  // missing required --data
  }
}
