#include <cstdlib>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "hm/features.hpp"
#include "hm/io.hpp"
#include "hm/seg_metrics.hpp"
#include "json.hpp"
#include "metric_oracles.hpp"
#include "support.hpp"

using namespace hm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome hm_run(std::vector<std::string> args) {
  args.insert(args.begin(), "hm");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Synthesizes one slide through the CLI and returns its directory.
fs::path synth_slide(const std::string& name, std::uint64_t seed, const std::string& mask_format = "pgm") {
  const fs::path dir = test::scratch_dir(name);
  write_file((dir / "config.json").string(), write_synth_config(test::random_config(seed, 900, true)));
  const Outcome o = hm_run({"synth", (dir / "config.json").string(), "--out-dir", (dir / "slide").string(),
                            "--mask-format", mask_format});
  REQUIRE_MESSAGE(o.code == 0, o.err);
  return dir / "slide";
}

void write_instance_pair(const fs::path& dir, const std::string& stem, const InstanceLabelMap& m) {
  write_file((dir / (stem + ".pgm")).string(), write_pgm16(GrayImage{m.width, m.height, m.ids}));
  write_file((dir / (stem + ".json")).string(), write_instance_classes(m));
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help, version and missing subcommand") {
    CHECK(hm_run({"--help"}).code == cli::kExitOk);
    const Outcome v = hm_run({"--version"});
    CHECK(v.code == cli::kExitOk);
    CHECK(v.out.find("hm 1.0.0") != std::string::npos);
    CHECK(hm_run({}).code == cli::kExitUsage);
    CHECK(hm_run({"frobnicate"}).code == cli::kExitUsage);
  }

  TEST_CASE("features reproduces the library and ignores worker count") {
    const fs::path s = synth_slide("cli_features", 3);
    const std::vector<std::string> base{"features", "--cells", (s / "cells.json").string(), "--mask",
                                        (s / "mask.pgm").string(), "--meta", (s / "meta.json").string()};
    auto with = [&](std::vector<std::string> extra) {
      auto v = base;
      v.insert(v.end(), extra.begin(), extra.end());
      return hm_run(v);
    };
    const Outcome one = with({"--workers", "1"});
    REQUIRE_MESSAGE(one.code == 0, one.err);
    CHECK(with({"--workers", "8"}).out == one.out);
    const SynthConfig cfg = parse_synth_config(read_file((s.parent_path() / "config.json").string()));
    const SynthSlide synth = generate(cfg);
    CHECK(one.out == write_feature_vector(extract_features(test::align(synth, cfg.vicinity_um), default_registry())) + "\n");

    const fs::path out = s.parent_path() / "fv.json";
    CHECK(with({"--out", out.string()}).code == 0);
    CHECK(read_file(out.string()) == one.out);
  }

  TEST_CASE("features accepts an RLE mask with explicit geometry") {
    const fs::path s = synth_slide("cli_rle", 5, "rle");
    const Outcome o = hm_run({"features", "--cells", (s / "cells.json").string(), "--mask", (s / "mask.rle").string(),
                              "--meta", (s / "meta.json").string()});
    CHECK_MESSAGE(o.code == 0, o.err);
    CHECK(o.out.find("\"schema\"") != std::string::npos);
  }

  TEST_CASE("features usage errors") {
    const fs::path s = synth_slide("cli_features_usage", 4);
    const std::string cells = (s / "cells.json").string(), mask = (s / "mask.pgm").string();
    CHECK(hm_run({"features", "--cells", cells, "--mask", mask, "--downsample", "32"}).code == cli::kExitUsage);
    CHECK(hm_run({"features", "--cells", cells, "--mask", mask, "--mpp", "1"}).code == cli::kExitUsage);
    CHECK(hm_run({"features", "--cells", cells, "--mask", (s / "nope.pgm").string(), "--mpp", "1", "--downsample", "32"})
              .code == cli::kExitUsage);
    CHECK(hm_run({"features", "--cells", cells, "--mask", mask, "--mpp", "1", "--downsample", "32", "--workers", "-1"})
              .code == cli::kExitUsage);
    const Outcome ok = hm_run({"features", "--cells", cells, "--mask", mask, "--mpp", "1", "--downsample", "32"});
    CHECK_MESSAGE(ok.code == 0, ok.err);

    write_file((s / "bad.json").string(), R"({"cells":[{"id":1}]})");
    const Outcome bad = hm_run({"features", "--cells", (s / "bad.json").string(), "--mask", mask, "--mpp", "1",
                                "--downsample", "32"});
    CHECK(bad.code == cli::kExitFailure);
    const auto err = nlohmann::json::parse(bad.err);
    CHECK(err["status"] == "error");
    CHECK(err["command"] == "features");
  }

  TEST_CASE("HM_WORKERS is validated") {
    const fs::path s = synth_slide("cli_env", 6);
    const std::vector<std::string> args{"features", "--cells", (s / "cells.json").string(), "--mask",
                                        (s / "mask.pgm").string(), "--meta", (s / "meta.json").string()};
    ::setenv("HM_WORKERS", "lots", 1);
    CHECK(hm_run(args).code == cli::kExitUsage);
    ::setenv("HM_WORKERS", "3", 1);
    CHECK(hm_run(args).code == cli::kExitOk);
    ::unsetenv("HM_WORKERS");
  }

  TEST_CASE("select: planted cohort, determinism, bad input") {
    const fs::path dir = test::scratch_dir("cli_select");
    const std::string csv = (dir / "cohort.csv").string();
    write_file(csv, write_cohort_csv(test::orthogonal_planted_cohort(8, 2, 5, 3, 4)));
    const Outcome a = hm_run({"select", csv, "--folds", "3", "--seed", "4", "--workers", "1"});
    REQUIRE_MESSAGE(a.code == 0, a.err);
    const auto report = nlohmann::json::parse(a.out);
    CHECK(report["n_best"] == 2);
    CHECK(report["feature_scores"][0]["c"] == 3);
    CHECK(hm_run({"select", csv, "--folds", "3", "--seed", "4", "--workers", "8"}).out == a.out);
    CHECK(hm_run({"select", "--cohort", csv, "--method", "mannwhitney"}).code == cli::kExitOk);
    CHECK(hm_run({"select", csv, "--folds", "1"}).code == cli::kExitUsage);
    CHECK(hm_run({"select", csv, "--method", "lasso"}).code == cli::kExitUsage);
    write_file((dir / "bad.csv").string(), "sample_id,label,f\na,1,oops\n");
    CHECK(hm_run({"select", (dir / "bad.csv").string()}).code == cli::kExitFailure);
    write_file((dir / "ragged.csv").string(), "sample_id,label,f\na,1\n");
    CHECK(hm_run({"select", (dir / "ragged.csv").string()}).code == cli::kExitFailure);
  }

  TEST_CASE("metrics over directories") {
    const fs::path dir = test::scratch_dir("cli_metrics");
    for (const char* d : {"pred", "gt", "empty", "other"}) fs::create_directories(dir / d);
    Engine e = make_engine(71);
    for (int i = 0; i < 4; ++i) {
      const auto [pred, gt] = test::random_instance_pair(e);
      write_instance_pair(dir / "pred", "tile" + std::to_string(i), gt);
      write_instance_pair(dir / "gt", "tile" + std::to_string(i), gt);
    }
    const Outcome same = hm_run({"metrics", "--pred", (dir / "pred").string(), "--gt", (dir / "gt").string()});
    REQUIRE_MESSAGE(same.code == 0, same.err);
    const auto r = nlohmann::json::parse(same.out);
    CHECK(r["mpq"] == 1.0);
    CHECK(r["macro_f1"] == 1.0);
    CHECK(r["images"] == 4);
    CHECK(hm_run({"metrics", "--pred", (dir / "pred").string(), "--gt", (dir / "gt").string(), "--aggregate", "pooled"})
              .code == 0);

    CHECK(hm_run({"metrics", "--pred", (dir / "empty").string(), "--gt", (dir / "gt").string()}).code == cli::kExitUsage);
    write_instance_pair(dir / "other", "tile0", test::paint(5, 5, {}));
    CHECK(hm_run({"metrics", "--pred", (dir / "other").string(), "--gt", (dir / "gt").string()}).code ==
          cli::kExitFailure);
    CHECK(hm_run({"metrics", "--pred", (dir / "pred" / "tile0.pgm").string(), "--gt", (dir / "gt").string()}).code ==
          cli::kExitUsage);

    // Semantic mode on single files.
    BinaryMask m(8, 8);
    m.set(2, 3, true);
    write_file((dir / "a.pgm").string(), write_mask_pgm(m));
    const Outcome sem = hm_run({"metrics", "--pred", (dir / "a.pgm").string(), "--gt", (dir / "a.pgm").string(),
                                "--mode", "semantic"});
    REQUIRE_MESSAGE(sem.code == 0, sem.err);
    CHECK(nlohmann::json::parse(sem.out)["miou"] == 1.0);
  }

  TEST_CASE("synth output re-ingests") {
    const fs::path s = synth_slide("cli_synth", 12);
    for (const char* f : {"cells.json", "mask.pgm", "meta.json", "truth.json"}) CHECK(fs::exists(s / f));
    CHECK_NOTHROW(parse_cells(read_file((s / "cells.json").string())));
    CHECK_NOTHROW(parse_mask_pgm(read_file((s / "mask.pgm").string())));
    const MetaFields meta = parse_meta(read_file((s / "meta.json").string()));
    CHECK(meta.vicinity_um);
  }

  TEST_CASE("overestimate") {
    const Outcome o = hm_run({"overestimate", "2", "200000", "--seed", "3"});
    REQUIRE_MESSAGE(o.code == 0, o.err);
    const auto j = nlohmann::json::parse(o.out);
    CHECK(j["n"] == 2);
    CHECK(j["trials"] == 200000);
    CHECK((j["probability"].get<double>() > 0.0 && j["probability"].get<double>() < 0.05));
    CHECK(hm_run({"overestimate", "--n", "2", "--trials", "1000"}).code == cli::kExitUsage);
    CHECK(hm_run({"overestimate", "0"}).code == cli::kExitUsage);
  }
}
