#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <json.hpp>

#include "polytx/error.hpp"
#include "polytx/experiment.hpp"
#include "polytx/report.hpp"
#include "test_util.hpp"

using namespace polytx;

namespace {

std::string code_name(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return std::string(error_code_name(e.code()));
  }
  return "none";
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

const char* kWideHeader =
    "init,mode,fraction,property,folds,train_rel_rmse_mean,train_rel_rmse_std,test_rel_rmse_mean,test_rel_rmse_std,"
    "train_r2_mean,train_r2_std,test_r2_mean,test_r2_std\n";

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("bundled reference table") {
    const auto refs = load_references(testing::data_path("reference_metrics.csv"));
    const auto* eat = refs.find("polyBERT", property_index("Eat"), "test_rel_rmse");
    REQUIRE(eat != nullptr);
    CHECK(eat->display() == "0.065±0.0050");
    CHECK(eat->mean == 0.065);
    const auto* egc = refs.find("polyBERT", property_index("Egc"), "test_rel_rmse");
    REQUIRE(egc != nullptr);
    CHECK(egc->display() == "0.048±0.0040");
    const auto* xc = refs.find("TransPolymer", property_index("Xc"), "test_rel_rmse");
    REQUIRE(xc != nullptr);
    CHECK(xc->display() == "0.166");
    CHECK(refs.find("nobody", 0, "test_r2") == nullptr);
    const auto& models = refs.models();
    CHECK(std::find(models.begin(), models.end(), "polyBERT") != models.end());
    CHECK(std::set<std::string>(models.begin(), models.end()).size() == models.size());
  }

  TEST_CASE("reference parsing is strict") {
    CHECK(code_name([] { parse_references("model,property\n"); }) == "BadFormat");
    CHECK(code_name([] { parse_references("model,property,metric,mean,std\nx,Eat,mae,1,\n"); }) == "BadFormat");
    CHECK(code_name([] { parse_references("model,property,metric,mean,std\nx,Tg,test_r2,1,\n"); }) == "BadConfig");
    CHECK(code_name([] { parse_references("model,property,metric,mean,std\nx,Eat,test_r2,abc,\n"); }) == "BadFormat");
  }

  TEST_CASE("missing or empty results are reported") {
    const auto dir = testing::scratch_dir("report_empty");
    CHECK(code_name([&] { load_results(dir); }) == "MissingResults");
    CHECK(code_name([&] { load_results(dir / "absent"); }) == "MissingResults");
    write_file(dir / "other.csv", "a,b\n1,2\n");
    CHECK(code_name([&] { load_results(dir); }) == "MissingResults");
  }

  TEST_CASE("comparison table: 8 rows, beat flags and formatting") {
    const auto dir = testing::scratch_dir("report_full");
    write_file(dir / "metrics.csv", std::string(kWideHeader) +
                                        "random,mt,1,Eat,5,0.01,0.001,0.050,0.0020,0.99,0.001,0.90,0.010\n"
                                        "random,mt,1,Egc,5,0.01,0.001,0.060,0.0030,0.99,0.001,0.70,0.020\n");
    const auto results = load_results(dir);
    REQUIRE(results.size() == 2);
    const auto refs = load_references(testing::data_path("reference_metrics.csv"));
    const auto tables = build_comparison(results, refs);
    REQUIRE(tables.size() == 1);
    const auto& t = tables[0];
    CHECK(t.init == "random");
    CHECK(t.mode == "mt");
    REQUIRE(t.rows.size() == 8);
    for (std::size_t p = 0; p < 8; ++p) CHECK(t.rows[p].property == p);

    const auto& eat = t.rows[property_index("Eat")];
    REQUIRE(eat.rel_rmse.has_value());
    bool saw_polybert = false;
    for (const auto& cell : eat.references) {
      if (cell.model != "polyBERT") continue;
      saw_polybert = true;
      CHECK(cell.beats_rel_rmse);  // 0.050 < 0.065
    }
    CHECK(saw_polybert);
    for (const auto& cell : t.rows[property_index("Egc")].references) {
      if (cell.model == "polyBERT") CHECK(!cell.beats_rel_rmse);  // 0.060 > 0.048
    }
    CHECK(!t.rows[property_index("Xc")].rel_rmse.has_value());

    const auto md = format_comparison(tables, refs);
    CHECK(md.find("0.050±0.0020") != std::string::npos);
    CHECK(md.find("0.065±0.0050 *") != std::string::npos);
    CHECK(md.find("| property |") != std::string::npos);

    write_comparison_csv(dir / "out.csv", tables);
    std::ifstream in(dir / "out.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "init,mode,fraction,property,source,metric,value,beats");
  }

  TEST_CASE("sweep files are read, test split only") {
    const auto rows = parse_results_csv(
        "init,mode,fraction,property,split,metric,mean,std\n"
        "random,st,0.5,Ei,train,rel_rmse,0.01,0.001\n"
        "random,st,0.5,Ei,test,rel_rmse,0.08,0.004\n"
        "random,st,0.5,Ei,test,r2,0.6,0.05\n");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].fraction == "0.5");
    CHECK(rows[0].test_rel_rmse->mean == 0.08);
    CHECK(rows[0].test_r2->std == 0.05);
  }

  TEST_CASE("experiment validation and manifest") {
    const auto dir = testing::scratch_dir("manifest");
    ExperimentConfig c;
    c.command = "evaluate";
    c.out_dir = dir;
    c.inputs = {{"data", testing::data_path("dft_sample.csv")}};
    c.encoder = desk_preset(29);
    c.train = finetune_defaults();
    c.fractions = {0.0, 0.5, 1.0};
    c.seed = 7;
    CHECK_NOTHROW(c.validate());

    const std::vector<std::filesystem::path> outputs = {dir / "metrics.csv"};
    const auto j = nlohmann::json::parse(manifest_json(c, outputs, 1.25));
    CHECK(j["command"] == "evaluate");
    CHECK(j["seed"] == 7);
    CHECK(j["version"].get<std::string>().rfind("0.3.0+", 0) == 0);
    CHECK(j["encoder"]["hidden"] == 128);
    CHECK(j["train"]["epochs"] == 600);
    CHECK(j["fractions"].size() == 3);
    CHECK(j["outputs"][0] == "metrics.csv");
    CHECK(j["wall_seconds"] == 1.25);
    CHECK(manifest_json(c, outputs, 1.25) == manifest_json(c, outputs, 1.25));

    const auto path = write_manifest(c, outputs, 2.0);
    CHECK(path.filename() == "manifest_evaluate.json");
    CHECK(std::filesystem::exists(path));

    auto bad = c;
    bad.inputs.push_back({"vocab", dir / "absent.txt"});
    CHECK(code_name([&] { bad.validate(); }) == "IoError");
    bad = c;
    bad.preset = "giant";
    CHECK(code_name([&] { bad.validate(); }) == "BadConfig");
    bad = c;
    bad.folds = 1;
    CHECK(code_name([&] { bad.validate(); }) == "BadConfig");
  }
}
