#include <doctest.h>

#include <json.hpp>

#include "bnnfi/campaign.hpp"
#include "bnnfi/error.hpp"
#include "bnnfi/random.hpp"
#include "bnnfi/report.hpp"
#include "toy.hpp"

using namespace bnnfi;

namespace {

RunRecord rec(std::size_t reg, std::size_t cycle, std::size_t layer, Outcome o, std::uint64_t uid = 0) {
  RunRecord r;
  r.fault = FaultDescriptor{uid, TransientFault{reg, 0, cycle}};
  r.layer = layer;
  r.outcome = o;
  return r;
}

std::vector<RunRecord> synthetic_layer(std::size_t layer, std::size_t total, std::size_t crit, std::size_t tol,
                                       std::size_t crash) {
  std::vector<RunRecord> v;
  for (std::size_t i = 0; i < total; ++i) {
    Outcome o = Outcome::Masked;
    if (i < crit) o = Outcome::Critical;
    else if (i < crit + tol) o = Outcome::Tolerable;
    else if (i < crit + tol + crash) o = Outcome::Crash;
    v.push_back(rec(layer, 1 + i % 10, layer, o, i));
  }
  return v;
}

std::vector<RunRecord> toy_records() {
  const Model m = generate_model(toy::small(), 3);
  CampaignConfig c;
  c.mode = CampaignMode::Statistical;
  c.confidence = 0.95;
  c.moe = 0.02;
  c.seed = 1;
  Rng rng(7);
  Campaign camp(c, m, {random_bits(32, rng)});
  return camp.run_all();
}

}  // namespace

TEST_CASE("per-layer rates") {
  const auto recs = synthetic_layer(0, 100, 2, 5, 1);
  const auto t = per_layer_table(recs);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].scope == "Total");
  CHECK(t.rows[1].scope == "L0");
  CHECK(t.rows[1].counts.percent(Outcome::Critical) == doctest::Approx(2.0));
  CHECK(t.rows[1].counts.percent(Outcome::Tolerable) == doctest::Approx(5.0));
  CHECK(t.rows[1].counts.percent(Outcome::Crash) == doctest::Approx(1.0));

  const auto masked = per_layer_table(synthetic_layer(1, 40, 0, 0, 0), {0, 1});
  REQUIRE(masked.rows.size() == 3);
  for (const auto& row : masked.rows) {
    CHECK(row.counts.percent(Outcome::Critical) == 0.0);
    CHECK(row.counts.percent(Outcome::Tolerable) == 0.0);
    CHECK(row.counts.percent(Outcome::Crash) == 0.0);
  }
  CHECK(masked.rows[1].counts.total() == 0);
  CHECK_THROWS_AS(per_layer_table({}), DataError);
}

TEST_CASE("rate table formatting") {
  // 10000 injections with 498 / 106 / 23 events render as 4.98 / 1.06 / 0.23.
  const auto t = per_layer_table(synthetic_layer(0, 10000, 23, 498, 106));
  const auto text = render_rate_table(t);
  CHECK(text.find("Total          10000        4.98      1.06       0.23") != std::string::npos);
  CHECK(text.rfind("Scope", 0) == 0);
}

TEST_CASE("aggregations conserve the record count and are idempotent") {
  const auto recs = toy_records();
  const auto layers = per_layer_table(recs);
  std::uint64_t by_layer = 0;
  for (std::size_t i = 1; i < layers.rows.size(); ++i) by_layer += layers.rows[i].counts.total();
  CHECK(by_layer == recs.size());
  CHECK(layers.rows[0].counts.total() == recs.size());

  const auto hist = per_register_histogram(recs);
  std::uint64_t by_reg = 0;
  for (const auto& [reg, c] : hist) by_reg += c.total();
  CHECK(by_reg == recs.size());

  const auto m = generate_model(toy::small(), 3);
  Rng rng(7);
  const auto golden = compute_golden(m, random_bits(32, rng), {}, false);
  const auto phases = per_phase_breakdown(recs, phase_table(golden.windows, golden.latency));
  std::uint64_t by_phase = 0;
  std::map<std::size_t, std::uint64_t> layer_from_phases;
  for (std::size_t p = 0; p < phases.cells.size(); ++p) {
    by_phase += phases.phase_total(p).total();
    for (const auto& [layer, c] : phases.cells[p]) layer_from_phases[layer] += c.total();
  }
  CHECK(by_phase == recs.size());
  for (std::size_t i = 1; i < layers.rows.size(); ++i) {
    CHECK(layer_from_phases[*layers.rows[i].layer] == layers.rows[i].counts.total());
  }

  CHECK(export_report(to_report(per_layer_table(recs)), ExportFormat::Csv) ==
        export_report(to_report(layers), ExportFormat::Csv));
  CHECK(export_report(to_report(per_register_histogram(recs)), ExportFormat::Json) ==
        export_report(to_report(hist), ExportFormat::Json));
}

TEST_CASE("phase attribution") {
  PhaseTable t{{{1, 5, {0}}, {6, 10, {0, 1}}, {11, 12, {1}}}};
  const auto b = per_phase_breakdown({rec(0, 7, 0, Outcome::Critical), rec(1, 12, 1, Outcome::Masked)}, t);
  CHECK(b.phase_total(0).total() == 0);
  CHECK(b.phase_total(1)[Outcome::Critical] == 1);
  CHECK(b.phase_total(2).total() == 1);
  CHECK_THROWS_AS(per_phase_breakdown({rec(0, 13, 0, Outcome::Masked)}, t), DataError);
}

TEST_CASE("register histogram ranking and exclusion") {
  const auto single = per_register_histogram({rec(4, 1, 0, Outcome::Tolerable)});
  REQUIRE(single.size() == 1);
  CHECK(single.at(4)[Outcome::Tolerable] == 1);

  std::vector<RunRecord> recs;
  for (int i = 0; i < 3; ++i) recs.push_back(rec(2, 1, 0, Outcome::Critical));
  for (int i = 0; i < 3; ++i) recs.push_back(rec(5, 1, 0, Outcome::Critical));
  recs.push_back(rec(1, 1, 0, Outcome::Critical));
  for (int i = 0; i < 13; ++i) recs.push_back(rec(0, 1, 0, Outcome::Masked));
  const auto top = top_critical_registers(per_register_histogram(recs), 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].reg_id == 2);
  CHECK(top[1].reg_id == 5);
  CHECK(top[2].reg_id == 1);
  CHECK(top_critical_registers(per_register_histogram(recs), 3)[0].reg_id == 2);

  const auto ex = critical_rate_excluding(recs, {2, 5});
  CHECK(ex.total == 20);
  CHECK(ex.critical_percent_before == doctest::Approx(35.0));
  CHECK(ex.critical_percent_after == doctest::Approx(5.0));
  CHECK(ex.excluded_critical == 6);
}

TEST_CASE("campaign comparison") {
  const auto recs = toy_records();
  const auto same = compare_campaigns(recs, recs, 0.02);
  CHECK(same.all_within());
  for (const auto& d : same.deltas) CHECK(d.delta == 0.0);
  std::vector<RunRecord> foreign = {rec(999, 1, 0, Outcome::Masked, 99999999)};
  CHECK_THROWS_AS(compare_campaigns(foreign, recs, 0.02), DataError);
}

TEST_CASE("CSV export round-trips") {
  const auto table = to_report(per_layer_table(synthetic_layer(0, 100, 2, 5, 1)));
  const auto text = export_report(table, ExportFormat::Csv);
  const auto rows = parse_csv(text);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == table.columns);
  CHECK(rows[0].front() == "scope");
  CHECK(rows[2][0] == "L0");
  CHECK(rows[2][2] == "100");
  CHECK(std::stod(rows[2].back()) == doctest::Approx(2.0));
}

TEST_CASE("empty report exports a header only") {
  const auto table = to_report(RegisterHistogram{});
  const auto csv = export_report(table, ExportFormat::Csv);
  CHECK(parse_csv(csv).size() == 1);
  CHECK(csv.back() == '\n');
  toy::TempDir dir;
  export_report(table, ExportFormat::Csv, dir / "empty.csv");
  CHECK(std::filesystem::file_size(dir / "empty.csv") == csv.size());
  CHECK_THROWS(export_report(table, ExportFormat::Csv, dir / "missing" / "x.csv"));
}

TEST_CASE("JSON export schema") {
  const auto table = to_report(per_register_histogram(toy_records()), {{3, "L0.weight_addr"}});
  const auto j = nlohmann::json::parse(export_report(table, ExportFormat::Json));
  REQUIRE(j.is_object());
  CHECK(j.at("kind").get<std::string>() == "register");
  const auto columns = j.at("columns").get<std::vector<std::string>>();
  CHECK(columns == table.columns);
  REQUIRE(j.at("rows").is_array());
  CHECK(j["rows"].size() == table.rows.size());
  for (const auto& row : j["rows"]) {
    CHECK(row.size() == columns.size());
    for (const auto& c : columns) CHECK(row.contains(c));
    CHECK(row.at("injected").is_number_integer());
    CHECK(row.at("critical_pct").is_number());
  }
}

TEST_CASE("plotdata export keeps numeric columns") {
  const auto table = to_report(per_layer_table(synthetic_layer(0, 100, 2, 5, 1)));
  const auto text = export_report(table, ExportFormat::PlotData);
  CHECK(text.rfind("# ", 0) == 0);
  CHECK(text.find("Total") == std::string::npos);
  CHECK(parse_export_format("plotdata") == ExportFormat::PlotData);
  CHECK_THROWS_AS(parse_export_format("xlsx"), ConfigError);
}
