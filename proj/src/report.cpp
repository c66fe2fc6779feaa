#include "bnnfi/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "bnnfi/error.hpp"

namespace bnnfi {

namespace {

constexpr Outcome kAllOutcomes[] = {Outcome::Masked, Outcome::MsbOnly, Outcome::Tolerable,
                                    Outcome::Critical, Outcome::Crash};

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

using Cell = std::variant<std::string, double, std::int64_t>;

void append_counts(std::vector<Cell>& row, const OutcomeCounts& c) {
  row.emplace_back(static_cast<std::int64_t>(c.total()));
  for (auto o : kAllOutcomes) row.emplace_back(static_cast<std::int64_t>(c[o]));
  row.emplace_back(c.no_error_percent());
  row.emplace_back(c.percent(Outcome::Tolerable));
  row.emplace_back(c.percent(Outcome::Crash));
  row.emplace_back(c.percent(Outcome::Critical));
}

const std::vector<std::string>& count_columns() {
  static const std::vector<std::string> cols = {
      "injected", "masked", "msb_only", "tolerable", "critical", "crash",
      "no_error_pct", "tolerable_pct", "crash_pct", "critical_pct"};
  return cols;
}

std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* d = std::get_if<double>(&c)) return fixed(*d, 4);
  return std::to_string(std::get<std::int64_t>(c));
}

std::size_t transient_reg(const RunRecord& r) {
  const auto* t = std::get_if<TransientFault>(&r.fault.target);
  if (!t) throw DataError("register analysis requires transient records");
  return t->reg_id;
}

}  // namespace

std::uint64_t OutcomeCounts::total() const noexcept {
  std::uint64_t s = 0;
  for (auto v : n) s += v;
  return s;
}

double OutcomeCounts::percent(Outcome o) const noexcept {
  const auto t = total();
  return t == 0 ? 0.0 : 100.0 * static_cast<double>((*this)[o]) / static_cast<double>(t);
}

double OutcomeCounts::no_error_percent() const noexcept {
  const auto t = total();
  return t == 0 ? 0.0 : 100.0 * static_cast<double>(no_error()) / static_cast<double>(t);
}

OutcomeCounts& OutcomeCounts::operator+=(const OutcomeCounts& other) noexcept {
  for (std::size_t i = 0; i < n.size(); ++i) n[i] += other.n[i];
  return *this;
}

RateTable per_layer_table(const std::vector<RunRecord>& records, const std::vector<std::size_t>& layers) {
  if (records.empty()) throw DataError("per_layer_table: no records");
  std::map<std::size_t, OutcomeCounts> by_layer;
  for (auto l : layers) by_layer[l];
  OutcomeCounts total;
  for (const auto& r : records) {
    by_layer[r.layer].add(r.outcome);
    total.add(r.outcome);
  }
  RateTable t;
  t.rows.push_back(RateRow{"Total", std::nullopt, total});
  for (const auto& [layer, counts] : by_layer) {
    t.rows.push_back(RateRow{"L" + std::to_string(layer), layer, counts});
  }
  return t;
}

std::string render_rate_table(const RateTable& table) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "Scope" << std::right << std::setw(12) << "Injected"
     << std::setw(12) << "Tolerable%" << std::setw(10) << "Crash%" << std::setw(11) << "Critical%"
     << '\n';
  for (const auto& row : table.rows) {
    os << std::left << std::setw(8) << row.scope << std::right << std::setw(12) << row.counts.total()
       << std::setw(12) << fixed(row.counts.percent(Outcome::Tolerable), 2) << std::setw(10)
       << fixed(row.counts.percent(Outcome::Crash), 2) << std::setw(11)
       << fixed(row.counts.percent(Outcome::Critical), 2) << '\n';
  }
  return os.str();
}

OutcomeCounts PhaseBreakdown::phase_total(std::size_t phase) const {
  OutcomeCounts t;
  for (const auto& [layer, c] : cells.at(phase)) t += c;
  return t;
}

PhaseBreakdown per_phase_breakdown(const std::vector<RunRecord>& records, const PhaseTable& phases) {
  PhaseBreakdown b;
  b.phases = phases;
  b.cells.resize(phases.phases.size());
  for (const auto& r : records) {
    const auto* t = std::get_if<TransientFault>(&r.fault.target);
    if (!t) throw DataError("per_phase_breakdown: persistent record in a phase analysis");
    const auto phase = phases.phase_of(t->cycle);
    if (!phase) {
      throw DataError("per_phase_breakdown: cycle " + std::to_string(t->cycle) + " lies outside every phase");
    }
    b.cells[*phase][r.layer].add(r.outcome);
  }
  return b;
}

RegisterHistogram per_register_histogram(const std::vector<RunRecord>& records) {
  RegisterHistogram h;
  for (const auto& r : records) h[transient_reg(r)].add(r.outcome);
  return h;
}

std::vector<RankedRegister> top_critical_registers(const RegisterHistogram& hist, std::size_t k) {
  std::vector<RankedRegister> ranked;
  for (const auto& [reg, c] : hist) ranked.push_back(RankedRegister{reg, c[Outcome::Critical]});
  std::sort(ranked.begin(), ranked.end(), [](const RankedRegister& a, const RankedRegister& b) {
    if (a.critical != b.critical) return a.critical > b.critical;
    return a.reg_id < b.reg_id;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

ExclusionReport critical_rate_excluding(const std::vector<RunRecord>& records,
                                        const std::set<std::size_t>& excluded_registers) {
  ExclusionReport rep;
  std::uint64_t critical = 0;
  for (const auto& r : records) {
    ++rep.total;
    if (r.outcome != Outcome::Critical) continue;
    ++critical;
    if (excluded_registers.count(transient_reg(r))) ++rep.excluded_critical;
  }
  if (rep.total > 0) {
    rep.critical_percent_before = 100.0 * static_cast<double>(critical) / static_cast<double>(rep.total);
    rep.critical_percent_after =
        100.0 * static_cast<double>(critical - rep.excluded_critical) / static_cast<double>(rep.total);
  }
  return rep;
}

bool CampaignComparison::all_within() const noexcept {
  return std::all_of(deltas.begin(), deltas.end(), [](const ClassDelta& d) { return d.within_moe; });
}

CampaignComparison compare_campaigns(const std::vector<RunRecord>& statistical,
                                     const std::vector<RunRecord>& exhaustive, double moe) {
  if (statistical.empty() || exhaustive.empty()) throw DataError("compare_campaigns: empty record set");
  std::set<std::pair<std::size_t, std::uint64_t>> space;
  const bool transient = exhaustive.front().fault.transient();
  for (const auto& r : exhaustive) {
    if (r.fault.transient() != transient) throw DataError("compare_campaigns: mixed fault spaces");
    space.emplace(r.input_index, r.fault.fault_uid);
  }
  for (const auto& r : statistical) {
    if (r.fault.transient() != transient || !space.count({r.input_index, r.fault.fault_uid})) {
      throw DataError("compare_campaigns: statistical records are not drawn from the exhaustive space");
    }
  }
  OutcomeCounts s;
  OutcomeCounts e;
  for (const auto& r : statistical) s.add(r.outcome);
  for (const auto& r : exhaustive) e.add(r.outcome);

  CampaignComparison cmp;
  cmp.moe_percent = 100.0 * moe;
  auto push = [&](Outcome o, double sp, double ep) {
    const double d = std::abs(sp - ep);
    cmp.deltas.push_back(ClassDelta{o, sp, ep, d, d <= cmp.moe_percent + 1e-12});
  };
  push(Outcome::Masked, s.no_error_percent(), e.no_error_percent());
  for (auto o : {Outcome::Tolerable, Outcome::Crash, Outcome::Critical}) push(o, s.percent(o), e.percent(o));
  return cmp;
}

ReportTable to_report(const RateTable& table) {
  ReportTable r;
  r.kind = "layer";
  r.columns = {"scope", "layer"};
  r.columns.insert(r.columns.end(), count_columns().begin(), count_columns().end());
  for (const auto& row : table.rows) {
    std::vector<Cell> cells{row.scope, static_cast<std::int64_t>(row.layer ? static_cast<std::int64_t>(*row.layer) : -1)};
    append_counts(cells, row.counts);
    r.rows.push_back(std::move(cells));
  }
  return r;
}

ReportTable to_report(const PhaseBreakdown& breakdown) {
  ReportTable r;
  r.kind = "phase";
  r.columns = {"phase", "start", "end", "layer"};
  r.columns.insert(r.columns.end(), count_columns().begin(), count_columns().end());
  for (std::size_t p = 0; p < breakdown.cells.size(); ++p) {
    const auto& ph = breakdown.phases.phases[p];
    for (const auto& [layer, counts] : breakdown.cells[p]) {
      std::vector<Cell> cells{static_cast<std::int64_t>(p + 1), static_cast<std::int64_t>(ph.start_cycle),
                              static_cast<std::int64_t>(ph.end_cycle), static_cast<std::int64_t>(layer)};
      append_counts(cells, counts);
      r.rows.push_back(std::move(cells));
    }
  }
  return r;
}

ReportTable to_report(const RegisterHistogram& hist, const std::map<std::size_t, std::string>& labels) {
  ReportTable r;
  r.kind = "register";
  r.columns = {"reg_id", "label"};
  r.columns.insert(r.columns.end(), count_columns().begin(), count_columns().end());
  for (const auto& [reg, counts] : hist) {
    const auto it = labels.find(reg);
    std::vector<Cell> cells{static_cast<std::int64_t>(reg),
                            it != labels.end() ? it->second : "reg" + std::to_string(reg)};
    append_counts(cells, counts);
    r.rows.push_back(std::move(cells));
  }
  return r;
}

ExportFormat parse_export_format(std::string_view name) {
  if (name == "csv") return ExportFormat::Csv;
  if (name == "json") return ExportFormat::Json;
  if (name == "plotdata") return ExportFormat::PlotData;
  throw ConfigError("unknown export format '" + std::string(name) + "' (csv, json, plotdata)");
}

std::string export_report(const ReportTable& table, ExportFormat format) {
  std::ostringstream os;
  switch (format) {
    case ExportFormat::Csv: {
      for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
      os << '\n';
      for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << cell_text(row[i]);
        os << '\n';
      }
      break;
    }
    case ExportFormat::Json: {
      nlohmann::ordered_json j;
      j["kind"] = table.kind;
      j["columns"] = table.columns;
      j["rows"] = nlohmann::ordered_json::array();
      for (const auto& row : table.rows) {
        nlohmann::ordered_json obj;
        for (std::size_t i = 0; i < row.size(); ++i) {
          std::visit([&](const auto& v) { obj[table.columns[i]] = v; }, row[i]);
        }
        j["rows"].push_back(obj);
      }
      os << j.dump(2) << '\n';
      break;
    }
    case ExportFormat::PlotData: {
      // Numeric columns only, whitespace separated, '#' header.
      std::vector<std::size_t> numeric;
      for (std::size_t i = 0; i < table.columns.size(); ++i) {
        const bool is_text = !table.rows.empty() && std::holds_alternative<std::string>(table.rows.front()[i]);
        if (!is_text && table.columns[i] != "scope" && table.columns[i] != "label") numeric.push_back(i);
      }
      os << '#';
      for (auto i : numeric) os << ' ' << table.columns[i];
      os << '\n';
      for (const auto& row : table.rows) {
        for (std::size_t k = 0; k < numeric.size(); ++k) os << (k ? " " : "") << cell_text(row[numeric[k]]);
        os << '\n';
      }
      break;
    }
  }
  return os.str();
}

void export_report(const ReportTable& table, ExportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << export_report(table, format);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace bnnfi
