#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "bnnfi/dataflow.hpp"
#include "bnnfi/fault.hpp"

namespace bnnfi {

struct OutcomeCounts {
  std::array<std::uint64_t, kOutcomeCount> n{};

  void add(Outcome o) noexcept { ++n[static_cast<std::size_t>(o)]; }
  std::uint64_t operator[](Outcome o) const noexcept { return n[static_cast<std::size_t>(o)]; }
  std::uint64_t total() const noexcept;
  /// Masked plus MsbOnly, the "no error" bucket of summary tables.
  std::uint64_t no_error() const noexcept { return (*this)[Outcome::Masked] + (*this)[Outcome::MsbOnly]; }
  /// 100 * count / total, 0 for an empty scope.
  double percent(Outcome o) const noexcept;
  double no_error_percent() const noexcept;

  OutcomeCounts& operator+=(const OutcomeCounts& other) noexcept;
  friend bool operator==(const OutcomeCounts&, const OutcomeCounts&) = default;
};

struct RateRow {
  std::string scope;  // "Total" or "L<k>"
  std::optional<std::size_t> layer;
  OutcomeCounts counts;
};

/// Total row first, then one row per layer in ascending order.
struct RateTable {
  std::vector<RateRow> rows;
};

/// Rates per layer and in total. `layers` forces rows for layers without records.
/// Throws DataError on an empty record set.
RateTable per_layer_table(const std::vector<RunRecord>& records,
                          const std::vector<std::size_t>& layers = {});

/// Fixed-width text rendering with tolerable / crash / critical percentages.
std::string render_rate_table(const RateTable& table);

struct PhaseBreakdown {
  PhaseTable phases;
  /// cells[phase][layer]
  std::vector<std::map<std::size_t, OutcomeCounts>> cells;

  OutcomeCounts phase_total(std::size_t phase) const;
};

/// Assigns each transient record to the phase containing its injection cycle.
/// Throws DataError for persistent records or cycles outside every phase.
PhaseBreakdown per_phase_breakdown(const std::vector<RunRecord>& records, const PhaseTable& phases);

using RegisterHistogram = std::map<std::size_t, OutcomeCounts>;

RegisterHistogram per_register_histogram(const std::vector<RunRecord>& records);

struct RankedRegister {
  std::size_t reg_id = 0;
  std::uint64_t critical = 0;
};

/// Ranked by Critical count (descending), ties by reg_id (ascending).
std::vector<RankedRegister> top_critical_registers(const RegisterHistogram& hist, std::size_t k);

struct ExclusionReport {
  double critical_percent_before = 0.0;
  double critical_percent_after = 0.0;
  std::uint64_t excluded_critical = 0;
  std::uint64_t total = 0;
};

/// Total Critical rate with and without the Critical faults of the given registers; the
/// denominator stays the full injection count.
ExclusionReport critical_rate_excluding(const std::vector<RunRecord>& records,
                                        const std::set<std::size_t>& excluded_registers);

struct ClassDelta {
  Outcome outcome = Outcome::Masked;  // Masked stands for Masked + MsbOnly
  double statistical_percent = 0.0;
  double exhaustive_percent = 0.0;
  double delta = 0.0;  // |statistical - exhaustive| in percentage points
  bool within_moe = false;
};

struct CampaignComparison {
  double moe_percent = 0.0;
  std::vector<ClassDelta> deltas;
  bool all_within() const noexcept;
};

/// Throws DataError when the statistical records are not drawn from the exhaustive space.
CampaignComparison compare_campaigns(const std::vector<RunRecord>& statistical,
                                     const std::vector<RunRecord>& exhaustive, double moe);

/// Generic tabular form shared by every exporter.
struct ReportTable {
  std::string kind;
  std::vector<std::string> columns;
  std::vector<std::vector<std::variant<std::string, double, std::int64_t>>> rows;
};

ReportTable to_report(const RateTable& table);
ReportTable to_report(const PhaseBreakdown& breakdown);
/// `labels` maps reg_id to a printable name; missing ids print as "reg<id>".
ReportTable to_report(const RegisterHistogram& hist, const std::map<std::size_t, std::string>& labels = {});

enum class ExportFormat { Csv, Json, PlotData };
ExportFormat parse_export_format(std::string_view name);

std::string export_report(const ReportTable& table, ExportFormat format);
void export_report(const ReportTable& table, ExportFormat format, const std::filesystem::path& path);

/// Minimal CSV reader for files produced by export_report (no quoting).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace bnnfi
