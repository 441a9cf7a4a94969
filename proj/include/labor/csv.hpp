#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "labor/panel.hpp"

namespace labor {

enum class CsvFormat { long_form, wide_form };

// Column naming for ingest. The canonical long format is
// region_code,region_kind,date,variable,value with date = YYYY-MM (monthly)
// or YYYY (annual). The kind column is optional and defaults to department.
// Wide format is accepted on ingest only: fixed key columns, then one column
// per variable.
struct SchemaSpec {
  CsvFormat format = CsvFormat::long_form;
  std::string region_col = "region_code";
  std::string kind_col = "region_kind";
  std::string date_col = "date";
  std::string variable_col = "variable";
  std::string value_col = "value";
  RegionKind default_kind = RegionKind::department;
};

struct RejectRow {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct IngestResult {
  Panel panel;
  std::vector<RejectRow> rejects;
};

IngestResult ingest_csv(std::istream& stream, const SchemaSpec& schema = {});
IngestResult ingest_csv_file(const std::string& path, const SchemaSpec& schema = {});

// Canonical long format, deterministic row order (region, variable, date),
// shortest round-trip float formatting.
void emit_csv(const Panel& panel, std::ostream& out);
void emit_csv_file(const Panel& panel, const std::string& path);

// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace labor
