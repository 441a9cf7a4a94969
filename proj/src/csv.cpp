#include "labor/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "labor/errors.hpp"

namespace labor {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

bool parse_value(const std::string& text, double& out) {
  const char* b = text.data();
  const char* e = b + text.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && std::isfinite(out);
}

int find_col(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

struct ParsedKey {
  RegionId region;
  MonthKey date;
  bool annual = false;
};

}  // namespace

IngestResult ingest_csv(std::istream& stream, const SchemaSpec& schema) {
  std::string line;
  if (!std::getline(stream, line)) throw SchemaError("empty CSV: missing header");
  std::vector<std::string> header = split_row(line);

  const int region_i = find_col(header, schema.region_col);
  const int kind_i = find_col(header, schema.kind_col);  // optional
  const int date_i = find_col(header, schema.date_col);
  if (region_i < 0) throw SchemaError("missing required column '" + schema.region_col + "'");
  if (date_i < 0) throw SchemaError("missing required column '" + schema.date_col + "'");

  int variable_i = -1, value_i = -1;
  std::vector<int> wide_cols;
  if (schema.format == CsvFormat::long_form) {
    variable_i = find_col(header, schema.variable_col);
    value_i = find_col(header, schema.value_col);
    if (variable_i < 0) throw SchemaError("missing required column '" + schema.variable_col + "'");
    if (value_i < 0) throw SchemaError("missing required column '" + schema.value_col + "'");
  } else {
    for (int i = 0; i < static_cast<int>(header.size()); ++i)
      if (i != region_i && i != kind_i && i != date_i) wide_cols.push_back(i);
    if (wide_cols.empty()) throw SchemaError("wide CSV has no variable columns");
  }

  IngestResult result;
  // Collect points first so frequency can be decided per series, and the
  // first duplicate collision can be named.
  struct Acc {
    std::map<MonthKey, double> pts;
    bool any_annual = false;
    bool any_monthly = false;
  };
  std::map<Panel::Key, Acc> acc;

  std::size_t line_no = 1;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> row = split_row(line);
    auto cell = [&](int i) -> std::string {
      return i >= 0 && i < static_cast<int>(row.size()) ? row[i] : std::string();
    };

    RegionKind kind = schema.default_kind;
    if (kind_i >= 0 && !cell(kind_i).empty()) {
      auto k = region_kind_from_string(cell(kind_i));
      if (!k) {
        result.rejects.push_back({line_no, "unknown region_kind '" + cell(kind_i) + "'"});
        continue;
      }
      kind = *k;
    }
    if (cell(region_i).empty()) {
      result.rejects.push_back({line_no, "empty region code"});
      continue;
    }
    RegionId region{cell(region_i), kind};

    auto date = MonthKey::parse(cell(date_i));
    if (!date) {
      result.rejects.push_back({line_no, "unparseable date '" + cell(date_i) + "'"});
      continue;
    }
    bool annual = cell(date_i).size() == 4;

    auto add_point = [&](const VariableId& v, const std::string& text) {
      double x;
      if (!parse_value(text, x)) {
        result.rejects.push_back({line_no, "unparseable value '" + text + "' for " + v.name});
        return;
      }
      Acc& a = acc[{region, v}];
      auto [it, inserted] = a.pts.emplace(*date, x);
      if (!inserted)
        throw DuplicateKeyError("duplicate (" + region.str() + ", " + v.name + ", " +
                                cell(date_i) + ") first collides at line " +
                                std::to_string(line_no));
      (annual ? a.any_annual : a.any_monthly) = true;
    };

    if (schema.format == CsvFormat::long_form) {
      if (cell(variable_i).empty()) {
        result.rejects.push_back({line_no, "empty variable name"});
        continue;
      }
      add_point(VariableId{cell(variable_i)}, cell(value_i));
    } else {
      for (int ci : wide_cols) {
        if (cell(ci).empty()) continue;  // sparse wide rows are fine
        add_point(VariableId{header[ci]}, cell(ci));
      }
    }
  }

  for (auto& [key, a] : acc) {
    if (a.any_annual && a.any_monthly)
      throw SchemaError("series " + key.first.str() + "/" + key.second.name +
                        " mixes annual and monthly dates");
    Series s(a.any_annual ? Frequency::annual : Frequency::monthly);
    for (const auto& [k, v] : a.pts) s.set(k, v);
    result.panel.insert(key.first, key.second, std::move(s));
  }
  return result;
}

IngestResult ingest_csv_file(const std::string& path, const SchemaSpec& schema) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  return ingest_csv(f, schema);
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

void emit_csv(const Panel& panel, std::ostream& out) {
  out << "region_code,region_kind,date,variable,value\n";
  // map iteration order is already (region, variable); dates ordered within.
  for (const auto& [key, series] : panel.entries()) {
    const auto& [region, variable] = key;
    for (const auto& [date, value] : series.points()) {
      out << region.code << ',' << to_string(region.kind) << ',';
      if (series.frequency() == Frequency::annual) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%04d", date.year);
        out << buf;
      } else {
        out << date.str();
      }
      out << ',' << variable.name << ',' << format_double(value) << '\n';
    }
  }
}

void emit_csv_file(const Panel& panel, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  emit_csv(panel, f);
}

}  // namespace labor
