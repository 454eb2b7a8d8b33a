#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"

namespace addiv {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    return -1;
  }
};

// RFC-4180 reader: quoted fields, doubled quotes, CRLF or LF line endings.
inline CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false, any = false;
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (table.header.empty())
      table.header = record;
    else if (!(record.size() == 1 && record[0].empty()))
      table.rows.push_back(record);
    record.clear();
  };
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      end_record();
    } else if (c == '\n') {
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  if (any && (!field.empty() || !record.empty())) end_record();
  if (table.header.empty()) throw DataError("CSV has no header row");
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    if (table.rows[r].size() != table.header.size())
      throw DataError("row " + std::to_string(r + 1) + ": expected " +
                      std::to_string(table.header.size()) + " fields, found " +
                      std::to_string(table.rows[r].size()));
  return table;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return parse_csv(in);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_cell(const std::string& s, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first < last && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (first == last || res.ec != std::errc() || res.ptr != last)
    throw DataError("row " + std::to_string(row) + ", column " + column + ": non-numeric cell '" +
                    s + "'");
  if (!std::isfinite(v))
    throw DataError("row " + std::to_string(row) + ", column " + column + ": non-finite value");
  return v;
}

struct PointSchema {
  std::vector<std::string> z_cols;
  std::string a_col = "a";
  std::string y_col = "y";
  std::vector<std::string> l_cols;
  // Declared number of treatment levels M+1; 0 infers max(a)+1; -1 marks a continuous treatment.
  int treatment_levels = 0;
  // Optional label -> code mapping for non-numeric treatment columns.
  std::vector<std::string> level_labels;
  std::string latent_col = "u";

  // z*, l* prefixes, a, y; a "u" column is read as the latent debug column.
  static PointSchema infer(const std::vector<std::string>& header) {
    PointSchema s;
    for (const auto& h : header) {
      if (!h.empty() && h[0] == 'z') s.z_cols.push_back(h);
      else if (!h.empty() && h[0] == 'l') s.l_cols.push_back(h);
    }
    return s;
  }
};

inline PointDataset point_from_table(const CsvTable& t, PointSchema schema) {
  if (schema.z_cols.empty() && schema.l_cols.empty()) {
    auto inferred = PointSchema::infer(t.header);
    schema.z_cols = inferred.z_cols;
    schema.l_cols = inferred.l_cols;
  }
  auto need = [&](const std::string& name) {
    const int c = t.column(name);
    if (c < 0) throw DataError("missing column '" + name + "'");
    return static_cast<std::size_t>(c);
  };
  if (schema.z_cols.empty()) throw DataError("missing column 'z' (no instrument columns)");
  std::vector<std::size_t> zc, lc;
  for (const auto& c : schema.z_cols) zc.push_back(need(c));
  for (const auto& c : schema.l_cols) lc.push_back(need(c));
  const std::size_t ac = need(schema.a_col), yc = need(schema.y_col);
  const int uc = t.column(schema.latent_col);
  const Index n = static_cast<Index>(t.rows.size());
  if (n == 0) throw DataError("CSV has no data rows");
  Eigen::MatrixXd z(n, static_cast<Index>(zc.size())), l(n, static_cast<Index>(lc.size()));
  Eigen::VectorXd a(n), y(n), u(n);
  std::map<std::string, int> codes;
  for (std::size_t m = 0; m < schema.level_labels.size(); ++m)
    codes[schema.level_labels[m]] = static_cast<int>(m);
  for (Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    const std::size_t row = static_cast<std::size_t>(i) + 1;
    for (std::size_t j = 0; j < zc.size(); ++j)
      z(i, static_cast<Index>(j)) = parse_cell(r[zc[j]], row, schema.z_cols[j]);
    for (std::size_t j = 0; j < lc.size(); ++j)
      l(i, static_cast<Index>(j)) = parse_cell(r[lc[j]], row, schema.l_cols[j]);
    y(i) = parse_cell(r[yc], row, schema.y_col);
    if (!codes.empty()) {
      auto it = codes.find(r[ac]);
      if (it == codes.end())
        throw DataError("row " + std::to_string(row) + ": unknown treatment label '" + r[ac] + "'");
      a(i) = it->second;
    } else {
      a(i) = parse_cell(r[ac], row, schema.a_col);
    }
    if (uc >= 0) u(i) = parse_cell(r[static_cast<std::size_t>(uc)], row, schema.latent_col);
  }
  int levels = schema.treatment_levels;
  if (!codes.empty() && levels == 0) levels = static_cast<int>(codes.size());
  if (levels == 0) {
    for (Index i = 0; i < n; ++i)
      if (a(i) != std::floor(a(i)) || a(i) < 0)
        throw DataError("row " + std::to_string(i + 1) +
                        ": treatment is not a non-negative integer code");
    levels = static_cast<int>(a.maxCoeff()) + 1;
  }
  PointDataset d(std::move(z), std::move(a), std::move(y), std::move(l), levels < 0 ? 0 : levels);
  d.level_labels = schema.level_labels;
  if (uc >= 0) d.latent_u = u;
  return d;
}

inline PointDataset load_point_csv(const std::string& path, const PointSchema& schema = {}) {
  return point_from_table(read_csv(path), schema);
}

inline void write_point_csv(std::ostream& out, const PointDataset& d, bool with_latent = false) {
  std::vector<std::string> header;
  for (Index j = 0; j < d.z_dim(); ++j) header.push_back(d.z_dim() == 1 ? "z" : "z" + std::to_string(j));
  header.push_back("a");
  header.push_back("y");
  for (Index j = 0; j < d.l_dim(); ++j) header.push_back("l" + std::to_string(j));
  const bool latent = with_latent && d.latent_u.has_value();
  if (latent) header.push_back("u");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (Index i = 0; i < d.n(); ++i) {
    for (Index j = 0; j < d.z_dim(); ++j) out << (j ? "," : "") << format_double(d.z()(i, j));
    out << "," << format_double(d.a()(i)) << "," << format_double(d.y()(i));
    for (Index j = 0; j < d.l_dim(); ++j) out << "," << format_double(d.l()(i, j));
    if (latent) out << "," << format_double((*d.latent_u)(i));
    out << "\n";
  }
}

inline void write_point_csv(const std::string& path, const PointDataset& d, bool with_latent = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_point_csv(out, d, with_latent);
}

// Long format: one row per (id, t) for t = 0..T with z*, a, l* filled and y empty,
// plus one terminal row per id with t = T+1, only y filled.
struct PanelSchema {
  std::string id_col = "id";
  std::string t_col = "t";
  std::vector<std::string> z_cols;
  std::string a_col = "a";
  std::vector<std::string> l_cols;
  std::string y_col = "y";
  // 0 infers per period.
  std::vector<int> treatment_levels;
};

inline PanelDataset panel_from_table(const CsvTable& t, PanelSchema schema) {
  if (schema.z_cols.empty()) {
    for (const auto& h : t.header) {
      if (!h.empty() && h[0] == 'z') schema.z_cols.push_back(h);
      else if (!h.empty() && h[0] == 'l') schema.l_cols.push_back(h);
    }
  }
  auto need = [&](const std::string& name) {
    const int c = t.column(name);
    if (c < 0) throw DataError("missing column '" + name + "'");
    return static_cast<std::size_t>(c);
  };
  if (schema.z_cols.empty()) throw DataError("missing column 'z' (no instrument columns)");
  const std::size_t idc = need(schema.id_col), tc = need(schema.t_col), ac = need(schema.a_col),
                    yc = need(schema.y_col);
  std::vector<std::size_t> zc, lc;
  for (const auto& c : schema.z_cols) zc.push_back(need(c));
  for (const auto& c : schema.l_cols) lc.push_back(need(c));

  struct Rec {
    std::map<int, std::size_t> periods;
    std::optional<double> y;
    int terminal_t = -1;
  };
  std::vector<std::string> order;
  std::map<std::string, Rec> by_id;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string& id = row[idc];
    const double tv = parse_cell(row[tc], r + 1, schema.t_col);
    if (tv != std::floor(tv) || tv < 0) throw DataError("row " + std::to_string(r + 1) + ": bad period");
    const int period = static_cast<int>(tv);
    auto [it, inserted] = by_id.try_emplace(id);
    if (inserted) order.push_back(id);
    Rec& rec = it->second;
    if (!row[yc].empty()) {
      if (rec.y) throw DataError("subject " + id + ": duplicate terminal outcome");
      rec.y = parse_cell(row[yc], r + 1, schema.y_col);
      rec.terminal_t = period;
    } else {
      if (!rec.periods.emplace(period, r).second)
        throw DataError("subject " + id + ": duplicate (id,t) at t=" + std::to_string(period));
    }
  }
  if (order.empty()) throw DataError("CSV has no data rows");
  int horizon = -1;
  for (const auto& id : order) {
    const Rec& rec = by_id[id];
    const int T = rec.periods.empty() ? -1 : rec.periods.rbegin()->first;
    if (horizon < 0) horizon = T;
    if (T != horizon || static_cast<int>(rec.periods.size()) != T + 1)
      throw DataError("subject " + id + ": ragged horizon");
    if (!rec.y) throw DataError("subject " + id + ": missing terminal outcome");
    if (rec.terminal_t != T + 1)
      throw DataError("subject " + id + ": terminal outcome must sit at t=" + std::to_string(T + 1));
  }
  if (horizon < 0) throw DataError("no period rows");
  std::vector<PanelSample> panels;
  for (const auto& id : order) {
    const Rec& rec = by_id[id];
    PanelSample p;
    p.id = id;
    p.y = *rec.y;
    for (const auto& [period, r] : rec.periods) {
      const auto& row = t.rows[r];
      Eigen::VectorXd z(static_cast<Index>(zc.size())), l(static_cast<Index>(lc.size()));
      for (std::size_t j = 0; j < zc.size(); ++j)
        z(static_cast<Index>(j)) = parse_cell(row[zc[j]], r + 1, schema.z_cols[j]);
      for (std::size_t j = 0; j < lc.size(); ++j)
        l(static_cast<Index>(j)) = parse_cell(row[lc[j]], r + 1, schema.l_cols[j]);
      const double a = parse_cell(row[ac], r + 1, schema.a_col);
      if (a != std::floor(a) || a < 0)
        throw DataError("row " + std::to_string(r + 1) + ": treatment is not a non-negative integer code");
      p.z.push_back(z);
      p.l.push_back(l);
      p.a.push_back(static_cast<int>(a));
    }
    panels.push_back(std::move(p));
  }
  std::vector<int> levels = schema.treatment_levels;
  if (levels.empty()) {
    levels.assign(static_cast<std::size_t>(horizon + 1), 1);
    for (const auto& p : panels)
      for (int s = 0; s <= horizon; ++s)
        levels[static_cast<std::size_t>(s)] =
            std::max(levels[static_cast<std::size_t>(s)], p.a[static_cast<std::size_t>(s)] + 1);
  }
  return PanelDataset::from_panels(panels, levels);
}

inline PanelDataset load_panel_csv(const std::string& path, const PanelSchema& schema = {}) {
  return panel_from_table(read_csv(path), schema);
}

inline void write_panel_csv(std::ostream& out, const PanelDataset& d) {
  const Index p = d.z(0).cols(), q = d.l(0).cols();
  for (int t = 1; t <= d.horizon(); ++t)
    if (d.z(t).cols() != p || d.l(t).cols() != q)
      throw DataError("long-format export needs equal per-period dimensions");
  out << "id,t";
  for (Index j = 0; j < p; ++j) out << (p == 1 ? ",z" : ",z" + std::to_string(j));
  out << ",a";
  for (Index j = 0; j < q; ++j) out << ",l" << j;
  out << ",y\n";
  const std::string blanks(static_cast<std::size_t>(p + q + 2), ',');
  for (Index i = 0; i < d.n(); ++i) {
    const std::string id = csv_escape(d.ids()[static_cast<std::size_t>(i)]);
    for (int t = 0; t <= d.horizon(); ++t) {
      out << id << "," << t;
      for (Index j = 0; j < p; ++j) out << "," << format_double(d.z(t)(i, j));
      out << "," << format_double(d.a(t)(i));
      for (Index j = 0; j < q; ++j) out << "," << format_double(d.l(t)(i, j));
      out << ",\n";
    }
    out << id << "," << d.horizon() + 1 << blanks << format_double(d.y()(i)) << "\n";
  }
}

inline void write_panel_csv(const std::string& path, const PanelDataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_panel_csv(out, d);
}

}  // namespace addiv
