#include "sae/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sae/errors.hpp"

namespace sae {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto cells = split(s, ',');
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size())
        throw ValidationError(path + ": row has " + std::to_string(cells.size()) +
                              " cells, header has " + std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw ValidationError(path + ": empty file");
  return t;
}

double parse_number(const std::string& s, const std::string& what) {
  const std::string v = trim(s);
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x))
    throw ValidationError(what + ": not a finite number: '" + s + "'");
  return x;
}

double parse_count(const std::string& s, const std::string& what) {
  const double x = parse_number(s, what);
  if (x < 0.0 || x != std::floor(x))
    throw NonIntegerCount(what + ": expected a nonnegative integer, got '" + s + "'");
  return x;
}

void require_columns(const Table& t, const std::vector<std::string>& names,
                     const std::string& path) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (t.header.size() <= i || t.header[i] != names[i])
      throw MissingColumn(path + ": expected column '" + names[i] + "' at position " +
                          std::to_string(i + 1));
  }
}

std::string format_number(double x) {
  char buf[40];
  if (x == std::floor(x) && std::abs(x) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(x));
  } else {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
  }
  return buf;
}

}  // namespace

std::string class_label_for(const Eigen::VectorXd& x_raw) {
  std::string label;
  for (int i = 0; i < x_raw.size(); ++i) {
    if (i) label += '_';
    label += format_number(x_raw[i]);
  }
  return label;
}

AreaDataset load_area_csv(const std::string& path) {
  const Table t = read_csv(path);
  require_columns(t, {"area", "y", "N"}, path);
  const int k = static_cast<int>(t.header.size()) - 3;
  if (t.rows.empty()) throw EmptyArea(path + ": no data rows");

  AreaDataset d;
  const int D = static_cast<int>(t.rows.size());
  d.y.resize(D);
  d.N.resize(D);
  d.X.resize(D, k + 1);
  d.covariates.push_back("intercept");
  for (int j = 0; j < k; ++j) d.covariates.push_back(t.header[3 + j]);

  std::set<std::string> seen;
  for (int i = 0; i < D; ++i) {
    const auto& row = t.rows[i];
    if (!seen.insert(row[0]).second)
      throw DuplicateAreaId(path + ": duplicate area id '" + row[0] + "'");
    d.area.push_back(row[0]);
    d.y[i] = parse_count(row[1], path + " y");
    d.N[i] = parse_number(row[2], path + " N");
    if (d.N[i] <= 0.0)
      throw NonPositivePopulation(path + ": N must be positive for area '" + row[0] + "'");
    d.X(i, 0) = 1.0;
    for (int j = 0; j < k; ++j)
      d.X(i, j + 1) = parse_number(row[3 + j], path + " " + t.header[3 + j]);
  }
  return d;
}

void save_area_csv(const AreaDataset& d, const std::string& path,
                   const std::string& provenance) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "area,y,N";
  for (std::size_t j = 1; j < d.covariates.size(); ++j) out << ',' << d.covariates[j];
  out << '\n';
  for (int i = 0; i < d.D(); ++i) {
    out << d.area[i] << ',' << format_number(d.y[i]) << ',' << format_number(d.N[i]);
    for (int j = 1; j < d.p(); ++j) out << ',' << format_number(d.X(i, j));
    out << '\n';
  }
}

UnitDataset load_unit_csv(const std::string& unit_path, const std::string& class_path) {
  const Table tu = read_csv(unit_path);
  require_columns(tu, {"area", "y", "m", "w"}, unit_path);
  const int k = static_cast<int>(tu.header.size()) - 4;
  if (k < 1) throw MissingColumn(unit_path + ": need at least one covariate column");
  if (tu.rows.empty()) throw EmptyArea(unit_path + ": no data rows");

  const Table tc = read_csv(class_path);
  require_columns(tc, {"area", "class", "N"}, class_path);

  UnitDataset d;
  d.covariates.push_back("intercept");
  for (int j = 0; j < k; ++j) d.covariates.push_back(tu.header[4 + j]);

  // Pass 1: areas in order of first appearance, unit rows parsed and labeled.
  std::map<std::string, int> area_idx;
  const int n = static_cast<int>(tu.rows.size());
  d.unit_y.resize(n);
  d.unit_m.resize(n);
  d.unit_w.resize(n);
  d.unit_area.resize(n);
  std::vector<std::string> unit_label(n);
  std::vector<Eigen::VectorXd> unit_x(n);
  for (int i = 0; i < n; ++i) {
    const auto& row = tu.rows[i];
    auto [it, fresh] = area_idx.emplace(row[0], static_cast<int>(d.area.size()));
    if (fresh) d.area.push_back(row[0]);
    d.unit_area[i] = it->second;
    d.unit_y[i] = parse_count(row[1], unit_path + " y");
    d.unit_m[i] = parse_count(row[2], unit_path + " m");
    if (d.unit_m[i] < 1.0)
      throw ValidationError(unit_path + ": m must be a positive integer");
    if (d.unit_y[i] > d.unit_m[i])
      throw ValidationError(unit_path + ": y exceeds m in area '" + row[0] + "'");
    d.unit_w[i] = parse_number(row[3], unit_path + " w");
    if (d.unit_w[i] <= 0.0)
      throw ValidationError(unit_path + ": sampling weight w must be positive");
    Eigen::VectorXd x(k);
    for (int j = 0; j < k; ++j) {
      x[j] = parse_number(row[4 + j], unit_path + " " + tu.header[4 + j]);
      if (x[j] != std::floor(x[j]))
        throw NonIntegerClassCovariate(
            unit_path + ": covariate '" + tu.header[4 + j] +
            "' must be integer-coded for the class-based predictor, got '" + row[4 + j] + "'");
    }
    unit_x[i] = x;
    unit_label[i] = class_label_for(x);
  }

  // Pass 2: class universe from the class-size file, in order of first
  // appearance of each label.
  const int D = d.D();
  std::map<std::string, int> class_idx;
  std::vector<Eigen::VectorXd> class_x;
  std::set<std::pair<int, int>> seen_cell;
  struct Cell { int a, c; double N; };
  std::vector<Cell> cells;
  std::set<int> areas_in_class_file;
  for (const auto& row : tc.rows) {
    const auto ait = area_idx.find(row[0]);
    if (ait == area_idx.end())
      throw EmptyArea(class_path + ": area '" + row[0] + "' has class sizes but no sampled units");
    const std::string& label = row[1];
    auto [cit, fresh] = class_idx.emplace(label, static_cast<int>(d.class_label.size()));
    if (fresh) {
      const auto parts = split(label, '_');
      if (static_cast<int>(parts.size()) != k)
        throw ValidationError(class_path + ": class label '" + label + "' does not encode " +
                              std::to_string(k) + " covariates");
      Eigen::VectorXd x(k);
      for (int j = 0; j < k; ++j) x[j] = parse_number(parts[j], class_path + " class label");
      d.class_label.push_back(label);
      class_x.push_back(x);
    }
    const double Ncl = parse_count(row[2], class_path + " N");
    if (Ncl <= 0.0)
      throw NonPositivePopulation(class_path + ": class size must be positive for '" +
                                  row[0] + "," + row[1] + "'");
    if (!seen_cell.insert({ait->second, cit->second}).second)
      throw InconsistentClassCount(class_path + ": duplicate class row '" + row[0] + "," +
                                   row[1] + "'");
    cells.push_back({ait->second, cit->second, Ncl});
    areas_in_class_file.insert(ait->second);
  }
  for (int a = 0; a < D; ++a)
    if (!areas_in_class_file.count(a))
      throw MissingColumn(class_path + ": no class rows for area '" + d.area[a] + "'");

  const int L = d.L();
  d.Z.resize(L, k + 1);
  for (int l = 0; l < L; ++l) {
    d.Z(l, 0) = 1.0;
    d.Z.row(l).tail(k) = class_x[l].transpose();
  }
  d.Npop = Eigen::MatrixXd::Zero(D, L);
  for (const auto& cell : cells) d.Npop(cell.a, cell.c) = cell.N;

  // Pass 3: match units to classes and aggregate.
  d.unit_class.resize(n);
  d.ysum = Eigen::MatrixXd::Zero(D, L);
  d.msum = Eigen::MatrixXd::Zero(D, L);
  d.nsamp = Eigen::MatrixXd::Zero(D, L);
  for (int i = 0; i < n; ++i) {
    const auto cit = class_idx.find(unit_label[i]);
    const int a = d.unit_area[i];
    if (cit == class_idx.end() || d.Npop(a, cit->second) <= 0.0)
      throw UnknownClass(unit_path + ": covariate pattern '" + unit_label[i] +
                         "' has no class row for area '" + d.area[a] + "'");
    const int c = cit->second;
    d.unit_class[i] = c;
    d.ysum(a, c) += d.unit_y[i];
    d.msum(a, c) += d.unit_m[i];
    d.nsamp(a, c) += 1.0;
  }
  for (int a = 0; a < D; ++a)
    for (int l = 0; l < L; ++l)
      if (d.Npop(a, l) > 0.0 && d.Npop(a, l) < d.nsamp(a, l))
        throw InconsistentClassCount("class '" + d.class_label[l] + "' in area '" + d.area[a] +
                                     "': population size smaller than sampled units");
  return d;
}

void save_unit_csv(const UnitDataset& d, const std::string& unit_path,
                   const std::string& class_path, const std::string& provenance) {
  {
    std::ofstream out(unit_path);
    if (!out) throw ValidationError("cannot write file: " + unit_path);
    if (!provenance.empty()) out << "# " << provenance << "\n";
    out << "area,y,m,w";
    for (std::size_t j = 1; j < d.covariates.size(); ++j) out << ',' << d.covariates[j];
    out << '\n';
    for (int i = 0; i < d.n(); ++i) {
      out << d.area[d.unit_area[i]] << ',' << format_number(d.unit_y[i]) << ','
          << format_number(d.unit_m[i]) << ',' << format_number(d.unit_w[i]);
      for (int j = 1; j < d.p(); ++j) out << ',' << format_number(d.Z(d.unit_class[i], j));
      out << '\n';
    }
  }
  std::ofstream out(class_path);
  if (!out) throw ValidationError("cannot write file: " + class_path);
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "area,class,N\n";
  for (int a = 0; a < d.D(); ++a)
    for (int l = 0; l < d.L(); ++l)
      if (d.Npop(a, l) > 0.0)
        out << d.area[a] << ',' << d.class_label[l] << ',' << format_number(d.Npop(a, l))
            << '\n';
}

}  // namespace sae
