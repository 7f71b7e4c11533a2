#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cfrec/error.hpp"
#include "cfrec/solver.hpp"
#include "csv.hpp"

namespace cfrec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr const char* kObjRow = "OBJ";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

double parse_number(const std::string& s, int line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    // from_chars does not accept a leading '+'.
    if (!s.empty() && s[0] == '+') return parse_number(s.substr(1), line_no);
    if (s == "Inf" || s == "inf" || s == "Infinity" || s == "1e+30" || s == "1e30") return kInf;
    if (s == "-Inf" || s == "-inf" || s == "-Infinity") return -kInf;
    fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  if (std::abs(v) >= 1e30) return v > 0 ? kInf : -kInf;
  return v;
}

std::vector<std::string> row_names(const MilpModel& model) {
  std::vector<std::string> names;
  std::unordered_set<std::string> seen{kObjRow};
  for (int i = 0; i < model.n_constraints(); ++i) {
    std::string name = model.constraints()[i].name;
    if (name.empty() || name.find_first_of(" \t") != std::string::npos || seen.count(name)) {
      name = "R" + std::to_string(i);
    }
    seen.insert(name);
    names.push_back(std::move(name));
  }
  return names;
}

}  // namespace

std::string to_mps(const MilpModel& model, const std::string& name) {
  for (const Variable& v : model.variables()) {
    if (v.name.empty() || v.name.find_first_of(" \t") != std::string::npos) {
      fail(ErrorKind::InvalidArgument, "variable name '" + v.name + "' cannot be written to MPS");
    }
  }
  const auto rows = row_names(model);
  std::ostringstream out;
  out << "NAME " << name << "\n";
  out << "* objective constant c is stored as RHS -c on row " << kObjRow << "\n";
  out << "ROWS\n N " << kObjRow << "\n";
  for (int i = 0; i < model.n_constraints(); ++i) {
    const char* s = "L";
    switch (model.constraints()[i].sense) {
      case Sense::Le: s = "L"; break;
      case Sense::Ge: s = "G"; break;
      case Sense::Eq: s = "E"; break;
    }
    out << " " << s << " " << rows[i] << "\n";
  }

  std::vector<std::vector<std::pair<int, double>>> columns(model.n_variables());
  for (int i = 0; i < model.n_constraints(); ++i) {
    for (const Term& t : model.constraints()[i].terms) columns[t.var].emplace_back(i, t.coeff);
  }
  std::vector<double> obj(model.n_variables(), 0.0);
  for (const Term& t : model.objective().terms) obj[t.var] += t.coeff;

  out << "COLUMNS\n";
  bool in_int = false;
  int marker = 0;
  for (int j = 0; j < model.n_variables(); ++j) {
    const Variable& v = model.variable(j);
    if (v.is_integral() != in_int) {
      out << "    MARKER" << marker++ << " 'MARKER' " << (in_int ? "'INTEND'" : "'INTORG'") << "\n";
      in_int = v.is_integral();
    }
    bool wrote = false;
    if (obj[j] != 0.0) {
      out << "    " << v.name << " " << kObjRow << " " << num(obj[j]) << "\n";
      wrote = true;
    }
    for (const auto& [row, coeff] : columns[j]) {
      out << "    " << v.name << " " << rows[row] << " " << num(coeff) << "\n";
      wrote = true;
    }
    if (!wrote) out << "    " << v.name << " " << kObjRow << " 0\n";
  }
  if (in_int) out << "    MARKER" << marker++ << " 'MARKER' 'INTEND'\n";

  out << "RHS\n";
  if (model.objective().constant != 0.0) {
    out << "    RHS " << kObjRow << " " << num(-model.objective().constant) << "\n";
  }
  for (int i = 0; i < model.n_constraints(); ++i) {
    const double rhs = model.constraints()[i].rhs;
    if (rhs != 0.0) out << "    RHS " << rows[i] << " " << num(rhs) << "\n";
  }
  out << "RANGES\n";
  out << "BOUNDS\n";
  for (const Variable& v : model.variables()) {
    if (v.lower == v.upper) {
      out << " FX BND " << v.name << " " << num(v.lower) << "\n";
      continue;
    }
    if (std::isinf(v.lower) && v.lower < 0) {
      out << " MI BND " << v.name << "\n";
    } else {
      out << " LO BND " << v.name << " " << num(v.lower) << "\n";
    }
    if (std::isinf(v.upper)) {
      out << " PL BND " << v.name << "\n";
    } else {
      out << " UP BND " << v.name << " " << num(v.upper) << "\n";
    }
  }
  out << "ENDATA\n";
  return out.str();
}

void export_mps(const MilpModel& model, const std::string& path) {
  const std::string text = to_mps(model);
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorKind::Io, "failed writing '" + path + "'");
}

MilpModel parse_mps(const std::string& text) {
  enum class Section { None, Rows, Columns, Rhs, Ranges, Bounds, Done };
  struct RowDef {
    std::string name;
    char type = 'L';
    std::vector<Term> terms;
    double rhs = 0.0;
    double range = 0.0;
    bool has_range = false;
  };
  struct ColDef {
    std::string name;
    bool integer = false;
    double lower = 0.0;
    double upper = kInf;
    bool upper_set = false;
  };

  Section section = Section::None;
  std::string objective_row;
  bool maximize = false;
  std::vector<RowDef> rows;
  std::unordered_map<std::string, int> row_index;
  std::vector<ColDef> cols;
  std::unordered_map<std::string, int> col_index;
  std::vector<Term> objective;
  double objective_rhs = 0.0;
  bool in_int = false;
  bool expect_objsense = false;

  auto row_of = [&](const std::string& name, int line_no) -> int {
    auto it = row_index.find(name);
    if (it == row_index.end()) {
      fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": unknown row '" + name + "'");
    }
    return it->second;
  };
  auto col_of = [&](const std::string& name, int line_no) -> int {
    auto it = col_index.find(name);
    if (it == col_index.end()) {
      fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": unknown column '" + name + "'");
    }
    return it->second;
  };

  const auto lines = csv::split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const int line_no = static_cast<int>(li) + 1;
    const std::string& line = lines[li];
    if (line.empty() || line[0] == '*') continue;
    const auto tok = tokens(line);
    if (tok.empty()) continue;
    const bool header = line[0] != ' ' && line[0] != '\t';
    if (header) {
      const std::string& h = tok[0];
      if (h == "NAME") section = Section::None;
      else if (h == "ROWS") section = Section::Rows;
      else if (h == "COLUMNS") section = Section::Columns;
      else if (h == "RHS") section = Section::Rhs;
      else if (h == "RANGES") section = Section::Ranges;
      else if (h == "BOUNDS") section = Section::Bounds;
      else if (h == "ENDATA") {
        section = Section::Done;
        break;
      } else if (h == "OBJSENSE") {
        if (tok.size() > 1) maximize = tok[1] == "MAX" || tok[1] == "MAXIMIZE";
        else expect_objsense = true;
      } else {
        fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": unknown section '" + h + "'");
      }
      continue;
    }
    if (expect_objsense) {
      maximize = tok[0] == "MAX" || tok[0] == "MAXIMIZE";
      expect_objsense = false;
      continue;
    }
    switch (section) {
      case Section::Rows: {
        if (tok.size() < 2) fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": bad ROWS entry");
        const char type = tok[0][0];
        if (type == 'N') {
          if (objective_row.empty()) objective_row = tok[1];
          continue;
        }
        if (type != 'L' && type != 'G' && type != 'E') {
          fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": bad row type");
        }
        row_index.emplace(tok[1], static_cast<int>(rows.size()));
        rows.push_back({tok[1], type, {}, 0.0, 0.0, false});
        break;
      }
      case Section::Columns: {
        if (tok.size() >= 3 && tok[1] == "'MARKER'") {
          in_int = tok[2] == "'INTORG'";
          continue;
        }
        if (tok.size() < 3 || tok.size() % 2 == 0) {
          fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": bad COLUMNS entry");
        }
        auto [it, inserted] = col_index.try_emplace(tok[0], static_cast<int>(cols.size()));
        if (inserted) cols.push_back({tok[0], in_int, 0.0, kInf, false});
        for (std::size_t k = 1; k + 1 < tok.size(); k += 2) {
          const double v = parse_number(tok[k + 1], line_no);
          if (tok[k] == objective_row) {
            if (v != 0.0) objective.push_back({it->second, v});
          } else {
            rows[row_of(tok[k], line_no)].terms.push_back({it->second, v});
          }
        }
        break;
      }
      case Section::Rhs:
      case Section::Ranges: {
        std::size_t k = tok.size() % 2 == 0 ? 0 : 1;  // set name is optional
        for (; k + 1 < tok.size(); k += 2) {
          const double v = parse_number(tok[k + 1], line_no);
          if (section == Section::Rhs && tok[k] == objective_row) {
            objective_rhs = v;
            continue;
          }
          RowDef& r = rows[row_of(tok[k], line_no)];
          if (section == Section::Rhs) {
            r.rhs = v;
          } else {
            r.range = v;
            r.has_range = true;
          }
        }
        break;
      }
      case Section::Bounds: {
        if (tok.size() < 3) fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": bad BOUNDS entry");
        const std::string& type = tok[0];
        ColDef& c = cols[col_of(tok[2], line_no)];
        const bool needs_value = type == "UP" || type == "LO" || type == "FX" || type == "LI" || type == "UI";
        if (needs_value && tok.size() < 4) {
          fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": bound needs a value");
        }
        const double v = needs_value ? parse_number(tok[3], line_no) : 0.0;
        if (type == "UP" || type == "UI") {
          c.upper = v;
          c.upper_set = true;
          if (type == "UI") c.integer = true;
        } else if (type == "LO" || type == "LI") {
          c.lower = v;
          if (type == "LI") c.integer = true;
        } else if (type == "FX") {
          c.lower = c.upper = v;
          c.upper_set = true;
        } else if (type == "BV") {
          c.integer = true;
          c.lower = 0.0;
          c.upper = 1.0;
          c.upper_set = true;
        } else if (type == "FR") {
          c.lower = -kInf;
          c.upper = kInf;
        } else if (type == "MI") {
          c.lower = -kInf;
        } else if (type == "PL") {
          c.upper = kInf;
        } else {
          fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": unknown bound type '" + type + "'");
        }
        break;
      }
      case Section::None:
      case Section::Done:
        fail(ErrorKind::Data, "MPS line " + std::to_string(line_no) + ": data outside a section");
    }
  }
  if (section != Section::Done) fail(ErrorKind::Data, "MPS file lacks ENDATA");

  MilpModel model;
  for (const ColDef& c : cols) {
    VarKind kind = VarKind::Continuous;
    // MPS has no binary type; an integer confined to [0, 1] (fixed ones too) reads back as binary
    if (c.integer) kind = (c.lower >= 0.0 && c.upper <= 1.0) ? VarKind::Binary : VarKind::Integer;
    model.add_variable(c.name, kind, c.lower, c.upper);
  }
  for (const RowDef& r : rows) {
    LinearExpr lhs;
    lhs.terms = r.terms;
    const double range = std::abs(r.range);
    if (!r.has_range || (r.type != 'E' && range == 0.0)) {
      const Sense s = r.type == 'L' ? Sense::Le : r.type == 'G' ? Sense::Ge : Sense::Eq;
      model.add_constraint(r.name, lhs, s, r.rhs);
      continue;
    }
    double lo = r.rhs;
    double hi = r.rhs;
    if (r.type == 'L') lo = r.rhs - range;
    else if (r.type == 'G') hi = r.rhs + range;
    else if (r.range > 0) hi = r.rhs + range;
    else lo = r.rhs - range;
    model.add_constraint(r.name, lhs, Sense::Ge, lo);
    model.add_constraint(r.name + "_range", lhs, Sense::Le, hi);
  }
  LinearExpr obj;
  obj.terms = objective;
  obj.constant = -objective_rhs;
  if (maximize) {
    for (Term& t : obj.terms) t.coeff = -t.coeff;
    obj.constant = -obj.constant;
  }
  model.set_objective(std::move(obj));
  return model;
}

MilpModel import_mps(const std::string& path) { return parse_mps(csv::read_file(path)); }

std::vector<double> parse_solution(const std::string& text, const MilpModel& model) {
  std::vector<double> values(model.n_variables(), 0.0);
  std::vector<char> seen(model.n_variables(), 0);
  const auto lines = csv::split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto tok = tokens(lines[li]);
    if (tok.size() < 2 || tok[0][0] == '#') continue;
    const int j = model.find_variable(tok[0]);
    if (j < 0) continue;
    values[j] = parse_number(tok[1], static_cast<int>(li) + 1);
    seen[j] = 1;
  }
  for (int j = 0; j < model.n_variables(); ++j) {
    const Variable& v = model.variable(j);
    if (!seen[j]) fail(ErrorKind::Data, "solution is missing variable '" + v.name + "'");
    if (values[j] < v.lower - 1e-6 || values[j] > v.upper + 1e-6) {
      fail(ErrorKind::Data, "solution value " + num(values[j]) + " for '" + v.name +
                                "' violates its bounds [" + num(v.lower) + ", " + num(v.upper) + "]");
    }
  }
  return values;
}

std::vector<double> import_solution(const std::string& path, const MilpModel& model) {
  return parse_solution(csv::read_file(path), model);
}

void export_solution(const MilpModel& model, std::span<const double> values,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  for (int j = 0; j < model.n_variables(); ++j) {
    out << model.variable(j).name << " " << num(values[j]) << "\n";
  }
}

}  // namespace cfrec
