#include "reluopt/lp_writer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "reluopt/errors.hpp"

namespace reluopt::opt {

namespace {

std::string num(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_terms(std::string& out, const std::vector<Term>& terms, const OptModel& model) {
  bool first = true;
  for (const Term& t : terms) {
    if (t.coef == 0.0) continue;
    const std::string& name = model.variable(t.var).name;
    const double mag = std::abs(t.coef);
    if (first) {
      if (t.coef < 0.0) out += "- ";
    } else {
      out += t.coef < 0.0 ? " - " : " + ";
    }
    if (mag != 1.0) {
      out += num(mag);
      out += ' ';
    }
    out += name;
    first = false;
  }
  if (first) out += "0";
}

}  // namespace

std::string write_lp_text(const OptModel& model) {
  std::string out;
  const Objective& obj = model.objective();
  out += obj.sense == ObjSense::Minimize ? "Minimize\n" : "Maximize\n";
  out += " obj: ";
  append_terms(out, obj.terms, model);
  out += '\n';
  if (obj.constant != 0.0) out += "\\ objective constant: " + num(obj.constant) + "\n";

  out += "Subject To\n";
  for (const Constraint& c : model.constraints()) {
    out += ' ';
    out += c.name;
    out += ": ";
    append_terms(out, c.terms, model);
    switch (c.sense) {
      case RowSense::LessEqual: out += " <= "; break;
      case RowSense::GreaterEqual: out += " >= "; break;
      case RowSense::Equal: out += " = "; break;
    }
    out += num(c.rhs);
    out += '\n';
  }

  out += "Bounds\n";
  for (const Variable& v : model.variables()) {
    const bool lo = std::isfinite(v.lower);
    const bool hi = std::isfinite(v.upper);
    out += ' ';
    if (lo && hi) {
      if (v.lower == v.upper) {
        out += v.name + " = " + num(v.lower);
      } else {
        out += num(v.lower) + " <= " + v.name + " <= " + num(v.upper);
      }
    } else if (lo) {
      out += v.name + " >= " + num(v.lower);
    } else if (hi) {
      out += "-inf <= " + v.name + " <= " + num(v.upper);
    } else {
      out += v.name + " free";
    }
    out += '\n';
  }

  bool any_binary = false;
  for (const Variable& v : model.variables()) {
    if (v.kind != VarKind::Binary) continue;
    if (!any_binary) out += "Binaries\n";
    any_binary = true;
    out += ' ' + v.name + '\n';
  }
  out += "End\n";
  return out;
}

void write_lp_file(const OptModel& model, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << write_lp_text(model);
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace reluopt::opt
