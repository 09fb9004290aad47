#include "dissflow/trajectory.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace dissflow {

void TrajectoryLog::append(double t, double w2, double v, double pert, double u_t) {
  times.push_back(t);
  w2_to_target.push_back(w2);
  lyapunov.push_back(v);
  pert_norm.push_back(pert);
  u.push_back(u_t);
  bound.push_back(std::numeric_limits<double>::quiet_NaN());
}

void TrajectoryLog::validate() const {
  const std::size_t n = times.size();
  if (w2_to_target.size() != n || lyapunov.size() != n || pert_norm.size() != n || u.size() != n ||
      bound.size() != n)
    throw InvalidArgument("trajectory: series have different lengths");
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0 && !(times[k] > times[k - 1])) {
      std::ostringstream msg;
      msg << "trajectory: times not strictly increasing at row " << k;
      throw InvalidArgument(msg.str());
    }
    if (w2_to_target[k] < 0.0 || lyapunov[k] < 0.0) {
      std::ostringstream msg;
      msg << "trajectory: negative W2 or Lyapunov value at row " << k;
      throw InvalidArgument(msg.str());
    }
  }
}

void write_trajectory_csv(std::ostream& out, const TrajectoryLog& log) {
  out << "# seed=" << log.seed << '\n';
  if (!log.config_hash.empty()) out << "# config_hash=" << log.config_hash << '\n';
  out << "t,W2_to_target,F_value,pert_norm,u_t,bound_value\n" << std::setprecision(17);
  for (std::size_t k = 0; k < log.size(); ++k) {
    out << log.times[k] << ',' << log.w2_to_target[k] << ',' << log.lyapunov[k] << ',' << log.pert_norm[k] << ','
        << log.u[k] << ',' << log.bound[k] << '\n';
  }
}

namespace {

double parse_cell(const std::string& s, std::size_t line) {
  if (s == "nan" || s == "NaN" || s == "-nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    std::ostringstream msg;
    msg << "trajectory CSV: bad number '" << s << "' on line " << line;
    throw InvalidArgument(msg.str());
  }
}

}  // namespace

TrajectoryLog read_trajectory_csv(std::istream& in) {
  TrajectoryLog log;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      const std::string value = line.substr(eq + 1);
      if (key == "seed") log.seed = std::stoull(value);
      if (key == "config_hash") log.config_hash = value;
      continue;
    }
    if (!header) {
      if (line.rfind("t,W2_to_target,F_value,pert_norm,u_t", 0) != 0)
        throw InvalidArgument("trajectory CSV: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 5 || cells.size() > 6) {
      std::ostringstream msg;
      msg << "trajectory CSV: expected 5 or 6 columns on line " << lineno;
      throw InvalidArgument(msg.str());
    }
    log.append(parse_cell(cells[0], lineno), parse_cell(cells[1], lineno), parse_cell(cells[2], lineno),
               parse_cell(cells[3], lineno), parse_cell(cells[4], lineno));
    if (cells.size() == 6) log.bound.back() = parse_cell(cells[5], lineno);
  }
  if (!header) throw InvalidArgument("trajectory CSV: missing header");
  log.validate();
  return log;
}

}  // namespace dissflow
