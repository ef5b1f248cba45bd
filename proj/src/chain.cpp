#include "plr/chain.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "plr/errors.hpp"

namespace plr {

Eigen::MatrixXd Chain::draw(Eigen::Index s) const {
  Eigen::MatrixXd out(coef_rows, coef_cols);
  for (Eigen::Index r = 0; r < coef_rows; ++r) {
    for (Eigen::Index c = 0; c < coef_cols; ++c) out(r, c) = draws(s, r * coef_cols + c);
  }
  return out;
}

Eigen::MatrixXd Chain::normalized_draws() const {
  Eigen::MatrixXd out = draws;
  for (Eigen::Index s = 0; s < out.rows(); ++s) out.row(s) /= out.row(s).sum();
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void write_chain_csv(std::ostream& out, const Chain& chain, const std::string& coef_prefix) {
  out << "draw";
  for (Eigen::Index r = 0; r < chain.coef_rows; ++r) {
    for (Eigen::Index c = 0; c < chain.coef_cols; ++c) out << ',' << coef_prefix << '_' << r + 1 << '_' << c + 1;
  }
  const bool with_hyper = chain.hyper.size() == chain.size() && chain.size() > 0;
  if (with_hyper) out << ',' << chain.hyper_name;
  out << '\n';
  for (Eigen::Index s = 0; s < chain.size(); ++s) {
    out << s + 1;
    for (Eigen::Index c = 0; c < chain.draws.cols(); ++c) out << ',' << format_double(chain.draws(s, c));
    if (with_hyper) out << ',' << format_double(chain.hyper(s));
    out << '\n';
  }
}

Chain read_chain_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParse, "chain file is empty");
  const auto header = split_line(line);
  if (header.empty() || header.front() != "draw") {
    throw Error(ErrorKind::kParse, "chain header must start with 'draw'");
  }
  Chain chain;
  Eigen::Index coef_count = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& name = header[c];
    const auto last = name.rfind('_');
    const auto mid = last == std::string::npos ? std::string::npos : name.rfind('_', last - 1);
    if (mid == std::string::npos) {
      if (c + 1 != header.size()) throw Error(ErrorKind::kParse, "unexpected chain column " + name);
      chain.hyper_name = name;
      continue;
    }
    const int r = std::stoi(name.substr(mid + 1, last - mid - 1));
    const int k = std::stoi(name.substr(last + 1));
    chain.coef_rows = std::max<Eigen::Index>(chain.coef_rows, r);
    chain.coef_cols = std::max<Eigen::Index>(chain.coef_cols, k);
    ++coef_count;
  }
  if (coef_count != chain.coef_rows * chain.coef_cols) {
    throw Error(ErrorKind::kParse, "chain header does not describe a full coefficient matrix");
  }

  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::kParse, "chain line " + std::to_string(line_no) + " has " +
                                         std::to_string(cells.size()) + " cells, expected " +
                                         std::to_string(header.size()));
    }
    std::vector<double> values;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      const auto& cell = cells[c];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw Error(ErrorKind::kParse, "non-numeric chain value at line " + std::to_string(line_no));
      }
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }
  chain.draws.resize(static_cast<Eigen::Index>(rows.size()), coef_count);
  if (!chain.hyper_name.empty()) chain.hyper.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (Eigen::Index c = 0; c < coef_count; ++c) chain.draws(static_cast<Eigen::Index>(s), c) = rows[s][static_cast<std::size_t>(c)];
    if (!chain.hyper_name.empty()) chain.hyper(static_cast<Eigen::Index>(s)) = rows[s].back();
  }
  return chain;
}

}  // namespace plr
