#include "perfvox/age_bins.hpp"

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"

namespace perfvox {

std::string AgeBin::label() const { return std::to_string(lo) + "-" + std::to_string(hi); }

AgeBins::AgeBins(std::vector<AgeBin> bins) : bins_(std::move(bins)) {
  if (bins_.empty()) throw Error(ErrorCode::Config, "age bins: at least one bin is required");
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    if (bins_[i].lo > bins_[i].hi) throw Error(ErrorCode::Config, "age bins: bin " + bins_[i].label() + " has lo > hi");
    if (i > 0 && bins_[i].lo <= bins_[i - 1].hi) {
      throw Error(ErrorCode::Config,
                  "age bins: " + bins_[i - 1].label() + " and " + bins_[i].label() + " overlap or are out of order");
    }
  }
}

AgeBins AgeBins::standard() { return AgeBins({{8, 12}, {13, 20}, {21, 30}, {31, 50}, {51, 70}, {71, 92}}); }

AgeBins AgeBins::coarse() { return AgeBins({{8, 20}, {21, 40}, {41, 80}, {81, 92}}); }

AgeBins AgeBins::preset(std::string_view name) {
  if (name == "standard") return standard();
  if (name == "coarse") return coarse();
  return parse(name);
}

AgeBins AgeBins::parse(std::string_view text) {
  std::vector<AgeBin> bins;
  for (const auto& field : split_csv_line(text)) {
    auto dash = field.find('-', 1);
    if (dash == std::string::npos) throw Error(ErrorCode::Config, "age bins: expected lo-hi, got '" + field + "'");
    try {
      bins.push_back({static_cast<int>(parse_int(field.substr(0, dash), "bin lo")),
                      static_cast<int>(parse_int(field.substr(dash + 1), "bin hi"))});
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, std::string("age bins: ") + e.detail());
    }
  }
  return AgeBins(std::move(bins));
}

std::string AgeBins::to_string() const {
  std::string out;
  for (const auto& b : bins_) {
    if (!out.empty()) out += ',';
    out += b.label();
  }
  return out;
}

std::optional<std::size_t> AgeBins::find(int age) const {
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    if (bins_[i].contains(age)) return i;
  }
  return std::nullopt;
}

std::size_t AgeBins::index_of(int age) const {
  auto i = find(age);
  if (!i) throw Error(ErrorCode::BinCoverage, "age " + std::to_string(age) + " falls outside bins " + to_string());
  return *i;
}

}  // namespace perfvox
