#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace perfvox {

struct AgeBin {
  int lo = 0;
  int hi = 0;  // inclusive

  bool contains(int age) const { return age >= lo && age <= hi; }
  std::string label() const;
  bool operator==(const AgeBin&) const = default;
};

// Ordered, disjoint, inclusive integer ranges.
class AgeBins {
 public:
  AgeBins() = default;
  explicit AgeBins(std::vector<AgeBin> bins);

  static AgeBins standard();  // 8-12, 13-20, 21-30, 31-50, 51-70, 71-92
  static AgeBins coarse();    // 8-20, 21-40, 41-80, 81-92
  static AgeBins preset(std::string_view name);

  // "8-12,13-20,..."
  static AgeBins parse(std::string_view text);
  std::string to_string() const;

  const std::vector<AgeBin>& bins() const { return bins_; }
  std::size_t size() const { return bins_.size(); }
  const AgeBin& operator[](std::size_t i) const { return bins_[i]; }

  std::optional<std::size_t> find(int age) const;
  // Throws BinCoverage when no bin holds the age.
  std::size_t index_of(int age) const;

  bool operator==(const AgeBins&) const = default;

 private:
  std::vector<AgeBin> bins_;
};

}  // namespace perfvox
