#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace perfvox {

enum class Sex { M, F };

std::string_view to_string(Sex sex);
// Accepts M, F, m, f only.
Sex parse_sex(std::string_view token);

struct ParticipantMeta {
  std::string id;
  int age = 0;
  Sex sex = Sex::F;
  std::string volume_path;

  bool operator==(const ParticipantMeta&) const = default;
};

inline constexpr int kMaxAge = 130;

struct CohortManifest {
  std::vector<ParticipantMeta> rows;
  std::filesystem::path base_dir;  // relative volume paths resolve against this

  std::filesystem::path resolve(const ParticipantMeta& row) const;
  std::size_t size() const { return rows.size(); }
};

// Validates non-empty, unique ids, ages within [0, 130].
void validate_manifest(const CohortManifest& manifest);

// CSV with header `id,age,sex,path`.
CohortManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CohortManifest& manifest, const std::filesystem::path& path);

}  // namespace perfvox
