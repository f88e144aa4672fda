#include "perfvox/manifest.hpp"

#include <set>
#include <sstream>

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"

namespace perfvox {

std::string_view to_string(Sex sex) { return sex == Sex::M ? "M" : "F"; }

Sex parse_sex(std::string_view token) {
  if (token == "M" || token == "m") return Sex::M;
  if (token == "F" || token == "f") return Sex::F;
  throw Error(ErrorCode::Parse, "unknown sex token '" + std::string(token) + "' (expected M or F)");
}

std::filesystem::path CohortManifest::resolve(const ParticipantMeta& row) const {
  std::filesystem::path p(row.volume_path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

void validate_manifest(const CohortManifest& manifest) {
  if (manifest.rows.empty()) throw Error(ErrorCode::Parse, "manifest has no participants");
  std::set<std::string> seen;
  for (const auto& row : manifest.rows) {
    if (row.id.empty()) throw Error(ErrorCode::Parse, "empty participant id");
    if (!seen.insert(row.id).second) throw Error(ErrorCode::Parse, "duplicate participant id '" + row.id + "'");
    if (row.age < 0 || row.age > kMaxAge) {
      throw Error(ErrorCode::Parse, "age " + std::to_string(row.age) + " out of range for '" + row.id + "'");
    }
  }
}

CohortManifest load_manifest(const std::filesystem::path& path) {
  CsvTable table = read_csv(path);
  if (table.header != std::vector<std::string>{"id", "age", "sex", "path"}) {
    throw Error(ErrorCode::Parse, path.string() + ": header must be 'id,age,sex,path'");
  }
  CohortManifest manifest;
  manifest.base_dir = path.parent_path();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    std::string where = path.string() + ":" + std::to_string(table.line_numbers[r]);
    try {
      ParticipantMeta meta;
      meta.id = f[0];
      long long age = parse_int(f[1], "age");
      if (age < 0 || age > kMaxAge) throw Error(ErrorCode::Parse, "age " + f[1] + " out of range [0, 130]");
      meta.age = static_cast<int>(age);
      meta.sex = parse_sex(f[2]);
      meta.volume_path = f[3];
      if (meta.volume_path.empty()) throw Error(ErrorCode::Parse, "empty volume path");
      manifest.rows.push_back(std::move(meta));
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, where + ": " + e.detail());
    }
  }
  validate_manifest(manifest);
  return manifest;
}

void save_manifest(const CohortManifest& manifest, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "id,age,sex,path\n";
  for (const auto& row : manifest.rows) {
    out << row.id << ',' << row.age << ',' << to_string(row.sex) << ',' << row.volume_path << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace perfvox
