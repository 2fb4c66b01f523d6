#include <cstdio>
#include <fstream>
#include <sstream>

#include "sdm/data_io.hpp"
#include "sdm/ops.hpp"
#include "sdm/random.hpp"

namespace sdm {

namespace {

constexpr const char* kManifestHeader = "id\tleft\tright\tdisp_left\tdisp_right\tocclusion_left";

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Tensor occlusion_image(const Tensor& occ) {
  return reshape(occ, {1, occ.extent(0), occ.extent(1)});
}

}  // namespace

std::vector<DatasetEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<DatasetEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == kManifestHeader) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    require(cols.size() == 6, ErrorKind::format,
            path.string() + ":" + std::to_string(line_no) + ": expected 6 tab-separated columns, got " +
                std::to_string(cols.size()));
    entries.push_back({cols[0], resolve(base, cols[1]), resolve(base, cols[2]), resolve(base, cols[3]),
                       resolve(base, cols[4]), resolve(base, cols[5])});
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<DatasetEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write manifest " + path.string());
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    return p.parent_path() == base ? p.filename().string() : p.string();
  };
  out << kManifestHeader << "\n";
  for (const auto& e : entries) {
    out << e.id << "\t" << rel(e.left) << "\t" << rel(e.right) << "\t" << rel(e.disp_left) << "\t"
        << rel(e.disp_right) << "\t" << rel(e.occlusion_left) << "\n";
  }
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

StereoPair load_pair(const DatasetEntry& entry) {
  StereoPair pair;
  pair.left = read_pgm(entry.left);
  pair.right = read_pgm(entry.right);
  require(pair.left.shape() == pair.right.shape(), ErrorKind::shape,
          "pair " + entry.id + ": left and right extents differ");
  pair.gt_disp_left = read_pfm(entry.disp_left);
  pair.gt_disp_right = read_pfm(entry.disp_right);
  const Shape plane{pair.height(), pair.width()};
  require(pair.gt_disp_left.shape() == plane && pair.gt_disp_right.shape() == plane, ErrorKind::shape,
          "pair " + entry.id + ": disparity extents differ from the images");
  const Tensor occ = read_pgm(entry.occlusion_left);
  require(occ.extent(1) == plane[0] && occ.extent(2) == plane[1], ErrorKind::shape,
          "pair " + entry.id + ": occlusion extents differ from the images");
  pair.occlusion_left = reshape(occ, plane);
  pair.occlusion_right = cross_check_occlusion(pair.gt_disp_right, pair.gt_disp_left, ViewSide::right);
  return pair;
}

std::vector<StereoPair> load_dataset(const std::filesystem::path& manifest) {
  std::vector<StereoPair> pairs;
  for (const auto& e : read_manifest(manifest)) pairs.push_back(load_pair(e));
  return pairs;
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index) {
  return Rng::derived(dataset_seed, 0x64617461 + index).next();  // "data"
}

std::vector<StereoPair> generate_dataset(const SceneSpec& base, std::size_t count, std::uint64_t seed) {
  std::vector<StereoPair> pairs;
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec s = base;
    s.seed = scene_seed(seed, i);
    pairs.push_back(render_synthetic_pair(s));
  }
  return pairs;
}

std::vector<DatasetEntry> write_dataset(const SceneSpec& base, const std::filesystem::path& dir, std::size_t count,
                                        std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<DatasetEntry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec s = base;
    s.seed = scene_seed(seed, i);
    const StereoPair p = render_synthetic_pair(s);
    char id[32];
    std::snprintf(id, sizeof id, "pair_%04zu", i);
    DatasetEntry e{id,
                   dir / (std::string(id) + "_left.pgm"),
                   dir / (std::string(id) + "_right.pgm"),
                   dir / (std::string(id) + "_disp_left.pfm"),
                   dir / (std::string(id) + "_disp_right.pfm"),
                   dir / (std::string(id) + "_occlusion_left.pgm")};
    write_pgm(e.left, p.left);
    write_pgm(e.right, p.right);
    write_pfm(e.disp_left, p.gt_disp_left);
    write_pfm(e.disp_right, p.gt_disp_right);
    write_pgm(e.occlusion_left, occlusion_image(p.occlusion_left));
    entries.push_back(std::move(e));
  }
  write_manifest(dir / "manifest.tsv", entries);
  return entries;
}

}  // namespace sdm
