#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "cosyn/net.hpp"

namespace cosyn {

namespace detail {

inline void write_i32(std::ofstream& f, int32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
inline int32_t read_i32(std::ifstream& f) {
  int32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

inline void write_mat(std::ofstream& f, const Mat& m) {
  write_i32(f, static_cast<int32_t>(m.rows()));
  write_i32(f, static_cast<int32_t>(m.cols()));
  for (int r = 0; r < m.rows(); ++r)
    f.write(reinterpret_cast<const char*>(m.row(r).eval().data()),
            static_cast<std::streamsize>(m.cols() * sizeof(double)));
}

inline Mat read_mat(std::ifstream& f) {
  const int rows = read_i32(f), cols = read_i32(f);
  Mat m(rows, cols);
  std::vector<double> row(cols);
  for (int r = 0; r < rows; ++r) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(cols * sizeof(double)));
    for (int c = 0; c < cols; ++c) m(r, c) = row[c];
  }
  return m;
}

inline void write_string(std::ofstream& f, const std::string& s) {
  write_i32(f, static_cast<int32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::ifstream& f) {
  const int n = read_i32(f);
  std::string s(static_cast<size_t>(n), '\0');
  f.read(s.data(), n);
  return s;
}

inline constexpr int32_t kCheckpointMagic = 0x434f5359;  // "COSY"
inline constexpr int32_t kCheckpointVersion = 1;

inline void write_plan(std::ofstream& f, const DimensionPlan& p) {
  for (int v : {p.d_audio, p.d_text, p.d_speaker, p.d_face_feat, p.d_face_comp, p.d_face_latent,
                p.d_pose_feat, p.d_pose_comp, p.d_pose_latent})
    write_i32(f, v);
}

inline DimensionPlan read_plan(std::ifstream& f) {
  DimensionPlan p;
  p.d_audio = read_i32(f);
  p.d_text = read_i32(f);
  p.d_speaker = read_i32(f);
  p.d_face_feat = read_i32(f);
  p.d_face_comp = read_i32(f);
  p.d_face_latent = read_i32(f);
  p.d_pose_feat = read_i32(f);
  p.d_pose_comp = read_i32(f);
  p.d_pose_latent = read_i32(f);
  return p;
}

inline void write_store(std::ofstream& f, const ad::ParamStore& ps) {
  write_i32(f, static_cast<int32_t>(ps.params.size()));
  for (const auto& [name, var] : ps.params) {
    write_string(f, name);
    write_mat(f, var.val());
  }
}

inline void read_store(std::ifstream& f, ad::ParamStore& ps) {
  const int n = read_i32(f);
  require(n == static_cast<int>(ps.params.size()), "checkpoint: parameter count mismatch");
  for (int i = 0; i < n; ++i) {
    const std::string name = read_string(f);
    Mat m = read_mat(f);
    auto it = ps.params.find(name);
    require(it != ps.params.end(), "checkpoint: unknown parameter " + name);
    require(m.rows() == it->second.rows() && m.cols() == it->second.cols(),
            "checkpoint: shape mismatch for " + name);
    it->second.mutable_val() = m;
  }
}

}  // namespace detail

// Single archive holding every named parameter collection of generator,
// discriminator and the dimension plan. Loading into nets built from a
// different plan is a hard error.
inline void save_checkpoint(const std::filesystem::path& path, const Generator& gen,
                            const Discriminator& disc) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open " + path.string());
  detail::write_i32(f, detail::kCheckpointMagic);
  detail::write_i32(f, detail::kCheckpointVersion);
  detail::write_plan(f, gen.cfg.dims);
  detail::write_store(f, gen.params);
  detail::write_store(f, disc.params);
  if (!f) throw IoError("save_checkpoint: write failed");
}

inline void load_checkpoint(const std::filesystem::path& path, Generator& gen, Discriminator& disc) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path.string());
  if (detail::read_i32(f) != detail::kCheckpointMagic) throw IoError("load_checkpoint: bad magic");
  if (detail::read_i32(f) != detail::kCheckpointVersion)
    throw IoError("load_checkpoint: unsupported version");
  const DimensionPlan plan = detail::read_plan(f);
  if (!(plan == gen.cfg.dims)) throw PlanMismatch("load_checkpoint: dimension plan mismatch");
  detail::read_store(f, gen.params);
  detail::read_store(f, disc.params);
}

// Standalone archive for a single parameter store (phoneme predictor, autoencoder).
inline void save_params(const std::filesystem::path& path, const ad::ParamStore& ps) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_params: cannot open " + path.string());
  detail::write_i32(f, detail::kCheckpointMagic);
  detail::write_i32(f, detail::kCheckpointVersion);
  detail::write_store(f, ps);
}

inline void load_params(const std::filesystem::path& path, ad::ParamStore& ps) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_params: cannot open " + path.string());
  if (detail::read_i32(f) != detail::kCheckpointMagic) throw IoError("load_params: bad magic");
  if (detail::read_i32(f) != detail::kCheckpointVersion)
    throw IoError("load_params: unsupported version");
  detail::read_store(f, ps);
}

}  // namespace cosyn
