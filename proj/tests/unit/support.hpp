#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mvalign/datamodel.hpp"
#include "mvalign/synth.hpp"

namespace testing {

using mvalign::Vec2;
using mvalign::Vec3;
using mvalign::Vec4;

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& file);
void write_file(const std::filesystem::path& file, const std::string& text);

/// Runs the command-line tool with `args`, stderr discarded. Returns its exit code.
int run_cli(const std::string& args);

std::filesystem::path source_path(const std::string& relative);

double uniform(std::mt19937_64& rng, double lo, double hi);
Vec3 random_vec3(std::mt19937_64& rng, double lo, double hi);
mvalign::UnitQuaternion random_rotation(std::mt19937_64& rng);

/// 640x480 pinhole camera, f = 500.
mvalign::CameraFrame simple_frame(int index = 0);

mvalign::CadModel unit_cube(const std::string& id = "cube", const std::string& class_id = "cube");

/// Small noiseless scene: one cube of the given pose seen from an inward
/// orbit of `n_frames` frames.
mvalign::SynthSpec single_object_spec(std::uint64_t seed, int n_frames);

}  // namespace testing
