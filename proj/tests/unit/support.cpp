#include "support.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  path_ = fs::temp_directory_path() /
          ("mvalign_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out << text;
}

int run_cli(const std::string& args) {
  const std::string command = std::string("\"") + MVALIGN_CLI_PATH + "\" " + args + " 2>/dev/null >/dev/null";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path source_path(const std::string& relative) { return fs::path(MVALIGN_SOURCE_DIR) / relative; }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 random_vec3(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

mvalign::UnitQuaternion random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return mvalign::UnitQuaternion(n(rng), n(rng), n(rng), n(rng));
}

mvalign::CameraFrame simple_frame(int index) {
  mvalign::CameraFrame f;
  f.frame_index = index;
  f.K << 500, 0, 320, 0, 500, 240, 0, 0, 1;
  f.image_width = 640;
  f.image_height = 480;
  return f;
}

mvalign::CadModel unit_cube(const std::string& id, const std::string& class_id) {
  return mvalign::build_model({id, class_id, mvalign::Primitive::box, Vec3::Ones(), 16, 1});
}

mvalign::SynthSpec single_object_spec(std::uint64_t seed, int n_frames) {
  mvalign::SynthSpec s;
  s.seed = seed;
  s.n_objects = {1, 1};
  s.templates = {{"box_a", "box", mvalign::Primitive::box, {1.0, 0.7, 0.5}, 16, 1}};
  s.pose.t_min = s.pose.t_max = Vec3(0, 0, 0.4);
  s.pose.yaw_min_deg = s.pose.yaw_max_deg = 30.0;
  s.pose.s_min = s.pose.s_max = Vec3(1.5, 1.0, 0.8);
  s.trajectory.kind = mvalign::TrajectoryKind::orbit;
  s.trajectory.n_frames = {n_frames, n_frames};
  s.trajectory.radius = 3.0;
  s.trajectory.height = 1.2;
  s.trajectory.start_deg = 0.0;
  s.trajectory.end_deg = 90.0;
  s.trajectory.look_at = Vec3(0, 0, 0.4);
  return s;
}

}  // namespace testing
