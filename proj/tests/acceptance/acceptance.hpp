#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace pmm::acceptance {

struct Outcome {
  bool pass = false;
  std::string measured;
};

struct Criterion {
  int id;
  std::string title;
  bool nightly;
  std::function<Outcome()> run;
};

std::vector<Criterion> margin_criteria();     // 1, 2, 3, 9
std::vector<Criterion> surrogate_criteria();  // 4, 5, 6
std::vector<Criterion> inference_criteria();  // 7, 8, 10, 11

// Directory for trained nets shared between criteria and reruns.
std::filesystem::path cache_dir();

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <typename... Args>
std::string fmt(Args&&... args) {
  std::ostringstream os;
  os.precision(4);
  (os << ... << args);
  return os.str();
}

}  // namespace pmm::acceptance
