#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <set>

#include "acceptance.hpp"

namespace pmm::acceptance {

std::filesystem::path cache_dir() {
  if (const char* env = std::getenv("PMM_ACCEPTANCE_CACHE")) return env;
  return std::filesystem::current_path() / "acceptance_cache";
}

}  // namespace pmm::acceptance

int main(int argc, char** argv) {
  using namespace pmm::acceptance;
  CLI::App app{"pmm acceptance suite"};
  std::vector<int> only;
  bool fast = false, nightly = false, list = false;
  app.add_option("criteria", only, "criterion numbers to run (default: all)");
  app.add_flag("--fast", fast, "run the quick criteria only");
  app.add_flag("--nightly", nightly, "run the long criteria only");
  app.add_flag("--list", list, "list criteria and exit");
  CLI11_PARSE(app, argc, argv);

  std::vector<Criterion> all;
  for (auto group : {margin_criteria(), surrogate_criteria(), inference_criteria()})
    all.insert(all.end(), group.begin(), group.end());
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  const std::set<int> wanted(only.begin(), only.end());
  int failed = 0, ran = 0;
  for (const auto& c : all) {
    if (list) {
      std::cout << c.id << (c.nightly ? " (nightly) " : " ") << c.title << '\n';
      continue;
    }
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    if (wanted.empty() && ((fast && c.nightly) || (nightly && !c.nightly))) continue;
    Stopwatch clock;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    if (!o.pass) ++failed;
    std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << " | " << c.title << " | "
              << o.measured << " | " << fmt(clock.seconds()) << " s" << std::endl;
  }
  if (!list && ran == 0) {
    std::cerr << "no criteria selected\n";
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
