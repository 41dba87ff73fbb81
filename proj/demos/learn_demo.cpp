// Learns a 16 x 32 dictionary from 300 synthetic 3-sparse signals with each
// engine and prints the recovery error every few iterations.

#include "romd/romd.hpp"

#include <cstdio>
#include <string>

int main() {
  const romd::ProblemInstance inst = romd::gen_instance(16, 32, 300, 3, 2024);
  const romd::Matrix D0 = romd::init_dictionary(inst.Y, 32, romd::InitPolicy::DataColumns, 7);

  for (romd::Engine engine : {romd::Engine::ROMD, romd::Engine::KSVD, romd::Engine::MOD}) {
    romd::LearnConfig cfg;
    cfg.engine = engine;
    cfg.max_outer_iter = 20;
    cfg.omp.sparsity = 3;
    const romd::LearnTrace trace = romd::learn(inst.Y, D0, cfg, &inst.D_true);
    std::printf("%-5s", std::string(romd::to_string(engine)).c_str());
    for (const auto& rec : trace.records)
      if (rec.iteration % 5 == 0) std::printf("  it%-3ld %.4f", rec.iteration, rec.recovery_error);
    std::printf("\n");
  }
  return 0;
}
