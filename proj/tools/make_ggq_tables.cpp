// Generates the quadrature table asset consumed by load_or_build_ggq():
// per-target self rules and the graded adjacent rule, written as a
// checksummed hex-float text file.
//
// Usage: make_ggq_tables <order> <output-path>

#include <cstdio>
#include <cstdlib>
#include <exception>

#include "axem/quadops.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s <order> <output-path>\n", argv[0]);
    return 2;
  }
  try {
    const int p = std::atoi(argv[1]);
    axem::GGQTables tables = axem::build_ggq_tables(p);
    const double resid = axem::ggq_max_residual(tables);
    if (resid > 1e-13) {
      std::fprintf(stderr, "constructed tables fail verification: %.3e\n",
                   resid);
      return 3;
    }
    axem::write_ggq_tables(tables, argv[2]);
    axem::GGQTables back = axem::read_ggq_tables(argv[2]);
    if (back.self_rules.size() != tables.self_rules.size()) {
      std::fprintf(stderr, "round-trip check failed\n");
      return 3;
    }
    std::printf("wrote %s (order %d, residual %.3e)\n", argv[2], p, resid);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
