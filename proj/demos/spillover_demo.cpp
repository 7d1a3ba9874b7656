// Simulates a three-venue volatility system, re-estimates it and prints the
// lag-1 matrix, spillover sums and the response to a one-sd shock.

#include <cstdio>

#include "voltx/sim.hpp"
#include "voltx/vmem.hpp"

int main() {
  using namespace voltx;
  VParamSet truth = VParamSet::zeros(3);
  truth.A[0] << 0.30, 0.00, 0.20,
                0.05, 0.35, 0.15,
                0.00, 0.00, 0.45;
  truth.B[0] << 0.45, 0.40, 0.50;
  truth.s << 0.25, 0.28, 0.30;

  VMemSimOptions so;
  so.names = {"VenueA", "VenueB", "VenueC"};
  const Panel panel = simulate_vlogmem(truth, 20000, 7, so).panel();
  const VFitResult fit = fit_vlogmem(panel, MemSpec{});

  std::printf("%-8s", "");
  for (const auto& n : fit.instruments) std::printf("%10s", n.c_str());
  std::printf("\n");
  for (Eigen::Index i = 0; i < fit.K(); ++i) {
    std::printf("%-8s", fit.instruments[static_cast<std::size_t>(i)].c_str());
    for (Eigen::Index j = 0; j < fit.K(); ++j)
      std::printf("%7.3f%-3s", fit.A[0].estimate(i, j), stars(fit.A[0].pvalue(i, j)).c_str());
    std::printf("\n");
  }

  const SpilloverSummary ss = spillover_summary(fit);
  std::printf("\n%-8s%10s%10s\n", "", "To", "From");
  for (Eigen::Index i = 0; i < fit.K(); ++i)
    std::printf("%-8s%10.4f%10.4f\n", fit.instruments[static_cast<std::size_t>(i)].c_str(), ss.to_sums(i),
                ss.from_sums(i));

  const auto resp = shock_response(fit, "VenueC", Shock::one_sd(fit.params.s(2)));
  std::printf("\none-sd shock to VenueC:\n");
  for (Eigen::Index i = 0; i < fit.K(); ++i)
    std::printf("  %-8s %+.2f%%\n", fit.instruments[static_cast<std::size_t>(i)].c_str(), 100.0 * resp(i));
  return 0;
}
