// The nine error-budget terms along alpha = 1e-2 ... 1e-6 at the default
// partition, each scaled by alpha^{4/3}: a term is harmless when its column
// shrinks down the table.

#include <semiclassic/bounds.hpp>

#include <cstdio>

using namespace semiclassic;

int main() {
    const TFSolution atom = solve(TFParams{1.0, 1.0}, 1e-8);
    const CoherentSpec cs = reference_bump(0.55);
    const double c_phi = mean_field_constant(cs);
    const double delta = 2.0 / pi;

    bool header = true;
    for (double a : log_space(1e-2, 1e-6, 5)) {
        const ErrorBudget B = assemble_error_budget(PartitionParams{0.95, 0.5, 0.55, 0.1, a}, atom, delta, cs, c_phi);
        if (header) {
            std::printf("%-8s", "alpha");
            for (const auto& t : B.terms) std::printf(" %18s", t.name.c_str());
            std::printf(" %18s\n", "total");
            header = false;
        }
        const double w = std::pow(a, 4.0 / 3.0);
        std::printf("%-8.0e", a);
        for (const auto& t : B.terms) std::printf(" %18.4e", t.value * w);
        std::printf(" %18.4e\n", B.total() * w);
    }
}
