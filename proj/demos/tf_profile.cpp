// Screening profiles of the neutral atom and two positive ions at Z = 1, as
// CSV on stdout (r, lambda, phi, rho, V_TF); summary lines go to stderr.

#include <semiclassic/thomas_fermi.hpp>

#include <cstdio>

using namespace semiclassic;

int main() {
    std::printf("r,lambda,phi,rho,V_TF\n");
    for (double lambda : {1.0, 0.75, 0.5}) {
        const TFSolution s = solve(TFParams{lambda, 1.0});
        std::fprintf(stderr, "lambda %.2f: slope0 %.9f  mu %.6f  edge %g  E_TF %.10f\n", lambda, s.slope0, s.mu,
                     s.edge_radius, tf_energy(s));
        const double hi = s.neutral() ? 50.0 : 0.999 * s.edge_radius;
        for (double r : log_space(1e-3, hi, 40))
            std::printf("%.6e,%.2f,%.9e,%.9e,%.9e\n", r, lambda, s.phi(r), s.rho(r), tf_potential_value(s, r));
    }
}
