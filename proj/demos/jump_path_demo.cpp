// Paths of the truncated jump SDE: thinning and smooth-mark representations
// at one level, plus the tangent flow along a single path.

#include <cstdio>

#include "mkit/jump_sde.hpp"

int main() {
    using namespace mkit;
    const JumpSystem sys(default_jump_model(), 4);
    std::printf("level 4: mu(B_5) = %.6g, lambda = %.6g\n", sys.mu(), sys.lambda());

    RandomStream rng(2024);
    for (int k = 0; k < 3; ++k) {
        const PathRecord p = sys.simulate_path(0.5, rng);
        std::size_t accepted = 0;
        for (const auto& e : p.events) accepted += e.accepted;
        std::printf("thinning path %d: %zu proposals, %zu accepted, X_t = %.6f\n", k, p.events.size(), accepted,
                    p.final_state[0]);
    }
    for (int k = 0; k < 3; ++k) {
        const PathRecord p = sys.simulate_path_smooth(0.5, rng);
        const TangentFlow tf = sys.tangent_flow(p);
        std::printf("smooth path %d: %zu jumps, X_t = %.6f, Y_t = %.6f, |Y Y^-1 - I| = %.1e, rho = %.4f\n", k,
                    p.events.size(), p.final_state[0], tf.Y(0, 0), tf.inverse_residual, tf.rho);
    }
}
