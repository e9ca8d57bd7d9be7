# Jumps pushed through an SDE
# ===========================
#
# Each jump x is replaced by the terminal value of dX = b(X, x) dt + sigma(X, x) dB
# started at x, with B an independent Brownian path carried as the mark.  The
# mark space is Wiener space with the Ornstein-Uhlenbeck form; for one jump
# Gamma = K_T (sum_v K_v^-1 sigma_v sigma_v^T K_v^-T dt) K_T^T, where K is the
# Jacobian flow.

# %%
import numpy as np

import lentparticle as lp
from lentparticle import sde

x = np.array([0.4, -0.3])
for name in ["additive", "linear", "rotation", "nonlinear"]:
    c = sde.preset(name)
    path = sde.sample_driver(256, c.noise_dim, 1.0, seed=5)
    G = sde.gamma_sde(c, x, path)
    print(f"{name:10s} eigenvalues of gamma: {np.linalg.eigvalsh(G)}")

# With one noise and sigma(z) proportional to z, a single jump only moves along
# one direction: gamma is rank one.  Several jumps are needed for full rank.

# Additive noise: the answer is sigma sigma^T T whatever the path.
c = sde.preset("additive")
print("additive exact:", np.allclose(sde.gamma_sde(c, x, path), c.sigma(x, x) @ c.sigma(x, x).T))

# %%
# The derivative in the driver is realized by an independent copy B-hat: the
# conditional covariance of flat_sde_sample reproduces gamma.
c = sde.preset("nonlinear")
path = sde.sample_driver(64, c.noise_dim, 1.0, seed=6)
draws = sde.flat_sde_sample(c, x, path, seed=7, size=100_000)
print("empirical:\n", draws.T @ draws / len(draws))
print("gamma_sde:\n", sde.gamma_sde(c, x, path))

# %%
# Rank: Gamma over a configuration of jumps is full rank when the vectors
# sigma(x_n, x_n) span R^m along jumps accumulating at the origin.
for name in ["linear", "rotation", "constant_deficient"]:
    c = sde.preset(name)
    jumps = lp.jump_sequence_to_zero(c.dim, 25, seed=8)
    print(f"{name:18s} span rank {lp.prop4_span_test(sde.prop4_fields(c), jumps)} of {c.dim}")

# %%
# Coefficients vanishing at zero keep E|X_t^x|^2 / |x|^2 bounded as x -> 0.
c = sde.preset("linear")
grid = [np.array([0.6, 0.8]) * 10.0 ** -k for k in range(5)]
rep = sde.lemma3_moment_check(c, 1.0, grid, 4000, seed=9)
print("ratios:", np.round(rep.ratios[2], 4), "envelope k e^{kt} =", round(rep.envelope, 4))
