"""Sanity checks on the geometry of the maximally biaxial well set.

Every point of the vacuum is r*(nn - mm) for an orthonormal pair (n, m).
On such points the bulk potential, its trace-projected gradient, and the two
polynomial gap functions all vanish to rounding; off the vacuum, the smoothed
biaxiality phi_tau is sandwiched between computable multiples of phi_0.
"""

import numpy as np

import biaxldg.qtensor_core as qc
import biaxldg.vacuum_manifold as vm

MP = qc.derive_params(6.0, 1.0, 1.0, 1.0)


def main():
    rng = np.random.default_rng(7)
    coeffs, n, m = vm.random_manifold_points(MP, 5000, rng)

    fb = qc.bulk_energy(coeffs, MP)
    grad = qc.bulk_gradient(coeffs, MP)
    zeta, xi = qc.wells_gap(coeffs, MP)
    scale = max(1.0, MP.r_star ** 6)
    print("on 5000 random vacuum points (scaled by r*^6):")
    print(f"  max f_b        = {np.abs(fb).max() / scale:.3e}")
    print(f"  max |grad f_b| = {np.linalg.norm(grad, axis=1).max() / scale:.3e}")
    print(f"  max zeta, xi   = {zeta.max() / scale:.3e}, {xi.max() / scale:.3e}")

    # distance and projection: nudge each point along a random direction
    step = 0.15
    noise = rng.standard_normal(coeffs.shape)
    noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    nearby = coeffs + step * noise
    d = vm.dist_to_manifold(nearby, MP)
    proj = vm.project_field(nearby, MP)
    back = np.linalg.norm(proj - nearby, axis=1)
    print(f"\nafter a {step} nudge: dist in [{d.min():.4f}, {d.max():.4f}],"
          f" |Q - pi(Q)| matches dist to {np.abs(back - d).max():.1e}")

    # the phi_tau sandwich on generic tensors
    sample = 2.0 * rng.standard_normal((20000, 5))
    for tau in (0.05, 0.25, 0.45):
        phi1, phi2, phi0, phit = vm.biaxiality(sample, MP, tau)
        upper = phi0 - phit                      # phi_tau <= phi_0
        lower = 6.0 / (6.0 - 5.0 * tau) * phit - phi0
        print(f"tau = {tau:4.2f}: worst sandwich slack"
              f" {min(upper.min(), lower.min()):+.2e} (>= 0 up to rounding)")


if __name__ == "__main__":
    main()
