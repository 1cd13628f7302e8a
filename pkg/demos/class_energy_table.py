"""Tabulate the five homotopy classes and their geodesic loop energies.

The vacuum set of the sextic potential is a quotient of the 3-sphere by the
quaternion group, so free loop classes correspond to conjugacy classes
{1}, {-1}, {+-i}, {+-j}, {+-k}.  Each non-trivial class has a closed-form
minimal loop energy that is a small integer multiple of kappa* = pi r*^2 / 2;
here we recover those numbers numerically from dense polygonal loops.
"""

import numpy as np

import biaxldg.q8_topology as q8
import biaxldg.qtensor_core as qc

MP = qc.derive_params(6.0, 1.0, 1.0, 1.0)


def main():
    K = MP.kappa_star
    print(f"material (6,1,1,1):  r* = {MP.r_star:.6f},  kappa* = {K:.6f}")
    print()

    table = q8.class_energies(MP)
    print(f"{'class':>6} {'E lower':>10} {'E upper':>10} {'E*':>10}   E*/kappa*")
    for tag in ("H0", "H1", "H2", "H3", "H4"):
        ce = table[tag]
        print(f"{tag:>6} {ce.lower:>10.6f} {ce.upper:>10.6f} {ce.e_star:>10.6f}"
              f"   {ce.e_star / K:.4f}")
    print()

    # refine the four named loops and watch the polygonal energy converge
    builders = [("A0 (class H1)", q8.loop_A0, K),
                ("B0 (class H2)", q8.loop_B0, K),
                ("L2 (class H3)", q8.loop_L2, 4 * K),
                ("L3 (class H4)", q8.loop_L3, 4 * K)]
    print(f"{'loop':>14} " + " ".join(f"N={n:>5}" for n in (64, 256, 1024, 4096))
          + "     exact")
    for name, build, exact in builders:
        vals = [q8.loop_energy(build(MP, n)) for n in (64, 256, 1024, 4096)]
        row = " ".join(f"{v:7.5f}" for v in vals)
        print(f"{name:>14} {row}   {exact:7.5f}")
    worst = max(abs(q8.loop_energy(b(MP, 4096)) - e) / e for _, b, e in builders)
    print(f"\nworst relative error at N=4096: {worst:.2e}")


if __name__ == "__main__":
    main()
