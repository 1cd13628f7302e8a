"""Classify boundary loops by lifting them through the quaternionic cover.

A loop of maximally biaxial tensors lifts to a path of unit quaternions; the
deck transformation between the endpoints picks one of the eight group
elements, and its conjugacy class is the free homotopy class.  The class
survives reparametrization and reversal, swaps conjugate pairs under frame
exchange, and multiplies under concatenation.
"""

import json
import tempfile

import numpy as np

import biaxldg.q8_topology as q8
import biaxldg.qtensor_core as qc

MP = qc.derive_params(6.0, 1.0, 1.0, 1.0)


def rotated(loop, axis, angle):
    """Conjugate every tensor on the loop by a rotation (Rodrigues form)."""
    k = np.asarray(axis, dtype=float)
    k /= np.linalg.norm(k)
    Kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0.0]])
    R = np.eye(3) + np.sin(angle) * Kx + (1 - np.cos(angle)) * (Kx @ Kx)
    out = []
    for c in loop.coeffs:
        Q = qc.QTensor(c).matrix
        out.append(qc.QTensor.from_matrix(R @ Q @ R.T).coeffs)
    return q8.NLoop.from_coeffs(np.array(out), MP)


def main():
    a0 = q8.loop_A0(MP, 256)
    b0 = q8.loop_B0(MP, 256)

    cases = [
        ("A0", a0),
        ("B0", b0),
        ("L2 = A0 * B0", q8.loop_L2(MP, 256)),
        ("constant", q8.constant_loop(MP)),
        ("A0 reversed", q8.reverse_loop(a0)),
        ("A0 swapped (n<->m)", q8.swap_loop(a0)),
        ("A0 * A0", q8.concatenate(a0, a0)),
        ("A0 rotated 30deg about z", rotated(a0, (0, 0, 1), np.pi / 6)),
        ("B0 rotated about (1,1,0)", rotated(b0, (1, 1, 0), 0.8)),
    ]

    reports = []
    print(f"{'loop':>26}  {'class':>5}  {'deck':>8}  energy")
    for name, loop in cases:
        rep = q8.classification_report(loop, MP)
        reports.append(rep)
        print(f"{name:>26}  {rep['tag']:>5}  {rep['deck']:>8}  {rep['energy']:.5f}")

    # the JSON report is what `ldg-experiment classify-loop` prints
    with tempfile.NamedTemporaryFile("r", suffix=".json", delete=False) as fh:
        q8.write_report_json(fh.name, reports)
        fh.seek(0)
        n = len(json.load(open(fh.name)))
    print(f"\nwrote {n} reports to {fh.name}")


if __name__ == "__main__":
    main()
