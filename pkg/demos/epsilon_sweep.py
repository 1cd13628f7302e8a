"""Drive a small epsilon sweep and read the logarithmic energy law.

For a disk with H1 boundary the minimal energy grows like
kappa* log(1/eps) + O(1), so the fitted slope against log(1/eps) should sit
near kappa* already at desk scale.  The same config dict works on the
command line:  ldg-experiment sweep --config cfg.json --deterministic
"""

import json
import tempfile
from pathlib import Path

import biaxldg.qtensor_core as qc
import biaxldg.experiment_cli as cli

MP = qc.derive_params(6.0, 1.0, 1.0, 1.0)


def main():
    out = Path(tempfile.mkdtemp(prefix="sweep_demo_"))
    cfg = cli.config_from_dict({
        "domain": {"kind": "disk", "radius": 1.0},
        "boundary": {"class": "H1"},
        "eps": [0.12, 0.08, 0.05],
        "h": 1 / 32,
        "solver": {"max_iters": 4000, "grad_tol": 1e-3},
        "out": str(out),
        "deterministic": True,
    })
    report = cli.run_sweep(cfg)

    print(f"{'eps':>6} {'E_total':>9} {'E_dir':>8} {'E_bulk':>8}"
          f" {'slope':>7} {'theta':>7} {'conv':>4}")
    for row in report.rows:
        print(f"{row['eps']:>6} {row['e_total']:>9.4f} {row['e_dirichlet']:>8.4f}"
              f" {row['e_bulk']:>8.4f} {row['slope']:>7.4f}"
              f" {row['theta']:>7.4f} {row['converged']:>4}")
    print(f"\nfinal slope / kappa* = {report.rows[-1]['slope'] / MP.kappa_star:.4f}"
          f"   (the coarse grid biases the fit slightly)")

    meta = json.loads((out / "sweep_meta.json").read_text())
    print(f"all rungs converged: {meta['all_converged']}")
    print("artifacts:", ", ".join(sorted(p.name for p in out.iterdir())))


if __name__ == "__main__":
    main()
