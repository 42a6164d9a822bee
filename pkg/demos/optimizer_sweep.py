"""Optimizer comparison on the planted EPM graph, driven through the CLI.

Runs the 4 x 2 grid {sgd, adagrad, rmsprop, adadelta} x {momentum on, off}
and then the AdaDelta rho x (1 - lambda) grid, printing the smoothed final
ELBO of every cell. Results land in ``results.csv`` under the output
directory (default: a temporary directory).

    python demos/optimizer_sweep.py [out_dir]
"""

import csv
import os
import sys
import tempfile

from gammavi.cli import main

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="gammavi-sweep-")
common = ["--model", "epm", "--blocks", "1.2,0.02", "--synth-nodes", "40", "--k", "4",
          "--iters", "1000", "--eps", "1e-4"]


def show(path, keys):
    with open(path) as fh:
        for row in csv.DictReader(fh):
            cell = "  ".join(f"{k}={row[k]:<8}" for k in keys)
            print(f"  {cell}  smoothed ELBO {float(row['smoothed_elbo']):10.1f}" if not row["error"]
                  else f"  {cell}  {row['error']}")


print("optimizers x momentum")
main(["sweep", *common, "--grid", "opt=sgd,adagrad,rmsprop,adadelta", "--grid", "momentum=1,0.9",
      "--out", os.path.join(out, "optimizers")])
show(os.path.join(out, "optimizers", "results.csv"), ["opt", "momentum"])

print("\nAdaDelta rho x lambda (lambda=1 is no momentum)")
main(["sweep", *common, "--grid", "rho=0.7,0.9,0.99", "--grid", "momentum=1,0.97,0.9,0.7",
      "--out", os.path.join(out, "adadelta")])
show(os.path.join(out, "adadelta", "results.csv"), ["rho", "momentum"])
