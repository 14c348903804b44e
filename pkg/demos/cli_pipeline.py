"""
The command-line pipeline, end to end
=====================================

Everything the library does is reachable through the ``combwalks``
executable: simulate writes canonical JSONL, stats folds one or more
JSONL files into CSV reports, oracle emits exact series, and fit reads
any CSV back and regresses log2(value) on log2(n).  This script chains
them the way a shell session would.
"""

import subprocess
import sys
import tempfile
from pathlib import Path


def run(*argv):
    print("$ combwalks " + " ".join(argv))
    res = subprocess.run([sys.executable, "-m", "combwalks.cli", *argv],
                         capture_output=True, text=True)
    if res.returncode != 0:
        sys.exit(f"exit {res.returncode}: {res.stderr.strip()}")
    for stream in (res.stdout, res.stderr):
        if stream.strip():
            print(stream.strip())
    print()


work = Path(tempfile.mkdtemp(prefix="combwalks_demo_"))

# settings live in a key=value config file; flags override it
conf = work / "pairs.conf"
conf.write_text("graph = comb:line\nsteps = 16384\nreplicas = 400\nseed = 42\n")
runs = work / "pairs.jsonl"
run("simulate", "--config", str(conf), "--out", str(runs))

# growth report: mean meeting count and survival at dyadic checkpoints
growth = work / "growth.csv"
run("stats", "--inputs", str(runs), "--report", "growth",
    "--out", str(growth))
print("tail of growth.csv:")
print("\n".join(growth.read_text().strip().splitlines()[-4:]) + "\n")

# cell report over a small dyadic grid
grid = work / "grid.csv"
run("stats", "--inputs", str(runs), "--report", "grid",
    "--r-range", "4:9", "--k-range", "1:2", "--out", str(grid))
print("grid.csv:")
print(grid.read_text().strip() + "\n")

# exact return probabilities for the plain line, then a power-law fit;
# the slope lands on the diffusive -1/2
ret = work / "return.csv"
run("oracle", "return", "--graph", "line", "--nmax", "2048",
    "--out", str(ret))
fit = work / "fit.csv"
run("fit", "--input", str(ret), "--column", "value",
    "--range", "256:2048", "--out", str(fit))
print("fit.csv:")
print(fit.read_text().strip())
