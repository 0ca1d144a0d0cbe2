"""The same pipeline through the command line, run in a scratch directory."""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from infers.simulator import published_config

work = Path(tempfile.mkdtemp())
(work / "cfg.json").write_text(json.dumps(published_config(n=5000, lat=[-40, 60]).to_dict()))


def run(*args):
    r = subprocess.run([sys.executable, "-m", "infers", *args], cwd=work, capture_output=True, text=True)
    print("$ infers", " ".join(args), "->", r.returncode, r.stderr.strip())


run("simulate", "--config", "cfg.json", "--seed", "1", "--out", "sim.csv")
run("fit", "--in", "sim.csv", "--params-out", "params.json", "--curves-out", "curves.csv")
run("sweep", "--in", "sim.csv", "--mode", "speeds", "--targets", "0.1:0.5:0.05", "--k", "500",
    "--grid", "500", "--workers", "1", "--out", "speeds")

params = json.loads((work / "params.json").read_text())["params"]
print("sigma_t2 =", params["sigma_t2"], " lambda_N =", params["lambda"]["N"])
print("outputs in", work, ":", sorted(p.name for p in work.rglob("*") if p.is_file()))
