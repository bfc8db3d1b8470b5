"""Running named experiments through the ``lorlab`` command.

Run: python demos/07_command_line.py   (a few minutes; runs every config in demos/configs)

Each config is a plain ``key = value`` file.  The command writes
``report.json``, ``timings.json`` and one CSV per field under ``--out`` and
exits 0 when every check passes.  Configs marked ``expect.negative = true``
are negative controls: their primary check is expected to fail.
"""

import json
import subprocess
import sys
from pathlib import Path

here = Path(__file__).parent
out_root = Path("lorlab-demo-out")
for cfg in sorted((here / "configs").glob("*.cfg")):
    experiment = next(
        line.split("=", 1)[1].strip() for line in cfg.read_text().splitlines() if line.startswith("experiment")
    )
    out = out_root / cfg.stem
    proc = subprocess.run(
        [sys.executable, "-m", "lorlab.cli", experiment, "--config", str(cfg), "--out", str(out)],
        capture_output=True, text=True,
    )
    report = json.loads((out / "report.json").read_text())
    primary = [c for c in report.get("checks", []) if c["primary"]]
    shown = f"{primary[0]['name']} = {primary[0]['measured']}" if primary else report.get("error")
    print(f"{cfg.stem:22s} exit {proc.returncode}  {report['verdict']:5s}  {shown}")
