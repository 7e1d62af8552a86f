"""
End-to-end run with the shipped configuration
=============================================

Run every stage on the bundled data with ``default.ini`` and inspect
the manifest. The same run is available as ``camelg run default.ini``.
"""

import json
from pathlib import Path

from camelg.pipeline import load_config, run_pipeline

here = Path(__file__).parent
bundle = run_pipeline(load_config(here / "default.ini"))
print("exit code", bundle.exit_code)
for name, stage in bundle.stages.items():
    print(f"{name:22s} {stage['status']}")

manifest = json.loads((bundle.directory / "manifest.json").read_text())
print("config hash", manifest["config_sha256"])
print(*manifest["tables"], sep="\n")
