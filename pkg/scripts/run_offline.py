"""Build the offline artifact for a config and print the timing summary.

    python3 scripts/run_offline.py configs/default.json results/default.npz
"""
import json
import sys
from pathlib import Path

from stochrb.config import load_config
from stochrb.experiments import cmd_offline


def main(config_path, artifact_path):
    art = cmd_offline(load_config(config_path), Path(artifact_path))
    print(json.dumps(art.meta, indent=2))


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(*sys.argv[1:])
