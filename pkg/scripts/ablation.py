"""Hyperparameter sweep on a synthetic export; writes one CSV row per configuration."""
import argparse
import tempfile
from pathlib import Path

from hotspot_gcn.cli import ablate
from hotspot_gcn.config import load_config
from hotspot_gcn.pipeline import run_stage
from hotspot_gcn.synth import SyntheticConfig, synth_generate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--events", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=Path("ablation.csv"))
    args = ap.parse_args()

    work = Path(tempfile.mkdtemp(prefix="hotspot-ablate-"))
    raw = work / "synthetic.csv"
    raw.write_text(synth_generate(SyntheticConfig(seed=args.seed, n_events=args.events)))
    cfg = load_config(None, [f"paths.raw_csv={raw}", f"paths.work_dir={work}"])
    for stage in ("ingest", "graph"):
        run_stage(stage, cfg)
    text = ablate(cfg)
    args.out.write_text(text)
    print(text)


if __name__ == "__main__":
    main()
