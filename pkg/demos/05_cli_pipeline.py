"""The whole pipeline through the command line entry point, at toy scale.

Equivalent shell session:

    mmpred generate --config tiny.json --seed 3 -o cohort.jsonl
    mmpred train    --config tiny.json --cohort cohort.jsonl -o run
    mmpred evaluate run
    mmpred explain  run
    mmpred report   run

    python demos/05_cli_pipeline.py [workdir]
"""
import json
import sys
from pathlib import Path

from mmpred.cli import main

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run")
work.mkdir(parents=True, exist_ok=True)
tiny = {
    "generate": {"generator": {"n_patients": 150, "positive_fraction": 0.4}},
    "preprocess": {"tokenizer_vocab_size": 300, "max_tokens": 48},
    "split": {"inner_folds": 2},
    "grid": {
        "static": {"gbt": None, "rforest": None,
                   "logreg": {"C": [1, 10], "penalty": ["l2"], "solver": ["liblinear"]},
                   "mlp": {"dropout": [0.2], "units_multiplier": [1]}},
        "series": {"rocket": {"num_kernels": [100]}, "c22features": None,
                   "gru_rnn": {"dropout": [0.2], "units_multiplier": [1]}},
        "text": {"text_encoder": {"dropout": [0.2], "units_multiplier": [1]}},
        "fusion": {"intermediate": {"dropout": [0.2, 0.3]}},
    },
    "deep": {"max_epochs": 10, "patience": 3},
    "text": {"dim": 8, "n_heads": 2, "ff_dim": 16, "n_blocks": 1},
    "evaluate": {"bootstrap": 200, "rank_blocks": 20},
    "explain": {"n_patients": 3},
}
cfg = work / "tiny.json"
cfg.write_text(json.dumps(tiny, indent=2))
steps = [
    ["generate", "--config", str(cfg), "--seed", "3", "-o", str(work / "cohort.jsonl")],
    ["train", "--config", str(cfg), "--cohort", str(work / "cohort.jsonl"), "-o", str(work / "run")],
    ["evaluate", str(work / "run")],
    ["explain", str(work / "run")],
    ["report", str(work / "run")],
]
for argv in steps:
    code = main(argv)
    if code:
        sys.exit(code)
print((work / "run" / "results.csv").read_text())
