"""Regenerate the frozen regression fixtures in tests/fixtures/.

    python scripts/make_fixtures.py

Runs the ablation and exponent-sweep benchmarks over the fixed seeds, records
the mean test accuracies, and freezes each ordering margin as the observed
difference rounded down to a multiple of 0.001. Also writes a small trained
model with its test set and their accuracy. Takes about a minute and a half.
"""

import json
import math
import pathlib
import time
from dataclasses import replace

from spdpool.io import save_dataset, save_model
from spdpool.layers import PipelineConfig
from spdpool.matfun import Sqrt
from spdpool.train import (
    BENCHMARK_SEEDS,
    BENCHMARK_SPEC,
    TrainConfig,
    ablation_benchmark,
    evaluate,
    generate_split,
    sweep_benchmark,
    train,
)

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def floor_margin(diff):
    return math.floor(diff * 1000) / 1000


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ablation, ablation_seeds = ablation_benchmark()
    sweep, sweep_seeds = sweep_benchmark()
    pairs = {
        "sqrt+sgnsqrt_over_sgnsqrt": ("sqrt+sgnsqrt", "sgnsqrt"),
        "lyapunov_over_pass-through": ("lyapunov", "pass-through"),
        "pass-through_over_untrained": ("pass-through", "sqrt+sgnsqrt"),
    }
    margins = {}
    for name, (hi, lo) in pairs.items():
        diff = ablation[hi] - ablation[lo]
        if diff < 0:
            raise SystemExit(f"ordering {name} does not hold: {ablation[hi]:.4f} < {ablation[lo]:.4f}")
        margins[name] = floor_margin(diff)
    diff = sweep[0.5] - sweep[1.0]
    if diff < 0:
        raise SystemExit("p = 0.5 is worse than p = 1")
    margins["p0.5_over_p1"] = floor_margin(diff)
    bench = {
        "seeds": list(BENCHMARK_SEEDS),
        "ablation": ablation,
        "ablation_per_seed": ablation_seeds,
        "sweep": {str(k): v for k, v in sweep.items()},
        "sweep_per_seed": {str(k): v for k, v in sweep_seeds.items()},
        "margins": margins,
    }
    (OUT / "benchmark.json").write_text(json.dumps(bench, indent=2, sort_keys=True) + "\n")

    spec = replace(BENCHMARK_SPEC, samples_per_class=10, locations=12)
    train_set, test_set = generate_split(spec, 7, 0), generate_split(spec, 7, 1)
    cfg = PipelineConfig(epsilon=1e-3, matfun=Sqrt())
    model, _ = train(train_set, cfg, TrainConfig(epochs=5, init_epochs=10, init_learning_rate=0.1,
                                                 learning_rate=0.01, seed=7))
    save_model(OUT / "model.bin", model)
    save_dataset(OUT / "test_set.bin", test_set)
    (OUT / "model.json").write_text(json.dumps({"accuracy": evaluate(model, test_set)}, indent=2) + "\n")
    print(json.dumps({"ablation": ablation, "sweep": bench["sweep"], "margins": margins}, indent=2))
    print(f"done in {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
