# scripts/run_acceptance.py
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import bench_cli


def run_acceptance(output_path="results"):
    os.makedirs(output_path, exist_ok=True)

    # Every experiment with its configured defaults
    runs = {
        "dt_sweep": ["dt-sweep", "--out", f"{output_path}/dt_sweep.csv"],
        "mu_sweep": ["mu-sweep", "--out", f"{output_path}/mu_sweep.csv"],
        "ising_bench": ["ising-bench", "--out", f"{output_path}/ising_bench.csv"],
        "norm_ratio": ["norm-ratio", "--out", f"{output_path}/norm_ratio.csv"],
        "gates_midpoint": [
            "export-gates", "--formula", "midpoint", "--N", "10", "--out", f"{output_path}/gates_midpoint.jsonl"
        ],
    }

    codes = {}
    for name, argv in runs.items():
        print(f"[INFO] running {name}", file=sys.stderr)
        codes[name] = bench_cli.main(argv)

    for name, code in codes.items():
        print(f"{name:16s} {'PASS' if code == 0 else f'FAIL ({code})'}", file=sys.stderr)
    return 0 if all(code == 0 for code in codes.values()) else 1


if __name__ == "__main__":
    sys.exit(run_acceptance(*sys.argv[1:2]))
