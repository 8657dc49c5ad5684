#!/usr/bin/env python3
"""Train the four-lambda toy model zoo used by the acceptance suite.

One model per lambda in {0.003, 0.01, 0.03, 0.1}, each n_main=32 for
2000 steps on 500 synthetic gradient+noise patches.  Running this ahead
of `pytest tests/test_acceptance.py` warms the cache the suite reuses
(tests/_toy_models by default, C2F_TOY_CACHE to override).
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from zoo import ZOO_LAMBDAS, build_zoo, zoo_cache_dir  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cache", default=None,
                        help="cache directory (default: tests/_toy_models)")
    args = parser.parse_args()
    cache = Path(args.cache) if args.cache else zoo_cache_dir()
    t0 = time.monotonic()
    zoo = build_zoo(cache, progress=True)
    print(f"zoo ready in {time.monotonic() - t0:.0f}s:")
    for lam in ZOO_LAMBDAS:
        print(f"  lambda={lam}: {zoo.model_path(lam)}")


if __name__ == "__main__":
    main()
