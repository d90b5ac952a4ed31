"""Time each hot kernel under every available backend.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from dctrack.kernels import backends


def cases(rng):
    data = rng.normal(size=(16, 32, 32))
    w3 = rng.normal(size=(16, 16, 3, 3))
    w1 = rng.normal(size=(16, 16, 1, 1))
    bias = rng.normal(size=16)
    xy = rng.uniform(0, 200, size=(300, 2))
    boxes = np.hstack([xy, xy + rng.uniform(10, 60, size=(300, 2))])
    scores = rng.random(300)
    cost = rng.random((40, 40))
    return {
        "conv2d 3x3 16ch 32x32": lambda m: m.conv2d(data, w3, bias),
        "conv2d 1x1 16ch 32x32": lambda m: m.conv2d(data, w1, bias),
        "roi_align 7x7 s2": lambda m: m.roi_align(data, 30.5, 20.25, 180.0, 150.0, 7, 2),
        "nms 300 boxes": lambda m: m.nms(boxes, scores, 0.5, 50),
        "lsap 40x40": lambda m: m.lsap(cost),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    found = backends()
    # roi_align takes the box in data-grid coordinates here
    for m in found.values():
        assert m is not None
    rng = np.random.default_rng(0)
    names = list(found)
    print(f"{'kernel':<24}" + "".join(f"{n + ' ms':>14}" for n in names) + f"{'speedup':>10}")
    for label, fn in cases(rng).items():
        times = {}
        for n in names:
            mod = found[n]
            loops = 3
            times[n] = 1000 * min(timeit.repeat(lambda: fn(mod), number=loops, repeat=args.repeat)) / loops
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<24}" + "".join(f"{times[n]:>14.3f}" for n in names) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
