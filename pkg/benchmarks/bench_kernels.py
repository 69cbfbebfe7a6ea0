"""Compare the compiled and pure-Python kernel backends.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 5]

Times the bilinear tap gather (forward and backward) at several feature-map
sizes, a full spherical image-branch step, and panorama ray casting.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np
import torch

from panoloc import kernels
from panoloc.data.synth import make_world
from panoloc.image_branch import ImageFeatureExtractor
from panoloc.sphere import interp_plan, sphere_directions


def _time(fn, repeats):
    fn()  # warm caches
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def gather_case(B, C, H, W):
    plan = interp_plan(H, W, 3, 3, 1)
    x = torch.randn(B * C, H * W, requires_grad=True)

    def step():
        y = kernels.gather(x, plan)
        y.sum().backward()
        x.grad = None

    return step


def network_case(size, batch):
    torch.manual_seed(0)
    net = ImageFeatureExtractor(size, (16, 32, 64, 128), spherical=True)
    x = torch.randn(batch, 3, *size)

    def step():
        net.zero_grad()
        net(x).sum().backward()

    return step


def raycast_case(H, W):
    world = make_world(0, 16)
    dirs = sphere_directions(H, W).reshape(-1, 3)
    origin = np.array([*world.positions[8], world.camera_height])
    return lambda: kernels.cast_rays(dirs, origin, world.boxes)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    torch.set_num_threads(1)
    if not kernels.AVAILABLE:
        print("compiled extension not built; only the Python backend can be timed")
    cases = [
        ("gather 3x3, 8x16ch, 32x64", gather_case(8, 16, 32, 64)),
        ("gather 3x3, 8x32ch, 64x128", gather_case(8, 32, 64, 128)),
        ("gather 3x3, 4x64ch, 128x256", gather_case(4, 64, 128, 256)),
        ("image branch fwd+bwd, 8x128x256", network_case((128, 256), 8)),
        ("ray cast 256x512, 16 places", raycast_case(256, 512)),
    ]
    backends = ["python"] + (["compiled"] if kernels.AVAILABLE else [])
    print(f"{'case':<36}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases:
        times = {}
        for b in backends:
            with kernels.use_backend(b):
                times[b] = _time(fn, args.repeats)
        row = f"{name:<36}" + "".join(f"{times[b] * 1e3:10.1f}ms" for b in backends)
        if "compiled" in times:
            row += f"{times['python'] / times['compiled']:9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
