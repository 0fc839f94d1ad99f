"""Writes metric fixture pairs and reference PSNR/SSIM values.

Independent of the Rust code: masks, Gaussian smoothing (scipy.ndimage,
mode="reflect") and the SSIM formula are evaluated with numpy in float64
from the float32 values actually stored in the fixture file.

    python3 make_metric_fixtures.py   # run from this directory
"""
import struct

import numpy as np
from scipy import ndimage

SIGMA = 1.5
TRUNCATE = 5.0 / SIGMA  # radius 5 -> 11 taps
C1 = (0.01 * 1.0) ** 2
C2 = (0.03 * 1.0) ** 2


def roi_mask(rows, cols, disk):
    if not disk:
        return np.ones((rows, cols), dtype=bool)
    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    r = min(rows, cols) / 2.0
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def smooth(a):
    return ndimage.gaussian_filter(a, SIGMA, mode="reflect", truncate=TRUNCATE)


def psnr(p, t, m):
    mse = np.mean((p[m] - t[m]) ** 2)
    return 99.0 if mse == 0 else 10.0 * np.log10(1.0 / mse)


def ssim(p, t, m):
    w = m.astype(np.float64)
    norm = smooth(w)

    def local(f):
        out = smooth(np.where(m, f, 0.0))
        return np.where(norm > 0, out / np.where(norm > 0, norm, 1.0), 0.0)

    mx, my = local(p), local(t)
    vx = local(p * p) - mx * mx
    vy = local(t * t) - my * my
    cov = local(p * t) - mx * my
    s = ((2 * mx * my + C1) * (2 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
    return float(np.mean(s[m]))


def record(name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    out = b"CTT1" + struct.pack("<I", arr.ndim)
    out += b"".join(struct.pack("<I", d) for d in arr.shape)
    out += arr.tobytes()
    nb = name.encode()
    return out + struct.pack("<I", len(nb)) + nb


def main():
    rng = np.random.default_rng(20240611)
    cases = []
    yy, xx = np.mgrid[0:32, 0:32] / 31.0
    t = 0.5 + 0.3 * np.sin(6 * xx) * np.cos(4 * yy)
    cases.append(("smooth32", True, t + rng.normal(0, 0.05, t.shape), t))
    t = (((np.mgrid[0:48, 0:48][0] - 23.5) ** 2 + (np.mgrid[0:48, 0:48][1] - 23.5) ** 2) < 15**2) * 0.8
    cases.append(("disk48", True, np.clip(ndimage.uniform_filter(t, 3) + rng.normal(0, 0.02, t.shape), 0, 1), t))
    t = rng.uniform(0, 1, (20, 30))
    cases.append(("rect20x30", False, t * 0.9 + 0.05, t))
    cases.append(("offset16", True, np.full((16, 16), 0.3) + 0.1, np.full((16, 16), 0.3)))

    blob = b""
    lines = ["# name roi psnr_db ssim"]
    for name, disk, p, t in cases:
        p32 = np.asarray(p, dtype=np.float32)
        t32 = np.asarray(t, dtype=np.float32)
        blob += record(f"{name}/pred", p32) + record(f"{name}/target", t32)
        p64, t64 = p32.astype(np.float64), t32.astype(np.float64)
        m = roi_mask(*p64.shape, disk)
        lines.append(f"{name} {'disk' if disk else 'full'} {float(psnr(p64, t64, m))!r} {ssim(p64, t64, m)!r}")
    with open("metric_pairs.ctt", "wb") as f:
        f.write(blob)
    with open("metric_expected.txt", "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
