"""Single-channel PFM I/O (little-endian, scale -1.0, rows bottom-to-top)."""

import numpy as np


def write_pfm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("PFM writer handles single-channel rasters only")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(data[::-1].astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise ValueError(f"{path}: not a single-channel PFM file")
        w, h = (int(x) for x in f.readline().split())
        scale = float(f.readline())
        endian = "<" if scale < 0 else ">"
        buf = f.read(4 * w * h)
        if len(buf) != 4 * w * h:
            raise ValueError(f"{path}: truncated PFM payload")
    return np.array(np.frombuffer(buf, dtype=endian + "f4").reshape(h, w)[::-1])
