"""Serve a perspective depth teacher over newline-delimited JSON on stdio.

Startup emits one metadata line {"tool", "model", "output_space"}. Each
request line {"id", "rgb", "width", "height"} is answered by one response
line {"id", "status", "disparity", "msg"}; "disparity" is the path of a PFM
the server wrote. Malformed lines and missing files produce error responses;
the loop never exits on bad input. Unknown model names exit nonzero at
startup, before the metadata line.
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .pfm import write_pfm

OUTPUT_SPACE = "inverse_depth_relative"


class StubModel:
    """Deterministic stand-in: disparity = Rec. 709 luma scaled to [0, 1]."""

    name = "stub:luminance"

    def infer(self, rgb: np.ndarray) -> np.ndarray:
        rgb = np.asarray(rgb, dtype=np.float64)
        r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
        return (0.2126 * r + 0.7152 * g + 0.0722 * b) / 255.0


class DptModel:
    """Real monocular depth teacher via a transformers DPT pipeline.

    Loading needs the weights locally available; failures surface at
    startup so a misconfigured mount never answers requests.
    """

    name = "dpt-hybrid-midas"

    def __init__(self):
        from transformers import pipeline  # deferred: heavy import

        self._pipe = pipeline("depth-estimation", model="Intel/dpt-hybrid-midas")

    def infer(self, rgb: np.ndarray) -> np.ndarray:
        out = self._pipe(Image.fromarray(np.asarray(rgb, dtype=np.uint8)))
        pred = np.asarray(out["predicted_depth"], dtype=np.float64).squeeze()
        if pred.shape != rgb.shape[:2]:
            pred = np.asarray(
                Image.fromarray(pred).resize(
                    (rgb.shape[1], rgb.shape[0]), Image.BILINEAR
                ),
                dtype=np.float64,
            )
        return pred  # DPT already predicts relative inverse depth


MODELS = {"stub": StubModel, "dpt-hybrid-midas": DptModel}


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")
    sys.stdout.flush()


def handle_request(line: str, model, out_dir: Path) -> dict:
    """One request line to one response dict; errors never escape."""
    try:
        req = json.loads(line)
    except json.JSONDecodeError as e:
        return {"id": None, "status": "error", "msg": f"malformed JSON: {e}"}
    rid = req.get("id") if isinstance(req, dict) else None
    if not isinstance(req, dict) or rid is None or "rgb" not in req:
        return {"id": rid, "status": "error", "msg": "request needs id and rgb"}
    try:
        with Image.open(req["rgb"]) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
        want = (req.get("height"), req.get("width"))
        if None not in want and rgb.shape[:2] != tuple(int(x) for x in want):
            return {"id": rid, "status": "error",
                    "msg": f"image is {rgb.shape[:2]}, request says {want}"}
        disparity = model.infer(rgb)
        out_path = out_dir / f"{rid}.pfm"
        write_pfm(out_path, disparity)
        return {"id": rid, "status": "ok", "disparity": str(out_path)}
    except (OSError, ValueError) as e:
        return {"id": rid, "status": "error", "msg": str(e)}


def serve(model, stdin=None, out_dir=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    _emit({"tool": f"teacher-bridge/{__import__('teacher_bridge').__version__}",
           "model": model.name, "output_space": OUTPUT_SPACE})

    def loop(target: Path) -> None:
        for line in stdin:
            if not line.strip():
                continue
            _emit(handle_request(line, model, target))

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        loop(out_dir)
    else:
        with tempfile.TemporaryDirectory(prefix="teacher-bridge-") as tmp:
            loop(Path(tmp))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default="stub",
                        help=f"one of {sorted(MODELS)}")
    parser.add_argument("--out-dir", default=None,
                        help="directory for response PFMs (default: a "
                             "temporary directory removed on exit)")
    args = parser.parse_args(argv)
    factory = MODELS.get(args.model)
    if factory is None:
        print(f"unknown model {args.model!r}; known: {sorted(MODELS)}",
              file=sys.stderr)
        return 4
    try:
        model = factory()
    except Exception as e:
        print(f"cannot load model {args.model!r}: {e}", file=sys.stderr)
        return 4
    serve(model, out_dir=args.out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
