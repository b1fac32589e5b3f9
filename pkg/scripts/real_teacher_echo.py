#!/usr/bin/env python3
"""Qualitative echo with a real perspective depth model over the bridge.

Compares two ways of getting 360 pseudo depth from a perspective teacher on
a real panorama:
  (a) raw ERP: feed the whole equirectangular image to the model;
  (b) per-face: project to cube faces, run the model per face.
It reports the seam score of both stitched maps, and, when a 16-bit ground
truth depth PNG is supplied, median-aligned AbsRel for both. The expected
direction is per-face < raw ERP; this is a logged experiment, not a CI
gate, because it needs model weights mounted behind the bridge.

Example:
    python3 scripts/real_teacher_echo.py --rgb pano.png \
        --bridge "teacher-bridge --model dpt-hybrid-midas" --gt-depth gt.png
"""

import argparse
import json
import sys

import numpy as np

from pano360 import dataio as dio
from pano360 import metrics as mt
from pano360 import pseudolabel as pl
from pano360 import resample as rs
from pano360.bridge_client import BridgeTeacher
from pano360.errors import BridgeError


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rgb", required=True, help="equirectangular RGB PNG (2:1)")
    ap.add_argument("--bridge", required=True, help="bridge command line")
    ap.add_argument("--gt-depth", default=None, help="optional gt depth PNG16")
    ap.add_argument("--face-px", type=int, default=256)
    args = ap.parse_args()

    rgb = dio.load_raster(args.rgb, "rgb8")
    h = rgb.shape[0]
    try:
        teacher = BridgeTeacher(args.bridge)
    except BridgeError as e:
        print(f"bridge unavailable, skipping: {e}", file=sys.stderr)
        return 0

    with teacher:
        # (a) the perspective model applied to the raw ERP image
        raw = teacher.infer(rgb)
        # (b) per-face inference, stitched without alignment
        faces, _ = rs.erp_to_cube(rgb.astype(np.float64), args.face_px)
        faces = np.clip(np.round(faces), 0, 255).astype(np.uint8)
        per_face = np.stack([teacher.infer(f) for f in faces])
    stitched = pl.stitch_cube_depth_to_erp(per_face, h)

    report = {
        "teacher": teacher.name,
        "seam_score": {"raw_erp": pl.seam_score(raw),
                       "per_face": pl.seam_score(stitched)},
    }
    if args.gt_depth:
        gt, valid = dio.load_raster(args.gt_depth, "depth")
        eps = 1e-6

        def abs_rel(disp):
            depth = 1.0 / np.maximum(np.asarray(disp, np.float64), eps)
            return mt.compute_metrics(depth, gt, valid, align="median").abs_rel

        report["abs_rel"] = {"raw_erp": abs_rel(raw), "per_face": abs_rel(stitched)}
        report["per_face_better"] = report["abs_rel"]["per_face"] < report["abs_rel"]["raw_erp"]
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
