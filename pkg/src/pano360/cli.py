"""Command-line surface: projections, pseudo-labeling, eval, training, stats.

Every randomized command takes an explicit --seed and is bit-deterministic.
Any flag may also come from a --config JSON file (same key names, dashes as
underscores); explicit flags win. Exit codes: 0 success, 1 usage error,
2 data error, 3 backend/bridge error.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import dataio, depthspace, geometry as geo, metrics as metr, resample as rs
from . import pseudolabel as pl
from . import trainloop as tl
from .bridge_client import BridgeTeacher
from .errors import BridgeError, DataError


def _apply_config(ctx: click.Context) -> None:
    """Fill defaulted parameters from the --config JSON file, if given."""
    cfg_path = ctx.params.get("config")
    if not cfg_path:
        return
    try:
        cfg = json.loads(Path(cfg_path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read config {cfg_path}: {e}") from e
    for key, val in cfg.items():
        key = key.replace("-", "_")
        if key not in ctx.params:
            raise click.UsageError(f"config key {key!r} is not a flag of this command")
        src = ctx.get_parameter_source(key)
        if src is not None and src.name == "DEFAULT":
            ctx.params[key] = val


config_option = click.option(
    "--config", type=click.Path(), default=None, help="JSON file supplying flags."
)


@click.group()
def cli():
    """Perspective-to-360 depth distillation toolkit."""


# ---------------------------------------------------------------------------
# projections


@cli.group()
def project():
    """ERP <-> cube / tangent projections and rotation."""


def _load_erp_rgb(path):
    return dataio.load_raster(path, "rgb8").astype(np.float64)


def _face_paths(prefix: Path, ext: str = "png"):
    return {f: prefix.parent / f"{prefix.name}_{f.letter}.{ext}" for f in geo.FACE_ORDER}


@project.command("e2c")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--face-px", default=256, show_default=True)
@click.option("--mask", "mask_path", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_e2c(ctx, input_path, out_dir, face_px, mask_path, config):
    """Project an ERP image to six cube face PNGs."""
    _apply_config(ctx)
    face_px = int(ctx.params["face_px"])
    img = _load_erp_rgb(input_path)
    mask = dataio.load_raster(mask_path, "mask") if mask_path else None
    faces, fmasks = rs.erp_to_cube(img, face_px, mask)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(input_path).stem
    paths = _face_paths(out / stem)
    for f in geo.FACE_ORDER:
        dataio.save_rgb8(paths[f], faces[int(f)])
        if mask is not None:
            dataio.save_mask(out / f"{stem}_{f.letter}_mask.png", fmasks[int(f)])
    click.echo(f"wrote 6 faces of {face_px}x{face_px} to {out}")


@project.command("c2e")
@click.option("--input-prefix", required=True, type=click.Path(),
              help="Prefix of <prefix>_F.png ... <prefix>_D.png face files.")
@click.option("--output", required=True, type=click.Path())
@click.option("--height", default=512, show_default=True)
@config_option
@click.pass_context
def cmd_c2e(ctx, input_prefix, output, height, config):
    """Stitch six cube face PNGs back to an ERP image."""
    _apply_config(ctx)
    height = int(ctx.params["height"])
    faces = []
    for f, p in _face_paths(Path(input_prefix)).items():
        faces.append(dataio.load_raster(p, "rgb8", require_erp=False).astype(np.float64))
    erp = rs.cube_to_erp(np.stack(faces), height)
    dataio.save_rgb8(output, erp)
    click.echo(f"wrote {output}")


@project.command("rotate")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--output", required=True, type=click.Path())
@click.option("--seed", required=True, type=int)
@click.option("--mode", default="full_so3", show_default=True,
              type=click.Choice(["full_so3", "yaw_only", "identity"]))
@click.option("--mask", "mask_path", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_rotate(ctx, input_path, output, seed, mode, mask_path, config):
    """Apply a seeded random rotation; the matrix lands in a JSON sidecar."""
    _apply_config(ctx)
    img = _load_erp_rgb(input_path)
    mask = dataio.load_raster(mask_path, "mask") if mask_path else None
    R = rs.random_rotation(int(ctx.params["seed"]), ctx.params["mode"])
    out_img, out_mask = rs.rotate_erp(img, R, mask)
    dataio.save_rgb8(output, out_img)
    if mask is not None:
        dataio.save_mask(Path(output).with_suffix(".mask.png"), out_mask)
    side = Path(output).with_suffix(".rotation.json")
    side.write_text(json.dumps({"seed": seed, "mode": mode, "matrix": R.tolist()},
                    sort_keys=True) + "\n")
    click.echo(f"wrote {output} and {side}")


@project.command("tangent")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--n-patches", default=20, show_default=True)
@click.option("--fov-deg", default=80.0, show_default=True)
@click.option("--patch-px", default=256, show_default=True)
@config_option
@click.pass_context
def cmd_tangent(ctx, input_path, out_dir, n_patches, fov_deg, patch_px, config):
    """Project an ERP image to geodesic tangent patches."""
    _apply_config(ctx)
    img = _load_erp_rgb(input_path)
    patches, rots, _ = rs.erp_to_tangent(
        img,
        int(ctx.params["n_patches"]),
        math.radians(float(ctx.params["fov_deg"])),
        int(ctx.params["patch_px"]),
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(input_path).stem
    for i, patch in enumerate(patches):
        dataio.save_rgb8(out / f"{stem}_t{i:02d}.png", patch)
    (out / f"{stem}_tangent.json").write_text(
        json.dumps({"fov_deg": ctx.params["fov_deg"],
                    "rotations": rots.tolist()}, sort_keys=True) + "\n")
    click.echo(f"wrote {len(patches)} patches to {out}")


# ---------------------------------------------------------------------------
# pseudo-labeling


def _make_teacher(spec: str):
    if spec.startswith("mock:"):
        return pl.MockTeacher(spec.split(":", 1)[1], affine_scramble=True)
    if spec == "stub":
        return pl.StubTeacher()
    if spec.startswith("bridge:"):
        return BridgeTeacher(spec.split(":", 1)[1])
    raise DataError(f"unknown teacher {spec!r} (use mock:<scene>, stub, bridge:<cmd>)")


@cli.command("pseudolabel")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--teacher", "teacher_spec", required=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--seed", required=True, type=int)
@click.option("--face-px", default=256, show_default=True)
@click.option("--rotation-mode", default="full_so3", show_default=True,
              type=click.Choice(["full_so3", "yaw_only", "identity"]))
@config_option
@click.pass_context
def cmd_pseudolabel(ctx, manifest_path, teacher_spec, out_dir, seed, face_px,
                    rotation_mode, config):
    """Generate per-face pseudo ground truth bundles for a manifest."""
    _apply_config(ctx)
    seed = int(ctx.params["seed"])
    face_px = int(ctx.params["face_px"])
    rotation_mode = ctx.params["rotation_mode"]
    manifest = dataio.DatasetManifest.load(manifest_path)
    teacher = _make_teacher(ctx.params["teacher_spec"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    try:
        for rec in manifest.records:
            rgb = dataio.load_raster(manifest.resolve(rec.rgb), "rgb8")
            mask = (dataio.load_raster(manifest.resolve(rec.mask), "mask")
                    if rec.mask else None)
            ps = pl.generate_pseudo(
                rec.id, rgb, teacher, seed=pl.stable_seed(seed, rec.id),
                face_px=face_px, rotation_mode=rotation_mode, mask=mask)
            entry = {"id": rec.id, "faces": {}, "rotation": ps.rotation.tolist()}
            for f in geo.FACE_ORDER:
                i = int(f)
                stem = f"{rec.id}_{f.letter}"
                dataio.save_rgb8(out / f"{stem}.png", ps.faces[i])
                dataio.write_pfm(out / f"{stem}.pfm", ps.pseudo[i])
                dataio.save_mask(out / f"{stem}_mask.png", ps.masks[i])
                entry["faces"][f.letter] = {
                    "rgb": f"{stem}.png", "pseudo": f"{stem}.pfm",
                    "mask": f"{stem}_mask.png", "usable": bool(ps.face_usable[i]),
                }
                if not ps.face_usable[i]:
                    click.echo(f"warning: {rec.id} face {f.letter} degenerate, "
                               "excluded from supervision", err=True)
            (out / f"{rec.id}_rotation.json").write_text(
                json.dumps({"matrix": ps.rotation.tolist(), "seed": ps.seed},
                           sort_keys=True) + "\n")
            records.append(entry)
    finally:
        if isinstance(teacher, BridgeTeacher):
            teacher.close()
    # manifest written last: a failed run leaves no partial manifest
    header = {"schema": "pano360-pseudolabels", "version": 1,
              "teacher": {"name": teacher.name, "output_space": teacher.output_space},
              "seed": seed, "face_px": face_px, "rotation_mode": rotation_mode}
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    lines += [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records]
    (out / "pseudolabels.jsonl").write_text("\n".join(lines) + "\n")
    click.echo(f"wrote {len(records)} pseudo bundles to {out}")


# ---------------------------------------------------------------------------
# evaluation


def _load_depth_any(path):
    depth, valid = dataio.load_raster(path, "depth", require_erp=False)
    return np.asarray(depth, dtype=np.float64), valid


@cli.command("eval")
@click.option("--pred-manifest", required=True, type=click.Path())
@click.option("--gt-manifest", required=True, type=click.Path())
@click.option("--align", default="median", show_default=True,
              type=click.Choice(["median", "none"]))
@click.option("--output", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_eval(ctx, pred_manifest, gt_manifest, align, output, config):
    """Evaluate predicted depth against ground truth, id-aligned."""
    _apply_config(ctx)
    align = ctx.params["align"]
    preds = dataio.DatasetManifest.load(pred_manifest)
    gts = dataio.DatasetManifest.load(gt_manifest)
    gt_by_id = {r.id: r for r in gts.records}
    if set(r.id for r in preds.records) != set(gt_by_id):
        raise DataError("pred and gt manifests list different sample ids")
    per_sample = {}
    reports = []
    for rec in preds.records:
        grec = gt_by_id[rec.id]
        if rec.depth is None or grec.depth is None:
            raise DataError(f"{rec.id}: both manifests must provide depth")
        pred, _ = _load_depth_any(preds.resolve(rec.depth))
        gt, gt_valid = _load_depth_any(gts.resolve(grec.depth))
        if grec.mask:
            gt_valid &= dataio.load_raster(gts.resolve(grec.mask), "mask",
                                           require_erp=False)
        rep = metr.compute_metrics(pred, gt, gt_valid, align=align)
        per_sample[rec.id] = json.loads(rep.to_json())
        reports.append(rep)
    agg = metr.mean_report(reports)
    result = {"align": align, "aggregate": json.loads(agg.to_json()),
              "per_sample": per_sample}
    text = json.dumps(result, sort_keys=True, indent=2)
    if output:
        Path(output).write_text(text + "\n")
    click.echo(agg.to_text())


# ---------------------------------------------------------------------------
# corpus commands


@cli.command("stats")
@click.argument("manifests", nargs=-1, required=True, type=click.Path())
@click.option("--output", default=None, type=click.Path())
def cmd_stats(manifests, output):
    """Labeled/unlabeled counts per source across manifests."""
    stats = dataio.corpus_stats(*[dataio.DatasetManifest.load(m) for m in manifests])
    if output:
        Path(output).write_text(json.dumps(stats, sort_keys=True, indent=2) + "\n")
    click.echo(f"{'source':<20}{'labeled':>10}{'unlabeled':>12}")
    for src, c in sorted(stats["sources"].items()):
        click.echo(f"{src:<20}{c['labeled']:>10}{c['unlabeled']:>12}")
    t = stats["total"]
    click.echo(f"{'total':<20}{t['labeled']:>10}{t['unlabeled']:>12}")


@cli.command("mask-filter")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--output", required=True, type=click.Path())
@click.option("--min-valid-fraction", default=0.20, show_default=True)
@click.option("--report", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_mask_filter(ctx, manifest_path, output, min_valid_fraction, report, config):
    """Drop samples below the valid-pixel threshold; write the filtered manifest."""
    _apply_config(ctx)
    manifest = dataio.DatasetManifest.load(manifest_path)
    kept, rejected = dataio.apply_validity_filter(
        manifest, float(ctx.params["min_valid_fraction"]))
    kept.save(output)
    rej = [{"id": r.id, "valid_fraction": frac} for r, frac in rejected]
    if report:
        Path(report).write_text(json.dumps(rej, sort_keys=True, indent=2) + "\n")
    click.echo(f"kept {len(kept.records)}, rejected {len(rej)}")
    for item in rej:
        click.echo(f"rejected {item['id']} ({item['valid_fraction']:.1%} valid)")


# ---------------------------------------------------------------------------
# training


def build_scene_pools(scene: str, erp_h: int, n_labeled: int, n_unlabeled: int):
    """Analytic-scene pools for the desk-scale demo."""
    dirs = geo.erp_direction_grid(erp_h)
    inv = pl.scene_inverse_depth(scene, dirs)
    finite = inv > 0.0
    depth = np.where(finite, 1.0 / np.where(finite, inv, 1.0), np.inf)
    disparity, mask = depthspace.depth_to_disparity(np.where(finite, depth, 1.0), finite)
    shade = np.clip(np.round(inv / max(inv.max(), 1e-9) * 255.0), 0, 255).astype(np.uint8)
    rgb = np.repeat(shade[..., None], 3, axis=-1)
    labeled = [tl.LabeledSample(f"L{i}", disparity, mask) for i in range(n_labeled)]
    unlabeled = [tl.UnlabeledSample(f"U{i}", rgb, finite) for i in range(n_unlabeled)]
    return labeled, unlabeled


@cli.command("train")
@click.option("--scene", default="eccentric_sphere_room", show_default=True,
              type=click.Choice(list(pl.SCENES)))
@click.option("--teacher", "teacher_spec", default=None,
              help="Defaults to mock:<scene> with affine scrambling.")
@click.option("--seed", required=True, type=int)
@click.option("--steps", default=500, show_default=True)
@click.option("--lr", default=10.0, show_default=True)
@click.option("--lr-decay-steps", default=30, show_default=True,
              help="Harmonic lr decay time constant; 0 keeps lr constant.")
@click.option("--erp-h", default=64, show_default=True)
@click.option("--face-px", default=32, show_default=True)
@click.option("--grid-h", default=16, show_default=True)
@click.option("--grid-w", default=32, show_default=True)
@click.option("--batch-size", default=4, show_default=True)
@click.option("--ratio", default="1:1", show_default=True, help="labeled:pseudo")
@click.option("--rotation-mode", default="full_so3", show_default=True,
              type=click.Choice(["full_so3", "yaw_only", "identity"]))
@click.option("--log", "log_path", default=None, type=click.Path())
@click.option("--checkpoint", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_train(ctx, scene, teacher_spec, seed, steps, lr, lr_decay_steps, erp_h,
              face_px, grid_h, grid_w, batch_size, ratio, rotation_mode, log_path,
              checkpoint, config):
    """Desk-scale joint training of the grid predictor on an analytic scene."""
    _apply_config(ctx)
    p = ctx.params
    scene = p["scene"]
    try:
        l, r = (int(x) for x in str(p["ratio"]).split(":"))
    except ValueError as e:
        raise click.UsageError(f"bad --ratio {p['ratio']!r}, expected L:P") from e
    spec = tl.BatchSpec(batch_size=int(p["batch_size"]), gt_ratio=(l, r),
                        seed=int(p["seed"]))
    cfg = tl.TrainConfig(
        learning_rate=float(p["lr"]), lr_decay_steps=int(p["lr_decay_steps"]),
        n_steps=int(p["steps"]),
        erp_h=int(p["erp_h"]), face_px=int(p["face_px"]),
        rotation_mode=p["rotation_mode"], grid_h=int(p["grid_h"]),
        grid_w=int(p["grid_w"]), batch=spec)
    teacher = _make_teacher(p["teacher_spec"] or f"mock:{scene}")
    labeled, unlabeled = build_scene_pools(scene, cfg.erp_h, 4, 4)
    try:
        model, log = tl.train(labeled, unlabeled, teacher, cfg, log_path=p["log_path"])
    finally:
        if isinstance(teacher, BridgeTeacher):
            teacher.close()
    if p["checkpoint"]:
        tl.save_checkpoint(p["checkpoint"], model)
    first = next((x["loss_total"] for x in log if x["loss_total"] is not None), None)
    last = next((x["loss_total"] for x in reversed(log) if x["loss_total"] is not None), None)
    click.echo(f"steps={len(log)} first_loss={first:.6f} last_loss={last:.6f}")
    # held-out check against the analytic scene
    dirs = geo.erp_direction_grid(cfg.erp_h)
    inv = pl.scene_inverse_depth(scene, dirs)
    finite = inv > 0.0
    gt_depth = np.where(finite, 1.0 / np.where(finite, inv, 1.0), 0.0)
    pred_depth = 1.0 / model.predict(cfg.erp_h)
    rep = metr.compute_metrics(pred_depth, gt_depth, finite, align="median")
    click.echo(f"held-out abs_rel={rep.abs_rel:.6f} delta1={rep.delta1:.4f}")


# ---------------------------------------------------------------------------
# point cloud


@cli.command("pointcloud")
@click.option("--rgb", "rgb_path", required=True, type=click.Path())
@click.option("--depth", "depth_path", required=True, type=click.Path())
@click.option("--output", required=True, type=click.Path())
@click.option("--mask", "mask_path", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_pointcloud(ctx, rgb_path, depth_path, output, mask_path, config):
    """Export an RGB-colored ASCII PLY: vertex = depth * ray per valid pixel."""
    _apply_config(ctx)
    rgb = dataio.load_raster(rgb_path, "rgb8")
    depth, valid = _load_depth_any(depth_path)
    if rgb.shape[:2] != depth.shape:
        raise DataError("RGB and depth shapes differ")
    if mask_path:
        valid &= dataio.load_raster(mask_path, "mask")
    dirs = geo.erp_direction_grid(depth.shape[0])
    pts = dirs[valid] * depth[valid][:, None]
    dataio.write_ascii_ply(output, pts, rgb[valid])
    click.echo(f"wrote {pts.shape[0]} vertices to {output}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as e:
        e.show()
        return 1
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except BridgeError as e:
        click.echo(f"bridge error: {e}", err=True)
        return 3
    except (DataError, OSError) as e:
        click.echo(f"data error: {e}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
