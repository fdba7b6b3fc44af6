"""Command implementations behind the HTTP endpoints.

Every run writes exactly one JSON manifest next to its primary output
(command name, resolved configuration, input/output paths, seed, wall
clock). Outputs themselves are deterministic for identical inputs and
seeds; the manifest's duration field is the one intentionally
non-reproducible byte.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from .. import gradcheck as gradcheck_lib
from ..config_io import parse_config_text
from ..data import extract_patches, normalize, read_cube, split_patches, synth_cube, write_cube
from ..errors import ConfigError
from ..loss import LossConfig
from ..metrics import evaluate, report_to_csv
from ..model import (
    DacnConfig,
    config_from_dict,
    config_to_dict,
    load_checkpoint,
    save_checkpoint,
    super_resolve,
)
from ..trainer import TrainConfig, history_to_csv, train
from . import schemas

_TRAIN_KEYS = frozenset(
    ("learning_rate", "beta1", "beta2", "adam_eps", "batch_size", "patience", "max_epochs", "train_seed")
)
_LOSS_KEYS = frozenset(("alpha", "include_grad_loss"))
_PIPELINE_KEYS = frozenset(("patch_size",))
_MODEL_KEYS = frozenset(config_to_dict(DacnConfig()).keys()) | {"stride", "reduction"}


def _write_manifest(primary_output, command: str, config: dict, inputs, outputs, seed, started: float) -> str:
    path = str(primary_output) + ".manifest.json"
    payload = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "duration_seconds": round(time.monotonic() - started, 6),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def _cube_summary(path, cube) -> schemas.CubeSummary:
    return schemas.CubeSummary(
        path=str(path), height=cube.height, width=cube.width, bands=cube.bands
    )


def run_synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    started = time.monotonic()
    cube = synth_cube(req.height, req.width, req.bands, rank=req.rank, noise=req.noise, seed=req.seed)
    write_cube(cube, req.out)
    manifest = _write_manifest(
        req.out,
        "synth",
        req.model_dump(),
        inputs=[],
        outputs=[req.out],
        seed=req.seed,
        started=started,
    )
    return schemas.SynthResponse(cube=_cube_summary(req.out, cube), manifest=manifest)


def run_degrade(req: schemas.DegradeRequest) -> schemas.DegradeResponse:
    from ..data import degrade_area

    started = time.monotonic()
    if req.scale not in (2, 4, 8):
        raise ConfigError(f"scale must be one of (2, 4, 8), got {req.scale}")
    cube = read_cube(req.in_path)
    low = degrade_area(cube, req.scale)
    write_cube(low, req.out)
    manifest = _write_manifest(
        req.out,
        "degrade",
        req.model_dump(by_alias=True),
        inputs=[req.in_path],
        outputs=[req.out],
        seed=None,
        started=started,
    )
    return schemas.DegradeResponse(cube=_cube_summary(req.out, low), manifest=manifest)


def parse_train_file(text: str, seed_override: int | None = None):
    """Route a flat config file into model/train/loss configs + patch size."""
    values = parse_config_text(text)
    unknown = set(values) - _MODEL_KEYS - _TRAIN_KEYS - _LOSS_KEYS - _PIPELINE_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    model_values = {k: v for k, v in values.items() if k in _MODEL_KEYS}
    if seed_override is not None:
        model_values["seed"] = seed_override
    model_cfg = config_from_dict(model_values)
    train_values = {k: v for k, v in values.items() if k in _TRAIN_KEYS}
    train_seed = train_values.pop("train_seed", model_cfg.seed)
    train_cfg = TrainConfig(seed=train_seed if seed_override is None else seed_override, **train_values)
    loss_values = {k: v for k, v in values.items() if k in _LOSS_KEYS}
    loss_cfg = LossConfig(**loss_values)
    patch_size = values.get("patch_size", 144)
    return model_cfg, train_cfg, loss_cfg, patch_size


def _load_patches(data_dir: str, patch_size: int):
    root = Path(data_dir)
    if not root.is_dir():
        raise ConfigError(f"data directory {data_dir!r} does not exist")
    files = sorted(root.glob("*.hsc"))
    if not files:
        raise ConfigError(f"no .hsc cubes found in {data_dir!r}")
    patches = []
    for path in files:
        cube = read_cube(path)
        if cube.value_range[0] < 0.0 or cube.value_range[1] > 1.0:
            cube = normalize(cube)
        patches.extend(extract_patches(cube, patch_size=patch_size))
    if not patches:
        raise ConfigError(
            f"cubes in {data_dir!r} are smaller than patch size {patch_size}"
        )
    return patches


def run_train(req: schemas.TrainRequest) -> schemas.TrainResponse:
    started = time.monotonic()
    config_path = Path(req.config)
    if not config_path.is_file():
        raise ConfigError(f"config file {req.config!r} does not exist")
    model_cfg, train_cfg, loss_cfg, patch_size = parse_train_file(
        config_path.read_text(encoding="utf-8"), seed_override=req.seed
    )
    patches = _load_patches(req.data_dir, patch_size)
    split = split_patches(patches, scale=model_cfg.scale, seed=train_cfg.seed, patch_size=patch_size)
    params, history = train(model_cfg, split, train_cfg, loss_cfg)
    save_checkpoint(req.out_checkpoint, params, model_cfg)
    Path(req.history).write_text(history_to_csv(history), encoding="utf-8")
    manifest = _write_manifest(
        req.out_checkpoint,
        "train",
        {
            "model": config_to_dict(model_cfg),
            "train": {
                "learning_rate": train_cfg.learning_rate,
                "beta1": train_cfg.beta1,
                "beta2": train_cfg.beta2,
                "adam_eps": train_cfg.adam_eps,
                "batch_size": train_cfg.batch_size,
                "patience": train_cfg.patience,
                "max_epochs": train_cfg.max_epochs,
                "seed": train_cfg.seed,
            },
            "loss": {"alpha": loss_cfg.alpha, "include_grad_loss": loss_cfg.include_grad_loss},
            "patch_size": patch_size,
        },
        inputs=[req.data_dir, req.config],
        outputs=[req.out_checkpoint, req.history],
        seed=train_cfg.seed,
        started=started,
    )
    best_val = min(row[2] for row in history)
    return schemas.TrainResponse(
        checkpoint=req.out_checkpoint,
        history=req.history,
        manifest=manifest,
        epochs=len(history),
        best_val_loss=best_val,
        final_train_loss=history[-1][1],
    )


def run_eval(req: schemas.EvalRequest) -> schemas.EvalResponse:
    started = time.monotonic()
    ref = read_cube(req.ref)
    test = read_cube(req.test)
    report = evaluate(ref, test)
    Path(req.report).write_text(report_to_csv(report), encoding="utf-8")
    manifest = _write_manifest(
        req.report,
        "eval",
        req.model_dump(),
        inputs=[req.ref, req.test],
        outputs=[req.report],
        seed=None,
        started=started,
    )
    return schemas.EvalResponse(
        report=req.report,
        manifest=manifest,
        mpsnr=report.mpsnr,
        mssim=report.mssim,
        sam=report.sam,
    )


def run_sr(req: schemas.SrRequest) -> schemas.SrResponse:
    started = time.monotonic()
    params, config = load_checkpoint(req.checkpoint)
    cube = read_cube(req.in_path)
    if cube.value_range[0] < 0.0 or cube.value_range[1] > 1.0:
        cube = normalize(cube)
    result = super_resolve(cube, params, config)
    write_cube(result, req.out)
    manifest = _write_manifest(
        req.out,
        "sr",
        {"checkpoint_config": config_to_dict(config)},
        inputs=[req.in_path, req.checkpoint],
        outputs=[req.out],
        seed=config.seed,
        started=started,
    )
    return schemas.SrResponse(cube=_cube_summary(req.out, result), manifest=manifest)


def run_gradcheck(req: schemas.GradcheckRequest) -> schemas.GradcheckResponse:
    started = time.monotonic()
    if req.tolerance <= 0:
        raise ConfigError(f"tolerance must be positive, got {req.tolerance}")
    results = gradcheck_lib.run_suite(
        tolerance=req.tolerance, seed=req.seed, corrupt_op=req.corrupt_op
    )
    manifest = None
    if req.report:
        Path(req.report).write_text(gradcheck_lib.report_csv(results), encoding="utf-8")
        manifest = _write_manifest(
            req.report,
            "gradcheck",
            req.model_dump(),
            inputs=[],
            outputs=[req.report],
            seed=req.seed,
            started=started,
        )
    return schemas.GradcheckResponse(
        passed=gradcheck_lib.suite_passed(results),
        checks=[
            schemas.OpCheckResult(name=r.name, max_rel_error=r.max_rel_error, passed=r.passed)
            for r in results
        ],
        report=req.report,
        manifest=manifest,
    )
