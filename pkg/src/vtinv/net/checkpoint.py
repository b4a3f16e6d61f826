"""Versioned text checkpoint format.

Line 1 is the magic `VTINV1`; then `key = value` config lines; then repeated
`[array <name> <rows> <cols>]` blocks with rows of space-separated decimals
at 17 significant digits. Reading reproduces every array bit-exactly.
Vectors are stored as single-row arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError
from .model import ModelConfig, ModelParams, zeros_params

MAGIC = "VTINV1"

_MODEL_CONFIG_KEYS = ("input_dim", "dense_units", "lstm_units", "output_dim", "seed")


@dataclass
class Checkpoint:
    params: ModelParams
    model_config: ModelConfig
    config: dict[str, str] = field(default_factory=dict)
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


def _write_array(fh, name: str, arr: np.ndarray) -> None:
    mat = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    fh.write(f"[array {name} {mat.shape[0]} {mat.shape[1]}]\n")
    for row in mat:
        fh.write(" ".join("%.17g" % v for v in row) + "\n")


def save_checkpoint(
    path: str,
    params: ModelParams,
    mcfg: ModelConfig,
    extra_config: dict[str, str] | None = None,
    extra_arrays: dict[str, np.ndarray] | None = None,
) -> None:
    with open(path, "w") as fh:
        fh.write(MAGIC + "\n")
        fh.write(f"input_dim = {mcfg.input_dim}\n")
        fh.write(f"dense_units = {mcfg.dense_units}\n")
        fh.write(f"lstm_units = {mcfg.lstm_units}\n")
        fh.write(f"output_dim = {mcfg.output_dim}\n")
        fh.write(f"dense_activation = {mcfg.dense_activation}\n")
        fh.write(f"seed = {mcfg.seed}\n")
        for key in sorted(extra_config or {}):
            value = (extra_config or {})[key]
            fh.write(f"{key} = {value}\n")
        for name, arr in params.named_arrays():
            _write_array(fh, name, arr)
        for name in sorted(extra_arrays or {}):
            _write_array(fh, name, (extra_arrays or {})[name])


def load_checkpoint(path: str) -> Checkpoint:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise FormatError(f"{path}: not a {MAGIC} checkpoint")

    config: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    n_lines = len(lines)
    while i < n_lines:
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        if line.startswith("[array "):
            header = line.strip()
            if not header.endswith("]"):
                raise FormatError(f"{path} line {i + 1}: malformed array header")
            parts = header[1:-1].split()
            if len(parts) != 4:
                raise FormatError(f"{path} line {i + 1}: malformed array header")
            _, name, rows_s, cols_s = parts
            try:
                rows, cols = int(rows_s), int(cols_s)
            except ValueError:
                raise FormatError(f"{path} line {i + 1}: malformed array dims") from None
            if i + rows >= n_lines + 1:
                raise FormatError(f"{path}: array {name} truncated")
            block = np.empty((rows, cols))
            for r in range(rows):
                vals = lines[i + 1 + r].split()
                if len(vals) != cols:
                    raise FormatError(
                        f"{path} line {i + 2 + r}: expected {cols} values, got {len(vals)}"
                    )
                block[r] = [float(v) for v in vals]
            arrays[name] = block
            i += 1 + rows
        else:
            if "=" not in line:
                raise FormatError(f"{path} line {i + 1}: expected 'key = value'")
            key, _, value = line.partition("=")
            config[key.strip()] = value.strip()
            i += 1

    missing = [k for k in _MODEL_CONFIG_KEYS if k not in config]
    if missing:
        raise FormatError(f"{path}: missing config keys {missing}")
    mcfg = ModelConfig(
        input_dim=int(config["input_dim"]),
        dense_units=int(config["dense_units"]),
        lstm_units=int(config["lstm_units"]),
        output_dim=int(config["output_dim"]),
        dense_activation=config.get("dense_activation", "relu"),
        seed=int(config["seed"]),
    )
    params = zeros_params(mcfg)
    for name, target in params.named_arrays():
        if name not in arrays:
            raise FormatError(f"{path}: missing parameter array '{name}'")
        stored = arrays.pop(name)
        if stored.size != target.size:
            raise FormatError(
                f"{path}: array '{name}' has {stored.size} values, expected {target.size}"
            )
        target[...] = stored.reshape(target.shape)
    return Checkpoint(params=params, model_config=mcfg, config=config, arrays=arrays)
