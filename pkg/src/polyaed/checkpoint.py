"""Binary checkpoint serialization.

Layout (all integers little endian):

    magic   4 bytes  b"PAED"
    version u16      currently 1
    config  u32 byte length, then UTF-8 "key = value" lines (sorted by key)
    count   u32      number of array records
    record  u16 name length, UTF-8 name,
            u8 rank, rank * u32 extents,
            prod(extents) float32 values

Array values are always stored as float32; loading into a high-precision
model widens them exactly, but saving a high-precision model rounds, so
bit-exact save/load round trips are a property of fast-precision models.
"""
from __future__ import annotations

import struct

import numpy as np

from .features import FeatureStats
from .model import Model, ModelConfig, build_model

MAGIC = b"PAED"
VERSION = 1

_MODEL_KEYS = (
    "kind",
    "categories",
    "groups",
    "filters",
    "mel_bins",
    "gru_hidden",
    "fc_units",
    "dropout",
    "precision",
    "threshold",
)


def groups_to_text(groups, categories) -> str:
    return "; ".join(", ".join(categories[i] for i in g) for g in groups)


def groups_from_text(text: str, categories) -> tuple[tuple[int, ...], ...]:
    index = {name: i for i, name in enumerate(categories)}
    groups = []
    for chunk in text.split(";"):
        names = [n.strip() for n in chunk.split(",") if n.strip()]
        if not names:
            raise ValueError(f"empty task group in decomposition {text!r}")
        for n in names:
            if n not in index:
                raise ValueError(f"decomposition names unknown category {n!r}")
        groups.append(tuple(index[n] for n in names))
    return tuple(groups)


def config_to_dict(cfg: ModelConfig) -> dict[str, str]:
    d = {
        "kind": cfg.kind,
        "categories": ", ".join(cfg.categories),
        "filters": ", ".join(str(c) for c in cfg.filters),
        "mel_bins": str(cfg.mel_bins),
        "gru_hidden": str(cfg.gru_hidden),
        "fc_units": str(cfg.fc_units),
        "dropout": repr(cfg.dropout),
        "precision": cfg.precision,
        "threshold": repr(cfg.threshold),
    }
    if cfg.groups is not None:
        d["groups"] = groups_to_text(cfg.groups, cfg.categories)
    return d


def config_from_dict(d: dict[str, str]) -> ModelConfig:
    try:
        categories = tuple(n.strip() for n in d["categories"].split(",") if n.strip())
        groups = groups_from_text(d["groups"], categories) if "groups" in d else None
        return ModelConfig(
            kind=d["kind"],
            categories=categories,
            groups=groups,
            filters=tuple(int(v) for v in d["filters"].split(",")),
            mel_bins=int(d["mel_bins"]),
            gru_hidden=int(d["gru_hidden"]),
            fc_units=int(d["fc_units"]),
            dropout=float(d["dropout"]),
            precision=d["precision"],
            threshold=float(d["threshold"]),
        )
    except KeyError as missing:
        raise ValueError(f"checkpoint config block is missing key {missing}") from None


def _records(model: Model):
    for name, t in model.params.items():
        yield name, t.data
    for name, state in model.bn.items():
        yield f"{name}/mean", state.mean
        yield f"{name}/var", state.var
        yield f"{name}/count", np.asarray(float(state.updates))
    if model.stats is not None:
        yield "features/mean", model.stats.mean
        yield "features/std", model.stats.std


def save_checkpoint(path, model: Model, extra_config: dict[str, str] | None = None):
    """Write the model (parameters, running statistics, feature statistics)
    together with its configuration and any extra provenance keys."""
    config = dict(config_to_dict(model.config))
    for k, v in (extra_config or {}).items():
        if k in _MODEL_KEYS:
            continue
        config[k] = v
    text = "".join(f"{k} = {config[k]}\n" for k in sorted(config)).encode("utf-8")
    records = list(_records(model))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        fh.write(struct.pack("<I", len(records)))
        for name, arr in records:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            arr = np.asarray(arr)
            fh.write(struct.pack("<B", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(arr.astype("<f4").tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"checkpoint truncated while reading {what}")
    return data


def load_checkpoint(path) -> tuple[Model, dict[str, str]]:
    """Rebuild a model from a checkpoint; returns it with the full config block."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise ValueError(f"{path} is not a model checkpoint (bad magic)")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (clen,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        config = {}
        for line in _read_exact(fh, clen, "config block").decode("utf-8").splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            config[key.strip()] = value.strip()
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "record count"))
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(fh, 2, "record name length"))
            name = _read_exact(fh, nlen, "record name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, "record rank"))
            shape = tuple(
                struct.unpack("<I", _read_exact(fh, 4, "record extent"))[0] for _ in range(rank)
            )
            size = int(np.prod(shape, dtype=np.int64)) if rank else 1
            values = np.frombuffer(_read_exact(fh, 4 * size, f"values of {name}"), dtype="<f4")
            arrays[name] = values.reshape(shape)
    model = build_model(config_from_dict(config), seed=0)
    dtype = model.config.dtype
    for name, tensor in model.params.items():
        if name not in arrays:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        arr = arrays.pop(name)
        if arr.shape != tensor.data.shape:
            raise ValueError(
                f"parameter {name!r} has shape {arr.shape}, model expects {tensor.data.shape}"
            )
        tensor.data = arr.astype(dtype)
    for name, state in model.bn.items():
        for field_name in ("mean", "var", "count"):
            key = f"{name}/{field_name}"
            if key not in arrays:
                raise ValueError(f"checkpoint is missing statistics record {key!r}")
        state.mean = arrays.pop(f"{name}/mean").astype(dtype)
        state.var = arrays.pop(f"{name}/var").astype(dtype)
        state.updates = int(arrays.pop(f"{name}/count"))
    if "features/mean" in arrays:
        model.stats = FeatureStats(
            mean=arrays.pop("features/mean").astype(np.float64),
            std=arrays.pop("features/std").astype(np.float64),
        )
    if arrays:
        raise ValueError(f"checkpoint holds unexpected records: {sorted(arrays)[:4]}")
    return model, config
